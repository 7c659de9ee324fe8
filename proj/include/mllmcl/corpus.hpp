#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mllmcl/error.hpp"
#include "mllmcl/rng.hpp"

namespace mllmcl {

// ---------------------------------------------------------------------------
// Data types

struct PairedExample {
    std::int64_t id = 0;
    std::string clean;
    std::string noisy;
    std::int32_t label = 0;
    friend bool operator==(const PairedExample&, const PairedExample&) = default;
};

struct Corpus {
    std::vector<PairedExample> examples;
    std::int32_t num_classes = 0;
    std::vector<std::string> class_names;

    std::size_t size() const noexcept { return examples.size(); }
    bool empty() const noexcept { return examples.empty(); }
    friend bool operator==(const Corpus&, const Corpus&) = default;
};

inline void validate_corpus(const Corpus& corpus) {
    if (corpus.num_classes < 1) fail(ErrorKind::invalid_config, "corpus needs at least one class");
    if (!corpus.class_names.empty() && corpus.class_names.size() != static_cast<std::size_t>(corpus.num_classes))
        fail(ErrorKind::invalid_config, "class_names count differs from num_classes");
    std::unordered_set<std::int64_t> seen;
    for (const auto& ex : corpus.examples) {
        if (ex.id < 0) fail(ErrorKind::invalid_config, "negative example id " + std::to_string(ex.id));
        if (!seen.insert(ex.id).second) fail(ErrorKind::invalid_config, "duplicate example id " + std::to_string(ex.id));
        if (ex.label < 0 || ex.label >= corpus.num_classes)
            fail(ErrorKind::label_out_of_range, "label " + std::to_string(ex.label) + " on example " + std::to_string(ex.id));
        if (ex.clean.empty()) fail(ErrorKind::invalid_config, "empty clean text on example " + std::to_string(ex.id));
    }
}

using ConfusionTable = std::map<std::string, std::vector<std::string>>;

struct NoiseConfig {
    double char_sub_rate = 0.0;
    double char_del_rate = 0.0;
    double char_ins_rate = 0.0;
    double word_confusion_rate = 0.0;
    ConfusionTable confusion_table;
    double label_flip_rate = 0.0;

    void validate() const {
        for (double r : {char_sub_rate, char_del_rate, char_ins_rate, word_confusion_rate, label_flip_rate})
            if (!(r >= 0.0 && r <= 1.0)) fail(ErrorKind::invalid_config, "noise rates must lie in [0,1]");
        if (char_sub_rate + char_del_rate + char_ins_rate > 1.0 + 1e-12)
            fail(ErrorKind::invalid_config, "character noise rates sum above 1");
    }
};

/// Homophone-like confusions for the template vocabulary.
inline ConfusionTable default_confusion_table() {
    return {
        {"play", {"pray", "clay"}},        {"weather", {"whether"}},
        {"alarm", {"alarms", "aloud"}},    {"rain", {"reign", "rein"}},
        {"call", {"cole", "tall"}},        {"lights", {"likes", "lice"}},
        {"flight", {"fright", "fight"}},   {"message", {"massage"}},
        {"text", {"next", "taxed"}},       {"news", {"knows", "noose"}},
        {"order", {"odor", "border"}},     {"calendar", {"colander"}},
        {"book", {"look", "brook"}},       {"turn", {"tern"}},
        {"set", {"sat", "said"}},          {"four", {"for"}},
        {"two", {"to", "too"}},            {"ticket", {"picket"}},
        {"meetings", {"meeting"}},         {"music", {"muse"}},
        {"wake", {"weak", "walk"}},        {"phone", {"foam"}},
        {"forecast", {"four", "cast"}},    {"schedule", {"shed"}},
        {"headlines", {"head", "lines"}},  {"dim", {"dime"}},
        {"hear", {"here"}},                {"write", {"right", "rite"}},
        {"eight", {"ate"}},                {"morning", {"mourning"}},
    };
}

// ---------------------------------------------------------------------------
// Synthetic intent templates

namespace detail {

struct IntentTemplate {
    const char* name;
    std::vector<const char*> patterns;
};

inline const std::map<std::string, std::vector<std::string>>& slot_fillers() {
    static const std::map<std::string, std::vector<std::string>> fillers = {
        {"time", {"seven", "eight", "nine thirty", "noon", "six am", "ten pm", "two", "four fifteen", "midnight"}},
        {"day", {"today", "tomorrow", "monday", "friday", "this weekend", "tonight", "next week", "this morning"}},
        {"city", {"london", "paris", "boston", "tokyo", "berlin", "chicago", "madrid", "seattle"}},
        {"person", {"mom", "john", "sarah", "the office", "alex", "my brother", "emma", "david"}},
        {"room", {"kitchen", "bedroom", "living room", "office", "hallway", "garage"}},
        {"genre", {"jazz", "rock", "classical", "pop", "sports", "science", "country"}},
        {"song", {"yellow submarine", "hello", "bad guy", "thriller", "imagine", "yesterday"}},
        {"artist", {"adele", "the beatles", "drake", "queen", "madonna", "coldplay"}},
        {"food", {"pizza", "sushi", "a burger", "noodles", "tacos", "a salad", "curry"}},
        {"restaurant", {"mario's", "the corner diner", "golden dragon", "taco town", "burger barn"}},
    };
    return fillers;
}

inline const std::vector<IntentTemplate>& intent_bank() {
    static const std::vector<IntentTemplate> bank = {
        {"play_music",
         {"play {song} by {artist}", "can you play some {genre} music", "i want to hear {song}",
          "put on {genre} songs please", "start playing {artist} in the {room}", "play my {genre} playlist"}},
        {"set_alarm",
         {"set an alarm for {time}", "wake me up at {time}", "please set alarm {day} at {time}",
          "create a new alarm for {time} {day}", "i need an alarm at {time}"}},
        {"weather_query",
         {"what is the weather in {city}", "will it rain {day}", "how hot is it in {city} {day}",
          "tell me the forecast for {city}", "is it going to snow in {city} {day}"}},
        {"order_food",
         {"order {food} from {restaurant}", "i want to get {food} delivered", "can you order {food} for {time}",
          "get me some {food} please", "place an order at {restaurant} for {day}"}},
        {"call_contact",
         {"call {person}", "please phone {person} now", "dial {person} on mobile", "can you ring {person} {day}",
          "make a call to {person} at {time}"}},
        {"lights_control",
         {"turn on the lights in the {room}", "switch off the {room} lights", "dim the lights please",
          "make the {room} brighter", "turn the lamp off in the {room} at {time}"}},
        {"book_flight",
         {"book a flight to {city} {day}", "find me a ticket to {city}", "i need to fly to {city} at {time}",
          "reserve a plane seat to {city}", "search flights from {city} to {city}"}},
        {"calendar_query",
         {"what is on my calendar {day}", "do i have meetings {day}", "show my schedule for {day}",
          "any events at {time} {day}", "check my agenda for {day}"}},
        {"send_message",
         {"send a text to {person}", "message {person} that i am late", "tell {person} i will be there at {time}",
          "write an email to {person}", "text {person} about {day}"}},
        {"news_query",
         {"what is the latest news", "read me the headlines about {city}", "tell me the news {day}",
          "any news on {genre} today", "give me the top stories in {city}"}},
    };
    return bank;
}

inline std::string fill_template(const std::string& pattern, Rng& rng) {
    std::string out;
    std::size_t pos = 0;
    while (pos < pattern.size()) {
        const std::size_t open = pattern.find('{', pos);
        if (open == std::string::npos) {
            out.append(pattern, pos, std::string::npos);
            break;
        }
        out.append(pattern, pos, open - pos);
        const std::size_t close = pattern.find('}', open);
        const auto& choices = slot_fillers().at(pattern.substr(open + 1, close - open - 1));
        out += choices[rng.uniform_int(choices.size())];
        pos = close + 1;
    }
    return out;
}

inline std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> words;
    std::istringstream in(text);
    std::string w;
    while (in >> w) words.push_back(w);
    return words;
}

inline std::string to_lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

}  // namespace detail

inline std::size_t max_synthetic_classes() { return detail::intent_bank().size(); }

// ---------------------------------------------------------------------------
// ASR noise channel

inline std::string apply_asr_noise(const std::string& text, const NoiseConfig& noise, Rng& rng) {
    if (noise.word_confusion_rate == 0.0 && noise.char_sub_rate == 0.0 && noise.char_del_rate == 0.0 &&
        noise.char_ins_rate == 0.0)
        return text;
    std::string out;
    for (const std::string& word : detail::split_words(text)) {
        std::string noisy;
        auto confusion = noise.confusion_table.find(word);
        const bool confusable = confusion != noise.confusion_table.end() && !confusion->second.empty();
        if (confusable && noise.word_confusion_rate > 0.0 && rng.bernoulli(noise.word_confusion_rate)) {
            noisy = confusion->second[rng.uniform_int(confusion->second.size())];
        } else {
            const double sub = noise.char_sub_rate;
            const double del = sub + noise.char_del_rate;
            const double ins = del + noise.char_ins_rate;
            for (char c : word) {
                if (ins <= 0.0) {
                    noisy += c;
                    continue;
                }
                const double u = rng.uniform();
                if (u < sub) {
                    noisy += static_cast<char>('a' + rng.uniform_int(26));
                } else if (u < del) {
                    // dropped
                } else if (u < ins) {
                    noisy += c;
                    noisy += static_cast<char>('a' + rng.uniform_int(26));
                } else {
                    noisy += c;
                }
            }
        }
        if (noisy.empty()) continue;
        if (!out.empty()) out += ' ';
        out += noisy;
    }
    return out.empty() ? std::string("a") : out;
}

// ---------------------------------------------------------------------------
// Corpus synthesis

struct Dataset {
    Corpus train;
    Corpus test;
};

namespace detail {

inline Corpus synthesize_split(std::int32_t num_classes, std::size_t size, std::int64_t first_id,
                               const NoiseConfig& noise, double flip_rate, std::uint64_t seed, std::uint64_t split) {
    Corpus corpus;
    corpus.num_classes = num_classes;
    for (std::int32_t c = 0; c < num_classes; ++c) corpus.class_names.emplace_back(intent_bank()[c].name);
    Rng text_rng({seed, split, 1});
    Rng noise_rng({seed, split, 2});
    Rng flip_rng({seed, split, 3});
    corpus.examples.reserve(size);
    for (std::size_t i = 0; i < size; ++i) {
        const auto label = static_cast<std::int32_t>(i % static_cast<std::size_t>(num_classes));
        const auto& patterns = intent_bank()[label].patterns;
        PairedExample ex;
        ex.id = first_id + static_cast<std::int64_t>(i);
        ex.label = label;
        ex.clean = fill_template(patterns[text_rng.uniform_int(patterns.size())], text_rng);
        ex.noisy = apply_asr_noise(ex.clean, noise, noise_rng);
        corpus.examples.push_back(std::move(ex));
    }
    if (flip_rate > 0.0 && num_classes > 1) {
        std::vector<std::size_t> order(size);
        for (std::size_t i = 0; i < size; ++i) order[i] = i;
        flip_rng.shuffle(order);
        const auto flips = static_cast<std::size_t>(std::llround(flip_rate * static_cast<double>(size)));
        for (std::size_t k = 0; k < flips; ++k) {
            auto& ex = corpus.examples[order[k]];
            const auto shift = 1 + static_cast<std::int32_t>(flip_rng.uniform_int(num_classes - 1));
            ex.label = (ex.label + shift) % num_classes;
        }
    }
    return corpus;
}

inline void validate_synthesis(std::int32_t num_classes, const NoiseConfig& noise) {
    noise.validate();
    if (num_classes < 2 || static_cast<std::size_t>(num_classes) > max_synthetic_classes())
        fail(ErrorKind::invalid_config,
             "num_classes must be in [2, " + std::to_string(max_synthetic_classes()) + "]");
}

}  // namespace detail

/// Train/test split. Labels cycle through the classes so both splits are
/// balanced to within one example; label flips touch the training split only.
/// Test ids continue after the training ids.
inline Dataset synthesize_dataset(std::int32_t num_classes, std::size_t train_size, std::size_t test_size,
                                  const NoiseConfig& noise, std::uint64_t seed) {
    detail::validate_synthesis(num_classes, noise);
    if (train_size < 1) fail(ErrorKind::invalid_config, "train_size must be positive");
    Dataset data;
    data.train = detail::synthesize_split(num_classes, train_size, 0, noise, noise.label_flip_rate, seed, 0);
    data.test = detail::synthesize_split(num_classes, test_size, static_cast<std::int64_t>(train_size), noise, 0.0,
                                         seed, 1);
    return data;
}

inline Corpus synthesize_corpus(std::int32_t num_classes, std::size_t per_class, const NoiseConfig& noise,
                                std::uint64_t seed) {
    detail::validate_synthesis(num_classes, noise);
    if (per_class < 1) fail(ErrorKind::invalid_config, "per_class must be positive");
    return detail::synthesize_split(num_classes, per_class * static_cast<std::size_t>(num_classes), 0, noise,
                                    noise.label_flip_rate, seed, 0);
}

// ---------------------------------------------------------------------------
// Vocabulary and tokenization

using TokenId = std::int32_t;

inline constexpr TokenId kPad = 0;
inline constexpr TokenId kUnk = 1;
inline constexpr TokenId kMask = 2;
inline constexpr TokenId kCls = 3;
inline constexpr TokenId kNumReserved = 4;

class Vocab {
public:
    Vocab() : tokens_{"[PAD]", "[UNK]", "[MASK]", "[CLS]"} { reindex(); }

    explicit Vocab(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
        static const char* reserved[] = {"[PAD]", "[UNK]", "[MASK]", "[CLS]"};
        if (tokens_.size() < kNumReserved) fail(ErrorKind::parse_error, "vocab is missing reserved tokens");
        for (TokenId i = 0; i < kNumReserved; ++i)
            if (tokens_[i] != reserved[i]) fail(ErrorKind::parse_error, "reserved token " + std::string(reserved[i]) + " not at id " + std::to_string(i));
        reindex();
        if (index_.size() != tokens_.size()) fail(ErrorKind::parse_error, "duplicate vocab tokens");
    }

    std::size_t size() const noexcept { return tokens_.size(); }
    const std::vector<std::string>& tokens() const noexcept { return tokens_; }
    const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }

    TokenId id(const std::string& token) const {
        auto it = index_.find(token);
        return it == index_.end() ? kUnk : it->second;
    }

    bool contains(const std::string& token) const { return index_.count(token) != 0; }

    friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

private:
    void reindex() {
        index_.clear();
        for (std::size_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], static_cast<TokenId>(i));
    }

    std::vector<std::string> tokens_;
    std::unordered_map<std::string, TokenId> index_;
};

/// Words of both sides; a noisy side equal to its clean side is counted once.
inline Vocab build_vocab(const Corpus& corpus, std::size_t min_count) {
    if (corpus.empty()) fail(ErrorKind::empty_corpus, "cannot build a vocabulary from an empty corpus");
    std::map<std::string, std::size_t> counts;
    for (const auto& ex : corpus.examples) {
        for (const auto& w : detail::split_words(detail::to_lower(ex.clean))) ++counts[w];
        if (ex.noisy == ex.clean) continue;
        for (const auto& w : detail::split_words(detail::to_lower(ex.noisy))) ++counts[w];
    }
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (const auto& [word, count] : counts)
        if (count >= min_count) kept.emplace_back(word, count);
    std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    std::vector<std::string> tokens{"[PAD]", "[UNK]", "[MASK]", "[CLS]"};
    for (const auto& [word, count] : kept) {
        if (word == "[PAD]" || word == "[UNK]" || word == "[MASK]" || word == "[CLS]") continue;
        tokens.push_back(word);
    }
    return Vocab(std::move(tokens));
}

inline void save_vocab(const Vocab& vocab, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io_error, "cannot open " + path + " for writing");
    for (const auto& t : vocab.tokens()) out << t << '\n';
    if (!out) fail(ErrorKind::io_error, "write failed for " + path);
}

inline Vocab load_vocab(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io_error, "cannot open " + path);
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) tokens.push_back(line);
    return Vocab(std::move(tokens));
}

using TokenSequence = std::vector<TokenId>;

/// [CLS] followed by word ids, truncated to max_len. No padding.
inline TokenSequence tokenize(const std::string& text, const Vocab& vocab, std::size_t max_len) {
    if (max_len < 2) fail(ErrorKind::invalid_config, "max_len must be at least 2");
    TokenSequence ids{kCls};
    for (const auto& w : detail::split_words(detail::to_lower(text))) {
        if (ids.size() >= max_len) break;
        ids.push_back(vocab.id(w));
    }
    return ids;
}

struct MaskedSequence {
    TokenSequence tokens;
    std::vector<std::size_t> positions;
    std::vector<TokenId> targets;
};

/// Each maskable position (not position 0, not PAD) is replaced by [MASK]
/// with probability `ratio`. If nothing was picked and the row has a
/// maskable position, one is masked uniformly at random.
inline MaskedSequence mask_tokens(const TokenSequence& tokens, double ratio, Rng& rng) {
    if (!(ratio >= 0.0 && ratio <= 1.0)) fail(ErrorKind::invalid_config, "mask ratio must lie in [0,1]");
    MaskedSequence out{tokens, {}, {}};
    std::vector<std::size_t> candidates;
    for (std::size_t i = 1; i < tokens.size(); ++i)
        if (tokens[i] != kPad) candidates.push_back(i);
    for (std::size_t pos : candidates) {
        if (rng.bernoulli(ratio)) {
            out.positions.push_back(pos);
            out.targets.push_back(tokens[pos]);
            out.tokens[pos] = kMask;
        }
    }
    if (out.positions.empty() && !candidates.empty()) {
        const std::size_t pos = candidates[rng.uniform_int(candidates.size())];
        out.positions.push_back(pos);
        out.targets.push_back(tokens[pos]);
        out.tokens[pos] = kMask;
    }
    return out;
}

/// Row-major id matrix padded with kPad.
struct TokenMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<TokenId> ids;

    TokenId operator()(std::size_t r, std::size_t c) const { return ids[r * cols + c]; }
    TokenId& operator()(std::size_t r, std::size_t c) { return ids[r * cols + c]; }

    static TokenMatrix from_sequences(const std::vector<TokenSequence>& seqs) {
        TokenMatrix m;
        m.rows = seqs.size();
        for (const auto& s : seqs) m.cols = std::max(m.cols, s.size());
        m.ids.assign(m.rows * m.cols, kPad);
        for (std::size_t r = 0; r < seqs.size(); ++r)
            std::copy(seqs[r].begin(), seqs[r].end(), m.ids.begin() + static_cast<std::ptrdiff_t>(r * m.cols));
        return m;
    }

    TokenSequence row(std::size_t r) const {
        TokenSequence out;
        for (std::size_t c = 0; c < cols; ++c)
            if ((*this)(r, c) != kPad) out.push_back((*this)(r, c));
        return out;
    }

    friend bool operator==(const TokenMatrix&, const TokenMatrix&) = default;
};

inline TokenMatrix stack_rows(const TokenMatrix& top, const TokenMatrix& bottom) {
    std::vector<TokenSequence> seqs;
    for (std::size_t r = 0; r < top.rows; ++r) seqs.push_back(top.row(r));
    for (std::size_t r = 0; r < bottom.rows; ++r) seqs.push_back(bottom.row(r));
    return TokenMatrix::from_sequences(seqs);
}

// ---------------------------------------------------------------------------
// Batching

struct Batch {
    TokenMatrix clean_tokens;
    TokenMatrix noisy_tokens;
    std::vector<std::int32_t> labels;
    std::vector<std::int64_t> example_ids;
    std::vector<std::size_t> indices;  // positions in the source corpus

    std::size_t size() const noexcept { return labels.size(); }
};

/// Shuffled index groups keyed by (seed, epoch). A trailing group with
/// fewer than two pairs is dropped.
inline std::vector<std::vector<std::size_t>> plan_batches(std::size_t num_examples, std::size_t batch_size_pairs,
                                                          std::uint64_t seed, std::uint64_t epoch) {
    if (batch_size_pairs < 2) fail(ErrorKind::batch_too_small, "batch_size_pairs must be at least 2");
    std::vector<std::size_t> order(num_examples);
    for (std::size_t i = 0; i < num_examples; ++i) order[i] = i;
    Rng rng({seed, epoch, 0xba7c});
    rng.shuffle(order);
    std::vector<std::vector<std::size_t>> plan;
    for (std::size_t start = 0; start < num_examples; start += batch_size_pairs) {
        const std::size_t end = std::min(num_examples, start + batch_size_pairs);
        if (end - start < 2) break;
        plan.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                          order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return plan;
}

inline Batch materialize_batch(const Corpus& corpus, const std::vector<std::size_t>& indices, const Vocab& vocab,
                               std::size_t max_len) {
    Batch batch;
    std::vector<TokenSequence> clean, noisy;
    for (std::size_t idx : indices) {
        const auto& ex = corpus.examples.at(idx);
        clean.push_back(tokenize(ex.clean, vocab, max_len));
        noisy.push_back(tokenize(ex.noisy, vocab, max_len));
        batch.labels.push_back(ex.label);
        batch.example_ids.push_back(ex.id);
    }
    batch.clean_tokens = TokenMatrix::from_sequences(clean);
    batch.noisy_tokens = TokenMatrix::from_sequences(noisy);
    batch.indices = indices;
    return batch;
}

inline std::vector<Batch> make_batches(const Corpus& corpus, const Vocab& vocab, std::size_t max_len,
                                       std::size_t batch_size_pairs, std::uint64_t seed, std::uint64_t epoch) {
    std::vector<Batch> batches;
    for (const auto& group : plan_batches(corpus.size(), batch_size_pairs, seed, epoch))
        batches.push_back(materialize_batch(corpus, group, vocab, max_len));
    return batches;
}

// ---------------------------------------------------------------------------
// Corpus files: an optional header object carrying class names, then one
// {"id","clean","noisy","label"} object per line.

inline void save_corpus(const Corpus& corpus, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io_error, "cannot open " + path + " for writing");
    nlohmann::ordered_json header;
    header["num_classes"] = corpus.num_classes;
    header["class_names"] = corpus.class_names;
    out << header.dump() << '\n';
    for (const auto& ex : corpus.examples) {
        nlohmann::ordered_json rec;
        rec["id"] = ex.id;
        rec["clean"] = ex.clean;
        rec["noisy"] = ex.noisy;
        rec["label"] = ex.label;
        out << rec.dump() << '\n';
    }
    if (!out) fail(ErrorKind::io_error, "write failed for " + path);
}

inline Corpus load_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io_error, "cannot open " + path);
    Corpus corpus;
    bool have_header = false;
    std::int32_t max_label = -1;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            fail(ErrorKind::parse_error, path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        if (!rec.is_object()) fail(ErrorKind::parse_error, path + ":" + std::to_string(line_no) + ": expected an object");
        if (rec.contains("class_names")) {
            if (have_header || !corpus.examples.empty())
                fail(ErrorKind::parse_error, path + ":" + std::to_string(line_no) + ": header must be the first line");
            have_header = true;
            try {
                corpus.class_names = rec.at("class_names").get<std::vector<std::string>>();
                corpus.num_classes = rec.contains("num_classes") ? rec.at("num_classes").get<std::int32_t>()
                                                                 : static_cast<std::int32_t>(corpus.class_names.size());
            } catch (const nlohmann::json::exception& e) {
                fail(ErrorKind::parse_error, path + ":" + std::to_string(line_no) + ": " + e.what());
            }
            continue;
        }
        PairedExample ex;
        for (const char* field : {"id", "clean", "noisy", "label"})
            if (!rec.contains(field))
                fail(ErrorKind::missing_field, std::string(field) + " at " + path + ":" + std::to_string(line_no));
        try {
            ex.id = rec.at("id").get<std::int64_t>();
            ex.clean = rec.at("clean").get<std::string>();
            ex.noisy = rec.at("noisy").get<std::string>();
            ex.label = rec.at("label").get<std::int32_t>();
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorKind::parse_error, path + ":" + std::to_string(line_no) + ": " + e.what());
        }
        max_label = std::max(max_label, ex.label);
        corpus.examples.push_back(std::move(ex));
    }
    if (corpus.examples.empty()) fail(ErrorKind::empty_corpus, path + " contains no examples");
    if (!have_header) {
        corpus.num_classes = max_label + 1;
        for (std::int32_t c = 0; c < corpus.num_classes; ++c) corpus.class_names.push_back("class_" + std::to_string(c));
    }
    validate_corpus(corpus);
    return corpus;
}

}  // namespace mllmcl
