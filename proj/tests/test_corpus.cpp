#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mllmcl/corpus.hpp"

using namespace mllmcl;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "mllmcl_corpus_tests";
    fs::create_directories(dir);
    return dir / name;
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

NoiseConfig zero_noise() { return NoiseConfig{}; }

Corpus tiny_corpus(const std::string& text) {
    Corpus c;
    c.num_classes = 1;
    c.examples.push_back({0, text, text, 0});
    return c;
}

}  // namespace

TEST(Synthesis, ZeroNoiseGivesIdenticalSides) {
    const Corpus c = synthesize_corpus(6, 100, zero_noise(), 7);
    ASSERT_EQ(c.size(), 600u);
    EXPECT_EQ(c.num_classes, 6);
    for (const auto& ex : c.examples) EXPECT_EQ(ex.clean, ex.noisy);
}

TEST(Synthesis, DeterministicForSeed) {
    NoiseConfig n;
    n.char_sub_rate = 0.15;
    n.label_flip_rate = 0.05;
    EXPECT_EQ(synthesize_corpus(6, 50, n, 7), synthesize_corpus(6, 50, n, 7));
    EXPECT_NE(synthesize_corpus(6, 50, n, 7), synthesize_corpus(6, 50, n, 8));
}

TEST(Synthesis, CharacterNoiseTouchesMostExamples) {
    NoiseConfig n;
    n.char_sub_rate = 0.15;
    const Corpus c = synthesize_corpus(6, 100, n, 7);
    std::size_t changed = 0;
    for (const auto& ex : c.examples) changed += ex.clean != ex.noisy;
    EXPECT_GE(static_cast<double>(changed) / static_cast<double>(c.size()), 0.5);
}

TEST(Synthesis, LabelFlipsOnlyInTrainingSplit) {
    NoiseConfig n;
    n.label_flip_rate = 0.1;
    const Dataset d = synthesize_dataset(4, 200, 100, n, 3);
    std::size_t flipped = 0;
    for (std::size_t i = 0; i < d.train.size(); ++i)
        flipped += d.train.examples[i].label != static_cast<std::int32_t>(i % 4);
    EXPECT_EQ(flipped, 20u);
    for (std::size_t i = 0; i < d.test.size(); ++i) {
        EXPECT_EQ(d.test.examples[i].label, static_cast<std::int32_t>(i % 4));
        EXPECT_EQ(d.test.examples[i].id, static_cast<std::int64_t>(200 + i));
    }
}

TEST(Synthesis, EveryClassHasAtLeastFiveTemplates) {
    for (const auto& intent : detail::intent_bank()) EXPECT_GE(intent.patterns.size(), 5u) << intent.name;
}

TEST(Synthesis, InvalidConfig) {
    EXPECT_THROW(synthesize_corpus(1, 10, zero_noise(), 1), Error);
    EXPECT_THROW(synthesize_corpus(99, 10, zero_noise(), 1), Error);
    NoiseConfig n;
    n.char_sub_rate = 0.7;
    n.char_del_rate = 0.7;
    EXPECT_THROW(synthesize_corpus(3, 10, n, 1), Error);
}

TEST(AsrNoise, ZeroRatesAreIdentity) {
    Rng rng(1);
    NoiseConfig n;
    n.confusion_table = default_confusion_table();
    for (const std::string text : {"play the movie", "  odd   spacing here ", "x"})
        EXPECT_EQ(apply_asr_noise(text, n, rng), text);
}

TEST(AsrNoise, ForcedConfusion) {
    Rng rng(1);
    NoiseConfig n;
    n.word_confusion_rate = 1.0;
    n.confusion_table = {{"movie", {"moovi"}}};
    EXPECT_EQ(apply_asr_noise("play the movie", n, rng), "play the moovi");
}

TEST(AsrNoise, DeletionCountFollowsBinomial) {
    Rng rng(2);
    NoiseConfig n;
    n.char_del_rate = 0.1;
    const std::string out = apply_asr_noise(std::string(10000, 'b'), n, rng);
    const double sigma = std::sqrt(10000 * 0.1 * 0.9);
    EXPECT_NEAR(static_cast<double>(out.size()), 9000.0, 3 * sigma);
}

TEST(AsrNoise, NeverEmpty) {
    Rng rng(3);
    NoiseConfig n;
    n.char_del_rate = 1.0;
    EXPECT_EQ(apply_asr_noise("delete every letter", n, rng), "a");
}

TEST(AsrNoise, SubstitutionAndInsertionChangeCharacters) {
    Rng rng(4);
    NoiseConfig n;
    n.char_ins_rate = 1.0;
    EXPECT_EQ(apply_asr_noise("abc", n, rng).size(), 6u);
    n.char_ins_rate = 0.0;
    n.char_sub_rate = 1.0;
    const std::string sub = apply_asr_noise("abcdefghij", n, rng);
    EXPECT_EQ(sub.size(), 10u);
    for (char c : sub) EXPECT_TRUE(c >= 'a' && c <= 'z');
}

TEST(VocabBuild, CountsAndMinCount) {
    const Vocab v = build_vocab(tiny_corpus("go go stop"), 1);
    EXPECT_EQ(v.size(), 6u);
    EXPECT_EQ(v.token(4), "go");
    EXPECT_EQ(v.token(5), "stop");
    const Vocab v2 = build_vocab(tiny_corpus("go go stop"), 2);
    EXPECT_TRUE(v2.contains("go"));
    EXPECT_FALSE(v2.contains("stop"));
    EXPECT_EQ(v2.size(), 5u);
}

TEST(VocabBuild, DistinctNoisySideCounts) {
    Corpus c = tiny_corpus("go go stop");
    c.examples[0].noisy = "stop";
    EXPECT_TRUE(build_vocab(c, 2).contains("stop"));
}

TEST(VocabBuild, ReservedIdsAndEmptyCorpus) {
    const Vocab v = build_vocab(tiny_corpus("a b"), 1);
    EXPECT_EQ(v.token(kPad), "[PAD]");
    EXPECT_EQ(v.token(kUnk), "[UNK]");
    EXPECT_EQ(v.token(kMask), "[MASK]");
    EXPECT_EQ(v.token(kCls), "[CLS]");
    Corpus empty;
    empty.num_classes = 2;
    try {
        build_vocab(empty, 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::empty_corpus);
    }
}

TEST(VocabBuild, DeterministicFileRoundTrip) {
    NoiseConfig n;
    n.char_sub_rate = 0.1;
    const Corpus c = synthesize_corpus(4, 30, n, 9);
    save_vocab(build_vocab(c, 2), scratch("v1.txt").string());
    save_vocab(build_vocab(c, 2), scratch("v2.txt").string());
    EXPECT_EQ(read_text(scratch("v1.txt")), read_text(scratch("v2.txt")));
    EXPECT_EQ(load_vocab(scratch("v1.txt").string()), build_vocab(c, 2));
}

TEST(Tokenize, Examples) {
    const Vocab v = build_vocab(tiny_corpus("go stop"), 1);
    EXPECT_EQ(tokenize("", v, 16), (TokenSequence{kCls}));
    EXPECT_EQ(tokenize("go stop", v, 16), (TokenSequence{kCls, v.id("go"), v.id("stop")}));
    EXPECT_EQ(tokenize("go unknown", v, 16), (TokenSequence{kCls, v.id("go"), kUnk}));
    std::string long_text;
    for (int i = 0; i < 100; ++i) long_text += "go ";
    EXPECT_EQ(tokenize(long_text, v, 16).size(), 16u);
}

TEST(Masking, RatioZeroForcesOneMask) {
    Rng rng(5);
    TokenSequence seq{kCls, 4, 5, 6, 7, 8, 9, 10, 11, 12};
    const MaskedSequence m = mask_tokens(seq, 0.0, rng);
    ASSERT_EQ(m.positions.size(), 1u);
    EXPECT_NE(m.positions[0], 0u);
    EXPECT_EQ(m.tokens[m.positions[0]], kMask);
    EXPECT_EQ(m.targets[0], seq[m.positions[0]]);
}

TEST(Masking, RatioOneMasksAllButCls) {
    Rng rng(6);
    TokenSequence seq{kCls, 4, 5, 6, kPad};
    const MaskedSequence m = mask_tokens(seq, 1.0, rng);
    EXPECT_EQ(m.tokens, (TokenSequence{kCls, kMask, kMask, kMask, kPad}));
    EXPECT_EQ(m.targets, (std::vector<TokenId>{4, 5, 6}));
}

TEST(Masking, BinomialCount) {
    Rng rng(7);
    TokenSequence seq(10001, 5);
    seq[0] = kCls;
    const MaskedSequence m = mask_tokens(seq, 0.15, rng);
    const double sigma = std::sqrt(10000 * 0.15 * 0.85);
    EXPECT_NEAR(static_cast<double>(m.positions.size()), 1500.0, 3 * sigma);
}

TEST(Batching, SizesAndDropRule) {
    auto sizes = [](std::size_t n, std::size_t bs) {
        std::vector<std::size_t> out;
        for (const auto& g : plan_batches(n, bs, 1, 0)) out.push_back(g.size());
        return out;
    };
    EXPECT_EQ(sizes(10, 4), (std::vector<std::size_t>{4, 4, 2}));
    EXPECT_EQ(sizes(9, 4), (std::vector<std::size_t>{4, 4}));
    EXPECT_THROW(plan_batches(10, 1, 1, 0), Error);
}

TEST(Batching, DeterministicAndAligned) {
    NoiseConfig n;
    n.char_sub_rate = 0.1;
    const Corpus c = synthesize_corpus(3, 10, n, 2);
    const Vocab v = build_vocab(c, 1);
    const auto a = make_batches(c, v, 16, 4, 11, 3);
    const auto b = make_batches(c, v, 16, 4, 11, 3);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        EXPECT_EQ(a[k].example_ids, b[k].example_ids);
        EXPECT_EQ(a[k].clean_tokens, b[k].clean_tokens);
        ASSERT_EQ(a[k].clean_tokens.rows, a[k].size());
        ASSERT_EQ(a[k].noisy_tokens.rows, a[k].size());
        for (std::size_t i = 0; i < a[k].size(); ++i) {
            const auto& ex = c.examples[a[k].indices[i]];
            EXPECT_EQ(ex.id, a[k].example_ids[i]);
            EXPECT_EQ(ex.label, a[k].labels[i]);
            EXPECT_EQ(a[k].clean_tokens.row(i), tokenize(ex.clean, v, 16));
            EXPECT_EQ(a[k].noisy_tokens.row(i), tokenize(ex.noisy, v, 16));
        }
    }
    const auto other_epoch = make_batches(c, v, 16, 4, 11, 4);
    EXPECT_NE(a[0].example_ids, other_epoch[0].example_ids);
}

TEST(CorpusFile, RoundTrip) {
    NoiseConfig n;
    n.char_sub_rate = 0.2;
    n.label_flip_rate = 0.1;
    const Corpus c = synthesize_corpus(5, 20, n, 4);
    const auto path = scratch("rt.jsonl").string();
    save_corpus(c, path);
    EXPECT_EQ(load_corpus(path), c);
}

TEST(CorpusFile, HeaderlessRecordsAreAccepted) {
    const auto path = scratch("plain.jsonl");
    write_text(path, "{\"id\":3,\"clean\":\"a b\",\"noisy\":\"a c\",\"label\":1}\n"
                     "{\"id\":4,\"clean\":\"d\",\"noisy\":\"d\",\"label\":0}\n");
    const Corpus c = load_corpus(path.string());
    EXPECT_EQ(c.size(), 2u);
    EXPECT_EQ(c.num_classes, 2);
    EXPECT_EQ(c.examples[0].noisy, "a c");
}

TEST(CorpusFile, MissingFieldNamesFieldAndLine) {
    const auto path = scratch("missing.jsonl");
    write_text(path, "{\"id\":0,\"clean\":\"a\",\"noisy\":\"a\",\"label\":0}\n"
                     "{\"id\":1,\"clean\":\"b\",\"noisy\":\"b\"}\n");
    try {
        load_corpus(path.string());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::missing_field);
        const std::string msg = e.what();
        EXPECT_NE(msg.find("label"), std::string::npos);
        EXPECT_NE(msg.find(":2"), std::string::npos);
    }
}

TEST(CorpusFile, ParseErrorCarriesLineNumber) {
    const auto path = scratch("broken.jsonl");
    write_text(path, "{\"id\":0,\"clean\":\"a\",\"noisy\":\"a\",\"label\":0}\n{not json\n");
    try {
        load_corpus(path.string());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::parse_error);
        EXPECT_NE(std::string(e.what()).find(":2"), std::string::npos);
    }
}

TEST(CorpusFile, EmptyFile) {
    const auto path = scratch("empty.jsonl");
    write_text(path, "");
    try {
        load_corpus(path.string());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::empty_corpus);
    }
}

TEST(CorpusFile, DuplicateIdsRejected) {
    const auto path = scratch("dup.jsonl");
    write_text(path, "{\"id\":0,\"clean\":\"a\",\"noisy\":\"a\",\"label\":0}\n"
                     "{\"id\":0,\"clean\":\"b\",\"noisy\":\"b\",\"label\":0}\n");
    EXPECT_THROW(load_corpus(path.string()), Error);
}
