#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "mllmcl/corpus.hpp"
#include "mllmcl/error.hpp"
#include "mllmcl/losses.hpp"
#include "mllmcl/schedule.hpp"

namespace mllmcl {

/// Every knob of the pipeline. Method hyperparameters default to the
/// published settings; sizes default to a desk-scale run.
struct TrainConfig {
    // synthetic data
    std::int64_t num_classes = 6;
    std::int64_t train_size = 2000;
    std::int64_t test_size = 500;
    double char_sub_rate = 0.15;
    double char_del_rate = 0.0;
    double char_ins_rate = 0.0;
    double word_confusion_rate = 0.1;
    double label_flip_rate = 0.05;
    std::int64_t min_count = 2;
    std::int64_t max_len = 16;

    // encoder
    std::int64_t embed_dim = 64;
    std::int64_t out_dim = 64;

    // pre-training
    std::int64_t pretrain_steps = 1000;
    std::int64_t pretrain_batch_pairs = 16;
    double mask_ratio = 0.15;
    double tau_sc = 0.2;
    double delta_plus = 0.2;
    double delta_minus = 0.5;
    double lambda_reg = 0.1;
    double lambda_pt = 0.5;

    // fine-tuning
    std::int64_t finetune_epochs = 10;
    std::int64_t finetune_batch_pairs = 32;
    double tau_c = 0.2;
    double lambda_reg_p = 0.15;
    double lambda_reg_q = 0.15;
    double tau_d = 5.0;
    double alpha = 1.0;
    double beta = 0.1;
    bool anneal = true;
    double anneal_R = 0.5;
    std::int64_t anneal_G = 5000;
    double gamma_scale = 1.0;
    bool use_manual_transcripts = true;
    bool ce_mean_reduction = false;

    // optimizer
    double peak_lr = 1e-3;
    std::int64_t warmup_steps = 4000;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.98;
    double adam_eps = 1e-8;

    std::int64_t seed = 7;

    // inputs for the pipeline stages
    std::string corpus_path;
    std::string test_corpus_path;
    std::string vocab_path;
    std::string pretrained_checkpoint;
    std::string clean_checkpoint;
    std::string asr_checkpoint;

    MarginConfig margin() const { return {delta_plus, delta_minus}; }
    AnnealConfig anneal_config() const { return {anneal_R, anneal_G}; }
    AdamConfig adam() const { return {adam_beta1, adam_beta2, adam_eps}; }
    Reduction ce_reduction() const { return ce_mean_reduction ? Reduction::mean : Reduction::sum; }

    NoiseConfig noise() const {
        NoiseConfig n;
        n.char_sub_rate = char_sub_rate;
        n.char_del_rate = char_del_rate;
        n.char_ins_rate = char_ins_rate;
        n.word_confusion_rate = word_confusion_rate;
        n.confusion_table = default_confusion_table();
        n.label_flip_rate = label_flip_rate;
        return n;
    }

    void validate() const {
        margin().validate();
        anneal_config().validate();
        noise().validate();
        auto require = [](bool ok, const char* what) {
            if (!ok) fail(ErrorKind::invalid_config, what);
        };
        require(tau_sc > 0.0 && tau_c > 0.0 && tau_d > 0.0, "temperatures must be > 0");
        require(mask_ratio >= 0.0 && mask_ratio <= 1.0, "mask_ratio must lie in [0,1]");
        require(lambda_pt >= 0.0 && lambda_pt <= 1.0, "lambda_pt must lie in [0,1]");
        require(lambda_reg >= 0.0 && lambda_reg_p >= 0.0 && lambda_reg_q >= 0.0, "regularizer weights must be >= 0");
        require(alpha >= 0.0 && beta >= 0.0 && gamma_scale >= 0.0, "loss weights must be >= 0");
        require(num_classes >= 2, "num_classes must be >= 2");
        require(train_size >= 1 && test_size >= 0, "split sizes must be positive");
        require(min_count >= 1, "min_count must be >= 1");
        require(max_len >= 2, "max_len must be >= 2");
        require(embed_dim >= 1 && out_dim >= 1, "model dimensions must be positive");
        require(pretrain_steps >= 0 && finetune_epochs >= 0, "step counts must be >= 0");
        require(pretrain_batch_pairs >= 2 && finetune_batch_pairs >= 2, "batch sizes must be >= 2 pairs");
        require(peak_lr > 0.0 && warmup_steps >= 1, "peak_lr must be > 0 and warmup_steps >= 1");
        require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0 && adam_eps > 0.0,
                "invalid Adam constants");
        require(seed >= 0, "seed must be >= 0");
    }
};

namespace detail {

using ConfigMember = std::variant<double TrainConfig::*, std::int64_t TrainConfig::*, bool TrainConfig::*,
                                  std::string TrainConfig::*>;

struct ConfigField {
    const char* name;
    ConfigMember member;
};

inline const std::vector<ConfigField>& config_fields() {
    static const std::vector<ConfigField> fields = {
        {"num_classes", &TrainConfig::num_classes},
        {"train_size", &TrainConfig::train_size},
        {"test_size", &TrainConfig::test_size},
        {"char_sub_rate", &TrainConfig::char_sub_rate},
        {"char_del_rate", &TrainConfig::char_del_rate},
        {"char_ins_rate", &TrainConfig::char_ins_rate},
        {"word_confusion_rate", &TrainConfig::word_confusion_rate},
        {"label_flip_rate", &TrainConfig::label_flip_rate},
        {"min_count", &TrainConfig::min_count},
        {"max_len", &TrainConfig::max_len},
        {"embed_dim", &TrainConfig::embed_dim},
        {"out_dim", &TrainConfig::out_dim},
        {"pretrain_steps", &TrainConfig::pretrain_steps},
        {"pretrain_batch_pairs", &TrainConfig::pretrain_batch_pairs},
        {"mask_ratio", &TrainConfig::mask_ratio},
        {"tau_sc", &TrainConfig::tau_sc},
        {"delta_plus", &TrainConfig::delta_plus},
        {"delta_minus", &TrainConfig::delta_minus},
        {"lambda_reg", &TrainConfig::lambda_reg},
        {"lambda_pt", &TrainConfig::lambda_pt},
        {"finetune_epochs", &TrainConfig::finetune_epochs},
        {"finetune_batch_pairs", &TrainConfig::finetune_batch_pairs},
        {"tau_c", &TrainConfig::tau_c},
        {"lambda_reg_p", &TrainConfig::lambda_reg_p},
        {"lambda_reg_q", &TrainConfig::lambda_reg_q},
        {"tau_d", &TrainConfig::tau_d},
        {"alpha", &TrainConfig::alpha},
        {"beta", &TrainConfig::beta},
        {"anneal", &TrainConfig::anneal},
        {"anneal_R", &TrainConfig::anneal_R},
        {"anneal_G", &TrainConfig::anneal_G},
        {"gamma_scale", &TrainConfig::gamma_scale},
        {"use_manual_transcripts", &TrainConfig::use_manual_transcripts},
        {"ce_mean_reduction", &TrainConfig::ce_mean_reduction},
        {"peak_lr", &TrainConfig::peak_lr},
        {"warmup_steps", &TrainConfig::warmup_steps},
        {"adam_beta1", &TrainConfig::adam_beta1},
        {"adam_beta2", &TrainConfig::adam_beta2},
        {"adam_eps", &TrainConfig::adam_eps},
        {"seed", &TrainConfig::seed},
        {"corpus_path", &TrainConfig::corpus_path},
        {"test_corpus_path", &TrainConfig::test_corpus_path},
        {"vocab_path", &TrainConfig::vocab_path},
        {"pretrained_checkpoint", &TrainConfig::pretrained_checkpoint},
        {"clean_checkpoint", &TrainConfig::clean_checkpoint},
        {"asr_checkpoint", &TrainConfig::asr_checkpoint},
    };
    return fields;
}

inline std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline void assign_field(TrainConfig& cfg, const ConfigField& field, const std::string& raw) {
    auto bad = [&] { fail(ErrorKind::invalid_config, "bad value '" + raw + "' for config key '" + field.name + "'"); };
    std::visit(
        [&](auto member) {
            using T = std::remove_cvref_t<decltype(cfg.*member)>;
            if constexpr (std::is_same_v<T, double>) {
                std::size_t used = 0;
                try {
                    cfg.*member = std::stod(raw, &used);
                } catch (const std::exception&) {
                    bad();
                }
                if (used != raw.size()) bad();
            } else if constexpr (std::is_same_v<T, std::int64_t>) {
                std::size_t used = 0;
                try {
                    cfg.*member = std::stoll(raw, &used);
                } catch (const std::exception&) {
                    bad();
                }
                if (used != raw.size()) bad();
            } else if constexpr (std::is_same_v<T, bool>) {
                if (raw == "true" || raw == "on" || raw == "1") cfg.*member = true;
                else if (raw == "false" || raw == "off" || raw == "0") cfg.*member = false;
                else bad();
            } else {
                cfg.*member = raw;
            }
        },
        field.member);
}

}  // namespace detail

/// Sets one key from its text form; unknown keys are an error.
inline void set_config_value(TrainConfig& cfg, const std::string& key, const std::string& value) {
    for (const auto& field : detail::config_fields()) {
        if (key == field.name) {
            detail::assign_field(cfg, field, value);
            return;
        }
    }
    fail(ErrorKind::invalid_config, "unknown config key '" + key + "'");
}

/// `key = value` lines; `#` starts a comment. Missing keys keep defaults.
inline TrainConfig parse_config(const std::string& text, const std::string& origin = "<config>") {
    TrainConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            fail(ErrorKind::invalid_config, origin + ":" + std::to_string(line_no) + ": expected key = value");
        set_config_value(cfg, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
    return cfg;
}

inline TrainConfig load_config(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io_error, "cannot open config " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str(), path);
}

/// Every field, in a fixed order, at full precision.
inline std::string format_config(const TrainConfig& cfg) {
    std::string out;
    for (const auto& field : detail::config_fields()) {
        out += field.name;
        out += " = ";
        std::visit(
            [&](auto member) {
                using T = std::remove_cvref_t<decltype(cfg.*member)>;
                if constexpr (std::is_same_v<T, double>) out += detail::format_double(cfg.*member);
                else if constexpr (std::is_same_v<T, std::int64_t>) out += std::to_string(cfg.*member);
                else if constexpr (std::is_same_v<T, bool>) out += (cfg.*member ? "true" : "false");
                else out += cfg.*member;
            },
            field.member);
        out += '\n';
    }
    return out;
}

inline void save_config(const TrainConfig& cfg, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io_error, "cannot open " + path + " for writing");
    out << format_config(cfg);
    if (!out) fail(ErrorKind::io_error, "write failed for " + path);
}

}  // namespace mllmcl
