#pragma once

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "mllmcl/config.hpp"
#include "mllmcl/corpus.hpp"
#include "mllmcl/encoder.hpp"
#include "mllmcl/error.hpp"
#include "mllmcl/gradcheck.hpp"
#include "mllmcl/metrics.hpp"
#include "mllmcl/trainer.hpp"

namespace mllmcl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalid = 1;
inline constexpr int kExitIo = 2;

/// Fixed output names under --out.
namespace files {
inline constexpr const char* corpus = "corpus.jsonl";
inline constexpr const char* test_corpus = "test.jsonl";
inline constexpr const char* vocab = "vocab.txt";
inline constexpr const char* pretrained = "pretrained.ckpt";
inline constexpr const char* clean = "m_clean.ckpt";
inline constexpr const char* asr = "m_asr.ckpt";
inline constexpr const char* losses = "losses.csv";
inline constexpr const char* pretrain_losses = "pretrain_losses.csv";
inline constexpr const char* metrics = "metrics.txt";
inline constexpr const char* projection = "projection.csv";
inline constexpr const char* resolved_config = "resolved_config.txt";
}  // namespace files

struct Invocation {
    std::string command;
    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::int64_t> seed;
};

namespace detail {

inline std::string out_path(const Invocation& inv, const char* name) {
    return (std::filesystem::path(inv.out_dir) / name).string();
}

inline const std::string& require_field(const std::string& value, const char* field, const char* command) {
    if (value.empty()) fail(ErrorKind::missing_field, std::string(command) + " requires config field '" + field + "'");
    return value;
}

inline TrainConfig resolve_config(const Invocation& inv) {
    TrainConfig cfg = inv.config_path.empty() ? TrainConfig{} : load_config(inv.config_path);
    if (inv.seed) cfg.seed = *inv.seed;
    cfg.validate();
    std::error_code ec;
    std::filesystem::create_directories(inv.out_dir, ec);
    if (ec) fail(ErrorKind::io_error, "cannot create output directory " + inv.out_dir + ": " + ec.message());
    save_config(cfg, out_path(inv, files::resolved_config));
    return cfg;
}

/// The configured vocabulary file, or one built from `corpus` and written
/// beside the outputs.
inline Vocab resolve_vocab(const TrainConfig& cfg, const Corpus& corpus, const Invocation& inv) {
    if (!cfg.vocab_path.empty()) return load_vocab(cfg.vocab_path);
    Vocab vocab = build_vocab(corpus, static_cast<std::size_t>(cfg.min_count));
    save_vocab(vocab, out_path(inv, files::vocab));
    return vocab;
}

inline void write_report(const MetricsReport& report, const EncodedPairs& pairs, const Invocation& inv) {
    save_metrics(report, out_path(inv, files::metrics));
    export_projection(pairs.batch, pairs.row_labels, out_path(inv, files::projection));
}

inline int gen_data(const Invocation& inv) {
    const TrainConfig cfg = resolve_config(inv);
    const Dataset data = synthesize_dataset(static_cast<std::int32_t>(cfg.num_classes),
                                            static_cast<std::size_t>(cfg.train_size),
                                            static_cast<std::size_t>(cfg.test_size), cfg.noise(),
                                            static_cast<std::uint64_t>(cfg.seed));
    save_corpus(data.train, out_path(inv, files::corpus));
    save_corpus(data.test, out_path(inv, files::test_corpus));
    save_vocab(build_vocab(data.train, static_cast<std::size_t>(cfg.min_count)), out_path(inv, files::vocab));
    std::cout << "wrote " << data.train.size() << " train and " << data.test.size() << " test pairs to "
              << inv.out_dir << "\n";
    return kExitOk;
}

inline int pretrain_cmd(const Invocation& inv) {
    const TrainConfig cfg = resolve_config(inv);
    const Corpus corpus = load_corpus(require_field(cfg.corpus_path, "corpus_path", "pretrain"));
    const Vocab vocab = resolve_vocab(cfg, corpus, inv);
    const PretrainResult result = pretrain(cfg, corpus, vocab);
    save_checkpoint(result.params, out_path(inv, files::pretrained));
    save_pretrain_log(result.log, out_path(inv, files::pretrain_losses));
    if (!result.log.empty())
        std::cout << "pretrain: " << result.log.size() << " steps, final total " << result.log.back().total << "\n";
    return kExitOk;
}

inline int finetune_cmd(const Invocation& inv) {
    const TrainConfig cfg = resolve_config(inv);
    const std::string& ckpt = require_field(cfg.pretrained_checkpoint, "pretrained_checkpoint", "finetune");
    const Corpus train = load_corpus(require_field(cfg.corpus_path, "corpus_path", "finetune"));
    const Corpus test = cfg.test_corpus_path.empty() ? Corpus{} : load_corpus(cfg.test_corpus_path);
    const Vocab vocab = resolve_vocab(cfg, train, inv);
    const ModelParams pretrained = load_checkpoint(ckpt);
    const FinetuneResult result = finetune(cfg, pretrained, train, test, vocab);
    save_checkpoint(result.clean, out_path(inv, files::clean));
    save_checkpoint(result.asr, out_path(inv, files::asr));
    save_finetune_log(result.log, out_path(inv, files::losses));
    EncodedPairs pairs;
    const MetricsReport report = evaluate(result.clean, result.asr, test.empty() ? train : test, vocab, cfg, &pairs);
    write_report(report, pairs, inv);
    std::cout << "finetune: accuracy_noisy " << report.accuracy_noisy << ", accuracy_clean " << report.accuracy_clean
              << "\n";
    return kExitOk;
}

inline int eval_cmd(const Invocation& inv) {
    const TrainConfig cfg = resolve_config(inv);
    const ModelParams clean = load_checkpoint(require_field(cfg.clean_checkpoint, "clean_checkpoint", "eval"));
    const ModelParams asr = load_checkpoint(require_field(cfg.asr_checkpoint, "asr_checkpoint", "eval"));
    const Corpus test = load_corpus(require_field(cfg.test_corpus_path, "test_corpus_path", "eval"));
    const Vocab vocab = load_vocab(require_field(cfg.vocab_path, "vocab_path", "eval"));
    EncodedPairs pairs;
    const MetricsReport report = evaluate(clean, asr, test, vocab, cfg, &pairs);
    write_report(report, pairs, inv);
    std::cout << format_metrics(report);
    return kExitOk;
}

inline int gradcheck_cmd(const Invocation& inv) {
    const TrainConfig cfg = resolve_config(inv);
    GradCheckOptions opt;
    opt.seed = static_cast<std::uint64_t>(cfg.seed);
    const GradCheckReport report = run_gradcheck(opt);
    std::cout << format_gradcheck(report);
    if (!report.passed()) {
        std::cerr << "mllmcl: gradcheck: relative error at or above " << report.tolerance << "\n";
        return kExitInvalid;
    }
    return kExitOk;
}

}  // namespace detail

inline int dispatch(const Invocation& inv) {
    if (inv.command == "gen-data") return detail::gen_data(inv);
    if (inv.command == "pretrain") return detail::pretrain_cmd(inv);
    if (inv.command == "finetune") return detail::finetune_cmd(inv);
    if (inv.command == "eval") return detail::eval_cmd(inv);
    if (inv.command == "gradcheck") return detail::gradcheck_cmd(inv);
    fail(ErrorKind::invalid_config, "unknown command '" + inv.command + "'");
}

/// Exit codes: 0 success, 1 validation error, 2 I/O error.
inline int run(int argc, const char* const* argv) {
    CLI::App app{"Mutual-learning contrastive training for noisy-transcript intent classification", "mllmcl"};
    app.require_subcommand(1);
    Invocation inv;
    std::int64_t seed = 0;
    for (const char* name : {"gen-data", "pretrain", "finetune", "eval", "gradcheck"}) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", inv.config_path, "key = value config file");
        sub->add_option("--out", inv.out_dir, "output directory");
        sub->add_option("--seed", seed, "overrides the config seed");
        sub->callback([&inv, &seed, sub, name] {
            inv.command = name;
            if (sub->count("--seed") > 0) inv.seed = seed;
        });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "mllmcl: " << e.what() << "\n";
        return kExitInvalid;
    }
    try {
        return dispatch(inv);
    } catch (const Error& e) {
        std::cerr << "mllmcl: " << inv.command << ": " << e.what() << "\n";
        return e.kind() == ErrorKind::io_error ? kExitIo : kExitInvalid;
    } catch (const std::exception& e) {
        std::cerr << "mllmcl: " << inv.command << ": " << e.what() << "\n";
        return kExitInvalid;
    }
}

}  // namespace mllmcl::cli
