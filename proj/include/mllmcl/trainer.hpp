#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "mllmcl/config.hpp"
#include "mllmcl/corpus.hpp"
#include "mllmcl/encoder.hpp"
#include "mllmcl/error.hpp"
#include "mllmcl/losses.hpp"
#include "mllmcl/metrics.hpp"
#include "mllmcl/numeric.hpp"
#include "mllmcl/rng.hpp"
#include "mllmcl/schedule.hpp"

namespace mllmcl {

// ---------------------------------------------------------------------------
// Inference

struct Predictions {
    std::vector<ProbVec> probs;
    std::vector<std::int32_t> labels;
};

inline std::int32_t argmax(std::span<const double> v) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < v.size(); ++k)
        if (v[k] > v[best]) best = k;
    return static_cast<std::int32_t>(best);
}

inline void require_compatible(const ModelParams& params, const Corpus& corpus, const Vocab& vocab) {
    if (params.dims.num_classes != static_cast<std::size_t>(corpus.num_classes))
        fail(ErrorKind::schema_mismatch, "model has " + std::to_string(params.dims.num_classes) +
                                             " classes, corpus has " + std::to_string(corpus.num_classes));
    if (params.dims.vocab_size != vocab.size())
        fail(ErrorKind::schema_mismatch, "model vocabulary size " + std::to_string(params.dims.vocab_size) +
                                             " differs from vocab file size " + std::to_string(vocab.size()));
}

/// Class distributions for one side of every example, in corpus order.
/// Ties in the argmax go to the lowest class index.
inline Predictions predict(const ModelParams& params, const Corpus& corpus, Side side, const Vocab& vocab,
                           std::size_t max_len) {
    require_compatible(params, corpus, vocab);
    constexpr std::size_t kChunk = 256;
    Predictions out;
    out.probs.reserve(corpus.size());
    for (std::size_t start = 0; start < corpus.size(); start += kChunk) {
        const std::size_t end = std::min(corpus.size(), start + kChunk);
        std::vector<TokenSequence> seqs;
        for (std::size_t i = start; i < end; ++i) {
            const auto& ex = corpus.examples[i];
            seqs.push_back(tokenize(side == Side::clean ? ex.clean : ex.noisy, vocab, max_len));
        }
        const Encoding enc = encode(params, TokenMatrix::from_sequences(seqs));
        const Matrix logits = classify(params, enc.reps);
        for (std::size_t r = 0; r < logits.rows(); ++r) {
            out.probs.push_back(softmax_with_temperature(logits.row(r), 1.0));
            out.labels.push_back(argmax(out.probs.back().values()));
        }
    }
    return out;
}

inline std::vector<std::int32_t> gold_labels(const Corpus& corpus) {
    std::vector<std::int32_t> y;
    y.reserve(corpus.size());
    for (const auto& ex : corpus.examples) y.push_back(ex.label);
    return y;
}

/// Encodes the first `max_pairs` examples of both sides into one paired batch
/// (clean rows first), with one label per row.
struct EncodedPairs {
    EmbeddingBatch batch;
    std::vector<std::int32_t> row_labels;
};

inline EncodedPairs encode_pairs(const ModelParams& clean_model, const ModelParams& noisy_model, const Corpus& corpus,
                                 const Vocab& vocab, std::size_t max_len, std::size_t max_pairs) {
    const std::size_t n = std::min(max_pairs, corpus.size());
    std::vector<TokenSequence> clean, noisy;
    std::vector<std::int64_t> ids;
    EncodedPairs out;
    for (std::size_t i = 0; i < n; ++i) {
        const auto& ex = corpus.examples[i];
        clean.push_back(tokenize(ex.clean, vocab, max_len));
        noisy.push_back(tokenize(ex.noisy, vocab, max_len));
        ids.push_back(ex.id);
    }
    const Encoding ec = encode(clean_model, TokenMatrix::from_sequences(clean));
    const Encoding en = encode(noisy_model, TokenMatrix::from_sequences(noisy));
    out.batch = make_paired_batch(ec.reps, en.reps, ids);
    for (int side = 0; side < 2; ++side)
        for (std::size_t i = 0; i < n; ++i) out.row_labels.push_back(corpus.examples[i].label);
    return out;
}

inline Matrix pairs_distance(const EncodedPairs& pairs) { return pairwise_distance_matrix(pairs.batch).entries(); }

inline constexpr std::size_t kGeometryPairs = 256;

/// Margin occupancy of the first kGeometryPairs clean/noisy pairs under one model.
inline double corpus_margin_occupancy(const ModelParams& params, const Corpus& corpus, const Vocab& vocab,
                                      const TrainConfig& cfg) {
    const auto pairs = encode_pairs(params, params, corpus, vocab, static_cast<std::size_t>(cfg.max_len), kGeometryPairs);
    return margin_occupancy(pairs_distance(pairs), cfg.margin());
}

// ---------------------------------------------------------------------------
// Pre-training

struct PretrainLogRow {
    std::int64_t iter = 0;
    double l_sc = 0.0;
    double l_reg = 0.0;
    double l_mlm = 0.0;
    double lr = 0.0;
    double total = 0.0;
    friend bool operator==(const PretrainLogRow&, const PretrainLogRow&) = default;
};

struct PretrainResult {
    ModelParams params;
    std::vector<PretrainLogRow> log;
};

namespace detail {

/// Masks every row of `tokens` and collects the masked slots and targets.
struct MaskedBatch {
    TokenMatrix tokens;
    std::vector<MaskedSlot> slots;
    std::vector<TokenId> targets;
};

inline MaskedBatch mask_batch(const TokenMatrix& tokens, double ratio, Rng& rng) {
    MaskedBatch out;
    std::vector<TokenSequence> rows;
    for (std::size_t r = 0; r < tokens.rows; ++r) {
        MaskedSequence masked = mask_tokens(tokens.row(r), ratio, rng);
        for (std::size_t k = 0; k < masked.positions.size(); ++k) {
            out.slots.push_back({r, masked.positions[k]});
            out.targets.push_back(masked.targets[k]);
        }
        rows.push_back(std::move(masked.tokens));
    }
    out.tokens = TokenMatrix::from_sequences(rows);
    return out;
}

inline EmbeddingBatch stacked_pair_batch(const Matrix& reps, const std::vector<std::int64_t>& ids) {
    const std::size_t n = ids.size();
    EmbeddingBatch batch;
    batch.rows = reps;
    batch.origin.resize(2 * n);
    batch.partner.resize(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        batch.origin[i] = {ids[i], Side::clean};
        batch.origin[n + i] = {ids[i], Side::noisy};
        batch.partner[i] = n + i;
        batch.partner[n + i] = i;
    }
    return batch;
}

}  // namespace detail

/// Loss values and parameter gradient of one pre-training step.
struct PretrainStep {
    double l_sc = 0.0;
    double l_reg = 0.0;
    double l_mlm = 0.0;
    double total = 0.0;
    ModelParams grads;
};

/// Both sides of the batch are encoded as one 2N-row batch for the
/// contrastive and regularizer terms; a masked copy of the same rows feeds
/// the MLM head.
inline PretrainStep pretrain_step_gradients(const TrainConfig& cfg, const ModelParams& params, const Batch& batch,
                                            Rng& mask_rng) {
    const TokenMatrix stacked = stack_rows(batch.clean_tokens, batch.noisy_tokens);
    const Encoding enc = encode(params, stacked);
    const EmbeddingBatch reps = detail::stacked_pair_batch(enc.reps, batch.example_ids);
    const LossResult l_sc = self_supervised_contrastive(reps, cfg.tau_sc);
    const LossResult l_reg = distance_polarization_on_rows(enc.reps, cfg.margin());

    const detail::MaskedBatch masked = detail::mask_batch(stacked, cfg.mask_ratio, mask_rng);
    const Encoding masked_enc = encode(params, masked.tokens);
    const LossResult l_mlm = mlm_loss(mlm_logits(params, masked_enc, masked.slots), masked.targets);

    const LossResult total = compose_pretrain(l_sc, l_reg, l_mlm, cfg.lambda_reg, cfg.lambda_pt);

    PretrainStep step{l_sc.value, l_reg.value, l_mlm.value, total.value, ModelParams::zeros(params.dims)};
    Upstream contrastive_up;
    contrastive_up.reps = total.grads[0];
    contrastive_up.reps += total.grads[1];
    accumulate_backward(params, enc, contrastive_up, step.grads);
    Upstream mlm_up;
    mlm_up.mlm_logits = total.grads[2];
    mlm_up.mlm_slots = masked.slots;
    accumulate_backward(params, masked_enc, mlm_up, step.grads);
    return step;
}

/// Contrastive + regularizer + MLM pre-training of a fresh encoder on the
/// paired transcripts of `corpus`.
inline PretrainResult pretrain(const TrainConfig& cfg, const Corpus& corpus, const Vocab& vocab) {
    cfg.validate();
    if (corpus.size() < 2) fail(ErrorKind::empty_corpus, "pre-training needs at least 2 paired examples");
    const auto seed = static_cast<std::uint64_t>(cfg.seed);
    const auto max_len = static_cast<std::size_t>(cfg.max_len);
    const auto batch_pairs = static_cast<std::size_t>(cfg.pretrain_batch_pairs);
    PretrainResult result;
    result.params = init_params(vocab.size(), static_cast<std::size_t>(cfg.embed_dim),
                                static_cast<std::size_t>(cfg.out_dim), static_cast<std::size_t>(corpus.num_classes),
                                seed);
    OptimState opt = OptimState::for_params(result.params);

    std::uint64_t epoch = 0;
    auto plan = plan_batches(corpus.size(), batch_pairs, seed, epoch);
    std::size_t cursor = 0;
    for (std::int64_t t = 1; t <= cfg.pretrain_steps; ++t) {
        if (cursor == plan.size()) {
            plan = plan_batches(corpus.size(), batch_pairs, seed, ++epoch);
            cursor = 0;
        }
        const Batch batch = materialize_batch(corpus, plan[cursor++], vocab, max_len);
        Rng mask_rng({seed, static_cast<std::uint64_t>(t), 0x3a5c});
        const PretrainStep step = pretrain_step_gradients(cfg, result.params, batch, mask_rng);
        const double lr = warmup_lr(t, cfg.peak_lr, cfg.warmup_steps);
        adam_step(opt, result.params, step.grads, lr, cfg.adam());
        result.log.push_back({t, step.l_sc, step.l_reg, step.l_mlm, lr, step.total});
    }
    return result;
}

// ---------------------------------------------------------------------------
// Fine-tuning

/// Previous-epoch class distributions keyed by example id. Seeded with the
/// one-hot training labels before the first epoch.
class PredictionCache {
public:
    static PredictionCache from_labels(const Corpus& corpus) {
        PredictionCache cache;
        cache.kind_ = TargetKind::one_hot_labels;
        for (const auto& ex : corpus.examples)
            cache.entries_[ex.id] = ProbVec::one_hot(static_cast<std::size_t>(corpus.num_classes),
                                                     static_cast<std::size_t>(ex.label));
        return cache;
    }

    void refresh(const Corpus& corpus, const Predictions& preds) {
        if (preds.probs.size() != corpus.size()) fail(ErrorKind::length_mismatch, "cache refresh: prediction count");
        for (std::size_t i = 0; i < corpus.size(); ++i) entries_[corpus.examples[i].id] = preds.probs[i];
        kind_ = TargetKind::predictions;
    }

    TargetKind kind() const noexcept { return kind_; }
    const ProbVec& at(std::int64_t id) const { return entries_.at(id); }
    std::size_t size() const noexcept { return entries_.size(); }

    Matrix gather(std::span<const std::int64_t> ids) const {
        if (ids.empty()) return {};
        Matrix m(ids.size(), at(ids[0]).size());
        for (std::size_t i = 0; i < ids.size(); ++i) {
            const ProbVec& p = at(ids[i]);
            for (std::size_t k = 0; k < p.size(); ++k) m(i, k) = p[k];
        }
        return m;
    }

private:
    TargetKind kind_ = TargetKind::one_hot_labels;
    std::unordered_map<std::int64_t, ProbVec> entries_;
};

struct FinetuneLogRow {
    std::int64_t iter = 0;
    std::int64_t epoch = 0;
    double l_ce = 0.0;
    double l_mut = 0.0;
    double l_creg = 0.0;
    double l_d = 0.0;
    double gamma = 0.0;
    double lr = 0.0;
    double total = 0.0;
    // clean-side parts of l_ce, l_creg and l_d; kept in memory, not written to the CSV
    double l_ce_clean = 0.0;
    double l_creg_clean = 0.0;
    double l_d_clean = 0.0;
    friend bool operator==(const FinetuneLogRow&, const FinetuneLogRow&) = default;
};

struct EpochMetrics {
    std::int64_t epoch = 0;
    double accuracy_noisy = 0.0;
    double accuracy_clean = 0.0;
};

struct FinetuneResult {
    ModelParams clean;
    ModelParams asr;
    std::vector<FinetuneLogRow> log;
    std::vector<EpochMetrics> metrics;
};

/// Per-side forward results for one fine-tuning batch.
struct SideTerms {
    Encoding enc;
    Matrix logits;
    Matrix probs;
    LossResult ce;
    LossResult creg;
    LossResult distill;
};

namespace detail {

inline SideTerms side_terms(const ModelParams& params, const TokenMatrix& tokens, const std::vector<std::int32_t>& labels,
                            const std::vector<std::int64_t>& ids, const PredictionCache& cache, double lambda_reg_side,
                            const TrainConfig& cfg) {
    SideTerms s;
    s.enc = encode(params, tokens);
    s.logits = classify(params, s.enc.reps);
    s.probs = Matrix(s.logits.rows(), s.logits.cols());
    for (std::size_t r = 0; r < s.logits.rows(); ++r) {
        const ProbVec p = softmax_with_temperature(s.logits.row(r), 1.0);
        std::copy(p.values().begin(), p.values().end(), s.probs.row(r).begin());
    }
    s.ce = cross_entropy(s.logits, labels, cfg.ce_reduction());
    const LossResult contrastive = supervised_contrastive(s.enc.reps, labels, cfg.tau_c);
    const LossResult reg = distance_polarization_on_rows(s.enc.reps, cfg.margin());
    s.creg = linear_combination({{1.0, &contrastive}, {lambda_reg_side, &reg}});
    s.distill = self_distillation(cache.gather(ids), s.logits, cfg.tau_d, cache.kind());
    return s;
}

/// Stand-in for a side whose losses are switched off: zero value and zero
/// gradients of the right shapes.
inline SideTerms silent_side(const SideTerms& like) {
    SideTerms s;
    s.probs = like.probs;
    s.ce.grads = {Matrix(like.logits.rows(), like.logits.cols())};
    s.creg.grads = {Matrix(like.enc.reps.rows(), like.enc.reps.cols())};
    s.distill.grads = {Matrix(like.logits.rows(), like.logits.cols())};
    return s;
}

inline Upstream side_upstream(const Matrix& probs, const Matrix& ce_grad, const Matrix& mut_grad,
                              const Matrix& creg_grad, const Matrix& distill_grad) {
    Upstream up;
    up.class_logits = ce_grad;
    up.class_logits += distill_grad;
    for (std::size_t r = 0; r < probs.rows(); ++r) {
        const Vec g = softmax_backward(probs.row(r), mut_grad.row(r));
        for (std::size_t k = 0; k < g.size(); ++k) up.class_logits(r, k) += g[k];
    }
    up.reps = creg_grad;
    return up;
}

}  // namespace detail

inline double gamma_at(std::int64_t t, const TrainConfig& cfg) {
    const double base = cfg.anneal ? annealing_coefficient(t, cfg.anneal_config()) : 1.0;
    return cfg.gamma_scale * base;
}

/// Loss values of one fine-tuning iteration and the gradients for both
/// models. With use_manual_transcripts off, every clean-side term is
/// exactly zero and grad_clean stays zero.
struct FinetuneStep {
    double l_ce = 0.0;
    double l_mut = 0.0;
    double l_creg = 0.0;
    double l_d = 0.0;
    double total = 0.0;
    double l_ce_clean = 0.0;
    double l_creg_clean = 0.0;
    double l_d_clean = 0.0;
    ModelParams grad_clean;
    ModelParams grad_asr;
};

inline FinetuneStep finetune_step_gradients(const TrainConfig& cfg, const ModelParams& clean_model,
                                            const ModelParams& asr_model, const Batch& batch,
                                            const PredictionCache& cache_clean, const PredictionCache& cache_asr,
                                            double gamma) {
    const bool manual = cfg.use_manual_transcripts;
    const SideTerms noisy = detail::side_terms(asr_model, batch.noisy_tokens, batch.labels, batch.example_ids,
                                               cache_asr, cfg.lambda_reg_q, cfg);
    const SideTerms clean = manual ? detail::side_terms(clean_model, batch.clean_tokens, batch.labels,
                                                        batch.example_ids, cache_clean, cfg.lambda_reg_p, cfg)
                                   : detail::silent_side(noisy);
    LossResult l_mut;
    if (manual) {
        l_mut = mutual_learning(clean.probs, noisy.probs);
    } else {
        l_mut.grads = {Matrix(noisy.probs.rows(), noisy.probs.cols()), Matrix(noisy.probs.rows(), noisy.probs.cols())};
    }
    const LossResult l_ce = join({{1.0, &clean.ce}, {1.0, &noisy.ce}});
    const LossResult l_creg = join({{1.0, &clean.creg}, {1.0, &noisy.creg}});
    const LossResult l_d = join({{1.0, &clean.distill}, {1.0, &noisy.distill}});
    const LossResult total = compose_finetune(l_ce, l_mut, l_creg, l_d, cfg.alpha, cfg.beta, gamma);
    // total.grads: ce_p, ce_q, mut_p, mut_q, creg_p, creg_q, d_p, d_q

    FinetuneStep step;
    step.l_ce = l_ce.value;
    step.l_mut = l_mut.value;
    step.l_creg = l_creg.value;
    step.l_d = l_d.value;
    step.total = total.value;
    step.l_ce_clean = clean.ce.value;
    step.l_creg_clean = clean.creg.value;
    step.l_d_clean = clean.distill.value;
    step.grad_asr = backward(asr_model, noisy.enc,
                             detail::side_upstream(noisy.probs, total.grads[1], total.grads[3], total.grads[5],
                                                   total.grads[7]));
    step.grad_clean = manual ? backward(clean_model, clean.enc,
                                        detail::side_upstream(clean.probs, total.grads[0], total.grads[2],
                                                              total.grads[4], total.grads[6]))
                             : ModelParams::zeros(clean_model.dims);
    return step;
}

/// Trains M_clean on clean transcripts and M_asr on the aligned noisy
/// transcripts, both cloned from `pretrained`.
inline FinetuneResult finetune(const TrainConfig& cfg, const ModelParams& pretrained, const Corpus& train,
                               const Corpus& dev, const Vocab& vocab) {
    cfg.validate();
    require_compatible(pretrained, train, vocab);
    if (!dev.empty()) require_compatible(pretrained, dev, vocab);
    const auto seed = static_cast<std::uint64_t>(cfg.seed);
    const auto max_len = static_cast<std::size_t>(cfg.max_len);
    const bool manual = cfg.use_manual_transcripts;

    FinetuneResult result;
    result.clean = clone_params(pretrained);
    result.asr = clone_params(pretrained);
    OptimState opt_clean = OptimState::for_params(pretrained);
    OptimState opt_asr = OptimState::for_params(pretrained);
    PredictionCache cache_clean = PredictionCache::from_labels(train);
    PredictionCache cache_asr = PredictionCache::from_labels(train);

    std::int64_t t = 0;
    for (std::int64_t epoch = 1; epoch <= cfg.finetune_epochs; ++epoch) {
        for (const auto& group : plan_batches(train.size(), static_cast<std::size_t>(cfg.finetune_batch_pairs), seed,
                                              static_cast<std::uint64_t>(epoch))) {
            ++t;
            const Batch batch = materialize_batch(train, group, vocab, max_len);
            const double gamma = gamma_at(t, cfg);
            const double lr = warmup_lr(t, cfg.peak_lr, cfg.warmup_steps);
            const FinetuneStep step =
                finetune_step_gradients(cfg, result.clean, result.asr, batch, cache_clean, cache_asr, gamma);
            adam_step(opt_asr, result.asr, step.grad_asr, lr, cfg.adam());
            if (manual) adam_step(opt_clean, result.clean, step.grad_clean, lr, cfg.adam());
            result.log.push_back({t, epoch, step.l_ce, step.l_mut, step.l_creg, step.l_d, gamma, lr, step.total,
                                  step.l_ce_clean, step.l_creg_clean, step.l_d_clean});
        }

        cache_asr.refresh(train, predict(result.asr, train, Side::noisy, vocab, max_len));
        if (manual) cache_clean.refresh(train, predict(result.clean, train, Side::clean, vocab, max_len));

        EpochMetrics m{epoch, 0.0, 0.0};
        if (!dev.empty()) {
            const auto gold = gold_labels(dev);
            m.accuracy_noisy = evaluate_accuracy(predict(result.asr, dev, Side::noisy, vocab, max_len).labels, gold);
            m.accuracy_clean = evaluate_accuracy(predict(result.clean, dev, Side::clean, vocab, max_len).labels, gold);
        }
        result.metrics.push_back(m);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Evaluation

/// Accuracy of M_asr on noisy text and M_clean on clean text, plus the
/// representation geometry of M_asr on the first kGeometryPairs pairs.
inline MetricsReport evaluate(const ModelParams& clean_model, const ModelParams& asr_model, const Corpus& test,
                              const Vocab& vocab, const TrainConfig& cfg, EncodedPairs* geometry_out = nullptr) {
    const auto max_len = static_cast<std::size_t>(cfg.max_len);
    const auto gold = gold_labels(test);
    MetricsReport report;
    const Predictions noisy = predict(asr_model, test, Side::noisy, vocab, max_len);
    const Predictions clean = predict(clean_model, test, Side::clean, vocab, max_len);
    report.accuracy_noisy = evaluate_accuracy(noisy.labels, gold);
    report.accuracy_clean = evaluate_accuracy(clean.labels, gold);
    report.per_class_accuracy = per_class_accuracy(noisy.labels, gold, static_cast<std::size_t>(test.num_classes));

    EncodedPairs pairs = encode_pairs(asr_model, asr_model, test, vocab, max_len, kGeometryPairs);
    report.margin_occupancy = margin_occupancy(pairs_distance(pairs), cfg.margin());
    const ClusterDistances cd = cluster_distances(pairs.batch, pairs.row_labels);
    report.mean_intra_pair_distance = cd.mean_intra_pair;
    report.mean_inter_distance = cd.mean_inter_class;
    if (geometry_out) *geometry_out = std::move(pairs);
    return report;
}

// ---------------------------------------------------------------------------
// Loss logs

inline void save_finetune_log(const std::vector<FinetuneLogRow>& log, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io_error, "cannot open " + path + " for writing");
    out << "iter,epoch,L_ce,L_mut,L_creg,L_d,gamma,lr,total\n";
    using detail::format_double;
    for (const auto& r : log)
        out << r.iter << ',' << r.epoch << ',' << format_double(r.l_ce) << ',' << format_double(r.l_mut) << ','
            << format_double(r.l_creg) << ',' << format_double(r.l_d) << ',' << format_double(r.gamma) << ','
            << format_double(r.lr) << ',' << format_double(r.total) << '\n';
    if (!out) fail(ErrorKind::io_error, "write failed for " + path);
}

inline void save_pretrain_log(const std::vector<PretrainLogRow>& log, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io_error, "cannot open " + path + " for writing");
    out << "iter,L_sc,L_reg,L_mlm,lr,total\n";
    using detail::format_double;
    for (const auto& r : log)
        out << r.iter << ',' << format_double(r.l_sc) << ',' << format_double(r.l_reg) << ',' << format_double(r.l_mlm)
            << ',' << format_double(r.lr) << ',' << format_double(r.total) << '\n';
    if (!out) fail(ErrorKind::io_error, "write failed for " + path);
}

}  // namespace mllmcl
