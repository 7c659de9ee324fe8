#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mllmcl/config.hpp"
#include "mllmcl/corpus.hpp"
#include "mllmcl/encoder.hpp"
#include "mllmcl/losses.hpp"
#include "mllmcl/numeric.hpp"
#include "mllmcl/rng.hpp"
#include "mllmcl/trainer.hpp"

namespace mllmcl {

struct GradCheckEntry {
    std::string name;
    std::size_t instances = 0;
    double max_rel_error = 0.0;
};

struct GradCheckReport {
    double tolerance = 1e-4;
    std::vector<GradCheckEntry> entries;

    bool passed() const {
        for (const auto& e : entries)
            if (!(e.max_rel_error < tolerance)) return false;
        return !entries.empty();
    }
};

struct GradCheckOptions {
    std::uint64_t seed = 1;
    std::size_t instances = 20;
    double tolerance = 1e-4;
    double step = 1e-5;
    double abs_floor = 1e-8;
};

namespace detail {

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
    Matrix m(r, c);
    for (double& v : m.data()) v = rng.uniform(-scale, scale);
    return m;
}

inline std::vector<std::int32_t> random_labels(std::size_t n, std::size_t classes, Rng& rng) {
    std::vector<std::int32_t> y(n);
    for (auto& v : y) v = static_cast<std::int32_t>(rng.uniform_int(classes));
    return y;
}

inline Matrix random_probs(std::size_t r, std::size_t c, Rng& rng) {
    Matrix m(r, c);
    for (std::size_t i = 0; i < r; ++i) {
        const ProbVec p = softmax_with_temperature(random_matrix(1, c, rng, 2.0).row(0), 1.0);
        std::copy(p.values().begin(), p.values().end(), m.row(i).begin());
    }
    return m;
}

inline Matrix reshape(const Vec& flat, std::size_t r, std::size_t c) {
    Matrix m(r, c);
    m.data() = flat;
    return m;
}

/// True when every off-diagonal distance sits at least `gap` away from the
/// margin edges, where the regularizer has kinks.
inline bool clear_of_kinks(const Matrix& distances, const MarginConfig& margin, double gap = 1e-3) {
    for (std::size_t i = 0; i < distances.rows(); ++i)
        for (std::size_t j = 0; j < distances.cols(); ++j) {
            if (i == j) continue;
            const double d = distances(i, j);
            if (std::abs(d - margin.delta_plus) < gap || std::abs(d - margin.delta_minus) < gap) return false;
        }
    return true;
}

inline bool rows_clear_of_kinks(const Matrix& rows, const MarginConfig& margin) {
    return clear_of_kinks(pairwise_distance_matrix(rows).entries(), margin);
}

/// Random margin with both edges inside (0.05, 0.95).
inline MarginConfig random_margin(Rng& rng) {
    const double a = rng.uniform(0.05, 0.5);
    return {a, a + rng.uniform(0.1, 0.45)};
}

inline EmbeddingBatch paired_rows(const Matrix& rows) {
    const std::size_t n = rows.rows() / 2;
    std::vector<std::int64_t> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<std::int64_t>(i);
    return stacked_pair_batch(rows, ids);
}

/// Distinct random token rows of length 2..5 over a vocabulary of size v.
inline TokenMatrix random_tokens(std::size_t rows, std::size_t v, Rng& rng) {
    std::vector<TokenSequence> seqs;
    while (seqs.size() < rows) {
        TokenSequence s{kCls};
        const std::size_t len = 1 + rng.uniform_int(4);
        for (std::size_t k = 0; k < len; ++k)
            s.push_back(static_cast<TokenId>(kNumReserved + rng.uniform_int(v - kNumReserved)));
        bool fresh = true;
        for (const auto& other : seqs) fresh = fresh && other != s;
        if (fresh) seqs.push_back(std::move(s));
    }
    return TokenMatrix::from_sequences(seqs);
}

inline Batch random_batch(std::size_t pairs, std::size_t v, std::size_t classes, Rng& rng) {
    Batch b;
    const TokenMatrix all = random_tokens(2 * pairs, v, rng);
    std::vector<TokenSequence> clean, noisy;
    for (std::size_t i = 0; i < pairs; ++i) {
        clean.push_back(all.row(i));
        noisy.push_back(all.row(pairs + i));
        b.example_ids.push_back(static_cast<std::int64_t>(i));
        b.indices.push_back(i);
    }
    b.clean_tokens = TokenMatrix::from_sequences(clean);
    b.noisy_tokens = TokenMatrix::from_sequences(noisy);
    b.labels = random_labels(pairs, classes, rng);
    return b;
}

inline Corpus id_corpus(const Batch& b, std::size_t classes) {
    Corpus c;
    c.num_classes = static_cast<std::int32_t>(classes);
    for (std::size_t i = 0; i < b.size(); ++i) c.examples.push_back({b.example_ids[i], "x", "x", b.labels[i]});
    return c;
}

inline PredictionCache random_cache(const Batch& b, std::size_t classes, bool one_hot, Rng& rng) {
    const Corpus c = id_corpus(b, classes);
    PredictionCache cache = PredictionCache::from_labels(c);
    if (one_hot) return cache;
    Predictions preds;
    const Matrix p = random_probs(b.size(), classes, rng);
    for (std::size_t i = 0; i < p.rows(); ++i) {
        preds.probs.emplace_back(Vec(p.row(i).begin(), p.row(i).end()));
        preds.labels.push_back(argmax(p.row(i)));
    }
    cache.refresh(c, preds);
    return cache;
}

inline ModelParams random_model(std::size_t v, std::size_t d, std::size_t o, std::size_t classes, Rng& rng) {
    ModelParams p = ModelParams::zeros({v, d, o, classes});
    for (Matrix* m : p.arrays())
        for (double& x : m->data()) x = rng.uniform(-0.8, 0.8);
    return p;
}

inline TrainConfig random_train_config(Rng& rng) {
    TrainConfig cfg;
    cfg.tau_sc = rng.uniform(0.2, 1.0);
    cfg.tau_c = rng.uniform(0.2, 1.0);
    cfg.tau_d = rng.uniform(1.0, 5.0);
    const MarginConfig m = random_margin(rng);
    cfg.delta_plus = m.delta_plus;
    cfg.delta_minus = m.delta_minus;
    cfg.lambda_reg = rng.uniform(0.0, 1.0);
    cfg.lambda_pt = rng.uniform(0.0, 1.0);
    cfg.lambda_reg_p = rng.uniform(0.0, 1.0);
    cfg.lambda_reg_q = rng.uniform(0.0, 1.0);
    cfg.alpha = rng.uniform(0.0, 2.0);
    cfg.beta = rng.uniform(0.0, 1.0);
    cfg.mask_ratio = 0.3;
    cfg.ce_mean_reduction = rng.bernoulli(0.5);
    return cfg;
}

class Runner {
public:
    explicit Runner(const GradCheckOptions& opt) : opt_(opt) { report_.tolerance = opt.tolerance; }

    /// `instance(rng, x, f, grad)` fills the point, objective and analytic
    /// gradient; it returns false to ask for a fresh draw.
    using Instance = std::function<bool(Rng&, Vec&, std::function<double(const Vec&)>&, Vec&)>;

    void check(const std::string& name, std::uint64_t tag, const Instance& instance) {
        GradCheckEntry entry{name, 0, 0.0};
        Rng rng({opt_.seed, tag, 0x9c4d});
        std::size_t draws = 0;
        while (entry.instances < opt_.instances) {
            if (++draws > 50 * opt_.instances) fail(ErrorKind::invalid_config, "gradcheck: cannot draw instances for " + name);
            Vec x, grad;
            std::function<double(const Vec&)> f;
            if (!instance(rng, x, f, grad)) continue;
            const auto r = finite_difference_check(f, x, grad, opt_.step, opt_.abs_floor);
            entry.max_rel_error = std::max(entry.max_rel_error, r.max_rel_error);
            ++entry.instances;
        }
        report_.entries.push_back(entry);
    }

    GradCheckReport report() const { return report_; }

private:
    GradCheckOptions opt_;
    GradCheckReport report_;
};

}  // namespace detail

/// Finite-difference checks of every loss and of both training-step
/// composites, each over `instances` random draws with d <= 8, M <= 8 and
/// at most 4 classes.
inline GradCheckReport run_gradcheck(const GradCheckOptions& opt = {}) {
    using detail::reshape;
    using F = std::function<double(const Vec&)>;
    detail::Runner run(opt);

    run.check("self_supervised_contrastive", 1, [](Rng& rng, Vec& x, F& f, Vec& g) {
        const std::size_t pairs = 1 + rng.uniform_int(4), d = 2 + rng.uniform_int(7);
        const double tau = rng.uniform(0.1, 1.0);
        const Matrix rows = detail::random_matrix(2 * pairs, d, rng);
        f = [=](const Vec& v) { return self_supervised_contrastive(detail::paired_rows(reshape(v, 2 * pairs, d)), tau, true).value; };
        x = rows.data();
        g = self_supervised_contrastive(detail::paired_rows(rows), tau, true).grads[0].data();
        return true;
    });

    run.check("distance_polarization", 2, [](Rng& rng, Vec& x, F& f, Vec& g) {
        const std::size_t m = 2 + rng.uniform_int(7);
        const MarginConfig margin = detail::random_margin(rng);
        const Matrix d = pairwise_distance_matrix(detail::random_matrix(m, 3, rng)).entries();
        if (!detail::clear_of_kinks(d, margin)) return false;
        f = [=](const Vec& v) { return distance_polarization(reshape(v, m, m), margin).value; };
        x = d.data();
        g = distance_polarization(d, margin).grads[0].data();
        return true;
    });

    run.check("distance_polarization_on_rows", 3, [](Rng& rng, Vec& x, F& f, Vec& g) {
        const std::size_t m = 2 + rng.uniform_int(7), d = 2 + rng.uniform_int(7);
        const MarginConfig margin = detail::random_margin(rng);
        const Matrix rows = detail::random_matrix(m, d, rng);
        if (!detail::rows_clear_of_kinks(rows, margin)) return false;
        const LossResult r = distance_polarization_on_rows(rows, margin);
        if (r.value == 0.0) return false;
        f = [=](const Vec& v) { return distance_polarization_on_rows(reshape(v, m, d), margin).value; };
        x = rows.data();
        g = r.grads[0].data();
        return true;
    });

    run.check("supervised_contrastive", 4, [](Rng& rng, Vec& x, F& f, Vec& g) {
        const std::size_t m = 2 + rng.uniform_int(7), d = 2 + rng.uniform_int(7), c = 2 + rng.uniform_int(3);
        const double tau = rng.uniform(0.1, 1.0);
        const Matrix rows = detail::random_matrix(m, d, rng);
        const auto labels = detail::random_labels(m, c, rng);
        f = [=](const Vec& v) { return supervised_contrastive(reshape(v, m, d), labels, tau).value; };
        x = rows.data();
        g = supervised_contrastive(rows, labels, tau).grads[0].data();
        return true;
    });

    // JS on softmax outputs of two logit matrices, chained exactly as in training.
    run.check("mutual_learning", 5, [](Rng& rng, Vec& x, F& f, Vec& g) {
        const std::size_t n = 1 + rng.uniform_int(8), c = 2 + rng.uniform_int(3);
        auto probs = [c](const Matrix& z) {
            Matrix p(z.rows(), c);
            for (std::size_t i = 0; i < z.rows(); ++i) {
                const ProbVec row = softmax_with_temperature(z.row(i), 1.0);
                std::copy(row.values().begin(), row.values().end(), p.row(i).begin());
            }
            return p;
        };
        auto value = [=](const Vec& v) {
            const Matrix zp = reshape(Vec(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(n * c)), n, c);
            const Matrix zq = reshape(Vec(v.begin() + static_cast<std::ptrdiff_t>(n * c), v.end()), n, c);
            return mutual_learning(probs(zp), probs(zq)).value;
        };
        const Matrix zp = detail::random_matrix(n, c, rng, 2.0), zq = detail::random_matrix(n, c, rng, 2.0);
        const Matrix pp = probs(zp), pq = probs(zq);
        const LossResult r = mutual_learning(pp, pq);
        x = zp.data();
        x.insert(x.end(), zq.data().begin(), zq.data().end());
        for (std::size_t side = 0; side < 2; ++side) {
            const Matrix& p = side == 0 ? pp : pq;
            for (std::size_t i = 0; i < n; ++i) {
                const Vec gi = softmax_backward(p.row(i), r.grads[side].row(i));
                g.insert(g.end(), gi.begin(), gi.end());
            }
        }
        f = value;
        return true;
    });

    for (const TargetKind kind : {TargetKind::one_hot_labels, TargetKind::predictions}) {
        const bool one_hot = kind == TargetKind::one_hot_labels;
        run.check(one_hot ? "self_distillation_one_hot" : "self_distillation_predictions", one_hot ? 6 : 7,
                  [kind, one_hot](Rng& rng, Vec& x, F& f, Vec& g) {
                      const std::size_t n = 1 + rng.uniform_int(8), c = 2 + rng.uniform_int(3);
                      const double tau = rng.uniform(1.0, 5.0);
                      Matrix prev = detail::random_probs(n, c, rng);
                      if (one_hot) {
                          const auto y = detail::random_labels(n, c, rng);
                          prev.fill(0.0);
                          for (std::size_t i = 0; i < n; ++i) prev(i, static_cast<std::size_t>(y[i])) = 1.0;
                      }
                      const Matrix z = detail::random_matrix(n, c, rng, 3.0);
                      f = [=](const Vec& v) { return self_distillation(prev, reshape(v, n, c), tau, kind).value; };
                      x = z.data();
                      g = self_distillation(prev, z, tau, kind).grads[0].data();
                      return true;
                  });
    }

    run.check("cross_entropy", 8, [](Rng& rng, Vec& x, F& f, Vec& g) {
        const std::size_t n = 1 + rng.uniform_int(8), c = 2 + rng.uniform_int(3);
        const Reduction red = rng.bernoulli(0.5) ? Reduction::mean : Reduction::sum;
        const auto y = detail::random_labels(n, c, rng);
        const Matrix z = detail::random_matrix(n, c, rng, 3.0);
        f = [=](const Vec& v) { return cross_entropy(reshape(v, n, c), y, red).value; };
        x = z.data();
        g = cross_entropy(z, y, red).grads[0].data();
        return true;
    });

    run.check("mlm_loss", 9, [](Rng& rng, Vec& x, F& f, Vec& g) {
        const std::size_t n = 1 + rng.uniform_int(8), v = 4 + rng.uniform_int(5);
        std::vector<TokenId> targets(n);
        for (auto& t : targets) t = static_cast<TokenId>(rng.uniform_int(v));
        const Matrix z = detail::random_matrix(n, v, rng, 3.0);
        f = [=](const Vec& p) { return mlm_loss(reshape(p, n, v), targets).value; };
        x = z.data();
        g = mlm_loss(z, targets).grads[0].data();
        return true;
    });

    // Cross-entropy through classifier, projection, tanh layer and embeddings.
    run.check("encoder_classifier", 10, [](Rng& rng, Vec& x, F& f, Vec& g) {
        constexpr std::size_t v = 8, d = 4, c = 3;
        const std::size_t n = 2 + rng.uniform_int(7);
        const ModelParams base = detail::random_model(v, d, d, c, rng);
        const TokenMatrix tokens = detail::random_tokens(n, v, rng);
        const auto y = detail::random_labels(n, c, rng);
        f = [=](const Vec& p) {
            ModelParams m = base;
            m.unflatten(p);
            return cross_entropy(classify(m, encode(m, tokens).reps), y).value;
        };
        const Encoding enc = encode(base, tokens);
        Upstream up;
        up.class_logits = cross_entropy(classify(base, enc.reps), y).grads[0];
        x = base.flatten();
        g = backward(base, enc, up).flatten();
        return true;
    });

    run.check("pretrain_step", 11, [](Rng& rng, Vec& x, F& f, Vec& g) {
        constexpr std::size_t v = 8, d = 4, c = 3;
        const std::size_t pairs = 2 + rng.uniform_int(3);
        const TrainConfig cfg = detail::random_train_config(rng);
        const ModelParams base = detail::random_model(v, d, d, c, rng);
        const Batch batch = detail::random_batch(pairs, v, c, rng);
        const Encoding enc = encode(base, stack_rows(batch.clean_tokens, batch.noisy_tokens));
        if (!detail::rows_clear_of_kinks(enc.reps, cfg.margin())) return false;
        const std::uint64_t mask_key = rng.next_u64();
        f = [=](const Vec& p) {
            ModelParams m = base;
            m.unflatten(p);
            Rng mask_rng(mask_key);
            return pretrain_step_gradients(cfg, m, batch, mask_rng).total;
        };
        Rng mask_rng(mask_key);
        x = base.flatten();
        g = pretrain_step_gradients(cfg, base, batch, mask_rng).grads.flatten();
        return true;
    });

    run.check("finetune_step", 12, [](Rng& rng, Vec& x, F& f, Vec& g) {
        constexpr std::size_t v = 8, d = 4, c = 3;
        const std::size_t pairs = 2 + rng.uniform_int(3);
        const TrainConfig cfg = detail::random_train_config(rng);
        const double gamma = rng.uniform(0.0, 1.0);
        const ModelParams clean = detail::random_model(v, d, d, c, rng);
        const ModelParams asr = detail::random_model(v, d, d, c, rng);
        const Batch batch = detail::random_batch(pairs, v, c, rng);
        const bool one_hot = rng.bernoulli(0.5);
        const PredictionCache cache_clean = detail::random_cache(batch, c, one_hot, rng);
        const PredictionCache cache_asr = detail::random_cache(batch, c, one_hot, rng);
        if (!detail::rows_clear_of_kinks(encode(clean, batch.clean_tokens).reps, cfg.margin()) ||
            !detail::rows_clear_of_kinks(encode(asr, batch.noisy_tokens).reps, cfg.margin()))
            return false;
        const std::size_t half = clean.parameter_count();
        f = [=](const Vec& p) {
            ModelParams mc = clean, ma = asr;
            mc.unflatten(Vec(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(half)));
            ma.unflatten(Vec(p.begin() + static_cast<std::ptrdiff_t>(half), p.end()));
            return finetune_step_gradients(cfg, mc, ma, batch, cache_clean, cache_asr, gamma).total;
        };
        const FinetuneStep step = finetune_step_gradients(cfg, clean, asr, batch, cache_clean, cache_asr, gamma);
        x = clean.flatten();
        const Vec xa = asr.flatten();
        x.insert(x.end(), xa.begin(), xa.end());
        g = step.grad_clean.flatten();
        const Vec ga = step.grad_asr.flatten();
        g.insert(g.end(), ga.begin(), ga.end());
        return true;
    });

    return run.report();
}

inline std::string format_gradcheck(const GradCheckReport& report) {
    std::string out;
    char line[160];
    for (const auto& e : report.entries) {
        std::snprintf(line, sizeof line, "%-32s instances=%zu max_rel_error=%.3e %s\n", e.name.c_str(), e.instances,
                      e.max_rel_error, e.max_rel_error < report.tolerance ? "ok" : "FAIL");
        out += line;
    }
    return out;
}

}  // namespace mllmcl
