#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mllmcl/corpus.hpp"
#include "mllmcl/error.hpp"
#include "mllmcl/matrix.hpp"
#include "mllmcl/numeric.hpp"

namespace mllmcl {

/// A scalar loss and its gradient with respect to each differentiable
/// input, in the order the loss function documents.
struct LossResult {
    double value = 0.0;
    std::vector<Matrix> grads;
};

struct MarginConfig {
    double delta_plus = 0.2;
    double delta_minus = 0.5;

    void validate() const {
        if (!(delta_plus > 0.0 && delta_plus < delta_minus && delta_minus < 1.0))
            fail(ErrorKind::invalid_margin, "margin must satisfy 0 < delta_plus < delta_minus < 1 (got " +
                                                std::to_string(delta_plus) + ", " + std::to_string(delta_minus) + ")");
    }
};

enum class Reduction { sum, mean };

namespace detail {

inline void require_temperature(double tau, const char* what) {
    if (!(tau > 0.0)) fail(ErrorKind::non_positive_temperature, std::string(what) + " temperature must be > 0");
}

/// log sum_k exp(x_k) over the entries selected by `use`.
template <class Pred>
double log_sum_exp(std::span<const double> x, Pred use) {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < x.size(); ++k)
        if (use(k)) peak = std::max(peak, x[k]);
    double acc = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k)
        if (use(k)) acc += std::exp(x[k] - peak);
    return peak + std::log(acc);
}

/// Row-wise log-softmax and softmax of logits / tau.
inline void log_softmax_row(std::span<const double> logits, double tau, Vec& log_probs, Vec& probs) {
    log_probs.resize(logits.size());
    probs.resize(logits.size());
    Vec scaled(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) scaled[k] = logits[k] / tau;
    const double lse = log_sum_exp(scaled, [](std::size_t) { return true; });
    for (std::size_t k = 0; k < logits.size(); ++k) {
        log_probs[k] = scaled[k] - lse;
        probs[k] = std::exp(log_probs[k]);
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Contrastive terms

/// Paired InfoNCE over 2N rows: each row's positive is its partner, and the
/// denominator runs over every other row of the batch, the positive
/// included. grads = {dL/d rows}.
inline LossResult self_supervised_contrastive(const EmbeddingBatch& batch, double tau_sc,
                                              bool allow_single_pair = false) {
    detail::require_temperature(tau_sc, "self-supervised contrastive");
    const std::size_t m = batch.size();
    if (!batch.paired() || batch.partner.size() != m || m % 2 != 0)
        fail(ErrorKind::shape_mismatch, "self_supervised_contrastive needs a fully paired batch of 2N rows");
    if (m < (allow_single_pair ? 2u : 4u))
        fail(ErrorKind::batch_too_small, "self_supervised_contrastive needs N >= 2 pairs (got M = " +
                                             std::to_string(m) + ")");
    const UnitRows unit = normalize_rows(batch.rows);
    const Matrix sim = similarity_matrix(unit);

    LossResult out;
    Matrix grad_sim(m, m);
    Vec scaled(m);
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t pos = batch.partner[i];
        for (std::size_t k = 0; k < m; ++k) scaled[k] = sim(i, k) / tau_sc;
        const double lse = detail::log_sum_exp(scaled, [i](std::size_t k) { return k != i; });
        total += lse - scaled[pos];
        for (std::size_t k = 0; k < m; ++k) {
            if (k == i) continue;
            const double p = std::exp(scaled[k] - lse);
            grad_sim(i, k) = (p - (k == pos ? 1.0 : 0.0)) / (static_cast<double>(m) * tau_sc);
        }
    }
    out.value = total / static_cast<double>(m);
    out.grads.push_back(similarity_backward(unit, grad_sim));
    return out;
}

/// Label-aware contrastive loss over the N rows of one side, normalized by
/// 1/N. Rows without a same-label partner contribute nothing.
/// grads = {dL/d rows}.
inline LossResult supervised_contrastive(const Matrix& rows, std::span<const std::int32_t> labels, double tau_c) {
    detail::require_temperature(tau_c, "supervised contrastive");
    const std::size_t n = rows.rows();
    if (labels.size() != n) fail(ErrorKind::shape_mismatch, "supervised_contrastive: one label per row required");
    if (n < 2) fail(ErrorKind::batch_too_small, "supervised_contrastive needs at least 2 rows");
    const UnitRows unit = normalize_rows(rows);
    const Matrix sim = similarity_matrix(unit);

    LossResult out;
    Matrix grad_sim(n, n);
    Vec scaled(n);
    double total = 0.0;
    const double scale = 1.0 / (static_cast<double>(n) * tau_c);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t positives = 0;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i && labels[j] == labels[i]) ++positives;
        if (positives == 0) continue;
        for (std::size_t k = 0; k < n; ++k) scaled[k] = sim(i, k) / tau_c;
        const double lse = detail::log_sum_exp(scaled, [i](std::size_t k) { return k != i; });
        for (std::size_t j = 0; j < n; ++j)
            if (j != i && labels[j] == labels[i]) total += lse - scaled[j];
        for (std::size_t k = 0; k < n; ++k) {
            if (k == i) continue;
            const double p = std::exp(scaled[k] - lse);
            const double indicator = labels[k] == labels[i] ? 1.0 : 0.0;
            grad_sim(i, k) = (static_cast<double>(positives) * p - indicator) * scale;
        }
    }
    out.value = total / static_cast<double>(n);
    out.grads.push_back(similarity_backward(unit, grad_sim));
    return out;
}

inline LossResult supervised_contrastive(const EmbeddingBatch& batch, std::span<const std::int32_t> labels,
                                         double tau_c) {
    return supervised_contrastive(batch.rows, labels, tau_c);
}

/// Sum over all entries of |min((D - d+)(D - d-), 0)|; only entries strictly
/// inside (d+, d-) contribute. grads = {dL/dD}, zero at the kinks.
inline LossResult distance_polarization(const Matrix& distances, const MarginConfig& margin) {
    margin.validate();
    if (distances.rows() != distances.cols()) fail(ErrorKind::shape_mismatch, "distance matrix must be square");
    if (!all_finite(distances.data())) fail(ErrorKind::invalid_config, "distance matrix has non-finite entries");
    const double lo = margin.delta_plus;
    const double hi = margin.delta_minus;
    LossResult out;
    Matrix grad(distances.rows(), distances.cols());
    double total = 0.0;
    for (std::size_t i = 0; i < distances.rows(); ++i)
        for (std::size_t j = 0; j < distances.cols(); ++j) {
            const double d = distances(i, j);
            if (d > lo && d < hi) {
                total += (d - lo) * (hi - d);
                grad(i, j) = lo + hi - 2.0 * d;
            }
        }
    out.value = total;
    out.grads.push_back(std::move(grad));
    return out;
}

inline LossResult distance_polarization(const DistanceMatrix& distances, const MarginConfig& margin) {
    return distance_polarization(distances.entries(), margin);
}

/// The regularizer evaluated on the pairwise distances of `rows`, with the
/// gradient carried back through D = (1 + cos) / 2. grads = {dL/d rows}.
inline LossResult distance_polarization_on_rows(const Matrix& rows, const MarginConfig& margin) {
    const UnitRows unit = normalize_rows(rows);
    const DistanceMatrix d = distance_from_similarity(similarity_matrix(unit));
    LossResult out = distance_polarization(d.entries(), margin);
    out.grads[0] = distance_backward(unit, out.grads[0]);
    return out;
}

// ---------------------------------------------------------------------------
// Distribution terms

namespace detail {

inline Matrix to_matrix(const std::vector<ProbVec>& probs) {
    if (probs.empty()) return {};
    Matrix m(probs.size(), probs.front().size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i].size() != m.cols()) fail(ErrorKind::dimension_mismatch, "ragged probability list");
        for (std::size_t k = 0; k < m.cols(); ++k) m(i, k) = probs[i][k];
    }
    return m;
}

}  // namespace detail

/// Sum over pairs of JS(p_i || q_i). grads = {dL/dp, dL/dq}; the caller
/// carries them through each model's softmax.
inline LossResult mutual_learning(const Matrix& probs_clean, const Matrix& probs_noisy) {
    if (!probs_clean.same_shape(probs_noisy))
        fail(ErrorKind::dimension_mismatch, "mutual_learning: probability lists differ in shape");
    if (probs_clean.rows() == 0) fail(ErrorKind::dimension_mismatch, "mutual_learning: empty probability lists");
    LossResult out;
    Matrix gp(probs_clean.rows(), probs_clean.cols());
    Matrix gq(probs_clean.rows(), probs_clean.cols());
    double total = 0.0;
    for (std::size_t i = 0; i < probs_clean.rows(); ++i) {
        auto p = probs_clean.row(i);
        auto q = probs_noisy.row(i);
        total += js_divergence(p, q);
        for (std::size_t k = 0; k < p.size(); ++k) {
            const double mid = std::max(0.5 * (p[k] + q[k]), kProbFloor);
            gp(i, k) = 0.5 * std::log(std::max(p[k], kProbFloor) / mid);
            gq(i, k) = 0.5 * std::log(std::max(q[k], kProbFloor) / mid);
        }
    }
    out.value = total;
    out.grads.push_back(std::move(gp));
    out.grads.push_back(std::move(gq));
    return out;
}

inline LossResult mutual_learning(const std::vector<ProbVec>& probs_clean, const std::vector<ProbVec>& probs_noisy) {
    if (probs_clean.size() != probs_noisy.size())
        fail(ErrorKind::dimension_mismatch, "mutual_learning: lists differ in length");
    return mutual_learning(detail::to_matrix(probs_clean), detail::to_matrix(probs_noisy));
}

/// Whether cached targets are label one-hots (used as-is) or earlier
/// predictions (tempered before comparison).
enum class TargetKind { one_hot_labels, predictions };

/// softmax(ln(max(q, 1e-12)) / tau)
inline Vec temper_distribution(std::span<const double> probs, double tau) {
    Vec logs(probs.size());
    for (std::size_t k = 0; k < probs.size(); ++k) logs[k] = std::log(std::max(probs[k], kProbFloor));
    return softmax_with_temperature(logs, tau).values();
}

/// (1/N) sum_i tau^2 KL(target_i || softmax(z_i / tau)). grads = {dL/dz}.
inline LossResult self_distillation(const Matrix& previous, const Matrix& current_logits, double tau_d,
                                    TargetKind kind) {
    detail::require_temperature(tau_d, "self-distillation");
    if (!previous.same_shape(current_logits))
        fail(ErrorKind::dimension_mismatch, "self_distillation: cached and current shapes differ");
    const std::size_t n = previous.rows();
    if (n == 0) fail(ErrorKind::dimension_mismatch, "self_distillation: empty batch");
    LossResult out;
    Matrix grad(n, previous.cols());
    Vec log_probs, student;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Vec target = kind == TargetKind::one_hot_labels
                               ? Vec(previous.row(i).begin(), previous.row(i).end())
                               : temper_distribution(previous.row(i), tau_d);
        detail::log_softmax_row(current_logits.row(i), tau_d, log_probs, student);
        total += tau_d * tau_d * kl_divergence(target, student);
        for (std::size_t k = 0; k < target.size(); ++k)
            grad(i, k) = tau_d * (student[k] - target[k]) / static_cast<double>(n);
    }
    out.value = total / static_cast<double>(n);
    out.grads.push_back(std::move(grad));
    return out;
}

inline LossResult self_distillation(const std::vector<ProbVec>& previous, const Matrix& current_logits, double tau_d,
                                    TargetKind kind) {
    if (previous.size() != current_logits.rows())
        fail(ErrorKind::dimension_mismatch, "self_distillation: cache and logits differ in length");
    return self_distillation(detail::to_matrix(previous), current_logits, tau_d, kind);
}

/// -sum_i ln softmax(z_i)[y_i] (or the mean). grads = {dL/dz}.
inline LossResult cross_entropy(const Matrix& logits, std::span<const std::int32_t> labels,
                                Reduction reduction = Reduction::sum) {
    if (labels.size() != logits.rows()) fail(ErrorKind::shape_mismatch, "cross_entropy: one label per row required");
    const double scale = reduction == Reduction::mean && !labels.empty() ? 1.0 / static_cast<double>(labels.size()) : 1.0;
    LossResult out;
    Matrix grad(logits.rows(), logits.cols());
    Vec log_probs, probs;
    double total = 0.0;
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const std::int32_t y = labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= logits.cols())
            fail(ErrorKind::label_out_of_range, "label " + std::to_string(y) + " with " +
                                                    std::to_string(logits.cols()) + " classes");
        detail::log_softmax_row(logits.row(i), 1.0, log_probs, probs);
        total -= log_probs[static_cast<std::size_t>(y)];
        for (std::size_t k = 0; k < probs.size(); ++k)
            grad(i, k) = scale * (probs[k] - (k == static_cast<std::size_t>(y) ? 1.0 : 0.0));
    }
    out.value = scale * total;
    out.grads.push_back(std::move(grad));
    return out;
}

/// Mean cross-entropy over masked slots. grads = {dL/d logits}.
inline LossResult mlm_loss(const Matrix& logits, std::span<const TokenId> targets) {
    if (targets.empty()) fail(ErrorKind::empty_targets, "mlm_loss needs at least one masked slot");
    std::vector<std::int32_t> labels(targets.begin(), targets.end());
    return cross_entropy(logits, labels, Reduction::mean);
}

// ---------------------------------------------------------------------------
// Composition

/// sum_k w_k * L_k for terms whose gradients have identical layouts.
inline LossResult linear_combination(std::initializer_list<std::pair<double, const LossResult*>> terms) {
    LossResult out;
    bool first = true;
    for (const auto& [w, term] : terms) {
        out.value += w * term->value;
        if (first) {
            out.grads = term->grads;
            for (Matrix& g : out.grads) g *= w;
            first = false;
            continue;
        }
        if (term->grads.size() != out.grads.size())
            fail(ErrorKind::shape_mismatch, "linear_combination: gradient layouts differ");
        for (std::size_t k = 0; k < out.grads.size(); ++k) out.grads[k].add_scaled(term->grads[k], w);
    }
    return out;
}

/// Sum of losses over disjoint inputs: values add, gradient lists concatenate.
inline LossResult join(std::initializer_list<std::pair<double, const LossResult*>> terms) {
    LossResult out;
    for (const auto& [w, term] : terms) {
        out.value += w * term->value;
        for (const Matrix& g : term->grads) out.grads.push_back(w * g);
    }
    return out;
}

/// lambda_pt * (L_sc + lambda_reg * L_reg) + (1 - lambda_pt) * L_mlm.
/// Gradient list: scaled grads of l_sc, then l_reg, then l_mlm.
inline LossResult compose_pretrain(const LossResult& l_sc, const LossResult& l_reg, const LossResult& l_mlm,
                                   double lambda_reg, double lambda_pt) {
    return join({{lambda_pt, &l_sc}, {lambda_pt * lambda_reg, &l_reg}, {1.0 - lambda_pt, &l_mlm}});
}

/// L_ce + alpha * L_mut + beta * L_creg + gamma * L_d, with l_creg already
/// holding both sides' regularized contrastive terms.
/// Gradient list: scaled grads of l_ce, l_mut, l_creg, l_d in that order.
inline LossResult compose_finetune(const LossResult& l_ce, const LossResult& l_mut, const LossResult& l_creg,
                                   const LossResult& l_d, double alpha, double beta, double gamma) {
    return join({{1.0, &l_ce}, {alpha, &l_mut}, {beta, &l_creg}, {gamma, &l_d}});
}

}  // namespace mllmcl
