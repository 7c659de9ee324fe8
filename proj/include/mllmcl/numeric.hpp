#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mllmcl/error.hpp"
#include "mllmcl/matrix.hpp"
#include "mllmcl/rng.hpp"

namespace mllmcl {

inline constexpr double kNormFloor = 1e-12;
inline constexpr double kProbFloor = 1e-12;

enum class Side : std::uint8_t { clean, noisy };

inline const char* to_string(Side side) { return side == Side::clean ? "clean" : "noisy"; }

struct RowOrigin {
    std::int64_t example_id = 0;
    Side side = Side::clean;
    friend bool operator==(const RowOrigin&, const RowOrigin&) = default;
};

/// Sentence representations for a batch. When `partner` is non-empty,
/// partner[i] is the row index of the positive counterpart of row i.
struct EmbeddingBatch {
    Matrix rows;
    std::vector<RowOrigin> origin;
    std::vector<std::size_t> partner;

    std::size_t size() const noexcept { return rows.rows(); }
    bool paired() const noexcept { return !partner.empty(); }
};

/// Stacks clean rows on top of noisy rows; row i and row i + N are positives.
inline EmbeddingBatch make_paired_batch(const Matrix& clean, const Matrix& noisy,
                                        std::span<const std::int64_t> example_ids) {
    if (!clean.same_shape(noisy) || example_ids.size() != clean.rows())
        fail(ErrorKind::shape_mismatch, "make_paired_batch: clean/noisy/id shapes differ");
    const std::size_t n = clean.rows();
    EmbeddingBatch batch;
    batch.rows = Matrix(2 * n, clean.cols());
    batch.origin.resize(2 * n);
    batch.partner.resize(2 * n);
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(clean.row(i).begin(), clean.row(i).end(), batch.rows.row(i).begin());
        std::copy(noisy.row(i).begin(), noisy.row(i).end(), batch.rows.row(n + i).begin());
        batch.origin[i] = {example_ids[i], Side::clean};
        batch.origin[n + i] = {example_ids[i], Side::noisy};
        batch.partner[i] = n + i;
        batch.partner[n + i] = i;
    }
    return batch;
}

inline EmbeddingBatch make_single_side_batch(const Matrix& rows, std::span<const std::int64_t> example_ids,
                                             Side side) {
    if (example_ids.size() != rows.rows())
        fail(ErrorKind::shape_mismatch, "make_single_side_batch: id count differs from row count");
    EmbeddingBatch batch;
    batch.rows = rows;
    batch.origin.resize(rows.rows());
    for (std::size_t i = 0; i < rows.rows(); ++i) batch.origin[i] = {example_ids[i], side};
    return batch;
}

/// Nonnegative entries summing to one.
class ProbVec {
public:
    ProbVec() = default;
    explicit ProbVec(Vec probs) : probs_(std::move(probs)) {
        double sum = 0.0;
        for (double p : probs_) {
            if (!(p >= 0.0 && p <= 1.0 + 1e-12))
                fail(ErrorKind::invalid_config, "probability entry outside [0,1]");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            fail(ErrorKind::invalid_config, "probabilities sum to " + std::to_string(sum));
    }

    static ProbVec one_hot(std::size_t dim, std::size_t index) {
        Vec v(dim, 0.0);
        v.at(index) = 1.0;
        return ProbVec(std::move(v));
    }

    std::size_t size() const noexcept { return probs_.size(); }
    double operator[](std::size_t i) const { return probs_[i]; }
    const Vec& values() const noexcept { return probs_; }
    operator std::span<const double>() const noexcept { return probs_; }

    friend bool operator==(const ProbVec&, const ProbVec&) = default;

private:
    Vec probs_;
};

// ---------------------------------------------------------------------------
// Similarities and distances

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        fail(ErrorKind::dimension_mismatch,
             "cosine_similarity: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
    const double na = norm(a);
    const double nb = norm(b);
    if (na <= kNormFloor || nb <= kNormFloor) fail(ErrorKind::zero_norm, "cosine_similarity: zero-norm input");
    return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

/// D = (1 + s) / 2, in [0, 1].
inline double normalized_distance(std::span<const double> a, std::span<const double> b) {
    return (1.0 + cosine_similarity(a, b)) / 2.0;
}

/// Rows scaled to unit length, with the original norms kept for backprop.
struct UnitRows {
    Matrix units;
    Vec norms;
};

inline UnitRows normalize_rows(const Matrix& rows) {
    UnitRows out{Matrix(rows.rows(), rows.cols()), Vec(rows.rows())};
    for (std::size_t i = 0; i < rows.rows(); ++i) {
        const double n = norm(rows.row(i));
        if (!(n > kNormFloor)) fail(ErrorKind::zero_norm, "row " + std::to_string(i) + " has zero norm");
        out.norms[i] = n;
        for (std::size_t k = 0; k < rows.cols(); ++k) out.units(i, k) = rows(i, k) / n;
    }
    return out;
}

/// Pairwise cosine similarities of unit rows; diagonal fixed to 1.
inline Matrix similarity_matrix(const UnitRows& unit) {
    const std::size_t m = unit.units.rows();
    Matrix s(m, m);
    for (std::size_t i = 0; i < m; ++i) {
        s(i, i) = 1.0;
        for (std::size_t j = i + 1; j < m; ++j) {
            const double v = std::clamp(dot(unit.units.row(i), unit.units.row(j)), -1.0, 1.0);
            s(i, j) = v;
            s(j, i) = v;
        }
    }
    return s;
}

/// Chain rule from dL/ds_ij (every entry treated as an independent input)
/// back to the unnormalized rows.
inline Matrix similarity_backward(const UnitRows& unit, const Matrix& grad_sim) {
    const std::size_t m = unit.units.rows();
    const std::size_t d = unit.units.cols();
    if (grad_sim.rows() != m || grad_sim.cols() != m)
        fail(ErrorKind::shape_mismatch, "similarity_backward: gradient must be MxM");
    Matrix grad(m, d);
    Vec gu(d);
    for (std::size_t i = 0; i < m; ++i) {
        std::fill(gu.begin(), gu.end(), 0.0);
        for (std::size_t j = 0; j < m; ++j) {
            const double w = grad_sim(i, j) + grad_sim(j, i);
            if (w == 0.0) continue;
            auto uj = unit.units.row(j);
            for (std::size_t k = 0; k < d; ++k) gu[k] += w * uj[k];
        }
        auto ui = unit.units.row(i);
        const double radial = dot(gu, ui);
        for (std::size_t k = 0; k < d; ++k) grad(i, k) = (gu[k] - radial * ui[k]) / unit.norms[i];
    }
    return grad;
}

/// Symmetric matrix of normalized distances with unit diagonal.
class DistanceMatrix {
public:
    DistanceMatrix() = default;
    explicit DistanceMatrix(Matrix entries) : entries_(std::move(entries)) {
        const std::size_t m = entries_.rows();
        if (entries_.cols() != m) fail(ErrorKind::shape_mismatch, "DistanceMatrix must be square");
        for (std::size_t i = 0; i < m; ++i) {
            if (entries_(i, i) != 1.0) fail(ErrorKind::invalid_config, "DistanceMatrix diagonal must be 1");
            for (std::size_t j = 0; j < m; ++j) {
                const double v = entries_(i, j);
                if (!(v >= 0.0 && v <= 1.0)) fail(ErrorKind::invalid_config, "DistanceMatrix entry outside [0,1]");
                if (std::abs(v - entries_(j, i)) > 1e-12)
                    fail(ErrorKind::invalid_config, "DistanceMatrix is not symmetric");
            }
        }
    }

    std::size_t m() const noexcept { return entries_.rows(); }
    double operator()(std::size_t i, std::size_t j) const { return entries_(i, j); }
    const Matrix& entries() const noexcept { return entries_; }

private:
    Matrix entries_;
};

inline DistanceMatrix distance_from_similarity(const Matrix& sim) {
    Matrix d(sim.rows(), sim.cols());
    for (std::size_t i = 0; i < sim.rows(); ++i)
        for (std::size_t j = 0; j < sim.cols(); ++j) d(i, j) = i == j ? 1.0 : (1.0 + sim(i, j)) / 2.0;
    return DistanceMatrix(std::move(d));
}

inline DistanceMatrix pairwise_distance_matrix(const Matrix& rows) {
    if (rows.rows() == 0) fail(ErrorKind::batch_too_small, "pairwise_distance_matrix: empty batch");
    return distance_from_similarity(similarity_matrix(normalize_rows(rows)));
}

inline DistanceMatrix pairwise_distance_matrix(const EmbeddingBatch& batch) {
    return pairwise_distance_matrix(batch.rows);
}

/// Chain rule from dL/dD_ij back to the rows (D = (1 + s) / 2).
inline Matrix distance_backward(const UnitRows& unit, const Matrix& grad_distance) {
    return similarity_backward(unit, 0.5 * grad_distance);
}

// ---------------------------------------------------------------------------
// Distributions

inline ProbVec softmax_with_temperature(std::span<const double> logits, double tau) {
    if (!(tau > 0.0)) fail(ErrorKind::non_positive_temperature, "softmax temperature must be > 0");
    if (logits.empty()) fail(ErrorKind::dimension_mismatch, "softmax of empty logits");
    if (!all_finite(logits)) fail(ErrorKind::invalid_config, "softmax logits must be finite");
    double peak = logits[0] / tau;
    for (double z : logits) peak = std::max(peak, z / tau);
    Vec p(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] / tau - peak);
        sum += p[i];
    }
    for (double& v : p) v /= sum;
    return ProbVec(std::move(p));
}

/// Gradient through a (temperature 1) softmax: dz = p * (g - <p, g>).
inline Vec softmax_backward(std::span<const double> probs, std::span<const double> grad_probs) {
    const double inner = dot(probs, grad_probs);
    Vec out(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) out[i] = probs[i] * (grad_probs[i] - inner);
    return out;
}

/// KL(p || q) in nats; 0 * ln 0 = 0 and q is floored at 1e-12.
inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size())
        fail(ErrorKind::dimension_mismatch,
             "kl_divergence: " + std::to_string(p.size()) + " vs " + std::to_string(q.size()));
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        acc += p[i] * std::log(p[i] / std::max(q[i], kProbFloor));
    }
    return acc;
}

inline double js_divergence(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size())
        fail(ErrorKind::dimension_mismatch,
             "js_divergence: " + std::to_string(p.size()) + " vs " + std::to_string(q.size()));
    Vec mid(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) mid[i] = 0.5 * (p[i] + q[i]);
    return 0.5 * kl_divergence(p, mid) + 0.5 * kl_divergence(q, mid);
}

// ---------------------------------------------------------------------------
// Gradient checking

struct FiniteDifferenceReport {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

/// Central differences; relative error is |a - n| / max(|a|, |n|, abs_floor).
inline FiniteDifferenceReport finite_difference_check(const std::function<double(const Vec&)>& f,
                                                      const Vec& point, const Vec& analytic_grad,
                                                      double h = 1e-5, double abs_floor = 1e-8) {
    if (point.size() != analytic_grad.size())
        fail(ErrorKind::dimension_mismatch, "finite_difference_check: gradient size differs from point");
    FiniteDifferenceReport report;
    Vec x = point;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + h;
        const double up = f(x);
        x[i] = saved - h;
        const double down = f(x);
        x[i] = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double a = analytic_grad[i];
        const double denom = std::max({std::abs(a), std::abs(numeric), abs_floor});
        const double rel = std::abs(a - numeric) / denom;
        if (i == 0 || rel > report.max_rel_error) report = {rel, i, a, numeric};
    }
    return report;
}

// ---------------------------------------------------------------------------
// PCA

struct PcaResult {
    Vec mean;
    Matrix components;  // k x d, unit rows
    Vec variances;      // eigenvalues of the 1/n covariance, descending
    std::vector<Vec> projected;
};

namespace detail {

inline Matrix square(const Matrix& a) {
    const std::size_t n = a.rows();
    Matrix out(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < n; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) out(i, j) += aik * a(k, j);
        }
    return out;
}

inline Vec mat_vec(const Matrix& a, const Vec& x) {
    Vec out(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) out[i] = dot(a.row(i), x);
    return out;
}

}  // namespace detail

/// Power iteration with deflation on the sample covariance. Each step
/// multiplies by C^4 (two squarings), which has the same eigenvectors and
/// a wider spectral gap.
inline PcaResult pca_fit(const std::vector<Vec>& points, std::size_t k, std::size_t max_iterations = 200,
                         double tolerance = 1e-10) {
    if (points.size() < 2) fail(ErrorKind::insufficient_points, "pca needs at least 2 points");
    const std::size_t d = points.front().size();
    if (k == 0 || k > d) fail(ErrorKind::dimension_mismatch, "pca: k must be in [1, dim]");
    for (const Vec& p : points)
        if (p.size() != d) fail(ErrorKind::dimension_mismatch, "pca: ragged points");

    PcaResult result;
    result.mean.assign(d, 0.0);
    for (const Vec& p : points)
        for (std::size_t j = 0; j < d; ++j) result.mean[j] += p[j];
    for (double& v : result.mean) v /= static_cast<double>(points.size());

    Matrix cov(d, d);
    for (const Vec& p : points)
        for (std::size_t i = 0; i < d; ++i) {
            const double ci = p[i] - result.mean[i];
            for (std::size_t j = 0; j < d; ++j) cov(i, j) += ci * (p[j] - result.mean[j]);
        }
    cov *= 1.0 / static_cast<double>(points.size());

    result.components = Matrix(k, d);
    Rng rng(0x9e3779b97f4a7c15ULL);
    for (std::size_t c = 0; c < k; ++c) {
        const Matrix accel = detail::square(detail::square(cov));
        Vec v(d);
        for (double& x : v) x = rng.uniform(-1.0, 1.0);
        // Keep the start vector outside the span of earlier components.
        for (std::size_t prev = 0; prev < c; ++prev) {
            const double proj = dot(v, result.components.row(prev));
            for (std::size_t j = 0; j < d; ++j) v[j] -= proj * result.components(prev, j);
        }
        double n = norm(v);
        for (double& x : v) x /= n;
        for (std::size_t it = 0; it < max_iterations; ++it) {
            Vec next = detail::mat_vec(accel, v);
            n = norm(next);
            if (n <= std::numeric_limits<double>::min()) break;  // remaining spectrum is zero
            double change = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                next[j] /= n;
                change = std::max(change, std::abs(next[j] - v[j]));
            }
            v = std::move(next);
            if (change < tolerance) break;
        }
        // Sign convention: largest-magnitude coordinate is positive.
        std::size_t arg = 0;
        for (std::size_t j = 1; j < d; ++j)
            if (std::abs(v[j]) > std::abs(v[arg])) arg = j;
        if (v[arg] < 0.0)
            for (double& x : v) x = -x;
        const Vec cv = detail::mat_vec(cov, v);
        const double lambda = dot(v, cv);
        result.variances.push_back(lambda);
        for (std::size_t j = 0; j < d; ++j) result.components(c, j) = v[j];
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) cov(i, j) -= lambda * v[i] * v[j];
    }

    result.projected.reserve(points.size());
    for (const Vec& p : points) {
        Vec out(k);
        for (std::size_t c = 0; c < k; ++c) {
            double acc = 0.0;
            for (std::size_t j = 0; j < d; ++j) acc += (p[j] - result.mean[j]) * result.components(c, j);
            out[c] = acc;
        }
        result.projected.push_back(std::move(out));
    }
    return result;
}

inline std::vector<Vec> pca_project(const std::vector<Vec>& points, std::size_t k) {
    return pca_fit(points, k).projected;
}

}  // namespace mllmcl
