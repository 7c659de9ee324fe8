#pragma once

// Index-by-index reference implementations used as test oracles. They share
// no code with the library beyond the Matrix container.

#include <cmath>
#include <cstdint>
#include <vector>

#include "mllmcl/matrix.hpp"

namespace oracle {

using mllmcl::Matrix;

inline double cos_sim(const Matrix& x, std::size_t i, std::size_t j) {
    double dot = 0, ni = 0, nj = 0;
    for (std::size_t k = 0; k < x.cols(); ++k) {
        dot += x(i, k) * x(j, k);
        ni += x(i, k) * x(i, k);
        nj += x(j, k) * x(j, k);
    }
    return dot / (std::sqrt(ni) * std::sqrt(nj));
}

inline double distance(const Matrix& x, std::size_t i, std::size_t j) {
    return i == j ? 1.0 : (1.0 + cos_sim(x, i, j)) / 2.0;
}

// Rows 0..N-1 are clean, N..2N-1 noisy; row i pairs with row i +/- N.
inline double self_supervised_contrastive(const Matrix& x, double tau) {
    const std::size_t m = x.rows(), n = m / 2;
    double total = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t pos = i < n ? i + n : i - n;
        double denom = 0;
        for (std::size_t k = 0; k < m; ++k)
            if (k != i) denom += std::exp(cos_sim(x, i, k) / tau);
        total += -std::log(std::exp(cos_sim(x, i, pos) / tau) / denom);
    }
    return total / static_cast<double>(m);
}

inline double distance_polarization(const Matrix& d, double lo, double hi) {
    double total = 0;
    for (std::size_t i = 0; i < d.rows(); ++i)
        for (std::size_t j = 0; j < d.cols(); ++j) total += std::abs(std::min((d(i, j) - lo) * (d(i, j) - hi), 0.0));
    return total;
}

inline double supervised_contrastive(const Matrix& x, const std::vector<std::int32_t>& y, double tau) {
    const std::size_t n = x.rows();
    double total = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i || y[i] != y[j]) continue;
            double denom = 0;
            for (std::size_t k = 0; k < n; ++k)
                if (k != i) denom += std::exp(cos_sim(x, i, k) / tau);
            total += -std::log(std::exp(cos_sim(x, i, j) / tau) / denom);
        }
    return total / static_cast<double>(n);
}

inline double kl(const std::vector<double>& p, const std::vector<double>& q) {
    double s = 0;
    for (std::size_t k = 0; k < p.size(); ++k)
        if (p[k] > 0) s += p[k] * std::log(p[k] / q[k]);
    return s;
}

inline double mutual_learning(const Matrix& p, const Matrix& q) {
    double total = 0;
    for (std::size_t i = 0; i < p.rows(); ++i) {
        std::vector<double> a(p.cols()), b(p.cols()), m(p.cols());
        for (std::size_t k = 0; k < p.cols(); ++k) {
            a[k] = p(i, k);
            b[k] = q(i, k);
            m[k] = 0.5 * (a[k] + b[k]);
        }
        total += 0.5 * kl(a, m) + 0.5 * kl(b, m);
    }
    return total;
}

inline double margin_occupancy(const Matrix& d, double lo, double hi) {
    const std::size_t m = d.rows();
    if (m < 2) return 0.0;
    std::size_t inside = 0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            if (i != j && lo < d(i, j) && d(i, j) < hi) ++inside;
    return static_cast<double>(inside) / static_cast<double>(m * (m - 1));
}

}  // namespace oracle
