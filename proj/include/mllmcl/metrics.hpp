#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "mllmcl/config.hpp"
#include "mllmcl/error.hpp"
#include "mllmcl/losses.hpp"
#include "mllmcl/numeric.hpp"

namespace mllmcl {

inline double evaluate_accuracy(std::span<const std::int32_t> predictions, std::span<const std::int32_t> gold) {
    if (predictions.size() != gold.size() || gold.empty())
        fail(ErrorKind::length_mismatch, "accuracy needs equal, nonempty prediction and gold lists");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < gold.size(); ++i)
        if (predictions[i] == gold[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(gold.size());
}

/// Accuracy restricted to each gold class; classes without examples get 0.
inline std::vector<double> per_class_accuracy(std::span<const std::int32_t> predictions,
                                              std::span<const std::int32_t> gold, std::size_t num_classes) {
    if (predictions.size() != gold.size()) fail(ErrorKind::length_mismatch, "per_class_accuracy: length mismatch");
    std::vector<double> hits(num_classes, 0.0), totals(num_classes, 0.0);
    for (std::size_t i = 0; i < gold.size(); ++i) {
        const auto y = static_cast<std::size_t>(gold[i]);
        if (y >= num_classes) fail(ErrorKind::label_out_of_range, "gold label out of range");
        totals[y] += 1.0;
        if (predictions[i] == gold[i]) hits[y] += 1.0;
    }
    for (std::size_t c = 0; c < num_classes; ++c) hits[c] = totals[c] > 0.0 ? hits[c] / totals[c] : 0.0;
    return hits;
}

/// Fraction of off-diagonal entries strictly inside (delta_plus, delta_minus).
inline double margin_occupancy(const Matrix& distances, const MarginConfig& margin) {
    margin.validate();
    const std::size_t m = distances.rows();
    if (m < 2) return 0.0;
    std::size_t inside = 0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j)
            if (i != j && distances(i, j) > margin.delta_plus && distances(i, j) < margin.delta_minus) ++inside;
    return static_cast<double>(inside) / static_cast<double>(m * (m - 1));
}

inline double margin_occupancy(const DistanceMatrix& distances, const MarginConfig& margin) {
    return margin_occupancy(distances.entries(), margin);
}

struct ClusterDistances {
    double mean_intra_pair = 0.0;
    double mean_inter_class = 0.0;
};

/// Mean D over aligned clean/noisy pairs, and mean D over row pairs whose
/// labels differ. `row_labels` has one label per row.
inline ClusterDistances cluster_distances(const EmbeddingBatch& batch, std::span<const std::int32_t> row_labels) {
    if (!batch.paired()) fail(ErrorKind::shape_mismatch, "cluster_distances needs pair alignment");
    if (row_labels.size() != batch.size()) fail(ErrorKind::length_mismatch, "cluster_distances: one label per row");
    const DistanceMatrix d = pairwise_distance_matrix(batch);
    ClusterDistances out;
    double intra = 0.0, inter = 0.0;
    std::size_t n_intra = 0, n_inter = 0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        if (batch.partner[i] > i) {
            intra += d(i, batch.partner[i]);
            ++n_intra;
        }
        for (std::size_t j = i + 1; j < batch.size(); ++j)
            if (row_labels[i] != row_labels[j]) {
                inter += d(i, j);
                ++n_inter;
            }
    }
    out.mean_intra_pair = n_intra ? intra / static_cast<double>(n_intra) : 0.0;
    out.mean_inter_class = n_inter ? inter / static_cast<double>(n_inter) : 0.0;
    return out;
}

struct MetricsReport {
    double accuracy_noisy = 0.0;
    double accuracy_clean = 0.0;
    double margin_occupancy = 0.0;
    double mean_intra_pair_distance = 0.0;
    double mean_inter_distance = 0.0;
    std::vector<double> per_class_accuracy;
};

inline std::string format_metrics(const MetricsReport& r) {
    std::string out;
    auto line = [&](const std::string& key, double v) { out += key + " = " + detail::format_double(v) + "\n"; };
    line("accuracy_noisy", r.accuracy_noisy);
    line("accuracy_clean", r.accuracy_clean);
    line("margin_occupancy", r.margin_occupancy);
    line("mean_intra_pair_distance", r.mean_intra_pair_distance);
    line("mean_inter_distance", r.mean_inter_distance);
    for (std::size_t c = 0; c < r.per_class_accuracy.size(); ++c)
        line("per_class_accuracy_" + std::to_string(c), r.per_class_accuracy[c]);
    return out;
}

inline void save_metrics(const MetricsReport& r, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io_error, "cannot open " + path + " for writing");
    out << format_metrics(r);
    if (!out) fail(ErrorKind::io_error, "write failed for " + path);
}

/// Two-component PCA of the batch rows written as
/// `example_id,side,label,pc1,pc2`, one line per row.
inline void export_projection(const EmbeddingBatch& batch, std::span<const std::int32_t> row_labels,
                              const std::string& path) {
    if (batch.size() < 2) fail(ErrorKind::insufficient_points, "projection needs at least 2 rows");
    if (row_labels.size() != batch.size()) fail(ErrorKind::length_mismatch, "export_projection: one label per row");
    std::vector<Vec> points;
    for (std::size_t i = 0; i < batch.size(); ++i) points.emplace_back(batch.rows.row(i).begin(), batch.rows.row(i).end());
    const auto projected = pca_project(points, std::min<std::size_t>(2, batch.rows.cols()));
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io_error, "cannot open " + path + " for writing");
    out << "example_id,side,label,pc1,pc2\n";
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const double pc2 = projected[i].size() > 1 ? projected[i][1] : 0.0;
        out << batch.origin[i].example_id << ',' << to_string(batch.origin[i].side) << ',' << row_labels[i] << ','
            << detail::format_double(projected[i][0]) << ',' << detail::format_double(pc2) << '\n';
    }
    if (!out) fail(ErrorKind::io_error, "write failed for " + path);
}

}  // namespace mllmcl
