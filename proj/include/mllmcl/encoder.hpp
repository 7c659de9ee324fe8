#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mllmcl/corpus.hpp"
#include "mllmcl/error.hpp"
#include "mllmcl/matrix.hpp"
#include "mllmcl/numeric.hpp"
#include "mllmcl/rng.hpp"

namespace mllmcl {

struct ModelDims {
    std::size_t vocab_size = 0;
    std::size_t embed_dim = 0;
    std::size_t out_dim = 0;
    std::size_t num_classes = 0;
    friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// Trainable arrays of one encoder plus its classification and MLM heads.
/// Biases are stored as 1 x n matrices so every array can be visited
/// uniformly (optimizer, checkpoints, gradient checks).
struct ModelParams {
    ModelDims dims;
    std::uint64_t seed = 0;

    Matrix token_embeddings;  // vocab x embed
    Matrix hidden_weight;     // embed x embed
    Matrix hidden_bias;       // 1 x embed
    Matrix output_weight;     // out x embed
    Matrix output_bias;       // 1 x out
    Matrix classifier_weight; // classes x out
    Matrix classifier_bias;   // 1 x classes
    Matrix mlm_weight;        // vocab x out
    Matrix mlm_bias;          // 1 x vocab

    static constexpr std::size_t kNumArrays = 9;

    std::array<Matrix*, kNumArrays> arrays() {
        return {&token_embeddings, &hidden_weight, &hidden_bias,       &output_weight, &output_bias,
                &classifier_weight, &classifier_bias, &mlm_weight, &mlm_bias};
    }
    std::array<const Matrix*, kNumArrays> arrays() const {
        return {&token_embeddings, &hidden_weight, &hidden_bias,       &output_weight, &output_bias,
                &classifier_weight, &classifier_bias, &mlm_weight, &mlm_bias};
    }

    static ModelParams zeros(const ModelDims& dims) {
        ModelParams p;
        p.dims = dims;
        p.token_embeddings = Matrix(dims.vocab_size, dims.embed_dim);
        p.hidden_weight = Matrix(dims.embed_dim, dims.embed_dim);
        p.hidden_bias = Matrix(1, dims.embed_dim);
        p.output_weight = Matrix(dims.out_dim, dims.embed_dim);
        p.output_bias = Matrix(1, dims.out_dim);
        p.classifier_weight = Matrix(dims.num_classes, dims.out_dim);
        p.classifier_bias = Matrix(1, dims.num_classes);
        p.mlm_weight = Matrix(dims.vocab_size, dims.out_dim);
        p.mlm_bias = Matrix(1, dims.vocab_size);
        return p;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const Matrix* m : arrays()) n += m->size();
        return n;
    }

    Vec flatten() const {
        Vec flat;
        flat.reserve(parameter_count());
        for (const Matrix* m : arrays()) flat.insert(flat.end(), m->data().begin(), m->data().end());
        return flat;
    }

    void unflatten(const Vec& flat) {
        if (flat.size() != parameter_count()) fail(ErrorKind::shape_mismatch, "unflatten: wrong parameter count");
        std::size_t offset = 0;
        for (Matrix* m : arrays()) {
            std::copy(flat.begin() + static_cast<std::ptrdiff_t>(offset),
                      flat.begin() + static_cast<std::ptrdiff_t>(offset + m->size()), m->data().begin());
            offset += m->size();
        }
    }

    bool same_shape(const ModelParams& other) const {
        auto a = arrays();
        auto b = other.arrays();
        for (std::size_t i = 0; i < kNumArrays; ++i)
            if (!a[i]->same_shape(*b[i])) return false;
        return true;
    }

    friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

inline ModelParams init_params(std::size_t vocab_size, std::size_t embed_dim, std::size_t out_dim,
                               std::size_t num_classes, std::uint64_t seed) {
    if (vocab_size == 0 || embed_dim == 0 || out_dim == 0 || num_classes == 0)
        fail(ErrorKind::invalid_config, "model dimensions must be positive");
    ModelParams p = ModelParams::zeros({vocab_size, embed_dim, out_dim, num_classes});
    p.seed = seed;
    Rng rng({seed, 0x1417});
    for (Matrix* m : p.arrays())
        for (double& v : m->data()) v = rng.uniform(-0.1, 0.1);
    return p;
}

/// Deep copy; ModelParams owns all of its storage so a plain copy suffices.
inline ModelParams clone_params(const ModelParams& p) { return p; }

// ---------------------------------------------------------------------------
// Forward

/// Forward activations kept for the backward pass.
struct Encoding {
    TokenMatrix tokens;
    std::vector<std::size_t> counts;  // non-PAD tokens per row
    Matrix pooled;                    // mean token embedding, M x embed
    Matrix hidden;                    // tanh layer output, M x embed
    Matrix reps;                      // sentence representations, M x out
};

inline Encoding encode(const ModelParams& params, const TokenMatrix& tokens) {
    const std::size_t d = params.dims.embed_dim;
    Encoding enc;
    enc.tokens = tokens;
    enc.counts.assign(tokens.rows, 0);
    enc.pooled = Matrix(tokens.rows, d);
    for (std::size_t r = 0; r < tokens.rows; ++r) {
        auto pooled = enc.pooled.row(r);
        for (std::size_t c = 0; c < tokens.cols; ++c) {
            const TokenId id = tokens(r, c);
            if (id < 0 || static_cast<std::size_t>(id) >= params.dims.vocab_size)
                fail(ErrorKind::token_id_out_of_range,
                     "token id " + std::to_string(id) + " at row " + std::to_string(r) + " (vocab " +
                         std::to_string(params.dims.vocab_size) + ")");
            if (id == kPad) continue;
            ++enc.counts[r];
            auto emb = params.token_embeddings.row(static_cast<std::size_t>(id));
            for (std::size_t k = 0; k < d; ++k) pooled[k] += emb[k];
        }
        if (enc.counts[r] > 0) {
            const double inv = 1.0 / static_cast<double>(enc.counts[r]);
            for (double& v : pooled) v *= inv;
        }
    }
    enc.hidden = affine_rows(enc.pooled, params.hidden_weight, params.hidden_bias.row(0));
    for (double& v : enc.hidden.data()) v = std::tanh(v);
    enc.reps = affine_rows(enc.hidden, params.output_weight, params.output_bias.row(0));
    return enc;
}

inline Matrix classify(const ModelParams& params, const Matrix& reps) {
    return affine_rows(reps, params.classifier_weight, params.classifier_bias.row(0));
}

inline Matrix classify(const ModelParams& params, const EmbeddingBatch& batch) { return classify(params, batch.rows); }

struct MaskedSlot {
    std::size_t row = 0;
    std::size_t position = 0;
};

/// One |V|-dim logit vector per masked slot, scored from the pooled
/// representation of the slot's row.
inline Matrix mlm_logits(const ModelParams& params, const Encoding& masked, const std::vector<MaskedSlot>& slots) {
    Matrix out(slots.size(), params.dims.vocab_size);
    for (std::size_t s = 0; s < slots.size(); ++s) {
        const auto [row, pos] = slots[s];
        if (row >= masked.tokens.rows || pos >= masked.tokens.cols || masked.tokens(row, pos) == kPad)
            fail(ErrorKind::position_out_of_range,
                 "masked slot (" + std::to_string(row) + ", " + std::to_string(pos) + ") is not a token position");
        auto rep = masked.reps.row(row);
        for (std::size_t v = 0; v < params.dims.vocab_size; ++v)
            out(s, v) = params.mlm_bias(0, v) + dot(params.mlm_weight.row(v), rep);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Backward

/// Upstream gradients for one forward pass. Any member may be left empty.
struct Upstream {
    Matrix reps;                     // dL/d reps, M x out
    Matrix class_logits;             // dL/d classifier logits, M x classes
    Matrix mlm_logits;               // dL/d MLM logits, slots x vocab
    std::vector<MaskedSlot> mlm_slots;
};

/// Adds dL/dparams for one forward pass into `grads`.
inline void accumulate_backward(const ModelParams& params, const Encoding& enc, const Upstream& up,
                                ModelParams& grads) {
    if (!grads.same_shape(params)) fail(ErrorKind::shape_mismatch, "gradient buffer shape differs from params");
    const std::size_t m = enc.tokens.rows;
    const std::size_t d = params.dims.embed_dim;
    const std::size_t o = params.dims.out_dim;

    Matrix grad_reps(m, o);
    if (!up.reps.empty()) {
        if (up.reps.rows() != m || up.reps.cols() != o) fail(ErrorKind::shape_mismatch, "upstream reps gradient shape");
        grad_reps += up.reps;
    }
    if (!up.class_logits.empty()) {
        const std::size_t c = params.dims.num_classes;
        if (up.class_logits.rows() != m || up.class_logits.cols() != c)
            fail(ErrorKind::shape_mismatch, "upstream classifier gradient shape");
        for (std::size_t r = 0; r < m; ++r) {
            auto rep = enc.reps.row(r);
            for (std::size_t k = 0; k < c; ++k) {
                const double g = up.class_logits(r, k);
                if (g == 0.0) continue;
                grads.classifier_bias(0, k) += g;
                auto gw = grads.classifier_weight.row(k);
                auto w = params.classifier_weight.row(k);
                for (std::size_t j = 0; j < o; ++j) {
                    gw[j] += g * rep[j];
                    grad_reps(r, j) += g * w[j];
                }
            }
        }
    }
    if (!up.mlm_logits.empty()) {
        const std::size_t v = params.dims.vocab_size;
        if (up.mlm_logits.rows() != up.mlm_slots.size() || up.mlm_logits.cols() != v)
            fail(ErrorKind::shape_mismatch, "upstream MLM gradient shape");
        for (std::size_t s = 0; s < up.mlm_slots.size(); ++s) {
            const std::size_t r = up.mlm_slots[s].row;
            if (r >= m) fail(ErrorKind::position_out_of_range, "MLM slot row out of range");
            auto rep = enc.reps.row(r);
            for (std::size_t t = 0; t < v; ++t) {
                const double g = up.mlm_logits(s, t);
                if (g == 0.0) continue;
                grads.mlm_bias(0, t) += g;
                auto gw = grads.mlm_weight.row(t);
                auto w = params.mlm_weight.row(t);
                for (std::size_t j = 0; j < o; ++j) {
                    gw[j] += g * rep[j];
                    grad_reps(r, j) += g * w[j];
                }
            }
        }
    }

    Vec grad_hidden(d), grad_pre(d), grad_pooled(d);
    for (std::size_t r = 0; r < m; ++r) {
        auto gr = grad_reps.row(r);
        auto hidden = enc.hidden.row(r);
        std::fill(grad_hidden.begin(), grad_hidden.end(), 0.0);
        for (std::size_t j = 0; j < o; ++j) {
            const double g = gr[j];
            if (g == 0.0) continue;
            grads.output_bias(0, j) += g;
            auto gw = grads.output_weight.row(j);
            auto w = params.output_weight.row(j);
            for (std::size_t k = 0; k < d; ++k) {
                gw[k] += g * hidden[k];
                grad_hidden[k] += g * w[k];
            }
        }
        for (std::size_t k = 0; k < d; ++k) grad_pre[k] = grad_hidden[k] * (1.0 - hidden[k] * hidden[k]);
        auto pooled = enc.pooled.row(r);
        std::fill(grad_pooled.begin(), grad_pooled.end(), 0.0);
        for (std::size_t j = 0; j < d; ++j) {
            const double g = grad_pre[j];
            if (g == 0.0) continue;
            grads.hidden_bias(0, j) += g;
            auto gw = grads.hidden_weight.row(j);
            auto w = params.hidden_weight.row(j);
            for (std::size_t k = 0; k < d; ++k) {
                gw[k] += g * pooled[k];
                grad_pooled[k] += g * w[k];
            }
        }
        if (enc.counts[r] == 0) continue;
        const double inv = 1.0 / static_cast<double>(enc.counts[r]);
        for (std::size_t c = 0; c < enc.tokens.cols; ++c) {
            const TokenId id = enc.tokens(r, c);
            if (id == kPad) continue;
            auto ge = grads.token_embeddings.row(static_cast<std::size_t>(id));
            for (std::size_t k = 0; k < d; ++k) ge[k] += grad_pooled[k] * inv;
        }
    }
}

inline ModelParams backward(const ModelParams& params, const Encoding& enc, const Upstream& up) {
    ModelParams grads = ModelParams::zeros(params.dims);
    accumulate_backward(params, enc, up, grads);
    return grads;
}

// ---------------------------------------------------------------------------
// Checkpoints: one text header line, then every array as little-endian
// float64 in the fixed field order of ModelParams::arrays().

namespace detail {

inline void write_f64_le(std::ostream& out, double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    out.write(bytes, 8);
}

inline double read_f64_le(std::istream& in) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

}  // namespace detail

inline constexpr const char* kCheckpointMagic = "mllmcl-checkpoint";

inline void save_checkpoint(const ModelParams& params, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io_error, "cannot open " + path + " for writing");
    out << kCheckpointMagic << " v1 vocab_size=" << params.dims.vocab_size << " embed_dim=" << params.dims.embed_dim
        << " out_dim=" << params.dims.out_dim << " num_classes=" << params.dims.num_classes
        << " seed=" << params.seed << '\n';
    for (const Matrix* m : params.arrays())
        for (double v : m->data()) detail::write_f64_le(out, v);
    if (!out) fail(ErrorKind::io_error, "write failed for " + path);
}

inline ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io_error, "cannot open " + path);
    std::string header;
    std::getline(in, header);
    std::istringstream fields(header);
    std::string magic, version;
    fields >> magic >> version;
    if (magic != kCheckpointMagic || version != "v1") fail(ErrorKind::parse_error, path + ": not a checkpoint file");
    ModelDims dims;
    std::uint64_t seed = 0;
    std::string kv;
    while (fields >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) fail(ErrorKind::parse_error, path + ": malformed header field " + kv);
        const std::string key = kv.substr(0, eq);
        const std::uint64_t value = std::stoull(kv.substr(eq + 1));
        if (key == "vocab_size") dims.vocab_size = value;
        else if (key == "embed_dim") dims.embed_dim = value;
        else if (key == "out_dim") dims.out_dim = value;
        else if (key == "num_classes") dims.num_classes = value;
        else if (key == "seed") seed = value;
        else fail(ErrorKind::parse_error, path + ": unknown header field " + key);
    }
    if (dims.vocab_size == 0 || dims.embed_dim == 0 || dims.out_dim == 0 || dims.num_classes == 0)
        fail(ErrorKind::parse_error, path + ": header is missing dimensions");
    ModelParams p = ModelParams::zeros(dims);
    p.seed = seed;
    for (Matrix* m : p.arrays())
        for (double& v : m->data()) v = detail::read_f64_le(in);
    if (!in) fail(ErrorKind::io_error, path + ": truncated checkpoint");
    if (in.peek() != std::char_traits<char>::eof()) fail(ErrorKind::parse_error, path + ": trailing bytes");
    return p;
}

}  // namespace mllmcl
