#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "mllmcl/encoder.hpp"
#include "mllmcl/error.hpp"

namespace mllmcl {

/// Cyclical annealing: `ramp_fraction` (R) of every `cycle_length` (G)
/// iterations ramps linearly from 0 to 1, the rest of the cycle holds 1.
struct AnnealConfig {
    double ramp_fraction = 0.5;
    std::int64_t cycle_length = 5000;

    void validate() const {
        if (!(ramp_fraction > 0.0 && ramp_fraction <= 1.0))
            fail(ErrorKind::invalid_config, "anneal ramp fraction R must lie in (0, 1]");
        if (cycle_length < 1) fail(ErrorKind::invalid_config, "anneal cycle length G must be >= 1");
    }
};

/// gamma at 1-based iteration t.
inline double annealing_coefficient(std::int64_t t, const AnnealConfig& cfg) {
    cfg.validate();
    if (t < 1) fail(ErrorKind::invalid_config, "annealing iteration must be >= 1");
    const auto r = static_cast<double>((t - 1) % cfg.cycle_length);
    const double ramp = cfg.ramp_fraction * static_cast<double>(cfg.cycle_length);
    return r <= ramp ? r / ramp : 1.0;
}

/// Linear warm-up to peak_lr over warmup_steps, constant afterwards.
inline double warmup_lr(std::int64_t t, double peak_lr, std::int64_t warmup_steps) {
    if (t < 1 || warmup_steps < 1) fail(ErrorKind::invalid_config, "warmup_lr needs t >= 1 and warmup_steps >= 1");
    if (t >= warmup_steps) return peak_lr;
    return static_cast<double>(t) / static_cast<double>(warmup_steps) * peak_lr;
}

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-8;
};

struct OptimState {
    ModelParams first_moment;
    ModelParams second_moment;
    std::int64_t step = 0;

    static OptimState for_params(const ModelParams& params) {
        return {ModelParams::zeros(params.dims), ModelParams::zeros(params.dims), 0};
    }
};

/// Bias-corrected Adam update of every array in `params`.
inline void adam_step(OptimState& state, ModelParams& params, const ModelParams& grads, double lr,
                      const AdamConfig& cfg = {}) {
    if (!(lr > 0.0)) fail(ErrorKind::invalid_config, "learning rate must be > 0");
    if (!params.same_shape(grads) || !params.same_shape(state.first_moment) ||
        !params.same_shape(state.second_moment))
        fail(ErrorKind::shape_mismatch, "adam_step: params, grads and moments differ in shape");
    ++state.step;
    const double correction1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double correction2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    auto p = params.arrays();
    auto g = grads.arrays();
    auto m = state.first_moment.arrays();
    auto v = state.second_moment.arrays();
    for (std::size_t a = 0; a < ModelParams::kNumArrays; ++a) {
        auto& pd = p[a]->data();
        const auto& gd = g[a]->data();
        auto& md = m[a]->data();
        auto& vd = v[a]->data();
        for (std::size_t i = 0; i < pd.size(); ++i) {
            md[i] = cfg.beta1 * md[i] + (1.0 - cfg.beta1) * gd[i];
            vd[i] = cfg.beta2 * vd[i] + (1.0 - cfg.beta2) * gd[i] * gd[i];
            const double m_hat = md[i] / correction1;
            const double v_hat = vd[i] / correction2;
            pd[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
    }
}

}  // namespace mllmcl
