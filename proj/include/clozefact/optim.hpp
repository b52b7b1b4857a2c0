#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "clozefact/tensor.hpp"

namespace clozefact {

// Anything whose trainable tensors can be enumerated in a fixed order.
template <typename P>
concept TensorPack = requires(P& p, const P& cp) {
    { p.tensors() } -> std::same_as<std::vector<Matrix*>>;
    { cp.tensors() } -> std::same_as<std::vector<const Matrix*>>;
};

struct AdamWHyper {
    double base_lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.01;

    void validate() const {
        if (!(base_lr > 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) ||
            !(epsilon > 0.0) || !(weight_decay >= 0.0)) {
            throw std::invalid_argument("AdamWHyper: out-of-range hyperparameter");
        }
    }
};

template <TensorPack P>
struct AdamWState {
    P m;
    P v;
    std::size_t t = 0;

    // Moments start at zero with the parameter layout.
    explicit AdamWState(const P& params) : m(params), v(params) {
        for (Matrix* x : m.tensors()) {
            x->fill(0.0);
        }
        for (Matrix* x : v.tensors()) {
            x->fill(0.0);
        }
    }
};

// One decoupled-weight-decay Adam update:
//   theta <- theta - lr * wd * theta - lr * mhat / (sqrt(vhat) + eps)
// Gradients are checked for finiteness before anything is modified.
template <TensorPack P>
void adamw_step(P& params, const P& grads, AdamWState<P>& state, const AdamWHyper& hyper,
                double lr) {
    if (!(lr >= 0.0)) {
        throw std::invalid_argument("adamw_step: negative learning rate");
    }
    auto ps = params.tensors();
    const auto gs = grads.tensors();
    auto ms = state.m.tensors();
    auto vs = state.v.tensors();
    if (ps.size() != gs.size() || ps.size() != ms.size() || ps.size() != vs.size()) {
        throw std::invalid_argument("adamw_step: tensor count mismatch");
    }
    for (std::size_t i = 0; i < ps.size(); ++i) {
        if (!ps[i]->same_shape(*gs[i]) || !ps[i]->same_shape(*ms[i]) ||
            !ps[i]->same_shape(*vs[i])) {
            throw std::invalid_argument("adamw_step: shape mismatch in tensor " +
                                        std::to_string(i));
        }
        if (!all_finite(gs[i]->values())) {
            throw std::domain_error("adamw_step: non-finite gradient in tensor " +
                                    std::to_string(i));
        }
    }
    state.t += 1;
    const double t = static_cast<double>(state.t);
    const double bc1 = 1.0 - std::pow(hyper.beta1, t);
    const double bc2 = 1.0 - std::pow(hyper.beta2, t);
    const double decay = 1.0 - lr * hyper.weight_decay;
    for (std::size_t i = 0; i < ps.size(); ++i) {
        auto p = ps[i]->values();
        auto g = gs[i]->values();
        auto m = ms[i]->values();
        auto v = vs[i]->values();
        for (std::size_t j = 0; j < p.size(); ++j) {
            m[j] = hyper.beta1 * m[j] + (1.0 - hyper.beta1) * g[j];
            v[j] = hyper.beta2 * v[j] + (1.0 - hyper.beta2) * g[j] * g[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] = p[j] * decay - lr * mhat / (std::sqrt(vhat) + hyper.epsilon);
        }
    }
}

enum class ScheduleKind { WarmupLinear, WarmupCosine, Cyclic };

struct ScheduleConfig {
    ScheduleKind kind = ScheduleKind::WarmupLinear;
    std::size_t warmup_steps = 0;
    double peak_lr = 1e-4;
    std::size_t total_steps = 1;
    std::size_t cycles = 1;

    void validate() const {
        if (warmup_steps >= total_steps) {
            throw std::invalid_argument("ScheduleConfig: warmup_steps must be < total_steps");
        }
        if (!(peak_lr > 0.0)) {
            throw std::invalid_argument("ScheduleConfig: peak_lr must be positive");
        }
        if (cycles < 1) {
            throw std::invalid_argument("ScheduleConfig: cycles must be >= 1");
        }
    }
};

namespace detail {

inline void check_step(std::size_t step, const ScheduleConfig& cfg) {
    cfg.validate();
    if (step > cfg.total_steps) {
        throw std::out_of_range("schedule step " + std::to_string(step) + " beyond total " +
                                std::to_string(cfg.total_steps));
    }
}

inline double ramp(std::size_t step, std::size_t warmup, double peak) {
    return peak * static_cast<double>(step) / static_cast<double>(warmup);
}

} // namespace detail

// 0 -> peak linearly over warmup, then peak -> 0 linearly at total_steps.
inline double lr_warmup_linear(std::size_t step, const ScheduleConfig& cfg) {
    detail::check_step(step, cfg);
    if (step < cfg.warmup_steps) {
        return detail::ramp(step, cfg.warmup_steps, cfg.peak_lr);
    }
    return cfg.peak_lr * static_cast<double>(cfg.total_steps - step) /
           static_cast<double>(cfg.total_steps - cfg.warmup_steps);
}

// 0 -> peak linearly over warmup, then half-cosine from peak to 0.
inline double lr_warmup_cosine(std::size_t step, const ScheduleConfig& cfg) {
    detail::check_step(step, cfg);
    if (step < cfg.warmup_steps) {
        return detail::ramp(step, cfg.warmup_steps, cfg.peak_lr);
    }
    const double frac = static_cast<double>(step - cfg.warmup_steps) /
                        static_cast<double>(cfg.total_steps - cfg.warmup_steps);
    return cfg.peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

inline std::size_t cycle_length(const ScheduleConfig& cfg) {
    if (cfg.cycles == 0 || cfg.total_steps % cfg.cycles != 0) {
        throw std::invalid_argument("lr_cyclic: total_steps " + std::to_string(cfg.total_steps) +
                                    " not divisible by cycles " + std::to_string(cfg.cycles));
    }
    const std::size_t len = cfg.total_steps / cfg.cycles;
    if (len < 2) {
        throw std::invalid_argument("lr_cyclic: cycles must span at least 2 steps each");
    }
    return len;
}

// Ramp length inside one cycle: the first 10% of it, at least one step.
inline std::size_t cyclic_ramp_steps(const ScheduleConfig& cfg) {
    return std::max<std::size_t>(1, cycle_length(cfg) / 10);
}

// total_steps split into `cycles` equal segments, each a warmup-cosine
// shape. Step 0 and every cycle boundary sit at LR 0; a boundary step is the
// last step of the cycle it closes.
inline double lr_cyclic(std::size_t step, const ScheduleConfig& cfg) {
    const std::size_t len = cycle_length(cfg);
    if (step > cfg.total_steps) {
        throw std::out_of_range("schedule step " + std::to_string(step) + " beyond total " +
                                std::to_string(cfg.total_steps));
    }
    if (!(cfg.peak_lr > 0.0)) {
        throw std::invalid_argument("ScheduleConfig: peak_lr must be positive");
    }
    std::size_t local = step % len;
    if (local == 0 && step != 0) {
        local = len;
    }
    const std::size_t ramp_len = cyclic_ramp_steps(cfg);
    if (local < ramp_len) {
        return detail::ramp(local, ramp_len, cfg.peak_lr);
    }
    const double frac =
        static_cast<double>(local - ramp_len) / static_cast<double>(len - ramp_len);
    return cfg.peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

inline double learning_rate(std::size_t step, const ScheduleConfig& cfg) {
    switch (cfg.kind) {
    case ScheduleKind::WarmupLinear: return lr_warmup_linear(step, cfg);
    case ScheduleKind::WarmupCosine: return lr_warmup_cosine(step, cfg);
    case ScheduleKind::Cyclic: return lr_cyclic(step, cfg);
    }
    return 0.0;
}

} // namespace clozefact
