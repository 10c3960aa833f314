#ifndef SILAB_OPTIM_HPP
#define SILAB_OPTIM_HPP

#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "silab/error.hpp"
#include "silab/params.hpp"

namespace silab {

struct Phase {
    double lr = 0.0;
    std::size_t epochs = 0;

    bool operator==(const Phase&) const = default;
};

/// Piecewise-constant learning rate: each phase runs a fixed LR for a number of epochs.
struct Schedule {
    std::vector<Phase> phases;

    void validate() const {
        if (phases.empty()) throw ConfigError("schedule: no phases");
        for (std::size_t i = 0; i < phases.size(); ++i) {
            const auto& p = phases[i];
            if (!(p.lr > 0.0) || !std::isfinite(p.lr)) {
                throw ConfigError("schedule: phase " + std::to_string(i) + " has non-positive or non-finite lr");
            }
            if (p.epochs == 0) throw ConfigError("schedule: phase " + std::to_string(i) + " has zero epochs");
        }
    }

    std::size_t total_epochs() const {
        std::size_t n = 0;
        for (const auto& p : phases) n += p.epochs;
        return n;
    }

    /// (phase index, lr) for a 0-based epoch within this schedule.
    std::pair<std::size_t, double> at(std::size_t epoch) const {
        for (std::size_t i = 0; i < phases.size(); ++i) {
            if (epoch < phases[i].epochs) return {i, phases[i].lr};
            epoch -= phases[i].epochs;
        }
        throw ConfigError("schedule: epoch past end");
    }
};

enum class OptMode { sphere_sgd, plain_sgd, momentum_wd };

inline OptMode parse_opt_mode(const std::string& s) {
    if (s == "sphere_sgd") return OptMode::sphere_sgd;
    if (s == "plain_sgd") return OptMode::plain_sgd;
    if (s == "momentum_wd") return OptMode::momentum_wd;
    throw ConfigError("unknown optimizer mode '" + s + "'");
}
inline const char* to_string(OptMode m) {
    switch (m) {
    case OptMode::sphere_sgd: return "sphere_sgd";
    case OptMode::plain_sgd: return "plain_sgd";
    case OptMode::momentum_wd: return "momentum_wd";
    }
    return "?";
}

struct OptState {
    OptMode mode = OptMode::sphere_sgd;
    double radius = 1.0;
    double momentum = 0.0;
    double weight_decay = 0.0;
    std::optional<ParamVector> velocity;  // allocated lazily in momentum mode

    static OptState sphere(double radius) { return {OptMode::sphere_sgd, radius, 0.0, 0.0, {}}; }
    static OptState plain() { return {OptMode::plain_sgd, 1.0, 0.0, 0.0, {}}; }
    static OptState practical(double momentum = 0.9, double weight_decay = 5e-4) {
        return {OptMode::momentum_wd, 1.0, momentum, weight_decay, {}};
    }

    void validate() const {
        if (mode == OptMode::sphere_sgd) {
            if (!(radius > 0.0)) throw ConfigError("optimizer: sphere radius must be positive");
            if (momentum != 0.0 || weight_decay != 0.0) {
                throw ConfigError("optimizer: sphere mode requires momentum = 0 and weight_decay = 0");
            }
        }
        if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("optimizer: momentum must lie in [0, 1)");
        if (!(weight_decay >= 0.0)) throw ConfigError("optimizer: weight_decay must be non-negative");
    }
};

/// theta' = r (theta - lr g) / |theta - lr g|.
inline ParamVector projected_sgd_step(const ParamVector& params, const ParamVector& grad, double lr,
                                      double radius) {
    ParamVector out = params;
    out.axpy(-lr, grad);
    const double n = out.global_norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
        throw DegenerateStepError("projected step: pre-projection norm is " + std::to_string(n));
    }
    out.scale(radius / n);
    return out;
}

inline ParamVector sgd_step(const ParamVector& params, const ParamVector& grad, double lr) {
    ParamVector out = params;
    out.axpy(-lr, grad);
    return out;
}

/// v' = mu v + g + lambda theta;  theta' = theta - lr v'. No projection.
inline ParamVector momentum_wd_step(OptState& state, const ParamVector& params, const ParamVector& grad,
                                    double lr) {
    if (state.mode != OptMode::momentum_wd) throw ConfigError("momentum_wd_step: optimizer not in practical mode");
    if (!state.velocity) state.velocity = params.zeros_like();
    ParamVector& v = *state.velocity;
    v.scale(state.momentum);
    v.axpy(1.0, grad);
    v.axpy(state.weight_decay, params);
    ParamVector out = params;
    out.axpy(-lr, v);
    return out;
}

/// One optimizer update in whatever mode `state` selects.
inline ParamVector optimizer_step(OptState& state, const ParamVector& params, const ParamVector& grad,
                                  double lr) {
    switch (state.mode) {
    case OptMode::sphere_sgd: return projected_sgd_step(params, grad, lr, state.radius);
    case OptMode::plain_sgd: return sgd_step(params, grad, lr);
    case OptMode::momentum_wd: return momentum_wd_step(state, params, grad, lr);
    }
    throw ConfigError("unknown optimizer mode");
}

struct ELRReport {
    double global_elr = 0.0;
    std::vector<std::pair<std::string, double>> per_group;
};

/// lr / |theta|^2, globally and for every group.
inline ELRReport effective_lr(double lr, const ParamVector& params) {
    ELRReport r;
    for (const auto& g : params.groups()) {
        const double sq = g.value.squared_norm();
        if (!(sq > 0.0)) throw DiagnosticError("effective_lr: group '" + g.name + "' has zero norm");
        r.per_group.emplace_back(g.name, lr / sq);
    }
    const double total = params.squared_norm();
    if (!(total > 0.0)) throw DiagnosticError("effective_lr: zero parameter norm");
    r.global_elr = lr / total;
    return r;
}

} // namespace silab

#endif
