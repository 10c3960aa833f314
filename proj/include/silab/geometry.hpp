#ifndef SILAB_GEOMETRY_HPP
#define SILAB_GEOMETRY_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "silab/data.hpp"
#include "silab/error.hpp"
#include "silab/net.hpp"
#include "silab/params.hpp"
#include "silab/text.hpp"

namespace silab {

/// arccos(<a, b> / (|a| |b|)) over the concatenated trainable parameters, with the
/// cosine clamped to [-1, 1].
inline double angular_distance(const ParamVector& a, const ParamVector& b) {
    const double na = a.global_norm(), nb = b.global_norm();
    if (!(na > 0.0) || !(nb > 0.0)) throw DiagnosticError("angular_distance: zero-norm argument");
    const double c = std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
    return std::acos(c);
}

/// w1 * a + w2 * b, coordinatewise.
inline ParamVector combine(const ParamVector& a, double w1, const ParamVector& b, double w2) {
    a.require_same_partition(b, "interpolate");
    ParamVector out = a;
    for (std::size_t g = 0; g < out.group_count(); ++g) {
        auto& dst = out.groups()[g].value.data;
        const auto& x = a.groups()[g].value.data;
        const auto& y = b.groups()[g].value.data;
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = w1 * x[i] + w2 * y[i];
    }
    return out;
}

/// alpha * a + (1 - alpha) * b. Alpha weights the first argument; no reprojection.
inline ParamVector interpolate(const ParamVector& a, const ParamVector& b, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("interpolate: alpha must lie in [0, 1]");
    return combine(a, alpha, b, 1.0 - alpha);
}

struct ProfilePoint {
    double alpha = 0.0;
    double train_error = std::numeric_limits<double>::quiet_NaN();
    double test_error = std::numeric_limits<double>::quiet_NaN();
};

struct GeometryReport {
    double angle_rad = 0.0;
    double barrier_train = 0.0;
    std::optional<double> barrier_test;
    std::vector<ProfilePoint> profile;
    std::vector<std::string> warnings;
};

/// Weight pairs (a_k, b_k) = (k/(n-1), (n-1-k)/(n-1)). Both weights are computed
/// directly, so swapping the endpoints maps point k onto point n-1-k bit-exactly.
inline std::vector<std::pair<double, double>> alpha_grid(std::size_t points) {
    if (points < 3) throw ConfigError("barrier grid needs at least 3 points");
    std::vector<std::pair<double, double>> g(points);
    const auto d = static_cast<double>(points - 1);
    for (std::size_t k = 0; k < points; ++k) {
        g[k] = {static_cast<double>(k) / d, static_cast<double>(points - 1 - k) / d};
    }
    return g;
}

struct BarrierResult {
    double barrier = 0.0;
    double argmax_alpha = 0.0;
    std::vector<std::optional<double>> errors;  // per grid point; empty when excluded
};

/// max over the grid of L(a p1 + b p2) - a L(p1) - b L(p2) for a generic error measure.
/// `error` returning nullopt excludes that grid point (e.g. a zero-norm group).
inline BarrierResult barrier_over_grid(const ParamVector& p1, const ParamVector& p2,
                                       const std::function<std::optional<double>(const ParamVector&)>& error,
                                       std::size_t points) {
    const auto grid = alpha_grid(points);
    BarrierResult r;
    r.errors.resize(points);
    for (std::size_t k = 0; k < points; ++k) {
        const auto [a, b] = grid[k];
        if (k == 0) {
            r.errors[k] = error(p2);
        } else if (k + 1 == points) {
            r.errors[k] = error(p1);
        } else {
            r.errors[k] = error(combine(p1, a, p2, b));
        }
    }
    const auto& e1 = r.errors.back();
    const auto& e2 = r.errors.front();
    if (!e1 || !e2) throw DiagnosticError("linear barrier: an endpoint cannot be evaluated");
    r.barrier = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < points; ++k) {
        if (!r.errors[k]) continue;
        const auto [a, b] = grid[k];
        const double excess = *r.errors[k] - (a * *e1 + b * *e2);
        if (excess > r.barrier) {
            r.barrier = excess;
            r.argmax_alpha = a;
        }
    }
    return r;
}

inline bool has_zero_group(const ParamVector& p) {
    for (const auto& g : p.groups())
        if (!(g.value.squared_norm() > 0.0)) return true;
    return false;
}

/// Angle plus train/test classification-error barriers and the interpolation profile
/// between two solutions of `net`.
inline GeometryReport linear_barrier(const Net& net, const ParamVector& p1, const ParamVector& p2,
                                     const Dataset& train_ds, const Dataset* test_ds, std::size_t grid_points = 21,
                                     std::size_t eval_batch = 128) {
    GeometryReport rep;
    rep.angle_rad = angular_distance(p1, p2);
    const auto grid = alpha_grid(grid_points);

    auto make_error = [&](const Dataset& ds) {
        return [&net, &ds, eval_batch](const ParamVector& p) -> std::optional<double> {
            if (has_zero_group(p)) return std::nullopt;
            return net.evaluate(p, ds, eval_batch).error;
        };
    };

    const BarrierResult tr = barrier_over_grid(p1, p2, make_error(train_ds), grid_points);
    rep.barrier_train = tr.barrier;
    std::optional<BarrierResult> te;
    if (test_ds) {
        te = barrier_over_grid(p1, p2, make_error(*test_ds), grid_points);
        rep.barrier_test = te->barrier;
    }
    for (std::size_t k = 0; k < grid_points; ++k) {
        ProfilePoint pt;
        pt.alpha = grid[k].first;
        if (tr.errors[k]) pt.train_error = *tr.errors[k];
        if (te && te->errors[k]) pt.test_error = *te->errors[k];
        if (!tr.errors[k]) {
            rep.warnings.push_back("alpha=" + format_double(pt.alpha) +
                                   " excluded: interpolated point has a zero-norm group");
        }
        rep.profile.push_back(pt);
    }
    return rep;
}

inline std::string geometry_csv(const std::vector<std::pair<std::string, GeometryReport>>& pairs) {
    std::string out = "pair,alpha,train_error,test_error\n";
    for (const auto& [id, rep] : pairs) {
        for (const auto& p : rep.profile) {
            out += id + "," + format_double(p.alpha) + "," + format_double(p.train_error) + "," +
                   format_double(p.test_error) + "\n";
        }
    }
    return out;
}

} // namespace silab

#endif
