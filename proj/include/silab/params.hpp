#ifndef SILAB_PARAMS_HPP
#define SILAB_PARAMS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "silab/error.hpp"
#include "silab/tensor.hpp"

namespace silab {

struct ParamGroup {
    std::string name;
    Tensor value;

    bool operator==(const ParamGroup&) const = default;
};

/// Trainable parameters as an ordered list of named groups. Each group is one
/// scale-invariant weight tensor; the concatenation of all groups is the point that
/// lives on the sphere in sphere mode.
class ParamVector {
public:
    ParamVector() = default;
    explicit ParamVector(std::vector<ParamGroup> groups) : groups_(std::move(groups)) {}

    std::vector<ParamGroup>& groups() { return groups_; }
    const std::vector<ParamGroup>& groups() const { return groups_; }
    std::size_t group_count() const { return groups_.size(); }

    std::size_t size() const {
        std::size_t n = 0;
        for (const auto& g : groups_) n += g.value.size();
        return n;
    }

    double squared_norm() const {
        double s = 0.0;
        for (const auto& g : groups_) s += g.value.squared_norm();
        return s;
    }
    double global_norm() const { return std::sqrt(squared_norm()); }

    std::vector<double> flat() const {
        std::vector<double> out;
        out.reserve(size());
        for (const auto& g : groups_) out.insert(out.end(), g.value.data.begin(), g.value.data.end());
        return out;
    }

    void assign_flat(std::span<const double> values) {
        if (values.size() != size()) throw ConfigError("assign_flat: length mismatch");
        std::size_t k = 0;
        for (auto& g : groups_)
            for (double& v : g.value.data) v = values[k++];
    }

    /// Same partition, all zeros.
    ParamVector zeros_like() const {
        ParamVector out = *this;
        for (auto& g : out.groups_) std::fill(g.value.data.begin(), g.value.data.end(), 0.0);
        return out;
    }

    bool same_partition(const ParamVector& other) const {
        if (groups_.size() != other.groups_.size()) return false;
        for (std::size_t i = 0; i < groups_.size(); ++i) {
            if (groups_[i].name != other.groups_[i].name ||
                groups_[i].value.shape != other.groups_[i].value.shape)
                return false;
        }
        return true;
    }

    void scale(double factor) {
        for (auto& g : groups_)
            for (double& v : g.value.data) v *= factor;
    }

    /// this += factor * other
    void axpy(double factor, const ParamVector& other) {
        require_same_partition(other, "axpy");
        for (std::size_t i = 0; i < groups_.size(); ++i) {
            auto& a = groups_[i].value.data;
            const auto& b = other.groups_[i].value.data;
            for (std::size_t k = 0; k < a.size(); ++k) a[k] += factor * b[k];
        }
    }

    double dot(const ParamVector& other) const {
        require_same_partition(other, "dot");
        double s = 0.0;
        for (std::size_t i = 0; i < groups_.size(); ++i) {
            const auto& a = groups_[i].value.data;
            const auto& b = other.groups_[i].value.data;
            for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
        }
        return s;
    }

    bool all_finite() const {
        for (const auto& g : groups_)
            if (!g.value.all_finite()) return false;
        return true;
    }

    const ParamGroup* find(const std::string& name) const {
        for (const auto& g : groups_)
            if (g.name == name) return &g;
        return nullptr;
    }

    bool operator==(const ParamVector&) const = default;

    void require_same_partition(const ParamVector& other, const char* what) const {
        if (!same_partition(other)) {
            throw ConfigError(std::string(what) + ": parameter partitions differ");
        }
    }

private:
    std::vector<ParamGroup> groups_;
};

/// Euclidean norm of every group, in group order.
inline std::vector<std::pair<std::string, double>> group_norms(const ParamVector& p) {
    std::vector<std::pair<std::string, double>> out;
    out.reserve(p.group_count());
    for (const auto& g : p.groups()) out.emplace_back(g.name, g.value.norm());
    return out;
}

/// max / min over group norms; infinity when some group is zero.
inline double norm_spread(const ParamVector& p) {
    double lo = INFINITY, hi = 0.0;
    for (const auto& g : p.groups()) {
        const double n = g.value.norm();
        lo = std::min(lo, n);
        hi = std::max(hi, n);
    }
    return lo > 0.0 ? hi / lo : INFINITY;
}

/// Rescales p so that its global norm is `radius`.
inline void project_to_sphere(ParamVector& p, double radius) {
    const double n = p.global_norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
        throw DegenerateStepError("cannot project a vector of norm " + std::to_string(n));
    }
    p.scale(radius / n);
}

} // namespace silab

#endif
