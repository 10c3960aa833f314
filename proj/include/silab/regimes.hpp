#ifndef SILAB_REGIMES_HPP
#define SILAB_REGIMES_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "silab/error.hpp"
#include "silab/train.hpp"

namespace silab {

enum class Regime { R1_convergence, R2_chaotic, R3_divergence };
enum class SubRegime { A, B };

inline const char* to_string(Regime r) {
    switch (r) {
    case Regime::R1_convergence: return "R1";
    case Regime::R2_chaotic: return "R2";
    case Regime::R3_divergence: return "R3";
    }
    return "?";
}

inline Regime parse_regime(const std::string& s) {
    if (s == "R1") return Regime::R1_convergence;
    if (s == "R2") return Regime::R2_chaotic;
    if (s == "R3") return Regime::R3_divergence;
    throw ConfigError("unknown regime '" + s + "'");
}

/// Knobs that turn the visual regime taxonomy into a mechanical rule.
struct RegimeThresholds {
    double delta_acc = 0.02;   // R3 when tail accuracy <= 1/classes + delta_acc
    double tau_conv = 0.01;    // R1 needs tail train loss <= tau_conv ...
    double tau_mono = 0.10;    // ... and window medians that never rise by more than this fraction
    std::size_t min_tail = 20;
    double tail_fraction = 0.10;
    std::size_t median_window = 5;
};

struct RegimeLabel {
    Regime regime = Regime::R2_chaotic;
    std::optional<SubRegime> sub;
    double tail_mean_acc = 0.0;
    double tail_std_acc = 0.0;
    double tail_mean_loss = 0.0;
    bool monotone = false;
};

inline std::size_t tail_window(std::size_t epochs, const RegimeThresholds& th) {
    const auto frac = static_cast<std::size_t>(std::ceil(th.tail_fraction * static_cast<double>(epochs)));
    return std::max(th.min_tail, frac);
}

namespace detail {

inline double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

} // namespace detail

/// True when consecutive `window`-epoch medians of `losses` never increase by more than
/// a relative `tolerance`. A trailing partial window is folded into the last full one.
inline bool windowed_non_increasing(const std::vector<double>& losses, std::size_t window, double tolerance) {
    if (window == 0 || losses.size() < window) return true;
    std::vector<double> medians;
    const std::size_t full = losses.size() / window;
    for (std::size_t w = 0; w < full; ++w) {
        const auto begin = losses.begin() + static_cast<long>(w * window);
        const auto end = (w + 1 == full) ? losses.end() : begin + static_cast<long>(window);
        medians.push_back(detail::median(std::vector<double>(begin, end)));
    }
    for (std::size_t i = 1; i < medians.size(); ++i)
        if (medians[i] > medians[i - 1] * (1.0 + tolerance)) return false;
    return true;
}

/// Regime of one fixed-LR trajectory from its tail window (last max(20, 10%) epochs):
/// R3 if it diverged or sits at chance accuracy; R1 if the tail train loss is below
/// tau_conv and windowed-median non-increasing; R2 otherwise. Accuracy is test accuracy
/// when recorded, train accuracy otherwise.
inline RegimeLabel classify_regime(const Trajectory& traj, int n_classes, const RegimeThresholds& th = {}) {
    if (n_classes < 2) throw ConfigError("classify_regime: n_classes must be at least 2");
    const std::size_t epochs = traj.records.size();
    const std::size_t window = tail_window(epochs, th);
    if (epochs < window) {
        throw ConfigError("classify_regime: trajectory has " + std::to_string(epochs) +
                          " epochs, tail window needs " + std::to_string(window));
    }
    RegimeLabel label;
    std::vector<double> accs, losses;
    for (std::size_t i = epochs - window; i < epochs; ++i) {
        const auto& r = traj.records[i];
        accs.push_back(std::isnan(r.test_acc) ? r.train_acc : r.test_acc);
        losses.push_back(r.train_loss);
    }
    double sum = 0.0;
    for (double a : accs) sum += a;
    label.tail_mean_acc = sum / static_cast<double>(window);
    double var = 0.0;
    for (double a : accs) var += (a - label.tail_mean_acc) * (a - label.tail_mean_acc);
    label.tail_std_acc = std::sqrt(var / static_cast<double>(window));
    double lsum = 0.0;
    for (double l : losses) lsum += l;
    label.tail_mean_loss = lsum / static_cast<double>(window);
    label.monotone = windowed_non_increasing(losses, th.median_window, th.tau_mono);

    const double chance = 1.0 / static_cast<double>(n_classes);
    if (traj.diverged_at || !(label.tail_mean_acc > chance + th.delta_acc)) {
        label.regime = Regime::R3_divergence;
    } else if (label.tail_mean_loss <= th.tau_conv && label.monotone) {
        label.regime = Regime::R1_convergence;
    } else {
        label.regime = Regime::R2_chaotic;
    }
    return label;
}

struct RegimeBoundaries {
    std::optional<double> lr_12;
    std::optional<double> lr_23;
    std::optional<double> lr_2a2b;
};

struct SweepResult {
    std::vector<double> grid;
    std::vector<RegimeLabel> labels;
    RegimeBoundaries boundaries;
    std::vector<std::string> warnings;

    std::vector<double> grid_in(Regime r) const {
        std::vector<double> out;
        for (std::size_t i = 0; i < grid.size(); ++i)
            if (labels[i].regime == r) out.push_back(grid[i]);
        return out;
    }

    /// True when labels read R1...R1 R2...R2 R3...R3 (any block may be empty).
    bool contiguous() const {
        for (std::size_t i = 1; i < labels.size(); ++i)
            if (labels[i].regime < labels[i - 1].regime) return false;
        return true;
    }
};

inline void check_grid(const std::vector<double>& grid, std::size_t min_points) {
    if (grid.size() < min_points) {
        throw ConfigError("LR grid needs at least " + std::to_string(min_points) + " points");
    }
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!(grid[i] > 0.0)) throw ConfigError("LR grid values must be positive");
        if (i && !(grid[i] > grid[i - 1])) throw ConfigError("LR grid must be strictly increasing");
    }
}

/// Boundaries at geometric means of the grid points straddling the first transition
/// out of each regime. Later out-of-order labels produce warnings.
inline void estimate_boundaries(SweepResult& s) {
    const auto& L = s.labels;
    const std::size_t n = L.size();
    for (std::size_t i = 1; i < n; ++i) {
        if (L[i].regime < L[i - 1].regime) {
            s.warnings.push_back("non-monotone regime order: " + std::string(to_string(L[i].regime)) +
                                 " at lr=" + format_double(s.grid[i]) + " after " + to_string(L[i - 1].regime) +
                                 " at lr=" + format_double(s.grid[i - 1]));
        }
    }
    // First transition out of R1, and first transition into R3.
    for (std::size_t i = 1; i < n; ++i) {
        if (L[i - 1].regime == Regime::R1_convergence && L[i].regime != Regime::R1_convergence) {
            s.boundaries.lr_12 = std::sqrt(s.grid[i - 1] * s.grid[i]);
            break;
        }
    }
    for (std::size_t i = 1; i < n; ++i) {
        if (L[i - 1].regime != Regime::R3_divergence && L[i].regime == Regime::R3_divergence) {
            s.boundaries.lr_23 = std::sqrt(s.grid[i - 1] * s.grid[i]);
            break;
        }
    }
}

/// Subregime 2A is the longest run of R2 grid points, starting at the lowest, whose
/// fine-tuned accuracy reaches `r1_best_acc`; the boundary is the geometric mean of the
/// last 2A point and the next grid point. Labels of R2 points gain their sub-label.
inline double subregime_split(SweepResult& sweep, const std::map<double, double>& finetune_acc,
                              double r1_best_acc) {
    std::vector<std::size_t> r2;
    for (std::size_t i = 0; i < sweep.grid.size(); ++i)
        if (sweep.labels[i].regime == Regime::R2_chaotic) r2.push_back(i);
    if (r2.empty()) throw ConfigError("subregime_split: sweep has no regime-2 points");
    for (std::size_t i : r2) {
        if (!finetune_acc.count(sweep.grid[i])) {
            throw ConfigError("subregime_split: missing fine-tune accuracy for lr=" + format_double(sweep.grid[i]));
        }
    }
    std::size_t prefix = 0;
    while (prefix < r2.size() && finetune_acc.at(sweep.grid[r2[prefix]]) >= r1_best_acc) ++prefix;
    for (std::size_t k = 0; k < r2.size(); ++k)
        sweep.labels[r2[k]].sub = k < prefix ? SubRegime::A : SubRegime::B;

    double boundary;
    if (prefix == 0) {
        const std::size_t first = r2.front();
        boundary = first > 0 ? std::sqrt(sweep.grid[first - 1] * sweep.grid[first]) : sweep.grid[first];
        sweep.warnings.push_back("subregime 2A is empty: no regime-2 fine-tune reaches the best regime-1 accuracy");
    } else {
        const std::size_t last = r2[prefix - 1];
        boundary = last + 1 < sweep.grid.size() ? std::sqrt(sweep.grid[last] * sweep.grid[last + 1])
                                                : sweep.grid[last];
    }
    sweep.boundaries.lr_2a2b = boundary;
    return boundary;
}

} // namespace silab

#endif
