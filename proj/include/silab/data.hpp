#ifndef SILAB_DATA_HPP
#define SILAB_DATA_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "silab/checkpoint.hpp"
#include "silab/error.hpp"
#include "silab/rng.hpp"
#include "silab/tensor.hpp"
#include "silab/text.hpp"

namespace silab {

struct Dataset {
    Tensor features;  // n x d
    std::vector<int> labels;
    int n_classes = 0;
    std::string name;

    std::size_t size() const { return labels.size(); }
    std::size_t dim() const { return features.cols(); }

    /// Rows `idx` of this dataset, in the given order.
    Tensor gather(std::span<const std::size_t> idx) const {
        Tensor out({idx.size(), dim()});
        for (std::size_t r = 0; r < idx.size(); ++r) {
            auto src = features.row(idx[r]);
            std::copy(src.begin(), src.end(), out.row(r).begin());
        }
        return out;
    }

    std::vector<int> gather_labels(std::span<const std::size_t> idx) const {
        std::vector<int> out(idx.size());
        for (std::size_t r = 0; r < idx.size(); ++r) out[r] = labels[idx[r]];
        return out;
    }

    void validate() const {
        if (features.rows() != labels.size())
            throw ConfigError(name + ": feature rows != label count");
        for (int y : labels)
            if (y < 0 || y >= n_classes) throw ConfigError(name + ": label out of range");
        if (!features.all_finite()) throw ConfigError(name + ": non-finite feature");
    }
};

enum class SyntheticKind { two_moons, gaussian_blobs, spirals };

inline SyntheticKind parse_synthetic_kind(const std::string& s) {
    if (s == "two_moons") return SyntheticKind::two_moons;
    if (s == "gaussian_blobs") return SyntheticKind::gaussian_blobs;
    if (s == "spirals") return SyntheticKind::spirals;
    throw ConfigError("unknown synthetic dataset kind '" + s + "'");
}

inline const char* to_string(SyntheticKind k) {
    switch (k) {
    case SyntheticKind::two_moons: return "two_moons";
    case SyntheticKind::gaussian_blobs: return "gaussian_blobs";
    case SyntheticKind::spirals: return "spirals";
    }
    return "?";
}

/// Seeded permutation of 0..n-1 (Fisher-Yates over a counter-based stream).
inline std::vector<std::size_t> permutation(std::size_t n, std::uint64_t seed, std::string_view tag,
                                            std::uint64_t stream) {
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    CounterRng rng(seed, tag, stream);
    for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
    return p;
}

/// Synthetic 2-D classification task. Class sizes differ by at most one and rows are
/// stored in a seeded random order so that any contiguous slice mixes classes.
///
/// two_moons: class 0 on (cos t, sin t), class 1 on (1 - cos t, 0.5 - sin t), t in [0, pi],
/// evenly spaced, plus isotropic gaussian noise of std `noise`.
/// gaussian_blobs: `n_classes` blobs with means on a circle of radius 5, std `noise`.
/// spirals: `n_classes` interleaved arms, radius growing linearly with angle.
inline Dataset gen_synthetic(SyntheticKind kind, std::size_t n, double noise, std::uint64_t seed,
                             int n_classes = 2) {
    if (n < 4) throw ConfigError("gen_synthetic: n must be at least 4");
    if (!(noise >= 0.0)) throw ConfigError("gen_synthetic: noise must be non-negative");
    if (kind == SyntheticKind::two_moons) n_classes = 2;
    if (n_classes < 2) throw ConfigError("gen_synthetic: need at least 2 classes");

    const auto classes = static_cast<std::size_t>(n_classes);
    Tensor raw({n, 2});
    std::vector<int> raw_labels(n);
    CounterRng noise_rng(seed, "synthetic-noise");
    std::size_t row = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        const std::size_t count = n / classes + (c < n % classes ? 1 : 0);
        for (std::size_t i = 0; i < count; ++i, ++row) {
            const double frac = count > 1 ? static_cast<double>(i) / static_cast<double>(count - 1) : 0.0;
            double x = 0.0, y = 0.0;
            switch (kind) {
            case SyntheticKind::two_moons: {
                const double t = std::numbers::pi * frac;
                if (c == 0) {
                    x = std::cos(t);
                    y = std::sin(t);
                } else {
                    x = 1.0 - std::cos(t);
                    y = 0.5 - std::sin(t);
                }
                break;
            }
            case SyntheticKind::gaussian_blobs: {
                const double a = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(classes);
                x = 5.0 * std::cos(a);
                y = 5.0 * std::sin(a);
                break;
            }
            case SyntheticKind::spirals: {
                const double t = 0.25 + 2.75 * std::numbers::pi * frac;
                const double a = t + 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(classes);
                x = t * std::cos(a) / std::numbers::pi;
                y = t * std::sin(a) / std::numbers::pi;
                break;
            }
            }
            if (noise > 0.0) {
                x += noise * noise_rng.normal();
                y += noise * noise_rng.normal();
            }
            raw(row, 0) = x;
            raw(row, 1) = y;
            raw_labels[row] = static_cast<int>(c);
        }
    }

    const auto order = permutation(n, seed, "synthetic-order", 0);
    Dataset ds;
    ds.n_classes = n_classes;
    ds.name = to_string(kind);
    ds.features = Tensor({n, 2});
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        ds.features(i, 0) = raw(order[i], 0);
        ds.features(i, 1) = raw(order[i], 1);
        ds.labels[i] = raw_labels[order[i]];
    }
    return ds;
}

/// Index slices for one epoch. The permutation is a pure function of (seed, epoch);
/// a final batch shorter than 2 is merged into the previous one.
inline std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                                     std::uint64_t seed, std::uint64_t epoch) {
    if (batch_size < 2) throw ConfigError("batches: batch size must be at least 2");
    const auto perm = permutation(n, seed, "batches", epoch);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        if (end - start < 2 && !out.empty()) {
            out.back().insert(out.back().end(), perm.begin() + static_cast<long>(start),
                              perm.begin() + static_cast<long>(end));
        } else {
            out.emplace_back(perm.begin() + static_cast<long>(start), perm.begin() + static_cast<long>(end));
        }
    }
    return out;
}

/// Fixed-order slices 0..n-1 used for evaluation, with the same ragged-tail merge.
inline std::vector<std::vector<std::size_t>> sequential_batches(std::size_t n, std::size_t batch_size) {
    if (batch_size < 2) throw ConfigError("evaluation batch size must be at least 2");
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        std::vector<std::size_t> idx(end - start);
        std::iota(idx.begin(), idx.end(), start);
        if (idx.size() < 2 && !out.empty()) {
            out.back().insert(out.back().end(), idx.begin(), idx.end());
        } else {
            out.push_back(std::move(idx));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------------
// IDX ingestion

struct Standardization {
    std::vector<double> mean;
    std::vector<double> stddev;  // features with zero spread get 1
};

inline Standardization fit_standardization(const Tensor& x) {
    const std::size_t n = x.rows(), d = x.cols();
    Standardization s{std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) s.mean[j] += x(i, j);
    for (double& m : s.mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            const double dv = x(i, j) - s.mean[j];
            s.stddev[j] += dv * dv;
        }
    for (double& v : s.stddev) {
        v = std::sqrt(v / static_cast<double>(n));
        if (!(v > 0.0)) v = 1.0;
    }
    return s;
}

inline void apply_standardization(Tensor& x, const Standardization& s) {
    if (s.mean.size() != x.cols()) throw ConfigError("standardization width mismatch");
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) x(i, j) = (x(i, j) - s.mean[j]) / s.stddev[j];
}

namespace detail {

inline std::uint32_t read_be32(const std::string& bytes, std::size_t offset, const std::string& path) {
    if (bytes.size() < offset + 4) {
        throw IngestionError(path + ": truncated header at offset " + std::to_string(offset) +
                             ": expected " + std::to_string(offset + 4) + " bytes, got " +
                             std::to_string(bytes.size()));
    }
    std::uint32_t v = 0;
    for (std::size_t i = 0; i < 4; ++i) v = (v << 8) | static_cast<unsigned char>(bytes[offset + i]);
    return v;
}

} // namespace detail

/// Loads an IDX image file (magic 0x00000803) and label file (0x00000801). Pixels are
/// scaled to [0, 1] and then standardized per feature, either with `stats` (a test split
/// reusing training statistics) or with statistics fitted on this data, which are
/// returned through `fitted` when non-null.
inline Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                        std::optional<std::size_t> limit = std::nullopt,
                        const Standardization* stats = nullptr, Standardization* fitted = nullptr) {
    const std::string img = read_file(images_path);
    const std::string lab = read_file(labels_path);
    const std::string ip = images_path.string(), lp = labels_path.string();

    if (const auto m = detail::read_be32(img, 0, ip); m != 0x00000803) {
        throw IngestionError(ip + ": bad image magic at offset 0");
    }
    if (const auto m = detail::read_be32(lab, 0, lp); m != 0x00000801) {
        throw IngestionError(lp + ": bad label magic at offset 0");
    }
    const std::size_t count = detail::read_be32(img, 4, ip);
    const std::size_t h = detail::read_be32(img, 8, ip);
    const std::size_t w = detail::read_be32(img, 12, ip);
    const std::size_t label_count = detail::read_be32(lab, 4, lp);
    if (label_count != count) {
        throw IngestionError(lp + ": label count " + std::to_string(label_count) +
                             " at offset 4 does not match image count " + std::to_string(count));
    }
    const std::size_t pixels = h * w;
    if (const std::size_t expected = 16 + count * pixels; img.size() != expected) {
        throw IngestionError(ip + ": expected " + std::to_string(expected) + " bytes, got " +
                             std::to_string(img.size()) + " (payload starts at offset 16)");
    }
    if (const std::size_t expected = 8 + count; lab.size() != expected) {
        throw IngestionError(lp + ": expected " + std::to_string(expected) + " bytes, got " +
                             std::to_string(lab.size()) + " (payload starts at offset 8)");
    }

    const std::size_t n = limit ? std::min(*limit, count) : count;
    Dataset ds;
    ds.name = images_path.stem().string();
    ds.features = Tensor({n, pixels});
    ds.labels.resize(n);
    int max_label = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < pixels; ++p) {
            ds.features(i, p) = static_cast<unsigned char>(img[16 + i * pixels + p]) / 255.0;
        }
        ds.labels[i] = static_cast<unsigned char>(lab[8 + i]);
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.n_classes = std::max(10, max_label + 1);

    if (n > 0) {
        const Standardization s = stats ? *stats : fit_standardization(ds.features);
        apply_standardization(ds.features, s);
        if (fitted) *fitted = s;
    }
    return ds;
}

/// CSV with header x0,x1,...,label and round-trip precision.
inline std::string dataset_csv(const Dataset& ds) {
    std::string out;
    for (std::size_t j = 0; j < ds.dim(); ++j) out += "x" + std::to_string(j) + ",";
    out += "label\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t j = 0; j < ds.dim(); ++j) out += format_double(ds.features(i, j)) + ",";
        out += std::to_string(ds.labels[i]) + "\n";
    }
    return out;
}

} // namespace silab

#endif
