#ifndef SILAB_NET_HPP
#define SILAB_NET_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "silab/autodiff.hpp"
#include "silab/data.hpp"
#include "silab/error.hpp"
#include "silab/params.hpp"
#include "silab/rng.hpp"
#include "silab/text.hpp"

namespace silab {

/// How trainable weights are partitioned into scale-invariant groups. Every hidden
/// unit's incoming weight row feeds its own per-feature normalization, so both the
/// whole layer matrix and each single row are scale-invariant.
enum class GroupBy { layer, unit };

inline GroupBy parse_group_by(const std::string& s) {
    if (s == "layer") return GroupBy::layer;
    if (s == "unit") return GroupBy::unit;
    throw ConfigError("unknown group_by '" + s + "' (expected layer or unit)");
}
inline const char* to_string(GroupBy g) { return g == GroupBy::layer ? "layer" : "unit"; }

struct NetSpec {
    std::size_t input_dim = 2;
    std::vector<std::size_t> hidden_widths{64, 64};
    int n_classes = 2;
    double normalization_epsilon = 1e-12;
    std::uint64_t seed = 0;
    double radius = 1.0;
    GroupBy group_by = GroupBy::layer;
    /// Common multiplier on the unit-norm rows of the fixed output layer.
    double head_scale = 1.0;

    void validate() const {
        if (input_dim == 0) throw ConfigError("net: input_dim must be positive");
        if (hidden_widths.empty()) {
            throw ConfigError("net: at least one hidden layer is required (no scale-invariant "
                              "parameters otherwise)");
        }
        for (auto w : hidden_widths)
            if (w == 0) throw ConfigError("net: hidden widths must be positive");
        if (n_classes < 2) throw ConfigError("net: n_classes must be at least 2");
        if (!(normalization_epsilon >= 0.0) || normalization_epsilon > 1e-10) {
            throw ConfigError("net: normalization_epsilon must lie in [0, 1e-10]");
        }
        if (!(radius > 0.0) || !std::isfinite(radius)) throw ConfigError("net: radius must be positive");
        if (!(head_scale > 0.0) || !std::isfinite(head_scale)) throw ConfigError("net: head_scale must be positive");
    }

    std::string canonical() const {
        std::string s = "in=" + std::to_string(input_dim) + ";hidden=";
        for (std::size_t i = 0; i < hidden_widths.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(hidden_widths[i]);
        }
        s += ";classes=" + std::to_string(n_classes) + ";eps=" + format_double(normalization_epsilon) +
             ";seed=" + std::to_string(seed) + ";radius=" + format_double(radius) +
             ";group_by=" + to_string(group_by) + ";head_scale=" + format_double(head_scale);
        return s;
    }

    std::uint64_t hash() const { return fnv1a64(canonical()); }
};

struct EvalMetrics {
    double loss = 0.0;
    double accuracy = 0.0;
    double error = 1.0;
    std::size_t correct = 0;
    std::size_t count = 0;
};

struct ForwardResult {
    double loss = 0.0;
    Tensor logits;
    ad::Tape tape;
    std::vector<ad::Var> param_vars;  // one per ParamVector group
    bool finite = true;
};

/// Scale-invariant MLP: every hidden layer is a bias-free linear map followed by
/// batch-statistics normalization (no affine parameters) and ReLU; the output layer
/// is fixed at construction and never trained.
class Net {
public:
    Net(NetSpec spec, Tensor head) : spec_(std::move(spec)), head_(std::move(head)) {}

    const NetSpec& spec() const { return spec_; }
    const Tensor& head() const { return head_; }

    ForwardResult forward(const ParamVector& params, const Tensor& x, std::span<const int> labels) const {
        if (x.cols() != spec_.input_dim) {
            throw ConfigError("forward: input has " + std::to_string(x.cols()) + " features, net expects " +
                              std::to_string(spec_.input_dim));
        }
        if (x.rows() < 2) throw ConfigError("forward: batch size must be at least 2");
        check_params(params);

        ForwardResult r;
        ad::Tape& t = r.tape;
        for (const auto& g : params.groups()) r.param_vars.push_back(t.leaf(g.value));

        ad::Var h = t.leaf(x);
        std::size_t next = 0;
        for (std::size_t layer = 0; layer < spec_.hidden_widths.size(); ++layer) {
            ad::Var w;
            if (spec_.group_by == GroupBy::layer) {
                w = r.param_vars[next++];
            } else {
                const std::size_t units = spec_.hidden_widths[layer];
                w = t.concat_rows(std::span<const ad::Var>(r.param_vars).subspan(next, units));
                next += units;
            }
            h = t.relu(t.batch_norm(t.matmul_nt(h, w), spec_.normalization_epsilon));
        }
        ad::Var logits = t.matmul_nt(h, t.leaf(head_));
        ad::Var loss = t.softmax_xent(logits, labels);
        t.set_output(loss);
        r.loss = t.output_value();
        r.logits = t.value(logits);
        r.finite = std::isfinite(r.loss) && r.logits.all_finite();
        return r;
    }

    /// Gradient with respect to the trainable groups only; the head is not a group.
    ParamVector backward(const ForwardResult& fr, const ParamVector& like) const {
        const auto adj = fr.tape.backward();
        ParamVector grad = like;
        for (std::size_t i = 0; i < grad.group_count(); ++i) {
            const Tensor& a = adj[static_cast<std::size_t>(fr.param_vars[i].id)];
            Tensor& dst = grad.groups()[i].value;
            if (a.data.empty()) {
                std::fill(dst.data.begin(), dst.data.end(), 0.0);
            } else {
                dst.data = a.data;
            }
        }
        return grad;
    }

    std::pair<double, ParamVector> loss_and_grad(const ParamVector& params, const Tensor& x,
                                                 std::span<const int> labels) const {
        const ForwardResult fr = forward(params, x, labels);
        return {fr.loss, backward(fr, params)};
    }

    double loss(const ParamVector& params, const Tensor& x, std::span<const int> labels) const {
        return forward(params, x, labels).loss;
    }

    /// Fixed-order traversal in `eval_batch`-sized slices; normalization uses each
    /// slice's own statistics. A pure function of (params, dataset, eval_batch).
    EvalMetrics evaluate(const ParamVector& params, const Dataset& ds, std::size_t eval_batch) const {
        if (ds.size() == 0) throw ConfigError("evaluate: empty dataset");
        EvalMetrics m;
        double loss_sum = 0.0;
        for (const auto& idx : sequential_batches(ds.size(), eval_batch)) {
            const Tensor x = ds.gather(idx);
            const auto y = ds.gather_labels(idx);
            const ForwardResult fr = forward(params, x, y);
            loss_sum += fr.loss * static_cast<double>(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) {
                const auto row = fr.logits.row(i);
                const auto best = std::max_element(row.begin(), row.end()) - row.begin();
                if (best == y[i]) ++m.correct;
            }
        }
        m.count = ds.size();
        m.loss = loss_sum / static_cast<double>(m.count);
        m.accuracy = static_cast<double>(m.correct) / static_cast<double>(m.count);
        m.error = 1.0 - m.accuracy;
        return m;
    }

    void check_params(const ParamVector& params) const {
        const auto expected = expected_shapes();
        if (params.group_count() != expected.size()) {
            throw ConfigError("params: expected " + std::to_string(expected.size()) + " groups, got " +
                              std::to_string(params.group_count()));
        }
        for (std::size_t i = 0; i < expected.size(); ++i) {
            if (params.groups()[i].value.shape != expected[i]) {
                throw ConfigError("params: group '" + params.groups()[i].name + "' has shape " +
                                  shape_string(params.groups()[i].value.shape) + ", expected " +
                                  shape_string(expected[i]));
            }
        }
    }

    std::vector<std::vector<std::size_t>> expected_shapes() const {
        std::vector<std::vector<std::size_t>> out;
        std::size_t fan_in = spec_.input_dim;
        for (std::size_t width : spec_.hidden_widths) {
            if (spec_.group_by == GroupBy::layer) {
                out.push_back({width, fan_in});
            } else {
                for (std::size_t u = 0; u < width; ++u) out.push_back({fan_in});
            }
            fan_in = width;
        }
        return out;
    }

private:
    NetSpec spec_;
    Tensor head_;
};

/// Builds the net and its initial parameters: i.i.d. normal weights scaled by
/// 1/sqrt(fan_in), then the whole vector rescaled to norm `spec.radius`. The head is
/// drawn the same way from its own stream, each class row normalized to unit norm and
/// multiplied by `spec.head_scale`.
inline std::pair<Net, ParamVector> build_net(const NetSpec& spec) {
    spec.validate();
    std::vector<ParamGroup> groups;
    std::size_t fan_in = spec.input_dim;
    for (std::size_t layer = 0; layer < spec.hidden_widths.size(); ++layer) {
        const std::size_t width = spec.hidden_widths[layer];
        CounterRng rng(spec.seed, "init", layer);
        const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Tensor w({width, fan_in});
        for (double& v : w.data) v = s * rng.normal();
        const std::string base = "layer" + std::to_string(layer);
        if (spec.group_by == GroupBy::layer) {
            groups.push_back({base + ".weight", std::move(w)});
        } else {
            for (std::size_t u = 0; u < width; ++u) {
                const auto r = w.row(u);
                char name[32];
                std::snprintf(name, sizeof name, ".unit%03zu", u);
                groups.push_back({base + name, Tensor({fan_in}, std::vector<double>(r.begin(), r.end()))});
            }
        }
        fan_in = width;
    }
    ParamVector params(std::move(groups));
    project_to_sphere(params, spec.radius);

    const auto classes = static_cast<std::size_t>(spec.n_classes);
    Tensor head({classes, fan_in});
    CounterRng rng(spec.seed, "head");
    for (double& v : head.data) v = rng.normal() / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t c = 0; c < classes; ++c) {
        double n = 0.0;
        for (double v : head.row(c)) n += v * v;
        n = std::sqrt(n);
        for (double& v : head.row(c)) v *= spec.head_scale / n;
    }
    return {Net(spec, std::move(head)), std::move(params)};
}

} // namespace silab

#endif
