#ifndef SILAB_LAB_HPP
#define SILAB_LAB_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "silab/config.hpp"
#include "silab/data.hpp"
#include "silab/error.hpp"
#include "silab/net.hpp"
#include "silab/optim.hpp"
#include "silab/pool.hpp"
#include "silab/protocols.hpp"
#include "silab/regimes.hpp"
#include "silab/train.hpp"

namespace silab {

/// Every section and key a config file may use.
inline const std::map<std::string, std::set<std::string>>& config_schema() {
    static const std::map<std::string, std::set<std::string>> schema{
        {"run", {"name", "seeds"}},
        {"data", {"kind", "n_train", "n_test", "noise", "seed", "classes", "images", "labels", "test_images",
                  "test_labels", "limit", "test_limit"}},
        {"net", {"hidden", "epsilon", "radius", "group_by", "head_scale"}},
        {"optim", {"mode", "momentum", "weight_decay", "batch_size", "eval_batch", "epochs"}},
        {"regimes", {"delta_acc", "tau_conv", "tau_mono", "min_tail", "tail_fraction", "median_window"}},
        {"sweep", {"lr_min", "lr_max", "points", "lrs"}},
        {"experiment", {"sweep_result", "allow_any_regime", "plrs", "flrs", "swa_n", "plr_2a", "plr_2b", "lrs",
                        "threshold", "max_epochs", "plr3", "flr_low", "flr_high", "bins"}},
        {"geometry", {"grid_points"}},
    };
    return schema;
}

struct DataConfig {
    std::string kind = "two_moons";  // a synthetic kind or "idx"
    std::size_t n_train = 1000;
    std::size_t n_test = 1000;
    double noise = 0.1;
    std::uint64_t seed = 1;
    int classes = 2;
    std::string images, labels, test_images, test_labels;
    std::optional<std::size_t> limit, test_limit;
};

struct ExperimentConfig {
    std::optional<std::string> sweep_result;
    bool allow_any_regime = false;
    std::vector<double> plrs, flrs, lrs;
    std::vector<std::uint64_t> swa_n{2, 5};
    std::optional<double> plr_2a, plr_2b, plr3, flr_low, flr_high;
    double threshold = 1e-3;
    std::size_t max_epochs = 20000;
    std::size_t bins = 20;
};

struct LabConfig {
    Config raw;
    std::string name = "silab";
    std::vector<std::uint64_t> seeds{0};
    DataConfig data;
    NetSpec net;  // input_dim, n_classes and seed are filled per task
    OptState opt = OptState::sphere(1.0);
    std::size_t batch_size = 128;
    std::size_t eval_batch = 128;
    std::size_t epochs = 200;
    RegimeThresholds thresholds;
    std::vector<double> lr_grid;
    ExperimentConfig experiment;
    std::size_t grid_points = 21;
};

/// n log-spaced values from lo to hi inclusive.
inline std::vector<double> log_grid(double lo, double hi, std::size_t n) {
    if (!(lo > 0.0) || !(hi > lo) || n < 2) throw ConfigError("log grid needs 0 < lo < hi and at least 2 points");
    std::vector<double> g(n);
    const double a = std::log10(lo), b = std::log10(hi);
    for (std::size_t i = 0; i < n; ++i) g[i] = std::pow(10.0, a + (b - a) * static_cast<double>(i) / (n - 1.0));
    g.front() = lo;
    g.back() = hi;
    return g;
}

inline LabConfig lab_config(const Config& c) {
    c.check_schema(config_schema());
    LabConfig L;
    L.raw = c;
    L.name = c.str("run", "name", "silab");
    if (auto s = c.integers("run", "seeds")) L.seeds = *s;
    if (L.seeds.empty()) throw c.field_error("run", "seeds", "at least one seed is required");

    auto& d = L.data;
    d.kind = c.str("data", "kind", d.kind);
    if (d.kind != "idx") {
        try {
            parse_synthetic_kind(d.kind);
        } catch (const ConfigError& e) {
            throw c.field_error("data", "kind", e.what());
        }
    }
    d.n_train = c.integer("data", "n_train", d.n_train);
    d.n_test = c.integer("data", "n_test", d.n_test);
    d.noise = c.real("data", "noise", d.noise);
    d.seed = c.integer("data", "seed", d.seed);
    d.classes = static_cast<int>(c.integer("data", "classes", static_cast<std::uint64_t>(d.classes)));
    d.images = c.str("data", "images", "");
    d.labels = c.str("data", "labels", "");
    d.test_images = c.str("data", "test_images", "");
    d.test_labels = c.str("data", "test_labels", "");
    if (auto v = c.integer("data", "limit")) d.limit = *v;
    if (auto v = c.integer("data", "test_limit")) d.test_limit = *v;
    if (d.kind == "idx" && (d.images.empty() || d.labels.empty())) {
        throw c.field_error("data", "images", "idx data needs both images and labels paths");
    }
    if (d.kind != "idx" && d.n_train < 4) throw c.field_error("data", "n_train", "must be at least 4");
    if (!(d.noise >= 0.0)) throw c.field_error("data", "noise", "must be non-negative");

    if (auto h = c.integers("net", "hidden")) {
        L.net.hidden_widths.assign(h->begin(), h->end());
    }
    L.net.normalization_epsilon = c.real("net", "epsilon", L.net.normalization_epsilon);
    L.net.radius = c.real("net", "radius", L.net.radius);
    L.net.head_scale = c.real("net", "head_scale", L.net.head_scale);
    if (auto g = c.str("net", "group_by")) {
        try {
            L.net.group_by = parse_group_by(*g);
        } catch (const ConfigError& e) {
            throw c.field_error("net", "group_by", e.what());
        }
    }
    try {
        L.net.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(c.origin() + ": [net] " + e.what());
    }

    const std::string mode = c.str("optim", "mode", "sphere_sgd");
    try {
        switch (parse_opt_mode(mode)) {
        case OptMode::sphere_sgd: L.opt = OptState::sphere(L.net.radius); break;
        case OptMode::plain_sgd: L.opt = OptState::plain(); break;
        case OptMode::momentum_wd:
            L.opt = OptState::practical(c.real("optim", "momentum", 0.9), c.real("optim", "weight_decay", 5e-4));
            break;
        }
        if (L.opt.mode == OptMode::sphere_sgd && (c.has("optim", "momentum") || c.has("optim", "weight_decay"))) {
            L.opt.momentum = c.real("optim", "momentum", 0.0);
            L.opt.weight_decay = c.real("optim", "weight_decay", 0.0);
        }
        L.opt.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(c.origin() + ": [optim] " + e.what());
    }
    L.batch_size = c.integer("optim", "batch_size", L.batch_size);
    L.eval_batch = c.integer("optim", "eval_batch", L.eval_batch);
    L.epochs = c.integer("optim", "epochs", L.epochs);
    if (L.batch_size < 2) throw c.field_error("optim", "batch_size", "must be at least 2");
    if (L.eval_batch < 2) throw c.field_error("optim", "eval_batch", "must be at least 2");
    if (L.epochs == 0) throw c.field_error("optim", "epochs", "must be positive");

    auto& th = L.thresholds;
    th.delta_acc = c.real("regimes", "delta_acc", th.delta_acc);
    th.tau_conv = c.real("regimes", "tau_conv", th.tau_conv);
    th.tau_mono = c.real("regimes", "tau_mono", th.tau_mono);
    th.min_tail = c.integer("regimes", "min_tail", th.min_tail);
    th.tail_fraction = c.real("regimes", "tail_fraction", th.tail_fraction);
    th.median_window = c.integer("regimes", "median_window", th.median_window);
    if (th.tail_fraction < 0.0 || th.tail_fraction > 1.0) {
        throw c.field_error("regimes", "tail_fraction", "must lie in [0, 1]");
    }

    if (auto lrs = c.reals("sweep", "lrs")) {
        L.lr_grid = *lrs;
    } else if (c.has_section("sweep")) {
        try {
            L.lr_grid = log_grid(c.real("sweep", "lr_min", 1e-3), c.real("sweep", "lr_max", 1e2),
                                 c.integer("sweep", "points", 25));
        } catch (const ConfigError& e) {
            throw ConfigError(c.origin() + ": [sweep] " + e.what());
        }
    }
    if (!L.lr_grid.empty()) {
        try {
            check_grid(L.lr_grid, 3);
        } catch (const ConfigError& e) {
            throw ConfigError(c.origin() + ": [sweep] " + e.what());
        }
    }

    auto& x = L.experiment;
    x.sweep_result = c.str("experiment", "sweep_result");
    x.allow_any_regime = c.boolean("experiment", "allow_any_regime", false);
    if (auto v = c.reals("experiment", "plrs")) x.plrs = *v;
    if (auto v = c.reals("experiment", "flrs")) x.flrs = *v;
    if (auto v = c.reals("experiment", "lrs")) x.lrs = *v;
    if (auto v = c.integers("experiment", "swa_n")) x.swa_n = *v;
    x.plr_2a = c.real("experiment", "plr_2a");
    x.plr_2b = c.real("experiment", "plr_2b");
    x.plr3 = c.real("experiment", "plr3");
    x.flr_low = c.real("experiment", "flr_low");
    x.flr_high = c.real("experiment", "flr_high");
    x.threshold = c.real("experiment", "threshold", x.threshold);
    x.max_epochs = c.integer("experiment", "max_epochs", x.max_epochs);
    x.bins = c.integer("experiment", "bins", x.bins);
    for (auto n : x.swa_n)
        if (n < 2) throw c.field_error("experiment", "swa_n", "every N must be at least 2");
    for (const auto* list : {&x.plrs, &x.flrs, &x.lrs})
        for (double v : *list)
            if (!(v > 0.0)) throw ConfigError(c.origin() + ": [experiment] learning rates must be positive");

    L.grid_points = c.integer("geometry", "grid_points", L.grid_points);
    if (L.grid_points < 3) throw c.field_error("geometry", "grid_points", "must be at least 3");
    return L;
}

struct Datasets {
    Dataset train;
    Dataset test;
};

inline Datasets load_datasets(const DataConfig& d) {
    Datasets out;
    if (d.kind == "idx") {
        Standardization stats;
        out.train = load_idx(d.images, d.labels, d.limit, nullptr, &stats);
        if (!d.test_images.empty()) {
            out.test = load_idx(d.test_images, d.test_labels, d.test_limit, &stats);
            out.test.n_classes = out.train.n_classes = std::max(out.train.n_classes, out.test.n_classes);
        }
    } else {
        const SyntheticKind kind = parse_synthetic_kind(d.kind);
        out.train = gen_synthetic(kind, d.n_train, d.noise, d.seed, d.classes);
        out.train.name += "-train";
        if (d.n_test > 0) {
            out.test = gen_synthetic(kind, d.n_test, d.noise, d.seed + 1, d.classes);
            out.test.name += "-test";
        }
    }
    out.train.validate();
    if (out.test.size()) out.test.validate();
    return out;
}

/// Net, initialization and protocol context for one seed. The seed drives both the
/// initialization (and fixed head) and the minibatch order.
struct Task {
    Net net;
    ParamVector init;
    ProtocolContext ctx;
};

inline NetSpec net_spec(const LabConfig& L, const Datasets& data, std::uint64_t seed) {
    NetSpec s = L.net;
    s.input_dim = data.train.dim();
    s.n_classes = data.train.n_classes;
    s.seed = seed;
    return s;
}

/// Heap-allocated because ctx points at the task's own net.
inline std::unique_ptr<Task> make_task(const LabConfig& L, const Datasets& data, std::uint64_t seed) {
    auto [net, init] = build_net(net_spec(L, data, seed));
    auto t = std::unique_ptr<Task>(new Task{std::move(net), std::move(init), {}});
    t->ctx.net = &t->net;
    t->ctx.init = t->init;
    t->ctx.train = &data.train;
    t->ctx.test = data.test.size() ? &data.test : nullptr;
    t->ctx.state = L.opt;
    t->ctx.batch_size = L.batch_size;
    t->ctx.eval_batch = L.eval_batch;
    t->ctx.epochs = L.epochs;
    return t;
}

struct SweepRun {
    double lr = 0.0;
    Stage stage;
    RegimeLabel label;
};

/// One fixed-LR pre-training run per grid point (in parallel), then labels and
/// boundaries. `on_run` sees each finished run, in grid order after all complete.
inline SweepResult run_sweep(const LabConfig& L, const Datasets& data, std::uint64_t seed, std::size_t jobs,
                             const std::function<void(std::size_t, const SweepRun&)>& on_run = {}) {
    check_grid(L.lr_grid, 3);
    const auto task = make_task(L, data, seed);
    std::vector<SweepRun> runs(L.lr_grid.size());
    parallel_for(runs.size(), jobs, [&](std::size_t i) {
        runs[i].lr = L.lr_grid[i];
        runs[i].stage = pretrain(task->ctx, L.lr_grid[i], seed);
        runs[i].label = classify_regime(runs[i].stage.trajectory, data.train.n_classes, L.thresholds);
    });
    SweepResult res;
    res.grid = L.lr_grid;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        res.labels.push_back(runs[i].label);
        if (on_run) on_run(i, runs[i]);
    }
    estimate_boundaries(res);
    return res;
}

} // namespace silab

#endif
