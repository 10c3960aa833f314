#ifndef SILAB_PROTOCOLS_HPP
#define SILAB_PROTOCOLS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "silab/data.hpp"
#include "silab/error.hpp"
#include "silab/net.hpp"
#include "silab/optim.hpp"
#include "silab/params.hpp"
#include "silab/regimes.hpp"
#include "silab/text.hpp"
#include "silab/train.hpp"

namespace silab {

enum class ProtocolKind { finetune, swa, two_step, to_threshold, norm_hist };

inline const char* to_string(ProtocolKind k) {
    switch (k) {
    case ProtocolKind::finetune: return "finetune";
    case ProtocolKind::swa: return "swa";
    case ProtocolKind::two_step: return "two_step";
    case ProtocolKind::to_threshold: return "to_threshold";
    case ProtocolKind::norm_hist: return "norm_hist";
    }
    return "?";
}

inline ProtocolKind parse_protocol_kind(const std::string& s) {
    for (auto k : {ProtocolKind::finetune, ProtocolKind::swa, ProtocolKind::two_step, ProtocolKind::to_threshold,
                   ProtocolKind::norm_hist})
        if (s == to_string(k)) return k;
    throw ConfigError("unknown protocol kind '" + s + "'");
}

struct Solution {
    std::string id;  // e.g. "pretrained@200"
    std::size_t epoch = 0;
    EvalMetrics train;
    EvalMetrics test;
    bool diverged = false;
};

struct ProtocolRun {
    ProtocolKind kind = ProtocolKind::finetune;
    double plr = 0.0;
    std::optional<double> flr;
    std::optional<std::size_t> swa_n;
    std::uint64_t seed = 0;
    std::vector<Solution> solutions;
    std::vector<std::string> lineage;
    Trajectory trajectory;                       // all phases, global epoch numbering
    std::map<std::string, ParamVector> params;   // by solution id
    std::map<std::size_t, ParamVector> swa_checkpoints;
    std::optional<std::size_t> epochs_taken;     // to_threshold only

    void validate() const {
        const bool wants_flr = kind == ProtocolKind::finetune || kind == ProtocolKind::two_step;
        if (wants_flr != flr.has_value()) throw ConfigError("protocol run: flr present iff kind is finetune or two_step");
        if (kind == ProtocolKind::swa && (!swa_n || *swa_n < 2)) throw ConfigError("protocol run: swa needs n >= 2");
    }

    const Solution& solution(const std::string& id) const {
        for (const auto& s : solutions)
            if (s.id == id) return s;
        throw Error("protocol run has no solution '" + id + "'");
    }
    const Solution& final_solution() const {
        if (solutions.empty()) throw Error("protocol run has no solutions");
        return solutions.back();
    }
};

/// Everything a protocol needs besides its learning rates.
struct ProtocolContext {
    const Net* net = nullptr;
    ParamVector init;
    const Dataset* train = nullptr;
    const Dataset* test = nullptr;
    OptState state = OptState::sphere(1.0);
    std::size_t batch_size = 128;
    std::size_t eval_batch = 128;
    std::size_t epochs = 200;  // per phase

    void validate() const {
        if (!net || !train) throw ConfigError("protocol: net and training data are required");
        if (epochs == 0) throw ConfigError("protocol: epochs per phase must be positive");
    }
};

/// Regime-relative LR preconditions. Labels come from a sweep on the same task: a
/// grid point is accepted with its own label, an off-grid LR by its side of the
/// estimated boundary.
struct RegimeGuard {
    const SweepResult* sweep = nullptr;
    bool allow_any = false;

    void require(double lr, Regime want, const std::string& what) const {
        if (allow_any) return;
        if (!sweep) {
            throw ConfigError(what + " = " + format_double(lr) + ": no sweep labels to check its regime against (" +
                              "run a sweep first or allow any regime)");
        }
        for (std::size_t i = 0; i < sweep->grid.size(); ++i) {
            if (sweep->grid[i] == lr) {
                if (sweep->labels[i].regime == want) return;
                throw ConfigError(what + " = " + format_double(lr) + " is labelled " +
                                  to_string(sweep->labels[i].regime) + ", expected " + to_string(want));
            }
        }
        const auto& b = sweep->boundaries;
        bool ok = false;
        if (want == Regime::R1_convergence) ok = b.lr_12 && lr < *b.lr_12;
        if (want == Regime::R3_divergence) ok = b.lr_23 && lr > *b.lr_23;
        if (want == Regime::R2_chaotic) ok = b.lr_12 && b.lr_23 && lr > *b.lr_12 && lr < *b.lr_23;
        if (!ok) {
            throw ConfigError(what + " = " + format_double(lr) + " is not in regime " + to_string(want) +
                              " according to the sweep boundaries");
        }
    }
};

/// Parameters and optimizer state at the end of a stage, plus that stage's records.
struct Stage {
    ParamVector params;
    OptState state;
    Trajectory trajectory;
    std::size_t end_epoch = 0;
    std::map<std::size_t, ParamVector> checkpoints;
    bool diverged() const { return trajectory.diverged_at.has_value(); }
};

inline Stage run_stage(const ProtocolContext& ctx, const ParamVector& start, const OptState& state, double lr,
                       std::size_t epochs, std::size_t epoch_offset, std::uint64_t seed,
                       const TrainHooks& hooks = {}) {
    ctx.validate();
    TrainOptions o;
    o.batch_size = ctx.batch_size;
    o.eval_batch = ctx.eval_batch;
    o.seed = seed;
    o.epoch_offset = epoch_offset;
    TrainResult r = train(*ctx.net, start, *ctx.train, ctx.test, Schedule{{{lr, epochs}}}, state, o, hooks);
    Stage s{std::move(r.params), std::move(r.state), std::move(r.trajectory), epoch_offset, std::move(r.checkpoints)};
    s.end_epoch = epoch_offset + s.trajectory.records.size();
    return s;
}

/// Pre-training stage from the context's initialization.
inline Stage pretrain(const ProtocolContext& ctx, double plr, std::uint64_t seed, const TrainHooks& hooks = {}) {
    return run_stage(ctx, ctx.init, ctx.state, plr, ctx.epochs, 0, seed, hooks);
}

namespace detail {

inline void append(Trajectory& dst, const Trajectory& src) {
    if (dst.group_names.empty()) dst.group_names = src.group_names;
    if (!dst.diverged_at && src.diverged_at) dst.diverged_at = src.diverged_at;
    dst.records.insert(dst.records.end(), src.records.begin(), src.records.end());
}

inline void add_solution(const ProtocolContext& ctx, ProtocolRun& run, const std::string& id, std::size_t epoch,
                         const ParamVector& p, bool diverged) {
    Solution s;
    s.id = id;
    s.epoch = epoch;
    s.diverged = diverged;
    s.train = ctx.net->evaluate(p, *ctx.train, ctx.eval_batch);
    if (ctx.test) s.test = ctx.net->evaluate(p, *ctx.test, ctx.eval_batch);
    run.solutions.push_back(s);
    run.params[id] = p;
}

inline std::string phase_text(double lr, std::size_t from, std::size_t to) {
    return "lr=" + format_double(lr) + " epochs " + std::to_string(from + 1) + ".." + std::to_string(to);
}

} // namespace detail

/// [(plr, E), (flr, E)], recording the solution after each phase. `pre` reuses an
/// existing pre-training stage at `plr` with the same seed.
inline ProtocolRun pretrain_finetune(const ProtocolContext& ctx, double plr, double flr, std::uint64_t seed,
                                     const RegimeGuard& guard, const Stage* pre = nullptr) {
    guard.require(flr, Regime::R1_convergence, "flr");
    Stage own;
    if (!pre) {
        own = pretrain(ctx, plr, seed);
        pre = &own;
    }
    ProtocolRun run;
    run.kind = ProtocolKind::finetune;
    run.plr = plr;
    run.flr = flr;
    run.seed = seed;
    detail::append(run.trajectory, pre->trajectory);
    run.lineage.push_back("pretrain " + detail::phase_text(plr, 0, pre->end_epoch));
    detail::add_solution(ctx, run, "pretrained@" + std::to_string(pre->end_epoch), pre->end_epoch, pre->params,
                         pre->diverged());

    const Stage ft = run_stage(ctx, pre->params, pre->state, flr, ctx.epochs, pre->end_epoch, seed);
    detail::append(run.trajectory, ft.trajectory);
    run.lineage.push_back("finetune " + detail::phase_text(flr, pre->end_epoch, ft.end_epoch));
    detail::add_solution(ctx, run, "finetuned@" + std::to_string(ft.end_epoch), ft.end_epoch, ft.params,
                         ft.diverged());
    return run;
}

/// Coordinatewise arithmetic mean: for every coordinate, the checkpoints are summed in
/// order and the sum divided by their count.
inline ParamVector swa_average(const std::vector<const ParamVector*>& checkpoints) {
    if (checkpoints.empty()) throw Error("swa_average: no checkpoints");
    ParamVector out = checkpoints.front()->zeros_like();
    for (const auto* c : checkpoints) c->require_same_partition(out, "swa_average");
    const auto n = static_cast<double>(checkpoints.size());
    for (std::size_t g = 0; g < out.group_count(); ++g) {
        auto& dst = out.groups()[g].value.data;
        for (std::size_t i = 0; i < dst.size(); ++i) {
            double s = 0.0;
            for (const auto* c : checkpoints) s += c->groups()[g].value.data[i];
            dst[i] = s / n;
        }
    }
    return out;
}

/// Pre-train E epochs at plr, continue n-1 more at plr, average the end-of-epoch
/// checkpoints of epochs E..E+n-1, and (sphere mode) rescale the mean to the radius.
inline ProtocolRun swa_protocol(const ProtocolContext& ctx, double plr, std::size_t n, std::uint64_t seed,
                                const Stage* pre = nullptr) {
    if (n < 2) throw ConfigError("swa: n must be at least 2");
    Stage own;
    if (!pre) {
        own = pretrain(ctx, plr, seed);
        pre = &own;
    }
    ProtocolRun run;
    run.kind = ProtocolKind::swa;
    run.plr = plr;
    run.swa_n = n;
    run.seed = seed;
    detail::append(run.trajectory, pre->trajectory);
    run.lineage.push_back("pretrain " + detail::phase_text(plr, 0, pre->end_epoch));
    detail::add_solution(ctx, run, "pretrained@" + std::to_string(pre->end_epoch), pre->end_epoch, pre->params,
                         pre->diverged());

    TrainHooks keep;
    keep.keep_checkpoint = [](std::size_t) { return true; };
    const Stage cont = run_stage(ctx, pre->params, pre->state, plr, n - 1, pre->end_epoch, seed, keep);
    detail::append(run.trajectory, cont.trajectory);
    run.lineage.push_back("continue " + detail::phase_text(plr, pre->end_epoch, cont.end_epoch));

    run.swa_checkpoints[pre->end_epoch] = pre->params;
    for (const auto& [e, p] : cont.checkpoints) run.swa_checkpoints[e] = p;
    std::vector<const ParamVector*> ptrs;
    for (std::size_t e = pre->end_epoch; e < pre->end_epoch + n; ++e) {
        const auto it = run.swa_checkpoints.find(e);
        if (it == run.swa_checkpoints.end()) throw Error("swa: checkpoint of epoch " + std::to_string(e) + " missing");
        ptrs.push_back(&it->second);
    }
    ParamVector mean = swa_average(ptrs);
    run.params["swa_mean"] = mean;
    run.lineage.push_back("average checkpoints of epochs " + std::to_string(pre->end_epoch) + ".." +
                          std::to_string(pre->end_epoch + n - 1));
    if (ctx.state.mode == OptMode::sphere_sgd) {
        project_to_sphere(mean, ctx.state.radius);
        run.lineage.push_back("rescale average to radius " + format_double(ctx.state.radius));
    }
    detail::add_solution(ctx, run, "swa", cont.end_epoch, mean, pre->diverged() || cont.diverged());
    return run;
}

/// [(plr_2b, E), (plr_2a, E), (flr, E)]: a gradual LR drop through a lower PLR.
inline ProtocolRun two_step_finetune(const ProtocolContext& ctx, double plr_2b, double plr_2a, double flr,
                                     std::uint64_t seed, const RegimeGuard& guard, const Stage* pre = nullptr) {
    if (plr_2b < plr_2a) {
        throw ConfigError("two_step: plr_2b (" + format_double(plr_2b) + ") must not be below plr_2a (" +
                          format_double(plr_2a) + ")");
    }
    guard.require(flr, Regime::R1_convergence, "flr");
    Stage own;
    if (!pre) {
        own = pretrain(ctx, plr_2b, seed);
        pre = &own;
    }
    ProtocolRun run;
    run.kind = ProtocolKind::two_step;
    run.plr = plr_2b;
    run.flr = flr;
    run.seed = seed;
    detail::append(run.trajectory, pre->trajectory);
    run.lineage.push_back("pretrain " + detail::phase_text(plr_2b, 0, pre->end_epoch));
    detail::add_solution(ctx, run, "pretrained@" + std::to_string(pre->end_epoch), pre->end_epoch, pre->params,
                         pre->diverged());

    const Stage mid = run_stage(ctx, pre->params, pre->state, plr_2a, ctx.epochs, pre->end_epoch, seed);
    detail::append(run.trajectory, mid.trajectory);
    run.lineage.push_back("intermediate " + detail::phase_text(plr_2a, pre->end_epoch, mid.end_epoch));
    detail::add_solution(ctx, run, "intermediate@" + std::to_string(mid.end_epoch), mid.end_epoch, mid.params,
                         mid.diverged());

    const Stage ft = run_stage(ctx, mid.params, mid.state, flr, ctx.epochs, mid.end_epoch, seed);
    detail::append(run.trajectory, ft.trajectory);
    run.lineage.push_back("finetune " + detail::phase_text(flr, mid.end_epoch, ft.end_epoch));
    detail::add_solution(ctx, run, "finetuned@" + std::to_string(ft.end_epoch), ft.end_epoch, ft.params,
                         ft.diverged());
    return run;
}

/// Trains at a fixed lr until the end-of-epoch train loss reaches `threshold`; stops
/// early on divergence. epochs_taken is the first qualifying epoch, none if the budget
/// runs out. `start` defaults to the context's initialization.
inline ProtocolRun train_to_threshold(const ProtocolContext& ctx, double lr, double threshold,
                                      std::size_t max_epochs, std::uint64_t seed,
                                      const ParamVector* start = nullptr) {
    if (!(lr > 0.0)) throw ConfigError("to_threshold: lr must be positive");
    if (max_epochs == 0) throw ConfigError("to_threshold: max_epochs must be positive");
    TrainHooks hooks;
    hooks.stop = [threshold](const EpochRecord& r) { return r.diverged() || r.train_loss <= threshold; };
    const Stage s = run_stage(ctx, start ? *start : ctx.init, ctx.state, lr, max_epochs, 0, seed, hooks);

    ProtocolRun run;
    run.kind = ProtocolKind::to_threshold;
    run.plr = lr;
    run.seed = seed;
    run.trajectory = s.trajectory;
    const auto& last = s.trajectory.records.back();
    if (!last.diverged() && last.train_loss <= threshold) run.epochs_taken = last.epoch;
    run.lineage.push_back("train " + detail::phase_text(lr, 0, s.end_epoch) + " until train loss <= " +
                          format_double(threshold));
    detail::add_solution(ctx, run, "final@" + std::to_string(s.end_epoch), s.end_epoch, s.params, s.diverged());
    return run;
}

struct Histogram {
    std::vector<double> edges;  // bins + 1 ascending edges over log10(norm)
    std::vector<std::size_t> counts;

    std::size_t total() const {
        std::size_t n = 0;
        for (auto c : counts) n += c;
        return n;
    }
};

/// Equal-width bins over log10 of the values, shared by both sets so the panels compare.
inline std::pair<Histogram, Histogram> paired_log_histogram(const std::vector<double>& a, const std::vector<double>& b,
                                                           std::size_t bins) {
    if (bins == 0) throw ConfigError("histogram: bins must be positive");
    double lo = INFINITY, hi = -INFINITY;
    for (const auto* v : {&a, &b}) {
        for (double x : *v) {
            if (!(x > 0.0)) continue;
            lo = std::min(lo, std::log10(x));
            hi = std::max(hi, std::log10(x));
        }
    }
    if (!std::isfinite(lo)) lo = hi = 0.0;
    if (hi == lo) {
        lo -= 0.5;
        hi += 0.5;
    }
    Histogram proto;
    for (std::size_t i = 0; i <= bins; ++i)
        proto.edges.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins));
    proto.counts.assign(bins, 0);
    auto fill = [&](const std::vector<double>& v) {
        Histogram h = proto;
        for (double x : v) {
            std::size_t k = 0;  // zero norms land in the lowest bin
            if (x > 0.0) {
                const double t = (std::log10(x) - lo) / (hi - lo) * static_cast<double>(bins);
                k = std::min(bins - 1, static_cast<std::size_t>(std::max(0.0, t)));
            }
            ++h.counts[k];
        }
        return h;
    };
    return {fill(a), fill(b)};
}

struct NormPanel {
    std::string name;          // "init_vs_pretrained", "finetune_low", "finetune_high"
    std::string scratch_label;
    std::string pretrained_label;
    std::vector<std::pair<std::string, double>> scratch;
    std::vector<std::pair<std::string, double>> pretrained;
    double spread_scratch = 0.0;
    double spread_pretrained = 0.0;
    Histogram hist_scratch;
    Histogram hist_pretrained;
};

struct NormHistResult {
    std::vector<NormPanel> panels;
    std::vector<ProtocolRun> runs;
};

/// Per-group norm histograms in three panels: initialization vs. after pre-training
/// at plr3; then, from both of those starts, after fine-tuning at flr_low and at
/// flr_high.
inline NormHistResult norm_hist_experiment(const ProtocolContext& ctx, double plr3, double flr_low, double flr_high,
                                           std::size_t bins, std::uint64_t seed, const RegimeGuard& guard) {
    if (!(flr_low < flr_high)) throw ConfigError("norm_hist: flr_low must be below flr_high");
    guard.require(plr3, Regime::R3_divergence, "plr3");
    guard.require(flr_low, Regime::R1_convergence, "flr_low");
    guard.require(flr_high, Regime::R1_convergence, "flr_high");

    NormHistResult out;
    const Stage pre = pretrain(ctx, plr3, seed);
    auto panel = [&](std::string name, std::string ls, const ParamVector& a, std::string lp, const ParamVector& b) {
        NormPanel p;
        p.name = std::move(name);
        p.scratch_label = std::move(ls);
        p.pretrained_label = std::move(lp);
        p.scratch = group_norms(a);
        p.pretrained = group_norms(b);
        p.spread_scratch = norm_spread(a);
        p.spread_pretrained = norm_spread(b);
        std::vector<double> va, vb;
        for (const auto& [_, n] : p.scratch) va.push_back(n);
        for (const auto& [_, n] : p.pretrained) vb.push_back(n);
        std::tie(p.hist_scratch, p.hist_pretrained) = paired_log_histogram(va, vb, bins);
        out.panels.push_back(std::move(p));
    };
    panel("init_vs_pretrained", "init", ctx.init, "pretrained", pre.params);

    for (const auto& [tag, flr] : {std::pair<std::string, double>{"low", flr_low}, {"high", flr_high}}) {
        const Stage scratch = run_stage(ctx, ctx.init, ctx.state, flr, ctx.epochs, 0, seed);
        const Stage ft = run_stage(ctx, pre.params, pre.state, flr, ctx.epochs, pre.end_epoch, seed);
        panel("finetune_" + tag, "scratch_flr_" + tag, scratch.params, "pretrained_flr_" + tag, ft.params);

        ProtocolRun run;
        run.kind = ProtocolKind::norm_hist;
        run.plr = plr3;
        run.seed = seed;
        detail::append(run.trajectory, pre.trajectory);
        detail::append(run.trajectory, ft.trajectory);
        run.lineage.push_back("pretrain " + detail::phase_text(plr3, 0, pre.end_epoch));
        run.lineage.push_back("finetune " + detail::phase_text(flr, pre.end_epoch, ft.end_epoch));
        run.lineage.push_back("from scratch " + detail::phase_text(flr, 0, scratch.end_epoch));
        detail::add_solution(ctx, run, "pretrained@" + std::to_string(pre.end_epoch), pre.end_epoch, pre.params,
                             pre.diverged());
        detail::add_solution(ctx, run, "finetuned_" + tag, ft.end_epoch, ft.params, ft.diverged());
        detail::add_solution(ctx, run, "scratch_" + tag, scratch.end_epoch, scratch.params, scratch.diverged());
        out.runs.push_back(std::move(run));
    }
    return out;
}

/// group,stage,norm rows for every panel and both starts.
inline std::string norm_hist_csv(const NormHistResult& r) {
    std::string out = "group,stage,norm\n";
    auto rows = [&](const std::string& stage, const std::vector<std::pair<std::string, double>>& v) {
        for (const auto& [g, n] : v) out += g + "," + stage + "," + format_double(n) + "\n";
    };
    for (const auto& p : r.panels) {
        rows(p.scratch_label, p.scratch);
        rows(p.pretrained_label, p.pretrained);
    }
    return out;
}

} // namespace silab

#endif
