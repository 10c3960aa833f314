// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <mutex>
#include <numbers>
#include <set>

#include <CLI11.hpp>

#include "silab/silab.hpp"

using namespace silab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    std::string name;
    double limit_s;  // wall-clock budget
    std::function<Outcome()> run;
};

std::string fmt(double v, int prec = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    return buf;
}

NetSpec random_spec(std::uint64_t k) {
    CounterRng rng(k, "acceptance-net");
    NetSpec s;
    s.input_dim = 2 + rng.below(4);
    s.hidden_widths = {4 + rng.below(12), 4 + rng.below(12)};
    s.n_classes = 2 + static_cast<int>(rng.below(3));
    s.group_by = rng.below(2) ? GroupBy::unit : GroupBy::layer;
    s.seed = k;
    return s;
}

std::pair<Tensor, std::vector<int>> random_batch(std::uint64_t k, std::size_t n, std::size_t d, int classes) {
    CounterRng rng(k, "acceptance-batch");
    Tensor x({n, d});
    for (double& v : x.data) v = rng.normal();
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)));
    return {std::move(x), std::move(y)};
}

ParamVector scaled(ParamVector p, double a, std::optional<std::size_t> group = {}) {
    for (std::size_t g = 0; g < p.group_count(); ++g)
        if (!group || *group == g)
            for (double& v : p.groups()[g].value.data) v *= a;
    return p;
}

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file(e.path());
    return out;
}

std::string join(const std::vector<std::string>& v, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
    return out;
}

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

// Shared state across criteria 6 to 10.
struct Lab {
    LabConfig L;
    Datasets data;
    std::size_t jobs = 1;
    std::optional<SweepResult> sweep;
    std::map<double, ParamVector> sweep_params;  // seed-0 runs by LR
    std::vector<std::unique_ptr<Task>> tasks;    // one per seed
    // Criterion 7 results, reused by 8.
    std::map<std::pair<double, double>, double> ft_mean;  // (plr, flr) -> test acc over seeds
    std::map<double, double> scratch_mean;                // flr -> test acc over seeds
    bool grid_done = false;

    std::vector<double> with(Regime r) const {
        std::vector<double> v;
        for (std::size_t i = 0; i < sweep->grid.size(); ++i)
            if (sweep->labels[i].regime == r) v.push_back(sweep->grid[i]);
        return v;
    }
    std::vector<double> in_2a() const {
        std::vector<double> v;
        for (std::size_t i = 0; i < sweep->grid.size(); ++i)
            if (sweep->labels[i].sub == SubRegime::A) v.push_back(sweep->grid[i]);
        return v;
    }
    RegimeGuard guard() const { return RegimeGuard{&*sweep, false}; }
    double acc(std::size_t s, const ParamVector& p) const {
        return tasks[s]->net.evaluate(p, data.test, L.eval_batch).accuracy;
    }
    void need_sweep() const {
        if (!sweep) throw Error("needs the criterion 6 sweep");
    }
};

Outcome scale_invariance() {
    double worst = 0.0;
    for (std::uint64_t k = 0; k < 20; ++k) {
        const auto [net, p] = build_net(random_spec(k));
        const auto [x, y] = random_batch(k, 24, net.spec().input_dim, net.spec().n_classes);
        const double l0 = net.loss(p, x, y);
        for (double a : {0.5, 2.0, 10.0}) {
            worst = std::max(worst, std::abs(net.loss(scaled(p, a), x, y) - l0) / std::max(std::abs(l0), 1e-8));
            for (std::size_t g = 0; g < p.group_count(); ++g)
                worst = std::max(worst, std::abs(net.loss(scaled(p, a, g), x, y) - l0) / std::max(std::abs(l0), 1e-8));
        }
    }
    return {worst <= 1e-6, "max relative loss change " + fmt(worst, 3) + " (tol 1e-6)"};
}

Outcome gradient_check() {
    double worst = 0.0;
    std::size_t checked = 0;
    for (std::uint64_t k = 100; k < 105; ++k) {
        const auto [net, p] = build_net(random_spec(k));
        const auto [x, y] = random_batch(k, 16, net.spec().input_dim, net.spec().n_classes);
        const auto g = net.loss_and_grad(p, x, y).second.flat();
        ParamVector probe = p;
        const auto fd = ad::finite_diff_grad(
            [&](std::span<const double> v) {
                probe.assign_flat(std::vector<double>(v.begin(), v.end()));
                return net.loss(probe, x, y);
            },
            p.flat(), 1e-6);
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (std::abs(g[i]) <= 1e-6) continue;
            worst = std::max(worst, std::abs(g[i] - fd[i]) / std::abs(g[i]));
            ++checked;
        }
    }
    return {worst <= 1e-4, "max relative error " + fmt(worst, 3) + " over " + std::to_string(checked) +
                               " coordinates (tol 1e-4)"};
}

Outcome orthogonality() {
    double worst = 0.0;
    for (std::uint64_t k = 200; k < 220; ++k) {
        const auto [net, p] = build_net(random_spec(k));
        const auto [x, y] = random_batch(k, 24, net.spec().input_dim, net.spec().n_classes);
        const auto g = net.loss_and_grad(p, x, y).second;
        const double gn = g.global_norm();
        if (gn == 0.0) continue;
        worst = std::max(worst, std::abs(g.dot(p)) / (gn * p.global_norm()));
    }
    return {worst <= 1e-6, "max |<g,theta>|/(|g||theta|) " + fmt(worst, 3) + " (tol 1e-6)"};
}

Outcome sphere_invariant(const Lab& lab) {
    const auto& t = *lab.tasks.front();
    double worst = 0.0;
    std::size_t steps = 0;
    const double r = lab.L.opt.radius;
    TrainHooks h;
    h.after_step = [&](const ParamVector& p) {
        worst = std::max(worst, std::abs(p.global_norm() - r) / r);
        ++steps;
    };
    TrainOptions o;
    o.batch_size = lab.L.batch_size;
    o.eval_batch = lab.L.eval_batch;
    train(t.net, t.init, lab.data.train, nullptr, Schedule{{{0.3, 10}}}, OptState::sphere(r), o, h);
    return {worst <= 1e-12, std::to_string(steps) + " steps, max |(|theta|-r)/r| " + fmt(worst, 3) + " (tol 1e-12)"};
}

Outcome geometry_oracles(const Lab& lab, const fs::path& out) {
    std::vector<std::string> bad;
    auto v = [](std::vector<double> x) {
        const std::size_t n = x.size();
        return ParamVector({{"g", Tensor({n}, std::move(x))}});
    };
    const auto p = v({0.3, -1.2, 2.0});
    if (angular_distance(p, p) != 0.0) bad.push_back("angle(p,p)");
    if (std::abs(angular_distance(p, scaled(p, -1.0)) - std::numbers::pi) > 1e-12) bad.push_back("angle(p,-p)");
    if (std::abs(angular_distance(v({1, 0, 0}), v({0, 2, 0})) - std::numbers::pi / 2) > 1e-12) bad.push_back("right angle");

    const auto closed = barrier_over_grid(
        v({1, 0}), v({0, 1}), [](const ParamVector& q) -> std::optional<double> { return -q.squared_norm(); }, 21);
    if (std::abs(closed.barrier - 0.5) > 1e-12 || closed.argmax_alpha != 0.5) bad.push_back("closed form");

    // Brute force on a stored pair of short runs.
    const auto& t = *lab.tasks.front();
    TrainOptions o;
    o.batch_size = lab.L.batch_size;
    o.eval_batch = lab.L.eval_batch;
    // Endpoints from two different initializations under the same net.
    const auto& other = lab.tasks.size() > 1 ? lab.tasks[1]->init : lab.tasks.front()->init;
    const auto a0 = train(t.net, t.init, lab.data.train, nullptr, Schedule{{{0.05, 3}}}, lab.L.opt, o).params;
    const auto b0 = train(t.net, other, lab.data.train, nullptr, Schedule{{{0.05, 3}}}, lab.L.opt, o).params;
    save_checkpoint(out / "geometry" / "a.silab", {t.net.spec().hash(), a0});
    save_checkpoint(out / "geometry" / "b.silab", {t.net.spec().hash(), b0});
    const auto a = load_checkpoint(out / "geometry" / "a.silab").params;
    const auto b = load_checkpoint(out / "geometry" / "b.silab").params;
    const std::size_t n = 41;
    const auto rep = linear_barrier(t.net, a, b, lab.data.train, &lab.data.test, n, lab.L.eval_batch);
    const auto fa = a.flat(), fb = b.flat();
    for (const Dataset* ds : {&lab.data.train, &lab.data.test}) {
        auto err = [&](const std::vector<double>& f) {
            ParamVector q = a;
            q.assign_flat(f);
            return t.net.evaluate(q, *ds, lab.L.eval_batch).error;
        };
        const double e1 = err(fa), e2 = err(fb);
        double best = -INFINITY;
        for (std::size_t k = 0; k < n; ++k) {
            const double wa = static_cast<double>(k) / (n - 1.0), wb = static_cast<double>(n - 1 - k) / (n - 1.0);
            std::vector<double> x(fa.size());
            for (std::size_t i = 0; i < x.size(); ++i) x[i] = wa * fa[i] + wb * fb[i];
            best = std::max(best, err(x) - (wa * e1 + wb * e2));
        }
        const double got = ds == &lab.data.train ? rep.barrier_train : *rep.barrier_test;
        if (got != best) bad.push_back("brute force " + fmt(got, 17) + " vs " + fmt(best, 17));
    }
    return {bad.empty(), bad.empty() ? "angles, closed form 0.5, brute force (train " + fmt(rep.barrier_train) +
                                           ", test " + fmt(*rep.barrier_test) + ") exact"
                                     : "failed: " + join(bad, "; ")};
}

Outcome three_regimes(Lab& lab) {
    std::mutex mu;
    lab.sweep = run_sweep(lab.L, lab.data, lab.L.seeds.front(), lab.jobs, [&](std::size_t, const SweepRun& r) {
        std::lock_guard lock(mu);
        lab.sweep_params[r.lr] = r.stage.params;
    });
    const auto& s = *lab.sweep;
    std::string bands;
    for (const auto& l : s.labels) bands += l.regime == Regime::R1_convergence ? '1' : l.regime == Regime::R2_chaotic ? '2' : '3';
    const std::size_t n1 = lab.with(Regime::R1_convergence).size(), n2 = lab.with(Regime::R2_chaotic).size(),
                      n3 = lab.with(Regime::R3_divergence).size();
    const bool ok = s.contiguous() && n1 > 0 && n3 > 0 && n2 >= 3;
    std::string d = "labels " + bands;
    if (s.boundaries.lr_12) d += ", lr_12 " + fmt(*s.boundaries.lr_12);
    if (s.boundaries.lr_23) d += ", lr_23 " + fmt(*s.boundaries.lr_23);
    d += s.contiguous() ? ", contiguous" : ", NOT contiguous";
    return {ok, d};
}

void finetune_grid(Lab& lab) {
    if (lab.grid_done) return;
    lab.need_sweep();
    const auto r1 = lab.with(Regime::R1_convergence), r2 = lab.with(Regime::R2_chaotic);
    const auto guard = lab.guard();
    const std::size_t S = lab.tasks.size(), P = r2.size(), F = r1.size();
    std::vector<std::vector<double>> ft(S * P, std::vector<double>(F));
    std::vector<double> scratch(S * F);
    parallel_for(S * P + S * F, lab.jobs, [&](std::size_t i) {
        if (i < S * P) {
            const std::size_t s = i / P;
            const auto& ctx = lab.tasks[s]->ctx;
            const Stage pre = pretrain(ctx, r2[i % P], lab.L.seeds[s]);
            for (std::size_t f = 0; f < F; ++f)
                ft[i][f] = pretrain_finetune(ctx, r2[i % P], r1[f], lab.L.seeds[s], guard, &pre).final_solution().test.accuracy;
        } else {
            const std::size_t j = i - S * P, s = j / F;
            // Seed 0 already has these runs from the sweep.
            const ParamVector p = s == 0 ? lab.sweep_params.at(r1[j % F])
                                         : pretrain(lab.tasks[s]->ctx, r1[j % F], lab.L.seeds[s]).params;
            scratch[j] = lab.acc(s, p);
        }
    });
    for (std::size_t p = 0; p < P; ++p)
        for (std::size_t f = 0; f < F; ++f) {
            std::vector<double> v;
            for (std::size_t s = 0; s < S; ++s) v.push_back(ft[s * P + p][f]);
            lab.ft_mean[{r2[p], r1[f]}] = mean(v);
        }
    for (std::size_t f = 0; f < F; ++f) {
        std::vector<double> v;
        for (std::size_t s = 0; s < S; ++s) v.push_back(scratch[s * F + f]);
        lab.scratch_mean[r1[f]] = mean(v);
    }
    lab.grid_done = true;
}

Outcome finetune_beats_scratch(Lab& lab) {
    finetune_grid(lab);
    const auto r1 = lab.with(Regime::R1_convergence), r2 = lab.with(Regime::R2_chaotic);
    double r1_best = -1.0;
    for (const auto& [_, a] : lab.scratch_mean) r1_best = std::max(r1_best, a);
    std::map<double, double> best_ft;
    for (double p : r2) {
        double b = -1.0;
        for (double f : r1) b = std::max(b, lab.ft_mean.at({p, f}));
        best_ft[p] = b;
    }
    subregime_split(*lab.sweep, best_ft, r1_best);
    const auto a2 = lab.in_2a();
    double best_2a = -1.0;
    for (double p : a2) best_2a = std::max(best_2a, best_ft.at(p));
    const double top = r2.back(), flr = r1.front();
    const double ft_top = lab.ft_mean.at({top, flr}), sc = lab.scratch_mean.at(flr);
    const bool a_ok = !a2.empty() && best_2a >= r1_best;
    const bool b_ok = ft_top <= sc + 0.005;
    std::string per;
    for (const auto& [p, b] : best_ft) per += (per.empty() ? "" : " ") + fmt(p) + ":" + fmt(b, 5);
    std::string d = "best fine-tuned by PLR {" + per + "}; 2A PLRs " + std::to_string(a2.size()) + "/" + std::to_string(r2.size()) + ", best 2A fine-tuned " +
                    (a2.empty() ? std::string("none") : fmt(best_2a, 5)) + " vs best R1 scratch " + fmt(r1_best, 5) + (a_ok ? " ok" : " FAIL") +
                    "; top-R2 PLR " + fmt(top) + " at FLR " + fmt(flr) + ": " + fmt(ft_top) + " vs scratch " +
                    fmt(sc) + " + 0.005" + (b_ok ? " ok" : " FAIL");
    return {a_ok && b_ok, d};
}

Outcome two_step_check(Lab& lab) {
    finetune_grid(lab);
    const auto a2 = lab.in_2a();
    const auto r2 = lab.with(Regime::R2_chaotic), r1 = lab.with(Regime::R1_convergence);
    if (a2.empty()) return {false, "no 2A PLR in the sweep"};
    const double plr_2b = r2.back(), plr_2a = a2.back(), flr = r1.front();
    if (plr_2b == plr_2a) return {false, "no 2B PLR in the sweep"};
    const auto guard = lab.guard();
    std::vector<double> acc(lab.tasks.size());
    parallel_for(acc.size(), lab.jobs, [&](std::size_t s) {
        acc[s] = two_step_finetune(lab.tasks[s]->ctx, plr_2b, plr_2a, flr, lab.L.seeds[s], guard)
                     .final_solution()
                     .test.accuracy;
    });
    const double two = mean(acc), from_a = lab.ft_mean.at({plr_2a, flr}), from_b = lab.ft_mean.at({plr_2b, flr});
    const bool near_a = std::abs(two - from_a) <= 0.01, above_b = two > from_b;
    return {near_a && above_b, "two_step(" + fmt(plr_2b) + ", " + fmt(plr_2a) + ", " + fmt(flr) + ") " + fmt(two) +
                                   " vs from 2A " + fmt(from_a) + (near_a ? " (within 0.01)" : " (NOT within 0.01)") +
                                   ", vs from 2B " + fmt(from_b) + (above_b ? " (above)" : " (NOT above)")};
}

Outcome threshold_shape(const Lab& lab) {
    lab.need_sweep();
    const auto& s = *lab.sweep;
    const double tau = 1e-3;
    const std::size_t cap = 20000;
    // Last two R1 grid points before lr_12 and the first two after it.
    std::size_t last_r1 = 0;
    while (last_r1 + 1 < s.grid.size() && s.labels[last_r1 + 1].regime == Regime::R1_convergence) ++last_r1;
    std::vector<std::size_t> idx;
    for (std::size_t i = last_r1 >= 1 ? last_r1 - 1 : 0; i <= std::min(last_r1 + 2, s.grid.size() - 1); ++i) idx.push_back(i);
    const auto& ctx = lab.tasks.front()->ctx;
    auto run = [&](std::size_t i) { return train_to_threshold(ctx, s.grid[i], tau, cap, lab.L.seeds.front()); };

    // Without a converging last R1 point the ratio test is vacuous: report it instead.
    const auto anchor = run(last_r1);
    if (!anchor.epochs_taken) {
        return {false, "last R1 point lr " + fmt(s.grid[last_r1]) + " never reached loss " + fmt(tau) + " in " +
                           std::to_string(cap) + " epochs (final train loss " +
                           fmt(anchor.trajectory.records.back().train_loss) + "); remaining points skipped"};
    }
    std::vector<std::optional<std::size_t>> epochs;
    std::string d = "epochs to " + fmt(tau) + ":";
    for (std::size_t i : idx) {
        const auto e = i == last_r1 ? anchor.epochs_taken : run(i).epochs_taken;
        epochs.push_back(e);
        d += " lr " + fmt(s.grid[i]) + "=" + (e ? std::to_string(*e) : "cap");
    }
    auto val = [&](const std::optional<std::size_t>& e) { return e ? static_cast<double>(*e) : INFINITY; };
    bool monotone = true;
    for (std::size_t k = 1; k < epochs.size(); ++k) monotone = monotone && val(epochs[k]) >= val(epochs[k - 1]);
    // First point past the boundary.
    const std::size_t pos = static_cast<std::size_t>(std::find(idx.begin(), idx.end(), last_r1) - idx.begin());
    bool jump = false;
    if (pos + 1 < epochs.size()) jump = !epochs[pos + 1] || val(epochs[pos + 1]) >= 5.0 * val(epochs[pos]);
    d += monotone ? ", non-decreasing" : ", NOT non-decreasing";
    d += jump ? ", >=5x or cap past the boundary" : ", no 5x jump past the boundary";
    return {monotone && jump, d};
}

Outcome norm_spread_check(const Lab& lab) {
    lab.need_sweep();
    const auto r1 = lab.with(Regime::R1_convergence), r3 = lab.with(Regime::R3_divergence);
    if (r1.size() < 2 || r3.empty()) return {false, "need two R1 points and one R3 point"};
    LabConfig L = lab.L;
    L.net.group_by = GroupBy::unit;
    const auto task = make_task(L, lab.data, L.seeds.front());
    const auto r = norm_hist_experiment(task->ctx, r3.front(), r1.front(), r1.back(), 20, L.seeds.front(), lab.guard());
    const auto& pre = r.panels[0];
    const auto& high = r.panels[2];
    const double grow = pre.spread_pretrained / pre.spread_scratch;
    const double agree = std::max(high.spread_scratch, high.spread_pretrained) /
                         std::min(high.spread_scratch, high.spread_pretrained);
    return {grow >= 2.0 && agree <= 2.0,
            "spread init " + fmt(pre.spread_scratch) + " -> after R3 pre-training at " + fmt(r3.front()) + " " +
                fmt(pre.spread_pretrained) + " (x" + fmt(grow, 3) + ", need >= 2); after FLR " + fmt(r1.back()) +
                " scratch " + fmt(high.spread_scratch) + " vs pre-trained " + fmt(high.spread_pretrained) + " (x" +
                fmt(agree, 3) + ", need <= 2)"};
}

Outcome plumbing(const Lab& lab, const fs::path& out, const fs::path& smoke) {
    std::vector<std::string> bad;
    const auto& t = *lab.tasks.front();
    const double lr = lab.L.lr_grid[lab.L.lr_grid.size() / 3];

    // SWA mean vs checkpoint files.
    ProtocolContext ctx = t.ctx;
    ctx.epochs = 20;
    const auto swa = swa_protocol(ctx, lr, 5, 0);
    std::vector<std::vector<double>> flats;
    for (const auto& [e, p] : swa.swa_checkpoints) {
        const auto f = out / "swa" / ("epoch_" + std::to_string(e) + ".silab");
        save_checkpoint(f, {t.net.spec().hash(), p});
        flats.push_back(load_checkpoint(f).params.flat());
    }
    std::vector<double> m(flats.front().size());
    for (std::size_t i = 0; i < m.size(); ++i) {
        double s = 0.0;
        for (const auto& f : flats) s += f[i];
        m[i] = s / static_cast<double>(flats.size());
    }
    if (m != swa.params.at("swa_mean").flat()) bad.push_back("SWA mean differs from file arithmetic");

    // Concatenation.
    TrainOptions o;
    o.batch_size = lab.L.batch_size;
    o.eval_batch = lab.L.eval_batch;
    const auto whole = train(t.net, t.init, lab.data.train, nullptr, Schedule{{{lr, 10}, {lr / 10, 10}}}, lab.L.opt, o);
    const auto first = train(t.net, t.init, lab.data.train, nullptr, Schedule{{{lr, 10}}}, lab.L.opt, o);
    o.epoch_offset = 10;
    const auto second = train(t.net, first.params, lab.data.train, nullptr, Schedule{{{lr / 10, 10}}}, first.state, o);
    if (!(whole.params.groups() == second.params.groups())) bad.push_back("concatenation identity");

    // Every artifact from manifests.
    std::ostringstream sink;
    CommandOptions co;
    co.log = &sink;
    co.jobs = lab.jobs;
    co.out_root = out / "a";
    fs::remove_all(out / "a");
    fs::remove_all(out / "b");
    const LabConfig S = lab_config(Config::load(smoke));
    cmd_sweep(S, co);
    for (const auto& k : experiment_kinds()) cmd_experiment(S, k, co);
    co.out_root = out / "b";
    std::size_t replayed = 0;
    for (const auto& e : fs::directory_iterator(out / "a" / S.name)) {
        const auto m = parse_manifest(read_file(e.path() / "manifest.json"), e.path().string());
        const LabConfig R = lab_config(m.config);
        if (m.kind == "sweep") {
            cmd_sweep(R, co);
        } else {
            cmd_experiment(R, e.path().filename().string(), co);
        }
        ++replayed;
    }
    const auto ta = tree(out / "a"), tb = tree(out / "b");
    if (ta != tb) {
        std::size_t diff = 0;
        for (const auto& [k, v] : ta) diff += !tb.count(k) || tb.at(k) != v;
        bad.push_back(std::to_string(diff) + " of " + std::to_string(ta.size()) + " artifacts differ on replay");
    }
    return {bad.empty(), bad.empty() ? "SWA mean exact, concatenation exact, " + std::to_string(ta.size()) +
                                           " artifacts from " + std::to_string(replayed) +
                                           " manifests replayed bit-identically"
                                     : join(bad, "; ")};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"silab acceptance checks"};
    fs::path config = fs::path(SILAB_SOURCE_DIR) / "configs" / "acceptance_sweep.ini";
    fs::path smoke = fs::path(SILAB_SOURCE_DIR) / "configs" / "smoke.ini";
    fs::path out = fs::temp_directory_path() / "silab_acceptance";
    std::size_t jobs = 1;
    std::vector<int> only;
    app.add_option("--config", config, "acceptance task config")->check(CLI::ExistingFile);
    app.add_option("--smoke", smoke, "small config for the artifact replay")->check(CLI::ExistingFile);
    app.add_option("--out", out, "scratch directory");
    app.add_option("--jobs,-j", jobs)->check(CLI::PositiveNumber);
    app.add_option("--only", only, "criterion ids to run")->delimiter(',');
    CLI11_PARSE(app, argc, argv);

    Lab lab;
    try {
        lab.L = lab_config(Config::load(config));
        lab.data = load_datasets(lab.L.data);
        for (auto s : lab.L.seeds) lab.tasks.push_back(make_task(lab.L, lab.data, s));
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    lab.jobs = jobs;
    fs::create_directories(out);

    const std::vector<Criterion> all{
        {1, "scale invariance", 10, scale_invariance},
        {2, "gradient vs central differences", 60, gradient_check},
        {3, "gradient orthogonality", 10, orthogonality},
        {4, "sphere invariant", 30, [&] { return sphere_invariant(lab); }},
        {5, "geometry oracles", 5, [&] { return geometry_oracles(lab, out); }},
        {6, "three regimes", 15 * 60, [&] { return three_regimes(lab); }},
        {7, "fine-tuning from 2A beats regime 1", 30 * 60, [&] { return finetune_beats_scratch(lab); }},
        {8, "two-step fine-tuning", 15 * 60, [&] { return two_step_check(lab); }},
        {9, "time to threshold across lr_12", 20 * 60, [&] { return threshold_shape(lab); }},
        {10, "norm spread after regime 3", 10 * 60, [&] { return norm_spread_check(lab); }},
        {11, "protocol plumbing and replay", 5 * 60, [&] { return plumbing(lab, out, smoke); }},
    };
    const std::set<int> want(only.begin(), only.end());
    const bool needs_sweep = want.empty() || std::any_of(want.begin(), want.end(), [](int i) { return i >= 7 && i <= 10; });

    int failed = 0;
    Json summary = Json::array();
    for (const auto& c : all) {
        const bool selected = want.empty() || want.count(c.id) || (c.id == 6 && needs_sweep);
        if (!selected) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome r;
        try {
            r = c.run();
        } catch (const std::exception& e) {
            r = {false, std::string("error: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (secs > c.limit_s) {
            r.pass = false;
            r.detail += "; runtime over budget";
        }
        failed += !r.pass;
        std::printf("%s %2d %s: %s [%.1f s, budget %.0f s]\n", r.pass ? "PASS" : "FAIL", c.id, c.name.c_str(),
                    r.detail.c_str(), secs, c.limit_s);
        std::fflush(stdout);
        summary.push_back(Json{{"id", c.id}, {"name", c.name}, {"pass", r.pass}, {"detail", r.detail}, {"seconds", secs}});
    }
    write_text(out / "acceptance.json", dump(summary));
    return failed ? 1 : 0;
}
