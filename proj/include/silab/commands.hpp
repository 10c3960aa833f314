#ifndef SILAB_COMMANDS_HPP
#define SILAB_COMMANDS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "silab/checkpoint.hpp"
#include "silab/config.hpp"
#include "silab/error.hpp"
#include "silab/geometry.hpp"
#include "silab/io.hpp"
#include "silab/lab.hpp"
#include "silab/pool.hpp"
#include "silab/protocols.hpp"
#include "silab/regimes.hpp"
#include "silab/svg.hpp"
#include "silab/text.hpp"

namespace silab {

namespace fs = std::filesystem;

struct CommandOptions {
    fs::path out_root = "silab_out";
    std::size_t jobs = 1;
    bool allow_any_regime = false;
    std::ostream* log = &std::cerr;
};

/// SILAB_OUT when set, otherwise `fallback`.
inline fs::path output_root(const fs::path& fallback) {
    if (const char* env = std::getenv("SILAB_OUT"); env && *env) return env;
    return fallback;
}

namespace detail {

/// "pretrained@200" -> "epoch_200"; other ids keep their name.
inline std::string checkpoint_file(const std::string& solution_id) {
    const auto at = solution_id.find('@');
    if (at != std::string::npos) return "checkpoints/epoch_" + solution_id.substr(at + 1) + ".silab";
    return "checkpoints/" + solution_id + ".silab";
}

inline RunStatus status_of(bool diverged) { return diverged ? RunStatus::diverged : RunStatus::done; }

inline void finish_manifest(const fs::path& dir, RunManifest m) {
    std::sort(m.artifacts.begin(), m.artifacts.end());
    write_text(dir / "manifest.json", dump(manifest_json(m)));
}

/// Mean and population std over seeds.
inline std::pair<double, double> mean_std(const std::vector<double>& v) {
    if (v.empty()) return {std::nan(""), std::nan("")};
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

inline Json mean_std_json(const std::vector<double>& v) {
    const auto [m, s] = mean_std(v);
    return Json{{"mean", num(m)}, {"std", num(s)}, {"values", v}};
}

inline void add_boundaries(LineChart& c, const RegimeBoundaries& b) {
    if (b.lr_12) c.vlines.push_back({*b.lr_12, "1|2", false});
    if (b.lr_23) c.vlines.push_back({*b.lr_23, "2|3", false});
    if (b.lr_2a2b) c.vlines.push_back({*b.lr_2a2b, "2A|2B", true});
}

} // namespace detail

/// Writes one training run: trajectory.csv, the given checkpoints, protocol_run.json
/// when `run` is set, and a manifest listing them.
inline void write_run_dir(const fs::path& dir, RunManifest m, const Trajectory& traj,
                          const std::map<std::string, const ParamVector*>& checkpoints, std::uint64_t spec_hash,
                          const ProtocolRun* run = nullptr) {
    fs::create_directories(dir);
    write_text(dir / "trajectory.csv", trajectory_csv(traj));
    m.artifacts.push_back("trajectory.csv");
    std::map<std::string, std::string> files;
    std::set<std::string> written;
    for (const auto& [id, p] : checkpoints) {
        const std::string rel = detail::checkpoint_file(id);
        files[id] = rel;
        // SWA averaging starts at the pre-trained epoch, so that file may already exist.
        if (!written.insert(rel).second) continue;
        save_checkpoint(dir / rel, Checkpoint{spec_hash, *p});
        m.artifacts.push_back(rel);
    }
    if (run) {
        write_text(dir / "protocol_run.json", dump(protocol_run_json(*run, m.id, files)));
        m.artifacts.push_back("protocol_run.json");
    }
    detail::finish_manifest(dir, std::move(m));
}

inline void write_protocol_run(const fs::path& parent, const LabConfig& L, const ProtocolRun& r,
                               std::uint64_t spec_hash, const std::string& tag, bool with_swa_checkpoints = false) {
    RunManifest m;
    m.id = run_id(L.raw, r.seed, tag);
    m.kind = "protocol";
    m.seed = r.seed;
    m.mode = to_string(L.opt.mode);
    bool diverged = false;
    for (const auto& s : r.solutions) diverged = diverged || s.diverged;
    m.status = detail::status_of(diverged);
    m.config = L.raw;
    m.extra = Json{{"tag", tag}};
    std::map<std::string, const ParamVector*> ck;
    for (const auto& s : r.solutions) ck[s.id] = &r.params.at(s.id);
    if (const auto it = r.params.find("swa_mean"); it != r.params.end()) ck["swa_mean"] = &it->second;
    if (with_swa_checkpoints) {
        for (const auto& [e, p] : r.swa_checkpoints) ck["swa@" + std::to_string(e)] = &p;
    }
    write_run_dir(parent / "runs" / m.id, m, r.trajectory, ck, spec_hash, &r);
}

/// Regime labels for experiment preconditions: the configured sweep_result file, or
/// none when any regime is allowed.
inline std::optional<SweepResult> load_guard_sweep(const LabConfig& L, const CommandOptions& o) {
    if (L.experiment.sweep_result) {
        const fs::path p = *L.experiment.sweep_result;
        if (!fs::exists(p)) throw ConfigError(L.raw.origin() + ": [experiment] sweep_result: no such file " + p.string());
        return parse_sweep_json(read_file(p), p.string());
    }
    if (!(o.allow_any_regime || L.experiment.allow_any_regime)) {
        throw ConfigError(L.raw.origin() + ": [experiment] sweep_result is required to check regimes (or set "
                                           "allow_any_regime = true)");
    }
    return std::nullopt;
}

struct SweepOutput {
    SweepResult result;
    fs::path dir;
};

/// Sweep over the config's LR grid for its first seed: one run directory per grid
/// point plus sweep_result.json, regimes.csv and regimes.svg.
inline SweepOutput cmd_sweep(const LabConfig& L, const CommandOptions& o) {
    if (L.lr_grid.empty()) throw ConfigError(L.raw.origin() + ": [sweep] section is required");
    const Datasets data = load_datasets(L.data);
    const std::uint64_t seed = L.seeds.front();
    const fs::path dir = o.out_root / L.name / ("sweep_seed" + std::to_string(seed));
    const std::uint64_t hash = net_spec(L, data, seed).hash();
    std::vector<std::string> run_ids;

    SweepResult res = run_sweep(L, data, seed, o.jobs, [&](std::size_t, const SweepRun& r) {
        RunManifest m;
        m.id = run_id(L.raw, seed, "sweep lr=" + format_double(r.lr));
        m.kind = "sweep_run";
        m.seed = seed;
        m.mode = to_string(L.opt.mode);
        m.status = detail::status_of(r.stage.diverged());
        m.config = L.raw;
        m.extra = Json{{"lr", r.lr}, {"regime", to_string(r.label.regime)}};
        write_run_dir(dir / "runs" / m.id, m, r.stage.trajectory,
                      {{"final@" + std::to_string(r.stage.end_epoch), &r.stage.params}}, hash);
        run_ids.push_back(m.id);
        *o.log << "lr=" << format_double(r.lr) << " " << to_string(r.label.regime)
               << " tail_acc=" << format_double(r.label.tail_mean_acc) << "\n";
    });

    write_text(dir / "sweep_result.json", dump(sweep_json(res, L.thresholds, seed)));
    write_text(dir / "regimes.csv", regimes_csv(res));

    LineChart c;
    c.title = "Tail test accuracy vs learning rate";
    c.x_label = "learning rate";
    c.y_label = "tail mean accuracy";
    c.log_x = true;
    std::map<Regime, Series> by_regime;
    const std::map<Regime, std::string> colors{{Regime::R1_convergence, "#2ca02c"},
                                               {Regime::R2_chaotic, "#ff7f0e"},
                                               {Regime::R3_divergence, "#d62728"}};
    Series all{"all", {}, "#999999", false};
    for (std::size_t i = 0; i < res.grid.size(); ++i) {
        const auto r = res.labels[i].regime;
        auto& s = by_regime[r];
        s.name = to_string(r);
        s.color = colors.at(r);
        s.points.push_back({res.grid[i], res.labels[i].tail_mean_acc});
        all.points.push_back({res.grid[i], res.labels[i].tail_mean_acc});
    }
    c.series.push_back(all);
    for (auto& [_, s] : by_regime) c.series.push_back(s);
    detail::add_boundaries(c, res.boundaries);
    write_text(dir / "regimes.svg", render_svg(c));

    RunManifest m;
    m.id = run_id(L.raw, seed, "sweep");
    m.kind = "sweep";
    m.seed = seed;
    m.mode = to_string(L.opt.mode);
    m.config = L.raw;
    m.artifacts = {"sweep_result.json", "regimes.csv", "regimes.svg"};
    m.extra = Json{{"runs", run_ids}};
    detail::finish_manifest(dir, m);
    return {std::move(res), dir};
}

inline const std::set<std::string>& experiment_kinds() {
    static const std::set<std::string> k{"finetune_grid", "swa_grid", "two_step", "to_threshold", "norm_hist"};
    return k;
}

namespace detail {

struct ExperimentEnv {
    const LabConfig& L;
    const CommandOptions& o;
    Datasets data;
    std::optional<SweepResult> sweep;
    RegimeGuard guard;
    fs::path dir;
    std::vector<std::unique_ptr<Task>> tasks;  // one per seed

    ExperimentEnv(const LabConfig& lab, const CommandOptions& opts, const std::string& kind)
        : L(lab), o(opts), data(load_datasets(lab.data)) {
        sweep = load_guard_sweep(L, o);
        guard.sweep = sweep ? &*sweep : nullptr;
        guard.allow_any = o.allow_any_regime || L.experiment.allow_any_regime;
        dir = o.out_root / L.name / kind;
        for (auto s : L.seeds) tasks.push_back(make_task(L, data, s));
    }

    std::uint64_t hash(std::size_t k) const { return tasks[k]->net.spec().hash(); }
    double test_acc(const Solution& s) const { return data.test.size() ? s.test.accuracy : s.train.accuracy; }

    void boundaries(LineChart& c) const {
        if (sweep) add_boundaries(c, sweep->boundaries);
    }

    void finish(Json summary, std::vector<std::string> svgs) const {
        write_text(dir / "experiment.json", dump(summary));
        RunManifest m;
        m.id = run_id(L.raw, L.seeds.front(), "experiment " + dir.filename().string());
        m.kind = "experiment";
        m.seed = L.seeds.front();
        m.mode = to_string(L.opt.mode);
        m.config = L.raw;
        m.artifacts = std::move(svgs);
        m.artifacts.push_back("experiment.json");
        finish_manifest(dir, m);
    }
};

inline std::vector<double> require_list(const LabConfig& L, const std::vector<double>& v, const char* key) {
    if (v.empty()) throw ConfigError(L.raw.origin() + ": [experiment] " + key + " is required for this experiment");
    return v;
}

inline double require_value(const LabConfig& L, const std::optional<double>& v, const char* key) {
    if (!v) throw ConfigError(L.raw.origin() + ": [experiment] " + key + " is required for this experiment");
    return *v;
}

inline void finetune_grid(ExperimentEnv& env) {
    const auto& L = env.L;
    const auto plrs = require_list(L, L.experiment.plrs, "plrs");
    const auto flrs = require_list(L, L.experiment.flrs, "flrs");
    for (double f : flrs) env.guard.require(f, Regime::R1_convergence, "flr");
    const std::size_t S = env.tasks.size(), P = plrs.size(), F = flrs.size();

    // Work items: (seed, plr) fine-tune chains, then (seed, flr) from-scratch runs.
    std::vector<std::vector<ProtocolRun>> chains(S * P);
    std::vector<Stage> scratch(S * F);
    parallel_for(S * P + S * F, env.o.jobs, [&](std::size_t i) {
        if (i < S * P) {
            const auto& ctx = env.tasks[i / P]->ctx;
            const std::uint64_t seed = L.seeds[i / P];
            const Stage pre = pretrain(ctx, plrs[i % P], seed);
            for (double f : flrs) chains[i].push_back(pretrain_finetune(ctx, plrs[i % P], f, seed, env.guard, &pre));
        } else {
            const std::size_t j = i - S * P;
            scratch[j] = pretrain(env.tasks[j / F]->ctx, flrs[j % F], L.seeds[j / F]);
        }
    });

    Json rows = Json::array();
    LineChart acc;
    acc.title = "Fine-tuned test accuracy vs pre-training LR";
    acc.x_label = "pre-training learning rate";
    acc.y_label = "test accuracy";
    acc.log_x = true;
    Series pre_line{"pre-trained", {}, "#000000", true};
    std::vector<Series> ft_lines(F);
    for (std::size_t f = 0; f < F; ++f) ft_lines[f].name = "FLR " + format_double(flrs[f]);

    LineChart geo;
    geo.title = "Geometry of fine-tuned solutions (smallest vs largest FLR)";
    geo.x_label = "pre-training learning rate";
    geo.y_label = "angle (rad) / barrier";
    geo.log_x = true;
    Series angle{"angle", {}, "", true}, btr{"barrier train", {}, "", true}, bte{"barrier test", {}, "", true};
    std::vector<std::pair<std::string, GeometryReport>> geo_pairs;

    for (std::size_t p = 0; p < P; ++p) {
        Json row{{"plr", plrs[p]}};
        std::vector<double> pre_acc;
        std::vector<std::vector<double>> ft_acc(F);
        for (std::size_t s = 0; s < S; ++s) {
            const auto& chain = chains[s * P + p];
            pre_acc.push_back(env.test_acc(chain.front().solutions.front()));
            for (std::size_t f = 0; f < F; ++f) {
                ft_acc[f].push_back(env.test_acc(chain[f].final_solution()));
                write_protocol_run(env.dir, L, chain[f], env.hash(s),
                                   "finetune plr=" + format_double(plrs[p]) + " flr=" + format_double(flrs[f]));
            }
        }
        row["pretrained"] = mean_std_json(pre_acc);
        Json ft = Json::array();
        for (std::size_t f = 0; f < F; ++f) {
            Json e{{"flr", flrs[f]}};
            e["test_acc"] = mean_std_json(ft_acc[f]);
            ft.push_back(e);
            ft_lines[f].points.push_back({plrs[p], mean_std(ft_acc[f]).first});
        }
        row["finetuned"] = ft;
        pre_line.points.push_back({plrs[p], mean_std(pre_acc).first});

        if (F >= 2) {
            const auto& chain = chains[p];  // first seed
            const auto& a = chain.front().params.at(chain.front().final_solution().id);
            const auto& b = chain.back().params.at(chain.back().final_solution().id);
            const GeometryReport g = linear_barrier(env.tasks[0]->net, a, b, env.data.train,
                                                    env.data.test.size() ? &env.data.test : nullptr,
                                                    L.grid_points, L.eval_batch);
            row["geometry"] = geometry_json("plr=" + format_double(plrs[p]), "flr=" + format_double(flrs.front()),
                                            "flr=" + format_double(flrs.back()), g);
            angle.points.push_back({plrs[p], g.angle_rad});
            btr.points.push_back({plrs[p], g.barrier_train});
            if (g.barrier_test) bte.points.push_back({plrs[p], *g.barrier_test});
            geo_pairs.emplace_back("plr=" + format_double(plrs[p]), g);
        }
        rows.push_back(row);
    }

    Json scratch_rows = Json::array();
    for (std::size_t f = 0; f < F; ++f) {
        std::vector<double> v;
        for (std::size_t s = 0; s < S; ++s) {
            const auto& st = scratch[s * F + f];
            const auto m = env.data.test.size()
                               ? env.tasks[s]->net.evaluate(st.params, env.data.test, L.eval_batch)
                               : env.tasks[s]->net.evaluate(st.params, env.data.train, L.eval_batch);
            v.push_back(m.accuracy);
        }
        Json e{{"flr", flrs[f]}};
        e["test_acc"] = mean_std_json(v);
        scratch_rows.push_back(e);
        const double m = mean_std(v).first;
        acc.series.push_back({"scratch FLR " + format_double(flrs[f]), {{plrs.front(), m}, {plrs.back(), m}}, "", false});
    }
    acc.series.insert(acc.series.begin(), pre_line);
    for (std::size_t f = 0; f < F; ++f) acc.series.insert(acc.series.begin() + 1 + f, ft_lines[f]);
    env.boundaries(acc);
    write_text(env.dir / "finetune.svg", render_svg(acc));
    std::vector<std::string> svgs{"finetune.svg"};
    if (F >= 2) {
        geo.series = {angle, btr, bte};
        env.boundaries(geo);
        write_text(env.dir / "geometry.svg", render_svg(geo));
        write_text(env.dir / "geometry.csv", geometry_csv(geo_pairs));
        svgs.push_back("geometry.svg");
        svgs.push_back("geometry.csv");
    }
    env.finish(Json{{"kind", "finetune_grid"}, {"seeds", L.seeds}, {"rows", rows}, {"scratch", scratch_rows}}, svgs);
}

inline void swa_grid(ExperimentEnv& env) {
    const auto& L = env.L;
    const auto plrs = require_list(L, L.experiment.plrs, "plrs");
    const auto& ns = L.experiment.swa_n;
    const std::size_t S = env.tasks.size(), P = plrs.size();
    std::vector<std::vector<ProtocolRun>> runs(S * P);
    parallel_for(S * P, env.o.jobs, [&](std::size_t i) {
        const auto& ctx = env.tasks[i / P]->ctx;
        const Stage pre = pretrain(ctx, plrs[i % P], L.seeds[i / P]);
        for (auto n : ns) runs[i].push_back(swa_protocol(ctx, plrs[i % P], n, L.seeds[i / P], &pre));
    });
    LineChart c;
    c.title = "SWA test accuracy vs pre-training LR";
    c.x_label = "pre-training learning rate";
    c.y_label = "test accuracy";
    c.log_x = true;
    Series pre_line{"pre-trained", {}, "#000000", true};
    std::vector<Series> lines(ns.size());
    for (std::size_t k = 0; k < ns.size(); ++k) lines[k].name = "SWA N=" + std::to_string(ns[k]);
    Json rows = Json::array();
    for (std::size_t p = 0; p < P; ++p) {
        Json row{{"plr", plrs[p]}};
        std::vector<double> pre_acc;
        std::vector<std::vector<double>> swa_acc(ns.size());
        for (std::size_t s = 0; s < S; ++s) {
            const auto& rs = runs[s * P + p];
            pre_acc.push_back(env.test_acc(rs.front().solutions.front()));
            for (std::size_t k = 0; k < ns.size(); ++k) {
                swa_acc[k].push_back(env.test_acc(rs[k].final_solution()));
                write_protocol_run(env.dir, L, rs[k], env.hash(s),
                                   "swa plr=" + format_double(plrs[p]) + " n=" + std::to_string(ns[k]), true);
            }
        }
        row["pretrained"] = mean_std_json(pre_acc);
        pre_line.points.push_back({plrs[p], mean_std(pre_acc).first});
        Json swa = Json::array();
        for (std::size_t k = 0; k < ns.size(); ++k) {
            Json e{{"n", ns[k]}};
            e["test_acc"] = mean_std_json(swa_acc[k]);
            swa.push_back(e);
            lines[k].points.push_back({plrs[p], mean_std(swa_acc[k]).first});
        }
        row["swa"] = swa;
        rows.push_back(row);
    }
    c.series.push_back(pre_line);
    for (auto& l : lines) c.series.push_back(l);
    env.boundaries(c);
    write_text(env.dir / "swa.svg", render_svg(c));
    env.finish(Json{{"kind", "swa_grid"}, {"seeds", L.seeds}, {"rows", rows}}, {"swa.svg"});
}

inline void two_step(ExperimentEnv& env) {
    const auto& L = env.L;
    const double plr_2a = require_value(L, L.experiment.plr_2a, "plr_2a");
    const double plr_2b = require_value(L, L.experiment.plr_2b, "plr_2b");
    const auto flrs = require_list(L, L.experiment.flrs, "flrs");
    if (plr_2b < plr_2a) throw ConfigError(L.raw.origin() + ": [experiment] plr_2b must not be below plr_2a");
    for (double f : flrs) env.guard.require(f, Regime::R1_convergence, "flr");
    const std::size_t S = env.tasks.size(), F = flrs.size();
    struct Item {
        std::vector<ProtocolRun> two, from_a, from_b;
    };
    std::vector<Item> items(S);
    parallel_for(S, env.o.jobs, [&](std::size_t s) {
        const auto& ctx = env.tasks[s]->ctx;
        const std::uint64_t seed = L.seeds[s];
        const Stage pre_a = pretrain(ctx, plr_2a, seed);
        const Stage pre_b = pretrain(ctx, plr_2b, seed);
        for (double f : flrs) {
            items[s].two.push_back(two_step_finetune(ctx, plr_2b, plr_2a, f, seed, env.guard, &pre_b));
            items[s].from_a.push_back(pretrain_finetune(ctx, plr_2a, f, seed, env.guard, &pre_a));
            items[s].from_b.push_back(pretrain_finetune(ctx, plr_2b, f, seed, env.guard, &pre_b));
        }
    });
    LineChart c;
    c.title = "Gradual fine-tuning through a lower pre-training LR";
    c.x_label = "fine-tuning learning rate";
    c.y_label = "test accuracy";
    c.log_x = true;
    Series s_two{"two-step " + format_double(plr_2b) + " -> " + format_double(plr_2a), {}, "#ff7f0e", true};
    Series s_a{"from PLR " + format_double(plr_2a), {}, "#2ca02c", true};
    Series s_b{"from PLR " + format_double(plr_2b), {}, "#1f77b4", true};
    Json rows = Json::array();
    for (std::size_t f = 0; f < F; ++f) {
        std::vector<double> two, a, b;
        for (std::size_t s = 0; s < S; ++s) {
            two.push_back(env.test_acc(items[s].two[f].final_solution()));
            a.push_back(env.test_acc(items[s].from_a[f].final_solution()));
            b.push_back(env.test_acc(items[s].from_b[f].final_solution()));
            const std::string ft = " flr=" + format_double(flrs[f]);
            write_protocol_run(env.dir, L, items[s].two[f], env.hash(s), "two_step" + ft);
            write_protocol_run(env.dir, L, items[s].from_a[f], env.hash(s), "finetune plr=" + format_double(plr_2a) + ft);
            write_protocol_run(env.dir, L, items[s].from_b[f], env.hash(s), "finetune plr=" + format_double(plr_2b) + ft);
        }
        Json row{{"flr", flrs[f]}};
        row["two_step"] = mean_std_json(two);
        row["finetune_2a"] = mean_std_json(a);
        row["finetune_2b"] = mean_std_json(b);
        rows.push_back(row);
        s_two.points.push_back({flrs[f], mean_std(two).first});
        s_a.points.push_back({flrs[f], mean_std(a).first});
        s_b.points.push_back({flrs[f], mean_std(b).first});
    }
    c.series = {s_two, s_a, s_b};
    write_text(env.dir / "two_step.svg", render_svg(c));
    env.finish(Json{{"kind", "two_step"}, {"seeds", L.seeds}, {"plr_2a", plr_2a}, {"plr_2b", plr_2b}, {"rows", rows}},
               {"two_step.svg"});
}

inline void to_threshold(ExperimentEnv& env) {
    const auto& L = env.L;
    const auto lrs = require_list(L, L.experiment.lrs, "lrs");
    const std::size_t S = env.tasks.size(), N = lrs.size();
    std::vector<ProtocolRun> runs(S * N);
    parallel_for(S * N, env.o.jobs, [&](std::size_t i) {
        runs[i] = train_to_threshold(env.tasks[i / N]->ctx, lrs[i % N], L.experiment.threshold,
                                     L.experiment.max_epochs, L.seeds[i / N]);
    });
    LineChart c;
    c.title = "Epochs to reach the training-loss threshold";
    c.x_label = "learning rate";
    c.y_label = "epochs";
    c.log_x = true;
    c.log_y = true;
    LineChart a;
    a.title = "Test accuracy at the threshold";
    a.x_label = "learning rate";
    a.y_label = "test accuracy";
    a.log_x = true;
    Json rows = Json::array();
    std::vector<Series> per_seed(S), acc_seed(S);
    for (std::size_t s = 0; s < S; ++s) {
        per_seed[s].name = acc_seed[s].name = "seed " + std::to_string(L.seeds[s]);
    }
    for (std::size_t k = 0; k < N; ++k) {
        Json row{{"lr", lrs[k]}};
        Json per = Json::array();
        for (std::size_t s = 0; s < S; ++s) {
            const auto& r = runs[s * N + k];
            write_protocol_run(env.dir, L, r, env.hash(s), "to_threshold lr=" + format_double(lrs[k]));
            per.push_back(Json{{"seed", L.seeds[s]},
                               {"epochs_taken", r.epochs_taken ? Json(*r.epochs_taken) : Json(nullptr)},
                               {"test_acc", num(env.test_acc(r.final_solution()))}});
            per_seed[s].points.push_back(
                {lrs[k], r.epochs_taken ? static_cast<double>(*r.epochs_taken) : std::nan("")});
            acc_seed[s].points.push_back({lrs[k], env.test_acc(r.final_solution())});
        }
        row["runs"] = per;
        rows.push_back(row);
    }
    c.series = per_seed;
    a.series = acc_seed;
    env.boundaries(c);
    env.boundaries(a);
    write_text(env.dir / "epochs.svg", render_svg(c));
    write_text(env.dir / "accuracy.svg", render_svg(a));
    env.finish(Json{{"kind", "to_threshold"}, {"seeds", L.seeds}, {"threshold", L.experiment.threshold},
                    {"max_epochs", L.experiment.max_epochs}, {"rows", rows}},
               {"epochs.svg", "accuracy.svg"});
}

inline void norm_hist(ExperimentEnv& env) {
    const auto& L = env.L;
    const double plr3 = require_value(L, L.experiment.plr3, "plr3");
    std::optional<double> lo = L.experiment.flr_low, hi = L.experiment.flr_high;
    if ((!lo || !hi) && env.sweep) {
        const auto r1 = env.sweep->grid_in(Regime::R1_convergence);
        if (!r1.empty()) {
            if (!lo) lo = r1.front();
            if (!hi) hi = r1.back();
        }
    }
    const double flr_low = require_value(L, lo, "flr_low");
    const double flr_high = require_value(L, hi, "flr_high");
    const std::size_t S = env.tasks.size();
    std::vector<NormHistResult> res(S);
    parallel_for(S, env.o.jobs, [&](std::size_t s) {
        res[s] = norm_hist_experiment(env.tasks[s]->ctx, plr3, flr_low, flr_high, L.experiment.bins, L.seeds[s],
                                      env.guard);
    });
    Json seeds = Json::array();
    std::vector<std::string> artifacts;
    for (std::size_t s = 0; s < S; ++s) {
        const std::string suffix = "_seed" + std::to_string(L.seeds[s]);
        write_text(env.dir / ("norm_hist" + suffix + ".csv"), norm_hist_csv(res[s]));
        artifacts.push_back("norm_hist" + suffix + ".csv");
        Json panels = Json::array();
        for (const auto& p : res[s].panels) {
            panels.push_back(Json{{"panel", p.name},
                                  {"scratch", p.scratch_label},
                                  {"pretrained", p.pretrained_label},
                                  {"spread_scratch", num(p.spread_scratch)},
                                  {"spread_pretrained", num(p.spread_pretrained)},
                                  {"edges_log10", p.hist_scratch.edges},
                                  {"counts_scratch", p.hist_scratch.counts},
                                  {"counts_pretrained", p.hist_pretrained.counts}});
            if (s == 0) {
                LineChart c;
                c.title = "Group norm histogram: " + p.name;
                c.x_label = "log10 group norm";
                c.y_label = "groups";
                Series a{p.scratch_label, {}, "#1f77b4", true}, b{p.pretrained_label, {}, "#d62728", true};
                for (std::size_t k = 0; k < p.hist_scratch.counts.size(); ++k) {
                    const double x = 0.5 * (p.hist_scratch.edges[k] + p.hist_scratch.edges[k + 1]);
                    a.points.push_back({x, static_cast<double>(p.hist_scratch.counts[k])});
                    b.points.push_back({x, static_cast<double>(p.hist_pretrained.counts[k])});
                }
                c.series = {a, b};
                write_text(env.dir / ("hist_" + p.name + ".svg"), render_svg(c));
                artifacts.push_back("hist_" + p.name + ".svg");
            }
        }
        for (const auto& r : res[s].runs) {
            write_protocol_run(env.dir, L, r, env.hash(s), "norm_hist " + r.lineage[1]);
        }
        seeds.push_back(Json{{"seed", L.seeds[s]}, {"panels", panels}});
    }
    env.finish(Json{{"kind", "norm_hist"}, {"plr3", plr3}, {"flr_low", flr_low}, {"flr_high", flr_high},
                    {"group_by", to_string(L.net.group_by)}, {"seeds", seeds}},
               artifacts);
}

} // namespace detail

/// Runs one experiment kind; returns its output directory.
inline fs::path cmd_experiment(const LabConfig& L, const std::string& kind, const CommandOptions& o) {
    if (!experiment_kinds().count(kind)) throw ConfigError("unknown experiment kind '" + kind + "'");
    detail::ExperimentEnv env(L, o, kind);
    if (kind == "finetune_grid") detail::finetune_grid(env);
    else if (kind == "swa_grid") detail::swa_grid(env);
    else if (kind == "two_step") detail::two_step(env);
    else if (kind == "to_threshold") detail::to_threshold(env);
    else detail::norm_hist(env);
    return env.dir;
}

/// Angle, barriers and interpolation profiles for every pair of checkpoints, written to
/// geometry.csv, geometry_summary.json and geometry.svg.
inline fs::path cmd_geometry(const LabConfig& L, std::uint64_t seed, const std::vector<fs::path>& checkpoints,
                             const CommandOptions& o) {
    if (checkpoints.size() < 2) throw ConfigError("geometry needs at least two checkpoints");
    const Datasets data = load_datasets(L.data);
    const auto task = make_task(L, data, seed);
    std::vector<ParamVector> ps;
    std::string key;
    for (const auto& p : checkpoints) {
        Checkpoint ck = load_checkpoint(p);
        if (ck.spec_hash != task->net.spec().hash()) {
            throw ConfigError(p.string() + ": checkpoint was written for a different net (spec hash " +
                              hex64(ck.spec_hash) + ", config gives " + hex64(task->net.spec().hash()) + ")");
        }
        task->net.check_params(ck.params);
        ps.push_back(std::move(ck.params));
        key += p.filename().string() + ";" + hex64(fnv1a64(encode_checkpoint(Checkpoint{0, ps.back()})));
    }
    const fs::path dir = o.out_root / L.name / "geometry" / hex64(fnv1a64(key));
    std::vector<std::pair<std::string, GeometryReport>> reports;
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (std::size_t i = 0; i < ps.size(); ++i)
        for (std::size_t j = i + 1; j < ps.size(); ++j) pairs.emplace_back(i, j);
    std::vector<GeometryReport> out(pairs.size());
    parallel_for(pairs.size(), o.jobs, [&](std::size_t k) {
        out[k] = linear_barrier(task->net, ps[pairs[k].first], ps[pairs[k].second], data.train,
                                data.test.size() ? &data.test : nullptr, L.grid_points, L.eval_batch);
    });
    Json summary = Json::array();
    LineChart c;
    c.title = "Error along linear paths (alpha weights the first checkpoint)";
    c.x_label = "alpha";
    c.y_label = "error";
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        const std::string id = std::to_string(pairs[k].first) + "-" + std::to_string(pairs[k].second);
        reports.emplace_back(id, out[k]);
        summary.push_back(geometry_json(id, checkpoints[pairs[k].first].string(),
                                        checkpoints[pairs[k].second].string(), out[k]));
        Series tr{id + " train", {}, "", false}, te{id + " test", {}, "", false};
        for (const auto& pt : out[k].profile) {
            tr.points.push_back({pt.alpha, pt.train_error});
            te.points.push_back({pt.alpha, pt.test_error});
        }
        c.series.push_back(tr);
        if (data.test.size()) c.series.push_back(te);
        for (const auto& w : out[k].warnings) *o.log << "warning: pair " << id << ": " << w << "\n";
    }
    write_text(dir / "geometry.csv", geometry_csv(reports));
    write_text(dir / "geometry_summary.json", dump(Json{{"seed", seed}, {"pairs", summary}}));
    write_text(dir / "geometry.svg", render_svg(c));
    RunManifest m;
    m.id = run_id(L.raw, seed, "geometry " + key);
    m.kind = "geometry";
    m.seed = seed;
    m.mode = to_string(L.opt.mode);
    m.config = L.raw;
    m.artifacts = {"geometry.csv", "geometry_summary.json", "geometry.svg"};
    detail::finish_manifest(dir, m);
    return dir;
}

struct ReportResult {
    std::string table;
    Json json;
    std::size_t ok = 0;
    std::size_t failed = 0;
};

/// Consolidates every manifest found under `dirs`: one row per PLR with its regime,
/// pre-trained, best fine-tuned and best SWA accuracy, and the fine-tune geometry.
inline ReportResult cmd_report(const std::vector<fs::path>& dirs, std::ostream& warn) {
    struct Row {
        std::optional<std::string> regime;
        std::vector<double> pre;
        std::map<double, std::vector<double>> ft;  // flr -> accuracies
        std::map<std::size_t, std::vector<double>> swa;
        std::optional<double> angle, btr, bte;
    };
    std::map<double, Row> rows;
    ReportResult rep;
    std::vector<fs::path> manifests;
    for (const auto& d : dirs) {
        if (!fs::exists(d)) {
            warn << "warning: " << d.string() << ": no such directory\n";
            ++rep.failed;
            continue;
        }
        if (fs::is_regular_file(d)) {
            manifests.push_back(d);
            continue;
        }
        for (const auto& e : fs::recursive_directory_iterator(d))
            if (e.is_regular_file() && e.path().filename() == "manifest.json") manifests.push_back(e.path());
    }
    std::sort(manifests.begin(), manifests.end());
    auto acc_of = [](const Json& sol) {
        const auto& t = sol.at("test");
        return t.at("count").get<std::size_t>() ? num_or_nan(t.at("accuracy")) : num_or_nan(sol.at("train").at("accuracy"));
    };
    for (const auto& mp : manifests) {
        try {
            const RunManifest m = parse_manifest(read_file(mp), mp.string());
            const fs::path dir = mp.parent_path();
            if (m.kind == "sweep") {
                const SweepResult s = parse_sweep_json(read_file(dir / "sweep_result.json"), (dir / "sweep_result.json").string());
                for (std::size_t i = 0; i < s.grid.size(); ++i) {
                    std::string r = to_string(s.labels[i].regime);
                    if (s.labels[i].sub) r += *s.labels[i].sub == SubRegime::A ? "A" : "B";
                    rows[s.grid[i]].regime = r;
                }
            } else if (m.kind == "protocol") {
                const Json j = Json::parse(read_file(dir / "protocol_run.json"));
                const double plr = j.at("plr").get<double>();
                const std::string kind = j.at("kind").get<std::string>();
                const auto& sols = j.at("solutions");
                if (kind == "finetune" || kind == "swa" || kind == "two_step") {
                    auto& row = rows[plr];
                    if (kind != "two_step") row.pre.push_back(acc_of(sols.front()));
                    if (kind == "finetune") row.ft[j.at("flr").get<double>()].push_back(acc_of(sols.back()));
                    if (kind == "swa") row.swa[j.at("swa_n").get<std::size_t>()].push_back(acc_of(sols.back()));
                }
            } else if (m.kind == "experiment" && fs::exists(dir / "experiment.json")) {
                const Json j = Json::parse(read_file(dir / "experiment.json"));
                if (j.value("kind", "") == "finetune_grid") {
                    for (const auto& r : j.at("rows")) {
                        if (!r.contains("geometry")) continue;
                        auto& row = rows[r.at("plr").get<double>()];
                        const auto& g = r["geometry"];
                        row.angle = num_or_nan(g.at("angle_rad"));
                        row.btr = num_or_nan(g.at("barrier_train"));
                        row.bte = num_or_nan(g.at("barrier_test"));
                    }
                }
            }
            ++rep.ok;
        } catch (const std::exception& e) {
            warn << "warning: skipping " << mp.string() << ": " << e.what() << "\n";
            ++rep.failed;
        }
    }
    auto mean = [](const std::vector<double>& v) { return detail::mean_std(v).first; };
    auto cell = [](std::optional<double> v) {
        if (!v || !std::isfinite(*v)) return std::string("-");
        char b[32];
        std::snprintf(b, sizeof b, "%.4f", *v);
        return std::string(b);
    };
    rep.json = Json::array();
    char line[256];
    std::snprintf(line, sizeof line, "%-12s %-7s %-10s %-10s %-10s %-8s %-10s %-10s\n", "PLR", "regime", "pretrain",
                  "best_ft", "swa", "angle", "barrier_tr", "barrier_te");
    rep.table = line;
    for (const auto& [plr, r] : rows) {
        std::optional<double> pre, ft, swa;
        if (!r.pre.empty()) pre = mean(r.pre);
        for (const auto& [_, v] : r.ft) ft = std::max(ft.value_or(-1.0), mean(v));
        for (const auto& [_, v] : r.swa) swa = std::max(swa.value_or(-1.0), mean(v));
        std::snprintf(line, sizeof line, "%-12s %-7s %-10s %-10s %-10s %-8s %-10s %-10s\n", format_double(plr).c_str(),
                      r.regime.value_or("-").c_str(), cell(pre).c_str(), cell(ft).c_str(), cell(swa).c_str(),
                      cell(r.angle).c_str(), cell(r.btr).c_str(), cell(r.bte).c_str());
        rep.table += line;
        rep.json.push_back(Json{{"plr", plr},
                                {"regime", r.regime ? Json(*r.regime) : Json(nullptr)},
                                {"pretrain_acc", opt_json(pre)},
                                {"best_finetune_acc", opt_json(ft)},
                                {"best_swa_acc", opt_json(swa)},
                                {"angle_rad", opt_json(r.angle)},
                                {"barrier_train", opt_json(r.btr)},
                                {"barrier_test", opt_json(r.bte)}});
    }
    return rep;
}

/// Line chart of columns of a CSV file (e.g. trajectory.csv or regimes.csv).
inline std::string cmd_plot(const fs::path& csv, const std::string& x, const std::vector<std::string>& ys, bool log_x,
                            bool log_y, const std::string& title) {
    const std::string text = read_file(csv);
    const auto lines = split(text, '\n');
    if (lines.empty()) throw IngestionError(csv.string() + ": empty file");
    const auto header = split(trim(lines[0]), ',');
    auto col = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw ConfigError(csv.string() + ": no column named '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t xi = col(x);
    LineChart c;
    c.title = title.empty() ? csv.filename().string() : title;
    c.x_label = x;
    c.y_label = ys.size() == 1 ? ys.front() : "value";
    c.log_x = log_x;
    c.log_y = log_y;
    for (const auto& y : ys) {
        const std::size_t yi = col(y);
        Series s{y, {}, "", false};
        for (std::size_t ln = 1; ln < lines.size(); ++ln) {
            const auto line = trim(lines[ln]);
            if (line.empty()) continue;
            const auto cells = split(line, ',');
            if (cells.size() != header.size()) {
                throw IngestionError(csv.string() + ": line " + std::to_string(ln + 1) + ": wrong number of cells");
            }
            s.points.push_back({parse_double(cells[xi]).value_or(std::nan("")),
                                parse_double(cells[yi]).value_or(std::nan(""))});
        }
        c.series.push_back(std::move(s));
    }
    return render_svg(c);
}

} // namespace silab

#endif
