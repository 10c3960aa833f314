#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "silab/silab.hpp"

namespace fs = std::filesystem;
using namespace silab;

namespace {

LabConfig load_lab(const std::string& path) {
    if (!fs::exists(path)) throw ConfigError(path + ": no such config file");
    return lab_config(Config::load(path));
}

int classify_files(const std::vector<std::string>& files, const std::string& config, int classes) {
    RegimeThresholds th;
    if (!config.empty()) {
        const LabConfig L = load_lab(config);
        th = L.thresholds;
    }
    for (const auto& f : files) {
        const Trajectory t = parse_trajectory_csv(read_file(f), f);
        const RegimeLabel l = classify_regime(t, classes, th);
        Json j = label_json(std::nan(""), l);
        j.erase("lr");
        j["file"] = f;
        std::cout << j.dump() << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Training regimes of scale-invariant networks on toy tasks"};
    app.require_subcommand(1);
    std::size_t jobs = 1;
    std::string out = "silab_out";
    app.add_option("--jobs,-j", jobs, "worker threads for independent runs")->check(CLI::PositiveNumber);
    app.add_option("--out", out, "output root (SILAB_OUT takes precedence)");
    app.fallthrough();

    std::string config;
    auto* sweep = app.add_subcommand("sweep", "fixed-LR sweep and regime labels");
    sweep->add_option("config", config, "config file")->required();

    std::string kind;
    bool allow_any = false;
    auto* exp = app.add_subcommand("experiment", "run a protocol grid");
    exp->add_option("config", config, "config file")->required();
    exp->add_option("kind", kind, "finetune_grid | swa_grid | two_step | to_threshold | norm_hist")->required();
    exp->add_flag("--allow-any-regime", allow_any, "skip regime precondition checks");

    std::vector<std::string> files;
    int classes = 2;
    auto* cls = app.add_subcommand("classify", "label trajectory CSV files");
    cls->add_option("trajectories", files, "trajectory.csv files")->required();
    cls->add_option("--config", config, "config whose [regimes] thresholds to use");
    cls->add_option("--classes", classes, "number of classes")->check(CLI::Range(2, 1 << 20));

    std::uint64_t seed = 0;
    bool seed_given = false;
    auto* geo = app.add_subcommand("geometry", "angle and linear barrier between checkpoints");
    geo->add_option("config", config, "config that produced the checkpoints")->required();
    geo->add_option("checkpoints", files, "two or more .silab files")->required()->expected(2, -1);
    auto* seed_opt = geo->add_option("--seed", seed, "seed of the net (defaults to the config's first seed)");

    auto* rep = app.add_subcommand("report", "consolidate finished runs");
    rep->add_option("dirs", files, "run or output directories")->required();

    std::string csv, x, output, title;
    std::vector<std::string> ys;
    bool log_x = false, log_y = false;
    auto* plot = app.add_subcommand("plot", "SVG line chart of CSV columns");
    plot->add_option("csv", csv, "input CSV")->required();
    plot->add_option("--x", x, "x column")->required();
    plot->add_option("--y", ys, "y column(s)")->required()->delimiter(',');
    plot->add_flag("--logx", log_x);
    plot->add_flag("--logy", log_y);
    plot->add_option("--title", title);
    plot->add_option("-o,--output", output, "output SVG (default: input with .svg)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    seed_given = seed_opt->count() > 0;

    CommandOptions opt;
    opt.out_root = output_root(out);
    opt.jobs = jobs;
    opt.allow_any_regime = allow_any;

    try {
        if (*sweep) {
            const auto r = cmd_sweep(load_lab(config), opt);
            std::cout << r.dir.string() << "\n";
        } else if (*exp) {
            if (!experiment_kinds().count(kind)) {
                std::cerr << "error: unknown experiment kind '" << kind << "'\n";
                return 2;
            }
            std::cout << cmd_experiment(load_lab(config), kind, opt).string() << "\n";
        } else if (*cls) {
            return classify_files(files, config, classes);
        } else if (*geo) {
            const LabConfig L = load_lab(config);
            std::vector<fs::path> paths;
            for (const auto& f : files) {
                if (!fs::exists(f)) throw ConfigError(f + ": no such checkpoint file");
                paths.emplace_back(f);
            }
            std::cout << cmd_geometry(L, seed_given ? seed : L.seeds.front(), paths, opt).string() << "\n";
        } else if (*rep) {
            std::vector<fs::path> dirs(files.begin(), files.end());
            const ReportResult r = cmd_report(dirs, std::cerr);
            const fs::path dir = opt.out_root / "report";
            write_text(dir / "report.json", dump(r.json));
            write_text(dir / "report.txt", r.table);
            RunManifest m;
            m.id = hex64(fnv1a64(r.table));
            m.kind = "report";
            m.artifacts = {"report.json", "report.txt"};
            write_text(dir / "manifest.json", dump(manifest_json(m)));
            std::cout << r.table;
            if (r.ok == 0) {
                std::cerr << "error: no readable manifests\n";
                return 1;
            }
        } else if (*plot) {
            if (!fs::exists(csv)) throw ConfigError(csv + ": no such file");
            const fs::path dst = output.empty() ? fs::path(csv).replace_extension(".svg") : fs::path(output);
            write_text(dst, cmd_plot(csv, x, ys, log_x, log_y, title));
            std::cout << dst.string() << "\n";
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IngestionError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
