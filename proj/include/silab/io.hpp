#ifndef SILAB_IO_HPP
#define SILAB_IO_HPP

#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "silab/checkpoint.hpp"
#include "silab/config.hpp"
#include "silab/error.hpp"
#include "silab/geometry.hpp"
#include "silab/net.hpp"
#include "silab/protocols.hpp"
#include "silab/regimes.hpp"
#include "silab/text.hpp"

namespace silab {

using Json = nlohmann::ordered_json;

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016" PRIx64, v);
    return buf;
}

/// Content hash of the canonical config, the seed and a tag naming the run within
/// the config (e.g. "sweep lr=0.1").
inline std::string run_id(const Config& c, std::uint64_t seed, const std::string& tag) {
    return hex64(fnv1a64(c.canonical() + "seed=" + std::to_string(seed) + "\n" + tag));
}

/// Finite numbers as-is, everything else as null.
inline Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline double num_or_nan(const Json& j) { return j.is_number() ? j.get<double>() : std::nan(""); }

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

inline void write_text(const std::filesystem::path& p, const std::string& s) { write_file(p, s); }

inline Json metrics_json(const EvalMetrics& m) {
    return Json{{"loss", num(m.loss)}, {"accuracy", num(m.accuracy)}, {"error", num(m.error)},
                {"correct", m.correct}, {"count", m.count}};
}

inline Json config_json(const Config& c) {
    Json j = Json::object();
    for (const auto& [s, keys] : c.sections()) {
        Json sec = Json::object();
        for (const auto& [k, e] : keys) sec[k] = e.value;
        j[s] = sec;
    }
    return j;
}

inline Config config_from_json(const Json& j, const std::string& origin) {
    if (!j.is_object()) throw IngestionError(origin + ": config echo is not an object");
    Config c = Config::parse("", origin);
    for (const auto& [s, keys] : j.items()) {
        if (!keys.is_object()) throw IngestionError(origin + ": config section '" + s + "' is not an object");
        for (const auto& [k, v] : keys.items()) {
            if (!v.is_string()) throw IngestionError(origin + ": config value " + s + "." + k + " is not a string");
            c.set(s, k, v.get<std::string>());
        }
    }
    return c;
}

inline Json thresholds_json(const RegimeThresholds& t) {
    return Json{{"delta_acc", t.delta_acc}, {"tau_conv", t.tau_conv}, {"tau_mono", t.tau_mono},
                {"min_tail", t.min_tail}, {"tail_fraction", t.tail_fraction}, {"median_window", t.median_window}};
}

inline Json label_json(double lr, const RegimeLabel& l) {
    Json j{{"lr", lr}, {"regime", to_string(l.regime)}};
    j["sub"] = l.sub ? Json(*l.sub == SubRegime::A ? "A" : "B") : Json(nullptr);
    j["tail_mean_acc"] = num(l.tail_mean_acc);
    j["tail_std_acc"] = num(l.tail_std_acc);
    j["tail_mean_loss"] = num(l.tail_mean_loss);
    j["monotone"] = l.monotone;
    return j;
}

inline Json opt_json(const std::optional<double>& v) { return v ? num(*v) : Json(nullptr); }

inline Json sweep_json(const SweepResult& s, const RegimeThresholds& th, std::uint64_t seed) {
    Json j;
    j["seed"] = seed;
    j["grid"] = s.grid;
    Json labels = Json::array();
    for (std::size_t i = 0; i < s.grid.size(); ++i) labels.push_back(label_json(s.grid[i], s.labels[i]));
    j["labels"] = labels;
    j["boundaries"] = Json{{"lr_12", opt_json(s.boundaries.lr_12)},
                           {"lr_23", opt_json(s.boundaries.lr_23)},
                           {"lr_2a2b", opt_json(s.boundaries.lr_2a2b)}};
    j["contiguous"] = s.contiguous();
    j["thresholds"] = thresholds_json(th);
    j["warnings"] = s.warnings;
    return j;
}

inline SweepResult parse_sweep_json(const std::string& text, const std::string& origin) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const std::exception& e) {
        throw IngestionError(origin + ": not valid JSON (" + e.what() + ")");
    }
    SweepResult s;
    try {
        s.grid = j.at("grid").get<std::vector<double>>();
        for (const auto& l : j.at("labels")) {
            RegimeLabel r;
            r.regime = parse_regime(l.at("regime").get<std::string>());
            if (l.contains("sub") && l["sub"].is_string()) {
                r.sub = l["sub"].get<std::string>() == "A" ? SubRegime::A : SubRegime::B;
            }
            r.tail_mean_acc = num_or_nan(l.at("tail_mean_acc"));
            r.tail_std_acc = num_or_nan(l.at("tail_std_acc"));
            r.tail_mean_loss = num_or_nan(l.at("tail_mean_loss"));
            r.monotone = l.at("monotone").get<bool>();
            s.labels.push_back(r);
        }
        const auto& b = j.at("boundaries");
        auto get = [&](const char* k) -> std::optional<double> {
            if (b.contains(k) && b[k].is_number()) return b[k].get<double>();
            return std::nullopt;
        };
        s.boundaries = {get("lr_12"), get("lr_23"), get("lr_2a2b")};
        if (j.contains("warnings")) s.warnings = j["warnings"].get<std::vector<std::string>>();
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw IngestionError(origin + ": malformed sweep result (" + e.what() + ")");
    }
    if (s.labels.size() != s.grid.size()) throw IngestionError(origin + ": label count differs from grid size");
    return s;
}

inline std::string regimes_csv(const SweepResult& s) {
    std::string out = "lr,regime,sub,tail_mean_acc,tail_std_acc,tail_mean_loss,monotone\n";
    for (std::size_t i = 0; i < s.grid.size(); ++i) {
        const auto& l = s.labels[i];
        out += format_double(s.grid[i]) + "," + to_string(l.regime) + "," +
               (l.sub ? (*l.sub == SubRegime::A ? "A" : "B") : "") + "," + format_double(l.tail_mean_acc) + "," +
               format_double(l.tail_std_acc) + "," + format_double(l.tail_mean_loss) + "," +
               (l.monotone ? "1" : "0") + "\n";
    }
    return out;
}

inline Json solution_json(const Solution& s, const std::string& checkpoint) {
    Json j{{"id", s.id}, {"epoch", s.epoch}, {"diverged", s.diverged}};
    j["train"] = metrics_json(s.train);
    j["test"] = metrics_json(s.test);
    j["checkpoint"] = checkpoint.empty() ? Json(nullptr) : Json(checkpoint);
    return j;
}

/// `checkpoints` maps solution ids to checkpoint paths relative to the run directory.
inline Json protocol_run_json(const ProtocolRun& r, const std::string& id,
                              const std::map<std::string, std::string>& checkpoints) {
    Json j;
    j["id"] = id;
    j["kind"] = to_string(r.kind);
    j["plr"] = r.plr;
    j["flr"] = opt_json(r.flr);
    j["swa_n"] = r.swa_n ? Json(*r.swa_n) : Json(nullptr);
    j["seed"] = r.seed;
    j["lineage"] = r.lineage;
    Json sol = Json::array();
    for (const auto& s : r.solutions) {
        const auto it = checkpoints.find(s.id);
        sol.push_back(solution_json(s, it == checkpoints.end() ? "" : it->second));
    }
    j["solutions"] = sol;
    if (r.kind == ProtocolKind::to_threshold) {
        j["epochs_taken"] = r.epochs_taken ? Json(*r.epochs_taken) : Json(nullptr);
    }
    if (!r.swa_checkpoints.empty()) {
        Json eps = Json::array();
        for (const auto& [e, _] : r.swa_checkpoints) eps.push_back(e);
        j["swa_checkpoint_epochs"] = eps;
    }
    return j;
}

enum class RunStatus { done, diverged, failed };

inline const char* to_string(RunStatus s) {
    switch (s) {
    case RunStatus::done: return "done";
    case RunStatus::diverged: return "diverged";
    case RunStatus::failed: return "failed";
    }
    return "?";
}

struct RunManifest {
    std::string id;
    std::string kind;  // "sweep_run", "sweep", "protocol", "experiment", "geometry"
    std::uint64_t seed = 0;
    std::string mode;
    RunStatus status = RunStatus::done;
    Config config;
    std::vector<std::string> artifacts;  // relative to the manifest's directory
    Json extra = Json::object();
};

inline Json manifest_json(const RunManifest& m) {
    Json j;
    j["id"] = m.id;
    j["kind"] = m.kind;
    j["seed"] = m.seed;
    j["mode"] = m.mode;
    j["status"] = to_string(m.status);
    j["config"] = config_json(m.config);
    j["artifacts"] = m.artifacts;
    if (!m.extra.empty()) j["extra"] = m.extra;
    return j;
}

inline RunManifest parse_manifest(const std::string& text, const std::string& origin) {
    RunManifest m;
    try {
        const Json j = Json::parse(text);
        m.id = j.at("id").get<std::string>();
        m.kind = j.at("kind").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.mode = j.at("mode").get<std::string>();
        const auto st = j.at("status").get<std::string>();
        if (st == "done") m.status = RunStatus::done;
        else if (st == "diverged") m.status = RunStatus::diverged;
        else if (st == "failed") m.status = RunStatus::failed;
        else throw IngestionError(origin + ": unknown status '" + st + "'");
        m.config = config_from_json(j.at("config"), origin);
        m.artifacts = j.at("artifacts").get<std::vector<std::string>>();
        if (j.contains("extra")) m.extra = j["extra"];
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw IngestionError(origin + ": malformed manifest (" + e.what() + ")");
    }
    return m;
}

inline Json geometry_json(const std::string& pair, const std::string& a, const std::string& b,
                          const GeometryReport& r) {
    Json j{{"pair", pair}, {"a", a}, {"b", b}, {"angle_rad", num(r.angle_rad)},
           {"barrier_train", num(r.barrier_train)}};
    j["barrier_test"] = r.barrier_test ? num(*r.barrier_test) : Json(nullptr);
    j["warnings"] = r.warnings;
    return j;
}

} // namespace silab

#endif
