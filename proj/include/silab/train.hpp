#ifndef SILAB_TRAIN_HPP
#define SILAB_TRAIN_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "silab/data.hpp"
#include "silab/error.hpp"
#include "silab/net.hpp"
#include "silab/optim.hpp"
#include "silab/params.hpp"
#include "silab/text.hpp"

namespace silab {

/// Metrics at the end of one epoch. Epochs are numbered from 1 and continue across
/// resumed runs, so epoch 200 is the end of a 200-epoch pre-training stage.
struct EpochRecord {
    std::size_t epoch = 0;
    std::size_t phase = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double test_loss = std::numeric_limits<double>::quiet_NaN();
    double test_acc = std::numeric_limits<double>::quiet_NaN();
    double global_norm = 0.0;
    std::vector<double> group_norms;

    bool diverged() const { return std::isnan(train_loss); }
};

struct Trajectory {
    std::vector<std::string> group_names;
    std::vector<EpochRecord> records;
    std::optional<std::size_t> diverged_at;  // first diverged epoch
    std::string run_id;

    std::size_t size() const { return records.size(); }
};

inline std::string trajectory_csv(const Trajectory& t) {
    std::string out = "epoch,phase,lr,train_loss,train_acc,test_loss,test_acc,global_norm";
    for (const auto& n : t.group_names) out += "," + n;
    out += "\n";
    for (const auto& r : t.records) {
        out += std::to_string(r.epoch) + "," + std::to_string(r.phase) + "," + format_double(r.lr) + "," +
               format_double(r.train_loss) + "," + format_double(r.train_acc) + "," +
               format_double(r.test_loss) + "," + format_double(r.test_acc) + "," +
               format_double(r.global_norm);
        for (double g : r.group_norms) out += "," + format_double(g);
        out += "\n";
    }
    return out;
}

/// Inverse of trajectory_csv. Diverged epochs are the rows whose train_loss is nan.
inline Trajectory parse_trajectory_csv(const std::string& text, const std::string& origin = "trajectory.csv") {
    Trajectory t;
    const auto lines = split(text, '\n');
    if (lines.empty() || trim(lines[0]).empty()) throw IngestionError(origin + ": empty file");
    const auto header = split(trim(lines[0]), ',');
    static const char* fixed[] = {"epoch", "phase", "lr", "train_loss", "train_acc", "test_loss", "test_acc",
                                  "global_norm"};
    if (header.size() < 8) throw IngestionError(origin + ": line 1: expected at least 8 columns");
    for (std::size_t i = 0; i < 8; ++i) {
        if (header[i] != fixed[i]) {
            throw IngestionError(origin + ": line 1: column " + std::to_string(i + 1) + " should be '" +
                                 fixed[i] + "', found '" + header[i] + "'");
        }
    }
    t.group_names.assign(header.begin() + 8, header.end());
    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
        const auto line = trim(lines[ln]);
        if (line.empty()) continue;
        const auto cells = split(line, ',');
        if (cells.size() != header.size()) {
            throw IngestionError(origin + ": line " + std::to_string(ln + 1) + ": expected " +
                                 std::to_string(header.size()) + " cells, found " + std::to_string(cells.size()));
        }
        std::vector<double> v(cells.size());
        for (std::size_t i = 0; i < cells.size(); ++i) {
            const auto d = parse_double(cells[i]);
            if (!d) {
                throw IngestionError(origin + ": line " + std::to_string(ln + 1) + ": column '" + header[i] +
                                     "' is not a number");
            }
            v[i] = *d;
        }
        EpochRecord r;
        r.epoch = static_cast<std::size_t>(v[0]);
        r.phase = static_cast<std::size_t>(v[1]);
        r.lr = v[2];
        r.train_loss = v[3];
        r.train_acc = v[4];
        r.test_loss = v[5];
        r.test_acc = v[6];
        r.global_norm = v[7];
        r.group_norms.assign(v.begin() + 8, v.end());
        if (r.diverged() && !t.diverged_at) t.diverged_at = r.epoch;
        t.records.push_back(std::move(r));
    }
    if (t.records.empty()) throw IngestionError(origin + ": no records");
    return t;
}

struct TrainOptions {
    std::size_t batch_size = 128;
    std::size_t eval_batch = 128;
    std::uint64_t seed = 0;
    /// Global epochs already completed before this call. Batch order of epoch e depends
    /// only on (seed, e), so resuming at an offset reproduces a longer uninterrupted run.
    std::size_t epoch_offset = 0;
};

struct TrainHooks {
    /// End-of-epoch checkpoints to retain, by global epoch number.
    std::function<bool(std::size_t)> keep_checkpoint;
    /// Called with the parameters after every optimizer step.
    std::function<void(const ParamVector&)> after_step;
    /// Stops the run after the given epoch's record when it returns true.
    std::function<bool(const EpochRecord&)> stop;
};

struct TrainResult {
    ParamVector params;
    OptState state;
    Trajectory trajectory;
    std::map<std::size_t, ParamVector> checkpoints;
    bool stopped_early = false;
};

inline EpochRecord diverged_record(std::size_t epoch, std::size_t phase, double lr, const ParamVector& p) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    EpochRecord r{epoch, phase, lr, nan, nan, nan, nan, p.global_norm(), {}};
    for (const auto& [_, n] : group_norms(p)) r.group_norms.push_back(n);
    return r;
}

/// Seeded minibatch training over `schedule`. A non-finite loss or a degenerate projected
/// step marks the run diverged: parameters stay at the last finite state and every
/// remaining scheduled epoch is recorded as diverged. Divergence is data, not an error.
inline TrainResult train(const Net& net, ParamVector params, const Dataset& train_ds, const Dataset* test_ds,
                         const Schedule& schedule, OptState state, const TrainOptions& opts,
                         const TrainHooks& hooks = {}) {
    schedule.validate();
    state.validate();
    net.check_params(params);
    if (opts.batch_size < 2) throw ConfigError("train: batch size must be at least 2");
    if (state.mode == OptMode::sphere_sgd) {
        const double n = params.global_norm();
        if (std::abs(n - state.radius) > 1e-9 * state.radius) {
            throw ConfigError("train: sphere mode requires parameters on the sphere of radius " +
                              format_double(state.radius) + " (norm is " + format_double(n) + ")");
        }
    }

    TrainResult res;
    for (const auto& g : params.groups()) res.trajectory.group_names.push_back(g.name);
    bool diverged = false;

    const std::size_t total = schedule.total_epochs();
    for (std::size_t e = 0; e < total; ++e) {
        const auto [phase, lr] = schedule.at(e);
        const std::size_t global_epoch = opts.epoch_offset + e + 1;

        if (!diverged) {
            for (const auto& idx : batches(train_ds.size(), opts.batch_size, opts.seed, global_epoch - 1)) {
                const Tensor x = train_ds.gather(idx);
                const auto y = train_ds.gather_labels(idx);
                const ForwardResult fr = net.forward(params, x, y);
                if (!fr.finite) {
                    diverged = true;
                    break;
                }
                const ParamVector grad = net.backward(fr, params);
                try {
                    OptState trial = state;
                    ParamVector next = optimizer_step(trial, params, grad, lr);
                    if (!next.all_finite()) {
                        diverged = true;
                        break;
                    }
                    params = std::move(next);
                    state = std::move(trial);
                } catch (const DegenerateStepError&) {
                    diverged = true;
                    break;
                }
                if (hooks.after_step) hooks.after_step(params);
            }
        }

        EpochRecord rec;
        if (diverged) {
            if (!res.trajectory.diverged_at) res.trajectory.diverged_at = global_epoch;
            rec = diverged_record(global_epoch, phase, lr, params);
        } else {
            const EvalMetrics tr = net.evaluate(params, train_ds, opts.eval_batch);
            rec.epoch = global_epoch;
            rec.phase = phase;
            rec.lr = lr;
            rec.train_loss = tr.loss;
            rec.train_acc = tr.accuracy;
            if (test_ds) {
                const EvalMetrics te = net.evaluate(params, *test_ds, opts.eval_batch);
                rec.test_loss = te.loss;
                rec.test_acc = te.accuracy;
            }
            rec.global_norm = params.global_norm();
            for (const auto& [_, n] : group_norms(params)) rec.group_norms.push_back(n);
            if (!std::isfinite(rec.train_loss)) {
                diverged = true;
                res.trajectory.diverged_at = global_epoch;
                rec = diverged_record(global_epoch, phase, lr, params);
            }
        }
        if (hooks.keep_checkpoint && hooks.keep_checkpoint(global_epoch)) res.checkpoints[global_epoch] = params;
        res.trajectory.records.push_back(rec);
        if (hooks.stop && hooks.stop(rec)) {
            res.stopped_early = e + 1 < total;
            break;
        }
    }
    res.params = std::move(params);
    res.state = std::move(state);
    return res;
}

} // namespace silab

#endif
