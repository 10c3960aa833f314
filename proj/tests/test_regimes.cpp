#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"

using namespace silab;

namespace {

Trajectory make_traj(std::size_t epochs, const std::function<std::pair<double, double>(std::size_t)>& loss_acc) {
    Trajectory t;
    for (std::size_t e = 1; e <= epochs; ++e) {
        EpochRecord r;
        r.epoch = e;
        std::tie(r.train_loss, r.test_acc) = loss_acc(e);
        r.train_acc = r.test_acc;
        t.records.push_back(r);
    }
    return t;
}

RegimeLabel lbl(Regime r) {
    RegimeLabel l;
    l.regime = r;
    return l;
}

SweepResult sweep_of(const std::string& pattern) {
    SweepResult s;
    for (std::size_t i = 0; i < pattern.size(); ++i) {
        s.grid.push_back(std::pow(10.0, static_cast<double>(i)));
        s.labels.push_back(lbl(pattern[i] == '1' ? Regime::R1_convergence
                               : pattern[i] == '2' ? Regime::R2_chaotic
                                                   : Regime::R3_divergence));
    }
    estimate_boundaries(s);
    return s;
}

LabConfig toy_lab(const std::string& lrs) {
    return lab_config(Config::parse("[data]\nn_train = 1000\nn_test = 0\n[net]\nepsilon = 0\nhead_scale = 8\n"
                                    "[sweep]\nlrs = " + lrs + "\n",
                                    "toy"));
}

} // namespace

TEST(Classify, MonotoneDecreaseToSmallLossIsR1) {
    const auto t = make_traj(200, [](std::size_t e) { return std::pair{std::exp(-0.05 * e) + 1e-4, 0.99}; });
    const auto l = classify_regime(t, 2);
    EXPECT_EQ(l.regime, Regime::R1_convergence);
    EXPECT_TRUE(l.monotone);
}

TEST(Classify, OscillatingLossIsR2) {
    const auto t = make_traj(200, [](std::size_t e) { return std::pair{0.5 + 0.1 * std::sin(0.7 * e), 0.8}; });
    EXPECT_EQ(classify_regime(t, 2).regime, Regime::R2_chaotic);
}

TEST(Classify, SmallButRisingLossIsR2) {
    const auto t = make_traj(200, [](std::size_t e) { return std::pair{1e-4 * std::exp(0.05 * (double(e) - 180.0)), 0.99}; });
    const auto l = classify_regime(t, 2);
    EXPECT_FALSE(l.monotone);
    EXPECT_EQ(l.regime, Regime::R2_chaotic);
}

TEST(Classify, ChanceAccuracyIsR3) {
    const auto t = make_traj(200, [](std::size_t) { return std::pair{0.69, 0.5}; });
    EXPECT_EQ(classify_regime(t, 2).regime, Regime::R3_divergence);
    const auto just_above = make_traj(200, [](std::size_t) { return std::pair{0.6, 0.53}; });
    EXPECT_EQ(classify_regime(just_above, 2).regime, Regime::R2_chaotic);
    const auto three = make_traj(200, [](std::size_t) { return std::pair{1.0, 0.35}; });
    EXPECT_EQ(classify_regime(three, 3).regime, Regime::R3_divergence);
}

TEST(Classify, DivergedIsR3) {
    auto t = make_traj(200, [](std::size_t) { return std::pair{1e-4, 0.99}; });
    t.diverged_at = 150;
    EXPECT_EQ(classify_regime(t, 2).regime, Regime::R3_divergence);
}

TEST(Classify, TailWindow) {
    RegimeThresholds th;
    EXPECT_EQ(tail_window(200, th), 20u);
    EXPECT_EQ(tail_window(1000, th), 100u);
    EXPECT_EQ(tail_window(50, th), 20u);
    const auto t = make_traj(10, [](std::size_t) { return std::pair{0.1, 0.9}; });
    EXPECT_THROW(classify_regime(t, 2), ConfigError);
    EXPECT_THROW(classify_regime(t, 1), ConfigError);
}

TEST(Classify, TailUsesOnlyLastWindow) {
    // Chaotic early, converged for the last 30 epochs.
    const auto t = make_traj(200, [](std::size_t e) {
        return e <= 170 ? std::pair{0.5 + 0.2 * std::sin(double(e)), 0.7} : std::pair{1e-3, 1.0};
    });
    EXPECT_EQ(classify_regime(t, 2).regime, Regime::R1_convergence);
}

TEST(WindowedMedian, ToleratesSpikes) {
    std::vector<double> v{5, 5, 99, 5, 5, 4, 4, 4, 99, 4};
    EXPECT_TRUE(windowed_non_increasing(v, 5, 0.0));
    v = {1, 1, 1, 1, 1, 2, 2, 2, 2, 2};
    EXPECT_FALSE(windowed_non_increasing(v, 5, 0.1));
}

TEST(Boundaries, GeometricMeansOfStraddlingPoints) {
    const auto s = sweep_of("1122333");
    EXPECT_TRUE(s.contiguous());
    EXPECT_DOUBLE_EQ(*s.boundaries.lr_12, std::sqrt(10.0 * 100.0));
    EXPECT_DOUBLE_EQ(*s.boundaries.lr_23, std::sqrt(1e3 * 1e4));
    EXPECT_TRUE(s.warnings.empty());
}

TEST(Boundaries, DegenerateSweeps) {
    const auto ones = sweep_of("1111");
    EXPECT_FALSE(ones.boundaries.lr_12 || ones.boundaries.lr_23);
    const auto threes = sweep_of("333");
    EXPECT_FALSE(threes.boundaries.lr_12 || threes.boundaries.lr_23);
    const auto no2 = sweep_of("1133");
    EXPECT_DOUBLE_EQ(*no2.boundaries.lr_12, *no2.boundaries.lr_23);
}

TEST(Boundaries, NonContiguousWarns) {
    const auto s = sweep_of("1213");
    EXPECT_FALSE(s.contiguous());
    EXPECT_EQ(s.warnings.size(), 1u);
    EXPECT_DOUBLE_EQ(*s.boundaries.lr_12, std::sqrt(10.0));
}

TEST(Boundaries, GridChecks) {
    EXPECT_THROW(check_grid({1.0, 2.0}, 3), ConfigError);
    EXPECT_THROW(check_grid({1.0, 3.0, 2.0}, 3), ConfigError);
    EXPECT_THROW(check_grid({0.0, 1.0, 2.0}, 3), ConfigError);
    EXPECT_NO_THROW(check_grid({0.1, 1.0, 2.0}, 3));
}

TEST(SubregimeSplit, AllAboveBoundaryAtTop) {
    auto s = sweep_of("112223");
    const double b = subregime_split(s, {{100, 0.99}, {1e3, 0.99}, {1e4, 0.98}}, 0.97);
    EXPECT_DOUBLE_EQ(b, std::sqrt(1e4 * 1e5));
    for (std::size_t i = 2; i < 5; ++i) EXPECT_EQ(*s.labels[i].sub, SubRegime::A);
}

TEST(SubregimeSplit, NoneAboveBoundaryAtBottomWithWarning) {
    auto s = sweep_of("112223");
    const double b = subregime_split(s, {{100, 0.9}, {1e3, 0.9}, {1e4, 0.9}}, 0.97);
    EXPECT_DOUBLE_EQ(b, std::sqrt(10.0 * 100.0));
    EXPECT_EQ(s.warnings.size(), 1u);
    EXPECT_EQ(*s.labels[2].sub, SubRegime::B);
}

TEST(SubregimeSplit, PrefixRule) {
    auto s = sweep_of("112223");
    // A point that recovers after a failure stays 2B: 2A is a prefix.
    const double b = subregime_split(s, {{100, 0.98}, {1e3, 0.9}, {1e4, 0.99}}, 0.97);
    EXPECT_DOUBLE_EQ(b, std::sqrt(100.0 * 1e3));
    EXPECT_EQ(*s.labels[4].sub, SubRegime::B);
    EXPECT_THROW(subregime_split(s, {{100, 0.98}}, 0.97), ConfigError);
    auto none = sweep_of("1133");
    EXPECT_THROW(subregime_split(none, {}, 0.9), ConfigError);
}

TEST(Sweep, HugeLrGridIsAllR3) {
    const auto L = toy_lab("30, 50, 100");
    const auto data = load_datasets(L.data);
    const auto s = run_sweep(L, data, 0, 1);
    for (const auto& l : s.labels) EXPECT_EQ(l.regime, Regime::R3_divergence);
}

TEST(Sweep, TinyLrGridIsAllR1) {
    const auto L = toy_lab("0.001, 0.0013, 0.0016");
    const auto data = load_datasets(L.data);
    const auto s = run_sweep(L, data, 0, 1);
    for (const auto& l : s.labels) EXPECT_EQ(l.regime, Regime::R1_convergence);
    EXPECT_TRUE(s.contiguous());
}
