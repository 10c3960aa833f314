#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"

using namespace silab;
using silab::testing::random_batch;
using silab::testing::small_spec;

TEST(BuildNet, ProjectsToRadius) {
    NetSpec s;
    s.seed = 11;
    const auto [net, p] = build_net(s);
    EXPECT_NEAR(p.global_norm(), 1.0, 1e-14);
    s.radius = 3.0;
    EXPECT_NEAR(build_net(s).second.global_norm(), 3.0, 3e-14);
}

TEST(BuildNet, SameSeedIsBitIdentical) {
    NetSpec s;
    s.seed = 4;
    const auto a = build_net(s), b = build_net(s);
    EXPECT_EQ(a.second.groups(), b.second.groups());
    EXPECT_EQ(a.first.head(), b.first.head());
    s.seed = 5;
    EXPECT_NE(build_net(s).second.groups(), a.second.groups());
}

TEST(BuildNet, UnitGroupingSplitsLayerRows) {
    NetSpec s;
    s.hidden_widths = {4, 3};
    const auto layer = build_net(s).second;
    s.group_by = GroupBy::unit;
    const auto unit = build_net(s).second;
    ASSERT_EQ(unit.group_count(), 7u);
    const auto a = unit.flat(), b = layer.flat();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-15);
}

TEST(BuildNet, RejectsBadSpecs) {
    NetSpec s;
    s.hidden_widths = {};
    EXPECT_THROW(build_net(s), ConfigError);
    s = NetSpec{};
    s.normalization_epsilon = 1e-3;
    EXPECT_THROW(build_net(s), ConfigError);
    s = NetSpec{};
    s.n_classes = 1;
    EXPECT_THROW(build_net(s), ConfigError);
}

TEST(BuildNet, InitLossNearLn2OnTwoMoons) {
    const auto ds = gen_synthetic(SyntheticKind::two_moons, 512, 0.1, 1);
    double mean = 0.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        NetSpec s;
        s.seed = seed;
        const auto [net, p] = build_net(s);
        mean += net.evaluate(p, ds, 128).loss / 10.0;
    }
    EXPECT_NEAR(mean, std::numbers::ln2, 0.1);
}

TEST(ScaleInvariance, GlobalAndPerGroup) {
    for (std::uint64_t k = 0; k < 20; ++k) {
        auto spec = small_spec(k, {5 + k % 4, 4}, 2 + static_cast<int>(k % 3));
        spec.group_by = k % 2 ? GroupBy::unit : GroupBy::layer;
        const auto [net, p] = build_net(spec);
        const auto [x, y] = random_batch(1000 + k, 9, 3, spec.n_classes);
        const double base = net.loss(p, x, y);
        for (double a : {0.5, 2.0, 10.0}) {
            ParamVector q = p;
            q.scale(a);
            EXPECT_LE(std::abs(net.loss(q, x, y) - base) / std::max(std::abs(base), 1e-8), 1e-6);
            for (std::size_t g = 0; g < p.group_count(); ++g) {
                ParamVector r = p;
                for (double& v : r.groups()[g].value.data) v *= a;
                EXPECT_LE(std::abs(net.loss(r, x, y) - base) / std::max(std::abs(base), 1e-8), 1e-6);
            }
        }
    }
}

TEST(ScaleInvariance, GroupScaledByFive) {
    const auto [net, p] = build_net(small_spec(2));
    const auto [x, y] = random_batch(9, 12, 3, 2);
    ParamVector q = p;
    for (double& v : q.groups()[1].value.data) v *= 5.0;
    EXPECT_LE(std::abs(net.loss(q, x, y) - net.loss(p, x, y)) / net.loss(p, x, y), 1e-6);
}

TEST(ScaleInvariance, GradientOrthogonalToParams) {
    for (std::uint64_t k = 0; k < 20; ++k) {
        auto spec = small_spec(50 + k, {6, 6});
        spec.group_by = k % 2 ? GroupBy::unit : GroupBy::layer;
        const auto [net, p] = build_net(spec);
        const auto [x, y] = random_batch(2000 + k, 11, 3, 2);
        const auto [loss, g] = net.loss_and_grad(p, x, y);
        ASSERT_GT(g.global_norm(), 0.0);
        EXPECT_LE(std::abs(g.dot(p)) / (g.global_norm() * p.global_norm()), 1e-6);
        for (std::size_t i = 0; i < p.group_count(); ++i) {
            const auto& a = g.groups()[i].value;
            const auto& b = p.groups()[i].value;
            double dot = 0.0;
            for (std::size_t j = 0; j < a.size(); ++j) dot += a.data[j] * b.data[j];
            if (a.norm() > 1e-12) EXPECT_LE(std::abs(dot) / (a.norm() * b.norm()), 1e-6);
        }
    }
}

TEST(Evaluate, PerfectPredictorAndDeterminism) {
    const auto [net, p] = build_net(small_spec(8, {6, 4}, 3));
    auto ds = gen_synthetic(SyntheticKind::gaussian_blobs, 90, 1.0, 3, 3);
    ds.features = Tensor({90, 3});
    CounterRng rng(1, "features");
    for (double& v : ds.features.data) v = rng.normal();
    // Relabel with the net's own predictions, using the same evaluation slices.
    for (const auto& idx : sequential_batches(ds.size(), 32)) {
        const auto fr = net.forward(p, ds.gather(idx), ds.gather_labels(idx));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const auto row = fr.logits.row(i);
            ds.labels[idx[i]] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
        }
    }
    const auto m = net.evaluate(p, ds, 32);
    EXPECT_EQ(m.accuracy, 1.0);
    EXPECT_EQ(m.error, 0.0);
    const auto m2 = net.evaluate(p, ds, 32);
    EXPECT_EQ(m.loss, m2.loss);
    EXPECT_EQ(m.correct, m2.correct);
}

TEST(Evaluate, RandomLabelsGiveChanceAccuracy) {
    const int c = 4;
    const std::size_t n = 4000;
    const auto [net, p] = build_net(small_spec(21, {8, 8}, c));
    const auto [x, y] = random_batch(77, n, 3, c);
    Dataset ds{x, y, c, "noise"};
    const double acc = net.evaluate(p, ds, 128).accuracy;
    const double sigma = std::sqrt(0.25 * 0.75 / static_cast<double>(n));
    EXPECT_NEAR(acc, 0.25, 3 * sigma);
}

TEST(GroupNorms, Examples) {
    const auto single = silab::testing::vec({3, 4});
    EXPECT_EQ(group_norms(single)[0].second, 5.0);
    EXPECT_EQ(single.global_norm(), 5.0);
    ParamVector two({{"a", Tensor({2}, std::vector<double>{3, 4})}, {"b", Tensor({2}, std::vector<double>{4, 3})}});
    const auto n = group_norms(two);
    EXPECT_EQ(n[0].second, 5.0);
    EXPECT_EQ(n[1].second, 5.0);
    EXPECT_DOUBLE_EQ(two.global_norm(), std::sqrt(50.0));
    double sq = 0.0;
    for (const auto& [_, v] : n) sq += v * v;
    EXPECT_NEAR(sq, two.squared_norm(), 1e-12 * two.squared_norm());
}

TEST(GroupNorms, SpreadInfiniteWithZeroGroup) {
    ParamVector p({{"a", Tensor({2}, std::vector<double>{1, 0})}, {"b", Tensor({2}, 0.0)}});
    EXPECT_TRUE(std::isinf(norm_spread(p)));
}
