#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"

using namespace silab;
using silab::testing::vec;

namespace {

std::optional<double> neg_sq(const ParamVector& p) { return -p.squared_norm(); }
std::optional<double> pos_sq(const ParamVector& p) { return p.squared_norm(); }

} // namespace

TEST(Angle, Identities) {
    const auto p = vec({0.3, -1.2, 2.0});
    EXPECT_EQ(angular_distance(p, p), 0.0);
    ParamVector neg = p;
    neg.scale(-1.0);
    EXPECT_NEAR(angular_distance(p, neg), std::numbers::pi, 1e-12);
    EXPECT_NEAR(angular_distance(vec({1, 0, 0}), vec({0, 3, 0})), std::numbers::pi / 2, 1e-12);
    EXPECT_NEAR(angular_distance(vec({2, 0}), vec({1, 1})), std::numbers::pi / 4, 1e-12);
}

TEST(Angle, ScaleFreeAndSymmetric) {
    const auto a = vec({0.2, 0.7, -0.1}), b = vec({-0.4, 0.1, 0.9});
    ParamVector b5 = b;
    b5.scale(5.0);
    EXPECT_NEAR(angular_distance(a, b5), angular_distance(a, b), 1e-15);
    EXPECT_EQ(angular_distance(a, b), angular_distance(b, a));
}

TEST(Angle, ZeroNormIsDiagnostic) {
    EXPECT_THROW(angular_distance(vec({0, 0}), vec({1, 0})), DiagnosticError);
}

TEST(Interpolate, EndpointsAndConstantPath) {
    const auto a = vec({1, 2}), b = vec({-3, 0.5});
    EXPECT_EQ(interpolate(a, b, 1.0).flat(), a.flat());
    EXPECT_EQ(interpolate(a, b, 0.0).flat(), b.flat());
    for (double t : {0.0, 0.25, 0.5, 1.0}) EXPECT_EQ(interpolate(a, a, t).flat(), a.flat());
    EXPECT_THROW(interpolate(a, b, 1.5), ConfigError);
    EXPECT_THROW(interpolate(a, b, -0.1), ConfigError);
    EXPECT_THROW(interpolate(a, vec({1, 2, 3}), 0.5), ConfigError);
}

TEST(Interpolate, AntipodalMidpointIsZero) {
    const auto m = interpolate(vec({1, 0}), vec({-1, 0}), 0.5);
    EXPECT_EQ(m.global_norm(), 0.0);
    EXPECT_TRUE(has_zero_group(m));
}

TEST(Barrier, ConcaveClosedForm) {
    const auto r = barrier_over_grid(vec({1, 0}), vec({0, 1}), neg_sq, 21);
    EXPECT_NEAR(r.barrier, 0.5, 1e-12);
    EXPECT_EQ(r.argmax_alpha, 0.5);
    // 1 - a^2 - b^2 at every grid point.
    for (std::size_t k = 0; k < 21; ++k) {
        const double a = k / 20.0, b = (20.0 - k) / 20.0;
        EXPECT_NEAR(*r.errors[k] - (-a - b), 1 - a * a - b * b, 1e-12);
    }
}

TEST(Barrier, ConvexClosedFormIsZero) {
    const auto r = barrier_over_grid(vec({1, 0}), vec({0, 1}), pos_sq, 21);
    EXPECT_NEAR(r.barrier, 0.0, 1e-15);
    EXPECT_TRUE(r.argmax_alpha == 0.0 || r.argmax_alpha == 1.0);
}

TEST(Barrier, IdenticalEndpointsGiveZero) {
    const auto p = vec({0.6, 0.8});
    EXPECT_NEAR(barrier_over_grid(p, p, neg_sq, 11).barrier, 0.0, 1e-15);
}

TEST(Barrier, GridNeedsThreePoints) {
    EXPECT_THROW(alpha_grid(2), ConfigError);
    const auto g = alpha_grid(5);
    EXPECT_EQ(g[2], (std::pair<double, double>{0.5, 0.5}));
}

TEST(Barrier, SymmetricUnderSwap) {
    const auto a = vec({0.9, -0.3, 0.2}), b = vec({0.1, 0.5, -0.8});
    auto f = [](const ParamVector& p) -> std::optional<double> {
        const auto v = p.flat();
        return std::sin(3 * v[0]) + v[1] * v[2] - 0.3 * v[0] * v[0];
    };
    for (std::size_t n : {3u, 7u, 21u, 50u}) {
        EXPECT_EQ(barrier_over_grid(a, b, f, n).barrier, barrier_over_grid(b, a, f, n).barrier);
    }
}

TEST(Barrier, RefinementNeverLowersBarrier) {
    const auto a = vec({0.9, -0.3, 0.2}), b = vec({0.1, 0.5, -0.8});
    auto f = [](const ParamVector& p) -> std::optional<double> {
        const auto v = p.flat();
        return std::cos(7 * v[0]) * v[1] + v[2];
    };
    double prev = -INFINITY;
    for (std::size_t n = 3; n <= 513; n = 2 * n - 1) {
        const double b_n = barrier_over_grid(a, b, f, n).barrier;
        EXPECT_GE(b_n, prev) << n;
        prev = b_n;
    }
}

namespace {

struct NetPair {
    Dataset train = gen_synthetic(SyntheticKind::two_moons, 120, 0.2, 1);
    Dataset test = gen_synthetic(SyntheticKind::two_moons, 60, 0.2, 2);
    std::pair<Net, ParamVector> np = build_net(silab::testing::small_spec(5, {6, 4}, 2, 2));
    ParamVector p1, p2;

    NetPair() {
        ProtocolContext ctx;
        ctx.net = &np.first;
        ctx.init = np.second;
        ctx.train = &train;
        ctx.batch_size = 20;
        ctx.eval_batch = 60;
        ctx.epochs = 5;
        p1 = pretrain(ctx, 0.05, 0).params;
        p2 = pretrain(ctx, 0.5, 1).params;
    }
};

} // namespace

TEST(LinearBarrier, MatchesDenseGridBruteForceOnStoredPair) {
    NetPair t;
    const auto dir = silab::testing::temp_dir("geometry");
    save_checkpoint(dir / "a.silab", {1, t.p1});
    save_checkpoint(dir / "b.silab", {1, t.p2});
    const auto a = load_checkpoint(dir / "a.silab").params, b = load_checkpoint(dir / "b.silab").params;
    const std::size_t n = 41;
    const auto rep = linear_barrier(t.np.first, a, b, t.train, &t.test, n, 60);
    // Brute force: evaluate every grid point with explicit coordinate loops.
    const auto fa = a.flat(), fb = b.flat();
    auto err = [&](const std::vector<double>& flat, const Dataset& ds) {
        ParamVector p = a;
        p.assign_flat(flat);
        return t.np.first.evaluate(p, ds, 60).error;
    };
    for (const Dataset* ds : {&t.train, &t.test}) {
        const double e1 = err(fa, *ds), e2 = err(fb, *ds);
        double best = -INFINITY;
        for (std::size_t k = 0; k < n; ++k) {
            const double wa = static_cast<double>(k) / (n - 1.0), wb = static_cast<double>(n - 1 - k) / (n - 1.0);
            std::vector<double> x(fa.size());
            for (std::size_t i = 0; i < x.size(); ++i) x[i] = wa * fa[i] + wb * fb[i];
            best = std::max(best, err(x, *ds) - (wa * e1 + wb * e2));
        }
        EXPECT_EQ(ds == &t.train ? rep.barrier_train : *rep.barrier_test, best);
    }
    EXPECT_EQ(rep.profile.size(), n);
    EXPECT_EQ(rep.profile.back().alpha, 1.0);
    EXPECT_EQ(rep.profile.back().train_error, err(fa, t.train));
    EXPECT_EQ(rep.angle_rad, angular_distance(a, b));
}

TEST(LinearBarrier, SymmetricAndZeroForIdentical) {
    NetPair t;
    const auto r12 = linear_barrier(t.np.first, t.p1, t.p2, t.train, &t.test, 21, 60);
    const auto r21 = linear_barrier(t.np.first, t.p2, t.p1, t.train, &t.test, 21, 60);
    EXPECT_EQ(r12.barrier_train, r21.barrier_train);
    EXPECT_EQ(*r12.barrier_test, *r21.barrier_test);
    EXPECT_EQ(r12.angle_rad, r21.angle_rad);
    const auto same = linear_barrier(t.np.first, t.p1, t.p1, t.train, nullptr, 21, 60);
    EXPECT_EQ(same.barrier_train, 0.0);
    EXPECT_EQ(same.angle_rad, 0.0);
    EXPECT_FALSE(same.barrier_test.has_value());
}

TEST(LinearBarrier, ZeroNormGroupExcludedWithWarning) {
    NetPair t;
    ParamVector q = t.p1;
    for (double& v : q.groups()[0].value.data) v = -v;
    const auto rep = linear_barrier(t.np.first, t.p1, q, t.train, nullptr, 5, 60);
    ASSERT_EQ(rep.warnings.size(), 1u);
    EXPECT_NE(rep.warnings[0].find("alpha=0.5"), std::string::npos);
    EXPECT_TRUE(std::isnan(rep.profile[2].train_error));
    EXPECT_TRUE(std::isfinite(rep.barrier_train));
}

TEST(LinearBarrier, CsvLayout) {
    NetPair t;
    const auto rep = linear_barrier(t.np.first, t.p1, t.p2, t.train, &t.test, 3, 60);
    const auto csv = geometry_csv({{"x", rep}});
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "pair,alpha,train_error,test_error");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}
