#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"

using namespace silab;
using silab::testing::small_spec;
using silab::testing::vec;

TEST(ProjectedStep, ZeroGradientKeepsPoint) {
    const auto p = vec({0.6, 0.8});
    EXPECT_EQ(projected_sgd_step(p, vec({0, 0}), 0.5, 1.0).flat(), p.flat());
}

TEST(ProjectedStep, NormalizesPreProjectionVector) {
    // theta - lr g = (3, 4)
    const auto q = projected_sgd_step(vec({1, 0}), vec({-2, -4}), 1.0, 1.0);
    EXPECT_DOUBLE_EQ(q.flat()[0], 0.6);
    EXPECT_DOUBLE_EQ(q.flat()[1], 0.8);
}

TEST(ProjectedStep, OrthogonalGradientMovesAlongGreatCircle) {
    for (double r : {1.0, 2.5}) {
        for (double lr : {0.01, 0.3, 2.0}) {
            const auto p = vec({r, 0, 0});
            const auto g = vec({0, 0.7, -1.1});
            const auto q = projected_sgd_step(p, g, lr, r);
            EXPECT_NEAR(q.global_norm(), r, 1e-14 * r);
            EXPECT_NEAR(angular_distance(p, q), std::atan(lr * g.global_norm() / r), 1e-12);
        }
    }
}

TEST(ProjectedStep, ZeroPreProjectionIsDegenerate) {
    EXPECT_THROW(projected_sgd_step(vec({1, 0}), vec({1, 0}), 1.0, 1.0), DegenerateStepError);
}

TEST(MomentumWd, ReducesToSgd) {
    auto st = OptState::practical(0.0, 0.0);
    const auto p = vec({1, -2}), g = vec({0.5, 0.25});
    EXPECT_EQ(momentum_wd_step(st, p, g, 0.1).flat(), sgd_step(p, g, 0.1).flat());
}

TEST(MomentumWd, ZeroGradientNoDecayKeepsPoint) {
    auto st = OptState::practical(0.9, 0.0);
    const auto p = vec({1, -2});
    EXPECT_EQ(momentum_wd_step(st, p, vec({0, 0}), 0.1).flat(), p.flat());
}

TEST(MomentumWd, TwoStepsOnConstantGradient) {
    auto st = OptState::practical(0.9, 0.0);
    const auto p0 = vec({0, 0}), g = vec({1, -2});
    const double lr = 0.1;
    const auto p1 = momentum_wd_step(st, p0, g, lr);
    const auto p2 = momentum_wd_step(st, p1, g, lr);
    EXPECT_NEAR(p2.flat()[0], -lr * 1 * 2.9, 1e-15);
    EXPECT_NEAR(p2.flat()[1], -lr * -2 * 2.9, 1e-15);
}

TEST(MomentumWd, WeightDecayTerm) {
    auto st = OptState::practical(0.0, 0.5);
    const auto q = momentum_wd_step(st, vec({2}), vec({0}), 0.1);
    EXPECT_DOUBLE_EQ(q.flat()[0], 2 - 0.1 * 0.5 * 2);
}

TEST(EffectiveLr, Formula) {
    const auto r = effective_lr(0.1, vec({2, 0}));
    EXPECT_DOUBLE_EQ(r.per_group[0].second, 0.025);
    EXPECT_DOUBLE_EQ(r.global_elr, 0.025);
    NetSpec s;
    const auto p = build_net(s).second;
    EXPECT_NEAR(effective_lr(0.3, p).global_elr, 0.3, 1e-15);
    EXPECT_THROW(effective_lr(0.1, vec({0, 0})), DiagnosticError);
}

TEST(OptState, Validation) {
    EXPECT_THROW(OptState::practical(1.0, 0.0).validate(), ConfigError);
    EXPECT_THROW(OptState::practical(0.9, -1.0).validate(), ConfigError);
    EXPECT_THROW(OptState::sphere(0.0).validate(), ConfigError);
}

namespace {

struct Toy {
    Dataset train = gen_synthetic(SyntheticKind::two_moons, 96, 0.1, 1);
    Dataset test = gen_synthetic(SyntheticKind::two_moons, 64, 0.1, 2);
    std::pair<Net, ParamVector> np = build_net(small_spec(3, {8, 8}, 2, 2));
};

TrainOptions opts(std::uint64_t seed, std::size_t offset = 0) {
    TrainOptions o;
    o.batch_size = 16;
    o.eval_batch = 32;
    o.seed = seed;
    o.epoch_offset = offset;
    return o;
}

} // namespace

TEST(Train, RejectsZeroLrPhase) {
    Toy t;
    EXPECT_THROW(train(t.np.first, t.np.second, t.train, &t.test, Schedule{{{0.0, 3}}}, OptState::sphere(1), opts(0)),
                 ConfigError);
    EXPECT_THROW(train(t.np.first, t.np.second, t.train, &t.test, Schedule{{{0.1, 0}}}, OptState::sphere(1), opts(0)),
                 ConfigError);
}

TEST(Train, RequiresPointOnSphere) {
    Toy t;
    ParamVector p = t.np.second;
    p.scale(2.0);
    EXPECT_THROW(train(t.np.first, p, t.train, &t.test, Schedule{{{0.1, 1}}}, OptState::sphere(1), opts(0)),
                 ConfigError);
}

TEST(Train, TinyLrBarelyMoves) {
    Toy t;
    const auto r = train(t.np.first, t.np.second, t.train, &t.test, Schedule{{{1e-8, 1}}}, OptState::sphere(1), opts(0));
    EXPECT_LT(angular_distance(t.np.second, r.params), 1e-6);
}

TEST(Train, SphereInvariantAfterEveryStep) {
    Toy t;
    double worst = 0.0;
    std::size_t steps = 0;
    TrainHooks h;
    h.after_step = [&](const ParamVector& p) {
        worst = std::max(worst, std::abs(p.global_norm() - 1.0));
        ++steps;
    };
    train(t.np.first, t.np.second, t.train, &t.test, Schedule{{{0.5, 10}}}, OptState::sphere(1), opts(2), h);
    EXPECT_EQ(steps, 60u);
    EXPECT_LE(worst, 1e-12);
}

TEST(Train, ConcatenationIdentity) {
    Toy t;
    const auto& [net, p0] = t.np;
    const Schedule two{{{0.2, 5}, {0.05, 4}}};
    const auto whole = train(net, p0, t.train, &t.test, two, OptState::sphere(1), opts(7));
    const auto first = train(net, p0, t.train, &t.test, Schedule{{{0.2, 5}}}, OptState::sphere(1), opts(7));
    const auto second = train(net, first.params, t.train, &t.test, Schedule{{{0.05, 4}}}, first.state, opts(7, 5));
    EXPECT_EQ(whole.params.groups(), second.params.groups());
    ASSERT_EQ(whole.trajectory.size(), 9u);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(whole.trajectory.records[5 + i].train_loss, second.trajectory.records[i].train_loss);
        EXPECT_EQ(whole.trajectory.records[5 + i].epoch, second.trajectory.records[i].epoch);
    }
}

TEST(Train, ConcatenationIdentityWithMomentum) {
    Toy t;
    const auto& [net, p0] = t.np;
    const auto st = OptState::practical(0.9, 5e-4);
    const auto whole = train(net, p0, t.train, nullptr, Schedule{{{0.05, 3}, {0.01, 3}}}, st, opts(1));
    const auto a = train(net, p0, t.train, nullptr, Schedule{{{0.05, 3}}}, st, opts(1));
    const auto b = train(net, a.params, t.train, nullptr, Schedule{{{0.01, 3}}}, a.state, opts(1, 3));
    EXPECT_EQ(whole.params.groups(), b.params.groups());
}

TEST(Train, DivergenceIsRecordedNotThrown) {
    // Constant features with epsilon 0 make the normalization 0/0.
    Toy t;
    auto s = small_spec(3, {8, 8}, 2, 2);
    s.normalization_epsilon = 0.0;
    const auto [net, p] = build_net(s);
    std::fill(t.train.features.data.begin(), t.train.features.data.end(), 1.0);
    const auto r = train(net, p, t.train, &t.test, Schedule{{{0.1, 4}}}, OptState::sphere(1), opts(0));
    ASSERT_TRUE(r.trajectory.diverged_at.has_value());
    EXPECT_TRUE(r.trajectory.records.back().diverged());
    EXPECT_EQ(r.trajectory.size(), 4u);
}

TEST(Train, CheckpointsAndEarlyStop) {
    Toy t;
    TrainHooks h;
    h.keep_checkpoint = [](std::size_t e) { return e % 2 == 0; };
    h.stop = [](const EpochRecord& r) { return r.epoch == 5; };
    const auto r = train(t.np.first, t.np.second, t.train, &t.test, Schedule{{{0.1, 9}}}, OptState::sphere(1), opts(0), h);
    EXPECT_TRUE(r.stopped_early);
    EXPECT_EQ(r.trajectory.size(), 5u);
    EXPECT_EQ(r.checkpoints.size(), 2u);
    EXPECT_TRUE(r.checkpoints.count(4));
}

TEST(Train, TrajectoryCsvRoundTrip) {
    Toy t;
    const auto r = train(t.np.first, t.np.second, t.train, &t.test, Schedule{{{0.1, 3}}}, OptState::sphere(1), opts(0));
    const std::string csv = trajectory_csv(r.trajectory);
    const auto back = parse_trajectory_csv(csv);
    EXPECT_EQ(trajectory_csv(back), csv);
    EXPECT_EQ(back.records[2].train_loss, r.trajectory.records[2].train_loss);
    EXPECT_THROW(parse_trajectory_csv("epoch,phase\n1,0\n"), IngestionError);
}

TEST(Train, ToyRegimeOneRunConverges) {
    // The acceptance task: width-64 two-layer net, two moons n = 1000, batch 128.
    const auto tr = gen_synthetic(SyntheticKind::two_moons, 1000, 0.1, 1);
    NetSpec s;
    s.seed = 0;
    s.normalization_epsilon = 0.0;
    s.head_scale = 8.0;
    const auto [net, p] = build_net(s);
    TrainOptions o;
    o.seed = 0;
    const auto r = train(net, p, tr, nullptr, Schedule{{{0.0016, 200}}}, OptState::sphere(1), o);
    EXPECT_LT(r.trajectory.records.back().train_loss, 1e-2);
}
