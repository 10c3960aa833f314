#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"

using namespace silab;
using silab::testing::random_batch;
using silab::testing::small_spec;

namespace {

// Scalar-loop forward pass written independently of the tape: per layer
// z = h W^T, batch statistics normalization with biased variance, ReLU; then the
// fixed head and mean softmax cross-entropy.
double reference_loss(const Net& net, const ParamVector& p, const Tensor& x, const std::vector<int>& y) {
    const auto& spec = net.spec();
    const std::size_t n = x.rows();
    std::vector<std::vector<double>> h(n, std::vector<double>(x.cols()));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) h[i][j] = x(i, j);
    std::size_t g = 0;
    for (std::size_t layer = 0; layer < spec.hidden_widths.size(); ++layer) {
        const std::size_t width = spec.hidden_widths[layer], fan_in = h[0].size();
        std::vector<std::vector<double>> w(width, std::vector<double>(fan_in));
        if (spec.group_by == GroupBy::layer) {
            const Tensor& t = p.groups()[g++].value;
            for (std::size_t u = 0; u < width; ++u)
                for (std::size_t k = 0; k < fan_in; ++k) w[u][k] = t(u, k);
        } else {
            for (std::size_t u = 0; u < width; ++u) {
                const Tensor& t = p.groups()[g++].value;
                for (std::size_t k = 0; k < fan_in; ++k) w[u][k] = t.data[k];
            }
        }
        std::vector<std::vector<double>> z(n, std::vector<double>(width, 0.0));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t u = 0; u < width; ++u)
                for (std::size_t k = 0; k < fan_in; ++k) z[i][u] += h[i][k] * w[u][k];
        for (std::size_t u = 0; u < width; ++u) {
            double mean = 0.0, var = 0.0;
            for (std::size_t i = 0; i < n; ++i) mean += z[i][u];
            mean /= static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) var += (z[i][u] - mean) * (z[i][u] - mean);
            var /= static_cast<double>(n);
            for (std::size_t i = 0; i < n; ++i) {
                z[i][u] = (z[i][u] - mean) / std::sqrt(var + spec.normalization_epsilon);
                z[i][u] = std::max(0.0, z[i][u]);
            }
        }
        h = std::move(z);
    }
    const Tensor& head = net.head();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> logit(head.rows(), 0.0);
        for (std::size_t c = 0; c < head.rows(); ++c)
            for (std::size_t k = 0; k < head.cols(); ++k) logit[c] += h[i][k] * head(c, k);
        double sum = 0.0;
        for (double l : logit) sum += std::exp(l);
        total += std::log(sum) - logit[static_cast<std::size_t>(y[i])];
    }
    return total / static_cast<double>(n);
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(a), std::abs(b)); }

} // namespace

TEST(Autodiff, ZeroWeightLinearGivesLn2) {
    ad::Tape t;
    auto x = t.leaf(Tensor({4, 3}, std::vector<double>{1, 2, 3, -1, 0, 2, 5, 5, 5, 0.5, -2, 1}));
    auto w = t.leaf(Tensor({2, 3}, 0.0));
    std::vector<int> y{0, 1, 1, 0};
    auto loss = t.softmax_xent(t.matmul_nt(x, w), y);
    t.set_output(loss);
    EXPECT_NEAR(t.output_value(), std::numbers::ln2, 1e-15);
}

TEST(Autodiff, SaturatedSoftmaxLossVanishes) {
    ad::Tape t;
    auto logits = t.leaf(Tensor({2, 2}, std::vector<double>{60, 0, 0, 60}));
    std::vector<int> y{0, 1};
    t.set_output(t.softmax_xent(logits, y));
    EXPECT_LT(t.output_value(), 1e-25);
}

TEST(Autodiff, SumOfSquaresGradient) {
    ad::Tape t;
    auto p = t.leaf(Tensor({2}, std::vector<double>{1, 2}));
    t.set_output(t.sum_squares(p));
    const auto adj = t.backward();
    EXPECT_EQ(adj[static_cast<std::size_t>(p.id)].data, (std::vector<double>{2, 4}));
}

TEST(Autodiff, ConstantLossHasZeroGradient) {
    ad::Tape t;
    auto p = t.leaf(Tensor({3}, std::vector<double>{1, -2, 3}));
    auto c = t.leaf(Tensor({3}, std::vector<double>{7, 7, 7}));
    t.set_output(t.weighted_sum(t.add(t.scale(p, 0.0), c), Tensor({3}, std::vector<double>{1, 1, 1})));
    EXPECT_EQ(t.output_value(), 21.0);
    const auto adj = t.backward();
    for (double v : adj[static_cast<std::size_t>(p.id)].data) EXPECT_EQ(v, 0.0);
}

TEST(Autodiff, BackwardIsRepeatable) {
    const auto [net, p] = build_net(small_spec(3));
    const auto [x, y] = random_batch(5, 16, 3, 2);
    const auto fr = net.forward(p, x, y);
    const auto a = fr.tape.backward();
    const auto b = fr.tape.backward();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].data, b[i].data);
}

TEST(FiniteDiff, QuadraticMatchesAnalytic) {
    const std::vector<double> x{0.3, -1.2, 2.5};
    auto f = [](std::span<const double> v) { return 3 * v[0] * v[0] + v[1] * v[1] - 2 * v[0] * v[2] + v[2]; };
    const auto g = ad::finite_diff_grad(f, x, 1e-5);
    EXPECT_NEAR(g[0], 6 * 0.3 - 2 * 2.5, 1e-9);
    EXPECT_NEAR(g[1], -2.4, 1e-9);
    EXPECT_NEAR(g[2], -0.6 + 1, 1e-9);
}

TEST(FiniteDiff, LinearHasNoTruncationError) {
    const std::vector<double> x{1, 2};
    auto f = [](std::span<const double> v) { return 0.5 * v[0] - 0.25 * v[1]; };
    for (double eps : {1e-3, 0.5, 4.0}) {
        const auto g = ad::finite_diff_grad(f, x, eps);
        EXPECT_NEAR(g[0], 0.5, 1e-12);
        EXPECT_NEAR(g[1], -0.25, 1e-12);
    }
}

TEST(FiniteDiff, RejectsNonPositiveEpsilon) {
    auto f = [](std::span<const double> v) { return v[0]; };
    const std::vector<double> x{1};
    EXPECT_THROW(ad::finite_diff_grad(f, x, 0.0), ConfigError);
}

TEST(Forward, MatchesScalarReference) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
        for (auto gb : {GroupBy::layer, GroupBy::unit}) {
            auto spec = small_spec(seed, {7, 5}, 3);
            spec.group_by = gb;
            spec.head_scale = 2.5;
            const auto [net, p] = build_net(spec);
            const auto [x, y] = random_batch(100 + seed, 12, 3, 3);
            EXPECT_LE(rel_err(net.loss(p, x, y), reference_loss(net, p, x, y)), 1e-12);
        }
    }
}

TEST(Backward, MatchesCentralDifferences) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto [net, p] = build_net(small_spec(seed, {6, 5}));
        const auto [x, y] = random_batch(200 + seed, 10, 3, 2);
        const auto [loss, grad] = net.loss_and_grad(p, x, y);
        ParamVector probe = p;
        auto f = [&](std::span<const double> v) {
            probe.assign_flat(v);
            return net.loss(probe, x, y);
        };
        const auto fd = ad::finite_diff_grad(f, p.flat(), 1e-6);
        const auto g = grad.flat();
        std::size_t checked = 0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (std::abs(g[i]) <= 1e-6) continue;
            EXPECT_LE(rel_err(g[i], fd[i]), 1e-4) << "seed " << seed << " coordinate " << i;
            ++checked;
        }
        EXPECT_GT(checked, g.size() / 2);
    }
}
