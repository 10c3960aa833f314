#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "helpers.hpp"

using namespace silab;

namespace {

std::string be32(std::uint32_t v) {
    return {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8), static_cast<char>(v)};
}

// 10 images of 28x28 where image i has every pixel equal to 20 i, labels 9 - i.
void write_fixture(const std::filesystem::path& dir) {
    std::string img = be32(0x803) + be32(10) + be32(28) + be32(28);
    std::string lab = be32(0x801) + be32(10);
    for (int i = 0; i < 10; ++i) {
        img += std::string(784, static_cast<char>(20 * i));
        lab += static_cast<char>(9 - i);
    }
    write_file(dir / "img.idx", img);
    write_file(dir / "lab.idx", lab);
}

} // namespace

TEST(Synthetic, NoiselessMoonsLieOnHalfCircles) {
    const auto ds = gen_synthetic(SyntheticKind::two_moons, 101, 0.0, 5);
    ASSERT_EQ(ds.size(), 101u);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        const double x = ds.features(i, 0), y = ds.features(i, 1);
        if (ds.labels[i] == 0) {
            EXPECT_NEAR(x * x + y * y, 1.0, 1e-12);
            EXPECT_GE(y, -1e-15);
        } else {
            EXPECT_NEAR((x - 1) * (x - 1) + (y - 0.5) * (y - 0.5), 1.0, 1e-12);
            EXPECT_LE(y, 0.5 + 1e-15);
        }
    }
}

TEST(Synthetic, SameSeedSameData) {
    for (auto k : {SyntheticKind::two_moons, SyntheticKind::gaussian_blobs, SyntheticKind::spirals}) {
        const auto a = gen_synthetic(k, 64, 0.2, 9, 3), b = gen_synthetic(k, 64, 0.2, 9, 3);
        EXPECT_EQ(a.features, b.features);
        EXPECT_EQ(a.labels, b.labels);
        EXPECT_NE(gen_synthetic(k, 64, 0.2, 10, 3).features, a.features);
    }
}

TEST(Synthetic, BalancedClasses) {
    const auto ds = gen_synthetic(SyntheticKind::spirals, 100, 0.1, 1, 3);
    std::vector<int> count(3, 0);
    for (int y : ds.labels) ++count[static_cast<std::size_t>(y)];
    EXPECT_EQ(count, (std::vector<int>{34, 33, 33}));
}

TEST(Synthetic, SeparatedBlobsAreLinearlySeparable) {
    // Nearest-centroid classifier fitted on the data; its decision rule is linear.
    const int c = 4;
    const auto ds = gen_synthetic(SyntheticKind::gaussian_blobs, 800, 0.5, 2, c);
    std::vector<std::array<double, 2>> mu(c, {0, 0});
    std::vector<int> n(c, 0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        auto& m = mu[static_cast<std::size_t>(ds.labels[i])];
        m[0] += ds.features(i, 0);
        m[1] += ds.features(i, 1);
        ++n[static_cast<std::size_t>(ds.labels[i])];
    }
    for (int k = 0; k < c; ++k) mu[k][0] /= n[k], mu[k][1] /= n[k];
    std::size_t correct = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        int best = 0;
        double bd = INFINITY;
        for (int k = 0; k < c; ++k) {
            const double d = std::hypot(ds.features(i, 0) - mu[k][0], ds.features(i, 1) - mu[k][1]);
            if (d < bd) bd = d, best = k;
        }
        correct += best == ds.labels[i];
    }
    EXPECT_GE(static_cast<double>(correct) / ds.size(), 0.99);
}

TEST(Synthetic, RejectsBadArguments) {
    EXPECT_THROW(gen_synthetic(SyntheticKind::two_moons, 2, 0.1, 1), ConfigError);
    EXPECT_THROW(gen_synthetic(SyntheticKind::two_moons, 10, -1.0, 1), ConfigError);
    EXPECT_THROW(parse_synthetic_kind("moons"), ConfigError);
}

TEST(Synthetic, CsvHeader) {
    const auto csv = dataset_csv(gen_synthetic(SyntheticKind::two_moons, 4, 0.0, 1));
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "x0,x1,label");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
}

TEST(Idx, FixtureShapesAndLabels) {
    const auto dir = silab::testing::temp_dir("idx");
    write_fixture(dir);
    const auto ds = load_idx(dir / "img.idx", dir / "lab.idx");
    EXPECT_EQ(ds.features.shape, (std::vector<std::size_t>{10, 784}));
    for (int i = 0; i < 10; ++i) EXPECT_EQ(ds.labels[static_cast<std::size_t>(i)], 9 - i);
    EXPECT_EQ(ds.n_classes, 10);
    // Standardized per feature: mean 0.
    double mean = 0.0;
    for (std::size_t i = 0; i < 10; ++i) mean += ds.features(i, 100);
    EXPECT_NEAR(mean, 0.0, 1e-12);
}

TEST(Idx, LimitTakesFirstRecords) {
    const auto dir = silab::testing::temp_dir("idx_limit");
    write_fixture(dir);
    const auto ds = load_idx(dir / "img.idx", dir / "lab.idx", 5);
    EXPECT_EQ(ds.size(), 5u);
    EXPECT_EQ(ds.labels, (std::vector<int>{9, 8, 7, 6, 5}));
}

TEST(Idx, TruncatedFileNamesByteCounts) {
    const auto dir = silab::testing::temp_dir("idx_trunc");
    write_fixture(dir);
    auto img = read_file(dir / "img.idx");
    write_file(dir / "img.idx", img.substr(0, img.size() - 100));
    try {
        load_idx(dir / "img.idx", dir / "lab.idx");
        FAIL() << "expected IngestionError";
    } catch (const IngestionError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("expected 7856 bytes, got 7756"), std::string::npos) << msg;
    }
}

TEST(Idx, BadMagicAndMissingFile) {
    const auto dir = silab::testing::temp_dir("idx_magic");
    write_fixture(dir);
    EXPECT_THROW(load_idx(dir / "lab.idx", dir / "lab.idx"), IngestionError);
    EXPECT_THROW(load_idx(dir / "nope.idx", dir / "lab.idx"), IngestionError);
}

TEST(Batches, CoverAllIndicesDisjointly) {
    const auto b = batches(6, 2, 1, 0);
    ASSERT_EQ(b.size(), 3u);
    std::set<std::size_t> seen;
    for (const auto& s : b) {
        EXPECT_EQ(s.size(), 2u);
        seen.insert(s.begin(), s.end());
    }
    EXPECT_EQ(seen, (std::set<std::size_t>{0, 1, 2, 3, 4, 5}));
}

TEST(Batches, PureFunctionOfSeedAndEpoch) {
    EXPECT_EQ(batches(100, 16, 3, 7), batches(100, 16, 3, 7));
    EXPECT_NE(batches(100, 16, 3, 0), batches(100, 16, 3, 1));
    EXPECT_NE(batches(100, 16, 3, 0), batches(100, 16, 4, 0));
}

TEST(Batches, RaggedSingletonMerged) {
    const auto b = batches(7, 3, 0, 0);
    ASSERT_EQ(b.size(), 2u);
    EXPECT_EQ(b.back().size(), 4u);
    EXPECT_THROW(batches(7, 1, 0, 0), ConfigError);
}
