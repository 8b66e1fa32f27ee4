#include "occo/metrics.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <vector>

#include "test_util.hpp"

namespace occo {
namespace {

using occo_test::random_tensor;

// ------------------------------------------------------------------ oracles

double oracle_entropy(const Tensor& img) {
    std::map<int, int64_t> hist;
    for (int64_t i = 0; i < img.numel(); ++i) {
        double v = std::min(std::max(img[i], 0.0), 1.0);
        hist[static_cast<int>(std::lround(v * 255.0))]++;
    }
    double en = 0.0, n = static_cast<double>(img.numel());
    for (const auto& [bin, count] : hist) {
        double p = count / n;
        en -= p * std::log(p) / std::log(2.0);
    }
    return en;
}

double oracle_sf(const Tensor& img) {
    int64_t H = img.size(0), W = img.size(1);
    double rf = 0.0, cf = 0.0;
    for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < W - 1; ++j)
            rf += std::pow(img.at(i, j + 1) - img.at(i, j), 2.0);
    for (int64_t i = 0; i < H - 1; ++i)
        for (int64_t j = 0; j < W; ++j)
            cf += std::pow(img.at(i + 1, j) - img.at(i, j), 2.0);
    return std::sqrt(rf / (H * (W - 1.0)) + cf / ((H - 1.0) * W));
}

double oracle_ag(const Tensor& img) {
    int64_t H = img.size(0), W = img.size(1);
    double sum = 0.0;
    for (int64_t i = 0; i < H - 1; ++i)
        for (int64_t j = 0; j < W - 1; ++j) {
            double dx = img.at(i, j + 1) - img.at(i, j);
            double dy = img.at(i + 1, j) - img.at(i, j);
            sum += std::sqrt(0.5 * (dx * dx + dy * dy));
        }
    return sum / ((H - 1.0) * (W - 1.0));
}

double oracle_pearson(const Tensor& a, const Tensor& b) {
    int64_t n = a.numel();
    double ma = std::accumulate(a.ptr(), a.ptr() + n, 0.0) / n;
    double mb = std::accumulate(b.ptr(), b.ptr() + n, 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

Tensor roll(const Tensor& img, int64_t dy, int64_t dx) {
    int64_t H = img.size(0), W = img.size(1);
    Tensor out({H, W});
    for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < W; ++j)
            out.at((i + dy) % H, (j + dx) % W) = img.at(i, j);
    return out;
}

// ------------------------------------------------------------------ entropy

TEST(Entropy, ConstantImageIsZero) {
    EXPECT_EQ(entropy(Tensor::full({12, 9}, 0.37)), 0.0);
}

TEST(Entropy, UniformCoverageOfAllLevelsIsEight) {
    Tensor img({16, 16});
    for (int64_t i = 0; i < 256; ++i) img[i] = static_cast<double>(i) / 255.0;
    EXPECT_NEAR(entropy(img), 8.0, 1e-9);
}

TEST(Entropy, InvariantUnderPixelShuffleUnlikeSfAndAg) {
    int64_t H = 16, W = 16;
    Tensor img({H, W});
    for (int64_t i = 0; i < img.numel(); ++i)
        img[i] = static_cast<double>(i) / static_cast<double>(img.numel());
    Tensor shuffled = img.clone();
    auto rng = make_rng(906);
    std::shuffle(shuffled.ptr(), shuffled.ptr() + shuffled.numel(), rng);

    EXPECT_DOUBLE_EQ(entropy(img), entropy(shuffled));
    EXPECT_GT(std::fabs(spatial_frequency(img) - spatial_frequency(shuffled)), 1e-3);
    EXPECT_GT(std::fabs(average_gradient(img) - average_gradient(shuffled)), 1e-3);
}

// -------------------------------------------------------- spatial frequency

TEST(SpatialFrequency, ConstantImageIsZero) {
    EXPECT_EQ(spatial_frequency(Tensor::full({7, 7}, 0.8)), 0.0);
}

TEST(SpatialFrequency, AlternatingColumnsGiveOne) {
    Tensor img({8, 8});
    for (int64_t i = 0; i < 8; ++i)
        for (int64_t j = 0; j < 8; ++j) img.at(i, j) = static_cast<double>(j % 2);
    EXPECT_DOUBLE_EQ(spatial_frequency(img), 1.0);
}

TEST(SpatialFrequency, RejectsTooSmallImages) {
    EXPECT_THROW(spatial_frequency(Tensor::zeros({1, 5})), DataError);
    EXPECT_THROW(spatial_frequency(Tensor::zeros({5, 1})), DataError);
}

// --------------------------------------------------------- average gradient

TEST(AverageGradient, ConstantImageIsZero) {
    EXPECT_EQ(average_gradient(Tensor::full({5, 9}, 0.2)), 0.0);
}

TEST(AverageGradient, HorizontalRampGivesSlopeOverSqrtTwo) {
    double g = 0.03125;  // power of two, exact forward differences
    Tensor img({12, 16});
    for (int64_t i = 0; i < 12; ++i)
        for (int64_t j = 0; j < 16; ++j) img.at(i, j) = g * static_cast<double>(j);
    EXPECT_NEAR(average_gradient(img), g / std::sqrt(2.0), 1e-12);
}

TEST(AverageGradient, RejectsTooSmallImages) {
    EXPECT_THROW(average_gradient(Tensor::zeros({2, 1})), DataError);
}

// ------------------------------------------------------------- correlation

TEST(CorrelationCoefficient, IdenticalTripleGivesOne) {
    Tensor f = random_tensor({9, 9}, 921, 0.0, 1.0);
    EXPECT_NEAR(correlation_coefficient(f, f, f), 1.0, 1e-12);
}

TEST(CorrelationCoefficient, PerfectAnticorrelationGivesMinusOne) {
    Tensor f = random_tensor({9, 9}, 931, 0.0, 1.0);
    Tensor inv = f.clone();
    for (int64_t i = 0; i < inv.numel(); ++i) inv[i] = 1.0 - inv[i];
    EXPECT_NEAR(correlation_coefficient(f, inv, inv), -1.0, 1e-12);
}

TEST(CorrelationCoefficient, ConstantImagesContributeZero) {
    Tensor f = random_tensor({9, 9}, 941, 0.0, 1.0);
    Tensor ir = random_tensor({9, 9}, 942, 0.0, 1.0);
    Tensor flat = Tensor::full({9, 9}, 0.5);
    EXPECT_NEAR(correlation_coefficient(f, flat, ir), 0.5 * oracle_pearson(f, ir), 1e-12);
    EXPECT_EQ(correlation_coefficient(flat, f, ir), 0.0);
}

// --------------------------------------------------------------- properties

TEST(Metrics, FiftyRandomImagesMatchScalarOracles) {
    for (uint64_t s = 0; s < 50; ++s) {
        int64_t H = 4 + static_cast<int64_t>(s % 13), W = 4 + static_cast<int64_t>((s * 7) % 13);
        Tensor f = random_tensor({H, W}, 1000 + s, 0.0, 1.0);
        Tensor vi = random_tensor({H, W}, 2000 + s, 0.0, 1.0);
        Tensor ir = random_tensor({H, W}, 3000 + s, 0.0, 1.0);
        MetricReport r = compute_metrics(f, vi, ir);
        EXPECT_NEAR(r.en, oracle_entropy(f), 1e-9);
        EXPECT_NEAR(r.sf, oracle_sf(f), 1e-9);
        EXPECT_NEAR(r.ag, oracle_ag(f), 1e-9);
        EXPECT_NEAR(r.cc, 0.5 * (oracle_pearson(f, vi) + oracle_pearson(f, ir)), 1e-9);
        EXPECT_GE(r.en, 0.0);
        EXPECT_LE(r.en, 8.0 + 1e-12);
        EXPECT_GE(r.cc, -1.0 - 1e-12);
        EXPECT_LE(r.cc, 1.0 + 1e-12);
    }
}

TEST(Metrics, RollingAWrapSafePatternLeavesValuesUnchanged) {
    int64_t H = 16, W = 16;
    Tensor img({H, W});
    for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < W; ++j) img.at(i, j) = static_cast<double>((i + j) % 2);
    for (auto [dy, dx] : std::vector<std::pair<int64_t, int64_t>>{{1, 0}, {0, 1}, {1, 1}}) {
        Tensor r = roll(img, dy, dx);
        EXPECT_DOUBLE_EQ(entropy(img), entropy(r));
        EXPECT_NEAR(spatial_frequency(img), spatial_frequency(r), 1e-6);
        EXPECT_NEAR(average_gradient(img), average_gradient(r), 1e-6);
    }
}

// ---------------------------------------------------------------------- csv

TEST(MetricsCsv, EmitsHeaderRowsAndMeanRow) {
    std::vector<MetricRow> rows = {{"a", {1.0, 2.0, 3.0, 0.5}}, {"b", {3.0, 4.0, 5.0, -0.5}}};
    std::string expected =
        "image_id,en,sf,ag,cc\n"
        "a,1.000000,2.000000,3.000000,0.500000\n"
        "b,3.000000,4.000000,5.000000,-0.500000\n"
        "mean,2.000000,3.000000,4.000000,0.000000\n";
    EXPECT_EQ(metrics_csv(rows), expected);
}

TEST(MetricsCsv, EmptyInputStillHasHeaderAndMeanRow) {
    std::string expected =
        "image_id,en,sf,ag,cc\n"
        "mean,0.000000,0.000000,0.000000,0.000000\n";
    EXPECT_EQ(metrics_csv({}), expected);
}

}  // namespace
}  // namespace occo
