#include <gtest/gtest.h>

#include <filesystem>

#include "occo/backbone.hpp"
#include "test_util.hpp"

using namespace occo;
using occo_test::check_gradients;
using occo_test::random_tensor;
namespace fs = std::filesystem;

namespace {

io::NamedTensors mini_weights(uint64_t seed) {
    // a small file-backed extractor: 5 stages, two convs in stages 1-4
    static const int64_t chans[5] = {4, 6, 6, 8, 8};
    static const int convs[5] = {2, 2, 2, 2, 1};
    auto rng = make_rng(seed);
    io::NamedTensors out;
    int64_t cin = 3;
    for (int s = 0; s < 5; ++s)
        for (int j = 0; j < convs[s]; ++j) {
            std::string base = "conv" + std::to_string(s + 1) + "_" + std::to_string(j + 1);
            double bound = 1.0 / std::sqrt(static_cast<double>(cin * 9));
            out.emplace_back(base + ".w",
                             Tensor::uniform({chans[s], cin, 3, 3}, -bound, bound, rng));
            out.emplace_back(base + ".b", Tensor::uniform({chans[s]}, -bound, bound, rng));
            cin = chans[s];
        }
    return out;
}

fs::path temp_dir(const std::string& name) {
    fs::path d = fs::temp_directory_path() / ("occo_backbone_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

} // namespace

TEST(TestBackboneContract, PyramidShapeSchedule) {
    TestBackbone bb;
    Var x = constant(random_tensor({1, 1, 64, 64}, 50, 0.0, 1.0));
    FeaturePyramid p = bb.extract(x);
    ASSERT_EQ(p.levels.size(), 5u);
    const int64_t sizes[5] = {64, 32, 16, 8, 4};
    const int64_t chans[5] = {8, 16, 24, 32, 32};
    for (int i = 1; i <= 5; ++i) {
        EXPECT_EQ(p.level(i)->value.size(1), chans[i - 1]);
        EXPECT_EQ(p.level(i)->value.size(2), sizes[i - 1]);
        EXPECT_EQ(p.level(i)->value.size(3), sizes[i - 1]);
        EXPECT_TRUE(p.level(i)->value.all_finite());
    }
    // odd sizes follow the ceil-halving schedule
    Var xo = constant(random_tensor({1, 1, 37, 53}, 51, 0.0, 1.0));
    FeaturePyramid po = bb.extract(xo);
    const int64_t hs[5] = {37, 19, 10, 5, 3};
    const int64_t ws[5] = {53, 27, 14, 7, 4};
    for (int i = 1; i <= 5; ++i) {
        EXPECT_EQ(po.level(i)->value.size(2), hs[i - 1]);
        EXPECT_EQ(po.level(i)->value.size(3), ws[i - 1]);
    }
}

TEST(TestBackboneContract, DeterministicAcrossInstances) {
    TestBackbone a, b;
    Var x = constant(random_tensor({2, 1, 16, 16}, 52, 0.0, 1.0));
    FeaturePyramid pa = a.extract(x), pb = b.extract(x);
    for (int i = 1; i <= 5; ++i)
        EXPECT_LT(max_abs_diff(pa.level(i)->value, pb.level(i)->value), 1e-300);
}

TEST(TestBackboneContract, NonConstantExtractor) {
    TestBackbone bb;
    Var zeros = constant(Tensor::zeros({1, 1, 16, 16}));
    Var ones = constant(Tensor::ones({1, 1, 16, 16}));
    FeaturePyramid pz = bb.extract(zeros), po = bb.extract(ones);
    double diff = 0;
    for (int i = 1; i <= 5; ++i) diff += max_abs_diff(pz.level(i)->value, po.level(i)->value);
    EXPECT_GT(diff, 1e-6);
}

TEST(TestBackboneContract, MinimumSizeAndChannels) {
    TestBackbone bb;
    EXPECT_THROW(bb.extract(constant(Tensor::zeros({1, 1, 7, 8}))), DataError);
    EXPECT_THROW(bb.extract(constant(Tensor::zeros({1, 2, 16, 16}))), DataError);
    EXPECT_NO_THROW(bb.extract(constant(Tensor::full({1, 3, 8, 8}, 0.5))));
}

TEST(TestBackboneContract, FrozenWeightsGradFlowsToInputOnly) {
    TestBackbone bb;
    Var x = leaf(random_tensor({1, 1, 8, 8}, 53, 0.1, 0.9));
    FeaturePyramid p = bb.extract(x);
    Var loss = ops::norm2(p.level(5));
    EXPECT_TRUE(loss->requires_grad);
    backward(loss);
    ASSERT_TRUE(x->grad.defined());
    EXPECT_GT(x->grad.abs_max(), 0.0);
}

TEST(TestBackboneContract, InputGradientMatchesFiniteDifferences) {
    TestBackbone bb;
    Var x = leaf(random_tensor({1, 1, 8, 8}, 54, 0.1, 0.9));
    for (int lvl : {1, 3, 5}) {
        check_gradients([&] { return ops::norm2(bb.extract(x).level(lvl)); }, {x},
                        {.rtol = 1e-3, .atol = 1e-8, .max_elems_per_leaf = 12});
    }
}

TEST(FileBackboneContract, LoadsAndFollowsSchedule) {
    fs::path dir = temp_dir("load");
    std::string path = (dir / "bb.weights").string();
    io::save_weights_file(path, mini_weights(99));
    FileBackbone bb(path);
    EXPECT_EQ(bb.kind(), "file");
    Var x = constant(random_tensor({1, 1, 16, 16}, 55, 0.0, 1.0));
    FeaturePyramid p = bb.extract(x);
    const int64_t sizes[5] = {16, 8, 4, 2, 1};
    const int64_t chans[5] = {4, 6, 6, 8, 8};
    for (int i = 1; i <= 5; ++i) {
        EXPECT_EQ(p.level(i)->value.size(1), chans[i - 1]);
        EXPECT_EQ(p.level(i)->value.size(2), sizes[i - 1]);
    }
}

TEST(FileBackboneContract, InputGradientMatchesFiniteDifferences) {
    fs::path dir = temp_dir("grad");
    std::string path = (dir / "bb.weights").string();
    io::save_weights_file(path, mini_weights(100));
    FileBackbone bb(path);
    Var x = leaf(random_tensor({1, 1, 8, 8}, 56, 0.1, 0.9));
    check_gradients([&] { return ops::norm2(bb.extract(x).level(4)); }, {x},
                    {.rtol = 1e-3, .atol = 1e-8, .max_elems_per_leaf = 12});
}

TEST(FileBackboneContract, RejectsBadContainers) {
    fs::path dir = temp_dir("bad");
    std::string garbage = (dir / "garbage.weights").string();
    {
        std::ofstream os(garbage, std::ios::binary);
        os << "not a container";
    }
    EXPECT_THROW(FileBackbone{garbage}, DataError);

    io::NamedTensors incomplete = mini_weights(101);
    incomplete.erase(incomplete.begin() + 4, incomplete.end()); // drop stages 2-5
    std::string path = (dir / "incomplete.weights").string();
    io::save_weights_file(path, incomplete);
    EXPECT_THROW(FileBackbone{path}, DataError);
}

TEST(MakeBackbone, FallsBackToTestKind) {
    EXPECT_EQ(make_backbone("")->kind(), "test");
    EXPECT_EQ(make_backbone("/nonexistent/weights.bin")->kind(), "test");
    fs::path dir = temp_dir("make");
    std::string path = (dir / "bb.weights").string();
    io::save_weights_file(path, mini_weights(102));
    EXPECT_EQ(make_backbone(path)->kind(), "file");
}

TEST(WeightsContainer, RoundTrip) {
    fs::path dir = temp_dir("container");
    io::NamedTensors tensors = mini_weights(103);
    std::string path = (dir / "w.bin").string();
    io::save_weights_file(path, tensors);
    io::NamedTensors back = io::load_weights_file(path);
    ASSERT_EQ(back.size(), tensors.size());
    for (size_t i = 0; i < back.size(); ++i) {
        EXPECT_EQ(back[i].first, tensors[i].first);
        ASSERT_EQ(back[i].second.shape(), tensors[i].second.shape());
        EXPECT_LT(max_abs_diff(back[i].second, tensors[i].second), 1e-300);
    }
}
