#include <gtest/gtest.h>

#include <cmath>

#include "occo/nn.hpp"
#include "test_util.hpp"

using namespace occo;
using occo_test::check_gradients;
using occo_test::random_tensor;

TEST(Registry, NamesAndCounts) {
    nn::ParamRegistry reg;
    auto rng = make_rng(1);
    nn::Conv2d conv(reg, "c", 2, 3, 3, 1, 1, rng);
    nn::Linear lin(reg, "l", 4, 5, rng);
    nn::BatchNorm2d bn(reg, "bn", 3);
    EXPECT_EQ(reg.params().size(), 6u); // c.w c.b l.w l.b bn.gamma bn.beta
    EXPECT_EQ(reg.buffers().size(), 2u);
    EXPECT_EQ(reg.param_count(), 3 * 2 * 9 + 3 + 5 * 4 + 5 + 3 + 3);
    EXPECT_THROW(nn::Linear(reg, "l", 2, 2, rng), ConfigError);
}

TEST(Registry, InitIsSeedDeterministic) {
    auto build = [](uint64_t seed) {
        nn::ParamRegistry reg;
        auto rng = make_rng(seed);
        nn::Conv2d conv(reg, "c", 2, 4, 3, 1, 1, rng);
        return conv.w->value.clone();
    };
    EXPECT_LT(max_abs_diff(build(5), build(5)), 0.0 + 1e-300);
    EXPECT_GT(max_abs_diff(build(5), build(6)), 1e-6);
}

TEST(BatchNorm, TrainForwardMatchesNaive) {
    nn::ParamRegistry reg;
    nn::BatchNorm2d bn(reg, "bn", 2);
    auto rng = make_rng(7);
    bn.gamma->value = Tensor::uniform({2}, 0.5, 1.5, rng);
    bn.beta->value = Tensor::uniform({2}, -0.5, 0.5, rng);
    Var x = leaf(random_tensor({3, 2, 2, 2}, 40, -2.0, 2.0));
    Var y = bn(x, true);

    int64_t B = 3, C = 2, HW = 4;
    for (int64_t c = 0; c < C; ++c) {
        double mu = 0, var = 0;
        for (int64_t b = 0; b < B; ++b)
            for (int64_t i = 0; i < HW; ++i) mu += x->value[(b * C + c) * HW + i];
        mu /= static_cast<double>(B * HW);
        for (int64_t b = 0; b < B; ++b)
            for (int64_t i = 0; i < HW; ++i) {
                double d = x->value[(b * C + c) * HW + i] - mu;
                var += d * d;
            }
        var /= static_cast<double>(B * HW);
        for (int64_t b = 0; b < B; ++b)
            for (int64_t i = 0; i < HW; ++i) {
                double expect = bn.gamma->value[c] * (x->value[(b * C + c) * HW + i] - mu) /
                                    std::sqrt(var + bn.eps) +
                                bn.beta->value[c];
                EXPECT_NEAR(y->value[(b * C + c) * HW + i], expect, 1e-12);
            }
        // running stats: one update from zeros/ones with momentum 0.1
        double unbias = static_cast<double>(B * HW) / static_cast<double>(B * HW - 1);
        EXPECT_NEAR(bn.running_mean[c], 0.1 * mu, 1e-12);
        EXPECT_NEAR(bn.running_var[c], 0.9 + 0.1 * var * unbias, 1e-12);
    }
}

TEST(BatchNorm, TrainGradients) {
    nn::ParamRegistry reg;
    nn::BatchNorm2d bn(reg, "bn", 3);
    auto rng = make_rng(8);
    bn.gamma->value = Tensor::uniform({3}, 0.5, 1.5, rng);
    bn.beta->value = Tensor::uniform({3}, -0.5, 0.5, rng);
    Var x = leaf(random_tensor({2, 3, 3, 3}, 41, -2.0, 2.0));
    Tensor rm0 = bn.running_mean.clone(), rv0 = bn.running_var.clone();
    auto build = [&] {
        // keep running stats fixed so repeated forwards are identical
        std::copy(rm0.data().begin(), rm0.data().end(), bn.running_mean.data().begin());
        std::copy(rv0.data().begin(), rv0.data().end(), bn.running_var.data().begin());
        Var w = leaf(random_tensor({2, 3, 3, 3}, 42));
        return ops::norm2(ops::mul(bn(x, true), constant(w->value)));
    };
    check_gradients(build, {x, bn.gamma, bn.beta}, {.rtol = 1e-4, .atol = 1e-7});
}

TEST(BatchNorm, EvalUsesRunningStats) {
    nn::ParamRegistry reg;
    nn::BatchNorm2d bn(reg, "bn", 1);
    bn.running_mean[0] = 2.0;
    bn.running_var[0] = 4.0;
    Var x = leaf(Tensor::from({2, 4, 6, 0}, {1, 1, 2, 2}));
    Var y = bn(x, false);
    EXPECT_NEAR(y->value[0], 0.0, 1e-9);
    EXPECT_NEAR(y->value[1], 2.0 / std::sqrt(4.0 + bn.eps), 1e-9);
    // eval mode must not touch running stats
    EXPECT_DOUBLE_EQ(bn.running_mean[0], 2.0);
    check_gradients([&] { return ops::norm2(bn(x, false)); }, {x, bn.gamma, bn.beta});
}

TEST(Adam, MatchesHandComputedSteps) {
    Var p = leaf(Tensor::from({1.0}, {1}));
    nn::Adam opt({p}, 0.1, 0.9, 0.999, 1e-8);

    // step 1 with gradient 2.0
    p->grad = Tensor::from({2.0}, {1});
    opt.step();
    double m = 0.1 * 2.0, v = 0.001 * 4.0;
    double mhat = m / (1 - 0.9), vhat = v / (1 - 0.999);
    double expect = 1.0 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
    EXPECT_NEAR(p->value[0], expect, 1e-12);

    // step 2 with gradient -1.0
    p->grad = Tensor::from({-1.0}, {1});
    opt.step();
    m = 0.9 * m + 0.1 * (-1.0);
    v = 0.999 * v + 0.001 * 1.0;
    mhat = m / (1 - 0.9 * 0.9);
    vhat = v / (1 - 0.999 * 0.999);
    expect -= 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
    EXPECT_NEAR(p->value[0], expect, 1e-12);
    EXPECT_EQ(opt.step_count(), 2);
}

TEST(Adam, ConvergesOnQuadratic) {
    Var p = leaf(Tensor::from({5.0, -3.0}, {2}));
    nn::Adam opt({p}, 0.05);
    for (int i = 0; i < 400; ++i) {
        opt.zero_grad();
        Var loss = ops::sum_all(ops::square(ops::add_scalar(p, -1.0)));
        backward(loss);
        opt.step();
    }
    EXPECT_NEAR(p->value[0], 1.0, 1e-2);
    EXPECT_NEAR(p->value[1], 1.0, 1e-2);
}

TEST(Modules, ConvLinearGradCheckThroughModules) {
    nn::ParamRegistry reg;
    auto rng = make_rng(9);
    nn::Conv2d conv(reg, "c", 2, 3, 3, 1, 1, rng);
    nn::BatchNorm2d bn(reg, "bn", 3);
    Var x = leaf(random_tensor({2, 2, 4, 4}, 43));
    Tensor rm0 = bn.running_mean.clone(), rv0 = bn.running_var.clone();
    auto build = [&] {
        std::copy(rm0.data().begin(), rm0.data().end(), bn.running_mean.data().begin());
        std::copy(rv0.data().begin(), rv0.data().end(), bn.running_var.data().begin());
        return ops::norm2(ops::relu(bn(conv(x), true)));
    };
    check_gradients(build, {x, conv.w, conv.b, bn.gamma, bn.beta}, {.rtol = 1e-4, .atol = 1e-7});
}
