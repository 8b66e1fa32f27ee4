#pragma once

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "occo/autograd.hpp"
#include "occo/rng.hpp"

namespace occo_test {

inline bool grad_close(double analytic, double fd, double rtol, double atol) {
    return std::fabs(analytic - fd) <= atol + rtol * std::max(std::fabs(analytic), std::fabs(fd));
}

struct GradCheckOpts {
    double h = 1e-5;
    double rtol = 1e-5;
    double atol = 1e-8;
    int64_t max_elems_per_leaf = 0; // 0 = all elements
    uint64_t sample_seed = 17;
};

/// Central-difference check of d(build())/d(leaf) for every leaf. build()
/// must construct a fresh scalar graph from the current leaf values each
/// call; leaf values are perturbed in place and restored.
inline void check_gradients(const std::function<occo::Var()>& build,
                            const std::vector<occo::Var>& leaves,
                            const GradCheckOpts& opts = {}) {
    occo::Var root = build();
    occo::backward(root);
    std::vector<occo::Tensor> analytic;
    for (const auto& l : leaves) {
        ASSERT_TRUE(l->requires_grad);
        analytic.push_back(l->grad.defined() ? l->grad.clone()
                                             : occo::Tensor::zeros(l->value.shape()));
        l->grad = occo::Tensor();
    }

    auto rng = occo::make_rng(opts.sample_seed);
    for (size_t k = 0; k < leaves.size(); ++k) {
        occo::Tensor& v = leaves[k]->value;
        std::vector<int64_t> elems;
        if (opts.max_elems_per_leaf > 0 && v.numel() > opts.max_elems_per_leaf) {
            std::uniform_int_distribution<int64_t> dist(0, v.numel() - 1);
            for (int64_t i = 0; i < opts.max_elems_per_leaf; ++i) elems.push_back(dist(rng));
        } else {
            for (int64_t i = 0; i < v.numel(); ++i) elems.push_back(i);
        }
        for (int64_t i : elems) {
            double orig = v[i];
            double an = analytic[k][i];
            // Retry with smaller steps before failing: a piecewise-linear kink
            // crossing zero inside the +-h window biases the central difference,
            // and the bias disappears once h shrinks past the crossing. A wrong
            // analytic gradient stays wrong at every h.
            double fd = 0.0;
            bool ok = false;
            for (double h = opts.h; h >= opts.h / 100.0 - 1e-300 && !ok; h /= 10.0) {
                v[i] = orig + h;
                double fp = build()->value.item();
                v[i] = orig - h;
                double fm = build()->value.item();
                v[i] = orig;
                fd = (fp - fm) / (2.0 * h);
                ok = grad_close(an, fd, opts.rtol, opts.atol);
            }
            EXPECT_TRUE(ok) << "leaf " << k << " elem " << i << ": analytic " << an << " vs fd "
                            << fd;
        }
    }
}

inline occo::Tensor random_tensor(occo::Shape shape, uint64_t seed, double lo = -1.0,
                                  double hi = 1.0) {
    auto rng = occo::make_rng(seed);
    return occo::Tensor::uniform(std::move(shape), lo, hi, rng);
}

} // namespace occo_test
