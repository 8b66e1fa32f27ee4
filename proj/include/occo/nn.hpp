#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "occo/conv.hpp"
#include "occo/rng.hpp"

namespace occo {
namespace nn {

/// Flat registry of named parameters and persistent buffers. Modules
/// register into it on construction; the optimizer and checkpoint writer
/// walk it in registration order.
class ParamRegistry {
public:
    Var parameter(const std::string& name, Tensor init) {
        check_fresh(name);
        Var v = leaf(std::move(init));
        params_.emplace_back(name, v);
        return v;
    }

    /// Buffers share storage with the registered copy, so in-place updates
    /// (running stats) are visible to checkpointing.
    Tensor buffer(const std::string& name, Tensor init) {
        check_fresh(name);
        buffers_.emplace_back(name, init);
        return init;
    }

    const std::vector<std::pair<std::string, Var>>& params() const { return params_; }
    const std::vector<std::pair<std::string, Tensor>>& buffers() const { return buffers_; }

    std::vector<Var> param_vars() const {
        std::vector<Var> out;
        out.reserve(params_.size());
        for (const auto& [name, v] : params_) out.push_back(v);
        return out;
    }

    int64_t param_count() const {
        int64_t n = 0;
        for (const auto& [name, v] : params_) n += v->value.numel();
        return n;
    }

    void zero_grad() {
        for (auto& [name, v] : params_) v->grad = Tensor();
    }

private:
    void check_fresh(const std::string& name) {
        for (const auto& [n, v] : params_) OCCO_CHECK_CFG(n != name, "duplicate parameter ", name);
        for (const auto& [n, t] : buffers_) OCCO_CHECK_CFG(n != name, "duplicate buffer ", name);
    }

    std::vector<std::pair<std::string, Var>> params_;
    std::vector<std::pair<std::string, Tensor>> buffers_;
};

/// Fan-in scaled uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
inline Tensor fan_in_uniform(Shape shape, int64_t fan_in, std::mt19937_64& rng) {
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    return Tensor::uniform(std::move(shape), -bound, bound, rng);
}

struct Conv2d {
    Var w, b;
    int64_t stride = 1, pad = 0;

    Conv2d() = default;
    Conv2d(ParamRegistry& reg, const std::string& name, int64_t cin, int64_t cout, int64_t k,
           int64_t stride_, int64_t pad_, std::mt19937_64& rng, bool bias = true)
        : stride(stride_), pad(pad_) {
        int64_t fan_in = cin * k * k;
        w = reg.parameter(name + ".w", fan_in_uniform({cout, cin, k, k}, fan_in, rng));
        if (bias) b = reg.parameter(name + ".b", Tensor::zeros({cout}));
    }

    Var operator()(const Var& x) const { return ops::conv2d(x, w, b, stride, pad); }
};

struct Linear {
    Var w, b;

    Linear() = default;
    Linear(ParamRegistry& reg, const std::string& name, int64_t in, int64_t out,
           std::mt19937_64& rng, bool bias = true) {
        w = reg.parameter(name + ".w", fan_in_uniform({out, in}, in, rng));
        if (bias) b = reg.parameter(name + ".b", Tensor::zeros({out}));
    }

    Var operator()(const Var& x) const { return ops::linear(x, w, b); }
};

struct DepthwiseConv2d {
    Var w, b;
    int64_t stride = 1, pad = 0;

    DepthwiseConv2d() = default;
    DepthwiseConv2d(ParamRegistry& reg, const std::string& name, int64_t channels, int64_t k,
                    std::mt19937_64& rng, int64_t stride_ = 1, int64_t pad_ = 0, bool bias = true)
        : stride(stride_), pad(pad_) {
        int64_t fan_in = k * k;
        w = reg.parameter(name + ".w", fan_in_uniform({channels, 1, k, k}, fan_in, rng));
        if (bias) b = reg.parameter(name + ".b", Tensor::zeros({channels}));
    }

    Var operator()(const Var& x) const { return ops::depthwise_conv2d(x, w, b, stride, pad); }
};

namespace detail {

/// Normalization with per-channel stats; stats_grad selects whether the
/// statistics are functions of x (training) or constants (eval).
inline Var batch_norm_apply(const Var& x, const Var& gamma, const Var& beta, const Tensor& mean,
                            const Tensor& var, double eps, bool stats_grad) {
    int64_t B = x->value.size(0), C = x->value.size(1), HW = x->value.size(2) * x->value.size(3);
    int64_t N = B * HW;
    Tensor inv_std({C});
    for (int64_t c = 0; c < C; ++c) inv_std[c] = 1.0 / std::sqrt(var[c] + eps);

    Tensor xhat(x->value.shape());
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            const double* xp = x->value.ptr() + (b * C + c) * HW;
            double* hp = xhat.ptr() + (b * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) hp[i] = (xp[i] - mean[c]) * inv_std[c];
        }
    Tensor y(x->value.shape());
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            const double* hp = xhat.ptr() + (b * C + c) * HW;
            double* yp = y.ptr() + (b * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) yp[i] = gamma->value[c] * hp[i] + beta->value[c];
        }

    return make_op(std::move(y), {x, gamma, beta},
                   [xhat, inv_std, B, C, HW, N, stats_grad](Node& n) {
                       const Var& xv = n.inputs[0];
                       const Var& gv = n.inputs[1];
                       const Var& bv = n.inputs[2];
                       Tensor sum_g({C}), sum_gh({C});
                       for (int64_t b = 0; b < B; ++b)
                           for (int64_t c = 0; c < C; ++c) {
                               const double* gp = n.grad.ptr() + (b * C + c) * HW;
                               const double* hp = xhat.ptr() + (b * C + c) * HW;
                               for (int64_t i = 0; i < HW; ++i) {
                                   sum_g[c] += gp[i];
                                   sum_gh[c] += gp[i] * hp[i];
                               }
                           }
                       if (bv->requires_grad) accumulate(bv, sum_g);
                       if (gv->requires_grad) accumulate(gv, sum_gh);
                       if (xv->requires_grad) {
                           Tensor gx(xv->value.shape());
                           for (int64_t b = 0; b < B; ++b)
                               for (int64_t c = 0; c < C; ++c) {
                                   double a = gv->value[c] * inv_std[c];
                                   double mg = sum_g[c] / static_cast<double>(N);
                                   double mgh = sum_gh[c] / static_cast<double>(N);
                                   const double* gp = n.grad.ptr() + (b * C + c) * HW;
                                   const double* hp = xhat.ptr() + (b * C + c) * HW;
                                   double* xp = gx.ptr() + (b * C + c) * HW;
                                   for (int64_t i = 0; i < HW; ++i)
                                       xp[i] = stats_grad ? a * (gp[i] - mg - hp[i] * mgh)
                                                          : a * gp[i];
                               }
                           accumulate(xv, gx);
                       }
                   });
}

} // namespace detail

/// Batch normalization over (B,HW) per channel. Training mode normalizes
/// with batch statistics (biased variance) and maintains running stats with
/// the unbiased variance; eval mode uses the running stats.
struct BatchNorm2d {
    Var gamma, beta;
    Tensor running_mean, running_var;
    double eps = 1e-5;
    double momentum = 0.1;

    BatchNorm2d() = default;
    BatchNorm2d(ParamRegistry& reg, const std::string& name, int64_t C) {
        gamma = reg.parameter(name + ".gamma", Tensor::ones({C}));
        beta = reg.parameter(name + ".beta", Tensor::zeros({C}));
        running_mean = reg.buffer(name + ".running_mean", Tensor::zeros({C}));
        running_var = reg.buffer(name + ".running_var", Tensor::ones({C}));
    }

    Var operator()(const Var& x, bool training) {
        OCCO_CHECK(x->value.ndim() == 4 && x->value.size(1) == gamma->value.numel(),
                   "batch norm channel mismatch: ", shape_str(x->value.shape()), " vs C=",
                   gamma->value.numel());
        int64_t B = x->value.size(0), C = x->value.size(1),
                HW = x->value.size(2) * x->value.size(3);
        if (!training) return detail::batch_norm_apply(x, gamma, beta, running_mean, running_var,
                                                       eps, false);
        int64_t N = B * HW;
        OCCO_CHECK(N > 1, "batch norm needs more than one element per channel");
        Tensor mean({C}), var({C});
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c) {
                const double* xp = x->value.ptr() + (b * C + c) * HW;
                for (int64_t i = 0; i < HW; ++i) mean[c] += xp[i];
            }
        for (int64_t c = 0; c < C; ++c) mean[c] /= static_cast<double>(N);
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c) {
                const double* xp = x->value.ptr() + (b * C + c) * HW;
                for (int64_t i = 0; i < HW; ++i) {
                    double d = xp[i] - mean[c];
                    var[c] += d * d;
                }
            }
        for (int64_t c = 0; c < C; ++c) var[c] /= static_cast<double>(N);
        double unbias = static_cast<double>(N) / static_cast<double>(N - 1);
        for (int64_t c = 0; c < C; ++c) {
            running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * mean[c];
            running_var[c] = (1.0 - momentum) * running_var[c] + momentum * var[c] * unbias;
        }
        return detail::batch_norm_apply(x, gamma, beta, mean, var, eps, true);
    }
};

/// Adam with bias correction. Moment buffers are exposed for checkpointing.
class Adam {
public:
    Adam(std::vector<Var> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (const auto& p : params_) {
            m_.push_back(Tensor::zeros(p->value.shape()));
            v_.push_back(Tensor::zeros(p->value.shape()));
        }
    }

    void step() {
        ++t_;
        double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (size_t k = 0; k < params_.size(); ++k) {
            Var& p = params_[k];
            if (!p->grad.defined()) continue;
            for (int64_t i = 0; i < p->value.numel(); ++i) {
                double g = p->grad[i];
                m_[k][i] = beta1_ * m_[k][i] + (1.0 - beta1_) * g;
                v_[k][i] = beta2_ * v_[k][i] + (1.0 - beta2_) * g * g;
                double mhat = m_[k][i] / bc1;
                double vhat = v_[k][i] / bc2;
                p->value[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    void zero_grad() {
        for (auto& p : params_) p->grad = Tensor();
    }

    int64_t step_count() const { return t_; }
    void set_step_count(int64_t t) { t_ = t; }
    std::vector<Tensor>& m() { return m_; }
    std::vector<Tensor>& v() { return v_; }
    double lr() const { return lr_; }

private:
    std::vector<Var> params_;
    double lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

} // namespace nn
} // namespace occo
