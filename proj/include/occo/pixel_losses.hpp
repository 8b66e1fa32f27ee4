#pragma once

#include <vector>

#include "occo/contrastive.hpp"
#include "occo/conv.hpp"
#include "occo/mask.hpp"

namespace occo {

/// Weights balancing the intensity, texture and contrastive terms against
/// the structural term, chosen so all pieces land at a similar magnitude.
struct LossWeights {
    double lambda_int = 10.0;
    double lambda_tex = 1.0;
    double lambda_con = 10.0;

    void validate() const {
        OCCO_CHECK_CFG(lambda_int >= 0.0 && lambda_tex >= 0.0 && lambda_con >= 0.0,
                       "loss weights must be nonnegative, got ", lambda_int, ", ", lambda_tex,
                       ", ", lambda_con);
    }
};

namespace detail_loss {

constexpr int64_t kSsimWindow = 11;
constexpr double kSsimSigma = 1.5;
constexpr double kSsimC1 = 1e-4;  // (0.01)^2 on a unit dynamic range
constexpr double kSsimC2 = 9e-4;  // (0.03)^2

/// k x k Gaussian window normalised to sum 1.
inline Tensor gaussian_window(int64_t k, double sigma) {
    Tensor w({k, k});
    double c = static_cast<double>(k - 1) / 2.0;
    double sum = 0.0;
    for (int64_t i = 0; i < k; ++i)
        for (int64_t j = 0; j < k; ++j) {
            double d2 = (i - c) * (i - c) + (j - c) * (j - c);
            w.at(i, j) = std::exp(-d2 / (2.0 * sigma * sigma));
            sum += w.at(i, j);
        }
    for (int64_t i = 0; i < w.numel(); ++i) w[i] /= sum;
    return w;
}

inline void check_image_triple(const Var& f, const Var& vi, const Var& ir) {
    OCCO_CHECK(f->value.ndim() == 4, "loss inputs must be (B,C,H,W), got ",
               shape_str(f->value.shape()));
    OCCO_CHECK(f->value.same_shape(vi->value) && f->value.same_shape(ir->value),
               "loss inputs must share one shape: ", shape_str(f->value.shape()), " vs ",
               shape_str(vi->value.shape()), " vs ", shape_str(ir->value.shape()));
}

}  // namespace detail_loss

/// Mean structural similarity between two image batches over every valid
/// 11x11 Gaussian-weighted window. Values land in [-1, 1].
inline Var ssim_mean(const Var& a, const Var& b) {
    OCCO_CHECK(a->value.ndim() == 4 && a->value.same_shape(b->value),
               "ssim_mean expects two (B,C,H,W) batches of one shape");
    int64_t H = a->value.size(2), W = a->value.size(3);
    OCCO_CHECK(H >= detail_loss::kSsimWindow && W >= detail_loss::kSsimWindow,
               "image ", H, "x", W, " is smaller than the ", detail_loss::kSsimWindow,
               "x", detail_loss::kSsimWindow, " structural window");
    using namespace ops;
    Tensor win = detail_loss::gaussian_window(detail_loss::kSsimWindow, detail_loss::kSsimSigma);

    Var mu_a = filter2d_valid(a, win);
    Var mu_b = filter2d_valid(b, win);
    Var var_a = sub(filter2d_valid(square(a), win), square(mu_a));
    Var var_b = sub(filter2d_valid(square(b), win), square(mu_b));
    Var cov = sub(filter2d_valid(mul(a, b), win), mul(mu_a, mu_b));

    Var num = mul(add_scalar(mul_scalar(mul(mu_a, mu_b), 2.0), detail_loss::kSsimC1),
                  add_scalar(mul_scalar(cov, 2.0), detail_loss::kSsimC2));
    Var den = mul(add_scalar(add(square(mu_a), square(mu_b)), detail_loss::kSsimC1),
                  add_scalar(add(var_a, var_b), detail_loss::kSsimC2));
    return mean_all(div(num, den));
}

/// Structural dissimilarity of the fused image against both sources:
/// 2 - SSIM(f, vi) - SSIM(f, ir). Nonnegative, at most 4.
inline Var ssim_loss(const Var& f, const Var& vi, const Var& ir) {
    detail_loss::check_image_triple(f, vi, ir);
    Var s = ops::add(ssim_mean(f, vi), ssim_mean(f, ir));
    return ops::add_scalar(ops::mul_scalar(s, -1.0), 2.0);
}

/// Indicator of pixels where the infrared source is strictly brighter than
/// the visible one; ties give 0.
inline Tensor saliency_mask(const Tensor& vi, const Tensor& ir) {
    OCCO_CHECK(vi.same_shape(ir), "saliency_mask expects equal shapes, got ",
               shape_str(vi.shape()), " vs ", shape_str(ir.shape()));
    Tensor m = Tensor::zeros(vi.shape());
    for (int64_t i = 0; i < m.numel(); ++i) m[i] = ir[i] > vi[i] ? 1.0 : 0.0;
    return m;
}

/// Per-pixel mean of (f - vi)^2 + M * |f - ir|: a squared pull toward the
/// visible image everywhere plus an L1 pull toward the infrared image where
/// it is the brighter source.
inline Var intensity_loss(const Var& f, const Var& vi, const Var& ir, const Tensor& M) {
    detail_loss::check_image_triple(f, vi, ir);
    OCCO_CHECK(M.same_shape(f->value), "saliency mask shape ", shape_str(M.shape()),
               " does not match images ", shape_str(f->value.shape()));
    using namespace ops;
    Var sq = square(sub(f, vi));
    Var gated = mul(ops::abs(sub(f, ir)), constant(M));
    return mean_all(add(sq, gated));
}

/// |Gx*x| + |Gy*x| with 3x3 Sobel kernels on replicate-padded input; output
/// keeps the input size.
inline Var sobel_magnitude(const Var& x) {
    OCCO_CHECK(x->value.ndim() == 4, "sobel_magnitude expects (B,C,H,W)");
    OCCO_CHECK(x->value.size(2) >= 3 && x->value.size(3) >= 3, "image ", x->value.size(2), "x",
               x->value.size(3), " too small for 3x3 gradient kernels");
    static const Tensor gx = Tensor::from({-1, 0, 1, -2, 0, 2, -1, 0, 1}, {3, 3});
    static const Tensor gy = Tensor::from({-1, -2, -1, 0, 0, 0, 1, 2, 1}, {3, 3});
    Var p = ops::replicate_pad(x, 1);
    return ops::add(ops::abs(ops::filter2d_valid(p, gx)), ops::abs(ops::filter2d_valid(p, gy)));
}

/// Per-pixel L1 gap between the fused gradient magnitude and the pointwise
/// maximum of the source gradient magnitudes.
inline Var texture_loss(const Var& f, const Var& vi, const Var& ir) {
    detail_loss::check_image_triple(f, vi, ir);
    using namespace ops;
    Var target = maximum(sobel_magnitude(vi), sobel_magnitude(ir));
    return mean_all(ops::abs(sub(sobel_magnitude(f), target)));
}

/// Structural + weighted intensity + weighted texture terms. The saliency
/// mask is derived from the current sources.
inline Var pixel_loss(const Var& f, const Var& vi, const Var& ir, const LossWeights& w) {
    w.validate();
    Tensor M = saliency_mask(vi->value, ir->value);
    Var l = ssim_loss(f, vi, ir);
    l = ops::add(l, ops::mul_scalar(intensity_loss(f, vi, ir, M), w.lambda_int));
    return ops::add(l, ops::mul_scalar(texture_loss(f, vi, ir), w.lambda_tex));
}

/// Every component of one training objective evaluation. `total` is the
/// scalar actually minimised; the rest feed the step log.
struct LossReport {
    Var total;       // pixel + lambda_con * con
    Var pixel;       // ssim + lambda_int * intensity + lambda_tex * texture
    Var ssim;
    Var intensity;
    Var texture;
    Var con;         // contrastive total
    Var con_unique;
    Var con_share;
    Var con_bg;
};

/// Full objective: pixel terms plus the weighted contrastive term evaluated
/// on a prepared sample set. Components accumulate in a fixed order so the
/// result is bit-reproducible.
inline LossReport total_loss(const Var& f, const Var& vi, const Var& ir,
                             const ContrastiveSampleSet& samples, const ContrastiveConfig& ccfg,
                             const Backbone& bb, const LossWeights& w) {
    w.validate();
    detail_loss::check_image_triple(f, vi, ir);
    LossReport r;
    Tensor M = saliency_mask(vi->value, ir->value);
    r.ssim = ssim_loss(f, vi, ir);
    r.intensity = intensity_loss(f, vi, ir, M);
    r.texture = texture_loss(f, vi, ir);
    r.pixel = ops::add(ops::add(r.ssim, ops::mul_scalar(r.intensity, w.lambda_int)),
                       ops::mul_scalar(r.texture, w.lambda_tex));
    ContrastiveLossReport c = contrastive_loss(samples, ccfg, bb);
    r.con = c.total;
    r.con_unique = c.unique;
    r.con_share = c.share;
    r.con_bg = c.bg;
    r.total = ops::add(r.pixel, ops::mul_scalar(r.con, w.lambda_con));
    return r;
}

/// Options for the mask-gated replacement objective used by the fourth loss
/// ablation. The unique-infrared filter pulls toward the infrared source by
/// default; literal_vi_positive switches that term back to a visible-source
/// target.
struct AblationMaskLossOptions {
    double omega1 = 0.5;
    double omega2 = 0.5;
    bool literal_vi_positive = false;

    void validate() const {
        OCCO_CHECK_CFG(omega1 >= 0.0 && omega2 >= 0.0, "ablation mask loss weights must be ",
                       "nonnegative, got ", omega1, ", ", omega2);
    }
};

/// Masked Euclidean pulls replacing the contrastive and intensity terms:
/// omega1 * ||(f - vi) on the unique-visible filter|| plus omega2 * ||(f -
/// target) on the unique-infrared filter|| plus ||(f - vi) on the background
/// filter||, averaged over the batch. Empty filters contribute zero.
inline Var ablation_mask_loss(const Var& f, const Var& vi, const Var& ir,
                              const std::vector<MaskPartition>& partitions,
                              const AblationMaskLossOptions& opt = {}) {
    opt.validate();
    detail_loss::check_image_triple(f, vi, ir);
    OCCO_CHECK(f->value.size(1) == 1, "ablation mask loss expects single-channel batches");
    int64_t B = f->value.size(0), H = f->value.size(2), W = f->value.size(3);
    OCCO_CHECK(static_cast<int64_t>(partitions.size()) == B, "need one mask partition per item, ",
               partitions.size(), " for batch of ", B);
    using namespace ops;

    auto masked_gap = [&](const Var& src, int64_t i, const BinaryMask& m) {
        OCCO_CHECK(m.height() == H && m.width() == W, "mask size ", m.height(), "x", m.width(),
                   " does not match image ", H, "x", W);
        Var diff = sub(slice(f, 0, i, 1), slice(src, 0, i, 1));
        return norm2(mul(diff, constant(m.m.reshaped({1, 1, H, W}))));
    };

    Var sum = constant(Tensor::scalar(0.0));
    for (int64_t i = 0; i < B; ++i) {
        const MaskPartition& p = partitions[i];
        Var item = mul_scalar(masked_gap(vi, i, p.unique_vi), opt.omega1);
        const Var& ir_target = opt.literal_vi_positive ? vi : ir;
        item = add(item, mul_scalar(masked_gap(ir_target, i, p.unique_ir), opt.omega2));
        item = add(item, masked_gap(vi, i, p.background));
        sum = add(sum, item);
    }
    return mul_scalar(sum, 1.0 / static_cast<double>(B));
}

}  // namespace occo
