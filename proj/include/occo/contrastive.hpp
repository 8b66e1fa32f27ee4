#pragma once

#include <string>
#include <vector>

#include "occo/contextual.hpp"
#include "occo/mask.hpp"

namespace occo {

/// Samples for one semantic filter. Anchors and positives come from the
/// first group only; negatives cover every group. Each sample is a stack of
/// group_size masked images, and stack distances average the per-item
/// distances. A filter whose group-1 masks are all empty is inactive and its
/// loss term contributes zero.
struct FilterSamples {
    std::vector<Var> anchors;                // n items
    std::vector<Var> positives;              // n items
    std::vector<std::vector<Var>> negatives; // b groups of n items
    bool active = true;
};

struct ContrastiveSampleSet {
    FilterSamples unique_vi;   // positive: visible, negatives: infrared
    FilterSamples unique_ir;   // positive: infrared, negatives: visible
    FilterSamples shared_vi;   // shared filter, visible-positive orientation
    FilterSamples shared_ir;   // shared filter, infrared-positive orientation
    FilterSamples background;  // positive: visible, negatives: infrared
    int64_t groups = 0;
};

namespace detail_con {

inline Var masked_item(const Var& batch, int64_t idx, const BinaryMask& m) {
    int64_t H = batch->value.size(2), W = batch->value.size(3);
    OCCO_CHECK(m.height() == H && m.width() == W, "mask size ", m.height(), "x", m.width(),
               " does not match image ", H, "x", W);
    Var img = ops::slice(batch, 0, idx, 1);
    return ops::mul(img, constant(m.m.reshaped({1, 1, H, W})));
}

}  // namespace detail_con

/// Builds anchor/positive/negative stacks for all semantic filters from a
/// fused batch, its sources, and per-item mask partitions. The batch is
/// split into groups of n items; group 1 supplies anchors and positives.
inline ContrastiveSampleSet build_sample_set(const Var& fused, const Var& vi, const Var& ir,
                                             const std::vector<MaskPartition>& partitions,
                                             int64_t n) {
    OCCO_CHECK(fused->value.ndim() == 4 && fused->value.size(1) == 1,
               "fused batch must be (B,1,H,W)");
    OCCO_CHECK(fused->value.same_shape(vi->value) && fused->value.same_shape(ir->value),
               "fused and source batches must share shape");
    int64_t B = fused->value.size(0);
    OCCO_CHECK(n >= 1 && B % n == 0, "batch size ", B, " not divisible by group size ", n);
    OCCO_CHECK(static_cast<int64_t>(partitions.size()) == B, "need one mask partition per item");
    int64_t b = B / n;

    ContrastiveSampleSet set;
    set.groups = b;

    enum Filter { kUniqueVi, kUniqueIr, kShared, kBackground };
    auto mask_of = [&](Filter f, int64_t i) -> const BinaryMask& {
        switch (f) {
            case kUniqueVi: return partitions[i].unique_vi;
            case kUniqueIr: return partitions[i].unique_ir;
            case kShared: return partitions[i].shared;
            default: return partitions[i].background;
        }
    };

    auto build = [&](Filter f, const Var& pos_src, const Var& neg_src) {
        FilterSamples out;
        int64_t on_pixels = 0;
        for (int64_t t = 0; t < n; ++t) {
            const BinaryMask& m = mask_of(f, t);
            on_pixels += m.count();
            out.anchors.push_back(detail_con::masked_item(fused, t, m));
            out.positives.push_back(detail_con::masked_item(pos_src, t, m));
        }
        out.negatives.resize(b);
        for (int64_t j = 0; j < b; ++j)
            for (int64_t t = 0; t < n; ++t) {
                int64_t idx = j * n + t;
                out.negatives[j].push_back(detail_con::masked_item(neg_src, idx, mask_of(f, idx)));
            }
        out.active = on_pixels > 0;
        return out;
    };

    set.unique_vi = build(kUniqueVi, vi, ir);
    set.unique_ir = build(kUniqueIr, ir, vi);
    set.shared_vi = build(kShared, vi, ir);
    set.shared_ir = build(kShared, ir, vi);
    set.background = build(kBackground, vi, ir);
    return set;
}

struct ContrastiveLossReport {
    Var total;      // L_con
    Var unique;     // ratio terms over both unique filters
    Var share;      // omega-weighted shared-filter terms
    Var bg;         // background ratio
};

namespace detail_con {

struct FilterPyramids {
    std::vector<FeaturePyramid> anchors, positives;
    std::vector<std::vector<FeaturePyramid>> negatives;
};

/// Runs every sample of one filter through the backbone once; the distance
/// ratios below then reuse the pyramids.
inline FilterPyramids extract_filter(const FilterSamples& s, const Backbone& bb) {
    FilterPyramids p;
    for (const Var& a : s.anchors) p.anchors.push_back(bb.extract(a));
    for (const Var& v : s.positives) p.positives.push_back(bb.extract(v));
    p.negatives.resize(s.negatives.size());
    for (size_t j = 0; j < s.negatives.size(); ++j)
        for (const Var& v : s.negatives[j]) p.negatives[j].push_back(bb.extract(v));
    return p;
}

/// Mean distance between two stacks of equal length.
template <typename DistFn>
Var stack_distance(const std::vector<FeaturePyramid>& a, const std::vector<FeaturePyramid>& b,
                   DistFn&& dist) {
    Var sum = dist(a[0], b[0]);
    for (size_t t = 1; t < a.size(); ++t) sum = ops::add(sum, dist(a[t], b[t]));
    return ops::mul_scalar(sum, 1.0 / static_cast<double>(a.size()));
}

/// Positive-over-negatives ratio with an epsilon-guarded denominator.
template <typename DistFn>
Var ratio_term(const FilterSamples& s, const Backbone& bb, double eps, DistFn&& dist) {
    FilterPyramids p = extract_filter(s, bb);
    Var num = stack_distance(p.anchors, p.positives, dist);
    Var den = stack_distance(p.anchors, p.negatives[0], dist);
    for (size_t j = 1; j < p.negatives.size(); ++j)
        den = ops::add(den, stack_distance(p.anchors, p.negatives[j], dist));
    return ops::div(num, ops::add_scalar(den, eps));
}

}  // namespace detail_con

/// Three-part contrastive objective over the sample set. Terms accumulate in
/// a fixed order (unique_vi, unique_ir, shared, background) so results are
/// bit-reproducible.
inline ContrastiveLossReport contrastive_loss(const ContrastiveSampleSet& set,
                                              const ContrastiveConfig& cfg, const Backbone& bb) {
    cfg.validate();
    OCCO_CHECK(set.groups >= 1 && !set.unique_vi.anchors.empty(), "empty sample set");

    auto semantic = [&](const FeaturePyramid& x, const FeaturePyramid& y) {
        return feature_distance(x, y, cfg);
    };
    auto shallow = [&](const FeaturePyramid& x, const FeaturePyramid& y) {
        return background_distance(x, y);
    };
    Var zero = constant(Tensor::scalar(0.0));

    Var unique = zero;
    if (set.unique_vi.active)
        unique = ops::add(unique,
                          detail_con::ratio_term(set.unique_vi, bb, cfg.epsilon, semantic));
    if (set.unique_ir.active)
        unique = ops::add(unique,
                          detail_con::ratio_term(set.unique_ir, bb, cfg.epsilon, semantic));

    Var share = zero;
    if (set.shared_vi.active) {
        Var fwd = detail_con::ratio_term(set.shared_vi, bb, cfg.epsilon, semantic);
        Var rev = detail_con::ratio_term(set.shared_ir, bb, cfg.epsilon, semantic);
        share = ops::add(ops::mul_scalar(fwd, cfg.omega1), ops::mul_scalar(rev, cfg.omega2));
    }

    Var bg = zero;
    if (set.background.active)
        bg = detail_con::ratio_term(set.background, bb, cfg.epsilon, shallow);

    ContrastiveLossReport report;
    report.unique = unique;
    report.share = share;
    report.bg = bg;
    report.total = ops::add(ops::add(unique, share), bg);
    return report;
}

}  // namespace occo
