#pragma once

#include <cmath>
#include <vector>

#include "occo/backbone.hpp"
#include "occo/ops.hpp"

namespace occo {

/// How sample distances are measured on backbone features.
enum class FeatureDistance { kContextual, kEuclidean };

struct ContrastiveConfig {
    double omega1 = 0.5;
    double omega2 = 0.5;
    double lambda_cs = 0.5;
    double epsilon = 1e-8;
    /// Backbone levels entering the semantic distance; background always
    /// uses level 1 regardless.
    std::vector<int> deep_layers = {4, 5};
    FeatureDistance distance = FeatureDistance::kContextual;
    /// Images per sample stack; batch = group_size * groups.
    int64_t group_size = 3;

    void validate() const {
        OCCO_CHECK_CFG(std::abs(omega1 + omega2 - 1.0) < 1e-9,
                       "share weights must sum to 1, got ", omega1, " + ", omega2);
        OCCO_CHECK_CFG(lambda_cs >= 0.0, "lambda_cs must be >= 0");
        OCCO_CHECK_CFG(epsilon > 0.0, "epsilon must be positive");
        OCCO_CHECK_CFG(!deep_layers.empty(), "deep_layers must not be empty");
        for (int l : deep_layers)
            OCCO_CHECK_CFG(l >= 1 && l <= 5, "deep layer index out of range: ", l);
        OCCO_CHECK_CFG(group_size >= 1, "group_size must be >= 1");
    }
};

/// Deconstructs a single-item feature map (1,C,H,W) into H*W feature points
/// of dimension C, row-major over spatial positions.
inline Var to_point_set(const Var& fm) {
    OCCO_CHECK(fm->value.ndim() == 4 && fm->value.size(0) == 1,
               "point sets are built per item from (1,C,H,W), got ",
               shape_str(fm->value.shape()));
    int64_t C = fm->value.size(1), HW = fm->value.size(2) * fm->value.size(3);
    return ops::transpose2d(ops::reshape(fm, {C, HW}));
}

/// Cosine-derived dissimilarity between two point sets, both centered on the
/// mean of psi: S_ij = 1 - cos(gamma_i - mu_psi, psi_j - mu_psi). Entries lie
/// in [0,2]; zero-norm centered points are guarded by eps.
inline Var similarity_matrix(const Var& gamma, const Var& psi, double eps = 1e-8) {
    OCCO_CHECK(gamma->value.ndim() == 2 && psi->value.ndim() == 2 &&
                   gamma->value.size(1) == psi->value.size(1),
               "point sets must be (N,C) and (M,C) with equal C");
    Var mu = ops::mean_rows(psi);
    Var g = ops::l2_normalize_rows(ops::sub_rowvec(gamma, mu), eps);
    Var p = ops::l2_normalize_rows(ops::sub_rowvec(psi, mu), eps);
    return ops::add_scalar(ops::mul_scalar(ops::matmul(g, ops::transpose2d(p)), -1.0), 1.0);
}

/// Per-point similarity: softmax of (1 - S) across each row, then the best
/// match. Returns an (N,1) column of values in (0,1].
inline Var point_similarities(const Var& S) {
    Var w = ops::softmax_rows(ops::add_scalar(ops::mul_scalar(S, -1.0), 1.0));
    return ops::rowmax(w);
}

/// Aggregated similarity of two feature maps in (0,1].
inline Var contextual_feature_similarity(const Var& phi1, const Var& phi2, double eps = 1e-8) {
    Var S = similarity_matrix(to_point_set(phi1), to_point_set(phi2), eps);
    return ops::mean_all(point_similarities(S));
}

/// Contextual similarity blended with the Euclidean gap:
/// CS = -log(s + lambda_cs * ||phi1 - phi2||_2 + eps), log arg clamped at eps.
inline Var contextual_cs(const Var& phi1, const Var& phi2, double lambda_cs, double eps = 1e-8) {
    Var s = contextual_feature_similarity(phi1, phi2, eps);
    Var e = ops::norm2(ops::sub(phi1, phi2));
    Var arg = ops::add_scalar(ops::add(s, ops::mul_scalar(e, lambda_cs)), eps);
    return ops::mul_scalar(ops::log(ops::clamp_min(arg, eps)), -1.0);
}

/// Per-layer distance terms between two feature pyramids, one per configured
/// layer, in layer order.
inline std::vector<Var> feature_distance_terms(const FeaturePyramid& a, const FeaturePyramid& b,
                                               const ContrastiveConfig& cfg) {
    std::vector<Var> terms;
    terms.reserve(cfg.deep_layers.size());
    for (int l : cfg.deep_layers) {
        if (cfg.distance == FeatureDistance::kContextual)
            terms.push_back(contextual_cs(a.level(l), b.level(l), cfg.lambda_cs, cfg.epsilon));
        else
            terms.push_back(ops::norm2(ops::sub(a.level(l), b.level(l))));
    }
    return terms;
}

inline Var feature_distance(const FeaturePyramid& a, const FeaturePyramid& b,
                            const ContrastiveConfig& cfg) {
    std::vector<Var> terms = feature_distance_terms(a, b, cfg);
    Var total = terms[0];
    for (size_t i = 1; i < terms.size(); ++i) total = ops::add(total, terms[i]);
    return total;
}

/// Background distance: plain Euclidean gap on the shallowest level.
inline Var background_distance(const FeaturePyramid& a, const FeaturePyramid& b) {
    return ops::norm2(ops::sub(a.level(1), b.level(1)));
}

/// Semantic distance between two equal-size single-item images.
inline Var distance_between(const Var& img_a, const Var& img_b, const Backbone& bb,
                            const ContrastiveConfig& cfg) {
    OCCO_CHECK(img_a->value.same_shape(img_b->value), "distance needs equal-size images");
    return feature_distance(bb.extract(img_a), bb.extract(img_b), cfg);
}

inline Var background_distance_between(const Var& img_a, const Var& img_b, const Backbone& bb) {
    OCCO_CHECK(img_a->value.same_shape(img_b->value), "distance needs equal-size images");
    return background_distance(bb.extract(img_a), bb.extract(img_b));
}

}  // namespace occo
