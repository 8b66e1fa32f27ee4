#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "occo/image.hpp"
#include "occo/manifest.hpp"
#include "occo/mask.hpp"
#include "occo/rng.hpp"

namespace occo {

/// Working planes for one record: luminance in [0,1] for both modalities,
/// with the visible chroma kept for re-attachment at inference.
struct LoadedPair {
    Tensor vi_y, ir_y;  // (H,W)
    Tensor cb, cr;      // (H,W), neutral 0.5 for grayscale visible input
};

inline LoadedPair load_pair(const DatasetManifest& m, const ManifestRecord& rec) {
    Image vi = read_png(m.resolve(rec.vi_path));
    Image ir = read_png(m.resolve(rec.ir_path), /*force_gray=*/true);
    OCCO_CHECK(vi.height() == ir.height() && vi.width() == ir.width(), "pair dimensions differ: ",
               rec.vi_path, " is ", vi.height(), "x", vi.width(), ", ", rec.ir_path, " is ",
               ir.height(), "x", ir.width());
    YcbcrImage v = to_ycbcr(vi);
    LoadedPair out;
    out.vi_y = std::move(v.y);
    out.cb = std::move(v.cb);
    out.cr = std::move(v.cr);
    out.ir_y = ir.pix.reshaped({ir.height(), ir.width()}).clone();
    return out;
}

struct PatchConfig {
    int64_t crop = 256;
    double min_salient_fraction = 0.01;
    int64_t max_retries = 16;

    void validate() const {
        OCCO_CHECK_CFG(crop >= 1, "crop size must be positive, got ", crop);
        OCCO_CHECK_CFG(min_salient_fraction >= 0.0 && min_salient_fraction <= 1.0,
                       "min_salient_fraction must lie in [0,1], got ", min_salient_fraction);
        OCCO_CHECK_CFG(max_retries >= 1, "max_retries must be at least 1, got ", max_retries);
    }
};

/// One training crop; the same window cuts both luminance planes and all
/// four partition masks.
struct TrainPatch {
    Tensor vi, ir;            // (crop, crop)
    MaskPartition partition;  // cropped identically
    int64_t y0 = 0, x0 = 0;   // window origin in the source image
};

/// Rejection-samples crop windows until the salient masks cover at least
/// min_salient_fraction of the window; after max_retries draws the best
/// window seen wins (possibly zero coverage).
inline TrainPatch sample_patch(const Tensor& vi_y, const Tensor& ir_y, const MaskPartition& part,
                               const PatchConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    OCCO_CHECK(vi_y.ndim() == 2 && vi_y.same_shape(ir_y), "sample_patch expects matching (H,W) planes");
    OCCO_CHECK(part.shared.m.same_shape(vi_y), "partition size ", shape_str(part.shared.m.shape()),
               " does not match image ", shape_str(vi_y.shape()));
    int64_t H = vi_y.size(0), W = vi_y.size(1);
    OCCO_CHECK(H >= cfg.crop && W >= cfg.crop, "image ", H, "x", W, " smaller than ", cfg.crop,
               "x", cfg.crop, " crop");

    std::uniform_int_distribution<int64_t> dy(0, H - cfg.crop), dx(0, W - cfg.crop);
    int64_t best_y = 0, best_x = 0;
    double best_cov = -1.0;
    for (int64_t t = 0; t < cfg.max_retries; ++t) {
        int64_t y0 = dy(rng), x0 = dx(rng);
        MaskPartition cand = part.cropped(y0, x0, cfg.crop, cfg.crop);
        double cov = cand.salient_fraction();
        if (cov >= cfg.min_salient_fraction) {
            return {crop_plane(vi_y, y0, x0, cfg.crop, cfg.crop),
                    crop_plane(ir_y, y0, x0, cfg.crop, cfg.crop), std::move(cand), y0, x0};
        }
        if (cov > best_cov) {
            best_cov = cov;
            best_y = y0;
            best_x = x0;
        }
    }
    return {crop_plane(vi_y, best_y, best_x, cfg.crop, cfg.crop),
            crop_plane(ir_y, best_y, best_x, cfg.crop, cfg.crop),
            part.cropped(best_y, best_x, cfg.crop, cfg.crop), best_y, best_x};
}

/// A shuffled epoch cut into fixed-size batches, each carrying b = batch/n
/// groups of n consecutive records. The ragged tail is dropped.
struct BatchPlan {
    std::vector<std::vector<int64_t>> batches;
    int64_t group_size = 1;  // n
    int64_t groups = 0;      // b per batch
    int64_t dropped = 0;     // tail records not used this epoch
};

/// Deterministic batch order over the given record indices. The same seed
/// yields the same sequence in every epoch.
inline BatchPlan make_batches(std::vector<int64_t> record_indices, int64_t batch_size, int64_t n,
                              uint64_t seed) {
    OCCO_CHECK_CFG(batch_size >= 1 && n >= 1, "batch size and group size must be positive");
    OCCO_CHECK_CFG(batch_size % n == 0, "batch size ", batch_size, " not divisible by group size ",
                   n);
    auto rng = make_rng(derive_seed(seed, "batch-order"));
    std::shuffle(record_indices.begin(), record_indices.end(), rng);

    BatchPlan plan;
    plan.group_size = n;
    plan.groups = batch_size / n;
    int64_t total = static_cast<int64_t>(record_indices.size());
    int64_t usable = (total / batch_size) * batch_size;
    plan.dropped = total - usable;
    for (int64_t s = 0; s < usable; s += batch_size)
        plan.batches.emplace_back(record_indices.begin() + s,
                                  record_indices.begin() + s + batch_size);
    return plan;
}

inline BatchPlan make_batches(const DatasetManifest& m, int64_t batch_size, int64_t n,
                              uint64_t seed, const std::string& split = "train") {
    return make_batches(m.indices_for_split(split), batch_size, n, seed);
}

}  // namespace occo
