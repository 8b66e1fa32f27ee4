#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>

#include "occo/image.hpp"
#include "occo/manifest.hpp"
#include "occo/rng.hpp"

namespace occo {

struct SyntheticSpec {
    int64_t count = 16;
    int64_t height = 64;
    int64_t width = 64;
    int64_t test_count = 4;  // trailing records marked "test"
    uint64_t seed = 0;

    void validate() const {
        OCCO_CHECK_CFG(count >= 1, "synthetic dataset needs at least one pair");
        OCCO_CHECK_CFG(height >= 16 && width >= 16, "synthetic pairs must be at least 16x16");
        OCCO_CHECK_CFG(test_count >= 0 && test_count < count, "test_count must leave at least ",
                       "one training record");
    }
};

namespace detail_syn {

constexpr double kTau = 6.283185307179586;

/// Low-frequency field in [base-amp, base+amp].
inline void fill_field(Tensor& plane, double base, double amp, double fx, double fy, double phase) {
    int64_t H = plane.size(0), W = plane.size(1);
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x)
            plane.at(y, x) = base + amp * std::sin(kTau * fx * x / W + phase) *
                                        std::cos(kTau * fy * y / H + phase * 0.7);
}

struct Blob {
    double cy, cx, ry, rx;
    bool in_vi, in_ir;
    double color[3];
    double heat;
};

inline double blob_weight(const Blob& b, int64_t y, int64_t x) {
    double dy = (y - b.cy) / b.ry, dx = (x - b.cx) / b.rx;
    double d2 = dy * dy + dx * dx;
    return d2 >= 1.0 ? 0.0 : 1.0 - d2;  // soft edge, 1 at centre
}

}  // namespace detail_syn

/// One registered pair: a colorful visible scene and an infrared view where
/// a subset of the objects run hot. Pure function of (spec, index).
inline std::pair<Image, Image> synthetic_pair(const SyntheticSpec& spec, int64_t index) {
    using namespace detail_syn;
    auto rng = make_rng(derive_seed(spec.seed, "synthetic-pair", static_cast<uint64_t>(index)));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    int64_t H = spec.height, W = spec.width;

    Tensor vi({3, H, W});
    for (int64_t c = 0; c < 3; ++c) {
        Tensor plane({H, W});
        fill_field(plane, 0.3 + 0.15 * unit(rng), 0.08 + 0.08 * unit(rng),
                   1.0 + std::floor(3.0 * unit(rng)), 1.0 + std::floor(3.0 * unit(rng)),
                   kTau * unit(rng));
        for (int64_t i = 0; i < H * W; ++i) vi[c * H * W + i] = plane[i];
    }
    Tensor ir({H, W});
    fill_field(ir, 0.12 + 0.08 * unit(rng), 0.05 + 0.04 * unit(rng),
               1.0 + std::floor(2.0 * unit(rng)), 1.0 + std::floor(2.0 * unit(rng)),
               kTau * unit(rng));

    int64_t blobs = 2 + static_cast<int64_t>(std::floor(3.0 * unit(rng)));
    for (int64_t s = 0; s < blobs; ++s) {
        Blob b;
        b.cy = H * (0.15 + 0.7 * unit(rng));
        b.cx = W * (0.15 + 0.7 * unit(rng));
        b.ry = H * (0.08 + 0.17 * unit(rng));
        b.rx = W * (0.08 + 0.17 * unit(rng));
        int kind = static_cast<int>(std::floor(3.0 * unit(rng)));  // 0 vi, 1 ir, 2 both
        b.in_vi = kind != 1;
        b.in_ir = kind != 0;
        for (double& c : b.color) c = 0.35 + 0.6 * unit(rng);
        b.heat = 0.7 + 0.25 * unit(rng);
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x) {
                double w = blob_weight(b, y, x);
                if (w <= 0.0) continue;
                if (b.in_vi)
                    for (int64_t c = 0; c < 3; ++c) {
                        double& px = vi[(c * H + y) * W + x];
                        px = px * (1.0 - w) + b.color[c] * w;
                    }
                if (b.in_ir) {
                    double& px = ir[y * W + x];
                    px = std::max(px, b.heat * w);
                }
            }
    }

    std::uniform_real_distribution<double> noise(-0.015, 0.015);
    for (int64_t i = 0; i < vi.numel(); ++i) vi[i] = std::clamp(vi[i] + noise(rng), 0.0, 1.0);
    for (int64_t i = 0; i < ir.numel(); ++i) ir[i] = std::clamp(ir[i] + noise(rng), 0.0, 1.0);

    return {Image(std::move(vi)), Image(ir.reshaped({1, H, W}).clone())};
}

/// Writes `count` registered pairs plus manifest.jsonl into dir; the
/// trailing test_count records carry split "test". Paths in the manifest are
/// relative to dir.
inline DatasetManifest generate_synthetic_dataset(const std::string& dir,
                                                  const SyntheticSpec& spec) {
    spec.validate();
    std::filesystem::create_directories(dir);
    DatasetManifest m;
    m.dir = dir;
    for (int64_t i = 0; i < spec.count; ++i) {
        auto [vi, ir] = synthetic_pair(spec, i);
        char stem[32];
        std::snprintf(stem, sizeof(stem), "pair_%04lld", static_cast<long long>(i));
        ManifestRecord rec;
        rec.vi_path = std::string(stem) + ".vi.png";
        rec.ir_path = std::string(stem) + ".ir.png";
        rec.split = i < spec.count - spec.test_count ? "train" : "test";
        write_png(m.resolve(rec.vi_path), vi);
        write_png(m.resolve(rec.ir_path), ir);
        m.records.push_back(std::move(rec));
    }
    m.save((std::filesystem::path(dir) / "manifest.jsonl").string());
    return m;
}

}  // namespace occo
