#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "occo/conv.hpp"
#include "occo/rng.hpp"
#include "occo/serialize.hpp"

namespace occo {

/// Five feature maps with spatial size halving (ceil) per level.
struct FeaturePyramid {
    std::vector<Var> levels;

    /// 1-based level access matching the usual layer numbering.
    const Var& level(int i) const {
        OCCO_CHECK(i >= 1 && i <= static_cast<int>(levels.size()), "pyramid level ", i,
                   " out of range");
        return levels[static_cast<size_t>(i - 1)];
    }
};

/// Frozen deep-feature extractor. Gradients flow to the input only; the
/// extractor's weights are graph constants and are never updated.
class Backbone {
public:
    static constexpr int64_t kMinSize = 8;

    virtual ~Backbone() = default;

    /// x is (B,1,H,W) or (B,3,H,W) in [0,1].
    FeaturePyramid extract(const Var& x) const {
        OCCO_CHECK(x->value.ndim() == 4 &&
                       (x->value.size(1) == 1 || x->value.size(1) == 3),
                   "backbone input must be (B,1|3,H,W), got ", shape_str(x->value.shape()));
        OCCO_CHECK(x->value.size(2) >= kMinSize && x->value.size(3) >= kMinSize,
                   "backbone input ", x->value.size(2), "x", x->value.size(3),
                   " below minimum ", kMinSize, "x", kMinSize);
        FeaturePyramid p = run(normalize(x));
        OCCO_CHECK(p.levels.size() == 5, "backbone produced ", p.levels.size(), " levels");
        int64_t h = x->value.size(2), w = x->value.size(3);
        for (const Var& lv : p.levels) {
            OCCO_CHECK(lv->value.size(2) == h && lv->value.size(3) == w,
                       "pyramid level size ", lv->value.size(2), "x", lv->value.size(3),
                       " does not follow the ceil-halving schedule (expected ", h, "x", w, ")");
            h = (h + 1) / 2;
            w = (w + 1) / 2;
        }
        return p;
    }

    virtual std::string kind() const = 0;

protected:
    virtual FeaturePyramid run(const Var& x3) const = 0;

    /// Replicates single-channel input to RGB and applies channel
    /// mean/std normalization.
    static Var normalize(const Var& x) {
        Var x3 = x->value.size(1) == 1 ? ops::concat({x, x, x}, 1) : x;
        static const double mean[3] = {0.485, 0.456, 0.406};
        static const double stdev[3] = {0.229, 0.224, 0.225};
        int64_t B = x3->value.size(0), H = x3->value.size(2), W = x3->value.size(3);
        Tensor shift({B, 3, H, W});
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < 3; ++c) {
                double* p = shift.ptr() + (b * 3 + c) * H * W;
                for (int64_t i = 0; i < H * W; ++i) p[i] = mean[c];
            }
        Tensor iscale({B, 3});
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < 3; ++c) iscale.at(b, c) = 1.0 / stdev[c];
        return ops::scale_channels(ops::sub(x3, constant(std::move(shift))),
                                   constant(std::move(iscale)));
    }
};

/// Fixed-seed five-stage strided conv stack with the same pyramid contract
/// as the pretrained extractor; lets the whole suite run offline.
class TestBackbone : public Backbone {
public:
    TestBackbone() {
        static const int64_t chans[5] = {8, 16, 24, 32, 32};
        auto rng = make_rng(derive_seed(0x0cc0, "test-backbone"));
        int64_t cin = 3;
        for (int s = 0; s < 5; ++s) {
            int64_t cout = chans[s];
            double bound = 1.0 / std::sqrt(static_cast<double>(cin * 9));
            w_.push_back(constant(Tensor::uniform({cout, cin, 3, 3}, -bound, bound, rng)));
            b_.push_back(constant(Tensor::uniform({cout}, -bound, bound, rng)));
            cin = cout;
        }
    }

    std::string kind() const override { return "test"; }

protected:
    FeaturePyramid run(const Var& x3) const override {
        FeaturePyramid p;
        Var x = x3;
        for (size_t s = 0; s < 5; ++s) {
            // stride-2 conv with pad 1 realizes the ceil-halving schedule
            x = ops::relu(ops::conv2d(x, w_[s], b_[s], s == 0 ? 1 : 2, 1));
            p.levels.push_back(x);
        }
        return p;
    }

private:
    std::vector<Var> w_, b_;
};

/// VGG-style extractor loaded from a weights container. Layer names follow
/// conv{stage}_{index}; the tap for level i is the activation of
/// conv{i}_1 and a 2x2 ceil-mode max pool sits between stages.
class FileBackbone : public Backbone {
public:
    explicit FileBackbone(const std::string& weights_path) {
        io::NamedTensors raw = io::load_weights_file(weights_path);
        std::map<std::string, Tensor> by_name(raw.begin(), raw.end());
        int64_t cin = 3;
        for (int stage = 1; stage <= 5; ++stage) {
            std::vector<Layer> layers;
            for (int idx = 1;; ++idx) {
                std::string base =
                    "conv" + std::to_string(stage) + "_" + std::to_string(idx);
                auto wit = by_name.find(base + ".w");
                if (wit == by_name.end()) break;
                auto bit = by_name.find(base + ".b");
                OCCO_CHECK(bit != by_name.end(), "missing bias for ", base);
                const Tensor& w = wit->second;
                OCCO_CHECK(w.ndim() == 4 && w.size(1) == cin && w.size(2) == w.size(3) &&
                               w.size(2) % 2 == 1,
                           "bad weight shape ", shape_str(w.shape()), " for ", base,
                           " (expected (*, ", cin, ", k, k) with odd k)");
                OCCO_CHECK(bit->second.numel() == w.size(0), "bias size mismatch for ", base);
                layers.push_back({constant(w), constant(bit->second)});
                cin = w.size(0);
            }
            OCCO_CHECK(!layers.empty(), "weights file defines no conv", stage, "_1 layer");
            stages_.push_back(std::move(layers));
        }
    }

    std::string kind() const override { return "file"; }

protected:
    FeaturePyramid run(const Var& x3) const override {
        FeaturePyramid p;
        Var x = x3;
        for (size_t s = 0; s < stages_.size(); ++s) {
            if (s > 0) x = ops::maxpool2d(x, 2, 2, /*ceil_mode=*/true);
            for (size_t j = 0; j < stages_[s].size(); ++j) {
                const Layer& l = stages_[s][j];
                int64_t pad = (l.w->value.size(2) - 1) / 2;
                x = ops::relu(ops::conv2d(x, l.w, l.b, 1, pad));
                if (j == 0) p.levels.push_back(x);
            }
        }
        return p;
    }

private:
    struct Layer {
        Var w, b;
    };
    std::vector<std::vector<Layer>> stages_;
};

/// Selects the file-backed extractor when the path exists, otherwise the
/// test backbone. The caller records the choice in the run manifest.
inline std::unique_ptr<Backbone> make_backbone(const std::string& weights_path) {
    if (!weights_path.empty() && std::filesystem::exists(weights_path))
        return std::make_unique<FileBackbone>(weights_path);
    return std::make_unique<TestBackbone>();
}

} // namespace occo
