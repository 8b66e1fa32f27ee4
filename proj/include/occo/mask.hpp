#pragma once

#include <cstdint>
#include <string>

#include "occo/image.hpp"

namespace occo {

/// Per-pixel membership map, shape (H,W), every value exactly 0 or 1.
struct BinaryMask {
    Tensor m;

    BinaryMask() = default;
    explicit BinaryMask(Tensor t) : m(std::move(t)) {
        OCCO_CHECK(m.ndim() == 2, "mask must be (H,W), got ", shape_str(m.shape()));
        for (int64_t i = 0; i < m.numel(); ++i)
            OCCO_CHECK(m[i] == 0.0 || m[i] == 1.0, "mask value ", m[i], " is not 0/1");
    }

    static BinaryMask zeros(int64_t h, int64_t w) { return BinaryMask(Tensor({h, w})); }
    static BinaryMask ones(int64_t h, int64_t w) { return BinaryMask(Tensor::ones({h, w})); }

    int64_t height() const { return m.size(0); }
    int64_t width() const { return m.size(1); }
    int64_t count() const { return static_cast<int64_t>(m.sum() + 0.5); }
    bool empty() const { return count() == 0; }

    BinaryMask cropped(int64_t y0, int64_t x0, int64_t h, int64_t w) const {
        BinaryMask out;
        out.m = crop_plane(m, y0, x0, h, w);
        return out;
    }
};

/// The four disjoint semantic masks; pixelwise they sum to exactly 1.
struct MaskPartition {
    BinaryMask shared, unique_vi, unique_ir, background;

    MaskPartition cropped(int64_t y0, int64_t x0, int64_t h, int64_t w) const {
        return {shared.cropped(y0, x0, h, w), unique_vi.cropped(y0, x0, h, w),
                unique_ir.cropped(y0, x0, h, w), background.cropped(y0, x0, h, w)};
    }

    /// Fraction of pixels covered by any salient mask (everything but background).
    double salient_fraction() const {
        int64_t n = shared.m.numel();
        return n == 0 ? 0.0
                      : static_cast<double>(shared.count() + unique_vi.count() +
                                            unique_ir.count()) /
                            static_cast<double>(n);
    }
};

/// shared = vi*ir, uniques are the leftovers, background the complement.
inline MaskPartition decompose_masks(const BinaryMask& m_vi, const BinaryMask& m_ir) {
    OCCO_CHECK(m_vi.m.same_shape(m_ir.m), "mask dimensions differ: ", shape_str(m_vi.m.shape()),
               " vs ", shape_str(m_ir.m.shape()));
    int64_t n = m_vi.m.numel();
    MaskPartition p;
    p.shared.m = Tensor(m_vi.m.shape());
    p.unique_vi.m = Tensor(m_vi.m.shape());
    p.unique_ir.m = Tensor(m_vi.m.shape());
    p.background.m = Tensor(m_vi.m.shape());
    for (int64_t i = 0; i < n; ++i) {
        double s = m_vi.m[i] * m_ir.m[i];
        p.shared.m[i] = s;
        p.unique_vi.m[i] = m_vi.m[i] - s;
        p.unique_ir.m[i] = m_ir.m[i] - s;
        p.background.m[i] = 1.0 - s - p.unique_vi.m[i] - p.unique_ir.m[i];
    }
    return p;
}

/// Pixelwise product; pixels outside the mask become exactly 0.
inline Tensor apply_mask(const Tensor& plane, const BinaryMask& mask) {
    OCCO_CHECK(plane.ndim() == 2 && plane.same_shape(mask.m), "apply_mask dimension mismatch: ",
               shape_str(plane.shape()), " vs ", shape_str(mask.m.shape()));
    Tensor out = plane.clone();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= mask.m[i];
    return out;
}

/// Mask file contract: single-channel 8-bit PNG, 0 = off, 255 = on.
inline void write_mask_png(const std::string& path, const BinaryMask& mask) {
    Tensor t({1, mask.height(), mask.width()});
    for (int64_t i = 0; i < mask.m.numel(); ++i) t[i] = mask.m[i];
    write_png(path, Image(std::move(t)));
}

/// Loads a mask file and binarizes 8-bit values at threshold 128.
inline BinaryMask read_mask_png(const std::string& path) {
    Image img = read_png(path);
    OCCO_CHECK(img.channels() == 1, "mask file ", path, " must be single-channel");
    Tensor t({img.height(), img.width()});
    constexpr double kThreshold = 128.0 / 255.0;
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = img.pix[i] >= kThreshold ? 1.0 : 0.0;
    return BinaryMask(std::move(t));
}

inline std::string mask_filename(const std::string& stem, const std::string& modality) {
    return stem + "." + modality + ".mask.png";
}

} // namespace occo
