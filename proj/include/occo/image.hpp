#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "occo/tensor.hpp"

namespace occo {

/// Planar raster, shape (C,H,W) with C in {1,3}, values in [0,1].
struct Image {
    Tensor pix;

    Image() = default;
    explicit Image(Tensor t) : pix(std::move(t)) {
        OCCO_CHECK(pix.ndim() == 3 && (pix.size(0) == 1 || pix.size(0) == 3),
                   "image must be (C,H,W) with 1 or 3 channels, got ", shape_str(pix.shape()));
    }

    int64_t channels() const { return pix.size(0); }
    int64_t height() const { return pix.size(1); }
    int64_t width() const { return pix.size(2); }
};

inline uint8_t to_byte(double v) {
    return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

/// Reads an 8-bit PNG (palette/16-bit/alpha variants are converted). When
/// force_gray is set, color inputs are reduced by the decoder.
inline Image read_png(const std::string& path, bool force_gray = false) {
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str()))
        throw DataError("cannot read png " + path + ": " + img.message);
    bool color = PNG_IMAGE_SAMPLE_CHANNELS(img.format) >= 3 && !force_gray;
    img.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<uint8_t> buf(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
        png_image_free(&img);
        throw DataError("malformed png " + path + ": " + img.message);
    }
    int64_t H = img.height, W = img.width, C = color ? 3 : 1;
    Tensor t({C, H, W});
    for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < W; ++j)
            for (int64_t c = 0; c < C; ++c)
                t.at(c, i, j) = buf[static_cast<size_t>((i * W + j) * C + c)] / 255.0;
    return Image(std::move(t));
}

inline void write_png(const std::string& path, const Image& image) {
    int64_t C = image.channels(), H = image.height(), W = image.width();
    png_image img;
    std::memset(&img, 0, sizeof(img));
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(W);
    img.height = static_cast<png_uint_32>(H);
    img.format = (C == 3) ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<uint8_t> buf(static_cast<size_t>(C * H * W));
    for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < W; ++j)
            for (int64_t c = 0; c < C; ++c)
                buf[static_cast<size_t>((i * W + j) * C + c)] = to_byte(image.pix.at(c, i, j));
    if (!png_image_write_to_file(&img, path.c_str(), 0, buf.data(), 0, nullptr))
        throw DataError("cannot write png " + path + ": " + img.message);
}

/// Luminance/chroma planes, each (H,W) in [0,1]; chroma carries a 0.5 offset.
struct YcbcrImage {
    Tensor y, cb, cr;
};

/// BT.601 full-range forward transform. Grayscale input gets neutral chroma.
inline YcbcrImage to_ycbcr(const Image& image) {
    int64_t H = image.height(), W = image.width();
    YcbcrImage out{Tensor({H, W}), Tensor({H, W}), Tensor({H, W})};
    if (image.channels() == 1) {
        out.y = image.pix.reshaped({H, W}).clone();
        out.cb.fill(0.5);
        out.cr.fill(0.5);
        return out;
    }
    for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < W; ++j) {
            double r = image.pix.at(0, i, j), g = image.pix.at(1, i, j),
                   b = image.pix.at(2, i, j);
            double y = 0.299 * r + 0.587 * g + 0.114 * b;
            out.y.at(i, j) = y;
            out.cb.at(i, j) = (b - y) / 1.772 + 0.5;
            out.cr.at(i, j) = (r - y) / 1.402 + 0.5;
        }
    return out;
}

inline Image from_ycbcr(const Tensor& y, const Tensor& cb, const Tensor& cr) {
    OCCO_CHECK(y.ndim() == 2 && y.same_shape(cb) && y.same_shape(cr),
               "chroma planes must match luminance shape");
    int64_t H = y.size(0), W = y.size(1);
    Tensor t({3, H, W});
    for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j < W; ++j) {
            double Y = y.at(i, j), CB = cb.at(i, j) - 0.5, CR = cr.at(i, j) - 0.5;
            double r = Y + 1.402 * CR;
            double b = Y + 1.772 * CB;
            double g = (Y - 0.299 * r - 0.114 * b) / 0.587;
            t.at(0, i, j) = std::clamp(r, 0.0, 1.0);
            t.at(1, i, j) = std::clamp(g, 0.0, 1.0);
            t.at(2, i, j) = std::clamp(b, 0.0, 1.0);
        }
    return Image(std::move(t));
}

/// Extends plane (H,W) by mirroring about the last row/column (the edge
/// itself is not repeated), so each pad amount is limited to the extent - 1.
inline Tensor reflect_pad_plane(const Tensor& plane, int64_t bottom, int64_t right) {
    OCCO_CHECK(plane.ndim() == 2, "reflect_pad_plane expects (H,W)");
    int64_t H = plane.size(0), W = plane.size(1);
    OCCO_CHECK(bottom >= 0 && right >= 0 && bottom <= H - 1 && right <= W - 1,
               "reflect padding of ", bottom, "x", right, " exceeds ", shape_str(plane.shape()));
    Tensor out({H + bottom, W + right});
    for (int64_t i = 0; i < H + bottom; ++i) {
        int64_t si = i < H ? i : 2 * H - 2 - i;
        for (int64_t j = 0; j < W + right; ++j) {
            int64_t sj = j < W ? j : 2 * W - 2 - j;
            out.at(i, j) = plane.at(si, sj);
        }
    }
    return out;
}

/// Crops plane (H,W) to [y0,y0+h) x [x0,x0+w).
inline Tensor crop_plane(const Tensor& plane, int64_t y0, int64_t x0, int64_t h, int64_t w) {
    OCCO_CHECK(plane.ndim() == 2, "crop_plane expects (H,W)");
    OCCO_CHECK(y0 >= 0 && x0 >= 0 && y0 + h <= plane.size(0) && x0 + w <= plane.size(1),
               "crop window [", y0, ",", y0 + h, ")x[", x0, ",", x0 + w, ") outside ",
               shape_str(plane.shape()));
    Tensor out({h, w});
    for (int64_t i = 0; i < h; ++i)
        for (int64_t j = 0; j < w; ++j) out.at(i, j) = plane.at(y0 + i, x0 + j);
    return out;
}

} // namespace occo
