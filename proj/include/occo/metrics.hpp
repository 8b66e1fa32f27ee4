#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "occo/tensor.hpp"

namespace occo {

/// Reference-free and reference-based quality numbers for one fused image.
struct MetricReport {
    double en = 0.0;  // entropy, bits
    double sf = 0.0;  // spatial frequency
    double ag = 0.0;  // average gradient
    double cc = 0.0;  // mean correlation against the two sources, in [-1,1]
};

namespace detail_metrics {

inline void check_2d(const Tensor& img, int64_t min_h, int64_t min_w) {
    OCCO_CHECK(img.ndim() == 2, "metrics expect a 2-D image, got ", shape_str(img.shape()));
    OCCO_CHECK(img.size(0) >= min_h && img.size(1) >= min_w, "image ", img.size(0), "x",
               img.size(1), " too small, need at least ", min_h, "x", min_w);
}

/// Pearson correlation; 0 when either input is constant.
inline double pearson(const Tensor& a, const Tensor& b) {
    int64_t n = a.numel();
    double ma = 0.0, mb = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa <= 0.0 || sbb <= 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

}  // namespace detail_metrics

/// Shannon entropy in bits after 8-bit quantization of a [0,1] image.
inline double entropy(const Tensor& img) {
    detail_metrics::check_2d(img, 1, 1);
    int64_t hist[256] = {0};
    for (int64_t i = 0; i < img.numel(); ++i) {
        double v = std::clamp(img[i], 0.0, 1.0);
        hist[static_cast<int>(std::lround(v * 255.0))]++;
    }
    double n = static_cast<double>(img.numel()), en = 0.0;
    for (int64_t b = 0; b < 256; ++b)
        if (hist[b] > 0) {
            double p = hist[b] / n;
            en -= p * std::log2(p);
        }
    return en;
}

/// sqrt(RF^2 + CF^2) where RF and CF are the root-mean-square horizontal and
/// vertical forward differences.
inline double spatial_frequency(const Tensor& img) {
    detail_metrics::check_2d(img, 2, 2);
    int64_t H = img.size(0), W = img.size(1);
    double rf = 0.0, cf = 0.0;
    for (int64_t i = 0; i < H; ++i)
        for (int64_t j = 0; j + 1 < W; ++j) {
            double d = img.at(i, j + 1) - img.at(i, j);
            rf += d * d;
        }
    for (int64_t i = 0; i + 1 < H; ++i)
        for (int64_t j = 0; j < W; ++j) {
            double d = img.at(i + 1, j) - img.at(i, j);
            cf += d * d;
        }
    rf /= static_cast<double>(H * (W - 1));
    cf /= static_cast<double>((H - 1) * W);
    return std::sqrt(rf + cf);
}

/// Mean over pixels with both forward differences of sqrt((dx^2 + dy^2)/2).
inline double average_gradient(const Tensor& img) {
    detail_metrics::check_2d(img, 2, 2);
    int64_t H = img.size(0), W = img.size(1);
    double sum = 0.0;
    for (int64_t i = 0; i + 1 < H; ++i)
        for (int64_t j = 0; j + 1 < W; ++j) {
            double dx = img.at(i, j + 1) - img.at(i, j);
            double dy = img.at(i + 1, j) - img.at(i, j);
            sum += std::sqrt((dx * dx + dy * dy) / 2.0);
        }
    return sum / static_cast<double>((H - 1) * (W - 1));
}

/// Mean of the two Pearson correlations between the fused image and each
/// source. A constant image contributes 0 to its term.
inline double correlation_coefficient(const Tensor& f, const Tensor& vi, const Tensor& ir) {
    detail_metrics::check_2d(f, 1, 1);
    OCCO_CHECK(f.same_shape(vi) && f.same_shape(ir), "correlation inputs must share one shape");
    return 0.5 * (detail_metrics::pearson(f, vi) + detail_metrics::pearson(f, ir));
}

inline MetricReport compute_metrics(const Tensor& f, const Tensor& vi, const Tensor& ir) {
    MetricReport r;
    r.en = entropy(f);
    r.sf = spatial_frequency(f);
    r.ag = average_gradient(f);
    r.cc = correlation_coefficient(f, vi, ir);
    return r;
}

struct MetricRow {
    std::string id;
    MetricReport m;
};

/// CSV with one row per image and a trailing mean row. Fixed formatting so
/// identical inputs serialize to identical bytes.
inline std::string metrics_csv(const std::vector<MetricRow>& rows) {
    auto fmt = [](const MetricRow& r) {
        char buf[192];
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.6f,%.6f\n", r.id.c_str(), r.m.en, r.m.sf,
                      r.m.ag, r.m.cc);
        return std::string(buf);
    };
    std::string out = "image_id,en,sf,ag,cc\n";
    MetricRow mean;
    mean.id = "mean";
    for (const MetricRow& r : rows) {
        out += fmt(r);
        mean.m.en += r.m.en;
        mean.m.sf += r.m.sf;
        mean.m.ag += r.m.ag;
        mean.m.cc += r.m.cc;
    }
    if (!rows.empty()) {
        double n = static_cast<double>(rows.size());
        mean.m.en /= n;
        mean.m.sf /= n;
        mean.m.ag /= n;
        mean.m.cc /= n;
    }
    out += fmt(mean);
    return out;
}

}  // namespace occo
