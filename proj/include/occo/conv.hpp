#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "occo/ops.hpp"

namespace occo {
namespace ops {

inline int64_t conv_out_size(int64_t in, int64_t k, int64_t stride, int64_t pad, bool ceil_mode = false) {
    int64_t num = in + 2 * pad - k;
    if (ceil_mode) {
        // windows may overhang the border as long as they start in bounds
        if (num <= 0) return 1;
        return (num + stride - 1) / stride + 1;
    }
    OCCO_CHECK(num >= 0, "kernel ", k, " larger than padded input ", in + 2 * pad);
    return num / stride + 1;
}

namespace detail {

/// Gathers conv patches: x (Cin,H,W) -> col (Cin*kh*kw, Ho*Wo), zero padding.
inline void im2col(const double* x, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
                   int64_t stride, int64_t pad, int64_t Ho, int64_t Wo, double* col) {
    for (int64_t c = 0; c < C; ++c)
        for (int64_t u = 0; u < kh; ++u)
            for (int64_t v = 0; v < kw; ++v) {
                double* row = col + ((c * kh + u) * kw + v) * (Ho * Wo);
                for (int64_t i = 0; i < Ho; ++i) {
                    int64_t yi = i * stride - pad + u;
                    for (int64_t j = 0; j < Wo; ++j) {
                        int64_t xj = j * stride - pad + v;
                        row[i * Wo + j] = (yi >= 0 && yi < H && xj >= 0 && xj < W)
                                              ? x[(c * H + yi) * W + xj]
                                              : 0.0;
                    }
                }
            }
}

/// Scatter-adds col gradients back into the (Cin,H,W) image.
inline void col2im(const double* col, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
                   int64_t stride, int64_t pad, int64_t Ho, int64_t Wo, double* x) {
    for (int64_t c = 0; c < C; ++c)
        for (int64_t u = 0; u < kh; ++u)
            for (int64_t v = 0; v < kw; ++v) {
                const double* row = col + ((c * kh + u) * kw + v) * (Ho * Wo);
                for (int64_t i = 0; i < Ho; ++i) {
                    int64_t yi = i * stride - pad + u;
                    if (yi < 0 || yi >= H) continue;
                    for (int64_t j = 0; j < Wo; ++j) {
                        int64_t xj = j * stride - pad + v;
                        if (xj >= 0 && xj < W) x[(c * H + yi) * W + xj] += row[i * Wo + j];
                    }
                }
            }
}

} // namespace detail

/// 2-D convolution, x (B,Cin,H,W), w (Cout,Cin,kh,kw), optional bias (Cout).
/// Zero padding, single stride for both axes. GEMM via im2col.
inline Var conv2d(const Var& x, const Var& w, const Var& bias, int64_t stride = 1, int64_t pad = 0) {
    OCCO_CHECK(x->value.ndim() == 4 && w->value.ndim() == 4, "conv2d expects 4-D x and w");
    int64_t B = x->value.size(0), Cin = x->value.size(1), H = x->value.size(2), W = x->value.size(3);
    int64_t Cout = w->value.size(0), kh = w->value.size(2), kw = w->value.size(3);
    OCCO_CHECK(w->value.size(1) == Cin, "conv2d channel mismatch: x has ", Cin, ", w expects ",
               w->value.size(1));
    int64_t Ho = conv_out_size(H, kh, stride, pad);
    int64_t Wo = conv_out_size(W, kw, stride, pad);
    int64_t K = Cin * kh * kw, P = Ho * Wo;

    Tensor y({B, Cout, Ho, Wo});
    std::vector<double> col(static_cast<size_t>(K * P));
    ECMap Wm(w->value.ptr(), Cout, K);
    for (int64_t b = 0; b < B; ++b) {
        detail::im2col(x->value.ptr() + b * Cin * H * W, Cin, H, W, kh, kw, stride, pad, Ho, Wo,
                       col.data());
        ECMap Cm(col.data(), K, P);
        EMap(y.ptr() + b * Cout * P, Cout, P).noalias() = Wm * Cm;
    }
    if (bias) {
        OCCO_CHECK(bias->value.numel() == Cout, "conv2d bias size mismatch");
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < Cout; ++c) {
                double bv = bias->value[c];
                double* p = y.ptr() + (b * Cout + c) * P;
                for (int64_t i = 0; i < P; ++i) p[i] += bv;
            }
    }

    std::vector<Var> ins = {x, w};
    if (bias) ins.push_back(bias);
    auto back = [B, Cin, H, W, Cout, kh, kw, stride, pad, Ho, Wo, K, P](Node& n) {
        const Var& xv = n.inputs[0];
        const Var& wv = n.inputs[1];
        std::vector<double> col(static_cast<size_t>(K * P));
        Tensor gx, gw;
        if (xv->requires_grad) gx = Tensor::zeros(xv->value.shape());
        if (wv->requires_grad) gw = Tensor::zeros(wv->value.shape());
        ECMap Wm(wv->value.ptr(), Cout, K);
        for (int64_t b = 0; b < B; ++b) {
            ECMap G(n.grad.ptr() + b * Cout * P, Cout, P);
            if (wv->requires_grad) {
                detail::im2col(xv->value.ptr() + b * Cin * H * W, Cin, H, W, kh, kw, stride, pad,
                               Ho, Wo, col.data());
                ECMap Cm(col.data(), K, P);
                EMap(gw.ptr(), Cout, K).noalias() += G * Cm.transpose();
            }
            if (xv->requires_grad) {
                EMap(col.data(), K, P).noalias() = Wm.transpose() * G;
                detail::col2im(col.data(), Cin, H, W, kh, kw, stride, pad, Ho, Wo,
                               gx.ptr() + b * Cin * H * W);
            }
        }
        if (xv->requires_grad) accumulate(xv, gx);
        if (wv->requires_grad) accumulate(wv, gw);
        if (n.inputs.size() > 2 && n.inputs[2]->requires_grad) {
            Tensor gb(n.inputs[2]->value.shape());
            for (int64_t b = 0; b < B; ++b)
                for (int64_t c = 0; c < Cout; ++c) {
                    const double* p = n.grad.ptr() + (b * Cout + c) * P;
                    for (int64_t i = 0; i < P; ++i) gb[c] += p[i];
                }
            accumulate(n.inputs[2], gb);
        }
    };
    return make_op(std::move(y), std::move(ins), std::move(back));
}

/// Depth-wise convolution: x (B,C,H,W), w (C,1,kh,kw), optional bias (C).
/// Each channel is filtered by its own kernel.
inline Var depthwise_conv2d(const Var& x, const Var& w, const Var& bias, int64_t stride = 1,
                            int64_t pad = 0) {
    OCCO_CHECK(x->value.ndim() == 4 && w->value.ndim() == 4 && w->value.size(1) == 1 &&
                   w->value.size(0) == x->value.size(1),
               "depthwise_conv2d expects w (C,1,kh,kw) matching x channels");
    int64_t B = x->value.size(0), C = x->value.size(1), H = x->value.size(2), W = x->value.size(3);
    int64_t kh = w->value.size(2), kw = w->value.size(3);
    int64_t Ho = conv_out_size(H, kh, stride, pad);
    int64_t Wo = conv_out_size(W, kw, stride, pad);
    if (bias) OCCO_CHECK(bias->value.numel() == C, "depthwise bias size mismatch");

    Tensor y({B, C, Ho, Wo});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            const double* xp = x->value.ptr() + (b * C + c) * H * W;
            const double* wp = w->value.ptr() + c * kh * kw;
            double bv = bias ? bias->value[c] : 0.0;
            double* yp = y.ptr() + (b * C + c) * Ho * Wo;
            for (int64_t i = 0; i < Ho; ++i)
                for (int64_t j = 0; j < Wo; ++j) {
                    double s = bv;
                    for (int64_t u = 0; u < kh; ++u) {
                        int64_t yi = i * stride - pad + u;
                        if (yi < 0 || yi >= H) continue;
                        for (int64_t v = 0; v < kw; ++v) {
                            int64_t xj = j * stride - pad + v;
                            if (xj >= 0 && xj < W) s += wp[u * kw + v] * xp[yi * W + xj];
                        }
                    }
                    yp[i * Wo + j] = s;
                }
        }

    std::vector<Var> ins = {x, w};
    if (bias) ins.push_back(bias);
    auto back = [B, C, H, W, kh, kw, stride, pad, Ho, Wo](Node& n) {
        const Var& xv = n.inputs[0];
        const Var& wv = n.inputs[1];
        Tensor gx, gw;
        if (xv->requires_grad) gx = Tensor::zeros(xv->value.shape());
        if (wv->requires_grad) gw = Tensor::zeros(wv->value.shape());
        for (int64_t b = 0; b < B; ++b)
            for (int64_t c = 0; c < C; ++c) {
                const double* gp = n.grad.ptr() + (b * C + c) * Ho * Wo;
                const double* xp = xv->value.ptr() + (b * C + c) * H * W;
                const double* wp = wv->value.ptr() + c * kh * kw;
                for (int64_t i = 0; i < Ho; ++i)
                    for (int64_t j = 0; j < Wo; ++j) {
                        double gv = gp[i * Wo + j];
                        if (gv == 0.0) continue;
                        for (int64_t u = 0; u < kh; ++u) {
                            int64_t yi = i * stride - pad + u;
                            if (yi < 0 || yi >= H) continue;
                            for (int64_t v = 0; v < kw; ++v) {
                                int64_t xj = j * stride - pad + v;
                                if (xj < 0 || xj >= W) continue;
                                if (gw.defined())
                                    gw.ptr()[(c * kh + u) * kw + v] += gv * xp[yi * W + xj];
                                if (gx.defined())
                                    gx.ptr()[(b * C + c) * H * W + yi * W + xj] +=
                                        gv * wp[u * kw + v];
                            }
                        }
                    }
            }
        if (gx.defined()) accumulate(xv, gx);
        if (gw.defined()) accumulate(wv, gw);
        if (n.inputs.size() > 2 && n.inputs[2]->requires_grad) {
            Tensor gb(n.inputs[2]->value.shape());
            for (int64_t b = 0; b < B; ++b)
                for (int64_t c = 0; c < C; ++c) {
                    const double* gp = n.grad.ptr() + (b * C + c) * Ho * Wo;
                    for (int64_t i = 0; i < Ho * Wo; ++i) gb[c] += gp[i];
                }
            accumulate(n.inputs[2], gb);
        }
    };
    return make_op(std::move(y), std::move(ins), std::move(back));
}

/// Applies one fixed 2-D kernel to every channel independently, valid region
/// only. The kernel is data, not a parameter; no gradient flows into it.
inline Var filter2d_valid(const Var& x, const Tensor& k) {
    OCCO_CHECK(x->value.ndim() == 4 && k.ndim() == 2, "filter2d_valid expects 4-D x, 2-D kernel");
    int64_t B = x->value.size(0), C = x->value.size(1), H = x->value.size(2), W = x->value.size(3);
    int64_t kh = k.size(0), kw = k.size(1);
    int64_t Ho = H - kh + 1, Wo = W - kw + 1;
    OCCO_CHECK(Ho >= 1 && Wo >= 1, "filter2d_valid kernel ", kh, "x", kw, " larger than input ", H,
               "x", W);
    Tensor y({B, C, Ho, Wo});
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const double* xp = x->value.ptr() + bc * H * W;
        double* yp = y.ptr() + bc * Ho * Wo;
        for (int64_t i = 0; i < Ho; ++i)
            for (int64_t j = 0; j < Wo; ++j) {
                double s = 0.0;
                for (int64_t u = 0; u < kh; ++u)
                    for (int64_t v = 0; v < kw; ++v) s += k.at(u, v) * xp[(i + u) * W + j + v];
                yp[i * Wo + j] = s;
            }
    }
    Tensor kk = k.clone();
    return make_op(std::move(y), {x}, [kk, B, C, H, W, kh, kw, Ho, Wo](Node& n) {
        Tensor g = Tensor::zeros(n.inputs[0]->value.shape());
        for (int64_t bc = 0; bc < B * C; ++bc) {
            const double* gp = n.grad.ptr() + bc * Ho * Wo;
            double* xp = g.ptr() + bc * H * W;
            for (int64_t i = 0; i < Ho; ++i)
                for (int64_t j = 0; j < Wo; ++j) {
                    double gv = gp[i * Wo + j];
                    for (int64_t u = 0; u < kh; ++u)
                        for (int64_t v = 0; v < kw; ++v) xp[(i + u) * W + j + v] += gv * kk.at(u, v);
                }
        }
        accumulate(n.inputs[0], g);
    });
}

/// Pads H and W by p pixels replicating the border.
inline Var replicate_pad(const Var& x, int64_t p) {
    OCCO_CHECK(x->value.ndim() == 4 && p >= 0, "replicate_pad expects 4-D input");
    int64_t B = x->value.size(0), C = x->value.size(1), H = x->value.size(2), W = x->value.size(3);
    int64_t Hp = H + 2 * p, Wp = W + 2 * p;
    Tensor y({B, C, Hp, Wp});
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const double* xp = x->value.ptr() + bc * H * W;
        double* yp = y.ptr() + bc * Hp * Wp;
        for (int64_t i = 0; i < Hp; ++i) {
            int64_t si = std::clamp(i - p, int64_t(0), H - 1);
            for (int64_t j = 0; j < Wp; ++j) {
                int64_t sj = std::clamp(j - p, int64_t(0), W - 1);
                yp[i * Wp + j] = xp[si * W + sj];
            }
        }
    }
    return make_op(std::move(y), {x}, [B, C, H, W, p, Hp, Wp](Node& n) {
        Tensor g = Tensor::zeros(n.inputs[0]->value.shape());
        for (int64_t bc = 0; bc < B * C; ++bc) {
            const double* gp = n.grad.ptr() + bc * Hp * Wp;
            double* xp = g.ptr() + bc * H * W;
            for (int64_t i = 0; i < Hp; ++i) {
                int64_t si = std::clamp(i - p, int64_t(0), H - 1);
                for (int64_t j = 0; j < Wp; ++j) {
                    int64_t sj = std::clamp(j - p, int64_t(0), W - 1);
                    xp[si * W + sj] += gp[i * Wp + j];
                }
            }
        }
        accumulate(n.inputs[0], g);
    });
}

/// Max pooling; ceil_mode allows the last window to overhang the border
/// (window contents are clipped to valid pixels).
inline Var maxpool2d(const Var& x, int64_t k, int64_t stride, bool ceil_mode = false) {
    OCCO_CHECK(x->value.ndim() == 4, "maxpool2d expects 4-D input");
    int64_t B = x->value.size(0), C = x->value.size(1), H = x->value.size(2), W = x->value.size(3);
    int64_t Ho = conv_out_size(H, k, stride, 0, ceil_mode);
    int64_t Wo = conv_out_size(W, k, stride, 0, ceil_mode);
    Tensor y({B, C, Ho, Wo});
    auto idx = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(B * C * Ho * Wo));
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const double* xp = x->value.ptr() + bc * H * W;
        for (int64_t i = 0; i < Ho; ++i)
            for (int64_t j = 0; j < Wo; ++j) {
                int64_t i0 = i * stride, j0 = j * stride;
                int64_t i1 = std::min(i0 + k, H), j1 = std::min(j0 + k, W);
                int64_t best = i0 * W + j0;
                for (int64_t u = i0; u < i1; ++u)
                    for (int64_t v = j0; v < j1; ++v)
                        if (xp[u * W + v] > xp[best]) best = u * W + v;
                y.ptr()[(bc * Ho + i) * Wo + j] = xp[best];
                (*idx)[static_cast<size_t>((bc * Ho + i) * Wo + j)] = best;
            }
    }
    return make_op(std::move(y), {x}, [idx, B, C, H, W, Ho, Wo](Node& n) {
        Tensor g = Tensor::zeros(n.inputs[0]->value.shape());
        for (int64_t bc = 0; bc < B * C; ++bc) {
            double* xp = g.ptr() + bc * H * W;
            for (int64_t i = 0; i < Ho * Wo; ++i)
                xp[(*idx)[static_cast<size_t>(bc * Ho * Wo + i)]] += n.grad.ptr()[bc * Ho * Wo + i];
        }
        accumulate(n.inputs[0], g);
    });
}

/// Average pooling over full windows only (floor mode, no padding).
inline Var avgpool2d(const Var& x, int64_t k, int64_t stride) {
    OCCO_CHECK(x->value.ndim() == 4, "avgpool2d expects 4-D input");
    int64_t B = x->value.size(0), C = x->value.size(1), H = x->value.size(2), W = x->value.size(3);
    int64_t Ho = conv_out_size(H, k, stride, 0);
    int64_t Wo = conv_out_size(W, k, stride, 0);
    double inv = 1.0 / static_cast<double>(k * k);
    Tensor y({B, C, Ho, Wo});
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const double* xp = x->value.ptr() + bc * H * W;
        for (int64_t i = 0; i < Ho; ++i)
            for (int64_t j = 0; j < Wo; ++j) {
                double s = 0.0;
                for (int64_t u = 0; u < k; ++u)
                    for (int64_t v = 0; v < k; ++v) s += xp[(i * stride + u) * W + j * stride + v];
                y.ptr()[(bc * Ho + i) * Wo + j] = s * inv;
            }
    }
    return make_op(std::move(y), {x}, [B, C, H, W, Ho, Wo, k, stride, inv](Node& n) {
        Tensor g = Tensor::zeros(n.inputs[0]->value.shape());
        for (int64_t bc = 0; bc < B * C; ++bc) {
            double* xp = g.ptr() + bc * H * W;
            for (int64_t i = 0; i < Ho; ++i)
                for (int64_t j = 0; j < Wo; ++j) {
                    double gv = n.grad.ptr()[(bc * Ho + i) * Wo + j] * inv;
                    for (int64_t u = 0; u < k; ++u)
                        for (int64_t v = 0; v < k; ++v)
                            xp[(i * stride + u) * W + j * stride + v] += gv;
                }
        }
        accumulate(n.inputs[0], g);
    });
}

/// (B,C,H,W) -> (B,C) channel means.
inline Var global_avg_pool(const Var& x) {
    OCCO_CHECK(x->value.ndim() == 4, "global_avg_pool expects 4-D input");
    int64_t B = x->value.size(0), C = x->value.size(1), HW = x->value.size(2) * x->value.size(3);
    double inv = 1.0 / static_cast<double>(HW);
    Tensor y({B, C});
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const double* p = x->value.ptr() + bc * HW;
        double s = 0.0;
        for (int64_t i = 0; i < HW; ++i) s += p[i];
        y[bc] = s * inv;
    }
    return make_op(std::move(y), {x}, [B, C, HW, inv](Node& n) {
        Tensor g(n.inputs[0]->value.shape());
        for (int64_t bc = 0; bc < B * C; ++bc) {
            double gv = n.grad[bc] * inv;
            double* p = g.ptr() + bc * HW;
            for (int64_t i = 0; i < HW; ++i) p[i] = gv;
        }
        accumulate(n.inputs[0], g);
    });
}

/// (B,C,H,W) -> (B,C) channel maxima.
inline Var global_max_pool(const Var& x) {
    OCCO_CHECK(x->value.ndim() == 4, "global_max_pool expects 4-D input");
    int64_t B = x->value.size(0), C = x->value.size(1), HW = x->value.size(2) * x->value.size(3);
    Tensor y({B, C});
    auto idx = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(B * C));
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const double* p = x->value.ptr() + bc * HW;
        int64_t best = 0;
        for (int64_t i = 1; i < HW; ++i)
            if (p[i] > p[best]) best = i;
        y[bc] = p[best];
        (*idx)[static_cast<size_t>(bc)] = best;
    }
    return make_op(std::move(y), {x}, [idx, B, C, HW](Node& n) {
        Tensor g = Tensor::zeros(n.inputs[0]->value.shape());
        for (int64_t bc = 0; bc < B * C; ++bc)
            g.ptr()[bc * HW + (*idx)[static_cast<size_t>(bc)]] = n.grad[bc];
        accumulate(n.inputs[0], g);
    });
}

/// Nearest-neighbour 2x upsampling.
inline Var upsample_nearest2x(const Var& x) {
    OCCO_CHECK(x->value.ndim() == 4, "upsample_nearest2x expects 4-D input");
    int64_t B = x->value.size(0), C = x->value.size(1), H = x->value.size(2), W = x->value.size(3);
    Tensor y({B, C, 2 * H, 2 * W});
    for (int64_t bc = 0; bc < B * C; ++bc) {
        const double* xp = x->value.ptr() + bc * H * W;
        double* yp = y.ptr() + bc * 4 * H * W;
        for (int64_t i = 0; i < 2 * H; ++i)
            for (int64_t j = 0; j < 2 * W; ++j) yp[i * 2 * W + j] = xp[(i / 2) * W + j / 2];
    }
    return make_op(std::move(y), {x}, [B, C, H, W](Node& n) {
        Tensor g = Tensor::zeros(n.inputs[0]->value.shape());
        for (int64_t bc = 0; bc < B * C; ++bc) {
            const double* gp = n.grad.ptr() + bc * 4 * H * W;
            double* xp = g.ptr() + bc * H * W;
            for (int64_t i = 0; i < 2 * H; ++i)
                for (int64_t j = 0; j < 2 * W; ++j) xp[(i / 2) * W + j / 2] += gp[i * 2 * W + j];
        }
        accumulate(n.inputs[0], g);
    });
}

/// Keeps the top-left (Ht,Wt) region; used to align upsampled maps with
/// odd-sized skip connections.
inline Var crop2d(const Var& x, int64_t Ht, int64_t Wt) {
    if (x->value.size(2) == Ht && x->value.size(3) == Wt) return x;
    Var y = slice(x, 2, 0, Ht);
    return slice(y, 3, 0, Wt);
}

} // namespace ops
} // namespace occo
