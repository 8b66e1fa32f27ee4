#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "occo/autograd.hpp"

namespace occo {
namespace ops {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

// ---------------------------------------------------------------- elementwise

inline Var add(const Var& a, const Var& b) {
    OCCO_CHECK(a->value.same_shape(b->value), "add shape mismatch ", shape_str(a->value.shape()),
               " vs ", shape_str(b->value.shape()));
    Tensor y = a->value.clone();
    for (int64_t i = 0; i < y.numel(); ++i) y[i] += b->value[i];
    return make_op(std::move(y), {a, b}, [](Node& n) {
        accumulate(n.inputs[0], n.grad);
        accumulate(n.inputs[1], n.grad);
    });
}

inline Var sub(const Var& a, const Var& b) {
    OCCO_CHECK(a->value.same_shape(b->value), "sub shape mismatch ", shape_str(a->value.shape()),
               " vs ", shape_str(b->value.shape()));
    Tensor y = a->value.clone();
    for (int64_t i = 0; i < y.numel(); ++i) y[i] -= b->value[i];
    return make_op(std::move(y), {a, b}, [](Node& n) {
        accumulate(n.inputs[0], n.grad);
        if (n.inputs[1]->requires_grad) {
            Tensor g = n.grad.clone();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] = -g[i];
            accumulate(n.inputs[1], g);
        }
    });
}

inline Var mul(const Var& a, const Var& b) {
    OCCO_CHECK(a->value.same_shape(b->value), "mul shape mismatch ", shape_str(a->value.shape()),
               " vs ", shape_str(b->value.shape()));
    Tensor y = a->value.clone();
    for (int64_t i = 0; i < y.numel(); ++i) y[i] *= b->value[i];
    return make_op(std::move(y), {a, b}, [](Node& n) {
        if (n.inputs[0]->requires_grad) {
            Tensor g = n.grad.clone();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] *= n.inputs[1]->value[i];
            accumulate(n.inputs[0], g);
        }
        if (n.inputs[1]->requires_grad) {
            Tensor g = n.grad.clone();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] *= n.inputs[0]->value[i];
            accumulate(n.inputs[1], g);
        }
    });
}

inline Var div(const Var& a, const Var& b) {
    OCCO_CHECK(a->value.same_shape(b->value), "div shape mismatch ", shape_str(a->value.shape()),
               " vs ", shape_str(b->value.shape()));
    Tensor y = a->value.clone();
    for (int64_t i = 0; i < y.numel(); ++i) y[i] /= b->value[i];
    return make_op(std::move(y), {a, b}, [](Node& n) {
        if (n.inputs[0]->requires_grad) {
            Tensor g = n.grad.clone();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] /= n.inputs[1]->value[i];
            accumulate(n.inputs[0], g);
        }
        if (n.inputs[1]->requires_grad) {
            Tensor g = n.grad.clone();
            for (int64_t i = 0; i < g.numel(); ++i) {
                double bv = n.inputs[1]->value[i];
                g[i] *= -n.inputs[0]->value[i] / (bv * bv);
            }
            accumulate(n.inputs[1], g);
        }
    });
}

inline Var add_scalar(const Var& a, double s) {
    Tensor y = a->value.clone();
    for (int64_t i = 0; i < y.numel(); ++i) y[i] += s;
    return make_op(std::move(y), {a}, [](Node& n) { accumulate(n.inputs[0], n.grad); });
}

inline Var mul_scalar(const Var& a, double s) {
    Tensor y = a->value.clone();
    for (int64_t i = 0; i < y.numel(); ++i) y[i] *= s;
    return make_op(std::move(y), {a}, [s](Node& n) {
        Tensor g = n.grad.clone();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] *= s;
        accumulate(n.inputs[0], g);
    });
}

inline Var relu(const Var& a) {
    Tensor y = a->value.clone();
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = std::max(y[i], 0.0);
    return make_op(std::move(y), {a}, [](Node& n) {
        Tensor g = n.grad.clone();
        for (int64_t i = 0; i < g.numel(); ++i)
            if (n.inputs[0]->value[i] <= 0.0) g[i] = 0.0;
        accumulate(n.inputs[0], g);
    });
}

inline Var sigmoid(const Var& a) {
    Tensor y = a->value.clone();
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = 1.0 / (1.0 + std::exp(-y[i]));
    return make_op(std::move(y), {a}, [](Node& n) {
        Tensor g = n.grad.clone();
        for (int64_t i = 0; i < g.numel(); ++i) {
            double s = n.value[i];
            g[i] *= s * (1.0 - s);
        }
        accumulate(n.inputs[0], g);
    });
}

inline Var square(const Var& a) {
    Tensor y = a->value.clone();
    for (int64_t i = 0; i < y.numel(); ++i) y[i] *= y[i];
    return make_op(std::move(y), {a}, [](Node& n) {
        Tensor g = n.grad.clone();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] *= 2.0 * n.inputs[0]->value[i];
        accumulate(n.inputs[0], g);
    });
}

/// |x| with subgradient 0 at the kink.
inline Var abs(const Var& a) {
    Tensor y = a->value.clone();
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = std::fabs(y[i]);
    return make_op(std::move(y), {a}, [](Node& n) {
        Tensor g = n.grad.clone();
        for (int64_t i = 0; i < g.numel(); ++i) {
            double x = n.inputs[0]->value[i];
            g[i] *= (x > 0.0) ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
        }
        accumulate(n.inputs[0], g);
    });
}

inline Var log(const Var& a) {
    Tensor y = a->value.clone();
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = std::log(y[i]);
    return make_op(std::move(y), {a}, [](Node& n) {
        Tensor g = n.grad.clone();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] /= n.inputs[0]->value[i];
        accumulate(n.inputs[0], g);
    });
}

/// max(x, c); gradient passes where x >= c.
inline Var clamp_min(const Var& a, double c) {
    Tensor y = a->value.clone();
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = std::max(y[i], c);
    return make_op(std::move(y), {a}, [c](Node& n) {
        Tensor g = n.grad.clone();
        for (int64_t i = 0; i < g.numel(); ++i)
            if (n.inputs[0]->value[i] < c) g[i] = 0.0;
        accumulate(n.inputs[0], g);
    });
}

/// Elementwise max; ties route the gradient to the first argument.
inline Var maximum(const Var& a, const Var& b) {
    OCCO_CHECK(a->value.same_shape(b->value), "maximum shape mismatch");
    Tensor y = a->value.clone();
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = std::max(y[i], b->value[i]);
    return make_op(std::move(y), {a, b}, [](Node& n) {
        if (n.inputs[0]->requires_grad) {
            Tensor g = n.grad.clone();
            for (int64_t i = 0; i < g.numel(); ++i)
                if (n.inputs[0]->value[i] < n.inputs[1]->value[i]) g[i] = 0.0;
            accumulate(n.inputs[0], g);
        }
        if (n.inputs[1]->requires_grad) {
            Tensor g = n.grad.clone();
            for (int64_t i = 0; i < g.numel(); ++i)
                if (n.inputs[0]->value[i] >= n.inputs[1]->value[i]) g[i] = 0.0;
            accumulate(n.inputs[1], g);
        }
    });
}

// ----------------------------------------------------------------- reductions

inline Var sum_all(const Var& a) {
    return make_op(Tensor::scalar(a->value.sum()), {a}, [](Node& n) {
        Tensor g = Tensor::full(n.inputs[0]->value.shape(), n.grad[0]);
        accumulate(n.inputs[0], g);
    });
}

inline Var mean_all(const Var& a) {
    double inv = 1.0 / static_cast<double>(a->value.numel());
    return make_op(Tensor::scalar(a->value.sum() * inv), {a}, [inv](Node& n) {
        Tensor g = Tensor::full(n.inputs[0]->value.shape(), n.grad[0] * inv);
        accumulate(n.inputs[0], g);
    });
}

/// Frobenius norm sqrt(sum x^2); backward guards the zero-norm point.
inline Var norm2(const Var& a, double eps = 1e-12) {
    double s = 0.0;
    for (int64_t i = 0; i < a->value.numel(); ++i) s += a->value[i] * a->value[i];
    double nrm = std::sqrt(s);
    return make_op(Tensor::scalar(nrm), {a}, [nrm, eps](Node& n) {
        double scale = n.grad[0] / std::max(nrm, eps);
        Tensor g = n.inputs[0]->value.clone();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] *= scale;
        accumulate(n.inputs[0], g);
    });
}

/// Row-wise max of a 2-D tensor, shape (N,M) -> (N,1).
inline Var rowmax(const Var& a) {
    OCCO_CHECK(a->value.ndim() == 2, "rowmax expects 2-D, got ", shape_str(a->value.shape()));
    int64_t N = a->value.size(0), M = a->value.size(1);
    Tensor y({N, 1});
    auto idx = std::make_shared<std::vector<int64_t>>(N);
    for (int64_t i = 0; i < N; ++i) {
        int64_t best = 0;
        for (int64_t j = 1; j < M; ++j)
            if (a->value.at(i, j) > a->value.at(i, best)) best = j;
        (*idx)[static_cast<size_t>(i)] = best;
        y.at(i, 0) = a->value.at(i, best);
    }
    return make_op(std::move(y), {a}, [idx, N](Node& n) {
        Tensor g = Tensor::zeros(n.inputs[0]->value.shape());
        for (int64_t i = 0; i < N; ++i) g.at(i, (*idx)[static_cast<size_t>(i)]) = n.grad.at(i, 0);
        accumulate(n.inputs[0], g);
    });
}

/// Mean over rows of a 2-D tensor, shape (N,M) -> (1,M).
inline Var mean_rows(const Var& a) {
    OCCO_CHECK(a->value.ndim() == 2, "mean_rows expects 2-D");
    int64_t N = a->value.size(0), M = a->value.size(1);
    Tensor y({1, M});
    for (int64_t i = 0; i < N; ++i)
        for (int64_t j = 0; j < M; ++j) y.at(0, j) += a->value.at(i, j);
    double inv = 1.0 / static_cast<double>(N);
    for (int64_t j = 0; j < M; ++j) y.at(0, j) *= inv;
    return make_op(std::move(y), {a}, [N, M, inv](Node& n) {
        Tensor g(n.inputs[0]->value.shape());
        for (int64_t i = 0; i < N; ++i)
            for (int64_t j = 0; j < M; ++j) g.at(i, j) = n.grad.at(0, j) * inv;
        accumulate(n.inputs[0], g);
    });
}

/// a(N,M) - v(1,M) broadcast over rows.
inline Var sub_rowvec(const Var& a, const Var& v) {
    OCCO_CHECK(a->value.ndim() == 2 && v->value.ndim() == 2 && v->value.size(0) == 1 &&
                   v->value.size(1) == a->value.size(1),
               "sub_rowvec shape mismatch ", shape_str(a->value.shape()), " vs ",
               shape_str(v->value.shape()));
    int64_t N = a->value.size(0), M = a->value.size(1);
    Tensor y = a->value.clone();
    for (int64_t i = 0; i < N; ++i)
        for (int64_t j = 0; j < M; ++j) y.at(i, j) -= v->value.at(0, j);
    return make_op(std::move(y), {a, v}, [N, M](Node& n) {
        accumulate(n.inputs[0], n.grad);
        if (n.inputs[1]->requires_grad) {
            Tensor gv({1, M});
            for (int64_t i = 0; i < N; ++i)
                for (int64_t j = 0; j < M; ++j) gv.at(0, j) -= n.grad.at(i, j);
            accumulate(n.inputs[1], gv);
        }
    });
}

/// Normalizes each row of a 2-D tensor to unit L2 norm (guarded by eps).
inline Var l2_normalize_rows(const Var& a, double eps = 1e-12) {
    OCCO_CHECK(a->value.ndim() == 2, "l2_normalize_rows expects 2-D");
    int64_t N = a->value.size(0), M = a->value.size(1);
    Tensor y = a->value.clone();
    auto norms = std::make_shared<std::vector<double>>(N);
    for (int64_t i = 0; i < N; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < M; ++j) s += y.at(i, j) * y.at(i, j);
        double nrm = std::max(std::sqrt(s), eps);
        (*norms)[static_cast<size_t>(i)] = nrm;
        for (int64_t j = 0; j < M; ++j) y.at(i, j) /= nrm;
    }
    return make_op(std::move(y), {a}, [norms, N, M](Node& n) {
        Tensor g(n.inputs[0]->value.shape());
        for (int64_t i = 0; i < N; ++i) {
            double dot = 0.0;
            for (int64_t j = 0; j < M; ++j) dot += n.grad.at(i, j) * n.value.at(i, j);
            double nrm = (*norms)[static_cast<size_t>(i)];
            for (int64_t j = 0; j < M; ++j)
                g.at(i, j) = (n.grad.at(i, j) - n.value.at(i, j) * dot) / nrm;
        }
        accumulate(n.inputs[0], g);
    });
}

/// Numerically stable row-wise softmax of a 2-D tensor.
inline Var softmax_rows(const Var& a) {
    OCCO_CHECK(a->value.ndim() == 2, "softmax_rows expects 2-D, got ", shape_str(a->value.shape()));
    int64_t N = a->value.size(0), M = a->value.size(1);
    Tensor y = a->value.clone();
    for (int64_t i = 0; i < N; ++i) {
        double mx = y.at(i, 0);
        for (int64_t j = 1; j < M; ++j) mx = std::max(mx, y.at(i, j));
        double Z = 0.0;
        for (int64_t j = 0; j < M; ++j) {
            y.at(i, j) = std::exp(y.at(i, j) - mx);
            Z += y.at(i, j);
        }
        for (int64_t j = 0; j < M; ++j) y.at(i, j) /= Z;
    }
    return make_op(std::move(y), {a}, [N, M](Node& n) {
        Tensor g(n.inputs[0]->value.shape());
        for (int64_t i = 0; i < N; ++i) {
            double dot = 0.0;
            for (int64_t j = 0; j < M; ++j) dot += n.grad.at(i, j) * n.value.at(i, j);
            for (int64_t j = 0; j < M; ++j)
                g.at(i, j) = n.value.at(i, j) * (n.grad.at(i, j) - dot);
        }
        accumulate(n.inputs[0], g);
    });
}

// --------------------------------------------------------------------- linalg

inline Var matmul(const Var& a, const Var& b) {
    OCCO_CHECK(a->value.ndim() == 2 && b->value.ndim() == 2 && a->value.size(1) == b->value.size(0),
               "matmul shape mismatch ", shape_str(a->value.shape()), " x ",
               shape_str(b->value.shape()));
    int64_t N = a->value.size(0), K = a->value.size(1), M = b->value.size(1);
    Tensor y({N, M});
    ECMap A(a->value.ptr(), N, K), B(b->value.ptr(), K, M);
    EMap(y.ptr(), N, M).noalias() = A * B;
    return make_op(std::move(y), {a, b}, [N, K, M](Node& n) {
        ECMap G(n.grad.ptr(), N, M);
        if (n.inputs[0]->requires_grad) {
            Tensor ga({N, K});
            ECMap B(n.inputs[1]->value.ptr(), K, M);
            EMap(ga.ptr(), N, K).noalias() = G * B.transpose();
            accumulate(n.inputs[0], ga);
        }
        if (n.inputs[1]->requires_grad) {
            Tensor gb({K, M});
            ECMap A(n.inputs[0]->value.ptr(), N, K);
            EMap(gb.ptr(), K, M).noalias() = A.transpose() * G;
            accumulate(n.inputs[1], gb);
        }
    });
}

inline Var transpose2d(const Var& a) {
    OCCO_CHECK(a->value.ndim() == 2, "transpose2d expects 2-D");
    int64_t N = a->value.size(0), M = a->value.size(1);
    Tensor y({M, N});
    for (int64_t i = 0; i < N; ++i)
        for (int64_t j = 0; j < M; ++j) y.at(j, i) = a->value.at(i, j);
    return make_op(std::move(y), {a}, [N, M](Node& n) {
        Tensor g({N, M});
        for (int64_t i = 0; i < N; ++i)
            for (int64_t j = 0; j < M; ++j) g.at(i, j) = n.grad.at(j, i);
        accumulate(n.inputs[0], g);
    });
}

/// x(N,in) @ W(out,in)^T + b(out) -> (N,out). b may be null.
inline Var linear(const Var& x, const Var& W, const Var& b) {
    OCCO_CHECK(x->value.ndim() == 2 && W->value.ndim() == 2 && x->value.size(1) == W->value.size(1),
               "linear shape mismatch x", shape_str(x->value.shape()), " W",
               shape_str(W->value.shape()));
    int64_t N = x->value.size(0), In = x->value.size(1), Out = W->value.size(0);
    Tensor y({N, Out});
    ECMap X(x->value.ptr(), N, In), Wm(W->value.ptr(), Out, In);
    EMap(y.ptr(), N, Out).noalias() = X * Wm.transpose();
    if (b) {
        OCCO_CHECK(b->value.numel() == Out, "linear bias size mismatch");
        for (int64_t i = 0; i < N; ++i)
            for (int64_t j = 0; j < Out; ++j) y.at(i, j) += b->value[j];
    }
    std::vector<Var> ins = {x, W};
    if (b) ins.push_back(b);
    return make_op(std::move(y), std::move(ins), [N, In, Out](Node& n) {
        ECMap G(n.grad.ptr(), N, Out);
        if (n.inputs[0]->requires_grad) {
            Tensor gx({N, In});
            ECMap Wm(n.inputs[1]->value.ptr(), Out, In);
            EMap(gx.ptr(), N, In).noalias() = G * Wm;
            accumulate(n.inputs[0], gx);
        }
        if (n.inputs[1]->requires_grad) {
            Tensor gw({Out, In});
            ECMap X(n.inputs[0]->value.ptr(), N, In);
            EMap(gw.ptr(), Out, In).noalias() = G.transpose() * X;
            accumulate(n.inputs[1], gw);
        }
        if (n.inputs.size() > 2 && n.inputs[2]->requires_grad) {
            Tensor gb(n.inputs[2]->value.shape());
            for (int64_t i = 0; i < N; ++i)
                for (int64_t j = 0; j < Out; ++j) gb[j] += n.grad.at(i, j);
            accumulate(n.inputs[2], gb);
        }
    });
}

// ---------------------------------------------------------------------- shape

inline Var reshape(const Var& a, Shape shape) {
    Tensor y = a->value.reshaped(std::move(shape));
    return make_op(std::move(y), {a}, [](Node& n) {
        accumulate(n.inputs[0], n.grad.reshaped(n.inputs[0]->value.shape()));
    });
}

/// Concatenates tensors along dim; all other dims must match.
inline Var concat(const std::vector<Var>& xs, int64_t dim) {
    OCCO_CHECK(!xs.empty(), "concat of nothing");
    const Shape& s0 = xs[0]->value.shape();
    if (dim < 0) dim += static_cast<int64_t>(s0.size());
    OCCO_CHECK(dim >= 0 && dim < static_cast<int64_t>(s0.size()), "concat dim out of range");
    Shape out = s0;
    out[static_cast<size_t>(dim)] = 0;
    for (const auto& x : xs) {
        const Shape& s = x->value.shape();
        OCCO_CHECK(s.size() == s0.size(), "concat rank mismatch");
        for (size_t d = 0; d < s.size(); ++d)
            OCCO_CHECK(static_cast<int64_t>(d) == dim || s[d] == s0[d],
                       "concat non-cat dim mismatch at dim ", d);
        out[static_cast<size_t>(dim)] += s[static_cast<size_t>(dim)];
    }
    int64_t outer = 1, inner = 1;
    for (int64_t d = 0; d < dim; ++d) outer *= s0[static_cast<size_t>(d)];
    for (size_t d = static_cast<size_t>(dim) + 1; d < s0.size(); ++d) inner *= s0[d];

    Tensor y(out);
    int64_t total_cat = out[static_cast<size_t>(dim)];
    int64_t offset = 0;
    std::vector<int64_t> lens;
    for (const auto& x : xs) {
        int64_t len = x->value.size(dim);
        lens.push_back(len);
        for (int64_t o = 0; o < outer; ++o) {
            const double* src = x->value.ptr() + o * len * inner;
            double* dst = y.ptr() + (o * total_cat + offset) * inner;
            std::copy(src, src + len * inner, dst);
        }
        offset += len;
    }
    return make_op(std::move(y), xs, [outer, inner, total_cat, lens](Node& n) {
        int64_t off = 0;
        for (size_t k = 0; k < n.inputs.size(); ++k) {
            int64_t len = lens[k];
            if (n.inputs[k]->requires_grad) {
                Tensor g(n.inputs[k]->value.shape());
                for (int64_t o = 0; o < outer; ++o) {
                    const double* src = n.grad.ptr() + (o * total_cat + off) * inner;
                    std::copy(src, src + len * inner, g.ptr() + o * len * inner);
                }
                accumulate(n.inputs[k], g);
            }
            off += len;
        }
    });
}

/// Slices [start, start+len) along dim.
inline Var slice(const Var& a, int64_t dim, int64_t start, int64_t len) {
    const Shape& s = a->value.shape();
    if (dim < 0) dim += static_cast<int64_t>(s.size());
    OCCO_CHECK(dim >= 0 && dim < static_cast<int64_t>(s.size()), "slice dim out of range");
    int64_t D = s[static_cast<size_t>(dim)];
    OCCO_CHECK(start >= 0 && len > 0 && start + len <= D, "slice [", start, ",", start + len,
               ") out of range for dim of size ", D);
    int64_t outer = 1, inner = 1;
    for (int64_t d = 0; d < dim; ++d) outer *= s[static_cast<size_t>(d)];
    for (size_t d = static_cast<size_t>(dim) + 1; d < s.size(); ++d) inner *= s[d];

    Shape out = s;
    out[static_cast<size_t>(dim)] = len;
    Tensor y(out);
    for (int64_t o = 0; o < outer; ++o) {
        const double* src = a->value.ptr() + (o * D + start) * inner;
        std::copy(src, src + len * inner, y.ptr() + o * len * inner);
    }
    return make_op(std::move(y), {a}, [outer, inner, D, start, len](Node& n) {
        Tensor g = Tensor::zeros(n.inputs[0]->value.shape());
        for (int64_t o = 0; o < outer; ++o) {
            const double* src = n.grad.ptr() + o * len * inner;
            std::copy(src, src + len * inner, g.ptr() + (o * D + start) * inner);
        }
        accumulate(n.inputs[0], g);
    });
}

// ------------------------------------------------------------ 4-D broadcasts

/// y[b,c,h,w] = x[b,c,h,w] * w[b,c] with x (B,C,H,W), w (B,C).
inline Var scale_channels(const Var& x, const Var& w) {
    OCCO_CHECK(x->value.ndim() == 4 && w->value.ndim() == 2 && w->value.size(0) == x->value.size(0) &&
                   w->value.size(1) == x->value.size(1),
               "scale_channels shape mismatch ", shape_str(x->value.shape()), " vs ",
               shape_str(w->value.shape()));
    int64_t B = x->value.size(0), C = x->value.size(1), HW = x->value.size(2) * x->value.size(3);
    Tensor y = x->value.clone();
    for (int64_t b = 0; b < B; ++b)
        for (int64_t c = 0; c < C; ++c) {
            double s = w->value.at(b, c);
            double* p = y.ptr() + (b * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) p[i] *= s;
        }
    return make_op(std::move(y), {x, w}, [B, C, HW](Node& n) {
        if (n.inputs[0]->requires_grad) {
            Tensor g = n.grad.clone();
            for (int64_t b = 0; b < B; ++b)
                for (int64_t c = 0; c < C; ++c) {
                    double s = n.inputs[1]->value.at(b, c);
                    double* p = g.ptr() + (b * C + c) * HW;
                    for (int64_t i = 0; i < HW; ++i) p[i] *= s;
                }
            accumulate(n.inputs[0], g);
        }
        if (n.inputs[1]->requires_grad) {
            Tensor gw({B, C});
            for (int64_t b = 0; b < B; ++b)
                for (int64_t c = 0; c < C; ++c) {
                    const double* gp = n.grad.ptr() + (b * C + c) * HW;
                    const double* xp = n.inputs[0]->value.ptr() + (b * C + c) * HW;
                    double s = 0.0;
                    for (int64_t i = 0; i < HW; ++i) s += gp[i] * xp[i];
                    gw.at(b, c) = s;
                }
            accumulate(n.inputs[1], gw);
        }
    });
}

/// y[b,c,h,w] = x[b,c,h,w] * a[b,0,h,w] with x (B,C,H,W), a (B,1,H,W).
inline Var scale_spatial(const Var& x, const Var& a) {
    OCCO_CHECK(x->value.ndim() == 4 && a->value.ndim() == 4 && a->value.size(0) == x->value.size(0) &&
                   a->value.size(1) == 1 && a->value.size(2) == x->value.size(2) &&
                   a->value.size(3) == x->value.size(3),
               "scale_spatial shape mismatch ", shape_str(x->value.shape()), " vs ",
               shape_str(a->value.shape()));
    int64_t B = x->value.size(0), C = x->value.size(1), HW = x->value.size(2) * x->value.size(3);
    Tensor y = x->value.clone();
    for (int64_t b = 0; b < B; ++b) {
        const double* ap = a->value.ptr() + b * HW;
        for (int64_t c = 0; c < C; ++c) {
            double* p = y.ptr() + (b * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) p[i] *= ap[i];
        }
    }
    return make_op(std::move(y), {x, a}, [B, C, HW](Node& n) {
        if (n.inputs[0]->requires_grad) {
            Tensor g = n.grad.clone();
            for (int64_t b = 0; b < B; ++b) {
                const double* ap = n.inputs[1]->value.ptr() + b * HW;
                for (int64_t c = 0; c < C; ++c) {
                    double* p = g.ptr() + (b * C + c) * HW;
                    for (int64_t i = 0; i < HW; ++i) p[i] *= ap[i];
                }
            }
            accumulate(n.inputs[0], g);
        }
        if (n.inputs[1]->requires_grad) {
            Tensor ga(n.inputs[1]->value.shape());
            for (int64_t b = 0; b < B; ++b) {
                double* gp = ga.ptr() + b * HW;
                for (int64_t c = 0; c < C; ++c) {
                    const double* g0 = n.grad.ptr() + (b * C + c) * HW;
                    const double* xp = n.inputs[0]->value.ptr() + (b * C + c) * HW;
                    for (int64_t i = 0; i < HW; ++i) gp[i] += g0[i] * xp[i];
                }
            }
            accumulate(n.inputs[1], ga);
        }
    });
}

} // namespace ops
} // namespace occo
