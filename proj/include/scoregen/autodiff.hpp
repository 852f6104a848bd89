#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "scoregen/common.hpp"
#include "scoregen/tensor.hpp"

namespace scoregen::ad {

// Define-by-run reverse-mode graph over Tensor. Every op builds a node whose
// backward closure scatters the node's gradient into its parents. The trainer
// builds a fresh graph per step; nothing here is thread-aware by design
// (single-writer training loop).

struct Node;
using Var = std::shared_ptr<Node>;

struct Node {
    Tensor val;
    Tensor grad;  // allocated lazily
    bool requires_grad = false;
    std::vector<Var> parents;
    // Takes the node itself so closures never capture their own shared_ptr.
    std::function<void(Node&)> back;

    void ensure_grad() {
        if (grad.v.empty()) grad = Tensor(val.shape);
    }
};

inline Var leaf(Tensor value, bool requires_grad = false) {
    auto n = std::make_shared<Node>();
    n->val = std::move(value);
    n->requires_grad = requires_grad;
    return n;
}

inline Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> back) {
    auto n = std::make_shared<Node>();
    n->val = std::move(value);
    n->parents = std::move(parents);
    for (const auto& p : n->parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) n->back = std::move(back);
    return n;
}

// ---- elementwise -----------------------------------------------------------

inline Var add(const Var& a, const Var& b) {
    require(a->val.same_shape(b->val), Errc::ShapeMismatch,
            "add " + a->val.shape_str() + " vs " + b->val.shape_str());
    Tensor out = a->val;
    for (long i = 0; i < out.numel(); ++i) out.v[i] += b->val.v[i];
    return make_node(std::move(out), {a, b}, [](Node& n) {
        for (int k = 0; k < 2; ++k) {
            auto& p = n.parents[k];
            if (!p->requires_grad) continue;
            p->ensure_grad();
            for (long i = 0; i < n.grad.numel(); ++i) p->grad.v[i] += n.grad.v[i];
        }
    });
}

inline Var sub(const Var& a, const Var& b) {
    require(a->val.same_shape(b->val), Errc::ShapeMismatch,
            "sub " + a->val.shape_str() + " vs " + b->val.shape_str());
    Tensor out = a->val;
    for (long i = 0; i < out.numel(); ++i) out.v[i] -= b->val.v[i];
    return make_node(std::move(out), {a, b}, [](Node& n) {
        if (n.parents[0]->requires_grad) {
            n.parents[0]->ensure_grad();
            for (long i = 0; i < n.grad.numel(); ++i) n.parents[0]->grad.v[i] += n.grad.v[i];
        }
        if (n.parents[1]->requires_grad) {
            n.parents[1]->ensure_grad();
            for (long i = 0; i < n.grad.numel(); ++i) n.parents[1]->grad.v[i] -= n.grad.v[i];
        }
    });
}

inline Var mul(const Var& a, const Var& b) {
    require(a->val.same_shape(b->val), Errc::ShapeMismatch,
            "mul " + a->val.shape_str() + " vs " + b->val.shape_str());
    Tensor out = a->val;
    for (long i = 0; i < out.numel(); ++i) out.v[i] *= b->val.v[i];
    return make_node(std::move(out), {a, b}, [](Node& n) {
        auto& pa = n.parents[0];
        auto& pb = n.parents[1];
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (long i = 0; i < n.grad.numel(); ++i) pa->grad.v[i] += n.grad.v[i] * pb->val.v[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (long i = 0; i < n.grad.numel(); ++i) pb->grad.v[i] += n.grad.v[i] * pa->val.v[i];
        }
    });
}

// y = k*x + c
inline Var affine(const Var& a, double k, double c) {
    Tensor out = a->val;
    for (long i = 0; i < out.numel(); ++i) out.v[i] = k * out.v[i] + c;
    return make_node(std::move(out), {a}, [k](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        for (long i = 0; i < n.grad.numel(); ++i) p->grad.v[i] += k * n.grad.v[i];
    });
}

inline Var neg(const Var& a) { return affine(a, -1.0, 0.0); }
inline Var scale(const Var& a, double k) { return affine(a, k, 0.0); }

inline Var clamp(const Var& a, double lo, double hi) {
    Tensor out = a->val;
    for (long i = 0; i < out.numel(); ++i) out.v[i] = std::clamp(out.v[i], lo, hi);
    return make_node(std::move(out), {a}, [lo, hi](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        for (long i = 0; i < n.grad.numel(); ++i)
            if (p->val.v[i] >= lo && p->val.v[i] <= hi) p->grad.v[i] += n.grad.v[i];
    });
}

// natural log; inputs must be positive (clamp first)
inline Var log_op(const Var& a) {
    Tensor out = a->val;
    for (long i = 0; i < out.numel(); ++i) out.v[i] = std::log(out.v[i]);
    return make_node(std::move(out), {a}, [](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        for (long i = 0; i < n.grad.numel(); ++i) p->grad.v[i] += n.grad.v[i] / p->val.v[i];
    });
}

inline Var abs_op(const Var& a) {
    Tensor out = a->val;
    for (long i = 0; i < out.numel(); ++i) out.v[i] = std::fabs(out.v[i]);
    return make_node(std::move(out), {a}, [](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        for (long i = 0; i < n.grad.numel(); ++i) {
            double s = p->val.v[i] > 0 ? 1.0 : (p->val.v[i] < 0 ? -1.0 : 0.0);
            p->grad.v[i] += s * n.grad.v[i];
        }
    });
}

// ---- activations -----------------------------------------------------------

inline Var leaky_relu(const Var& a, double slope = 0.2) {
    Tensor out = a->val;
    for (long i = 0; i < out.numel(); ++i)
        if (out.v[i] < 0) out.v[i] *= slope;
    return make_node(std::move(out), {a}, [slope](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        for (long i = 0; i < n.grad.numel(); ++i)
            p->grad.v[i] += (p->val.v[i] >= 0 ? 1.0 : slope) * n.grad.v[i];
    });
}

inline Var relu(const Var& a) { return leaky_relu(a, 0.0); }

inline Var sigmoid(const Var& a) {
    Tensor out = a->val;
    for (long i = 0; i < out.numel(); ++i) out.v[i] = 1.0 / (1.0 + std::exp(-out.v[i]));
    return make_node(std::move(out), {a}, [](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        for (long i = 0; i < n.grad.numel(); ++i) {
            double y = n.val.v[i];
            p->grad.v[i] += y * (1.0 - y) * n.grad.v[i];
        }
    });
}

// rows of {N,D} become probability distributions
inline Var softmax_rows(const Var& a) {
    require(a->val.shape.size() == 2, Errc::ShapeMismatch, "softmax expects {N,D}");
    Tensor out = a->val;
    const int N = out.shape[0], D = out.shape[1];
    for (int r = 0; r < N; ++r) {
        double mx = out.at2(r, 0);
        for (int d = 1; d < D; ++d) mx = std::max(mx, out.at2(r, d));
        double sum = 0.0;
        for (int d = 0; d < D; ++d) {
            double e = std::exp(out.at2(r, d) - mx);
            out.at2(r, d) = e;
            sum += e;
        }
        for (int d = 0; d < D; ++d) out.at2(r, d) /= sum;
    }
    return make_node(std::move(out), {a}, [](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        const int N = n.val.shape[0], D = n.val.shape[1];
        for (int r = 0; r < N; ++r) {
            double dot = 0.0;
            for (int d = 0; d < D; ++d) dot += n.grad.at2(r, d) * n.val.at2(r, d);
            for (int d = 0; d < D; ++d)
                p->grad.at2(r, d) += (n.grad.at2(r, d) - dot) * n.val.at2(r, d);
        }
    });
}

// ---- shape ------------------------------------------------------------------

inline Var reshape(const Var& a, std::vector<int> shape) {
    require(Tensor::numel_of(shape) == a->val.numel(), Errc::ShapeMismatch,
            "reshape numel mismatch");
    Tensor out(std::move(shape), a->val.v);
    return make_node(std::move(out), {a}, [](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        for (long i = 0; i < n.grad.numel(); ++i) p->grad.v[i] += n.grad.v[i];
    });
}

inline Var concat_rows(const Var& a, const Var& b) {
    require(a->val.shape.size() == 2 && b->val.shape.size() == 2 &&
                a->val.shape[0] == b->val.shape[0],
            Errc::ShapeMismatch, "concat_rows expects {N,A} and {N,B}");
    const int N = a->val.shape[0], A = a->val.shape[1], B = b->val.shape[1];
    Tensor out({N, A + B});
    for (int r = 0; r < N; ++r) {
        for (int i = 0; i < A; ++i) out.at2(r, i) = a->val.at2(r, i);
        for (int i = 0; i < B; ++i) out.at2(r, A + i) = b->val.at2(r, i);
    }
    return make_node(std::move(out), {a, b}, [A, B](Node& n) {
        const int N = n.val.shape[0];
        auto& pa = n.parents[0];
        auto& pb = n.parents[1];
        if (pa->requires_grad) {
            pa->ensure_grad();
            for (int r = 0; r < N; ++r)
                for (int i = 0; i < A; ++i) pa->grad.at2(r, i) += n.grad.at2(r, i);
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (int r = 0; r < N; ++r)
                for (int i = 0; i < B; ++i) pb->grad.at2(r, i) += n.grad.at2(r, A + i);
        }
    });
}

// ---- linear algebra ---------------------------------------------------------

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

// {N,K} x {K,M} -> {N,M}
inline Var matmul(const Var& a, const Var& b) {
    require(a->val.shape.size() == 2 && b->val.shape.size() == 2 &&
                a->val.shape[1] == b->val.shape[0],
            Errc::ShapeMismatch,
            "matmul " + a->val.shape_str() + " x " + b->val.shape_str());
    const int N = a->val.shape[0], K = a->val.shape[1], M = b->val.shape[1];
    Tensor out({N, M});
    CMapMat A(a->val.v.data(), N, K), B(b->val.v.data(), K, M);
    MapMat(out.v.data(), N, M).noalias() = A * B;
    return make_node(std::move(out), {a, b}, [N, K, M](Node& n) {
        auto& pa = n.parents[0];
        auto& pb = n.parents[1];
        CMapMat dY(n.grad.v.data(), N, M);
        if (pa->requires_grad) {
            pa->ensure_grad();
            CMapMat B(pb->val.v.data(), K, M);
            MapMat(pa->grad.v.data(), N, K).noalias() += dY * B.transpose();
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            CMapMat A(pa->val.v.data(), N, K);
            MapMat(pb->grad.v.data(), K, M).noalias() += A.transpose() * dY;
        }
    });
}

// {N,D} + {D}
inline Var add_bias_rows(const Var& x, const Var& b) {
    require(x->val.shape.size() == 2 && b->val.shape.size() == 1 &&
                x->val.shape[1] == b->val.shape[0],
            Errc::ShapeMismatch, "add_bias_rows shape");
    Tensor out = x->val;
    const int N = out.shape[0], D = out.shape[1];
    for (int r = 0; r < N; ++r)
        for (int d = 0; d < D; ++d) out.at2(r, d) += b->val.v[d];
    return make_node(std::move(out), {x, b}, [](Node& n) {
        auto& px = n.parents[0];
        auto& pb = n.parents[1];
        const int N = n.val.shape[0], D = n.val.shape[1];
        if (px->requires_grad) {
            px->ensure_grad();
            for (long i = 0; i < n.grad.numel(); ++i) px->grad.v[i] += n.grad.v[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (int r = 0; r < N; ++r)
                for (int d = 0; d < D; ++d) pb->grad.v[d] += n.grad.at2(r, d);
        }
    });
}

// {N,C,H,W} + {C}
inline Var add_bias_nchw(const Var& x, const Var& b) {
    require(x->val.shape.size() == 4 && b->val.shape.size() == 1 &&
                x->val.shape[1] == b->val.shape[0],
            Errc::ShapeMismatch, "add_bias_nchw shape");
    Tensor out = x->val;
    const int N = out.shape[0], C = out.shape[1], HW = out.shape[2] * out.shape[3];
    for (int n0 = 0; n0 < N; ++n0)
        for (int c = 0; c < C; ++c) {
            double bc = b->val.v[c];
            double* p = &out.v[(static_cast<std::size_t>(n0) * C + c) * HW];
            for (int i = 0; i < HW; ++i) p[i] += bc;
        }
    return make_node(std::move(out), {x, b}, [](Node& n) {
        auto& px = n.parents[0];
        auto& pb = n.parents[1];
        const int N = n.val.shape[0], C = n.val.shape[1], HW = n.val.shape[2] * n.val.shape[3];
        if (px->requires_grad) {
            px->ensure_grad();
            for (long i = 0; i < n.grad.numel(); ++i) px->grad.v[i] += n.grad.v[i];
        }
        if (pb->requires_grad) {
            pb->ensure_grad();
            for (int n0 = 0; n0 < N; ++n0)
                for (int c = 0; c < C; ++c) {
                    const double* g = &n.grad.v[(static_cast<std::size_t>(n0) * C + c) * HW];
                    double s = 0.0;
                    for (int i = 0; i < HW; ++i) s += g[i];
                    pb->grad.v[c] += s;
                }
        }
    });
}

// ---- convolution ------------------------------------------------------------

namespace detail {

inline void im2col(const double* x, int C, int H, int W, int kh, int kw, int stride, int pad,
                   int Ho, int Wo, double* cols) {
    // cols is {C*kh*kw, Ho*Wo}
    const int L = Ho * Wo;
    for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                double* row = cols + (static_cast<std::size_t>(c) * kh * kw + ky * kw + kx) * L;
                for (int oy = 0; oy < Ho; ++oy) {
                    int iy = oy * stride - pad + ky;
                    for (int ox = 0; ox < Wo; ++ox) {
                        int ix = ox * stride - pad + kx;
                        row[oy * Wo + ox] =
                            (iy >= 0 && iy < H && ix >= 0 && ix < W)
                                ? x[(static_cast<std::size_t>(c) * H + iy) * W + ix]
                                : 0.0;
                    }
                }
            }
        }
    }
}

inline void col2im_add(const double* cols, int C, int H, int W, int kh, int kw, int stride,
                       int pad, int Ho, int Wo, double* dx) {
    const int L = Ho * Wo;
    for (int c = 0; c < C; ++c) {
        for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
                const double* row = cols + (static_cast<std::size_t>(c) * kh * kw + ky * kw + kx) * L;
                for (int oy = 0; oy < Ho; ++oy) {
                    int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= H) continue;
                    for (int ox = 0; ox < Wo; ++ox) {
                        int ix = ox * stride - pad + kx;
                        if (ix < 0 || ix >= W) continue;
                        dx[(static_cast<std::size_t>(c) * H + iy) * W + ix] += row[oy * Wo + ox];
                    }
                }
            }
        }
    }
}

}  // namespace detail

// x {N,C,H,W}, w {F,C,kh,kw} -> {N,F,Ho,Wo}
inline Var conv2d(const Var& x, const Var& w, int stride = 1, int pad = 1) {
    require(x->val.shape.size() == 4 && w->val.shape.size() == 4 &&
                x->val.shape[1] == w->val.shape[1],
            Errc::ShapeMismatch,
            "conv2d " + x->val.shape_str() + " with " + w->val.shape_str());
    const int N = x->val.shape[0], C = x->val.shape[1], H = x->val.shape[2], W = x->val.shape[3];
    const int F = w->val.shape[0], kh = w->val.shape[2], kw = w->val.shape[3];
    const int Ho = (H + 2 * pad - kh) / stride + 1;
    const int Wo = (W + 2 * pad - kw) / stride + 1;
    require(Ho > 0 && Wo > 0, Errc::ShapeMismatch, "conv2d output would be empty");
    const int K = C * kh * kw, L = Ho * Wo;

    Tensor out({N, F, Ho, Wo});
    auto cols_cache = std::make_shared<std::vector<double>>(
        static_cast<std::size_t>(N) * K * L);
    CMapMat Wm(w->val.v.data(), F, K);
    for (int n0 = 0; n0 < N; ++n0) {
        double* cols = cols_cache->data() + static_cast<std::size_t>(n0) * K * L;
        detail::im2col(&x->val.v[static_cast<std::size_t>(n0) * C * H * W], C, H, W, kh, kw,
                       stride, pad, Ho, Wo, cols);
        MapMat(&out.v[static_cast<std::size_t>(n0) * F * L], F, L).noalias() =
            Wm * CMapMat(cols, K, L);
    }

    return make_node(std::move(out), {x, w},
                     [N, C, H, W, F, kh, kw, stride, pad, Ho, Wo, K, L, cols_cache](Node& n) {
        auto& px = n.parents[0];
        auto& pw = n.parents[1];
        if (pw->requires_grad) pw->ensure_grad();
        if (px->requires_grad) px->ensure_grad();
        std::vector<double> dcols(static_cast<std::size_t>(K) * L);
        for (int n0 = 0; n0 < N; ++n0) {
            CMapMat dY(&n.grad.v[static_cast<std::size_t>(n0) * F * L], F, L);
            const double* cols = cols_cache->data() + static_cast<std::size_t>(n0) * K * L;
            if (pw->requires_grad)
                MapMat(pw->grad.v.data(), F, K).noalias() += dY * CMapMat(cols, K, L).transpose();
            if (px->requires_grad) {
                CMapMat Wm(pw->val.v.data(), F, K);
                MapMat(dcols.data(), K, L).noalias() = Wm.transpose() * dY;
                detail::col2im_add(dcols.data(), C, H, W, kh, kw, stride, pad, Ho, Wo,
                                   &px->grad.v[static_cast<std::size_t>(n0) * C * H * W]);
            }
        }
    });
}

// ---- pooling / resampling ---------------------------------------------------

inline Var avg_pool2(const Var& x) {
    require(x->val.shape.size() == 4, Errc::ShapeMismatch, "avg_pool2 expects {N,C,H,W}");
    const int N = x->val.shape[0], C = x->val.shape[1], H = x->val.shape[2], W = x->val.shape[3];
    const int Ho = H / 2, Wo = W / 2;
    require(Ho > 0 && Wo > 0, Errc::ShapeMismatch, "avg_pool2 on degenerate spatial size");
    Tensor out({N, C, Ho, Wo});
    for (int n0 = 0; n0 < N; ++n0)
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < Ho; ++y)
                for (int xx = 0; xx < Wo; ++xx)
                    out.at4(n0, c, y, xx) =
                        0.25 * (x->val.at4(n0, c, 2 * y, 2 * xx) + x->val.at4(n0, c, 2 * y, 2 * xx + 1) +
                                x->val.at4(n0, c, 2 * y + 1, 2 * xx) + x->val.at4(n0, c, 2 * y + 1, 2 * xx + 1));
    return make_node(std::move(out), {x}, [](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        const int N = n.val.shape[0], C = n.val.shape[1], Ho = n.val.shape[2], Wo = n.val.shape[3];
        for (int n0 = 0; n0 < N; ++n0)
            for (int c = 0; c < C; ++c)
                for (int y = 0; y < Ho; ++y)
                    for (int xx = 0; xx < Wo; ++xx) {
                        double g = 0.25 * n.grad.at4(n0, c, y, xx);
                        p->grad.at4(n0, c, 2 * y, 2 * xx) += g;
                        p->grad.at4(n0, c, 2 * y, 2 * xx + 1) += g;
                        p->grad.at4(n0, c, 2 * y + 1, 2 * xx) += g;
                        p->grad.at4(n0, c, 2 * y + 1, 2 * xx + 1) += g;
                    }
    });
}

inline Var max_pool2(const Var& x) {
    require(x->val.shape.size() == 4, Errc::ShapeMismatch, "max_pool2 expects {N,C,H,W}");
    const int N = x->val.shape[0], C = x->val.shape[1], H = x->val.shape[2], W = x->val.shape[3];
    const int Ho = H / 2, Wo = W / 2;
    require(Ho > 0 && Wo > 0, Errc::ShapeMismatch, "max_pool2 on degenerate spatial size");
    Tensor out({N, C, Ho, Wo});
    auto argmax = std::make_shared<std::vector<int>>(out.numel());
    std::size_t k = 0;
    for (int n0 = 0; n0 < N; ++n0)
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < Ho; ++y)
                for (int xx = 0; xx < Wo; ++xx, ++k) {
                    int best = 0;
                    double bv = x->val.at4(n0, c, 2 * y, 2 * xx);
                    const int dy[4] = {0, 0, 1, 1}, dx[4] = {0, 1, 0, 1};
                    for (int i = 1; i < 4; ++i) {
                        double v = x->val.at4(n0, c, 2 * y + dy[i], 2 * xx + dx[i]);
                        if (v > bv) {  // first occurrence wins ties
                            bv = v;
                            best = i;
                        }
                    }
                    out.v[k] = bv;
                    (*argmax)[k] = best;
                }
    return make_node(std::move(out), {x}, [argmax](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        const int N = n.val.shape[0], C = n.val.shape[1], Ho = n.val.shape[2], Wo = n.val.shape[3];
        const int dy[4] = {0, 0, 1, 1}, dx[4] = {0, 1, 0, 1};
        std::size_t k = 0;
        for (int n0 = 0; n0 < N; ++n0)
            for (int c = 0; c < C; ++c)
                for (int y = 0; y < Ho; ++y)
                    for (int xx = 0; xx < Wo; ++xx, ++k) {
                        int b = (*argmax)[k];
                        p->grad.at4(n0, c, 2 * y + dy[b], 2 * xx + dx[b]) += n.grad.v[k];
                    }
    });
}

inline Var global_avg_pool(const Var& x) {
    require(x->val.shape.size() == 4, Errc::ShapeMismatch, "global_avg_pool expects {N,C,H,W}");
    const int N = x->val.shape[0], C = x->val.shape[1], HW = x->val.shape[2] * x->val.shape[3];
    Tensor out({N, C});
    for (int n0 = 0; n0 < N; ++n0)
        for (int c = 0; c < C; ++c) {
            const double* p = &x->val.v[(static_cast<std::size_t>(n0) * C + c) * HW];
            double s = 0.0;
            for (int i = 0; i < HW; ++i) s += p[i];
            out.at2(n0, c) = s / HW;
        }
    return make_node(std::move(out), {x}, [HW](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        const int N = n.val.shape[0], C = n.val.shape[1];
        for (int n0 = 0; n0 < N; ++n0)
            for (int c = 0; c < C; ++c) {
                double g = n.grad.at2(n0, c) / HW;
                double* d = &p->grad.v[(static_cast<std::size_t>(n0) * C + c) * HW];
                for (int i = 0; i < HW; ++i) d[i] += g;
            }
    });
}

inline Var upsample_nearest2(const Var& x) {
    require(x->val.shape.size() == 4, Errc::ShapeMismatch, "upsample expects {N,C,H,W}");
    const int N = x->val.shape[0], C = x->val.shape[1], H = x->val.shape[2], W = x->val.shape[3];
    Tensor out({N, C, 2 * H, 2 * W});
    for (int n0 = 0; n0 < N; ++n0)
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < 2 * H; ++y)
                for (int xx = 0; xx < 2 * W; ++xx)
                    out.at4(n0, c, y, xx) = x->val.at4(n0, c, y / 2, xx / 2);
    return make_node(std::move(out), {x}, [](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        const int N = n.val.shape[0], C = n.val.shape[1], H2 = n.val.shape[2], W2 = n.val.shape[3];
        for (int n0 = 0; n0 < N; ++n0)
            for (int c = 0; c < C; ++c)
                for (int y = 0; y < H2; ++y)
                    for (int xx = 0; xx < W2; ++xx)
                        p->grad.at4(n0, c, y / 2, xx / 2) += n.grad.at4(n0, c, y, xx);
    });
}

// ---- batch normalization ----------------------------------------------------

// Spatial batch norm over {N,C,H,W}. Running stats are plain tensors owned by
// the caller and updated in-place during training (unbiased variance, torch
// convention); they are not differentiated through.
inline Var batch_norm(const Var& x, const Var& gamma, const Var& beta, Tensor& running_mean,
                      Tensor& running_var, bool training, double momentum = 0.1,
                      double eps = 1e-5) {
    require(x->val.shape.size() == 4, Errc::ShapeMismatch, "batch_norm expects {N,C,H,W}");
    const int N = x->val.shape[0], C = x->val.shape[1], H = x->val.shape[2], W = x->val.shape[3];
    require(gamma->val.numel() == C && beta->val.numel() == C && running_mean.numel() == C &&
                running_var.numel() == C,
            Errc::ShapeMismatch, "batch_norm channel mismatch");
    const long m = static_cast<long>(N) * H * W;
    auto mean = std::make_shared<std::vector<double>>(C, 0.0);
    auto invstd = std::make_shared<std::vector<double>>(C, 0.0);

    if (training) {
        require(m > 1, Errc::BatchTooSmall, "batch_norm needs more than one element per channel");
        for (int c = 0; c < C; ++c) {
            double s = 0.0;
            for (int n0 = 0; n0 < N; ++n0)
                for (int y = 0; y < H; ++y)
                    for (int xx = 0; xx < W; ++xx) s += x->val.at4(n0, c, y, xx);
            double mu = s / m;
            double vs = 0.0;
            for (int n0 = 0; n0 < N; ++n0)
                for (int y = 0; y < H; ++y)
                    for (int xx = 0; xx < W; ++xx) {
                        double d = x->val.at4(n0, c, y, xx) - mu;
                        vs += d * d;
                    }
            double var_b = vs / m;
            (*mean)[c] = mu;
            (*invstd)[c] = 1.0 / std::sqrt(var_b + eps);
            running_mean.v[c] = (1 - momentum) * running_mean.v[c] + momentum * mu;
            running_var.v[c] = (1 - momentum) * running_var.v[c] + momentum * (vs / (m - 1));
        }
    } else {
        for (int c = 0; c < C; ++c) {
            (*mean)[c] = running_mean.v[c];
            (*invstd)[c] = 1.0 / std::sqrt(running_var.v[c] + eps);
        }
    }

    Tensor out({N, C, H, W});
    for (int n0 = 0; n0 < N; ++n0)
        for (int c = 0; c < C; ++c)
            for (int y = 0; y < H; ++y)
                for (int xx = 0; xx < W; ++xx)
                    out.at4(n0, c, y, xx) =
                        (x->val.at4(n0, c, y, xx) - (*mean)[c]) * (*invstd)[c] * gamma->val.v[c] +
                        beta->val.v[c];

    return make_node(std::move(out), {x, gamma, beta},
                     [mean, invstd, training, m](Node& n) {
        auto& px = n.parents[0];
        auto& pg = n.parents[1];
        auto& pb = n.parents[2];
        const int N = n.val.shape[0], C = n.val.shape[1], H = n.val.shape[2], W = n.val.shape[3];
        for (int c = 0; c < C; ++c) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (int n0 = 0; n0 < N; ++n0)
                for (int y = 0; y < H; ++y)
                    for (int xx = 0; xx < W; ++xx) {
                        double dy = n.grad.at4(n0, c, y, xx);
                        double xhat = (px->val.at4(n0, c, y, xx) - (*mean)[c]) * (*invstd)[c];
                        sum_dy += dy;
                        sum_dy_xhat += dy * xhat;
                    }
            if (pg->requires_grad) {
                pg->ensure_grad();
                pg->grad.v[c] += sum_dy_xhat;
            }
            if (pb->requires_grad) {
                pb->ensure_grad();
                pb->grad.v[c] += sum_dy;
            }
            if (px->requires_grad) {
                px->ensure_grad();
                double g = pg->val.v[c];
                for (int n0 = 0; n0 < N; ++n0)
                    for (int y = 0; y < H; ++y)
                        for (int xx = 0; xx < W; ++xx) {
                            double dy = n.grad.at4(n0, c, y, xx);
                            double xhat =
                                (px->val.at4(n0, c, y, xx) - (*mean)[c]) * (*invstd)[c];
                            double dx;
                            if (training)
                                dx = g * (*invstd)[c] *
                                     (dy - sum_dy / m - xhat * sum_dy_xhat / m);
                            else
                                dx = g * (*invstd)[c] * dy;
                            px->grad.at4(n0, c, y, xx) += dx;
                        }
            }
        }
    });
}

// ---- reductions -------------------------------------------------------------

inline Var mean_all(const Var& x) {
    Tensor out({1});
    double s = 0.0;
    for (double v : x->val.v) s += v;
    const long n = x->val.numel();
    out.v[0] = s / n;
    return make_node(std::move(out), {x}, [n](Node& nd) {
        auto& p = nd.parents[0];
        p->ensure_grad();
        double g = nd.grad.v[0] / n;
        for (long i = 0; i < p->grad.numel(); ++i) p->grad.v[i] += g;
    });
}

inline Var sum_all(const Var& x) {
    Tensor out({1});
    double s = 0.0;
    for (double v : x->val.v) s += v;
    out.v[0] = s;
    return make_node(std::move(out), {x}, [](Node& nd) {
        auto& p = nd.parents[0];
        p->ensure_grad();
        for (long i = 0; i < p->grad.numel(); ++i) p->grad.v[i] += nd.grad.v[0];
    });
}

inline Var add_scalars(const std::vector<Var>& terms) {
    require(!terms.empty(), Errc::ShapeMismatch, "add_scalars of nothing");
    Var acc = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) acc = add(acc, terms[i]);
    return acc;
}

// Mean over `pairs` of the per-element mean absolute difference between the
// paired leading-dimension slices of x.
inline Var pairwise_l1_mean(const Var& x, const std::vector<std::pair<int, int>>& pairs) {
    require(!x->val.shape.empty() && !pairs.empty(), Errc::BatchTooSmall, "pairwise_l1_mean");
    const int N = x->val.shape[0];
    const long M = x->val.numel() / N;
    double total = 0.0;
    for (auto [i, j] : pairs) {
        const double* a = &x->val.v[static_cast<std::size_t>(i) * M];
        const double* b = &x->val.v[static_cast<std::size_t>(j) * M];
        double s = 0.0;
        for (long k = 0; k < M; ++k) s += std::fabs(a[k] - b[k]);
        total += s / M;
    }
    Tensor out({1});
    out.v[0] = total / pairs.size();
    auto pairs_copy = std::make_shared<std::vector<std::pair<int, int>>>(pairs);
    return make_node(std::move(out), {x}, [pairs_copy, M](Node& n) {
        auto& p = n.parents[0];
        p->ensure_grad();
        const double scale = n.grad.v[0] / (pairs_copy->size() * static_cast<double>(M));
        for (auto [i, j] : *pairs_copy) {
            const double* a = &p->val.v[static_cast<std::size_t>(i) * M];
            const double* b = &p->val.v[static_cast<std::size_t>(j) * M];
            double* da = &p->grad.v[static_cast<std::size_t>(i) * M];
            double* db = &p->grad.v[static_cast<std::size_t>(j) * M];
            for (long k = 0; k < M; ++k) {
                double d = a[k] - b[k];
                double s = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
                da[k] += scale * s;
                db[k] -= scale * s;
            }
        }
    });
}

// ---- backward driver --------------------------------------------------------

inline void backward(const Var& root) {
    require(root->val.numel() == 1, Errc::ShapeMismatch, "backward expects a scalar root");
    // topological order via iterative post-order DFS
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.push_back({root.get(), 0});
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* parent = node->parents[idx].get();
            ++idx;
            if (parent->requires_grad && !seen.count(parent)) {
                seen.insert(parent);
                stack.push_back({parent, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    root->ensure_grad();
    root->grad.v[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->requires_grad && n->back && !n->grad.v.empty()) n->back(*n);
    }
}

}  // namespace scoregen::ad
