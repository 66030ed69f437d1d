#ifndef WID_OPS_H
#define WID_OPS_H

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "wid/gemm.h"
#include "wid/graph.h"

// Differentiable operator set. All tensors are row-major; the last dimension
// is the feature/channel axis throughout.

namespace wid::ad {

template <typename T>
using Var = Node<T>*;

template <typename T>
Var<T> add(Tape<T>& tp, Var<T> a, Var<T> b) {
    assert(a->value.same_shape(b->value));
    Tensor<T> y{a->value.shape()};
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = a->value[i] + b->value[i];
    return tp.make(std::move(y), {a, b}, [](Node<T>* n) {
        auto *a = n->parents[0], *b = n->parents[1];
        if (a->requires_grad) {
            auto& ga = a->ensure_grad();
            for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += n->grad[i];
        }
        if (b->requires_grad) {
            auto& gb = b->ensure_grad();
            for (int64_t i = 0; i < gb.numel(); ++i) gb[i] += n->grad[i];
        }
    });
}

template <typename T>
Var<T> sub(Tape<T>& tp, Var<T> a, Var<T> b) {
    assert(a->value.same_shape(b->value));
    Tensor<T> y{a->value.shape()};
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = a->value[i] - b->value[i];
    return tp.make(std::move(y), {a, b}, [](Node<T>* n) {
        auto *a = n->parents[0], *b = n->parents[1];
        if (a->requires_grad) {
            auto& ga = a->ensure_grad();
            for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += n->grad[i];
        }
        if (b->requires_grad) {
            auto& gb = b->ensure_grad();
            for (int64_t i = 0; i < gb.numel(); ++i) gb[i] -= n->grad[i];
        }
    });
}

template <typename T>
Var<T> mul(Tape<T>& tp, Var<T> a, Var<T> b) {
    assert(a->value.same_shape(b->value));
    Tensor<T> y{a->value.shape()};
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = a->value[i] * b->value[i];
    return tp.make(std::move(y), {a, b}, [](Node<T>* n) {
        auto *a = n->parents[0], *b = n->parents[1];
        if (a->requires_grad) {
            auto& ga = a->ensure_grad();
            for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += n->grad[i] * b->value[i];
        }
        if (b->requires_grad) {
            auto& gb = b->ensure_grad();
            for (int64_t i = 0; i < gb.numel(); ++i) gb[i] += n->grad[i] * a->value[i];
        }
    });
}

template <typename T>
Var<T> scale(Tape<T>& tp, Var<T> a, T s) {
    Tensor<T> y{a->value.shape()};
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = a->value[i] * s;
    return tp.make(std::move(y), {a}, [s](Node<T>* n) {
        auto* a = n->parents[0];
        if (!a->requires_grad) return;
        auto& ga = a->ensure_grad();
        for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += n->grad[i] * s;
    });
}

// a: [rows..., C], v: [C] broadcast over leading dims
template <typename T>
Var<T> add_rowvec(Tape<T>& tp, Var<T> a, Var<T> v) {
    const int c = v->value.dim(0);
    const int64_t rows = a->value.numel() / c;
    Tensor<T> y{a->value.shape()};
    for (int64_t r = 0; r < rows; ++r)
        for (int j = 0; j < c; ++j) y[r * c + j] = a->value[r * c + j] + v->value[j];
    return tp.make(std::move(y), {a, v}, [rows, c](Node<T>* n) {
        auto *a = n->parents[0], *v = n->parents[1];
        if (a->requires_grad) {
            auto& ga = a->ensure_grad();
            for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += n->grad[i];
        }
        if (v->requires_grad) {
            auto& gv = v->ensure_grad();
            for (int64_t r = 0; r < rows; ++r)
                for (int j = 0; j < c; ++j) gv[j] += n->grad[r * c + j];
        }
    });
}

// a: [m,k] x b: [k,n] -> [m,n]
template <typename T>
Var<T> matmul(Tape<T>& tp, Var<T> a, Var<T> b) {
    assert(a->value.rank() == 2 && b->value.rank() == 2);
    const int m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(1);
    assert(b->value.dim(0) == k);
    Tensor<T> y{{m, n}};
    gemm_nn(m, k, n, a->value.data(), b->value.data(), y.data());
    return tp.make(std::move(y), {a, b}, [m, k, n](Node<T>* n_) {
        auto *a = n_->parents[0], *b = n_->parents[1];
        if (a->requires_grad)
            gemm_nt(m, n, k, n_->grad.data(), b->value.data(), a->ensure_grad().data());
        if (b->requires_grad)
            gemm_tn(k, m, n, a->value.data(), n_->grad.data(), b->ensure_grad().data());
    });
}

// a: [m,k] x b[n,k]^T -> [m,n]
template <typename T>
Var<T> matmul_nt(Tape<T>& tp, Var<T> a, Var<T> b) {
    assert(a->value.rank() == 2 && b->value.rank() == 2);
    const int m = a->value.dim(0), k = a->value.dim(1), n = b->value.dim(0);
    assert(b->value.dim(1) == k);
    Tensor<T> y{{m, n}};
    gemm_nt(m, k, n, a->value.data(), b->value.data(), y.data());
    return tp.make(std::move(y), {a, b}, [m, k, n](Node<T>* n_) {
        auto *a = n_->parents[0], *b = n_->parents[1];
        if (a->requires_grad)
            gemm_nn(m, n, k, n_->grad.data(), b->value.data(), a->ensure_grad().data());
        if (b->requires_grad)
            gemm_tn(n, m, k, n_->grad.data(), a->value.data(), b->ensure_grad().data());
    });
}

// a: [G,k,m]^T x b: [G,k,n] -> [G,m,n]
template <typename T>
Var<T> bmm_tn(Tape<T>& tp, Var<T> a, Var<T> b) {
    assert(a->value.rank() == 3 && b->value.rank() == 3);
    const int g = a->value.dim(0), k = a->value.dim(1), m = a->value.dim(2);
    const int n = b->value.dim(2);
    assert(b->value.dim(0) == g && b->value.dim(1) == k);
    Tensor<T> y{{g, m, n}};
    for (int i = 0; i < g; ++i)
        gemm_tn(m, k, n, a->value.data() + (int64_t)i * k * m,
                b->value.data() + (int64_t)i * k * n, y.data() + (int64_t)i * m * n);
    return tp.make(std::move(y), {a, b}, [g, m, k, n](Node<T>* n_) {
        auto *a = n_->parents[0], *b = n_->parents[1];
        for (int i = 0; i < g; ++i) {
            const T* dy = n_->grad.data() + (int64_t)i * m * n;
            if (a->requires_grad)  // dA[k,m] = B[k,n] * dY[m,n]^T
                gemm_nt(k, n, m, b->value.data() + (int64_t)i * k * n, dy,
                        a->ensure_grad().data() + (int64_t)i * k * m);
            if (b->requires_grad)  // dB[k,n] = A[k,m] * dY[m,n]
                gemm_nn(k, m, n, a->value.data() + (int64_t)i * k * m, dy,
                        b->ensure_grad().data() + (int64_t)i * k * n);
        }
    });
}

// a: [G,m,k] x b: [G,k,n] -> [G,m,n]; transB treats b as [G,n,k]
template <typename T>
Var<T> bmm(Tape<T>& tp, Var<T> a, Var<T> b, bool trans_b = false) {
    assert(a->value.rank() == 3 && b->value.rank() == 3);
    const int g = a->value.dim(0), m = a->value.dim(1), k = a->value.dim(2);
    const int n = trans_b ? b->value.dim(1) : b->value.dim(2);
    assert(b->value.dim(0) == g && (trans_b ? b->value.dim(2) : b->value.dim(1)) == k);
    Tensor<T> y{{g, m, n}};
    for (int i = 0; i < g; ++i) {
        const T* pa = a->value.data() + (int64_t)i * m * k;
        const T* pb = b->value.data() + (int64_t)i * (trans_b ? n * k : k * n);
        T* py = y.data() + (int64_t)i * m * n;
        if (trans_b)
            gemm_nt(m, k, n, pa, pb, py);
        else
            gemm_nn(m, k, n, pa, pb, py);
    }
    return tp.make(std::move(y), {a, b}, [g, m, k, n, trans_b](Node<T>* n_) {
        auto *a = n_->parents[0], *b = n_->parents[1];
        for (int i = 0; i < g; ++i) {
            const T* dy = n_->grad.data() + (int64_t)i * m * n;
            const T* pa = a->value.data() + (int64_t)i * m * k;
            const T* pb = b->value.data() + (int64_t)i * (trans_b ? n * k : k * n);
            if (a->requires_grad) {
                T* da = a->ensure_grad().data() + (int64_t)i * m * k;
                if (trans_b)
                    gemm_nn(m, n, k, dy, pb, da);  // dA = dY * B ([n,k])
                else
                    gemm_nt(m, n, k, dy, pb, da);  // dA = dY * B^T
            }
            if (b->requires_grad) {
                T* db = b->ensure_grad().data() + (int64_t)i * (trans_b ? n * k : k * n);
                if (trans_b)
                    gemm_tn(n, m, k, dy, pa, db);  // dB = dY^T * A
                else
                    gemm_tn(k, m, n, pa, dy, db);  // dB = A^T * dY
            }
        }
    });
}

template <typename T>
Var<T> relu(Tape<T>& tp, Var<T> a) {
    Tensor<T> y{a->value.shape()};
    // NaN propagates (x==x is false for NaN) so upstream numerical failures
    // reach the training loop's non-finite guard instead of clamping to 0
    for (int64_t i = 0; i < y.numel(); ++i) {
        const T x = a->value[i];
        y[i] = x > T(0) ? x : (x == x ? T(0) : x);
    }
    return tp.make(std::move(y), {a}, [](Node<T>* n) {
        auto* a = n->parents[0];
        if (!a->requires_grad) return;
        auto& ga = a->ensure_grad();
        for (int64_t i = 0; i < ga.numel(); ++i)
            if (n->value[i] > T(0)) ga[i] += n->grad[i];
    });
}

template <typename T>
Var<T> log_eps(Tape<T>& tp, Var<T> a, T eps) {
    Tensor<T> y{a->value.shape()};
    for (int64_t i = 0; i < y.numel(); ++i) y[i] = std::log(a->value[i] + eps);
    return tp.make(std::move(y), {a}, [eps](Node<T>* n) {
        auto* a = n->parents[0];
        if (!a->requires_grad) return;
        auto& ga = a->ensure_grad();
        for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += n->grad[i] / (a->value[i] + eps);
    });
}

// softmax over the last dimension
template <typename T>
Var<T> softmax_last(Tape<T>& tp, Var<T> a) {
    const int c = a->value.dim(a->value.rank() - 1);
    const int64_t rows = a->value.numel() / c;
    Tensor<T> y{a->value.shape()};
    for (int64_t r = 0; r < rows; ++r) {
        const T* x = a->value.data() + r * c;
        T* out = y.data() + r * c;
        T mx = x[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, x[j]);
        T sum = T(0);
        for (int j = 0; j < c; ++j) {
            out[j] = std::exp(x[j] - mx);
            sum += out[j];
        }
        for (int j = 0; j < c; ++j) out[j] /= sum;
    }
    return tp.make(std::move(y), {a}, [rows, c](Node<T>* n) {
        auto* a = n->parents[0];
        if (!a->requires_grad) return;
        auto& ga = a->ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
            const T* yv = n->value.data() + r * c;
            const T* dy = n->grad.data() + r * c;
            T dot = T(0);
            for (int j = 0; j < c; ++j) dot += yv[j] * dy[j];
            T* gx = ga.data() + r * c;
            for (int j = 0; j < c; ++j) gx[j] += yv[j] * (dy[j] - dot);
        }
    });
}

// Per-row (last dim) L2 normalization: y = x / sqrt(sum(x^2) + eps).
// A zero row maps to zero.
template <typename T>
Var<T> l2norm_last(Tape<T>& tp, Var<T> a, T eps) {
    const int c = a->value.dim(a->value.rank() - 1);
    const int64_t rows = a->value.numel() / c;
    Tensor<T> y{a->value.shape()};
    std::vector<T> inv(rows);
    for (int64_t r = 0; r < rows; ++r) {
        const T* x = a->value.data() + r * c;
        T s = T(0);
        for (int j = 0; j < c; ++j) s += x[j] * x[j];
        inv[r] = T(1) / std::sqrt(s + eps);
        T* out = y.data() + r * c;
        for (int j = 0; j < c; ++j) out[j] = x[j] * inv[r];
    }
    return tp.make(std::move(y), {a}, [rows, c, inv = std::move(inv), eps](Node<T>* n) {
        auto* a = n->parents[0];
        if (!a->requires_grad) return;
        auto& ga = a->ensure_grad();
        for (int64_t r = 0; r < rows; ++r) {
            const T* x = a->value.data() + r * c;
            const T* dy = n->grad.data() + r * c;
            T dot = T(0);
            for (int j = 0; j < c; ++j) dot += x[j] * dy[j];
            const T r3 = inv[r] * inv[r] * inv[r];
            T* gx = ga.data() + r * c;
            for (int j = 0; j < c; ++j) gx[j] += inv[r] * dy[j] - x[j] * dot * r3;
        }
    });
}

// Layer normalization over the last dimension with learnable gamma/beta.
template <typename T>
Var<T> layernorm(Tape<T>& tp, Var<T> x, Var<T> gamma, Var<T> beta, T eps) {
    const int c = x->value.dim(x->value.rank() - 1);
    const int64_t rows = x->value.numel() / c;
    Tensor<T> y{x->value.shape()};
    Tensor<T> xhat{x->value.shape()};
    std::vector<T> istd(rows);
    for (int64_t r = 0; r < rows; ++r) {
        const T* p = x->value.data() + r * c;
        T mean = T(0);
        for (int j = 0; j < c; ++j) mean += p[j];
        mean /= c;
        T var = T(0);
        for (int j = 0; j < c; ++j) var += (p[j] - mean) * (p[j] - mean);
        var /= c;
        istd[r] = T(1) / std::sqrt(var + eps);
        T* xh = xhat.data() + r * c;
        T* out = y.data() + r * c;
        for (int j = 0; j < c; ++j) {
            xh[j] = (p[j] - mean) * istd[r];
            out[j] = gamma->value[j] * xh[j] + beta->value[j];
        }
    }
    return tp.make(std::move(y), {x, gamma, beta},
                   [rows, c, xhat = std::move(xhat), istd = std::move(istd)](Node<T>* n) {
        auto *x = n->parents[0], *gamma = n->parents[1], *beta = n->parents[2];
        if (gamma->requires_grad) {
            auto& gg = gamma->ensure_grad();
            for (int64_t r = 0; r < rows; ++r)
                for (int j = 0; j < c; ++j) gg[j] += n->grad[r * c + j] * xhat[r * c + j];
        }
        if (beta->requires_grad) {
            auto& gb = beta->ensure_grad();
            for (int64_t r = 0; r < rows; ++r)
                for (int j = 0; j < c; ++j) gb[j] += n->grad[r * c + j];
        }
        if (x->requires_grad) {
            auto& gx = x->ensure_grad();
            for (int64_t r = 0; r < rows; ++r) {
                const T* dy = n->grad.data() + r * c;
                const T* xh = xhat.data() + r * c;
                T m1 = T(0), m2 = T(0);
                for (int j = 0; j < c; ++j) {
                    const T dxh = dy[j] * gamma->value[j];
                    m1 += dxh;
                    m2 += dxh * xh[j];
                }
                m1 /= c;
                m2 /= c;
                T* out = gx.data() + r * c;
                for (int j = 0; j < c; ++j)
                    out[j] += istd[r] * (dy[j] * gamma->value[j] - m1 - xh[j] * m2);
            }
        }
    });
}

// Per-channel spatial normalization of a [B,H,W,C] map with learnable
// per-channel gamma/beta: each (sample, channel) plane is standardized over
// its H*W values. Spatial magnitude patterns survive relative to the plane
// statistics.
template <typename T>
Var<T> instancenorm(Tape<T>& tp, Var<T> x, Var<T> gamma, Var<T> beta, T eps) {
    const int b = x->value.dim(0), h = x->value.dim(1), w = x->value.dim(2), c = x->value.dim(3);
    const int64_t plane = (int64_t)h * w;
    Tensor<T> y{x->value.shape()};
    Tensor<T> xhat{x->value.shape()};
    std::vector<T> istd((size_t)b * c);
    for (int bi = 0; bi < b; ++bi)
        for (int ci = 0; ci < c; ++ci) {
            const T* px = x->value.data() + (int64_t)bi * plane * c + ci;
            T mean = T(0);
            for (int64_t p = 0; p < plane; ++p) mean += px[p * c];
            mean /= (T)plane;
            T var = T(0);
            for (int64_t p = 0; p < plane; ++p) {
                const T d = px[p * c] - mean;
                var += d * d;
            }
            var /= (T)plane;
            const T inv = T(1) / std::sqrt(var + eps);
            istd[(size_t)bi * c + ci] = inv;
            T* ph = xhat.data() + (int64_t)bi * plane * c + ci;
            T* py = y.data() + (int64_t)bi * plane * c + ci;
            for (int64_t p = 0; p < plane; ++p) {
                ph[p * c] = (px[p * c] - mean) * inv;
                py[p * c] = gamma->value[ci] * ph[p * c] + beta->value[ci];
            }
        }
    return tp.make(std::move(y), {x, gamma, beta},
                   [b, c, plane, xhat = std::move(xhat), istd = std::move(istd)](Node<T>* n) {
        auto *x = n->parents[0], *gamma = n->parents[1], *beta = n->parents[2];
        if (gamma->requires_grad || beta->requires_grad) {
            auto& gg = gamma->ensure_grad();
            auto& gb = beta->ensure_grad();
            for (int bi = 0; bi < b; ++bi)
                for (int ci = 0; ci < c; ++ci) {
                    const T* dy = n->grad.data() + (int64_t)bi * plane * c + ci;
                    const T* xh = xhat.data() + (int64_t)bi * plane * c + ci;
                    T sg = T(0), sb = T(0);
                    for (int64_t p = 0; p < plane; ++p) {
                        sg += dy[p * c] * xh[p * c];
                        sb += dy[p * c];
                    }
                    gg[ci] += sg;
                    gb[ci] += sb;
                }
        }
        if (x->requires_grad) {
            auto& gx = x->ensure_grad();
            for (int bi = 0; bi < b; ++bi)
                for (int ci = 0; ci < c; ++ci) {
                    const T* dy = n->grad.data() + (int64_t)bi * plane * c + ci;
                    const T* xh = xhat.data() + (int64_t)bi * plane * c + ci;
                    const T g = gamma->value[ci];
                    const T inv = istd[(size_t)bi * c + ci];
                    T m1 = T(0), m2 = T(0);
                    for (int64_t p = 0; p < plane; ++p) {
                        m1 += dy[p * c] * g;
                        m2 += dy[p * c] * g * xh[p * c];
                    }
                    m1 /= (T)plane;
                    m2 /= (T)plane;
                    T* out = gx.data() + (int64_t)bi * plane * c + ci;
                    for (int64_t p = 0; p < plane; ++p)
                        out[p * c] += inv * (dy[p * c] * g - m1 - xh[p * c] * m2);
                }
        }
    });
}

// x: [B,H,W,Cin]; w: [kh*kw*Cin, Cout] with rows ordered (ky, kx, cin); b: [Cout]
template <typename T>
Var<T> conv2d(Tape<T>& tp, Var<T> x, Var<T> w, Var<T> b, int kh, int kw, int stride, int pad) {
    const int bs = x->value.dim(0), h = x->value.dim(1), wd = x->value.dim(2), ci = x->value.dim(3);
    const int co = w->value.dim(1);
    assert(w->value.dim(0) == kh * kw * ci);
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (wd + 2 * pad - kw) / stride + 1;
    const int patch = kh * kw * ci;
    const int64_t orows = (int64_t)bs * oh * ow;

    Tensor<T> col{{(int)orows, patch}};
    const T* px = x->value.data();
    T* pc = col.data();
    for (int bi = 0; bi < bs; ++bi)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                T* row = pc + (((int64_t)bi * oh + oy) * ow + ox) * patch;
                for (int ky = 0; ky < kh; ++ky) {
                    const int iy = oy * stride - pad + ky;
                    for (int kx = 0; kx < kw; ++kx) {
                        const int ix = ox * stride - pad + kx;
                        T* dst = row + (ky * kw + kx) * ci;
                        if (iy < 0 || iy >= h || ix < 0 || ix >= wd) {
                            for (int c = 0; c < ci; ++c) dst[c] = T(0);
                        } else {
                            const T* src = px + (((int64_t)bi * h + iy) * wd + ix) * ci;
                            for (int c = 0; c < ci; ++c) dst[c] = src[c];
                        }
                    }
                }
            }

    Tensor<T> y{{bs, oh, ow, co}};
    gemm_nn((int)orows, patch, co, col.data(), w->value.data(), y.data());
    for (int64_t r = 0; r < orows; ++r)
        for (int c = 0; c < co; ++c) y[r * co + c] += b->value[c];

    return tp.make(std::move(y), {x, w, b},
                   [=, col = std::move(col)](Node<T>* n) {
        auto *x = n->parents[0], *w = n->parents[1], *b = n->parents[2];
        if (b->requires_grad) {
            auto& gb = b->ensure_grad();
            for (int64_t r = 0; r < orows; ++r)
                for (int c = 0; c < co; ++c) gb[c] += n->grad[r * co + c];
        }
        if (w->requires_grad)
            gemm_tn(patch, (int)orows, co, col.data(), n->grad.data(), w->ensure_grad().data());
        if (x->requires_grad) {
            Tensor<T> dcol{{(int)orows, patch}};
            // w transposed once so the row-major product streams contiguously
            Tensor<T> wt{{co, patch}};
            for (int p = 0; p < patch; ++p)
                for (int q = 0; q < co; ++q) wt[(int64_t)q * patch + p] = w->value[(int64_t)p * co + q];
            gemm_nn((int)orows, co, patch, n->grad.data(), wt.data(), dcol.data());
            auto& gx = x->ensure_grad();
            for (int bi = 0; bi < bs; ++bi)
                for (int oy = 0; oy < oh; ++oy)
                    for (int ox = 0; ox < ow; ++ox) {
                        const T* row = dcol.data() + (((int64_t)bi * oh + oy) * ow + ox) * patch;
                        for (int ky = 0; ky < kh; ++ky) {
                            const int iy = oy * stride - pad + ky;
                            if (iy < 0 || iy >= h) continue;
                            for (int kx = 0; kx < kw; ++kx) {
                                const int ix = ox * stride - pad + kx;
                                if (ix < 0 || ix >= wd) continue;
                                T* dst = gx.data() + (((int64_t)bi * h + iy) * wd + ix) * ci;
                                const T* src = row + (ky * kw + kx) * ci;
                                for (int c = 0; c < ci; ++c) dst[c] += src[c];
                            }
                        }
                    }
        }
    });
}

// One pyramid scale: adaptive max-pool a [B,S,S,C] map to an n x n grid
// (bin i spans [floor(i*S/n), ceil((i+1)*S/n))) and nearest-upsample back to
// S x S by bin membership (cell r belongs to bin r*n/S).
template <typename T>
Var<T> spp_scale(Tape<T>& tp, Var<T> x, int n) {
    const int bs = x->value.dim(0), s = x->value.dim(1), c = x->value.dim(3);
    assert(x->value.dim(2) == s);
    Tensor<T> pooled{{bs, n, n, c}};
    std::vector<int> argmax((int64_t)bs * n * n * c);
    for (int bi = 0; bi < bs; ++bi)
        for (int i = 0; i < n; ++i) {
            const int r0 = i * s / n, r1 = (int)std::ceil((double)(i + 1) * s / n);
            for (int j = 0; j < n; ++j) {
                const int c0 = j * s / n, c1 = (int)std::ceil((double)(j + 1) * s / n);
                for (int ch = 0; ch < c; ++ch) {
                    // seed with the first bin cell so argmax stays in
                    // bounds even for non-finite inputs
                    int bestidx = (int)((((int64_t)bi * s + r0) * s + c0) * c + ch);
                    T best = x->value[bestidx];
                    for (int r = r0; r < r1; ++r)
                        for (int cc = c0; cc < c1; ++cc) {
                            const int64_t idx = (((int64_t)bi * s + r) * s + cc) * c + ch;
                            if (x->value[idx] > best) {
                                best = x->value[idx];
                                bestidx = (int)idx;
                            }
                        }
                    const int64_t pidx = (((int64_t)bi * n + i) * n + j) * c + ch;
                    pooled[pidx] = best;
                    argmax[pidx] = bestidx;
                }
            }
        }
    Tensor<T> y{{bs, s, s, c}};
    for (int bi = 0; bi < bs; ++bi)
        for (int r = 0; r < s; ++r) {
            const int i = r * n / s;
            for (int cc = 0; cc < s; ++cc) {
                const int j = cc * n / s;
                const T* src = pooled.data() + (((int64_t)bi * n + i) * n + j) * c;
                T* dst = y.data() + (((int64_t)bi * s + r) * s + cc) * c;
                for (int ch = 0; ch < c; ++ch) dst[ch] = src[ch];
            }
        }
    return tp.make(std::move(y), {x}, [bs, s, c, n, argmax = std::move(argmax)](Node<T>* nd) {
        auto* x = nd->parents[0];
        if (!x->requires_grad) return;
        auto& gx = x->ensure_grad();
        for (int bi = 0; bi < bs; ++bi)
            for (int r = 0; r < s; ++r) {
                const int i = r * n / s;
                for (int cc = 0; cc < s; ++cc) {
                    const int j = cc * n / s;
                    const int64_t pbase = (((int64_t)bi * n + i) * n + j) * c;
                    const T* dy = nd->grad.data() + (((int64_t)bi * s + r) * s + cc) * c;
                    for (int ch = 0; ch < c; ++ch) gx[argmax[pbase + ch]] += dy[ch];
                }
            }
    });
}

// Concatenate along the last dimension.
template <typename T>
Var<T> concat_last(Tape<T>& tp, const std::vector<Var<T>>& xs) {
    assert(!xs.empty());
    auto shape = xs[0]->value.shape();
    const int rank = (int)shape.size();
    int ctotal = 0;
    std::vector<int> widths;
    for (auto* v : xs) {
        widths.push_back(v->value.dim(rank - 1));
        ctotal += widths.back();
    }
    const int64_t rows = xs[0]->value.numel() / widths[0];
    shape[rank - 1] = ctotal;
    Tensor<T> y{shape};
    for (int64_t r = 0; r < rows; ++r) {
        T* dst = y.data() + r * ctotal;
        for (size_t k = 0; k < xs.size(); ++k) {
            const T* src = xs[k]->value.data() + r * widths[k];
            for (int j = 0; j < widths[k]; ++j) *dst++ = src[j];
        }
    }
    std::vector<Node<T>*> parents(xs.begin(), xs.end());
    return tp.make(std::move(y), parents, [rows, ctotal, widths](Node<T>* n) {
        for (int64_t r = 0; r < rows; ++r) {
            const T* src = n->grad.data() + r * ctotal;
            for (size_t k = 0; k < n->parents.size(); ++k) {
                auto* p = n->parents[k];
                if (p->requires_grad) {
                    T* dst = p->ensure_grad().data() + r * widths[k];
                    for (int j = 0; j < widths[k]; ++j) dst[j] += src[j];
                }
                src += widths[k];
            }
        }
    });
}

template <typename T>
Var<T> reshape(Tape<T>& tp, Var<T> a, std::vector<int> shape) {
    Tensor<T> y = a->value.reshaped(std::move(shape));
    return tp.make(std::move(y), {a}, [](Node<T>* n) {
        auto* a = n->parents[0];
        if (!a->requires_grad) return;
        auto& ga = a->ensure_grad();
        for (int64_t i = 0; i < ga.numel(); ++i) ga[i] += n->grad[i];
    });
}

// [A,B,C,D] -> [A,C,B,D]
template <typename T>
Var<T> transpose_0213(Tape<T>& tp, Var<T> x) {
    const int a = x->value.dim(0), b = x->value.dim(1), c = x->value.dim(2), d = x->value.dim(3);
    Tensor<T> y{{a, c, b, d}};
    for (int i = 0; i < a; ++i)
        for (int j = 0; j < b; ++j)
            for (int k = 0; k < c; ++k) {
                const T* src = x->value.data() + (((int64_t)i * b + j) * c + k) * d;
                T* dst = y.data() + (((int64_t)i * c + k) * b + j) * d;
                for (int l = 0; l < d; ++l) dst[l] = src[l];
            }
    return tp.make(std::move(y), {x}, [a, b, c, d](Node<T>* n) {
        auto* x = n->parents[0];
        if (!x->requires_grad) return;
        auto& gx = x->ensure_grad();
        for (int i = 0; i < a; ++i)
            for (int j = 0; j < b; ++j)
                for (int k = 0; k < c; ++k) {
                    const T* src = n->grad.data() + (((int64_t)i * c + k) * b + j) * d;
                    T* dst = gx.data() + (((int64_t)i * b + j) * c + k) * d;
                    for (int l = 0; l < d; ++l) dst[l] += src[l];
                }
    });
}

// y[g,i,:] = x[g, order[g*n+i], :] — row gather within the middle axis.
template <typename T>
Var<T> permute_mid(Tape<T>& tp, Var<T> x, std::vector<int> order) {
    const int g = x->value.dim(0), nrows = x->value.dim(1), d = x->value.dim(2);
    assert((int64_t)order.size() == (int64_t)g * nrows);
    Tensor<T> y{x->value.shape()};
    for (int gi = 0; gi < g; ++gi)
        for (int i = 0; i < nrows; ++i) {
            const T* src = x->value.data() + ((int64_t)gi * nrows + order[gi * nrows + i]) * d;
            T* dst = y.data() + ((int64_t)gi * nrows + i) * d;
            for (int j = 0; j < d; ++j) dst[j] = src[j];
        }
    return tp.make(std::move(y), {x}, [g, nrows, d, order = std::move(order)](Node<T>* n) {
        auto* x = n->parents[0];
        if (!x->requires_grad) return;
        auto& gx = x->ensure_grad();
        for (int gi = 0; gi < g; ++gi)
            for (int i = 0; i < nrows; ++i) {
                const T* src = n->grad.data() + ((int64_t)gi * nrows + i) * d;
                T* dst = gx.data() + ((int64_t)gi * nrows + order[gi * nrows + i]) * d;
                for (int j = 0; j < d; ++j) dst[j] += src[j];
            }
    });
}

// [B,N,K] -> [B,K], summing over the middle axis.
template <typename T>
Var<T> sum_mid(Tape<T>& tp, Var<T> x) {
    const int b = x->value.dim(0), n = x->value.dim(1), k = x->value.dim(2);
    Tensor<T> y{{b, k}};
    for (int bi = 0; bi < b; ++bi)
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < k; ++j)
                y[(int64_t)bi * k + j] += x->value[((int64_t)bi * n + i) * k + j];
    return tp.make(std::move(y), {x}, [b, n, k](Node<T>* nd) {
        auto* x = nd->parents[0];
        if (!x->requires_grad) return;
        auto& gx = x->ensure_grad();
        for (int bi = 0; bi < b; ++bi)
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < k; ++j)
                    gx[((int64_t)bi * n + i) * k + j] += nd->grad[(int64_t)bi * k + j];
    });
}

// y[b,k,:] = s[b,k] * c[k,:]
template <typename T>
Var<T> scale_rows_by(Tape<T>& tp, Var<T> s, Var<T> c) {
    const int b = s->value.dim(0), k = s->value.dim(1), d = c->value.dim(1);
    assert(c->value.dim(0) == k);
    Tensor<T> y{{b, k, d}};
    for (int bi = 0; bi < b; ++bi)
        for (int ki = 0; ki < k; ++ki) {
            const T sv = s->value[(int64_t)bi * k + ki];
            const T* crow = c->value.data() + (int64_t)ki * d;
            T* dst = y.data() + ((int64_t)bi * k + ki) * d;
            for (int j = 0; j < d; ++j) dst[j] = sv * crow[j];
        }
    return tp.make(std::move(y), {s, c}, [b, k, d](Node<T>* n) {
        auto *s = n->parents[0], *c = n->parents[1];
        for (int bi = 0; bi < b; ++bi)
            for (int ki = 0; ki < k; ++ki) {
                const T* dy = n->grad.data() + ((int64_t)bi * k + ki) * d;
                if (s->requires_grad) {
                    const T* crow = c->value.data() + (int64_t)ki * d;
                    T acc = T(0);
                    for (int j = 0; j < d; ++j) acc += dy[j] * crow[j];
                    s->ensure_grad()[(int64_t)bi * k + ki] += acc;
                }
                if (c->requires_grad) {
                    const T sv = s->value[(int64_t)bi * k + ki];
                    T* gc = c->ensure_grad().data() + (int64_t)ki * d;
                    for (int j = 0; j < d; ++j) gc[j] += dy[j] * sv;
                }
            }
    });
}

// Inverted dropout; identity when train is false.
template <typename T>
Var<T> dropout(Tape<T>& tp, Var<T> x, double p, bool train, std::mt19937_64& rng) {
    if (!train || p <= 0.0) return x;
    const T keep = T(1.0 - p);
    std::bernoulli_distribution coin(1.0 - p);
    auto mask = std::make_shared<std::vector<char>>(x->value.numel());
    Tensor<T> y{x->value.shape()};
    for (int64_t i = 0; i < y.numel(); ++i) {
        (*mask)[i] = coin(rng) ? 1 : 0;
        y[i] = (*mask)[i] ? x->value[i] / keep : T(0);
    }
    return tp.make(std::move(y), {x}, [mask, keep](Node<T>* n) {
        auto* x = n->parents[0];
        if (!x->requires_grad) return;
        auto& gx = x->ensure_grad();
        for (int64_t i = 0; i < gx.numel(); ++i)
            if ((*mask)[i]) gx[i] += n->grad[i] / keep;
    });
}

template <typename T>
Var<T> sum_all(Tape<T>& tp, Var<T> x) {
    Tensor<T> y{{1}};
    T acc = T(0);
    for (int64_t i = 0; i < x->value.numel(); ++i) acc += x->value[i];
    y[0] = acc;
    return tp.make(std::move(y), {x}, [](Node<T>* n) {
        auto* x = n->parents[0];
        if (!x->requires_grad) return;
        auto& gx = x->ensure_grad();
        for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += n->grad[0];
    });
}

}  // namespace wid::ad

#endif
