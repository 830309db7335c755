#pragma once

#include <cassert>
#include <cstddef>
#include <string>
#include <vector>

#include "mitodet/core/error.hpp"

namespace mitodet::nn {

// Dense NCHW tensor. Templated on scalar so the same code path can run in
// float for training and double for finite-difference gradient checks.
template <class T>
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> v;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_),
          v(static_cast<size_t>(n_) * c_ * h_ * w_, T(0)) {}

    static Tensor zeros_like(const Tensor& o) { return Tensor(o.n, o.c, o.h, o.w); }

    size_t size() const { return v.size(); }
    T* data() { return v.data(); }
    const T* data() const { return v.data(); }

    T& at(int in, int ic, int iy, int ix) {
        return v[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
    }
    T at(int in, int ic, int iy, int ix) const {
        return v[((static_cast<size_t>(in) * c + ic) * h + iy) * w + ix];
    }

    bool same_shape(const Tensor& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }

    std::string shape_str() const {
        return "[" + std::to_string(n) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + "]";
    }

    void fill(T x) { std::fill(v.begin(), v.end(), x); }

    Tensor& operator+=(const Tensor& o) {
        assert(same_shape(o));
        for (size_t i = 0; i < v.size(); ++i) v[i] += o.v[i];
        return *this;
    }
    Tensor& operator*=(T s) {
        for (auto& x : v) x *= s;
        return *this;
    }
};

// C[M,N] += A[M,K] * B[K,N], all row-major. N-blocked so the hot B panel
// stays in cache; 4 output rows share each B load. Accumulation order per
// element is fixed, so results are bit-identical for any thread count.
template <class T>
void gemm_nn_acc(int M, int N, int K, const T* A, const T* B, T* C) {
    constexpr int kBlock = 512;
    for (int n0 = 0; n0 < N; n0 += kBlock) {
        const int nb = (n0 + kBlock <= N) ? kBlock : N - n0;
        int m = 0;
        for (; m + 4 <= M; m += 4) {
            T* c0 = C + static_cast<size_t>(m) * N + n0;
            T* c1 = c0 + N;
            T* c2 = c1 + N;
            T* c3 = c2 + N;
            const T* a0 = A + static_cast<size_t>(m) * K;
            for (int k = 0; k < K; ++k) {
                const T v0 = a0[k];
                const T v1 = a0[K + k];
                const T v2 = a0[2 * K + k];
                const T v3 = a0[3 * K + k];
                const T* brow = B + static_cast<size_t>(k) * N + n0;
                for (int j = 0; j < nb; ++j) {
                    const T b = brow[j];
                    c0[j] += v0 * b;
                    c1[j] += v1 * b;
                    c2[j] += v2 * b;
                    c3[j] += v3 * b;
                }
            }
        }
        for (; m < M; ++m) {
            T* crow = C + static_cast<size_t>(m) * N + n0;
            const T* arow = A + static_cast<size_t>(m) * K;
            for (int k = 0; k < K; ++k) {
                const T a = arow[k];
                const T* brow = B + static_cast<size_t>(k) * N + n0;
                for (int j = 0; j < nb; ++j) crow[j] += a * brow[j];
            }
        }
    }
}

// C[K,N] += A^T[K,M] * B[M,N] with A given as [M,K] row-major. Parallel
// over C rows (disjoint), inner accumulation order fixed.
template <class T>
void gemm_tn_acc(int M, int N, int K, const T* A, const T* B, T* C) {
#pragma omp parallel for schedule(static)
    for (int k = 0; k < K; ++k) {
        T* crow = C + static_cast<size_t>(k) * N;
        for (int m = 0; m < M; ++m) {
            const T a = A[static_cast<size_t>(m) * K + k];
            const T* brow = B + static_cast<size_t>(m) * N;
            for (int j = 0; j < N; ++j) crow[j] += a * brow[j];
        }
    }
}

// C[M,K] += A[M,N] * B^T[N,K] with B given as [K,N] row-major (row dots).
// Parallel over the M output rows; 4 dots share each A row pass.
template <class T>
void gemm_nt_acc(int M, int N, int K, const T* A, const T* B, T* C) {
#pragma omp parallel for schedule(static)
    for (int m = 0; m < M; ++m) {
        const T* arow = A + static_cast<size_t>(m) * N;
        T* crow = C + static_cast<size_t>(m) * K;
        int k = 0;
        for (; k + 4 <= K; k += 4) {
            const T* b0 = B + static_cast<size_t>(k) * N;
            const T* b1 = b0 + N;
            const T* b2 = b1 + N;
            const T* b3 = b2 + N;
            T acc0 = T(0), acc1 = T(0), acc2 = T(0), acc3 = T(0);
            for (int j = 0; j < N; ++j) {
                const T a = arow[j];
                acc0 += a * b0[j];
                acc1 += a * b1[j];
                acc2 += a * b2[j];
                acc3 += a * b3[j];
            }
            crow[k] += acc0;
            crow[k + 1] += acc1;
            crow[k + 2] += acc2;
            crow[k + 3] += acc3;
        }
        for (; k < K; ++k) {
            const T* brow = B + static_cast<size_t>(k) * N;
            T acc = T(0);
            for (int j = 0; j < N; ++j) acc += arow[j] * brow[j];
            crow[k] += acc;
        }
    }
}

inline int conv_out_dim(int in, int k, int stride, int pad) {
    return (in + 2 * pad - k) / stride + 1;
}

// Unrolls one sample's [C,H,W] plane into [C*k*k, OH*OW].
template <class T>
void im2col(const T* x, int C, int H, int W, int k, int stride, int pad, T* col) {
    const int OH = conv_out_dim(H, k, stride, pad);
    const int OW = conv_out_dim(W, k, stride, pad);
    const int N = OH * OW;
    for (int ic = 0; ic < C; ++ic) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                T* dst = col + (static_cast<size_t>(ic) * k * k + ky * k + kx) * N;
                for (int oy = 0; oy < OH; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= H) {
                        for (int ox = 0; ox < OW; ++ox) dst[oy * OW + ox] = T(0);
                        continue;
                    }
                    const T* src = x + (static_cast<size_t>(ic) * H + iy) * W;
                    for (int ox = 0; ox < OW; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        dst[oy * OW + ox] = (ix >= 0 && ix < W) ? src[ix] : T(0);
                    }
                }
            }
        }
    }
}

// Scatter-add inverse of im2col.
template <class T>
void col2im_acc(const T* col, int C, int H, int W, int k, int stride, int pad, T* x) {
    const int OH = conv_out_dim(H, k, stride, pad);
    const int OW = conv_out_dim(W, k, stride, pad);
    const int N = OH * OW;
    for (int ic = 0; ic < C; ++ic) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const T* src = col + (static_cast<size_t>(ic) * k * k + ky * k + kx) * N;
                for (int oy = 0; oy < OH; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= H) continue;
                    T* dst = x + (static_cast<size_t>(ic) * H + iy) * W;
                    for (int ox = 0; ox < OW; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < W) dst[ix] += src[oy * OW + ox];
                    }
                }
            }
        }
    }
}

// y = conv(x, w) + b. w is [OC, IC, k, k]; bias optional (pass nullptr).
template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                         int stride, int pad) {
    if (x.c != w.c) {
        throw ShapeError("conv2d: input channels " + std::to_string(x.c) +
                         " != weight channels " + std::to_string(w.c));
    }
    const int k = w.h;
    const int OH = conv_out_dim(x.h, k, stride, pad);
    const int OW = conv_out_dim(x.w, k, stride, pad);
    const int CK = x.c * k * k;
    const int N = OH * OW;
    Tensor<T> y(x.n, w.n, OH, OW);

#pragma omp parallel for schedule(static)
    for (int in = 0; in < x.n; ++in) {
        std::vector<T> col(static_cast<size_t>(CK) * N);
        im2col(x.data() + static_cast<size_t>(in) * x.c * x.h * x.w, x.c, x.h, x.w, k,
               stride, pad, col.data());
        T* yp = y.data() + static_cast<size_t>(in) * w.n * N;
        gemm_nn_acc(w.n, N, CK, w.data(), col.data(), yp);
        if (bias) {
            for (int oc = 0; oc < w.n; ++oc) {
                const T b = bias->v[static_cast<size_t>(oc)];
                T* row = yp + static_cast<size_t>(oc) * N;
                for (int j = 0; j < N; ++j) row[j] += b;
            }
        }
    }
    return y;
}

// dx = conv_backward_input(w, dy): transpose of the forward map.
template <class T>
Tensor<T> conv2d_input_grad(const Tensor<T>& w, const Tensor<T>& dy, int stride, int pad,
                            int in_h, int in_w) {
    const int k = w.h;
    const int CK = w.c * k * k;
    const int N = dy.h * dy.w;
    Tensor<T> dx(dy.n, w.c, in_h, in_w);

#pragma omp parallel for schedule(static)
    for (int in = 0; in < dy.n; ++in) {
        std::vector<T> dcol(static_cast<size_t>(CK) * N, T(0));
        gemm_tn_acc(w.n, N, CK, w.data(),
                    dy.data() + static_cast<size_t>(in) * dy.c * N, dcol.data());
        col2im_acc(dcol.data(), w.c, in_h, in_w, k, stride, pad,
                   dx.data() + static_cast<size_t>(in) * w.c * in_h * in_w);
    }
    return dx;
}

// Accumulates dW (and db if non-null) from (x, dy). The unrolled input
// panels for every sample are built in parallel up front; the accumulating
// GEMMs then run in sample order so the result does not depend on the
// thread count.
template <class T>
void conv2d_weight_grad(const Tensor<T>& x, const Tensor<T>& dy, int k, int stride,
                        int pad, Tensor<T>& dw, Tensor<T>* db) {
    const int CK = x.c * k * k;
    const int N = dy.h * dy.w;
    std::vector<T> cols(static_cast<size_t>(x.n) * CK * N);
#pragma omp parallel for schedule(static)
    for (int in = 0; in < x.n; ++in) {
        im2col(x.data() + static_cast<size_t>(in) * x.c * x.h * x.w, x.c, x.h, x.w, k,
               stride, pad, cols.data() + static_cast<size_t>(in) * CK * N);
    }
    for (int in = 0; in < x.n; ++in) {
        gemm_nt_acc(dy.c, N, CK, dy.data() + static_cast<size_t>(in) * dy.c * N,
                    cols.data() + static_cast<size_t>(in) * CK * N, dw.data());
        if (db) {
            const T* dyp = dy.data() + static_cast<size_t>(in) * dy.c * N;
            for (int oc = 0; oc < dy.c; ++oc) {
                T acc = T(0);
                for (int j = 0; j < N; ++j) acc += dyp[static_cast<size_t>(oc) * N + j];
                db->v[static_cast<size_t>(oc)] += acc;
            }
        }
    }
}

}  // namespace mitodet::nn
