#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mitodet/core/rng.hpp"
#include "mitodet/nn/tensor.hpp"

namespace mitodet::nn {

// Named view of one learnable tensor. Optimizers and checkpoints work off
// flat lists of these; order must be stable for a given model.
template <class T>
struct ParamView {
    std::string name;
    Tensor<T>* w;
    Tensor<T>* g;
};

// Non-learnable state (batchnorm running stats) that still needs to be
// checkpointed.
template <class T>
struct BufferView {
    std::string name;
    Tensor<T>* b;
};

// Layers keep parameters only; per-call activations live in caller-owned
// Ctx objects so one layer instance can appear several times in a step
// (cycle pass, shared detection heads).

template <class T>
class Conv2d {
public:
    struct Ctx {
        Tensor<T> x;
    };

    Conv2d() = default;
    Conv2d(int in_ch, int out_ch, int k, int stride, int pad, bool bias = true)
        : in_ch_(in_ch), out_ch_(out_ch), k_(k), stride_(stride), pad_(pad),
          has_bias_(bias), w_(out_ch, in_ch, k, k), gw_(out_ch, in_ch, k, k) {
        if (bias) {
            b_ = Tensor<T>(out_ch, 1, 1, 1);
            gb_ = Tensor<T>(out_ch, 1, 1, 1);
        }
    }

    // He-style init; gain < 1 shrinks the start (used on output convs).
    void init(Rng& rng, double gain = 1.0) {
        const double stddev = gain * std::sqrt(2.0 / (in_ch_ * k_ * k_));
        for (auto& x : w_.v) x = static_cast<T>(rng.normal() * stddev);
        if (has_bias_) b_.fill(T(0));
    }

    Tensor<T> forward(const Tensor<T>& x, Ctx& ctx) const {
        ctx.x = x;
        return conv2d_forward(x, w_, has_bias_ ? &b_ : nullptr, stride_, pad_);
    }

    // For inference paths that do not need a cache.
    Tensor<T> forward(const Tensor<T>& x) const {
        return conv2d_forward(x, w_, has_bias_ ? &b_ : nullptr, stride_, pad_);
    }

    Tensor<T> backward(const Tensor<T>& dy, const Ctx& ctx) {
        conv2d_weight_grad(ctx.x, dy, k_, stride_, pad_, gw_, has_bias_ ? &gb_ : nullptr);
        return conv2d_input_grad(w_, dy, stride_, pad_, ctx.x.h, ctx.x.w);
    }

    void collect_params(const std::string& prefix, std::vector<ParamView<T>>& out) {
        out.push_back({prefix + ".w", &w_, &gw_});
        if (has_bias_) out.push_back({prefix + ".b", &b_, &gb_});
    }

    const Tensor<T>& weight() const { return w_; }
    Tensor<T>& weight() { return w_; }
    Tensor<T>& weight_grad() { return gw_; }
    Tensor<T>& bias() { return b_; }
    bool has_bias() const { return has_bias_; }
    int stride() const { return stride_; }
    int pad() const { return pad_; }
    int kernel() const { return k_; }

private:
    int in_ch_ = 0, out_ch_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
    bool has_bias_ = true;
    Tensor<T> w_, gw_, b_, gb_;
};

template <class T>
class InstanceNorm {
public:
    struct Ctx {
        Tensor<T> xhat;
        std::vector<T> inv_std;  // per (n, c)
    };

    InstanceNorm() = default;
    explicit InstanceNorm(int ch)
        : ch_(ch), gamma_(ch, 1, 1, 1), beta_(ch, 1, 1, 1), ggamma_(ch, 1, 1, 1),
          gbeta_(ch, 1, 1, 1) {
        gamma_.fill(T(1));
    }

    Tensor<T> forward(const Tensor<T>& x, Ctx& ctx) const {
        const int hw = x.h * x.w;
        Tensor<T> y = Tensor<T>::zeros_like(x);
        ctx.xhat = Tensor<T>::zeros_like(x);
        ctx.inv_std.assign(static_cast<size_t>(x.n) * x.c, T(0));
#pragma omp parallel for collapse(2) schedule(static)
        for (int in = 0; in < x.n; ++in) {
            for (int ic = 0; ic < x.c; ++ic) {
                const T* xp = x.data() + (static_cast<size_t>(in) * x.c + ic) * hw;
                T mean = T(0);
                for (int i = 0; i < hw; ++i) mean += xp[i];
                mean /= T(hw);
                T var = T(0);
                for (int i = 0; i < hw; ++i) var += (xp[i] - mean) * (xp[i] - mean);
                var /= T(hw);
                const T inv_std = T(1) / std::sqrt(var + T(kEps));
                ctx.inv_std[static_cast<size_t>(in) * x.c + ic] = inv_std;
                T* xh = ctx.xhat.data() + (static_cast<size_t>(in) * x.c + ic) * hw;
                T* yp = y.data() + (static_cast<size_t>(in) * x.c + ic) * hw;
                const T g = gamma_.v[static_cast<size_t>(ic)];
                const T b = beta_.v[static_cast<size_t>(ic)];
                for (int i = 0; i < hw; ++i) {
                    xh[i] = (xp[i] - mean) * inv_std;
                    yp[i] = g * xh[i] + b;
                }
            }
        }
        return y;
    }

    // Cache-free forward for inference paths.
    Tensor<T> infer(const Tensor<T>& x) const {
        const int hw = x.h * x.w;
        Tensor<T> y = Tensor<T>::zeros_like(x);
#pragma omp parallel for collapse(2) schedule(static)
        for (int in = 0; in < x.n; ++in) {
            for (int ic = 0; ic < x.c; ++ic) {
                const size_t off = (static_cast<size_t>(in) * x.c + ic) * hw;
                const T* xp = x.data() + off;
                T mean = T(0);
                for (int i = 0; i < hw; ++i) mean += xp[i];
                mean /= T(hw);
                T var = T(0);
                for (int i = 0; i < hw; ++i) var += (xp[i] - mean) * (xp[i] - mean);
                var /= T(hw);
                const T inv_std = T(1) / std::sqrt(var + T(kEps));
                const T g = gamma_.v[static_cast<size_t>(ic)];
                const T b = beta_.v[static_cast<size_t>(ic)];
                T* yp = y.data() + off;
                for (int i = 0; i < hw; ++i) yp[i] = g * (xp[i] - mean) * inv_std + b;
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy, const Ctx& ctx) {
        const int hw = dy.h * dy.w;
        Tensor<T> dx = Tensor<T>::zeros_like(dy);
        for (int in = 0; in < dy.n; ++in) {
            for (int ic = 0; ic < dy.c; ++ic) {
                const size_t off = (static_cast<size_t>(in) * dy.c + ic) * hw;
                const T* dyp = dy.data() + off;
                const T* xh = ctx.xhat.data() + off;
                const T g = gamma_.v[static_cast<size_t>(ic)];
                const T inv_std = ctx.inv_std[static_cast<size_t>(in) * dy.c + ic];
                T sum_dy = T(0), sum_dy_xh = T(0);
                for (int i = 0; i < hw; ++i) {
                    sum_dy += dyp[i];
                    sum_dy_xh += dyp[i] * xh[i];
                }
                ggamma_.v[static_cast<size_t>(ic)] += sum_dy_xh;
                gbeta_.v[static_cast<size_t>(ic)] += sum_dy;
                const T mean_dy = sum_dy / T(hw);
                const T mean_dy_xh = sum_dy_xh / T(hw);
                T* dxp = dx.data() + off;
                for (int i = 0; i < hw; ++i) {
                    dxp[i] = g * inv_std * (dyp[i] - mean_dy - xh[i] * mean_dy_xh);
                }
            }
        }
        return dx;
    }

    void collect_params(const std::string& prefix, std::vector<ParamView<T>>& out) {
        out.push_back({prefix + ".gamma", &gamma_, &ggamma_});
        out.push_back({prefix + ".beta", &beta_, &gbeta_});
    }

    static constexpr double kEps = 1e-5;

private:
    int ch_ = 0;
    Tensor<T> gamma_, beta_, ggamma_, gbeta_;
};

template <class T>
class BatchNorm2d {
public:
    struct Ctx {
        Tensor<T> xhat;
        std::vector<T> inv_std;  // per channel
    };

    BatchNorm2d() = default;
    explicit BatchNorm2d(int ch)
        : ch_(ch), gamma_(ch, 1, 1, 1), beta_(ch, 1, 1, 1), ggamma_(ch, 1, 1, 1),
          gbeta_(ch, 1, 1, 1), running_mean_(ch, 1, 1, 1), running_var_(ch, 1, 1, 1) {
        gamma_.fill(T(1));
        running_var_.fill(T(1));
    }

    void set_training(bool on) { training_ = on; }
    bool training() const { return training_; }

    Tensor<T> forward(const Tensor<T>& x, Ctx& ctx) {
        const int hw = x.h * x.w;
        const size_t count = static_cast<size_t>(x.n) * hw;
        Tensor<T> y = Tensor<T>::zeros_like(x);
        if (training_) {
            ctx.xhat = Tensor<T>::zeros_like(x);
            ctx.inv_std.assign(static_cast<size_t>(x.c), T(0));
        }
        for (int ic = 0; ic < x.c; ++ic) {
            T mean, var;
            if (training_) {
                mean = T(0);
                for (int in = 0; in < x.n; ++in) {
                    const T* xp = x.data() + (static_cast<size_t>(in) * x.c + ic) * hw;
                    for (int i = 0; i < hw; ++i) mean += xp[i];
                }
                mean /= T(count);
                var = T(0);
                for (int in = 0; in < x.n; ++in) {
                    const T* xp = x.data() + (static_cast<size_t>(in) * x.c + ic) * hw;
                    for (int i = 0; i < hw; ++i) var += (xp[i] - mean) * (xp[i] - mean);
                }
                var /= T(count);
                running_mean_.v[ic] = T(1 - kMomentum) * running_mean_.v[ic] +
                                      T(kMomentum) * mean;
                running_var_.v[ic] = T(1 - kMomentum) * running_var_.v[ic] +
                                     T(kMomentum) * var;
            } else {
                mean = running_mean_.v[ic];
                var = running_var_.v[ic];
            }
            const T inv_std = T(1) / std::sqrt(var + T(kEps));
            if (training_) ctx.inv_std[static_cast<size_t>(ic)] = inv_std;
            const T g = gamma_.v[static_cast<size_t>(ic)];
            const T b = beta_.v[static_cast<size_t>(ic)];
            for (int in = 0; in < x.n; ++in) {
                const size_t off = (static_cast<size_t>(in) * x.c + ic) * hw;
                const T* xp = x.data() + off;
                T* yp = y.data() + off;
                if (training_) {
                    T* xh = ctx.xhat.data() + off;
                    for (int i = 0; i < hw; ++i) {
                        xh[i] = (xp[i] - mean) * inv_std;
                        yp[i] = g * xh[i] + b;
                    }
                } else {
                    for (int i = 0; i < hw; ++i) {
                        yp[i] = g * (xp[i] - mean) * inv_std + b;
                    }
                }
            }
        }
        return y;
    }

    // Running-stats forward for inference.
    Tensor<T> infer(const Tensor<T>& x) const {
        const int hw = x.h * x.w;
        Tensor<T> y = Tensor<T>::zeros_like(x);
        for (int ic = 0; ic < x.c; ++ic) {
            const T mean = running_mean_.v[static_cast<size_t>(ic)];
            const T inv_std =
                T(1) / std::sqrt(running_var_.v[static_cast<size_t>(ic)] + T(kEps));
            const T g = gamma_.v[static_cast<size_t>(ic)];
            const T b = beta_.v[static_cast<size_t>(ic)];
            for (int in = 0; in < x.n; ++in) {
                const size_t off = (static_cast<size_t>(in) * x.c + ic) * hw;
                const T* xp = x.data() + off;
                T* yp = y.data() + off;
                for (int i = 0; i < hw; ++i) yp[i] = g * (xp[i] - mean) * inv_std + b;
            }
        }
        return y;
    }

    Tensor<T> backward(const Tensor<T>& dy, const Ctx& ctx) {
        const int hw = dy.h * dy.w;
        const size_t count = static_cast<size_t>(dy.n) * hw;
        Tensor<T> dx = Tensor<T>::zeros_like(dy);
        for (int ic = 0; ic < dy.c; ++ic) {
            T sum_dy = T(0), sum_dy_xh = T(0);
            for (int in = 0; in < dy.n; ++in) {
                const size_t off = (static_cast<size_t>(in) * dy.c + ic) * hw;
                const T* dyp = dy.data() + off;
                const T* xh = ctx.xhat.data() + off;
                for (int i = 0; i < hw; ++i) {
                    sum_dy += dyp[i];
                    sum_dy_xh += dyp[i] * xh[i];
                }
            }
            ggamma_.v[static_cast<size_t>(ic)] += sum_dy_xh;
            gbeta_.v[static_cast<size_t>(ic)] += sum_dy;
            const T g = gamma_.v[static_cast<size_t>(ic)];
            const T inv_std = ctx.inv_std[static_cast<size_t>(ic)];
            const T mean_dy = sum_dy / T(count);
            const T mean_dy_xh = sum_dy_xh / T(count);
            for (int in = 0; in < dy.n; ++in) {
                const size_t off = (static_cast<size_t>(in) * dy.c + ic) * hw;
                const T* dyp = dy.data() + off;
                const T* xh = ctx.xhat.data() + off;
                T* dxp = dx.data() + off;
                for (int i = 0; i < hw; ++i) {
                    dxp[i] = g * inv_std * (dyp[i] - mean_dy - xh[i] * mean_dy_xh);
                }
            }
        }
        return dx;
    }

    void collect_params(const std::string& prefix, std::vector<ParamView<T>>& out) {
        out.push_back({prefix + ".gamma", &gamma_, &ggamma_});
        out.push_back({prefix + ".beta", &beta_, &gbeta_});
    }

    void collect_buffers(const std::string& prefix, std::vector<BufferView<T>>& out) {
        out.push_back({prefix + ".running_mean", &running_mean_});
        out.push_back({prefix + ".running_var", &running_var_});
    }

    static constexpr double kEps = 1e-5;
    static constexpr double kMomentum = 0.1;

private:
    int ch_ = 0;
    bool training_ = true;
    Tensor<T> gamma_, beta_, ggamma_, gbeta_;
    Tensor<T> running_mean_, running_var_;
};

template <class T>
struct ReLU {
    struct Ctx {
        Tensor<T> mask;
    };
    static Tensor<T> forward(const Tensor<T>& x, Ctx& ctx) {
        Tensor<T> y = x;
        ctx.mask = Tensor<T>::zeros_like(x);
        for (size_t i = 0; i < x.size(); ++i) {
            if (x.v[i] > T(0)) {
                ctx.mask.v[i] = T(1);
            } else {
                y.v[i] = T(0);
            }
        }
        return y;
    }
    static Tensor<T> backward(const Tensor<T>& dy, const Ctx& ctx) {
        Tensor<T> dx = dy;
        for (size_t i = 0; i < dy.size(); ++i) dx.v[i] *= ctx.mask.v[i];
        return dx;
    }
};

template <class T>
struct LeakyReLU {
    struct Ctx {
        Tensor<T> mask;  // 1 or slope per element
    };
    static Tensor<T> forward(const Tensor<T>& x, T slope, Ctx& ctx) {
        Tensor<T> y = x;
        ctx.mask = Tensor<T>::zeros_like(x);
        for (size_t i = 0; i < x.size(); ++i) {
            if (x.v[i] > T(0)) {
                ctx.mask.v[i] = T(1);
            } else {
                ctx.mask.v[i] = slope;
                y.v[i] = x.v[i] * slope;
            }
        }
        return y;
    }
    static Tensor<T> backward(const Tensor<T>& dy, const Ctx& ctx) {
        Tensor<T> dx = dy;
        for (size_t i = 0; i < dy.size(); ++i) dx.v[i] *= ctx.mask.v[i];
        return dx;
    }
};

template <class T>
struct Tanh {
    struct Ctx {
        Tensor<T> y;
    };
    static Tensor<T> forward(const Tensor<T>& x, Ctx& ctx) {
        Tensor<T> y = x;
        for (auto& v : y.v) v = std::tanh(v);
        ctx.y = y;
        return y;
    }
    static Tensor<T> backward(const Tensor<T>& dy, const Ctx& ctx) {
        Tensor<T> dx = dy;
        for (size_t i = 0; i < dy.size(); ++i) {
            dx.v[i] *= (T(1) - ctx.y.v[i] * ctx.y.v[i]);
        }
        return dx;
    }
};

template <class T>
Tensor<T> relu_infer(Tensor<T> x) {
    for (auto& v : x.v)
        if (v < T(0)) v = T(0);
    return x;
}

template <class T>
Tensor<T> lrelu_infer(Tensor<T> x, T slope) {
    for (auto& v : x.v)
        if (v < T(0)) v *= slope;
    return x;
}

template <class T>
Tensor<T> tanh_infer(Tensor<T> x) {
    for (auto& v : x.v) v = std::tanh(v);
    return x;
}

template <class T>
struct UpsampleNearest2x {
    static Tensor<T> forward(const Tensor<T>& x) {
        Tensor<T> y(x.n, x.c, x.h * 2, x.w * 2);
        for (int in = 0; in < x.n; ++in)
            for (int ic = 0; ic < x.c; ++ic)
                for (int iy = 0; iy < y.h; ++iy)
                    for (int ix = 0; ix < y.w; ++ix)
                        y.at(in, ic, iy, ix) = x.at(in, ic, iy / 2, ix / 2);
        return y;
    }
    static Tensor<T> backward(const Tensor<T>& dy) {
        Tensor<T> dx(dy.n, dy.c, dy.h / 2, dy.w / 2);
        for (int in = 0; in < dy.n; ++in)
            for (int ic = 0; ic < dy.c; ++ic)
                for (int iy = 0; iy < dy.h; ++iy)
                    for (int ix = 0; ix < dy.w; ++ix)
                        dx.at(in, ic, iy / 2, ix / 2) += dy.at(in, ic, iy, ix);
        return dx;
    }
};

// Mean 4-way softmax cross-entropy; returns loss and writes dlogits
// (already divided by batch size).
template <class T>
T softmax_ce(const Tensor<T>& logits, const std::vector<int>& labels,
             Tensor<T>* dlogits) {
    const int n = logits.n;
    const int k = logits.c;
    if (dlogits) *dlogits = Tensor<T>::zeros_like(logits);
    T total = T(0);
    for (int in = 0; in < n; ++in) {
        const T* lp = logits.data() + static_cast<size_t>(in) * k;
        T mx = lp[0];
        for (int j = 1; j < k; ++j) mx = std::max(mx, lp[j]);
        T sum = T(0);
        for (int j = 0; j < k; ++j) sum += std::exp(lp[j] - mx);
        const T logz = mx + std::log(sum);
        total += logz - lp[labels[static_cast<size_t>(in)]];
        if (dlogits) {
            T* dp = dlogits->data() + static_cast<size_t>(in) * k;
            for (int j = 0; j < k; ++j) {
                T p = std::exp(lp[j] - logz);
                dp[j] = (p - (j == labels[static_cast<size_t>(in)] ? T(1) : T(0))) / T(n);
            }
        }
    }
    return total / T(n);
}

}  // namespace mitodet::nn
