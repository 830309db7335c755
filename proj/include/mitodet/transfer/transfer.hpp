#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "mitodet/core/error.hpp"
#include "mitodet/core/rng.hpp"
#include "mitodet/core/types.hpp"
#include "mitodet/corpus/corpus_io.hpp"
#include "mitodet/nn/layers.hpp"
#include "mitodet/nn/optim.hpp"

namespace mitodet::transfer {

using nn::Tensor;

struct TransferConfig {
    double lambda_cls = 1.0;
    double lambda_rec = 10.0;
    double lambda_gp = 10.0;
    double lr_g = 1e-4;
    double lr_d = 1e-4;
    int iterations = 5000;
    int batch_size = 4;
    int d_steps_per_g = 5;  // critic updates per generator update
    int patch_size = 64;
    int gen_channels = 12;   // width of the first generator stage
    int disc_channels = 24;  // width of the first discriminator stage
    uint64_t seed = 0;

    void validate() const {
        if (lambda_cls < 0 || lambda_rec < 0 || lambda_gp < 0) {
            throw ConfigError("TransferConfig: loss weights must be >= 0");
        }
        if (iterations <= 0) throw ConfigError("TransferConfig: iterations must be > 0");
        if (batch_size <= 0) throw ConfigError("TransferConfig: batch_size must be > 0");
        if (d_steps_per_g <= 0) {
            throw ConfigError("TransferConfig: d_steps_per_g must be > 0");
        }
        if (patch_size < 8 || patch_size % 8 != 0) {
            throw ConfigError("TransferConfig: patch_size must be a multiple of 8");
        }
    }
};

// Broadcasts the 4 style-code components to constant spatial planes and
// concatenates them to the image channels: [n,3,h,w] + codes -> [n,7,h,w].
template <class T>
Tensor<T> concat_style_planes(const Tensor<T>& x, const std::vector<StyleCode>& codes) {
    if (static_cast<int>(codes.size()) != x.n) {
        throw ShapeError("concat_style_planes: " + std::to_string(codes.size()) +
                         " codes for batch of " + std::to_string(x.n));
    }
    Tensor<T> out(x.n, x.c + 4, x.h, x.w);
    const size_t plane = static_cast<size_t>(x.h) * x.w;
    for (int in = 0; in < x.n; ++in) {
        const T* src = x.data() + static_cast<size_t>(in) * x.c * plane;
        T* dst = out.data() + static_cast<size_t>(in) * (x.c + 4) * plane;
        std::copy(src, src + static_cast<size_t>(x.c) * plane, dst);
        for (int k = 0; k < 4; ++k) {
            const T v = static_cast<T>(codes[static_cast<size_t>(in)][k]);
            std::fill(dst + (x.c + k) * plane, dst + (x.c + k + 1) * plane, v);
        }
    }
    return out;
}

// Encoder / bottleneck / decoder style-transfer network. Input is the patch
// plus 4 broadcast style-code planes; output is a same-size patch in [-1,1]
// through a final tanh. Two downsampling stages, four residual blocks, two
// nearest-neighbor upsampling stages.
template <class T>
class Generator {
public:
    struct ResBlock {
        nn::Conv2d<T> conv1, conv2;
        nn::InstanceNorm<T> norm1, norm2;
    };
    struct ResCtx {
        typename nn::Conv2d<T>::Ctx c1, c2;
        typename nn::InstanceNorm<T>::Ctx n1, n2;
        typename nn::ReLU<T>::Ctx r;
    };
    struct Ctx {
        typename nn::Conv2d<T>::Ctx c1, d1, d2, u1, u2, out;
        typename nn::InstanceNorm<T>::Ctx n_c1, n_d1, n_d2, n_u1, n_u2;
        typename nn::ReLU<T>::Ctx r_c1, r_d1, r_d2, r_u1, r_u2;
        std::array<ResCtx, 4> res;
        typename nn::Tanh<T>::Ctx tanh;
    };

    Generator() = default;
    explicit Generator(int base_channels) : nf_(base_channels) {
        const int nf = nf_;
        c1_ = nn::Conv2d<T>(7, nf, 5, 1, 2);
        n_c1_ = nn::InstanceNorm<T>(nf);
        d1_ = nn::Conv2d<T>(nf, 2 * nf, 4, 2, 1);
        n_d1_ = nn::InstanceNorm<T>(2 * nf);
        d2_ = nn::Conv2d<T>(2 * nf, 4 * nf, 4, 2, 1);
        n_d2_ = nn::InstanceNorm<T>(4 * nf);
        for (auto& r : res_) {
            r.conv1 = nn::Conv2d<T>(4 * nf, 4 * nf, 3, 1, 1);
            r.norm1 = nn::InstanceNorm<T>(4 * nf);
            r.conv2 = nn::Conv2d<T>(4 * nf, 4 * nf, 3, 1, 1);
            r.norm2 = nn::InstanceNorm<T>(4 * nf);
        }
        u1_ = nn::Conv2d<T>(4 * nf, 2 * nf, 3, 1, 1);
        n_u1_ = nn::InstanceNorm<T>(2 * nf);
        u2_ = nn::Conv2d<T>(2 * nf, nf, 3, 1, 1);
        n_u2_ = nn::InstanceNorm<T>(nf);
        out_ = nn::Conv2d<T>(nf, 3, 5, 1, 2);
    }

    void init(Rng& rng) {
        c1_.init(rng);
        d1_.init(rng);
        d2_.init(rng);
        for (auto& r : res_) {
            r.conv1.init(rng);
            r.conv2.init(rng);
        }
        u1_.init(rng);
        u2_.init(rng);
        out_.init(rng);
    }

    int base_channels() const { return nf_; }

    Tensor<T> forward(const Tensor<T>& x, Ctx& ctx) {
        if (x.c != 7 || x.h != x.w || x.h % 4 != 0) {
            throw ShapeError("Generator: expected [n,7,s,s] with s % 4 == 0, got " +
                             x.shape_str());
        }
        Tensor<T> h = nn::ReLU<T>::forward(n_c1_.forward(c1_.forward(x, ctx.c1), ctx.n_c1),
                                           ctx.r_c1);
        h = nn::ReLU<T>::forward(n_d1_.forward(d1_.forward(h, ctx.d1), ctx.n_d1), ctx.r_d1);
        h = nn::ReLU<T>::forward(n_d2_.forward(d2_.forward(h, ctx.d2), ctx.n_d2), ctx.r_d2);
        for (size_t i = 0; i < res_.size(); ++i) {
            auto& r = res_[i];
            auto& rc = ctx.res[i];
            Tensor<T> t = nn::ReLU<T>::forward(
                r.norm1.forward(r.conv1.forward(h, rc.c1), rc.n1), rc.r);
            t = r.norm2.forward(r.conv2.forward(t, rc.c2), rc.n2);
            t += h;
            h = std::move(t);
        }
        h = nn::UpsampleNearest2x<T>::forward(h);
        h = nn::ReLU<T>::forward(n_u1_.forward(u1_.forward(h, ctx.u1), ctx.n_u1), ctx.r_u1);
        h = nn::UpsampleNearest2x<T>::forward(h);
        h = nn::ReLU<T>::forward(n_u2_.forward(u2_.forward(h, ctx.u2), ctx.n_u2), ctx.r_u2);
        return nn::Tanh<T>::forward(out_.forward(h, ctx.out), ctx.tanh);
    }

    // Cache-free forward for inference and augmentation use.
    Tensor<T> infer(const Tensor<T>& x) const {
        if (x.c != 7 || x.h != x.w || x.h % 4 != 0) {
            throw ShapeError("Generator: expected [n,7,s,s] with s % 4 == 0, got " +
                             x.shape_str());
        }
        Tensor<T> h = nn::relu_infer(n_c1_.infer(c1_.forward(x)));
        h = nn::relu_infer(n_d1_.infer(d1_.forward(h)));
        h = nn::relu_infer(n_d2_.infer(d2_.forward(h)));
        for (const auto& r : res_) {
            Tensor<T> t = nn::relu_infer(r.norm1.infer(r.conv1.forward(h)));
            t = r.norm2.infer(r.conv2.forward(t));
            t += h;
            h = std::move(t);
        }
        h = nn::UpsampleNearest2x<T>::forward(h);
        h = nn::relu_infer(n_u1_.infer(u1_.forward(h)));
        h = nn::UpsampleNearest2x<T>::forward(h);
        h = nn::relu_infer(n_u2_.infer(u2_.forward(h)));
        return nn::tanh_infer(out_.forward(h));
    }

    // Returns gradient w.r.t. the full 7-channel input.
    Tensor<T> backward(const Tensor<T>& dy, Ctx& ctx) {
        Tensor<T> d = out_.backward(nn::Tanh<T>::backward(dy, ctx.tanh), ctx.out);
        d = u2_.backward(n_u2_.backward(nn::ReLU<T>::backward(d, ctx.r_u2), ctx.n_u2),
                         ctx.u2);
        d = nn::UpsampleNearest2x<T>::backward(d);
        d = u1_.backward(n_u1_.backward(nn::ReLU<T>::backward(d, ctx.r_u1), ctx.n_u1),
                         ctx.u1);
        d = nn::UpsampleNearest2x<T>::backward(d);
        for (size_t i = res_.size(); i-- > 0;) {
            auto& r = res_[i];
            auto& rc = ctx.res[i];
            Tensor<T> t = r.norm2.backward(d, rc.n2);
            t = r.conv2.backward(t, rc.c2);
            t = nn::ReLU<T>::backward(t, rc.r);
            t = r.norm1.backward(t, rc.n1);
            t = r.conv1.backward(t, rc.c1);
            t += d;  // skip connection
            d = std::move(t);
        }
        d = d2_.backward(n_d2_.backward(nn::ReLU<T>::backward(d, ctx.r_d2), ctx.n_d2),
                         ctx.d2);
        d = d1_.backward(n_d1_.backward(nn::ReLU<T>::backward(d, ctx.r_d1), ctx.n_d1),
                         ctx.d1);
        return c1_.backward(n_c1_.backward(nn::ReLU<T>::backward(d, ctx.r_c1), ctx.n_c1),
                            ctx.c1);
    }

    std::vector<nn::ParamView<T>> params() {
        std::vector<nn::ParamView<T>> out;
        c1_.collect_params("g.c1", out);
        n_c1_.collect_params("g.n_c1", out);
        d1_.collect_params("g.d1", out);
        n_d1_.collect_params("g.n_d1", out);
        d2_.collect_params("g.d2", out);
        n_d2_.collect_params("g.n_d2", out);
        for (size_t i = 0; i < res_.size(); ++i) {
            const std::string p = "g.res" + std::to_string(i);
            res_[i].conv1.collect_params(p + ".conv1", out);
            res_[i].norm1.collect_params(p + ".norm1", out);
            res_[i].conv2.collect_params(p + ".conv2", out);
            res_[i].norm2.collect_params(p + ".norm2", out);
        }
        u1_.collect_params("g.u1", out);
        n_u1_.collect_params("g.n_u1", out);
        u2_.collect_params("g.u2", out);
        n_u2_.collect_params("g.n_u2", out);
        out_.collect_params("g.out", out);
        return out;
    }

    nn::Conv2d<T>& output_conv() { return out_; }

private:
    int nf_ = 0;
    nn::Conv2d<T> c1_, d1_, d2_, u1_, u2_, out_;
    nn::InstanceNorm<T> n_c1_, n_d1_, n_d2_, n_u1_, n_u2_;
    std::array<ResBlock, 4> res_;
};

// Fully convolutional critic with two heads: a real/fake score map and
// 4-way domain logits. No normalization layers and piecewise-linear
// activations, which keeps the gradient penalty's exact parameter gradient
// a composition of the three conv primitives (see gradient_penalty).
template <class T>
class Discriminator {
public:
    struct Ctx {
        typename nn::Conv2d<T>::Ctx c1, c2, c3, adv, cls;
        typename nn::LeakyReLU<T>::Ctx r1, r2, r3;
    };
    struct Output {
        Tensor<T> adv_map;     // [n,1,s/8,s/8]
        Tensor<T> cls_logits;  // [n,4,1,1]
    };

    Discriminator() = default;
    Discriminator(int base_channels, int patch_size)
        : df_(base_channels), patch_size_(patch_size) {
        if (patch_size % 8 != 0) {
            throw ShapeError("Discriminator: patch_size must be a multiple of 8");
        }
        c1_ = nn::Conv2d<T>(3, df_, 4, 2, 1);
        c2_ = nn::Conv2d<T>(df_, 2 * df_, 4, 2, 1);
        c3_ = nn::Conv2d<T>(2 * df_, 4 * df_, 4, 2, 1);
        adv_ = nn::Conv2d<T>(4 * df_, 1, 3, 1, 1, /*bias=*/false);
        cls_ = nn::Conv2d<T>(4 * df_, 4, patch_size / 8, 1, 0, /*bias=*/false);
    }

    void init(Rng& rng) {
        c1_.init(rng);
        c2_.init(rng);
        c3_.init(rng);
        adv_.init(rng);
        cls_.init(rng);
    }

    int base_channels() const { return df_; }
    int patch_size() const { return patch_size_; }

    Output forward(const Tensor<T>& x, Ctx& ctx) {
        if (x.c != 3 || x.h != patch_size_ || x.w != patch_size_) {
            throw ShapeError("Discriminator: expected [n,3," +
                             std::to_string(patch_size_) + "," +
                             std::to_string(patch_size_) + "], got " + x.shape_str());
        }
        Tensor<T> h = nn::LeakyReLU<T>::forward(c1_.forward(x, ctx.c1), T(kSlope), ctx.r1);
        h = nn::LeakyReLU<T>::forward(c2_.forward(h, ctx.c2), T(kSlope), ctx.r2);
        h = nn::LeakyReLU<T>::forward(c3_.forward(h, ctx.c3), T(kSlope), ctx.r3);
        Output out;
        out.adv_map = adv_.forward(h, ctx.adv);
        out.cls_logits = cls_.forward(h, ctx.cls);
        return out;
    }

    // Per-sample critic value: mean of the adversarial map.
    static std::vector<T> critic_scores(const Tensor<T>& adv_map) {
        const size_t hw = static_cast<size_t>(adv_map.h) * adv_map.w;
        std::vector<T> scores(static_cast<size_t>(adv_map.n));
        for (int in = 0; in < adv_map.n; ++in) {
            T acc = T(0);
            const T* p = adv_map.data() + static_cast<size_t>(in) * hw;
            for (size_t i = 0; i < hw; ++i) acc += p[i];
            scores[static_cast<size_t>(in)] = acc / T(hw);
        }
        return scores;
    }

    Tensor<T> backward(const Tensor<T>& d_adv, const Tensor<T>& d_cls, Ctx& ctx) {
        Tensor<T> dh = adv_.backward(d_adv, ctx.adv);
        dh += cls_.backward(d_cls, ctx.cls);
        dh = c3_.backward(nn::LeakyReLU<T>::backward(dh, ctx.r3), ctx.c3);
        dh = c2_.backward(nn::LeakyReLU<T>::backward(dh, ctx.r2), ctx.c2);
        return c1_.backward(nn::LeakyReLU<T>::backward(dh, ctx.r1), ctx.c1);
    }

    // Wasserstein gradient penalty E[(||grad_x D_adv(x_hat)|| - 1)^2] with
    // its exact parameter gradient (scaled by `scale`) accumulated into the
    // conv weight grads. The input-gradient chain is linear in the weights
    // at fixed activation masks, so differentiating it reduces to one
    // forward-style sweep with the same conv primitives.
    T gradient_penalty(const Tensor<T>& x_hat, T scale) {
        const int n = x_hat.n;
        // Forward, keeping pre-activation masks.
        typename nn::LeakyReLU<T>::Ctx r1, r2, r3;
        typename nn::Conv2d<T>::Ctx cc1, cc2, cc3;
        Tensor<T> a1 = nn::LeakyReLU<T>::forward(c1_.forward(x_hat, cc1), T(kSlope), r1);
        Tensor<T> a2 = nn::LeakyReLU<T>::forward(c2_.forward(a1, cc2), T(kSlope), r2);
        Tensor<T> a3 = nn::LeakyReLU<T>::forward(c3_.forward(a2, cc3), T(kSlope), r3);
        const int ho = a3.h, wo = a3.w;  // adv head is stride-1 pad-1 k3

        // Seed: d(mean adv map)/d(map elements), per sample.
        Tensor<T> seed(n, 1, ho, wo);
        seed.fill(T(1) / T(ho * wo));

        // Input-gradient chain.
        Tensor<T> v3 = nn::conv2d_input_grad(adv_.weight(), seed, 1, 1, a3.h, a3.w);
        Tensor<T> dz3 = nn::LeakyReLU<T>::backward(v3, r3);
        Tensor<T> v2 = nn::conv2d_input_grad(c3_.weight(), dz3, 2, 1, a2.h, a2.w);
        Tensor<T> dz2 = nn::LeakyReLU<T>::backward(v2, r2);
        Tensor<T> v1 = nn::conv2d_input_grad(c2_.weight(), dz2, 2, 1, a1.h, a1.w);
        Tensor<T> dz1 = nn::LeakyReLU<T>::backward(v1, r1);
        Tensor<T> g = nn::conv2d_input_grad(c1_.weight(), dz1, 2, 1, x_hat.h, x_hat.w);

        // Penalty and its gradient w.r.t. g.
        const size_t per = g.size() / static_cast<size_t>(n);
        std::vector<T> norms(static_cast<size_t>(n), T(0));
        T penalty = T(0);
        for (int in = 0; in < n; ++in) {
            T acc = T(0);
            const T* p = g.data() + static_cast<size_t>(in) * per;
            for (size_t i = 0; i < per; ++i) acc += p[i] * p[i];
            norms[static_cast<size_t>(in)] = std::sqrt(acc);
            const T d = norms[static_cast<size_t>(in)] - T(1);
            penalty += d * d;
        }
        penalty /= T(n);

        Tensor<T> u = Tensor<T>::zeros_like(g);
        for (int in = 0; in < n; ++in) {
            const T nrm = std::max(norms[static_cast<size_t>(in)], T(1e-12));
            const T coef = scale * T(2) / T(n) * (nrm - T(1)) / nrm;
            const T* src = g.data() + static_cast<size_t>(in) * per;
            T* dst = u.data() + static_cast<size_t>(in) * per;
            for (size_t i = 0; i < per; ++i) dst[i] = coef * src[i];
        }

        // Adjoint sweep: masked forward convs; weight-grad cross terms.
        nn::conv2d_weight_grad<T>(u, dz1, c1_.kernel(), 2, 1, c1_.weight_grad(), nullptr);
        Tensor<T> q1 = nn::conv2d_forward<T>(u, c1_.weight(), nullptr, 2, 1);
        for (size_t i = 0; i < q1.size(); ++i) q1.v[i] *= r1.mask.v[i];

        nn::conv2d_weight_grad<T>(q1, dz2, c2_.kernel(), 2, 1, c2_.weight_grad(), nullptr);
        Tensor<T> q2 = nn::conv2d_forward<T>(q1, c2_.weight(), nullptr, 2, 1);
        for (size_t i = 0; i < q2.size(); ++i) q2.v[i] *= r2.mask.v[i];

        nn::conv2d_weight_grad<T>(q2, dz3, c3_.kernel(), 2, 1, c3_.weight_grad(), nullptr);
        Tensor<T> q3 = nn::conv2d_forward<T>(q2, c3_.weight(), nullptr, 2, 1);
        for (size_t i = 0; i < q3.size(); ++i) q3.v[i] *= r3.mask.v[i];

        nn::conv2d_weight_grad<T>(q3, seed, adv_.kernel(), 1, 1, adv_.weight_grad(),
                               nullptr);
        return penalty;
    }

    std::vector<nn::ParamView<T>> params() {
        std::vector<nn::ParamView<T>> out;
        c1_.collect_params("d.c1", out);
        c2_.collect_params("d.c2", out);
        c3_.collect_params("d.c3", out);
        adv_.collect_params("d.adv", out);
        cls_.collect_params("d.cls", out);
        return out;
    }

    static constexpr double kSlope = 0.01;

private:
    int df_ = 0;
    int patch_size_ = 0;
    nn::Conv2d<T> c1_, c2_, c3_, adv_, cls_;
};

// ---- public operations -----------------------------------------------

struct TrainedTransfer {
    TransferConfig config;
    Generator<float> generator;
    Discriminator<float> discriminator;
};

struct TransferLossEntry {
    int iteration = 0;
    double loss_d = 0.0;
    double loss_adv = 0.0;
    double loss_cls_real = 0.0;
    double grad_penalty = 0.0;
    double loss_g = 0.0;
    double loss_cls_fake = 0.0;
    double loss_rec = 0.0;
};

struct LossPieces {
    double l_adv = 0.0;
    double l_cls_r = 0.0;
    double l_cls_f = 0.0;
    double l_rec = 0.0;
    double gp = 0.0;
};

struct TotalLosses {
    double l_d = 0.0;
    double l_g = 0.0;
};

// L_D = -L_adv + lambda_cls * L_cls_r + lambda_gp * gp
// L_G =  L_adv + lambda_cls * L_cls_f + lambda_rec * L_rec
inline TotalLosses total_losses(const TransferConfig& cfg, const LossPieces& p) {
    return {-p.l_adv + cfg.lambda_cls * p.l_cls_r + cfg.lambda_gp * p.gp,
            p.l_adv + cfg.lambda_cls * p.l_cls_f + cfg.lambda_rec * p.l_rec};
}

// Runs the patch through the transfer module under the given style code.
Patch generator_forward(Generator<float>& g, const Patch& patch,
                              const StyleCode& code);

// Mean cross-entropy of the domain head on real patches against their true
// domains, and on generated patches against their target domains.
std::pair<double, double> classification_losses(
    Discriminator<float>& d, const Tensor<float>& real_batch,
    const std::vector<int>& true_domains, const Tensor<float>& fake_batch,
    const std::vector<int>& target_domains);

// Mean L1 between x and its cycle G(G(x, c), c_prime). `gen` is any
// callable Patch(const Patch&, const StyleCode&), so tests can stub it.
template <class GenFn>
double reconstruction_loss(GenFn&& gen, const Patch& patch, const StyleCode& c,
                           const StyleCode& c_prime) {
    Patch cycled = gen(gen(patch, c), c_prime);
    double acc = 0.0;
    for (size_t i = 0; i < patch.pixels.size(); ++i) {
        acc += std::abs(static_cast<double>(patch.pixels[i]) - cycled.pixels[i]);
    }
    return acc / static_cast<double>(patch.pixels.size());
}

// Wasserstein critic objective E[D(real)] - E[D(fake)] plus the gradient
// penalty on per-sample interpolates (epsilon drawn from rng).
std::pair<double, double> adversarial_loss(Discriminator<float>& d,
                                           const Tensor<float>& real_batch,
                                           const Tensor<float>& fake_batch, Rng& rng);

struct TransferTrainResult {
    TrainedTransfer trained;
    std::vector<TransferLossEntry> history;
};

TransferTrainResult train_transfer(const TransferConfig& cfg,
                                   const corpus::Corpus& corpus, Rng& rng);

// Versioned binary checkpoint; round-trips to bit-identical weights.
void save_transfer_checkpoint(const std::string& path, const TrainedTransfer& t);
TrainedTransfer load_transfer_checkpoint(const std::string& path);

}  // namespace mitodet::transfer
