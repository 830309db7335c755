#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "mitodet/core/rng.hpp"
#include "mitodet/core/types.hpp"
#include "mitodet/detector/anchors.hpp"
#include "mitodet/detector/assign.hpp"
#include "mitodet/nn/layers.hpp"

namespace mitodet::detector {

using nn::Tensor;

struct DetectorArch {
    int stem_channels = 16;
    int stage_channels[3] = {24, 48, 64};
    int fpn_channels = 32;
    // Initial foreground probability of the classification head; the bias
    // of the output conv is set to the matching logit.
    double prior_score = 0.01;
};

// Pyramid strides for the three detection levels.
inline const std::vector<int>& detector_strides() {
    static const std::vector<int> s{4, 8, 16};
    return s;
}

constexpr int kAnchorsPerCell = 3;

template <class T>
struct DetectorOutputs {
    std::array<Tensor<T>, 3> cls;  // [n, 3, fs, fs] logits, one per anchor scale
    std::array<Tensor<T>, 3> reg;  // [n, 12, fs, fs] offsets, 4 per anchor scale
};

// RetinaNet-style one-class detector at desk scale: a stem plus three
// residual stages (strides 4/8/16), a 3-level feature pyramid, and
// classification / box-regression heads shared across levels.
template <class T>
class DetectorModel {
public:
    struct ConvBn {
        nn::Conv2d<T> conv;
        nn::BatchNorm2d<T> bn;
    };
    struct ConvBnCtx {
        typename nn::Conv2d<T>::Ctx c;
        typename nn::BatchNorm2d<T>::Ctx b;
        typename nn::ReLU<T>::Ctx r;
    };
    struct ResBlock {
        ConvBn a, b;
    };
    struct ResCtx {
        ConvBnCtx a;
        typename nn::Conv2d<T>::Ctx bc;
        typename nn::BatchNorm2d<T>::Ctx bb;
        typename nn::ReLU<T>::Ctx out_r;
    };
    struct HeadCtx {
        typename nn::Conv2d<T>::Ctx trunk1, trunk2, out;
        typename nn::ReLU<T>::Ctx r1, r2;
    };
    struct Ctx {
        ConvBnCtx stem;
        std::array<ConvBnCtx, 3> down;
        std::array<ResCtx, 3> res;
        std::array<typename nn::Conv2d<T>::Ctx, 3> lat;
        std::array<typename nn::Conv2d<T>::Ctx, 3> smooth;
        std::array<HeadCtx, 3> cls_head, reg_head;
    };

    DetectorModel() = default;
    explicit DetectorModel(const DetectorArch& arch) : arch_(arch) {
        stem_ = {nn::Conv2d<T>(3, arch.stem_channels, 3, 2, 1),
                 nn::BatchNorm2d<T>(arch.stem_channels)};
        int prev = arch.stem_channels;
        for (int i = 0; i < 3; ++i) {
            const int ch = arch.stage_channels[i];
            down_[i] = {nn::Conv2d<T>(prev, ch, 3, 2, 1), nn::BatchNorm2d<T>(ch)};
            res_[i].a = {nn::Conv2d<T>(ch, ch, 3, 1, 1), nn::BatchNorm2d<T>(ch)};
            res_[i].b = {nn::Conv2d<T>(ch, ch, 3, 1, 1), nn::BatchNorm2d<T>(ch)};
            lat_[i] = nn::Conv2d<T>(ch, arch.fpn_channels, 1, 1, 0);
            smooth_[i] = nn::Conv2d<T>(arch.fpn_channels, arch.fpn_channels, 3, 1, 1);
            prev = ch;
        }
        const int f = arch.fpn_channels;
        cls_trunk1_ = nn::Conv2d<T>(f, f, 3, 1, 1);
        cls_trunk2_ = nn::Conv2d<T>(f, f, 3, 1, 1);
        cls_out_ = nn::Conv2d<T>(f, kAnchorsPerCell, 3, 1, 1);
        reg_trunk1_ = nn::Conv2d<T>(f, f, 3, 1, 1);
        reg_trunk2_ = nn::Conv2d<T>(f, f, 3, 1, 1);
        reg_out_ = nn::Conv2d<T>(f, 4 * kAnchorsPerCell, 3, 1, 1);
    }

    void init(Rng& rng) {
        stem_.conv.init(rng);
        for (int i = 0; i < 3; ++i) {
            down_[i].conv.init(rng);
            res_[i].a.conv.init(rng);
            res_[i].b.conv.init(rng);
            lat_[i].init(rng);
            smooth_[i].init(rng);
        }
        cls_trunk1_.init(rng);
        cls_trunk2_.init(rng);
        reg_trunk1_.init(rng);
        reg_trunk2_.init(rng);
        // Head outputs start near zero so every anchor scores ~prior_score.
        init_head(cls_out_, rng);
        init_head(reg_out_, rng);
        const double b = -std::log((1.0 - arch_.prior_score) / arch_.prior_score);
        cls_out_.bias().fill(static_cast<T>(b));
    }

    void set_training(bool on) {
        stem_.bn.set_training(on);
        for (int i = 0; i < 3; ++i) {
            down_[i].bn.set_training(on);
            res_[i].a.bn.set_training(on);
            res_[i].b.bn.set_training(on);
        }
    }

    DetectorOutputs<T> forward(const Tensor<T>& x, Ctx& ctx) {
        check_input(x);
        Tensor<T> h = conv_bn_relu(stem_, x, ctx.stem);
        std::array<Tensor<T>, 3> c;  // backbone features per level
        for (int i = 0; i < 3; ++i) {
            h = conv_bn_relu(down_[i], h, ctx.down[i]);
            h = res_forward(res_[i], h, ctx.res[i]);
            c[static_cast<size_t>(i)] = h;
        }
        // Top-down pyramid.
        std::array<Tensor<T>, 3> m;
        m[2] = lat_[2].forward(c[2], ctx.lat[2]);
        m[1] = lat_[1].forward(c[1], ctx.lat[1]);
        m[1] += nn::UpsampleNearest2x<T>::forward(m[2]);
        m[0] = lat_[0].forward(c[0], ctx.lat[0]);
        m[0] += nn::UpsampleNearest2x<T>::forward(m[1]);

        DetectorOutputs<T> out;
        for (int i = 0; i < 3; ++i) {
            Tensor<T> p = smooth_[i].forward(m[static_cast<size_t>(i)], ctx.smooth[i]);
            out.cls[static_cast<size_t>(i)] = head_forward(
                cls_trunk1_, cls_trunk2_, cls_out_, p, ctx.cls_head[i]);
            out.reg[static_cast<size_t>(i)] = head_forward(
                reg_trunk1_, reg_trunk2_, reg_out_, p, ctx.reg_head[i]);
        }
        return out;
    }

    // Cache-free inference with BN running stats.
    DetectorOutputs<T> infer(const Tensor<T>& x) const {
        check_input(x);
        Tensor<T> h = nn::relu_infer(stem_.bn.infer(stem_.conv.forward(x)));
        std::array<Tensor<T>, 3> c;
        for (int i = 0; i < 3; ++i) {
            h = nn::relu_infer(down_[i].bn.infer(down_[i].conv.forward(h)));
            Tensor<T> t = nn::relu_infer(res_[i].a.bn.infer(res_[i].a.conv.forward(h)));
            t = res_[i].b.bn.infer(res_[i].b.conv.forward(t));
            t += h;
            h = nn::relu_infer(std::move(t));
            c[static_cast<size_t>(i)] = h;
        }
        std::array<Tensor<T>, 3> m;
        m[2] = lat_[2].forward(c[2]);
        m[1] = lat_[1].forward(c[1]);
        m[1] += nn::UpsampleNearest2x<T>::forward(m[2]);
        m[0] = lat_[0].forward(c[0]);
        m[0] += nn::UpsampleNearest2x<T>::forward(m[1]);

        DetectorOutputs<T> out;
        for (int i = 0; i < 3; ++i) {
            Tensor<T> p = smooth_[i].forward(m[static_cast<size_t>(i)]);
            Tensor<T> tc = nn::relu_infer(cls_trunk2_.forward(
                nn::relu_infer(cls_trunk1_.forward(p))));
            out.cls[static_cast<size_t>(i)] = cls_out_.forward(tc);
            Tensor<T> tr = nn::relu_infer(reg_trunk2_.forward(
                nn::relu_infer(reg_trunk1_.forward(p))));
            out.reg[static_cast<size_t>(i)] = reg_out_.forward(tr);
        }
        return out;
    }

    void backward(const DetectorOutputs<T>& grads, Ctx& ctx) {
        std::array<Tensor<T>, 3> dm;
        for (int i = 0; i < 3; ++i) {
            Tensor<T> dp = head_backward(cls_trunk1_, cls_trunk2_, cls_out_,
                                         grads.cls[static_cast<size_t>(i)],
                                         ctx.cls_head[i]);
            dp += head_backward(reg_trunk1_, reg_trunk2_, reg_out_,
                                grads.reg[static_cast<size_t>(i)], ctx.reg_head[i]);
            dm[static_cast<size_t>(i)] = smooth_[i].backward(dp, ctx.smooth[i]);
        }
        dm[1] += nn::UpsampleNearest2x<T>::backward(dm[0]);
        dm[2] += nn::UpsampleNearest2x<T>::backward(dm[1]);
        std::array<Tensor<T>, 3> dc;
        for (int i = 0; i < 3; ++i) {
            dc[static_cast<size_t>(i)] =
                lat_[i].backward(dm[static_cast<size_t>(i)], ctx.lat[i]);
        }
        Tensor<T> dh = std::move(dc[2]);
        for (int i = 2; i >= 0; --i) {
            dh = res_backward(res_[i], dh, ctx.res[i]);
            dh = conv_bn_relu_backward(down_[i], dh, ctx.down[i]);
            if (i > 0) dh += dc[static_cast<size_t>(i - 1)];
        }
        conv_bn_relu_backward(stem_, dh, ctx.stem);
    }

    std::vector<nn::ParamView<T>> params() {
        std::vector<nn::ParamView<T>> out;
        stem_.conv.collect_params("det.stem.conv", out);
        stem_.bn.collect_params("det.stem.bn", out);
        for (int i = 0; i < 3; ++i) {
            const std::string p = "det.stage" + std::to_string(i);
            down_[i].conv.collect_params(p + ".down.conv", out);
            down_[i].bn.collect_params(p + ".down.bn", out);
            res_[i].a.conv.collect_params(p + ".res.a.conv", out);
            res_[i].a.bn.collect_params(p + ".res.a.bn", out);
            res_[i].b.conv.collect_params(p + ".res.b.conv", out);
            res_[i].b.bn.collect_params(p + ".res.b.bn", out);
            lat_[i].collect_params(p + ".lat", out);
            smooth_[i].collect_params(p + ".smooth", out);
        }
        cls_trunk1_.collect_params("det.head.cls_trunk1", out);
        cls_trunk2_.collect_params("det.head.cls_trunk2", out);
        cls_out_.collect_params("det.head.cls_out", out);
        reg_trunk1_.collect_params("det.head.reg_trunk1", out);
        reg_trunk2_.collect_params("det.head.reg_trunk2", out);
        reg_out_.collect_params("det.head.reg_out", out);
        return out;
    }

    std::vector<nn::BufferView<T>> buffers() {
        std::vector<nn::BufferView<T>> out;
        stem_.bn.collect_buffers("det.stem.bn", out);
        for (int i = 0; i < 3; ++i) {
            const std::string p = "det.stage" + std::to_string(i);
            down_[i].bn.collect_buffers(p + ".down.bn", out);
            res_[i].a.bn.collect_buffers(p + ".res.a.bn", out);
            res_[i].b.bn.collect_buffers(p + ".res.b.bn", out);
        }
        return out;
    }

    const DetectorArch& arch() const { return arch_; }
    nn::Conv2d<T>& cls_out_conv() { return cls_out_; }

private:
    static void check_input(const Tensor<T>& x) {
        if (x.c != 3 || x.h != x.w || x.h % 16 != 0) {
            throw ShapeError("DetectorModel: expected [n,3,s,s] with s % 16 == 0, got " +
                             x.shape_str());
        }
    }

    void init_head(nn::Conv2d<T>& conv, Rng& rng) {
        // sigma = 0.01 normal, near-zero start.
        for (auto& v : conv.weight().v) v = static_cast<T>(rng.normal() * 0.01);
        if (conv.has_bias()) conv.bias().fill(T(0));
    }

    Tensor<T> conv_bn_relu(ConvBn& layer, const Tensor<T>& x, ConvBnCtx& ctx) {
        return nn::ReLU<T>::forward(layer.bn.forward(layer.conv.forward(x, ctx.c), ctx.b),
                                    ctx.r);
    }
    Tensor<T> conv_bn_relu_backward(ConvBn& layer, const Tensor<T>& dy, ConvBnCtx& ctx) {
        return layer.conv.backward(
            layer.bn.backward(nn::ReLU<T>::backward(dy, ctx.r), ctx.b), ctx.c);
    }

    Tensor<T> res_forward(ResBlock& block, const Tensor<T>& x, ResCtx& ctx) {
        Tensor<T> t = conv_bn_relu(block.a, x, ctx.a);
        t = block.b.bn.forward(block.b.conv.forward(t, ctx.bc), ctx.bb);
        t += x;
        return nn::ReLU<T>::forward(t, ctx.out_r);
    }
    Tensor<T> res_backward(ResBlock& block, const Tensor<T>& dy, ResCtx& ctx) {
        Tensor<T> d = nn::ReLU<T>::backward(dy, ctx.out_r);
        Tensor<T> dt = block.b.conv.backward(block.b.bn.backward(d, ctx.bb), ctx.bc);
        dt = conv_bn_relu_backward(block.a, dt, ctx.a);
        dt += d;  // skip
        return dt;
    }

    Tensor<T> head_forward(nn::Conv2d<T>& trunk1, nn::Conv2d<T>& trunk2,
                           nn::Conv2d<T>& out, const Tensor<T>& p, HeadCtx& ctx) {
        Tensor<T> t = nn::ReLU<T>::forward(trunk1.forward(p, ctx.trunk1), ctx.r1);
        t = nn::ReLU<T>::forward(trunk2.forward(t, ctx.trunk2), ctx.r2);
        return out.forward(t, ctx.out);
    }
    Tensor<T> head_backward(nn::Conv2d<T>& trunk1, nn::Conv2d<T>& trunk2,
                            nn::Conv2d<T>& out, const Tensor<T>& dy, HeadCtx& ctx) {
        Tensor<T> dt = out.backward(dy, ctx.out);
        dt = trunk2.backward(nn::ReLU<T>::backward(dt, ctx.r2), ctx.trunk2);
        return trunk1.backward(nn::ReLU<T>::backward(dt, ctx.r1), ctx.trunk1);
    }

    DetectorArch arch_;
    ConvBn stem_;
    std::array<ConvBn, 3> down_;
    std::array<ResBlock, 3> res_;
    std::array<nn::Conv2d<T>, 3> lat_, smooth_;
    nn::Conv2d<T> cls_trunk1_, cls_trunk2_, cls_out_;
    nn::Conv2d<T> reg_trunk1_, reg_trunk2_, reg_out_;
};

// Per-anchor sigmoid scores and decoded boxes for one patch batch.
struct ScoredBox {
    Box box;
    double score = 0.0;
};

template <class T>
std::vector<std::vector<ScoredBox>> decode_outputs(const DetectorOutputs<T>& out,
                                                   const AnchorLayout& layout) {
    const int n = out.cls[0].n;
    std::vector<std::vector<ScoredBox>> result(static_cast<size_t>(n));
    for (int in = 0; in < n; ++in) {
        auto& dets = result[static_cast<size_t>(in)];
        dets.reserve(layout.total());
        for (size_t l = 0; l < layout.levels.size(); ++l) {
            const auto& cls = out.cls[l];
            const auto& reg = out.reg[l];
            const auto& lvl = layout.levels[l];
            const int fs = lvl.feature_size;
            for (int y = 0; y < fs; ++y) {
                for (int x = 0; x < fs; ++x) {
                    for (int k = 0; k < kAnchorsPerCell; ++k) {
                        const size_t flat =
                            lvl.offset +
                            (static_cast<size_t>(y) * fs + x) * kAnchorsPerCell +
                            static_cast<size_t>(k);
                        const double z = static_cast<double>(cls.at(in, k, y, x));
                        const double score = 1.0 / (1.0 + std::exp(-z));
                        const std::array<double, 4> d = {
                            static_cast<double>(reg.at(in, 4 * k + 0, y, x)),
                            static_cast<double>(reg.at(in, 4 * k + 1, y, x)),
                            static_cast<double>(reg.at(in, 4 * k + 2, y, x)),
                            static_cast<double>(reg.at(in, 4 * k + 3, y, x))};
                        dets.push_back({decode_box(layout.anchors[flat], d), score});
                    }
                }
            }
        }
    }
    return result;
}

// Forward pass producing scored, decoded boxes for a single patch.
template <class T>
std::vector<ScoredBox> detector_forward(const DetectorModel<T>& m, const Patch& patch,
                                        const AnchorLayout& layout) {
    Tensor<T> x(1, 3, patch.size, patch.size);
    std::copy(patch.pixels.begin(), patch.pixels.end(), x.data());
    return decode_outputs(m.infer(x), layout)[0];
}

}  // namespace mitodet::detector
