#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "mitodet/detector/assign.hpp"
#include "mitodet/detector/focal.hpp"
#include "mitodet/detector/model.hpp"

namespace mitodet::detector {

constexpr double kSmoothL1Beta = 1.0 / 9.0;

inline double smooth_l1(double d, double beta = kSmoothL1Beta) {
    const double a = std::abs(d);
    return a < beta ? 0.5 * d * d / beta : a - 0.5 * beta;
}
inline double smooth_l1_grad(double d, double beta = kSmoothL1Beta) {
    return std::abs(d) < beta ? d / beta : (d > 0.0 ? 1.0 : -1.0);
}

struct DetectorLossValue {
    double total = 0.0;
    double cls = 0.0;
    double reg = 0.0;
    int n_foreground = 0;
};

// Focal classification over all non-ignored anchors plus smooth-L1 box
// regression over foreground anchors, both normalized by the foreground
// count (min 1). When `backprop` is set, gradients flow into the model.
template <class T>
DetectorLossValue detector_loss(DetectorModel<T>& m, const Tensor<T>& x,
                                const std::vector<std::vector<GroundTruthBox>>& gt,
                                const AnchorLayout& layout, const FocalLossConfig& fcfg,
                                bool backprop) {
    fcfg.validate();
    const int n = x.n;
    if (static_cast<int>(gt.size()) != n) {
        throw ShapeError("detector_loss: gt lists " + std::to_string(gt.size()) +
                         " for batch of " + std::to_string(n));
    }

    typename DetectorModel<T>::Ctx ctx;
    DetectorOutputs<T> out = m.forward(x, ctx);

    std::vector<Assignment> assignments;
    assignments.reserve(static_cast<size_t>(n));
    int total_fg = 0;
    for (int in = 0; in < n; ++in) {
        assignments.push_back(
            assign_targets(layout.anchors, gt[static_cast<size_t>(in)]));
        total_fg += assignments.back().n_foreground;
    }
    const double norm = std::max(1, total_fg);

    DetectorOutputs<T> grads;
    if (backprop) {
        for (size_t l = 0; l < 3; ++l) {
            grads.cls[l] = Tensor<T>::zeros_like(out.cls[l]);
            grads.reg[l] = Tensor<T>::zeros_like(out.reg[l]);
        }
    }

    double cls_sum = 0.0, reg_sum = 0.0;
    for (int in = 0; in < n; ++in) {
        const auto& asg = assignments[static_cast<size_t>(in)];
        for (size_t l = 0; l < layout.levels.size(); ++l) {
            const auto& lvl = layout.levels[l];
            const int fs = lvl.feature_size;
            for (int y = 0; y < fs; ++y) {
                for (int x_ = 0; x_ < fs; ++x_) {
                    for (int k = 0; k < kAnchorsPerCell; ++k) {
                        const size_t flat =
                            lvl.offset +
                            (static_cast<size_t>(y) * fs + x_) * kAnchorsPerCell +
                            static_cast<size_t>(k);
                        const AnchorLabel label = asg.labels[flat];
                        if (label == AnchorLabel::kIgnore) continue;

                        const bool fg = label == AnchorLabel::kForeground;
                        const double z =
                            static_cast<double>(out.cls[l].at(in, k, y, x_));
                        const double p = 1.0 / (1.0 + std::exp(-z));
                        const double p_t = fg ? p : 1.0 - p;
                        const double alpha_t = fg ? fcfg.alpha : 1.0 - fcfg.alpha;
                        cls_sum += focal_loss(fcfg, p_t, alpha_t);
                        if (backprop) {
                            const double dpt =
                                focal_loss_grad_pt(fcfg, p_t, alpha_t);
                            const double dz =
                                dpt * (fg ? 1.0 : -1.0) * p * (1.0 - p) / norm;
                            grads.cls[l].at(in, k, y, x_) = static_cast<T>(dz);
                        }

                        if (fg) {
                            const auto& target = asg.regression[flat];
                            for (int j = 0; j < 4; ++j) {
                                const double pred = static_cast<double>(
                                    out.reg[l].at(in, 4 * k + j, y, x_));
                                const double d = pred - target[static_cast<size_t>(j)];
                                reg_sum += smooth_l1(d);
                                if (backprop) {
                                    grads.reg[l].at(in, 4 * k + j, y, x_) =
                                        static_cast<T>(smooth_l1_grad(d) / norm);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    if (backprop) m.backward(grads, ctx);

    DetectorLossValue v;
    v.cls = cls_sum / norm;
    v.reg = reg_sum / norm;
    v.total = v.cls + v.reg;
    v.n_foreground = total_fg;
    return v;
}

}  // namespace mitodet::detector
