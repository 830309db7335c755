#pragma once

#include "mitodet/core/error.hpp"

namespace mitodet::detector {

struct FocalLossConfig {
    double gamma = 2.0;
    double alpha = 0.25;  // weight of the foreground class

    void validate() const {
        if (gamma < 0.0) throw ConfigError("FocalLossConfig: gamma must be >= 0");
        if (alpha < 0.0 || alpha > 1.0) {
            throw ConfigError("FocalLossConfig: alpha must be in [0,1]");
        }
    }
};

// FL(p_t) = -alpha_t * (1 - p_t)^gamma * log(p_t), with p_t clamped to
// 1e-7 inside the log. p_t is the predicted probability of the true class;
// alpha_t the matching class weight.
double focal_loss(const FocalLossConfig& cfg, double p_t, double alpha_t);

// Single-class convenience: alpha_t = alpha (canonical foreground form).
inline double focal_loss(const FocalLossConfig& cfg, double p_t) {
    return focal_loss(cfg, p_t, cfg.alpha);
}

// d(FL)/d(p_t), consistent with the clamped loss above.
double focal_loss_grad_pt(const FocalLossConfig& cfg, double p_t, double alpha_t);

constexpr double kFocalEps = 1e-7;

}  // namespace mitodet::detector
