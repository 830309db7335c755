#include "mitodet/detector/focal.hpp"

#include <cmath>
#include <string>

namespace mitodet::detector {

double focal_loss(const FocalLossConfig& cfg, double p_t, double alpha_t) {
    cfg.validate();
    if (!(p_t > 0.0 && p_t <= 1.0)) {
        if (p_t == 0.0) {
            p_t = kFocalEps;
        } else {
            throw ConfigError("focal_loss: p_t " + std::to_string(p_t) +
                              " outside (0,1]");
        }
    }
    const double q = 1.0 - p_t;
    const double mod = cfg.gamma == 0.0 ? 1.0 : std::pow(q, cfg.gamma);
    return -alpha_t * mod * std::log(std::max(p_t, kFocalEps));
}

double focal_loss_grad_pt(const FocalLossConfig& cfg, double p_t, double alpha_t) {
    const double q = 1.0 - p_t;
    const double pc = std::max(p_t, kFocalEps);
    const double term_mod =
        cfg.gamma == 0.0 ? 0.0
                         : cfg.gamma * std::pow(q, cfg.gamma - 1.0) * std::log(pc);
    const double mod = cfg.gamma == 0.0 ? 1.0 : std::pow(q, cfg.gamma);
    const double term_log = p_t >= kFocalEps ? mod / pc : 0.0;
    return alpha_t * term_mod - alpha_t * term_log;
}

}  // namespace mitodet::detector
