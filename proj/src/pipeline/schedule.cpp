#include "mitodet/pipeline/schedule.hpp"

#include <cmath>
#include <string>

namespace mitodet::pipeline {

double lr_schedule(const TrainConfig& cfg, int iteration) {
    if (iteration < 0 || iteration >= cfg.iterations) {
        throw InvalidIteration("lr_schedule: iteration " + std::to_string(iteration) +
                               " outside [0," + std::to_string(cfg.iterations) + ")");
    }
    const long m1 = std::lround(cfg.lr_milestone_fractions[0] * cfg.iterations);
    const long m2 = std::lround(cfg.lr_milestone_fractions[1] * cfg.iterations);
    if (iteration < m1) return cfg.lr_start;
    if (iteration < m2) return cfg.lr_start * cfg.lr_decay;
    return cfg.lr_start * cfg.lr_decay * cfg.lr_decay;
}

}  // namespace mitodet::pipeline
