#pragma once

#include <array>
#include <cstdint>

#include "mitodet/core/error.hpp"

namespace mitodet::pipeline {

struct TrainConfig {
    double bg_fg_ratio = 6.0;  // expected background : foreground patches
    double style_prob = 0.2;   // chance a training patch is style-transferred
    std::array<int, 4> rotation_set{0, 90, 180, 270};
    int iterations = 2000;
    int batch_size = 8;
    double lr_start = 0.2;
    // Fractions of total iterations; 0.64/0.90 reproduce the 320K/450K
    // drops of a 500K-iteration run.
    std::array<double, 2> lr_milestone_fractions{0.64, 0.90};
    double lr_decay = 0.1;
    double momentum = 0.9;
    // Global gradient-norm ceiling. The 0.2 starting rate diverges on the
    // desk-scale network without it; 0 disables.
    double clip_grad_norm = 10.0;
    int patch_size = 64;
    uint64_t seed = 0;

    void validate() const {
        if (style_prob < 0.0 || style_prob > 1.0) {
            throw ConfigError("TrainConfig: style_prob must be in [0,1]");
        }
        if (bg_fg_ratio <= 0.0) throw ConfigError("TrainConfig: bg_fg_ratio must be > 0");
        if (!(lr_milestone_fractions[0] > 0.0 &&
              lr_milestone_fractions[0] < lr_milestone_fractions[1] &&
              lr_milestone_fractions[1] < 1.0)) {
            throw ConfigError(
                "TrainConfig: milestone fractions must be strictly increasing in (0,1)");
        }
        if (iterations <= 0) throw ConfigError("TrainConfig: iterations must be > 0");
        if (batch_size <= 0) throw ConfigError("TrainConfig: batch_size must be > 0");
        if (patch_size < 16 || patch_size % 16 != 0) {
            throw ConfigError("TrainConfig: patch_size must be a multiple of 16");
        }
    }
};

// Step schedule: lr_start before the first milestone, one decay factor
// between milestones, two after. Milestones are fractions x iterations.
double lr_schedule(const TrainConfig& cfg, int iteration);

}  // namespace mitodet::pipeline
