#pragma once

#include <string>
#include <vector>

#include "mitodet/detector/model.hpp"

namespace mitodet::detector {

// Versioned binary checkpoint. The trainer block (optimizer momentum,
// iteration counter, run seed, training-config snapshot) is optional so an
// inference-only checkpoint stays small; when present it is enough to
// resume training exactly.
struct DetectorCheckpoint {
    DetectorArch arch;
    int patch_size = 64;
    DetectorModel<float> model;

    bool has_trainer_state = false;
    int iteration = 0;
    uint64_t run_seed = 0;
    std::string train_config_json;  // pipeline-owned payload
    std::vector<std::vector<float>> momentum;
};

void save_detector_checkpoint(const std::string& path, DetectorCheckpoint& ckpt);
DetectorCheckpoint load_detector_checkpoint(const std::string& path);

}  // namespace mitodet::detector
