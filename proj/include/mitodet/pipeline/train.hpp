#pragma once

#include <memory>
#include <vector>

#include "mitodet/detector/checkpoint.hpp"
#include "mitodet/detector/focal.hpp"
#include "mitodet/detector/model.hpp"
#include "mitodet/pipeline/sampler.hpp"
#include "mitodet/transfer/transfer.hpp"

namespace mitodet::pipeline {

// Training-time style source. The trained transfer module implements it;
// tests can substitute stubs (counters, identity).
class StyleAugmenter {
public:
    virtual ~StyleAugmenter() = default;
    virtual Patch apply(const Patch& patch, const StyleCode& code) = 0;
};

class GeneratorAugmenter : public StyleAugmenter {
public:
    explicit GeneratorAugmenter(transfer::Generator<float>& g) : g_(&g) {}
    Patch apply(const Patch& patch, const StyleCode& code) override {
        return transfer::generator_forward(*g_, patch, code);
    }

private:
    transfer::Generator<float>* g_;
};

// With probability p: the patch restyled under a random simplex code;
// otherwise unchanged. Ground truth is untouched either way (the transfer
// preserves geometry). augmenter may be null only when p == 0.
Patch maybe_style_transfer(const Patch& patch, StyleAugmenter* augmenter, double p,
                           Rng& rng);

struct DetectorTrainEntry {
    int iteration = 0;
    double loss = 0.0;
    double cls = 0.0;
    double reg = 0.0;
    double lr = 0.0;
    int n_foreground = 0;
};

struct DetectorTrainResult {
    detector::DetectorModel<float> model;
    std::vector<DetectorTrainEntry> history;
    // Enough to resume exactly at history.back().iteration + 1.
    std::vector<std::vector<float>> momentum;
    uint64_t run_seed = 0;
    int iterations_done = 0;
};

// Fresh two-stage training: per iteration sample a balanced batch, restyle
// each patch with probability style_prob, rotate by a random multiple of
// 90 degrees, then one momentum-SGD step under the step LR schedule.
DetectorTrainResult train_detector(const corpus::Corpus& corpus,
                                   StyleAugmenter* augmenter, const TrainConfig& cfg,
                                   Rng& rng,
                                   const detector::DetectorArch& arch = {});

// Continues a checkpointed run up to cfg.iterations.
DetectorTrainResult resume_detector_training(const corpus::Corpus& corpus,
                                             StyleAugmenter* augmenter,
                                             const TrainConfig& cfg,
                                             detector::DetectorCheckpoint& ckpt);

}  // namespace mitodet::pipeline
