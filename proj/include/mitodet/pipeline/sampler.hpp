#pragma once

#include <vector>

#include "mitodet/core/rng.hpp"
#include "mitodet/core/types.hpp"
#include "mitodet/corpus/corpus_io.hpp"
#include "mitodet/pipeline/schedule.hpp"

namespace mitodet::pipeline {

struct SampledPatch {
    Patch patch;
    std::vector<GroundTruthBox> boxes;  // patch-frame coordinates
    bool is_foreground = false;
};

// Training-patch source: scanners uniform over the four training domains,
// background:foreground in expectation bg_fg_ratio : 1. Foreground patches
// are centered near a mitosis (with jitter); background windows are
// rejection-sampled away from every ground-truth box.
class PatchSampler {
public:
    PatchSampler(const corpus::Corpus& corpus, const TrainConfig& cfg);

    SampledPatch sample_one(Rng& rng) const;
    std::vector<SampledPatch> sample_batch(Rng& rng, int n) const;

private:
    SampledPatch sample_foreground(const corpus::Slide& slide, Rng& rng) const;
    SampledPatch sample_background(const corpus::Slide& slide, Rng& rng) const;
    std::vector<GroundTruthBox> boxes_in_window(const corpus::Slide& slide, int x0,
                                                int y0) const;

    const corpus::Corpus& corpus_;
    int patch_size_;
    double fg_prob_;
    // Per training domain: all slides / slides with at least one mitosis.
    std::vector<std::vector<const corpus::Slide*>> all_;
    std::vector<std::vector<const corpus::Slide*>> with_fg_;
};

}  // namespace mitodet::pipeline
