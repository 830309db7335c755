#include "mitodet/pipeline/train.hpp"

#include <algorithm>

#include "mitodet/detector/loss.hpp"
#include "mitodet/nn/optim.hpp"

namespace mitodet::pipeline {

Patch maybe_style_transfer(const Patch& patch, StyleAugmenter* augmenter, double p,
                           Rng& rng) {
    if (p < 0.0 || p > 1.0) throw ConfigError("maybe_style_transfer: p outside [0,1]");
    if (p == 0.0) return patch;
    if (!augmenter) {
        throw Error("maybe_style_transfer: style_prob > 0 but no transfer module");
    }
    if (!rng.bernoulli(p)) return patch;
    return augmenter->apply(patch, sample_style_code(rng));
}

namespace {

DetectorTrainResult run_training(const corpus::Corpus& corpus,
                                 StyleAugmenter* augmenter, const TrainConfig& cfg,
                                 detector::DetectorModel<float> model,
                                 std::vector<std::vector<float>> momentum_state,
                                 uint64_t run_seed, int start_iteration) {
    cfg.validate();
    if (cfg.style_prob > 0.0 && augmenter == nullptr) {
        throw Error(
            "train_detector: style_prob > 0 requires a trained transfer module "
            "(two-stage ordering)");
    }

    PatchSampler sampler(corpus, cfg);
    const detector::AnchorLayout layout = detector::make_anchor_layout(
        detector::AnchorConfig{}, cfg.patch_size, detector::detector_strides());
    const detector::FocalLossConfig fcfg;

    DetectorTrainResult result;
    result.model = std::move(model);
    result.run_seed = run_seed;
    result.model.set_training(true);

    auto params = result.model.params();
    nn::SgdMomentum<float> opt(cfg.momentum);
    if (!momentum_state.empty()) opt.state() = std::move(momentum_state);

    for (int iter = start_iteration; iter < cfg.iterations; ++iter) {
        Rng it_rng = Rng::child(run_seed, static_cast<uint64_t>(iter));

        auto batch = sampler.sample_batch(it_rng, cfg.batch_size);
        nn::Tensor<float> x(cfg.batch_size, 3, cfg.patch_size, cfg.patch_size);
        std::vector<std::vector<GroundTruthBox>> gts(static_cast<size_t>(cfg.batch_size));
        for (int i = 0; i < cfg.batch_size; ++i) {
            auto& sp = batch[static_cast<size_t>(i)];
            Patch p = maybe_style_transfer(sp.patch, augmenter, cfg.style_prob, it_rng);
            const int angle =
                cfg.rotation_set[it_rng.uniform_int(cfg.rotation_set.size())];
            p = rotate_patch(p, angle);
            gts[static_cast<size_t>(i)] = rotate_boxes(sp.boxes, cfg.patch_size, angle);
            std::copy(p.pixels.begin(), p.pixels.end(),
                      x.data() + static_cast<size_t>(i) * p.pixels.size());
        }

        nn::zero_grads(params);
        const auto loss =
            detector::detector_loss(result.model, x, gts, layout, fcfg, true);
        if (cfg.clip_grad_norm > 0.0) {
            double norm_sq = 0.0;
            for (const auto& p : params) {
                for (float g : p.g->v) norm_sq += static_cast<double>(g) * g;
            }
            const double norm = std::sqrt(norm_sq);
            if (norm > cfg.clip_grad_norm) {
                const float scale = static_cast<float>(cfg.clip_grad_norm / norm);
                for (auto& p : params) {
                    for (float& g : p.g->v) g *= scale;
                }
            }
        }
        const double lr = lr_schedule(cfg, iter);
        opt.step(params, lr);

        result.history.push_back(
            {iter, loss.total, loss.cls, loss.reg, lr, loss.n_foreground});
    }

    result.momentum = opt.state();
    result.iterations_done = cfg.iterations;
    return result;
}

}  // namespace

DetectorTrainResult train_detector(const corpus::Corpus& corpus,
                                   StyleAugmenter* augmenter, const TrainConfig& cfg,
                                   Rng& rng, const detector::DetectorArch& arch) {
    detector::DetectorModel<float> model(arch);
    model.init(rng);
    const uint64_t run_seed = rng.next_u64();
    return run_training(corpus, augmenter, cfg, std::move(model), {}, run_seed, 0);
}

DetectorTrainResult resume_detector_training(const corpus::Corpus& corpus,
                                             StyleAugmenter* augmenter,
                                             const TrainConfig& cfg,
                                             detector::DetectorCheckpoint& ckpt) {
    if (!ckpt.has_trainer_state) {
        throw CheckpointError("resume: checkpoint has no trainer state");
    }
    if (ckpt.iteration >= cfg.iterations) {
        throw ConfigError("resume: checkpoint already at iteration " +
                          std::to_string(ckpt.iteration) + " of " +
                          std::to_string(cfg.iterations));
    }
    return run_training(corpus, augmenter, cfg, std::move(ckpt.model),
                        std::move(ckpt.momentum), ckpt.run_seed, ckpt.iteration);
}

}  // namespace mitodet::pipeline
