#include "mitodet/pipeline/sampler.hpp"

#include <algorithm>
#include <cmath>

namespace mitodet::pipeline {

PatchSampler::PatchSampler(const corpus::Corpus& corpus, const TrainConfig& cfg)
    : corpus_(corpus), patch_size_(cfg.patch_size),
      fg_prob_(1.0 / (1.0 + cfg.bg_fg_ratio)),
      all_(ScannerDomain::kNumTraining), with_fg_(ScannerDomain::kNumTraining) {
    cfg.validate();
    for (int dom = 0; dom < ScannerDomain::kNumTraining; ++dom) {
        for (const auto& slide : corpus.slides) {
            if (slide.scanner.id != dom) continue;
            if (slide.image.w < patch_size_ || slide.image.h < patch_size_) {
                throw Error("PatchSampler: slide " + slide.slide_id +
                            " smaller than patch size");
            }
            all_[static_cast<size_t>(dom)].push_back(&slide);
            if (!slide.mitoses.empty()) {
                with_fg_[static_cast<size_t>(dom)].push_back(&slide);
            }
        }
        if (all_[static_cast<size_t>(dom)].empty()) {
            throw InsufficientForeground(
                "PatchSampler: no slides for training domain " + std::to_string(dom));
        }
        if (with_fg_[static_cast<size_t>(dom)].empty()) {
            throw InsufficientForeground(
                "PatchSampler: no foreground patches available for domain " +
                std::to_string(dom));
        }
    }
}

std::vector<GroundTruthBox> PatchSampler::boxes_in_window(const corpus::Slide& slide,
                                                          int x0, int y0) const {
    std::vector<GroundTruthBox> out;
    for (const auto& m : slide.mitoses) {
        if (m.x >= x0 && m.x < x0 + patch_size_ && m.y >= y0 && m.y < y0 + patch_size_) {
            out.push_back({m.x - x0, m.y - y0});
        }
    }
    return out;
}

SampledPatch PatchSampler::sample_foreground(const corpus::Slide& slide,
                                             Rng& rng) const {
    const auto& m = slide.mitoses[rng.uniform_int(slide.mitoses.size())];
    // Jitter keeps the chosen center well inside the patch.
    const double max_jitter = patch_size_ / 2.0 - 8.0;
    const double jx = rng.uniform(-max_jitter, max_jitter);
    const double jy = rng.uniform(-max_jitter, max_jitter);
    int x0 = static_cast<int>(std::lround(m.x + jx - patch_size_ / 2.0));
    int y0 = static_cast<int>(std::lround(m.y + jy - patch_size_ / 2.0));
    x0 = std::clamp(x0, 0, slide.image.w - patch_size_);
    y0 = std::clamp(y0, 0, slide.image.h - patch_size_);

    SampledPatch sp;
    sp.patch = make_patch(slide.image.rgb.data(), slide.image.w, slide.image.h, x0, y0,
                          patch_size_, slide.slide_id, slide.scanner);
    sp.boxes = boxes_in_window(slide, x0, y0);
    sp.is_foreground = true;
    return sp;
}

SampledPatch PatchSampler::sample_background(const corpus::Slide& slide,
                                             Rng& rng) const {
    const int max_off_x = slide.image.w - patch_size_;
    const int max_off_y = slide.image.h - patch_size_;
    const double keep_out = patch_size_ / 2.0 + GroundTruthBox::kSide / 2.0;

    // Strict pass: window may not intersect any ground-truth box. Relaxed
    // pass afterwards: no gt center inside the window.
    for (int relax = 0; relax < 2; ++relax) {
        for (int attempt = 0; attempt < 200; ++attempt) {
            const int x0 =
                static_cast<int>(rng.uniform_int(static_cast<uint64_t>(max_off_x + 1)));
            const int y0 =
                static_cast<int>(rng.uniform_int(static_cast<uint64_t>(max_off_y + 1)));
            const double cx = x0 + patch_size_ / 2.0;
            const double cy = y0 + patch_size_ / 2.0;
            bool clean = true;
            for (const auto& m : slide.mitoses) {
                if (relax == 0) {
                    if (std::abs(m.x - cx) < keep_out && std::abs(m.y - cy) < keep_out) {
                        clean = false;
                        break;
                    }
                } else if (m.x >= x0 && m.x < x0 + patch_size_ && m.y >= y0 &&
                           m.y < y0 + patch_size_) {
                    clean = false;
                    break;
                }
            }
            if (clean) {
                SampledPatch sp;
                sp.patch = make_patch(slide.image.rgb.data(), slide.image.w,
                                      slide.image.h, x0, y0, patch_size_,
                                      slide.slide_id, slide.scanner);
                sp.is_foreground = false;
                return sp;
            }
        }
    }
    throw Error("PatchSampler: no background window found on slide " + slide.slide_id);
}

SampledPatch PatchSampler::sample_one(Rng& rng) const {
    const int dom = static_cast<int>(rng.uniform_int(ScannerDomain::kNumTraining));
    const bool fg = rng.bernoulli(fg_prob_);
    if (fg) {
        const auto& pool = with_fg_[static_cast<size_t>(dom)];
        return sample_foreground(*pool[rng.uniform_int(pool.size())], rng);
    }
    const auto& pool = all_[static_cast<size_t>(dom)];
    return sample_background(*pool[rng.uniform_int(pool.size())], rng);
}

std::vector<SampledPatch> PatchSampler::sample_batch(Rng& rng, int n) const {
    std::vector<SampledPatch> out;
    out.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) out.push_back(sample_one(rng));
    return out;
}

}  // namespace mitodet::pipeline
