#include <algorithm>

#include "mitodet/eval/eval.hpp"

namespace mitodet::eval {

std::vector<Detection> infer_slide(const detector::DetectorModel<float>& model,
                                   const corpus::Slide& slide, const EvalConfig& cfg,
                                   int patch_size) {
    cfg.validate(patch_size);
    const auto tiles =
        tile_slide(slide.image.w, slide.image.h, patch_size, cfg.tile_overlap);
    const auto layout = detector::make_anchor_layout(
        detector::AnchorConfig{}, patch_size, detector::detector_strides());

    std::vector<Detection> all;
    constexpr int kChunk = 16;
    for (size_t t0 = 0; t0 < tiles.size(); t0 += kChunk) {
        const int n = static_cast<int>(std::min<size_t>(kChunk, tiles.size() - t0));
        nn::Tensor<float> x(n, 3, patch_size, patch_size);
        for (int i = 0; i < n; ++i) {
            const auto& tile = tiles[t0 + static_cast<size_t>(i)];
            Patch p = make_patch(slide.image.rgb.data(), slide.image.w, slide.image.h,
                                 tile.x0, tile.y0, patch_size, slide.slide_id,
                                 slide.scanner);
            std::copy(p.pixels.begin(), p.pixels.end(),
                      x.data() + static_cast<size_t>(i) * p.pixels.size());
        }
        const auto decoded = detector::decode_outputs(model.infer(x), layout);
        for (int i = 0; i < n; ++i) {
            const auto& tile = tiles[t0 + static_cast<size_t>(i)];
            for (const auto& sb : decoded[static_cast<size_t>(i)]) {
                if (sb.score < cfg.score_threshold) continue;
                all.push_back({sb.box.cx + tile.x0, sb.box.cy + tile.y0, sb.score});
            }
        }
    }
    return nms(std::move(all), cfg.nms_iou);
}

}  // namespace mitodet::eval
