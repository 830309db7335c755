#include "mitodet/detector/anchors.hpp"

#include <algorithm>
#include <string>

namespace mitodet::detector {

double iou(const Box& a, const Box& b) {
    const double ax0 = a.cx - a.w / 2, ax1 = a.cx + a.w / 2;
    const double ay0 = a.cy - a.h / 2, ay1 = a.cy + a.h / 2;
    const double bx0 = b.cx - b.w / 2, bx1 = b.cx + b.w / 2;
    const double by0 = b.cy - b.h / 2, by1 = b.cy + b.h / 2;
    const double iw = std::min(ax1, bx1) - std::max(ax0, bx0);
    const double ih = std::min(ay1, by1) - std::max(ay0, by0);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.w * a.h + b.w * b.h - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<Box> build_anchors(const AnchorConfig& cfg, int level, int feature_stride,
                               int feature_size) {
    if (level < 0 || level >= static_cast<int>(cfg.base_sizes.size())) {
        throw InvalidLevel("build_anchors: level " + std::to_string(level) +
                           " out of range [0," +
                           std::to_string(cfg.base_sizes.size()) + ")");
    }
    const double base = cfg.base_sizes[static_cast<size_t>(level)];
    std::vector<Box> anchors;
    anchors.reserve(static_cast<size_t>(feature_size) * feature_size *
                    cfg.scale_multipliers.size());
    for (int y = 0; y < feature_size; ++y) {
        for (int x = 0; x < feature_size; ++x) {
            const double cx = (x + 0.5) * feature_stride;
            const double cy = (y + 0.5) * feature_stride;
            for (double mult : cfg.scale_multipliers) {
                const double side = base * mult;
                anchors.push_back({cx, cy, side, side});
            }
        }
    }
    return anchors;
}

AnchorLayout make_anchor_layout(const AnchorConfig& cfg, int patch_size,
                                const std::vector<int>& strides) {
    AnchorLayout layout;
    for (size_t l = 0; l < strides.size(); ++l) {
        AnchorLayout::Level lvl;
        lvl.stride = strides[l];
        lvl.feature_size = patch_size / strides[l];
        lvl.offset = layout.anchors.size();
        auto a = build_anchors(cfg, static_cast<int>(l), lvl.stride, lvl.feature_size);
        layout.anchors.insert(layout.anchors.end(), a.begin(), a.end());
        layout.levels.push_back(lvl);
    }
    return layout;
}

}  // namespace mitodet::detector
