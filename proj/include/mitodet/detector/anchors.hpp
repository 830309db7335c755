#pragma once

#include <array>
#include <vector>

#include "mitodet/core/error.hpp"

namespace mitodet::detector {

// Axis-aligned box, center-size parameterization, pixel units.
struct Box {
    double cx = 0.0;
    double cy = 0.0;
    double w = 0.0;
    double h = 0.0;
};

double iou(const Box& a, const Box& b);

// Anchor recipe: per-level base size, three scale multipliers 2^(k/3),
// square aspect only (the target boxes are always 50x50).
struct AnchorConfig {
    std::vector<double> base_sizes{50.0, 50.0, 50.0};
    std::array<double, 3> scale_multipliers{1.0, 1.2599210498948732,
                                            1.5874010519681994};
    std::vector<double> aspect_ratios{1.0};
};

// Three square anchors per feature cell, centered on the cell. Count is
// feature_size^2 * 3. `level` indexes base_sizes.
std::vector<Box> build_anchors(const AnchorConfig& cfg, int level, int feature_stride,
                               int feature_size);

// Flattened anchors for a whole pyramid, with per-level bookkeeping to map
// flat anchor indices onto head feature maps.
struct AnchorLayout {
    struct Level {
        int stride = 0;
        int feature_size = 0;
        size_t offset = 0;  // flat index of this level's first anchor
    };
    std::vector<Level> levels;
    std::vector<Box> anchors;  // per level, row-major cells, 3 scales inner

    size_t total() const { return anchors.size(); }
};

AnchorLayout make_anchor_layout(const AnchorConfig& cfg, int patch_size,
                                const std::vector<int>& strides);

}  // namespace mitodet::detector
