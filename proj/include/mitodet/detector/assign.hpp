#pragma once

#include <array>
#include <vector>

#include "mitodet/core/types.hpp"
#include "mitodet/detector/anchors.hpp"

namespace mitodet::detector {

enum class AnchorLabel : uint8_t { kBackground = 0, kForeground = 1, kIgnore = 2 };

struct Assignment {
    std::vector<AnchorLabel> labels;
    std::vector<int> matched_gt;                     // -1 for non-foreground
    std::vector<std::array<double, 4>> regression;   // valid for foreground
    int n_foreground = 0;
};

// Center/size offsets of gt relative to anchor:
//   (dx, dy, dw, dh) = ((gx-ax)/aw, (gy-ay)/ah, log(gw/aw), log(gh/ah))
std::array<double, 4> encode_box(const Box& anchor, const Box& gt);
Box decode_box(const Box& anchor, const std::array<double, 4>& offsets);

// IoU >= 0.5 -> foreground, < 0.4 -> background, otherwise ignore. Each
// ground truth additionally claims its single highest-IoU anchor, so every
// gt has at least one foreground anchor.
Assignment assign_targets(const std::vector<Box>& anchors,
                          const std::vector<GroundTruthBox>& ground_truth);

constexpr double kFgIouThreshold = 0.5;
constexpr double kBgIouThreshold = 0.4;

}  // namespace mitodet::detector
