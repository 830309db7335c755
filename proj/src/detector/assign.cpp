#include "mitodet/detector/assign.hpp"

#include <algorithm>
#include <cmath>

namespace mitodet::detector {

std::array<double, 4> encode_box(const Box& anchor, const Box& gt) {
    return {(gt.cx - anchor.cx) / anchor.w, (gt.cy - anchor.cy) / anchor.h,
            std::log(gt.w / anchor.w), std::log(gt.h / anchor.h)};
}

Box decode_box(const Box& anchor, const std::array<double, 4>& d) {
    // Clamp the size deltas so a wild regression output cannot overflow exp.
    const double dw = std::clamp(d[2], -4.0, 4.0);
    const double dh = std::clamp(d[3], -4.0, 4.0);
    return {anchor.cx + d[0] * anchor.w, anchor.cy + d[1] * anchor.h,
            anchor.w * std::exp(dw), anchor.h * std::exp(dh)};
}

Assignment assign_targets(const std::vector<Box>& anchors,
                          const std::vector<GroundTruthBox>& ground_truth) {
    Assignment out;
    out.labels.assign(anchors.size(), AnchorLabel::kBackground);
    out.matched_gt.assign(anchors.size(), -1);
    out.regression.assign(anchors.size(), {0.0, 0.0, 0.0, 0.0});
    if (ground_truth.empty()) return out;

    std::vector<Box> gt_boxes;
    gt_boxes.reserve(ground_truth.size());
    for (const auto& g : ground_truth) {
        gt_boxes.push_back({g.x, g.y, GroundTruthBox::kSide, GroundTruthBox::kSide});
    }

    std::vector<double> best_gt_iou(gt_boxes.size(), -1.0);
    std::vector<size_t> best_gt_anchor(gt_boxes.size(), 0);

    for (size_t a = 0; a < anchors.size(); ++a) {
        double best = 0.0;
        int best_idx = -1;
        for (size_t g = 0; g < gt_boxes.size(); ++g) {
            const double v = iou(anchors[a], gt_boxes[g]);
            if (v > best) {
                best = v;
                best_idx = static_cast<int>(g);
            }
            if (v > best_gt_iou[g]) {
                best_gt_iou[g] = v;
                best_gt_anchor[g] = a;
            }
        }
        if (best >= kFgIouThreshold) {
            out.labels[a] = AnchorLabel::kForeground;
            out.matched_gt[a] = best_idx;
        } else if (best >= kBgIouThreshold) {
            out.labels[a] = AnchorLabel::kIgnore;
        }
    }

    // Forced match: the best anchor of each gt is foreground even if its
    // IoU is under the threshold.
    for (size_t g = 0; g < gt_boxes.size(); ++g) {
        const size_t a = best_gt_anchor[g];
        out.labels[a] = AnchorLabel::kForeground;
        out.matched_gt[a] = static_cast<int>(g);
    }

    for (size_t a = 0; a < anchors.size(); ++a) {
        if (out.labels[a] == AnchorLabel::kForeground) {
            out.regression[a] =
                encode_box(anchors[a], gt_boxes[static_cast<size_t>(out.matched_gt[a])]);
            ++out.n_foreground;
        }
    }
    return out;
}

}  // namespace mitodet::detector
