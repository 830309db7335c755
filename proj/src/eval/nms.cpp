#include <algorithm>

#include "mitodet/detector/anchors.hpp"
#include "mitodet/eval/eval.hpp"

namespace mitodet::eval {

std::vector<Detection> nms(std::vector<Detection> detections, double iou_threshold) {
    std::sort(detections.begin(), detections.end(),
              [](const Detection& a, const Detection& b) {
                  if (a.score != b.score) return a.score > b.score;
                  if (a.x != b.x) return a.x < b.x;
                  return a.y < b.y;
              });
    std::vector<Detection> kept;
    for (const auto& d : detections) {
        const detector::Box db{d.x, d.y, Detection::kSide, Detection::kSide};
        bool suppressed = false;
        for (const auto& k : kept) {
            const detector::Box kb{k.x, k.y, Detection::kSide, Detection::kSide};
            if (detector::iou(db, kb) > iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(d);
    }
    return kept;
}

}  // namespace mitodet::eval
