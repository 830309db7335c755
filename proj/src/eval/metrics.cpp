#include <algorithm>
#include <cmath>

#include "mitodet/eval/eval.hpp"

namespace mitodet::eval {

EvalReport report_from_counts(long tp, long fp, long fn) {
    EvalReport r;
    r.tp = tp;
    r.fp = fp;
    r.fn = fn;
    r.precision = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
    r.recall = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
    r.f1 = (r.precision + r.recall) > 0.0
               ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
               : 0.0;
    return r;
}

EvalReport evaluate(const std::map<std::string, std::vector<Detection>>& detections,
                    const std::map<std::string, std::vector<GroundTruthBox>>& ground_truth,
                    const EvalConfig& cfg) {
    // Unknown slide ids are a data error, reported together.
    std::string unknown;
    for (const auto& [slide_id, _] : detections) {
        if (ground_truth.find(slide_id) == ground_truth.end()) {
            unknown += unknown.empty() ? slide_id : ", " + slide_id;
        }
    }
    if (!unknown.empty()) {
        throw Error("evaluate: predictions reference unknown slide ids: " + unknown);
    }

    long tp = 0, fp = 0, fn = 0;
    std::map<std::string, SlideCounts> per_slide;

    for (const auto& [slide_id, gts] : ground_truth) {
        std::vector<Detection> dets;
        if (auto it = detections.find(slide_id); it != detections.end()) {
            for (const auto& d : it->second) {
                if (d.score >= cfg.score_threshold) dets.push_back(d);
            }
        }
        std::sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
            if (a.score != b.score) return a.score > b.score;
            if (a.x != b.x) return a.x < b.x;
            return a.y < b.y;
        });

        std::vector<bool> claimed(gts.size(), false);
        SlideCounts sc;
        for (const auto& d : dets) {
            int best = -1;
            double best_dist = cfg.match_radius;
            for (size_t g = 0; g < gts.size(); ++g) {
                if (claimed[g]) continue;
                const double dist = std::hypot(d.x - gts[g].x, d.y - gts[g].y);
                if (dist <= best_dist) {
                    best_dist = dist;
                    best = static_cast<int>(g);
                }
            }
            if (best >= 0) {
                claimed[static_cast<size_t>(best)] = true;
                ++sc.tp;
            } else {
                ++sc.fp;
            }
        }
        sc.fn = static_cast<long>(gts.size()) - sc.tp;
        tp += sc.tp;
        fp += sc.fp;
        fn += sc.fn;
        per_slide[slide_id] = sc;
    }

    EvalReport r = report_from_counts(tp, fp, fn);
    r.per_slide = std::move(per_slide);
    return r;
}

}  // namespace mitodet::eval
