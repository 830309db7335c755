#pragma once

#include <map>
#include <string>
#include <vector>

#include "mitodet/core/types.hpp"
#include "mitodet/corpus/corpus_io.hpp"
#include "mitodet/detector/model.hpp"

namespace mitodet::eval {

struct EvalConfig {
    double score_threshold = 0.7;
    double nms_iou = 0.5;
    double match_radius = 25.0;  // half the fixed 50-px box
    int tile_overlap = 64;

    void validate(int patch_size) const {
        if (score_threshold < 0.0 || score_threshold > 1.0 || nms_iou < 0.0 ||
            nms_iou > 1.0) {
            throw ConfigError("EvalConfig: thresholds must be in [0,1]");
        }
        if (match_radius <= 0.0) throw ConfigError("EvalConfig: match_radius must be > 0");
        if (tile_overlap < 0 || tile_overlap >= patch_size) {
            throw ConfigError("EvalConfig: tile_overlap must be in [0, patch_size)");
        }
    }
};

struct TileOffset {
    int x0 = 0;
    int y0 = 0;
};

// Tiles covering every pixel: stride = patch - overlap, last row/column
// shifted inward to stay in bounds.
std::vector<TileOffset> tile_slide(int slide_w, int slide_h, int patch_size,
                                   int overlap);

// Greedy non-maximum suppression on fixed-size (50 px) detection boxes:
// repeatedly keep the highest-scoring detection and drop everything with
// IoU strictly above the threshold against it.
std::vector<Detection> nms(std::vector<Detection> detections, double iou_threshold);

// Tiled slide inference: per-tile detections mapped to slide coordinates,
// score-filtered, then globally NMS'd. No style transfer on this path.
std::vector<Detection> infer_slide(const detector::DetectorModel<float>& model,
                                   const corpus::Slide& slide, const EvalConfig& cfg,
                                   int patch_size);

struct SlideCounts {
    long tp = 0;
    long fp = 0;
    long fn = 0;
};

struct EvalReport {
    long tp = 0;
    long fp = 0;
    long fn = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::map<std::string, SlideCounts> per_slide;
};

EvalReport report_from_counts(long tp, long fp, long fn);

// Greedy one-to-one matching: detections in descending score order claim
// the nearest unclaimed ground truth within match_radius. Detections below
// score_threshold are dropped first. Detection slide ids not present in
// the ground-truth map are an error.
EvalReport evaluate(const std::map<std::string, std::vector<Detection>>& detections,
                    const std::map<std::string, std::vector<GroundTruthBox>>& ground_truth,
                    const EvalConfig& cfg);

}  // namespace mitodet::eval
