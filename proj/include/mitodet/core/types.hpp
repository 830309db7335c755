#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mitodet/core/error.hpp"
#include "mitodet/core/rng.hpp"

namespace mitodet {

// Scanner identity. Ids 0..3 are the training styles; id 4 is reserved for
// the held-out evaluation style and is never a valid transfer target.
struct ScannerDomain {
    int id = 0;

    static constexpr int kNumTraining = 4;
    static constexpr int kHeldOut = 4;

    bool is_training_domain() const { return id >= 0 && id < kNumTraining; }
    bool is_valid() const { return id >= 0 && id <= kHeldOut; }

    friend bool operator==(const ScannerDomain& a, const ScannerDomain& b) {
        return a.id == b.id;
    }
};

// 4-component non-negative mixing weights over the training scanner styles.
// Components sum to 1 (within 1e-6). One-hot instances select a single
// scanner; interior points mix styles.
struct StyleCode {
    std::array<double, 4> s{0.0, 0.0, 0.0, 0.0};

    double operator[](int i) const { return s[static_cast<size_t>(i)]; }

    double sum() const { return s[0] + s[1] + s[2] + s[3]; }

    bool is_valid() const {
        for (double v : s)
            if (!(v >= 0.0)) return false;
        return std::abs(sum() - 1.0) <= 1e-6;
    }
};

StyleCode one_hot_code(ScannerDomain domain);

// Uniform sample on the 3-simplex: Dirichlet(1,1,1,1) via normalized
// unit exponentials. Deterministic given the rng state.
StyleCode sample_style_code(Rng& rng);

// Square RGB image region in model range [-1,1]. Pixels are stored planar
// (channel, row, col) so they drop straight into network input tensors.
struct Patch {
    int size = 0;
    std::vector<float> pixels;  // 3 * size * size, CHW
    std::string slide_id;
    int x_offset = 0;
    int y_offset = 0;
    ScannerDomain scanner;

    float at(int c, int y, int x) const {
        return pixels[static_cast<size_t>((c * size + y) * size + x)];
    }
    float& at(int c, int y, int x) {
        return pixels[static_cast<size_t>((c * size + y) * size + x)];
    }
};

// Mitotic-figure ground truth. Boxes are always 50x50, so only the center
// is stored; coordinates are in slide pixels (or patch pixels after
// cropping).
struct GroundTruthBox {
    double x = 0.0;
    double y = 0.0;

    static constexpr double kSide = 50.0;
};

// Post-NMS detector output.
struct Detection {
    double x = 0.0;
    double y = 0.0;
    double score = 0.0;

    static constexpr double kSide = 50.0;
};

// Counterclockwise rotation by a multiple of 90 degrees. Origin and scanner
// metadata are preserved. Angles outside {0,90,180,270} -> InvalidAngle.
Patch rotate_patch(const Patch& patch, int angle_degrees);

// Rotates box centers in a size x size patch by the same angle, so labels
// stay aligned with rotate_patch output.
std::vector<GroundTruthBox> rotate_boxes(const std::vector<GroundTruthBox>& boxes,
                                         int patch_size, int angle_degrees);

// [0,255] -> [-1,1] mapping used everywhere a raster image enters the model:
// v / 127.5 - 1. Layout-preserving; out-of-range input -> InvalidPixelRange.
std::vector<float> normalize(const std::vector<float>& image);
std::vector<float> denormalize(const std::vector<float>& pixels);

inline float normalize_value(float v) { return v / 127.5f - 1.0f; }
inline float denormalize_value(float v) { return (v + 1.0f) * 127.5f; }

// Crop a patch out of an interleaved RGB8 image and normalize it.
Patch make_patch(const uint8_t* rgb_interleaved, int image_w, int image_h,
                 int x0, int y0, int patch_size, const std::string& slide_id,
                 ScannerDomain scanner);

}  // namespace mitodet
