#include "mitodet/core/types.hpp"

#include <cmath>

namespace mitodet {

StyleCode one_hot_code(ScannerDomain domain) {
    if (!domain.is_training_domain()) {
        throw InvalidDomain("one_hot_code: domain id " + std::to_string(domain.id) +
                            " is not a training domain (expected 0..3)");
    }
    StyleCode code;
    code.s[static_cast<size_t>(domain.id)] = 1.0;
    return code;
}

StyleCode sample_style_code(Rng& rng) {
    StyleCode code;
    double total = 0.0;
    for (auto& v : code.s) {
        double u = rng.uniform();
        while (u <= 0.0) u = rng.uniform();
        v = -std::log(u);  // Exp(1) == Gamma(1,1)
        total += v;
    }
    for (auto& v : code.s) v /= total;
    return code;
}

Patch rotate_patch(const Patch& patch, int angle_degrees) {
    if (angle_degrees != 0 && angle_degrees != 90 && angle_degrees != 180 &&
        angle_degrees != 270) {
        throw InvalidAngle("rotate_patch: angle " + std::to_string(angle_degrees) +
                           " not in {0,90,180,270}");
    }
    if (angle_degrees == 0) return patch;

    const int n = patch.size;
    Patch out = patch;
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < n; ++y) {
            for (int x = 0; x < n; ++x) {
                float v;
                switch (angle_degrees) {
                    case 90:  v = patch.at(c, x, n - 1 - y); break;
                    case 180: v = patch.at(c, n - 1 - y, n - 1 - x); break;
                    default:  v = patch.at(c, n - 1 - x, y); break;  // 270
                }
                out.at(c, y, x) = v;
            }
        }
    }
    return out;
}

std::vector<GroundTruthBox> rotate_boxes(const std::vector<GroundTruthBox>& boxes,
                                         int patch_size, int angle_degrees) {
    if (angle_degrees != 0 && angle_degrees != 90 && angle_degrees != 180 &&
        angle_degrees != 270) {
        throw InvalidAngle("rotate_boxes: angle " + std::to_string(angle_degrees) +
                           " not in {0,90,180,270}");
    }
    // Continuous coordinates: rotation about the patch center, n = size.
    // A point (x, y) maps with the same index permutation as the pixels.
    const double n = static_cast<double>(patch_size);
    std::vector<GroundTruthBox> out;
    out.reserve(boxes.size());
    for (const auto& b : boxes) {
        GroundTruthBox r = b;
        switch (angle_degrees) {
            case 90:  r.x = b.y;         r.y = n - b.x; break;
            case 180: r.x = n - b.x;     r.y = n - b.y; break;
            case 270: r.x = n - b.y;     r.y = b.x;     break;
            default: break;
        }
        out.push_back(r);
    }
    return out;
}

std::vector<float> normalize(const std::vector<float>& image) {
    std::vector<float> out(image.size());
    for (size_t i = 0; i < image.size(); ++i) {
        float v = image[i];
        if (!(v >= 0.0f && v <= 255.0f)) {
            throw InvalidPixelRange("normalize: value " + std::to_string(v) +
                                    " outside [0,255] at index " + std::to_string(i));
        }
        out[i] = normalize_value(v);
    }
    return out;
}

std::vector<float> denormalize(const std::vector<float>& pixels) {
    std::vector<float> out(pixels.size());
    for (size_t i = 0; i < pixels.size(); ++i) {
        float v = pixels[i];
        if (!(v >= -1.0f && v <= 1.0f)) {
            throw InvalidPixelRange("denormalize: value " + std::to_string(v) +
                                    " outside [-1,1] at index " + std::to_string(i));
        }
        out[i] = denormalize_value(v);
    }
    return out;
}

Patch make_patch(const uint8_t* rgb, int image_w, int image_h, int x0, int y0,
                 int patch_size, const std::string& slide_id, ScannerDomain scanner) {
    if (x0 < 0 || y0 < 0 || x0 + patch_size > image_w || y0 + patch_size > image_h) {
        throw ShapeError("make_patch: window [" + std::to_string(x0) + "," +
                         std::to_string(y0) + ")+" + std::to_string(patch_size) +
                         " outside image " + std::to_string(image_w) + "x" +
                         std::to_string(image_h));
    }
    Patch p;
    p.size = patch_size;
    p.pixels.resize(static_cast<size_t>(3) * patch_size * patch_size);
    p.slide_id = slide_id;
    p.x_offset = x0;
    p.y_offset = y0;
    p.scanner = scanner;
    for (int y = 0; y < patch_size; ++y) {
        const uint8_t* row = rgb + (static_cast<size_t>(y0 + y) * image_w + x0) * 3;
        for (int x = 0; x < patch_size; ++x) {
            for (int c = 0; c < 3; ++c) {
                p.at(c, y, x) = normalize_value(static_cast<float>(row[x * 3 + c]));
            }
        }
    }
    return p;
}

}  // namespace mitodet
