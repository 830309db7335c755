#include "mitodet/corpus/synth.hpp"

#include <algorithm>
#include <cmath>

#include "mitodet/core/error.hpp"
#include "mitodet/core/rng.hpp"

namespace mitodet::corpus {

namespace {

constexpr double kLumaR = 0.299, kLumaG = 0.587, kLumaB = 0.114;

double clamp01(double v) { return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v); }

// Smooth value noise: random lattice values, cosine-interpolated.
class ValueNoise {
public:
    ValueNoise(Rng& rng, int size, int cell) : cell_(cell) {
        nx_ = size / cell + 2;
        values_.resize(static_cast<size_t>(nx_) * nx_);
        for (auto& v : values_) v = rng.uniform(-1.0, 1.0);
    }

    double at(double x, double y) const {
        const double fx = x / cell_, fy = y / cell_;
        const int ix = static_cast<int>(fx), iy = static_cast<int>(fy);
        const double tx = smooth(fx - ix), ty = smooth(fy - iy);
        const double v00 = value(ix, iy), v10 = value(ix + 1, iy);
        const double v01 = value(ix, iy + 1), v11 = value(ix + 1, iy + 1);
        return (v00 * (1 - tx) + v10 * tx) * (1 - ty) +
               (v01 * (1 - tx) + v11 * tx) * ty;
    }

private:
    static double smooth(double t) { return t * t * (3.0 - 2.0 * t); }
    double value(int ix, int iy) const {
        ix = std::clamp(ix, 0, nx_ - 1);
        iy = std::clamp(iy, 0, nx_ - 1);
        return values_[static_cast<size_t>(iy) * nx_ + ix];
    }
    int cell_;
    int nx_;
    std::vector<double> values_;
};

struct FloatImage {
    int size;
    std::vector<float> v;  // interleaved RGB, [0,255]

    explicit FloatImage(int s) : size(s), v(static_cast<size_t>(s) * s * 3, 0.0f) {}

    float& at(int y, int x, int c) {
        return v[(static_cast<size_t>(y) * size + x) * 3 + c];
    }
};

// Blends color into the image with the given coverage in [0,1].
void blend(FloatImage& img, int x, int y, const double color[3], double coverage) {
    if (coverage <= 0.0 || x < 0 || y < 0 || x >= img.size || y >= img.size) return;
    for (int c = 0; c < 3; ++c) {
        float& p = img.at(y, x, c);
        p = static_cast<float>(p * (1.0 - coverage) + color[c] * coverage);
    }
}

double soft_edge(double signed_dist, double softness = 1.2) {
    // 1 inside, 0 outside, smooth ramp of width `softness` around the edge.
    const double t = clamp01(0.5 - signed_dist / softness);
    return t * t * (3.0 - 2.0 * t);
}

void draw_ellipse(FloatImage& img, double cx, double cy, double rx, double ry,
                  double theta, const double color[3], double alpha) {
    const double ct = std::cos(theta), st = std::sin(theta);
    const int r = static_cast<int>(std::ceil(std::max(rx, ry))) + 2;
    for (int y = static_cast<int>(cy) - r; y <= static_cast<int>(cy) + r; ++y) {
        for (int x = static_cast<int>(cx) - r; x <= static_cast<int>(cx) + r; ++x) {
            const double dx = (x + 0.5) - cx, dy = (y + 0.5) - cy;
            const double u = dx * ct + dy * st, w = -dx * st + dy * ct;
            const double d = std::sqrt((u / rx) * (u / rx) + (w / ry) * (w / ry));
            blend(img, x, y, color, alpha * soft_edge((d - 1.0) * std::min(rx, ry)));
        }
    }
}

void draw_disk(FloatImage& img, double cx, double cy, double radius,
               const double color[3], double alpha) {
    draw_ellipse(img, cx, cy, radius, radius, 0.0, color, alpha);
}

// Capsule between two points, used for dumbbell bars and starburst spikes.
void draw_bar(FloatImage& img, double x0, double y0, double x1, double y1,
              double half_width, const double color[3], double alpha) {
    const double vx = x1 - x0, vy = y1 - y0;
    const double len2 = vx * vx + vy * vy;
    const int lo_x = static_cast<int>(std::floor(std::min(x0, x1) - half_width - 2));
    const int hi_x = static_cast<int>(std::ceil(std::max(x0, x1) + half_width + 2));
    const int lo_y = static_cast<int>(std::floor(std::min(y0, y1) - half_width - 2));
    const int hi_y = static_cast<int>(std::ceil(std::max(y0, y1) + half_width + 2));
    for (int y = lo_y; y <= hi_y; ++y) {
        for (int x = lo_x; x <= hi_x; ++x) {
            const double px = (x + 0.5) - x0, py = (y + 0.5) - y0;
            double t = len2 > 0.0 ? (px * vx + py * vy) / len2 : 0.0;
            t = clamp01(t);
            const double dx = px - t * vx, dy = py - t * vy;
            const double d = std::sqrt(dx * dx + dy * dy) - half_width;
            blend(img, x, y, color, alpha * soft_edge(d));
        }
    }
}

// Two chromatin lobes joined by a thin bridge (anaphase-like).
void draw_dumbbell(FloatImage& img, Rng& rng, double cx, double cy) {
    const double theta = rng.uniform(0.0, 3.14159265358979323846);
    const double gap = rng.uniform(5.0, 7.0);
    const double lobe = rng.uniform(4.2, 5.4);
    const double color[3] = {58.0 + rng.uniform(-8.0, 8.0),
                             32.0 + rng.uniform(-6.0, 6.0),
                             86.0 + rng.uniform(-8.0, 8.0)};
    const double ox = std::cos(theta) * gap, oy = std::sin(theta) * gap;
    draw_bar(img, cx - ox, cy - oy, cx + ox, cy + oy, 1.6, color, 0.95);
    draw_disk(img, cx - ox, cy - oy, lobe, color, 0.95);
    draw_disk(img, cx + ox, cy + oy, lobe, color, 0.95);
}

// Spiky radial figure (metaphase-like rosette).
void draw_starburst(FloatImage& img, Rng& rng, double cx, double cy) {
    const double color[3] = {60.0 + rng.uniform(-8.0, 8.0),
                             30.0 + rng.uniform(-6.0, 6.0),
                             82.0 + rng.uniform(-8.0, 8.0)};
    const int spikes = 5 + static_cast<int>(rng.uniform_int(3));
    const double phase = rng.uniform(0.0, 6.2831853071795864769);
    const double reach = rng.uniform(8.0, 10.0);
    draw_disk(img, cx, cy, 3.6, color, 0.95);
    for (int i = 0; i < spikes; ++i) {
        const double a = phase + 6.2831853071795864769 * i / spikes;
        draw_bar(img, cx, cy, cx + std::cos(a) * reach, cy + std::sin(a) * reach, 1.5,
                 color, 0.95);
    }
}

}  // namespace

bool ScannerStylePreset::in_range() const {
    for (double g : gain)
        if (g < 0.6 || g > 1.4) return false;
    for (double b : bias)
        if (b < -0.15 || b > 0.15) return false;
    return gamma >= 0.7 && gamma <= 1.4 && saturation >= 0.5 && saturation <= 1.5;
}

double ScannerStylePreset::distance(const ScannerStylePreset& o) const {
    double d = 0.0;
    for (int c = 0; c < 3; ++c) {
        d = std::max(d, std::abs(gain[c] - o.gain[c]));
        d = std::max(d, std::abs(bias[c] - o.bias[c]));
    }
    d = std::max(d, std::abs(gamma - o.gamma));
    d = std::max(d, std::abs(saturation - o.saturation));
    return d;
}

const std::array<ScannerStylePreset, 5>& default_presets() {
    static const std::array<ScannerStylePreset, 5> presets = {{
        // 0: neutral
        {{1.00, 1.00, 1.00}, {0.00, 0.00, 0.00}, 1.00, 1.00},
        // 1: warm, bright
        {{1.25, 1.05, 0.85}, {0.02, 0.00, -0.02}, 0.85, 1.15},
        // 2: cool, dark
        {{0.80, 0.92, 1.25}, {-0.03, 0.00, 0.03}, 1.20, 0.90},
        // 3: washed out
        {{1.05, 1.10, 1.00}, {0.06, 0.05, 0.04}, 0.75, 0.55},
        // 4: held out — cool and strongly saturated; saturation sits outside
        //    the range of 0..3, the rest is within per-parameter bounds
        {{0.85, 0.95, 1.20}, {-0.02, 0.01, 0.03}, 1.15, 1.35},
    }};
    return presets;
}

void apply_scanner_style(std::vector<float>& image, const ScannerStylePreset& preset) {
    for (size_t i = 0; i + 2 < image.size(); i += 3) {
        const double r = image[i], g = image[i + 1], b = image[i + 2];
        const double luma = kLumaR * r + kLumaG * g + kLumaB * b;
        for (int c = 0; c < 3; ++c) {
            double v = luma + preset.saturation * (image[i + c] - luma);
            v = std::clamp(v, 0.0, 255.0);
            double u = preset.gain[c] * std::pow(v / 255.0, preset.gamma) +
                       preset.bias[c];
            image[i + c] = static_cast<float>(clamp01(u) * 255.0);
        }
    }
}

Slide generate_slide(uint64_t seed, ScannerDomain scanner, int size, int n_mitoses,
                     int n_distractors, const ScannerStylePreset* preset_override) {
    if (size < 128) throw Error("generate_slide: size must be >= 128");
    if (n_mitoses < 0) throw Error("generate_slide: n_mitoses must be >= 0");
    if (!scanner.is_valid()) {
        throw InvalidDomain("generate_slide: scanner id " + std::to_string(scanner.id));
    }

    Rng rng(splitmix64(seed));
    FloatImage img(size);

    // Tissue background: pinkish base with two octaves of smooth noise and
    // fine grain.
    ValueNoise coarse(rng, size, 64), fine(rng, size, 17);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const double t = coarse.at(x, y) * 14.0 + fine.at(x, y) * 6.0;
            const double grain = rng.uniform(-3.0, 3.0);
            img.at(y, x, 0) = static_cast<float>(std::clamp(231.0 + t + grain, 0.0, 255.0));
            img.at(y, x, 1) = static_cast<float>(std::clamp(205.0 + t * 1.2 + grain, 0.0, 255.0));
            img.at(y, x, 2) = static_cast<float>(std::clamp(216.0 + t * 0.8 + grain, 0.0, 255.0));
        }
    }

    // Distractor nuclei: smooth ellipses in a nearby hue, clearly rounder
    // and lighter than mitotic figures.
    for (int i = 0; i < n_distractors; ++i) {
        const double cx = rng.uniform(4.0, size - 4.0);
        const double cy = rng.uniform(4.0, size - 4.0);
        const double rx = rng.uniform(4.0, 8.5);
        const double ry = rx * rng.uniform(0.65, 1.0);
        const double theta = rng.uniform(0.0, 3.14159265358979323846);
        const double shade = rng.uniform(0.0, 30.0);
        const double color[3] = {122.0 + shade, 92.0 + shade, 150.0 + shade};
        draw_ellipse(img, cx, cy, rx, ry, theta, color, rng.uniform(0.55, 0.8));
    }

    // Mitotic figures: rejection-sample centers with border and spacing
    // constraints.
    std::vector<GroundTruthBox> centers;
    const double margin = 25.0;
    const int max_attempts = 1000 * std::max(1, n_mitoses);
    int attempts = 0;
    while (static_cast<int>(centers.size()) < n_mitoses) {
        if (++attempts > max_attempts) {
            throw PlacementFailure(
                "generate_slide: could not place " + std::to_string(n_mitoses) +
                " mitoses on a " + std::to_string(size) + " px slide after " +
                std::to_string(max_attempts) + " attempts");
        }
        const double cx = rng.uniform(margin, size - margin);
        const double cy = rng.uniform(margin, size - margin);
        bool ok = true;
        for (const auto& c : centers) {
            const double dx = c.x - cx, dy = c.y - cy;
            if (dx * dx + dy * dy < 50.0 * 50.0) {
                ok = false;
                break;
            }
        }
        if (ok) centers.push_back({cx, cy});
    }
    for (const auto& c : centers) {
        if (rng.bernoulli(0.5)) {
            draw_dumbbell(img, rng, c.x, c.y);
        } else {
            draw_starburst(img, rng, c.x, c.y);
        }
    }

    const ScannerStylePreset& preset =
        preset_override ? *preset_override
                        : default_presets()[static_cast<size_t>(scanner.id)];
    apply_scanner_style(img.v, preset);

    Slide slide;
    slide.scanner = scanner;
    slide.mitoses = std::move(centers);
    slide.image.w = size;
    slide.image.h = size;
    slide.image.rgb.resize(img.v.size());
    for (size_t i = 0; i < img.v.size(); ++i) {
        slide.image.rgb[i] = static_cast<uint8_t>(
            std::lround(std::clamp(static_cast<double>(img.v[i]), 0.0, 255.0)));
    }
    return slide;
}

}  // namespace mitodet::corpus
