#pragma once

#include <array>
#include <string>
#include <vector>

#include "mitodet/core/types.hpp"
#include "mitodet/corpus/png_io.hpp"

namespace mitodet::corpus {

// Pure per-pixel color transform standing in for a scanner's color
// response. Geometry is untouched, so annotations are preset-independent.
struct ScannerStylePreset {
    std::array<double, 3> gain{1.0, 1.0, 1.0};     // each in [0.6, 1.4]
    std::array<double, 3> bias{0.0, 0.0, 0.0};     // each in [-0.15, 0.15]
    double gamma = 1.0;                            // in [0.7, 1.4]
    double saturation = 1.0;                       // in [0.5, 1.5]

    bool in_range() const;

    // L-inf distance over the 8 parameters.
    double distance(const ScannerStylePreset& o) const;
};

// Five fixed presets: 0..3 for training, 4 held out (outside the convex
// hull of 0..3 in saturation, gamma and green gain).
const std::array<ScannerStylePreset, 5>& default_presets();

struct Slide {
    ImageU8 image;
    std::string slide_id;
    ScannerDomain scanner;
    std::vector<GroundTruthBox> mitoses;
};

// Per-pixel style transform: pull each channel toward luma by the
// saturation factor, then gain * (v/255)^gamma + bias, clamped to [0,1]
// and rescaled to [0,255].
void apply_scanner_style(std::vector<float>& image, const ScannerStylePreset& preset);

// Renders one synthetic slide: textured tissue background, elliptical
// distractor nuclei and shape-distinct mitotic figures (dumbbells and
// starbursts, ~20 px). Mitosis centers stay >= 25 px from every border
// and >= 50 px apart. Fully deterministic in (seed, scanner, size, counts).
Slide generate_slide(uint64_t seed, ScannerDomain scanner, int size, int n_mitoses,
                     int n_distractors,
                     const ScannerStylePreset* preset_override = nullptr);

}  // namespace mitodet::corpus
