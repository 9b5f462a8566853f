#pragma once

#include <cstdint>
#include <vector>

#include "magdr/image.hpp"

namespace magdr {

struct EllipseTemplate {
    double cx, cy, ax, ay;  // center and semi-axes as fractions of the image size
};

// Face-like synthetic layout: background plus n_regions-1 ellipses painted in
// order (later ones overwrite earlier ones). Templates cycle when there are
// more regions than templates.
struct FixtureSpec {
    std::uint64_t seed = 0;
    int size = 64;
    int n_regions = 5;
    int target_index = 2;
    int channels = 3;
    double texture = 0.004;       // std of per-pixel Gaussian texture
    double color_lo = 0.3;
    double color_hi = 0.7;
    double center_jitter = 0.03;  // uniform +/- offset of centers
    double axis_jitter = 0.1;     // axes scaled by uniform [1-j, 1+j]
    double mask_sigma = 1.0;      // smoothing of indicator maps, pixels
    bool quantize = true;         // round image and masks to their 8-bit file encodings
    std::vector<EllipseTemplate> layout = {
        {0.50, 0.56, 0.36, 0.42},  // face
        {0.50, 0.20, 0.36, 0.16},  // hair
        {0.50, 0.46, 0.28, 0.10},  // eyes
        {0.50, 0.76, 0.20, 0.09},  // mouth
    };
};

struct Fixture {
    Image image;
    MaskTensor masks;
};

Fixture synth_fixture(const FixtureSpec& spec);

}  // namespace magdr
