#pragma once

#include <vector>

#include "alprobe/render.hpp"

namespace alp {

// Normalized frequency with which BRDF sampling visits each direction of an
// equirectangular grid. Values lie in [0, 1] with maximum 1.
struct ConfidenceMap {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    double at(int x, int y) const { return values[static_cast<size_t>(y) * width + x]; }
    // Resamples to another equirectangular resolution (nearest texel).
    ConfidenceMap resized(int w, int h) const;
};

// Histogram of VNDF-sampled incident directions over every visible surface
// point, divided by its maximum. Throws ObjectNotVisible for an empty mask.
ConfidenceMap confidence_map(const AlpModel &model, const PoseScale &pose, const PinholeCamera &cam, int env_width,
                             int env_height, int spp, uint64_t seed, int threads = 0);

} // namespace alp
