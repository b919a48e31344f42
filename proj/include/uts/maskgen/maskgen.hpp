#pragma once

#include <cstdint>
#include <vector>

#include "uts/core/image.hpp"

namespace uts::maskgen {

/// Binary conditioning image: 1 exactly on the union of its boxes.
struct PositionMask {
    Mask8 pixels;
    std::vector<Box> boxes;
};

/// Paired mask for GAN training: the sample's true boxes rasterized.
PositionMask mask_from_annotations(const Sample& sample);

/// (w/h, w) of one annotation. Widths anchor absolute scale when sampling.
struct AspectEntry {
    double ratio;
    int width;
};

/// One entry per annotation across all samples; errors on an empty set.
std::vector<AspectEntry> extract_aspect_ratios(const std::vector<Sample>& samples);

/// Random mask: box count uniform in [count_lo, count_hi], shapes resampled
/// jointly from the pool, placed uniformly without overlap. If placement
/// keeps failing the count is lowered one at a time down to 1 before giving
/// up. Deterministic per seed.
PositionMask sample_position_mask(const std::vector<AspectEntry>& pool, int image_size,
                                  int count_lo, int count_hi, std::uint64_t seed);

std::vector<PositionMask> sample_position_masks(const std::vector<AspectEntry>& pool,
                                                int image_size, int count_lo, int count_hi,
                                                int count, std::uint64_t seed);

}  // namespace uts::maskgen
