#pragma once

#include "uts/core/image.hpp"
#include "uts/core/imageops.hpp"
#include "uts/core/rng.hpp"

namespace uts {

/// Mirrors an image and its boxes in place.
void hflip_inplace(Image8& img, std::vector<Box>& boxes);

/// Upscales by `scale` >= 1, then crops back to the original size at the
/// fractional offset (ox, oy in [0,1]). Boxes are scaled, shifted and
/// clipped; a box is dropped when less than half of its scaled area
/// survives the crop. The paired mask, when given, gets the identical
/// geometry (nearest-neighbour so it stays binary).
void scale_crop_inplace(Image8& img, std::vector<Box>& boxes, double scale, double ox,
                        double oy, Mask8* paired_mask = nullptr);

/// y = clamp(round(gain * x + bias)).
void value_jitter_inplace(Image8& img, double gain, double bias);

}  // namespace uts
