#pragma once

#include "uts/core/image.hpp"

namespace uts {

/// Bilinear resample to out_h x out_w.
Image8 resize_bilinear(const Image8& img, int out_h, int out_w);

/// Nearest-neighbour resample; keeps binary masks binary.
Mask8 resize_nearest(const Mask8& mask, int out_h, int out_w);

Image8 flip_horizontal(const Image8& img);
Mask8 flip_horizontal(const Mask8& mask);

/// Mirrors a box for an image of width `img_w`.
Box flip_horizontal(const Box& b, int img_w);

/// Multiplies all pixels by `gain`, clamps to [0,255], rounds to nearest.
Image8 apply_gain(const Image8& img, double gain);

/// Separable Gaussian blur, truncated at 3 sigma. sigma <= 0 returns a copy.
Image8 gaussian_blur(const Image8& img, double sigma);

std::uint8_t clamp_u8(double v);

}  // namespace uts
