#include "uts/core/imageops.hpp"

#include <algorithm>
#include <cmath>

namespace uts {

std::uint8_t clamp_u8(double v) {
    if (v <= 0.0) return 0;
    if (v >= 255.0) return 255;
    return static_cast<std::uint8_t>(std::lround(v));
}

Image8 resize_bilinear(const Image8& img, int out_h, int out_w) {
    Image8 out(out_h, out_w);
    const double sy = static_cast<double>(img.h) / out_h;
    const double sx = static_cast<double>(img.w) / out_w;
    for (int y = 0; y < out_h; ++y) {
        const double fy = (y + 0.5) * sy - 0.5;
        int y0 = static_cast<int>(std::floor(fy));
        const double wy = fy - y0;
        y0 = std::clamp(y0, 0, img.h - 1);
        const int y1 = std::min(y0 + 1, img.h - 1);
        for (int x = 0; x < out_w; ++x) {
            const double fx = (x + 0.5) * sx - 0.5;
            int x0 = static_cast<int>(std::floor(fx));
            const double wx = fx - x0;
            x0 = std::clamp(x0, 0, img.w - 1);
            const int x1 = std::min(x0 + 1, img.w - 1);
            const double top = img.at(y0, x0) * (1.0 - wx) + img.at(y0, x1) * wx;
            const double bot = img.at(y1, x0) * (1.0 - wx) + img.at(y1, x1) * wx;
            out.at(y, x) = clamp_u8(top * (1.0 - wy) + bot * wy);
        }
    }
    return out;
}

Mask8 resize_nearest(const Mask8& mask, int out_h, int out_w) {
    Mask8 out(out_h, out_w);
    for (int y = 0; y < out_h; ++y) {
        const int sy = std::min(static_cast<int>((y + 0.5) * mask.h / out_h), mask.h - 1);
        for (int x = 0; x < out_w; ++x) {
            const int sx = std::min(static_cast<int>((x + 0.5) * mask.w / out_w), mask.w - 1);
            out.at(y, x) = mask.at(sy, sx);
        }
    }
    return out;
}

Image8 flip_horizontal(const Image8& img) {
    Image8 out(img.h, img.w);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) out.at(y, x) = img.at(y, img.w - 1 - x);
    return out;
}

Mask8 flip_horizontal(const Mask8& mask) {
    Mask8 out(mask.h, mask.w);
    for (int y = 0; y < mask.h; ++y)
        for (int x = 0; x < mask.w; ++x) out.at(y, x) = mask.at(y, mask.w - 1 - x);
    return out;
}

Box flip_horizontal(const Box& b, int img_w) {
    return Box{img_w - b.x - b.w, b.y, b.w, b.h};
}

Image8 apply_gain(const Image8& img, double gain) {
    Image8 out(img.h, img.w);
    for (std::size_t i = 0; i < img.px.size(); ++i)
        out.px[i] = clamp_u8(img.px[i] * gain);
    return out;
}

Image8 gaussian_blur(const Image8& img, double sigma) {
    if (sigma <= 0.0) return img;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double ksum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        ksum += kernel[i + radius];
    }
    for (auto& k : kernel) k /= ksum;

    std::vector<double> tmp(img.px.size());
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int xx = std::clamp(x + i, 0, img.w - 1);
                s += kernel[i + radius] * img.at(y, xx);
            }
            tmp[static_cast<std::size_t>(y) * img.w + x] = s;
        }
    Image8 out(img.h, img.w);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int yy = std::clamp(y + i, 0, img.h - 1);
                s += kernel[i + radius] * tmp[static_cast<std::size_t>(yy) * img.w + x];
            }
            out.at(y, x) = clamp_u8(s);
        }
    return out;
}

}  // namespace uts
