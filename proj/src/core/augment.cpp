#include "uts/core/augment.hpp"

#include <algorithm>
#include <cmath>

namespace uts {

void hflip_inplace(Image8& img, std::vector<Box>& boxes) {
    const int w = img.w;
    img = flip_horizontal(img);
    for (Box& b : boxes) b = flip_horizontal(b, w);
}

void scale_crop_inplace(Image8& img, std::vector<Box>& boxes, double scale, double ox,
                        double oy, Mask8* paired_mask) {
    if (scale < 1.0) scale = 1.0;
    const int h = img.h, w = img.w;
    const int sh = std::max(h, static_cast<int>(std::lround(h * scale)));
    const int sw = std::max(w, static_cast<int>(std::lround(w * scale)));
    const int x0 = static_cast<int>(std::lround(ox * (sw - w)));
    const int y0 = static_cast<int>(std::lround(oy * (sh - h)));

    const Image8 big = resize_bilinear(img, sh, sw);
    Image8 out(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.at(y, x) = big.at(y0 + y, x0 + x);
    img = std::move(out);

    if (paired_mask) {
        const Mask8 bigm = resize_nearest(*paired_mask, sh, sw);
        Mask8 outm(h, w);
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) outm.at(y, x) = bigm.at(y0 + y, x0 + x);
        *paired_mask = std::move(outm);
    }

    const double fy = static_cast<double>(sh) / h;
    const double fx = static_cast<double>(sw) / w;
    std::vector<Box> kept;
    for (const Box& b : boxes) {
        const int nx0 = static_cast<int>(std::lround(b.x * fx)) - x0;
        const int ny0 = static_cast<int>(std::lround(b.y * fy)) - y0;
        const int nw = std::max(1, static_cast<int>(std::lround(b.w * fx)));
        const int nh = std::max(1, static_cast<int>(std::lround(b.h * fy)));
        const int cx0 = std::max(0, nx0), cy0 = std::max(0, ny0);
        const int cx1 = std::min(w, nx0 + nw), cy1 = std::min(h, ny0 + nh);
        if (cx1 <= cx0 || cy1 <= cy0) continue;
        const long long clipped = static_cast<long long>(cx1 - cx0) * (cy1 - cy0);
        if (clipped * 2 < static_cast<long long>(nw) * nh) continue;
        kept.push_back(Box{cx0, cy0, cx1 - cx0, cy1 - cy0});
    }
    boxes = std::move(kept);
}

void value_jitter_inplace(Image8& img, double gain, double bias) {
    for (auto& p : img.px) p = clamp_u8(gain * p + bias);
}

}  // namespace uts
