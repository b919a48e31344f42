#include "uts/core/image.hpp"

#include "uts/core/errors.hpp"

namespace uts {

std::string to_string(SourceTag tag) {
    switch (tag) {
        case SourceTag::kReal: return "real";
        case SourceTag::kPhantom: return "phantom";
        case SourceTag::kCp: return "cp";
        case SourceTag::kGan: return "gan";
    }
    return "real";
}

SourceTag source_tag_from_string(const std::string& s) {
    if (s == "real") return SourceTag::kReal;
    if (s == "phantom") return SourceTag::kPhantom;
    if (s == "cp") return SourceTag::kCp;
    if (s == "gan") return SourceTag::kGan;
    throw ValidationError("unknown source tag: " + s);
}

void Sample::validate(const std::string& context) const {
    if (boxes.size() != defect_ids.size())
        throw ValidationError(context + ": boxes/defect_ids length mismatch");
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const Box& b = boxes[i];
        if (!b.within(image.h, image.w))
            throw ValidationError(context + ": box " + std::to_string(i) + " [" +
                                  std::to_string(b.x) + "," + std::to_string(b.y) + "," +
                                  std::to_string(b.w) + "," + std::to_string(b.h) +
                                  "] outside " + std::to_string(image.w) + "x" +
                                  std::to_string(image.h) + " image");
    }
}

Image8 crop_image(const Image8& img, const Box& b) {
    if (!b.within(img.h, img.w)) throw ValidationError("crop_image: box outside image");
    Image8 out(b.h, b.w);
    for (int y = 0; y < b.h; ++y)
        for (int x = 0; x < b.w; ++x) out.at(y, x) = img.at(b.y + y, b.x + x);
    return out;
}

double mean_intensity(const Image8& img) {
    if (img.px.empty()) return 0.0;
    double s = 0.0;
    for (auto v : img.px) s += v;
    return s / static_cast<double>(img.px.size());
}

double region_mean(const Image8& img, const Box& b) {
    if (!b.within(img.h, img.w)) throw ValidationError("region_mean: box outside image");
    double s = 0.0;
    for (int y = 0; y < b.h; ++y)
        for (int x = 0; x < b.w; ++x) s += img.at(b.y + y, b.x + x);
    return s / static_cast<double>(b.area());
}

double masked_mean(const Image8& img, const Mask8& mask, bool foreground) {
    if (img.h != mask.h || img.w != mask.w)
        throw ValidationError("masked_mean: image/mask shape mismatch");
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < img.px.size(); ++i) {
        const bool fg = mask.px[i] != 0;
        if (fg == foreground) {
            s += img.px[i];
            ++n;
        }
    }
    return n == 0 ? 0.0 : s / static_cast<double>(n);
}

}  // namespace uts
