#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace uts {

/// 8-bit single-channel image, row-major. The unit of all pixel processing:
/// B-scan patches, canvases, generated images.
struct Image8 {
    int h = 0;
    int w = 0;
    std::vector<std::uint8_t> px;

    Image8() = default;
    Image8(int height, int width, std::uint8_t fill = 0)
        : h(height), w(width), px(static_cast<std::size_t>(height) * width, fill) {
        if (height <= 0 || width <= 0)
            throw std::invalid_argument("Image8: non-positive dimensions");
    }

    std::uint8_t& at(int y, int x) { return px[static_cast<std::size_t>(y) * w + x]; }
    std::uint8_t at(int y, int x) const { return px[static_cast<std::size_t>(y) * w + x]; }
    std::size_t size() const { return px.size(); }
    bool same_shape(const Image8& o) const { return h == o.h && w == o.w; }

    bool operator==(const Image8& o) const { return h == o.h && w == o.w && px == o.px; }
};

/// Binary image, values restricted to {0,1}.
struct Mask8 {
    int h = 0;
    int w = 0;
    std::vector<std::uint8_t> px;

    Mask8() = default;
    Mask8(int height, int width, std::uint8_t fill = 0)
        : h(height), w(width), px(static_cast<std::size_t>(height) * width, fill) {}

    std::uint8_t& at(int y, int x) { return px[static_cast<std::size_t>(y) * w + x]; }
    std::uint8_t at(int y, int x) const { return px[static_cast<std::size_t>(y) * w + x]; }
    std::size_t size() const { return px.size(); }

    std::size_t foreground_count() const {
        std::size_t n = 0;
        for (auto v : px) n += (v != 0);
        return n;
    }

    bool operator==(const Mask8& o) const { return h == o.h && w == o.w && px == o.px; }
};

/// Axis-aligned box in pixel space: (x,y) top-left corner, w/h extents.
struct Box {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    bool valid() const { return w > 0 && h > 0; }
    bool within(int img_h, int img_w) const {
        return valid() && x >= 0 && y >= 0 && x + w <= img_w && y + h <= img_h;
    }
    long long area() const { return static_cast<long long>(w) * h; }

    bool intersects(const Box& o) const {
        return x < o.x + o.w && o.x < x + w && y < o.y + o.h && o.y < y + h;
    }

    bool operator==(const Box& o) const { return x == o.x && y == o.y && w == o.w && h == o.h; }
};

enum class SourceTag { kReal, kPhantom, kCp, kGan };

std::string to_string(SourceTag tag);
SourceTag source_tag_from_string(const std::string& s);

/// Annotated image: boxes and defect identities are index-aligned.
/// An empty box list marks a canvas candidate.
struct Sample {
    Image8 image;
    std::vector<Box> boxes;
    std::vector<std::string> defect_ids;
    SourceTag tag = SourceTag::kReal;

    void validate(const std::string& context) const;
};

struct DatasetSplit {
    std::vector<Sample> train;
    std::vector<Sample> val;
    std::vector<Sample> test;
};

/// A defect rectangle cut out of an annotated image, with its binary
/// pseudo-mask. The unit of copy/paste synthesis.
struct DefectPatch {
    Image8 crop;
    Mask8 pseudo_mask;
    std::string origin_id;
};

/// Cuts the rectangle `b` out of `img`. Throws if the box leaves the image.
Image8 crop_image(const Image8& img, const Box& b);

/// Mean intensity over the whole image.
double mean_intensity(const Image8& img);

/// Mean intensity of `img` restricted to `b`.
double region_mean(const Image8& img, const Box& b);

/// Mean of pixels selected (mask != 0) or excluded (mask == 0) by a mask.
/// Returns 0 when the selection is empty.
double masked_mean(const Image8& img, const Mask8& mask, bool foreground);

}  // namespace uts
