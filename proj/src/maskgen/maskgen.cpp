#include "uts/maskgen/maskgen.hpp"

#include <algorithm>
#include <cmath>

#include "uts/core/errors.hpp"
#include "uts/core/rng.hpp"

namespace uts::maskgen {

namespace {

void rasterize(Mask8& mask, const Box& b) {
    for (int y = b.y; y < b.y + b.h; ++y)
        for (int x = b.x; x < b.x + b.w; ++x) mask.at(y, x) = 1;
}

}  // namespace

PositionMask mask_from_annotations(const Sample& sample) {
    PositionMask out;
    out.pixels = Mask8(sample.image.h, sample.image.w);
    out.boxes = sample.boxes;
    for (const Box& b : sample.boxes) {
        if (!b.within(sample.image.h, sample.image.w))
            throw ValidationError("mask_from_annotations: box outside image");
        rasterize(out.pixels, b);
    }
    return out;
}

std::vector<AspectEntry> extract_aspect_ratios(const std::vector<Sample>& samples) {
    std::vector<AspectEntry> out;
    for (const Sample& s : samples)
        for (const Box& b : s.boxes) {
            if (!b.valid()) throw ValidationError("extract_aspect_ratios: degenerate box");
            out.push_back(AspectEntry{static_cast<double>(b.w) / b.h, b.w});
        }
    if (out.empty()) throw ValidationError("extract_aspect_ratios: no annotations");
    return out;
}

PositionMask sample_position_mask(const std::vector<AspectEntry>& pool, int image_size,
                                  int count_lo, int count_hi, std::uint64_t seed) {
    if (pool.empty()) throw ConfigError("sample_position_mask: empty aspect pool");
    if (count_lo < 1 || count_hi < count_lo)
        throw ConfigError("sample_position_mask: bad count range");
    if (image_size < 2) throw ConfigError("sample_position_mask: image_size too small");

    Rng rng(seed, /*stream=*/4000);
    const int want = static_cast<int>(rng.uniform_int(count_lo, count_hi));

    constexpr int kProposalBudget = 200;
    for (int n = want; n >= 1; --n) {
        std::vector<Box> placed;
        int attempts = 0;
        while (static_cast<int>(placed.size()) < n && attempts < kProposalBudget) {
            ++attempts;
            const AspectEntry& e = pool[rng.index(pool.size())];
            const int w = std::clamp(e.width, 1, image_size - 1);
            const int h = std::clamp(static_cast<int>(std::lround(e.width / e.ratio)), 1,
                                     image_size - 1);
            Box b;
            b.w = w;
            b.h = h;
            b.x = static_cast<int>(rng.uniform_int(0, image_size - w));
            b.y = static_cast<int>(rng.uniform_int(0, image_size - h));
            bool clash = false;
            for (const Box& prev : placed)
                if (b.intersects(prev)) { clash = true; break; }
            if (!clash) placed.push_back(b);
        }
        if (static_cast<int>(placed.size()) == n) {
            PositionMask out;
            out.pixels = Mask8(image_size, image_size);
            out.boxes = std::move(placed);
            for (const Box& b : out.boxes) rasterize(out.pixels, b);
            return out;
        }
    }
    throw ValidationError("sample_position_mask: could not place a single box");
}

std::vector<PositionMask> sample_position_masks(const std::vector<AspectEntry>& pool,
                                                int image_size, int count_lo, int count_hi,
                                                int count, std::uint64_t seed) {
    std::vector<PositionMask> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        Rng mix(seed, 4100 + static_cast<std::uint64_t>(i));
        out.push_back(sample_position_mask(pool, image_size, count_lo, count_hi, mix.bits()));
    }
    return out;
}

}  // namespace uts::maskgen
