#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "uts/core/errors.hpp"
#include "uts/maskgen/maskgen.hpp"

using namespace uts;
using namespace uts::maskgen;

namespace {

// Independent rasterizer: paint each box, count via set semantics.
Mask8 rasterize_reference(int h, int w, const std::vector<Box>& boxes) {
    Mask8 m(h, w);
    for (const auto& b : boxes)
        for (int y = b.y; y < b.y + b.h; ++y)
            for (int x = b.x; x < b.x + b.w; ++x) m.at(y, x) = 1;
    return m;
}

Sample make_sample(int h, int w, std::vector<Box> boxes) {
    Sample s;
    s.image = Image8(h, w, 128);
    s.boxes = std::move(boxes);
    s.defect_ids.assign(s.boxes.size(), "d");
    s.tag = SourceTag::kReal;
    return s;
}

}  // namespace

TEST_CASE("mask_from_annotations: zero boxes gives an all-zero mask") {
    const auto pm = mask_from_annotations(make_sample(16, 16, {}));
    CHECK(pm.pixels.foreground_count() == 0);
    CHECK(pm.boxes.empty());
    CHECK(pm.pixels.h == 16);
    CHECK(pm.pixels.w == 16);
}

TEST_CASE("mask_from_annotations: single 10x10 box covers exactly 100 pixels") {
    const auto pm = mask_from_annotations(make_sample(32, 32, {Box{5, 7, 10, 10}}));
    CHECK(pm.pixels.foreground_count() == 100);
    for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x) {
            const bool inside = y >= 7 && y < 17 && x >= 5 && x < 15;
            CHECK(pm.pixels.at(y, x) == (inside ? 1 : 0));
        }
    REQUIRE(pm.boxes.size() == 1);
    CHECK(pm.boxes[0] == Box{5, 7, 10, 10});
}

TEST_CASE("mask_from_annotations: overlapping boxes rasterize as their union") {
    const std::vector<Box> boxes{Box{2, 2, 6, 6}, Box{5, 5, 6, 6}};
    const auto pm = mask_from_annotations(make_sample(20, 20, boxes));
    const Mask8 want = rasterize_reference(20, 20, boxes);
    CHECK(pm.pixels.px == want.px);
    // union cardinality: 36 + 36 - 9 overlap = 63
    CHECK(pm.pixels.foreground_count() == 63);
}

TEST_CASE("extract_aspect_ratios: hand case and multi-sample pooling") {
    // one 40x20 annotation: ratio w/h = 2.0, width 40
    auto pool = extract_aspect_ratios({make_sample(64, 64, {Box{0, 0, 40, 20}})});
    REQUIRE(pool.size() == 1);
    CHECK(pool[0].ratio == doctest::Approx(2.0));
    CHECK(pool[0].width == 40);

    // pooling across samples keeps one entry per annotation
    pool = extract_aspect_ratios({make_sample(64, 64, {Box{0, 0, 10, 10}, Box{20, 20, 30, 10}}),
                                  make_sample(64, 64, {Box{1, 1, 12, 4}})});
    REQUIRE(pool.size() == 3);
    std::vector<double> ratios;
    for (const auto& e : pool) ratios.push_back(e.ratio);
    std::sort(ratios.begin(), ratios.end());
    CHECK(ratios[0] == doctest::Approx(1.0));
    CHECK(ratios[1] == doctest::Approx(3.0));
    CHECK(ratios[2] == doctest::Approx(3.0));
}

TEST_CASE("extract_aspect_ratios: annotation-free input is an error") {
    CHECK_THROWS_AS(extract_aspect_ratios({make_sample(64, 64, {})}), ValidationError);
    CHECK_THROWS_AS(extract_aspect_ratios({}), ValidationError);
}

TEST_CASE("sample_position_mask: forced single shape reproduces pool geometry") {
    // pool has one shape: ratio 2.0 at width 40 -> sampled boxes stay 2:1-ish
    const std::vector<AspectEntry> pool{{2.0, 40}};
    const auto pm = sample_position_mask(pool, 256, 1, 1, 5);
    REQUIRE(pm.boxes.size() == 1);
    const Box& b = pm.boxes[0];
    CHECK(b.within(256, 256));
    CHECK(b.w >= 1);
    CHECK(b.h >= 1);
    const double ratio = static_cast<double>(b.w) / static_cast<double>(b.h);
    // jittered around the pool entry, but nowhere near a different regime
    CHECK(ratio > 1.0);
    CHECK(ratio < 4.0);
    // mask pixels are exactly the box
    CHECK(pm.pixels.foreground_count() ==
          static_cast<std::size_t>(b.w) * static_cast<std::size_t>(b.h));
}

TEST_CASE("sample_position_mask: pixels equal the union of the reported boxes") {
    const std::vector<AspectEntry> pool{{1.0, 20}, {2.5, 35}, {0.5, 12}};
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const auto pm = sample_position_mask(pool, 128, 1, 4, seed);
        const Mask8 want = rasterize_reference(128, 128, pm.boxes);
        CHECK(pm.pixels.px == want.px);
    }
}

TEST_CASE("sample_position_mask: boxes stay in bounds and never overlap") {
    const std::vector<AspectEntry> pool{{1.0, 24}, {3.0, 48}, {0.8, 16}};
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const auto pm = sample_position_mask(pool, 96, 1, 4, seed);
        CHECK(pm.boxes.size() >= 1);
        CHECK(pm.boxes.size() <= 4);
        for (const auto& b : pm.boxes) CHECK(b.within(96, 96));
        for (std::size_t i = 0; i < pm.boxes.size(); ++i)
            for (std::size_t j = i + 1; j < pm.boxes.size(); ++j)
                CHECK_FALSE(pm.boxes[i].intersects(pm.boxes[j]));
    }
}

TEST_CASE("sample_position_mask: box count is near-uniform over [1,4]") {
    const std::vector<AspectEntry> pool{{1.0, 10}, {2.0, 14}};
    std::map<std::size_t, int> freq;
    const int n = 2000;
    const auto masks = sample_position_masks(pool, 256, 1, 4, n, 11);
    REQUIRE(masks.size() == static_cast<std::size_t>(n));
    for (const auto& pm : masks) freq[pm.boxes.size()]++;
    for (std::size_t k = 1; k <= 4; ++k) {
        const double p = static_cast<double>(freq[k]) / n;
        // boxes are small vs the canvas; placement almost never downgrades the
        // count, so each of the four counts keeps close to 1/4
        CHECK(p > 0.20);
        CHECK(p < 0.30);
    }
}

TEST_CASE("sample_position_mask is deterministic per seed") {
    const std::vector<AspectEntry> pool{{1.5, 30}, {0.7, 18}};
    const auto a = sample_position_mask(pool, 128, 1, 4, 99);
    const auto b = sample_position_mask(pool, 128, 1, 4, 99);
    CHECK(a.pixels.px == b.pixels.px);
    CHECK(a.boxes == b.boxes);
    const auto c = sample_position_mask(pool, 128, 1, 4, 100);
    CHECK(!(c.pixels.px == a.pixels.px && c.boxes == a.boxes));
}

TEST_CASE("sample_position_masks yields distinct masks from one seed") {
    const std::vector<AspectEntry> pool{{1.0, 20}};
    const auto masks = sample_position_masks(pool, 128, 1, 2, 10, 4);
    REQUIRE(masks.size() == 10);
    int distinct_pairs = 0;
    for (std::size_t i = 0; i < masks.size(); ++i)
        for (std::size_t j = i + 1; j < masks.size(); ++j)
            if (masks[i].pixels.px != masks[j].pixels.px) ++distinct_pairs;
    CHECK(distinct_pairs > 0);
}

TEST_CASE("sample_position_mask: crowded canvas lowers the count instead of failing") {
    // boxes nearly the size of the canvas: only one can ever fit
    const std::vector<AspectEntry> pool{{1.0, 50}};
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto pm = sample_position_mask(pool, 64, 3, 4, seed);
        CHECK(pm.boxes.size() >= 1);
        for (const auto& b : pm.boxes) CHECK(b.within(64, 64));
        for (std::size_t i = 0; i < pm.boxes.size(); ++i)
            for (std::size_t j = i + 1; j < pm.boxes.size(); ++j)
                CHECK_FALSE(pm.boxes[i].intersects(pm.boxes[j]));
    }
}

TEST_CASE("sample_position_mask validates its arguments") {
    const std::vector<AspectEntry> pool{{1.0, 20}};
    CHECK_THROWS_AS(sample_position_mask({}, 128, 1, 4, 0), ConfigError);
    CHECK_THROWS_AS(sample_position_mask(pool, 0, 1, 4, 0), ConfigError);
    CHECK_THROWS_AS(sample_position_mask(pool, 128, 0, 4, 0), ConfigError);
    CHECK_THROWS_AS(sample_position_mask(pool, 128, 3, 2, 0), ConfigError);
}
