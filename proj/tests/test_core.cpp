#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "uts/core/augment.hpp"
#include "uts/core/errors.hpp"
#include "uts/core/hash.hpp"
#include "uts/core/image.hpp"
#include "uts/core/imageops.hpp"
#include "uts/core/io.hpp"
#include "uts/core/rng.hpp"

using namespace uts;
namespace fs = std::filesystem;

namespace {
fs::path temp_dir(const char* name) {
    const fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}
}  // namespace

TEST_CASE("rng is deterministic per (seed, stream)") {
    Rng a(42, 7), b(42, 7);
    for (int i = 0; i < 100; ++i) CHECK(a.bits() == b.bits());

    Rng c(42, 7), d(42, 8), e(43, 7);
    bool stream_differs = false, seed_differs = false;
    for (int i = 0; i < 16; ++i) {
        const auto r = c.bits();
        stream_differs |= r != d.bits();
        seed_differs |= r != e.bits();
    }
    CHECK(stream_differs);
    CHECK(seed_differs);
}

TEST_CASE("rng value mappings stay in range") {
    Rng r(1);
    for (int i = 0; i < 10000; ++i) {
        const double u = r.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        const auto k = r.uniform_int(-3, 5);
        CHECK(k >= -3);
        CHECK(k <= 5);
        CHECK(r.rayleigh(2.0) >= 0.0);
    }
    // Box-Muller output has roughly standard moments.
    double sum = 0, sum2 = 0;
    const int n = 20000;
    Rng g(5);
    for (int i = 0; i < n; ++i) {
        const double x = g.normal();
        sum += x;
        sum2 += x * x;
    }
    CHECK(std::abs(sum / n) < 0.03);
    CHECK(std::abs(sum2 / n - 1.0) < 0.05);
}

TEST_CASE("rng uniform_int covers the full range uniformly enough") {
    Rng r(9);
    std::vector<int> counts(6, 0);
    for (int i = 0; i < 60000; ++i) ++counts[r.uniform_int(0, 5)];
    for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("rng shuffle is a permutation and deterministic") {
    std::vector<int> v(50);
    for (int i = 0; i < 50; ++i) v[i] = i;
    auto w = v;
    Rng a(3, 1), b(3, 1);
    a.shuffle(v);
    b.shuffle(w);
    CHECK(v == w);
    auto sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 50; ++i) CHECK(sorted[i] == i);
}

TEST_CASE("fnv1a matches the published test vectors") {
    CHECK(Fnv1a64().digest() == 0xcbf29ce484222325ULL);
    Fnv1a64 f;
    f.update("a", 1);
    CHECK(f.digest() == 0xaf63dc4c8601ec8cULL);
    Fnv1a64 g;
    g.update_string("foobar");
    CHECK(g.digest() == 0x85944171f73967e8ULL);
    CHECK(g.hex() == "85944171f73967e8");
}

TEST_CASE("box geometry helpers") {
    Box b{2, 3, 4, 5};
    CHECK(b.valid());
    CHECK(b.area() == 20);
    CHECK(b.within(10, 10));
    CHECK_FALSE(Box{8, 0, 4, 2}.within(10, 10));
    CHECK_FALSE(Box{0, 0, 0, 2}.valid());
    CHECK(Box{0, 0, 4, 4}.intersects(Box{3, 3, 4, 4}));
    CHECK_FALSE(Box{0, 0, 4, 4}.intersects(Box{4, 0, 4, 4}));
}

TEST_CASE("sample validation rejects inconsistent annotations") {
    Sample s;
    s.image = Image8(8, 8);
    s.boxes = {{0, 0, 4, 4}};
    s.defect_ids = {"d0"};
    CHECK_NOTHROW(s.validate("t"));
    s.boxes[0].w = 9;  // leaves the image
    CHECK_THROWS_AS(s.validate("t"), ValidationError);
    s.boxes[0].w = 4;
    s.defect_ids.clear();  // misaligned ids
    CHECK_THROWS_AS(s.validate("t"), ValidationError);
}

TEST_CASE("crop and region means") {
    Image8 img(4, 4);
    for (int i = 0; i < 16; ++i) img.px[i] = static_cast<std::uint8_t>(i * 10);
    const Box b{1, 1, 2, 2};
    const Image8 c = crop_image(img, b);
    CHECK(c.h == 2);
    CHECK(c.w == 2);
    CHECK(c.at(0, 0) == 50);
    CHECK(c.at(1, 1) == 100);
    CHECK(region_mean(img, b) == doctest::Approx((50 + 60 + 90 + 100) / 4.0));
    CHECK(mean_intensity(c) == doctest::Approx(75.0));
    CHECK_THROWS_AS(crop_image(img, Box{3, 3, 2, 2}), ValidationError);

    Mask8 m(2, 2);
    m.at(0, 0) = 1;
    CHECK(masked_mean(c, m, true) == doctest::Approx(50.0));
    CHECK(masked_mean(c, m, false) == doctest::Approx((60 + 90 + 100) / 3.0));
}

TEST_CASE("resize_bilinear: identity and constant preservation") {
    Image8 img(6, 9);
    Rng r(4);
    for (auto& p : img.px) p = static_cast<std::uint8_t>(r.uniform_int(0, 255));
    const Image8 same = resize_bilinear(img, 6, 9);
    CHECK(same.px == img.px);

    Image8 flat(5, 5, 77);
    const Image8 up = resize_bilinear(flat, 13, 8);
    for (auto p : up.px) CHECK(p == 77);
}

TEST_CASE("resize_nearest keeps masks binary") {
    Mask8 m(4, 4);
    m.at(1, 1) = 1;
    m.at(2, 2) = 1;
    const Mask8 up = resize_nearest(m, 9, 9);
    CHECK(up.h == 9);
    for (auto p : up.px) CHECK((p == 0 || p == 1));
    CHECK(up.foreground_count() > 0);
}

TEST_CASE("flip_horizontal is an involution and mirrors boxes") {
    Image8 img(3, 5);
    for (int i = 0; i < 15; ++i) img.px[i] = static_cast<std::uint8_t>(i);
    const Image8 once = flip_horizontal(img);
    CHECK(once.at(0, 0) == img.at(0, 4));
    CHECK(flip_horizontal(once).px == img.px);

    const Box b{1, 0, 2, 3};
    const Box fb = flip_horizontal(b, 5);
    CHECK(fb.x == 2);  // 5 - 1 - 2
    CHECK(fb.w == 2);
    CHECK(flip_horizontal(fb, 5) == b);
}

TEST_CASE("apply_gain scales and clamps") {
    Image8 img(1, 3);
    img.px = {50, 200, 0};
    const Image8 g = apply_gain(img, 2.0);
    CHECK(g.px[0] == 100);
    CHECK(g.px[1] == 255);
    CHECK(g.px[2] == 0);
    CHECK(apply_gain(img, 1.0).px == img.px);
}

TEST_CASE("gaussian_blur preserves constants and total shape") {
    Image8 flat(7, 7, 123);
    const Image8 b = gaussian_blur(flat, 1.2);
    for (auto p : b.px) CHECK(int(p) == doctest::Approx(123).epsilon(0.02));
    CHECK(gaussian_blur(flat, 0.0).px == flat.px);
}

TEST_CASE("clamp_u8 saturates") {
    CHECK(clamp_u8(-3.0) == 0);
    CHECK(clamp_u8(255.7) == 255);
    CHECK(clamp_u8(127.4) == 127);
    CHECK(clamp_u8(127.6) == 128);
}

TEST_CASE("png round-trips for images and masks") {
    const fs::path dir = temp_dir("uts_core_io");
    Image8 img(11, 7);
    Rng r(2);
    for (auto& p : img.px) p = static_cast<std::uint8_t>(r.uniform_int(0, 255));
    io::write_png_gray(dir / "img.png", img);
    const Image8 back = io::read_png_gray(dir / "img.png");
    CHECK(back.h == img.h);
    CHECK(back.w == img.w);
    CHECK(back.px == img.px);

    Mask8 m(9, 5);
    for (std::size_t i = 0; i < m.px.size(); i += 3) m.px[i] = 1;
    io::write_png_mask(dir / "m.png", m);
    const Mask8 mb = io::read_png_mask(dir / "m.png");
    CHECK(mb.px == m.px);

    CHECK_THROWS_AS(io::read_png_gray(dir / "absent.png"), LoadError);
}

TEST_CASE("hflip_inplace mirrors pixels and boxes together") {
    Image8 img(4, 6);
    for (std::size_t i = 0; i < img.px.size(); ++i) img.px[i] = static_cast<std::uint8_t>(i);
    std::vector<Box> boxes = {{0, 1, 2, 2}};
    Image8 orig = img;
    hflip_inplace(img, boxes);
    CHECK(boxes[0].x == 4);  // 6 - 0 - 2
    CHECK(img.at(1, 5) == orig.at(1, 0));
    // flip back restores everything
    hflip_inplace(img, boxes);
    CHECK(img.px == orig.px);
    CHECK(boxes[0].x == 0);
}

TEST_CASE("scale_crop_inplace keeps size, bounds, and the paired mask binary") {
    Rng r(11);
    for (int trial = 0; trial < 50; ++trial) {
        Image8 img(32, 32);
        for (auto& p : img.px) p = static_cast<std::uint8_t>(r.uniform_int(0, 255));
        std::vector<Box> boxes = {{4, 5, 10, 8}, {20, 20, 6, 6}};
        Mask8 mask(32, 32);
        for (const auto& b : boxes)
            for (int y = b.y; y < b.y + b.h; ++y)
                for (int x = b.x; x < b.x + b.w; ++x) mask.at(y, x) = 1;

        const double scale = r.uniform(1.0, 1.3);
        scale_crop_inplace(img, boxes, scale, r.uniform(), r.uniform(), &mask);
        CHECK(img.h == 32);
        CHECK(img.w == 32);
        CHECK(mask.h == 32);
        for (auto p : mask.px) CHECK((p == 0 || p == 1));
        for (const auto& b : boxes) CHECK(b.within(32, 32));
    }
}

TEST_CASE("scale_crop_inplace with scale 1 is identity") {
    Image8 img(16, 16);
    Rng r(3);
    for (auto& p : img.px) p = static_cast<std::uint8_t>(r.uniform_int(0, 255));
    const Image8 orig = img;
    std::vector<Box> boxes = {{2, 2, 5, 5}};
    scale_crop_inplace(img, boxes, 1.0, 0.7, 0.2);
    CHECK(img.px == orig.px);
    CHECK(boxes[0] == Box{2, 2, 5, 5});
}

TEST_CASE("value_jitter_inplace applies gain, bias, and clamping") {
    Image8 img(1, 4);
    img.px = {0, 100, 200, 255};
    value_jitter_inplace(img, 1.1, 10.0);
    CHECK(img.px[0] == 10);
    CHECK(img.px[1] == 120);
    CHECK(img.px[2] == 230);
    CHECK(img.px[3] == 255);
}

TEST_CASE("source tags round-trip through strings") {
    for (auto t : {SourceTag::kReal, SourceTag::kPhantom, SourceTag::kCp, SourceTag::kGan})
        CHECK(source_tag_from_string(to_string(t)) == t);
    CHECK_THROWS_AS(source_tag_from_string("nope"), ValidationError);
}
