#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "uts/core/errors.hpp"
#include "uts/core/io.hpp"
#include "uts/dataset/dataset.hpp"

using namespace uts;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* name) {
    const fs::path p = fs::temp_directory_path() / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

Sample make_sample(int size, std::vector<Box> boxes, const std::string& id_prefix) {
    Sample s;
    s.image = Image8(size, size);
    for (std::size_t i = 0; i < s.image.px.size(); ++i)
        s.image.px[i] = static_cast<std::uint8_t>((i * 7) % 251);
    s.boxes = std::move(boxes);
    for (std::size_t k = 0; k < s.boxes.size(); ++k)
        s.defect_ids.push_back(id_prefix + std::to_string(k));
    return s;
}

std::set<std::string> ids_of(const std::vector<Sample>& v) {
    std::set<std::string> out;
    for (const auto& s : v) out.insert(s.defect_ids.begin(), s.defect_ids.end());
    return out;
}

}  // namespace

TEST_CASE("save then load reproduces pixels, boxes, ids, and order") {
    const fs::path dir = temp_dir("uts_ds_roundtrip");
    std::vector<Sample> in;
    in.push_back(make_sample(16, {{1, 2, 5, 4}, {8, 8, 6, 6}}, "a"));
    in.push_back(make_sample(16, {}, "b"));
    in.push_back(make_sample(16, {{0, 0, 3, 3}}, "c"));
    in[2].tag = SourceTag::kCp;
    dataset::save_dataset(in, dir);

    const auto out = dataset::load_dataset(dir, dir / "manifest.jsonl");
    REQUIRE(out.size() == in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
        CHECK(out[i].image == in[i].image);
        CHECK(out[i].boxes == in[i].boxes);
        CHECK(out[i].defect_ids == in[i].defect_ids);
        CHECK(out[i].tag == in[i].tag);
    }
}

TEST_CASE("load_dataset: one image with two valid boxes") {
    const fs::path dir = temp_dir("uts_ds_two");
    dataset::save_dataset({make_sample(12, {{0, 0, 4, 4}, {6, 6, 4, 4}}, "x")}, dir);
    const auto got = dataset::load_dataset(dir, dir / "manifest.jsonl");
    REQUIRE(got.size() == 1);
    CHECK(got[0].boxes.size() == 2);
}

TEST_CASE("load_dataset errors name the offender") {
    const fs::path dir = temp_dir("uts_ds_err");
    dataset::save_dataset({make_sample(10, {{0, 0, 4, 4}}, "x")}, dir);

    SUBCASE("missing image file") {
        std::ofstream(dir / "manifest.jsonl", std::ios::app)
            << R"({"image":"ghost.png","boxes":[]})" << "\n";
        try {
            dataset::load_dataset(dir, dir / "manifest.jsonl");
            FAIL("expected LoadError");
        } catch (const LoadError& e) {
            CHECK(std::string(e.what()).find("ghost.png") != std::string::npos);
        }
    }
    SUBCASE("box leaving the image: x+w = width+1") {
        std::ofstream(dir / "manifest.jsonl", std::ios::app)
            << R"({"image":"img_000000.png","boxes":[[7,0,4,4,"bad"]]})" << "\n";
        CHECK_THROWS_AS(dataset::load_dataset(dir, dir / "manifest.jsonl"), ValidationError);
    }
    SUBCASE("malformed JSON line") {
        std::ofstream(dir / "manifest.jsonl", std::ios::app) << "{not json\n";
        CHECK_THROWS(dataset::load_dataset(dir, dir / "manifest.jsonl"));
    }
    SUBCASE("missing manifest") {
        CHECK_THROWS_AS(dataset::load_dataset(dir, dir / "absent.jsonl"), LoadError);
    }
}

TEST_CASE("load_dataset enforces expected_size when given") {
    const fs::path dir = temp_dir("uts_ds_size");
    dataset::save_dataset({make_sample(12, {}, "x")}, dir);
    CHECK_NOTHROW(dataset::load_dataset(dir, dir / "manifest.jsonl", 12));
    CHECK_THROWS_AS(dataset::load_dataset(dir, dir / "manifest.jsonl", 16), ValidationError);
}

TEST_CASE("split_by_defect: 10 samples, fractions (0.6,0.2,0.2), seed 7") {
    std::vector<Sample> samples;
    for (int i = 0; i < 10; ++i)
        samples.push_back(make_sample(8, {{0, 0, 4, 4}}, "d" + std::to_string(i) + "_"));
    const auto split = dataset::split_by_defect(samples, 0.6, 0.2, 0.2, 7);
    CHECK(split.train.size() == 6);
    CHECK(split.val.size() == 2);
    CHECK(split.test.size() == 2);

    const auto a = ids_of(split.train), b = ids_of(split.val), c = ids_of(split.test);
    std::set<std::string> uni;
    uni.insert(a.begin(), a.end());
    uni.insert(b.begin(), b.end());
    uni.insert(c.begin(), c.end());
    CHECK(uni == ids_of(samples));
    for (const auto& id : a) {
        CHECK(b.count(id) == 0);
        CHECK(c.count(id) == 0);
    }
    for (const auto& id : b) CHECK(c.count(id) == 0);

    // determinism
    const auto again = dataset::split_by_defect(samples, 0.6, 0.2, 0.2, 7);
    REQUIRE(again.train.size() == split.train.size());
    for (std::size_t i = 0; i < split.train.size(); ++i)
        CHECK(again.train[i].image == split.train[i].image);
}

TEST_CASE("split_by_defect keeps samples sharing a defect id together") {
    std::vector<Sample> samples;
    for (int i = 0; i < 12; ++i) {
        auto s = make_sample(8, {{0, 0, 4, 4}}, "ignored");
        s.defect_ids = {"shared" + std::to_string(i / 3)};  // 4 groups of 3
        samples.push_back(std::move(s));
    }
    for (std::uint64_t seed : {1, 2, 3, 4, 5}) {
        const auto split = dataset::split_by_defect(samples, 0.5, 0.25, 0.25, seed);
        const auto a = ids_of(split.train), b = ids_of(split.val), c = ids_of(split.test);
        for (const auto& id : a) CHECK((b.count(id) == 0 && c.count(id) == 0));
        for (const auto& id : b) CHECK(c.count(id) == 0);
        CHECK(split.train.size() + split.val.size() + split.test.size() == 12);
        // group atomicity: sizes must be multiples of 3
        CHECK(split.train.size() % 3 == 0);
        CHECK(split.val.size() % 3 == 0);
        CHECK(split.test.size() % 3 == 0);
    }
}

TEST_CASE("split_by_defect validates fractions") {
    std::vector<Sample> samples = {make_sample(8, {{0, 0, 2, 2}}, "q")};
    CHECK_THROWS_AS(dataset::split_by_defect(samples, 0.5, 0.2, 0.2, 1), ConfigError);
}

TEST_CASE("extract_canvases returns exactly the box-free images") {
    std::vector<Sample> samples;
    samples.push_back(make_sample(8, {{0, 0, 4, 4}}, "a"));
    samples.push_back(make_sample(8, {}, "b"));
    samples.push_back(make_sample(8, {{1, 1, 3, 3}}, "c"));
    const auto canvases = dataset::extract_canvases(samples);
    REQUIRE(canvases.size() == 1);
    CHECK(canvases[0] == samples[1].image);

    CHECK(dataset::extract_canvases({samples[0], samples[2]}).empty());
}

TEST_CASE("extract_defect_crops cuts every annotation with its id") {
    auto s = make_sample(16, {{2, 3, 5, 4}, {9, 9, 4, 4}}, "z");
    const auto crops = dataset::extract_defect_crops({s});
    REQUIRE(crops.size() == 2);
    CHECK(crops[0].crop.h == 4);
    CHECK(crops[0].crop.w == 5);
    CHECK(crops[0].origin_id == "z0");
    CHECK(crops[0].crop.at(0, 0) == s.image.at(3, 2));
    CHECK(crops[1].origin_id == "z1");
}

TEST_CASE("phantoms: 10 images with 0 defects are all canvases") {
    dataset::PhantomConfig cfg;
    cfg.count = 10;
    cfg.min_defects = 0;
    cfg.max_defects = 0;
    const auto samples = dataset::generate_phantom_dataset(cfg, 1);
    REQUIRE(samples.size() == 10);
    for (const auto& s : samples) {
        CHECK(s.boxes.empty());
        CHECK(s.tag == SourceTag::kPhantom);
    }
}

TEST_CASE("phantoms: exactly 2 defects, boxes within bounds") {
    dataset::PhantomConfig cfg;
    cfg.count = 1;
    cfg.min_defects = 2;
    cfg.max_defects = 2;
    const auto samples = dataset::generate_phantom_dataset(cfg, 3);
    REQUIRE(samples.size() == 1);
    CHECK(samples[0].boxes.size() == 2);
    for (const auto& b : samples[0].boxes) CHECK(b.within(cfg.image_size, cfg.image_size));
}

TEST_CASE("phantoms: recount oracle over 200 images, 1-3 defects") {
    dataset::PhantomConfig cfg;
    cfg.count = 200;
    cfg.min_defects = 1;
    cfg.max_defects = 3;
    const auto samples = dataset::generate_phantom_dataset(cfg, 1);
    REQUIRE(samples.size() == 200);
    std::size_t boxes = 0;
    for (const auto& s : samples) {
        CHECK(s.boxes.size() >= 1);
        CHECK(s.boxes.size() <= 3);
        boxes += s.boxes.size();
    }
    const double mean = static_cast<double>(boxes) / 200.0;
    CHECK(mean >= 1.0);
    CHECK(mean <= 3.0);
}

TEST_CASE("phantoms: determinism and distinct ids") {
    dataset::PhantomConfig cfg;
    cfg.count = 20;
    cfg.min_defects = 0;
    cfg.max_defects = 3;
    const auto a = dataset::generate_phantom_dataset(cfg, 9);
    const auto b = dataset::generate_phantom_dataset(cfg, 9);
    REQUIRE(a.size() == b.size());
    std::set<std::string> ids;
    std::size_t total = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].image == b[i].image);
        CHECK(a[i].boxes == b[i].boxes);
        ids.insert(a[i].defect_ids.begin(), a[i].defect_ids.end());
        total += a[i].defect_ids.size();
    }
    CHECK(ids.size() == total);

    const auto c = dataset::generate_phantom_dataset(cfg, 10);
    bool any_diff = false;
    for (std::size_t i = 0; i < a.size(); ++i) any_diff |= !(a[i].image == c[i].image);
    CHECK(any_diff);
}

TEST_CASE("phantom boxes satisfy bounds over many seeds") {
    dataset::PhantomConfig cfg;
    cfg.count = 1;
    cfg.min_defects = 1;
    cfg.max_defects = 4;
    for (std::uint64_t seed = 0; seed < 1000; ++seed) {
        const auto samples = dataset::generate_phantom_dataset(cfg, seed);
        for (const auto& s : samples) {
            s.validate("phantom");
            for (const auto& b : s.boxes) CHECK(b.within(cfg.image_size, cfg.image_size));
        }
    }
}

TEST_CASE("phantom config validation") {
    dataset::PhantomConfig cfg;
    cfg.image_size = 16;
    cfg.sigma_long_lo = 100.0;  // blob cannot fit
    cfg.sigma_long_hi = 120.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);

    dataset::PhantomConfig bad;
    bad.min_defects = 3;
    bad.max_defects = 1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("phantom dark-defect polarity flips blob contrast") {
    dataset::PhantomConfig cfg;
    cfg.count = 4;
    cfg.min_defects = 1;
    cfg.max_defects = 1;
    cfg.contrast_lo = 80.0;
    cfg.contrast_hi = 110.0;
    auto bright = dataset::generate_phantom_dataset(cfg, 5);
    cfg.dark_defects = true;
    auto dark = dataset::generate_phantom_dataset(cfg, 5);
    // Inside the box, bright phantoms exceed their background mean and dark
    // phantoms fall below it (statistically, so compare region means).
    for (std::size_t i = 0; i < bright.size(); ++i) {
        const auto& bb = bright[i].boxes[0];
        const double in_b = region_mean(bright[i].image, bb);
        const double all_b = mean_intensity(bright[i].image);
        CHECK(in_b > all_b);
        const auto& db = dark[i].boxes[0];
        const double in_d = region_mean(dark[i].image, db);
        const double all_d = mean_intensity(dark[i].image);
        CHECK(in_d < all_d);
    }
}

TEST_CASE("phantom config json round-trip") {
    dataset::PhantomConfig cfg;
    cfg.count = 33;
    cfg.image_size = 96;
    cfg.dark_defects = true;
    cfg.contrast_lo = 50.5;
    cfg.id_prefix = "qq";
    const auto j = cfg.to_json();
    const auto back = dataset::PhantomConfig::from_json(j);
    CHECK(back.count == 33);
    CHECK(back.image_size == 96);
    CHECK(back.dark_defects);
    CHECK(back.contrast_lo == 50.5);
    CHECK(back.id_prefix == "qq");
}
