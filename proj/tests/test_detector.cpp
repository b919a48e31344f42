#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include "uts/core/errors.hpp"
#include "uts/core/imageops.hpp"
#include "uts/core/rng.hpp"
#include "uts/detector/detector.hpp"
#include "uts/nn/checkpoint.hpp"

using namespace uts;
using namespace uts::detector;
namespace fs = std::filesystem;

namespace {

// Independent AP: re-run greedy matching from scratch for every prefix of
// the confidence-sorted detection list, then integrate the interpolated
// precision with a direct max scan. Only the published convention is
// shared with the implementation.
double ap_reference(const std::vector<std::vector<Detection>>& dets,
                    const std::vector<std::vector<Box>>& gts, double match_iou) {
    struct Flat {
        std::size_t img;
        Detection det;
    };
    std::vector<Flat> flat;
    for (std::size_t i = 0; i < dets.size(); ++i)
        for (const auto& d : dets[i]) flat.push_back({i, d});
    std::stable_sort(flat.begin(), flat.end(),
                     [](const Flat& a, const Flat& b) { return a.det.confidence > b.det.confidence; });
    std::size_t total_gt = 0;
    for (const auto& g : gts) total_gt += g.size();

    // matching for one prefix, from scratch
    auto prefix_tp = [&](std::size_t m) {
        std::vector<std::vector<bool>> used(gts.size());
        for (std::size_t i = 0; i < gts.size(); ++i) used[i].assign(gts[i].size(), false);
        std::size_t tp = 0;
        for (std::size_t f = 0; f < m; ++f) {
            const auto& g = gts[flat[f].img];
            int best = -1;
            double best_v = match_iou;
            for (std::size_t gi = 0; gi < g.size(); ++gi) {
                if (used[flat[f].img][gi]) continue;
                const double v = iou(flat[f].det.box, g[gi]);
                if (v >= best_v) {
                    best_v = v;
                    best = static_cast<int>(gi);
                }
            }
            if (best >= 0) {
                used[flat[f].img][best] = true;
                ++tp;
            }
        }
        return tp;
    };

    std::vector<double> recalls, precisions;
    for (std::size_t m = 1; m <= flat.size(); ++m) {
        const std::size_t tp = prefix_tp(m);
        recalls.push_back(static_cast<double>(tp) / static_cast<double>(total_gt));
        precisions.push_back(static_cast<double>(tp) / static_cast<double>(m));
    }
    double ap = 0.0, prev = 0.0;
    for (std::size_t i = 0; i < recalls.size(); ++i) {
        double pmax = 0.0;
        for (std::size_t j = i; j < recalls.size(); ++j) pmax = std::max(pmax, precisions[j]);
        ap += (recalls[i] - prev) * pmax;
        prev = recalls[i];
    }
    return ap;
}

std::vector<Sample> toy_detection_set(int count, int size, std::uint64_t seed) {
    Rng r(seed);
    std::vector<Sample> out;
    for (int i = 0; i < count; ++i) {
        Sample s;
        s.image = Image8(size, size, 150);
        for (auto& px : s.image.px) px = clamp_u8(px + r.normal(0.0, 5.0));
        const int nb = static_cast<int>(r.uniform_int(1, 2));
        for (int b = 0; b < nb; ++b) {
            const int bw = static_cast<int>(r.uniform_int(10, 18));
            const int bh = static_cast<int>(r.uniform_int(10, 18));
            const int bx = static_cast<int>(r.uniform_int(1, size - bw - 1));
            const int by = static_cast<int>(r.uniform_int(1, size - bh - 1));
            const Box box{bx, by, bw, bh};
            bool clash = false;
            for (const auto& prev : s.boxes) clash |= prev.intersects(box);
            if (clash) continue;
            for (int y = by; y < by + bh; ++y)
                for (int x = bx; x < bx + bw; ++x)
                    s.image.at(y, x) = clamp_u8(s.image.at(y, x) * 0.3);
            s.boxes.push_back(box);
            s.defect_ids.push_back("t" + std::to_string(i) + "_" + std::to_string(b));
        }
        if (s.boxes.empty()) {
            const Box box{4, 4, 12, 12};
            for (int y = 4; y < 16; ++y)
                for (int x = 4; x < 16; ++x) s.image.at(y, x) = clamp_u8(s.image.at(y, x) * 0.3);
            s.boxes.push_back(box);
            s.defect_ids.push_back("t" + std::to_string(i) + "_f");
        }
        s.tag = SourceTag::kReal;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

TEST_CASE("iou: identity, disjointness, hand value, symmetry, degeneracy") {
    const Box a{0, 0, 2, 2};
    CHECK(iou(a, a) == doctest::Approx(1.0));
    CHECK(iou(a, Box{10, 10, 2, 2}) == doctest::Approx(0.0));
    // overlap 1x2 = 2, union 4+4-2 = 6
    CHECK(iou(a, Box{1, 0, 2, 2}) == doctest::Approx(1.0 / 3.0));
    CHECK(iou(a, Box{0, 0, 0, 5}) == doctest::Approx(0.0));  // degenerate box

    Rng r(1);
    for (int t = 0; t < 300; ++t) {
        const Box p{static_cast<int>(r.uniform_int(0, 20)), static_cast<int>(r.uniform_int(0, 20)),
                    static_cast<int>(r.uniform_int(1, 10)), static_cast<int>(r.uniform_int(1, 10))};
        const Box q{static_cast<int>(r.uniform_int(0, 20)), static_cast<int>(r.uniform_int(0, 20)),
                    static_cast<int>(r.uniform_int(1, 10)), static_cast<int>(r.uniform_int(1, 10))};
        CHECK(iou(p, q) == doctest::Approx(iou(q, p)));
        CHECK(iou(p, q) >= 0.0);
        CHECK(iou(p, q) <= 1.0);
    }
}

TEST_CASE("shape_iou: corner-aligned rectangles") {
    CHECK(shape_iou(2, 2, 4, 4) == doctest::Approx(0.25));
    CHECK(shape_iou(3, 3, 3, 3) == doctest::Approx(1.0));
    CHECK(shape_iou(1, 4, 4, 1) == doctest::Approx(1.0 / 7.0));
}

TEST_CASE("nms: hand cases and the greedy invariant") {
    CHECK(nms({}, 0.5).empty());

    // identical boxes: only the highest-confidence one survives
    std::vector<Detection> two{{Box{0, 0, 4, 4}, 0.5}, {Box{0, 0, 4, 4}, 0.9}};
    auto kept = nms(two, 0.5);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].confidence == doctest::Approx(0.9));

    // IoU exactly 1/3 at threshold 0.5: both survive (drop is strict >)
    std::vector<Detection> pair{{Box{0, 0, 2, 2}, 0.8}, {Box{1, 0, 2, 2}, 0.6}};
    CHECK(nms(pair, 0.5).size() == 2);
    CHECK(nms(pair, 0.2).size() == 1);

    Rng r(2);
    for (int t = 0; t < 50; ++t) {
        std::vector<Detection> dets;
        const int n = static_cast<int>(r.uniform_int(1, 20));
        for (int i = 0; i < n; ++i)
            dets.push_back({Box{static_cast<int>(r.uniform_int(0, 24)),
                                static_cast<int>(r.uniform_int(0, 24)),
                                static_cast<int>(r.uniform_int(2, 10)),
                                static_cast<int>(r.uniform_int(2, 10))},
                            r.uniform()});
        const double thr = r.uniform(0.1, 0.9);
        const auto out = nms(dets, thr);
        // kept boxes are pairwise below the threshold
        for (std::size_t i = 0; i < out.size(); ++i)
            for (std::size_t j = i + 1; j < out.size(); ++j)
                CHECK(iou(out[i].box, out[j].box) <= thr);
        // idempotent
        const auto again = nms(out, thr);
        CHECK(again.size() == out.size());
        // every dropped detection overlaps a kept one with higher-or-equal confidence
        for (const auto& d : dets) {
            bool is_kept = false;
            for (const auto& k : out)
                if (k.box == d.box && k.confidence == d.confidence) is_kept = true;
            if (is_kept) continue;
            bool justified = false;
            for (const auto& k : out)
                justified |= iou(d.box, k.box) > thr && k.confidence >= d.confidence;
            CHECK(justified);
        }
    }
}

TEST_CASE("compute_anchors: exact means on separated clusters, sorted by area") {
    std::vector<Box> same(5, Box{0, 0, 10, 20});
    const auto one = compute_anchors(same, 1, 3);
    REQUIRE(one.size() == 1);
    CHECK(one[0].w == doctest::Approx(10.0));
    CHECK(one[0].h == doctest::Approx(20.0));

    std::vector<Box> two_clusters;
    for (int i = 0; i < 6; ++i) two_clusters.push_back(Box{0, 0, 10, 10});
    for (int i = 0; i < 6; ++i) two_clusters.push_back(Box{0, 0, 40, 40});
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto anchors = compute_anchors(two_clusters, 2, seed);
        REQUIRE(anchors.size() == 2);
        CHECK(anchors[0].w == doctest::Approx(10.0));
        CHECK(anchors[0].h == doctest::Approx(10.0));
        CHECK(anchors[1].w == doctest::Approx(40.0));
        CHECK(anchors[1].h == doctest::Approx(40.0));
        CHECK(anchors[0].w * anchors[0].h <= anchors[1].w * anchors[1].h);
    }

    CHECK_THROWS_AS(compute_anchors({Box{0, 0, 4, 4}}, 2, 0), ValidationError);
    CHECK_THROWS_AS(compute_anchors(same, 0, 0), ConfigError);
}

TEST_CASE("compute_anchors beats random anchor triples on the k-means objective") {
    Rng r(4);
    std::vector<Box> boxes;
    const double cw[3] = {8, 24, 48}, ch[3] = {12, 20, 40};
    for (int i = 0; i < 60; ++i) {
        const int c = i % 3;
        boxes.push_back(Box{0, 0, static_cast<int>(cw[c] + r.uniform_int(0, 4)),
                            static_cast<int>(ch[c] + r.uniform_int(0, 4))});
    }
    const auto anchors = compute_anchors(boxes, 3, 17);
    const double cost = anchor_cost(boxes, anchors);
    CHECK(cost < 0.15);  // tight clusters: near-zero objective
    for (int t = 0; t < 100; ++t) {
        std::vector<Anchor> random_triple;
        for (int j = 0; j < 3; ++j) {
            const Box& b = boxes[r.index(boxes.size())];
            random_triple.push_back(
                {b.w + r.uniform(-2.0, 2.0), b.h + r.uniform(-2.0, 2.0)});
        }
        CHECK(cost <= anchor_cost(boxes, random_triple) + 1e-9);
    }
    // anchors stay inside the observed shape range
    for (const auto& a : anchors) {
        CHECK(a.w >= 8.0);
        CHECK(a.w <= 52.0);
        CHECK(a.h >= 12.0);
        CHECK(a.h <= 44.0);
    }
}

TEST_CASE("evaluate_ap: perfect, worthless, and the 5/6 hand case") {
    const Box g1{10, 10, 10, 10}, g2{40, 40, 10, 10};

    SUBCASE("single exact detection") {
        const auto res = evaluate_ap({{{g1, 0.9}}}, {{g1}}, 0.5);
        CHECK(res.ap == doctest::Approx(1.0));
        REQUIRE(res.curve.size() == 1);
        CHECK(res.curve[0].recall == doctest::Approx(1.0));
        CHECK(res.curve[0].precision == doctest::Approx(1.0));
    }
    SUBCASE("detection misses everything") {
        const auto res = evaluate_ap({{{Box{0, 0, 5, 5}, 0.9}}}, {{g1}}, 0.5);
        CHECK(res.ap == doctest::Approx(0.0));
    }
    SUBCASE("no detections at all") {
        const auto res = evaluate_ap({{}}, {{g1}}, 0.5);
        CHECK(res.ap == doctest::Approx(0.0));
        CHECK(res.curve.empty());
    }
    SUBCASE("TP, FP, TP ordering integrates to 5/6") {
        // after det1: r=1/2 p=1; det2: r=1/2 p=1/2; det3: r=1 p=2/3
        // all-points AP = 0.5*1 + 0.5*(2/3) = 5/6
        const std::vector<std::vector<Detection>> dets{
            {{g1, 0.9}, {Box{0, 0, 5, 5}, 0.8}, {g2, 0.7}}};
        const auto res = evaluate_ap(dets, {{g1, g2}}, 0.5);
        CHECK(res.ap == doctest::Approx(5.0 / 6.0));
        REQUIRE(res.curve.size() == 3);
        CHECK(res.curve[2].recall == doctest::Approx(1.0));
        CHECK(res.curve[2].precision == doctest::Approx(2.0 / 3.0));
    }
    SUBCASE("zero ground truth is undefined") {
        CHECK_THROWS_AS(evaluate_ap({{}}, {{}}, 0.5), ValidationError);
    }
    SUBCASE("image count mismatch") {
        CHECK_THROWS_AS(evaluate_ap({{}, {}}, {{g1}}, 0.5), ValidationError);
    }
}

TEST_CASE("evaluate_ap agrees with the prefix-rematching reference on random instances") {
    Rng r(5);
    for (int trial = 0; trial < 120; ++trial) {
        const int images = static_cast<int>(r.uniform_int(1, 4));
        std::vector<std::vector<Box>> gts(images);
        std::vector<std::vector<Detection>> dets(images);
        bool any_gt = false;
        for (int i = 0; i < images; ++i) {
            const int ng = static_cast<int>(r.uniform_int(i == 0 ? 1 : 0, 3));
            for (int g = 0; g < ng; ++g) {
                gts[i].push_back(Box{static_cast<int>(r.uniform_int(0, 30)) * 2,
                                     static_cast<int>(r.uniform_int(0, 30)) * 2,
                                     static_cast<int>(r.uniform_int(2, 8)) * 2,
                                     static_cast<int>(r.uniform_int(2, 8)) * 2});
                any_gt = true;
            }
            const int nd = static_cast<int>(r.uniform_int(0, 5));
            for (int d = 0; d < nd; ++d) {
                Box b;
                if (!gts[i].empty() && r.uniform() < 0.6) {
                    // jitter an actual ground-truth box so matches happen
                    const Box& base = gts[i][r.index(gts[i].size())];
                    b = Box{base.x + static_cast<int>(r.uniform_int(-2, 2)),
                            base.y + static_cast<int>(r.uniform_int(-2, 2)),
                            std::max(1, base.w + static_cast<int>(r.uniform_int(-2, 2))),
                            std::max(1, base.h + static_cast<int>(r.uniform_int(-2, 2)))};
                } else {
                    b = Box{static_cast<int>(r.uniform_int(0, 60)),
                            static_cast<int>(r.uniform_int(0, 60)),
                            static_cast<int>(r.uniform_int(1, 16)),
                            static_cast<int>(r.uniform_int(1, 16))};
                }
                // quantized confidences force ties through the stable path
                dets[i].push_back({b, r.uniform_int(0, 10) / 10.0});
            }
        }
        if (!any_gt) continue;
        const double thr = 0.3 + 0.2 * r.uniform();
        const auto res = evaluate_ap(dets, gts, thr);
        CHECK(res.ap == doctest::Approx(ap_reference(dets, gts, thr)).epsilon(1e-12));
        // recall never decreases along the curve
        for (std::size_t i = 1; i < res.curve.size(); ++i)
            CHECK(res.curve[i].recall >= res.curve[i - 1].recall);
    }
}

TEST_CASE("early stopper: trips after exactly `patience` stagnant epochs") {
    EarlyStopper stop(8);
    CHECK_FALSE(stop.observe(1.0));
    CHECK_FALSE(stop.observe(0.9));  // improvement
    for (int i = 0; i < 7; ++i) CHECK_FALSE(stop.observe(0.9));  // 7 stagnant
    CHECK(stop.observe(0.9));  // 8th stagnant epoch trips
    CHECK(stop.stagnant_epochs() == 8);

    EarlyStopper reset(3);
    reset.observe(1.0);
    reset.observe(1.0);
    reset.observe(1.0);
    CHECK_FALSE(reset.observe(0.5));  // improvement resets the counter
    CHECK_FALSE(reset.observe(0.5));
    CHECK_FALSE(reset.observe(0.5));
    CHECK(reset.observe(0.5));
}

TEST_CASE("plateau scheduler: rate drops by the factor after exactly `patience`") {
    PlateauScheduler sched(0.003, 2, 0.1);
    CHECK(sched.observe(1.0) == doctest::Approx(0.003));   // first value: improvement
    CHECK(sched.observe(1.0) == doctest::Approx(0.003));   // 1 stagnant
    CHECK(sched.observe(1.0) == doctest::Approx(0.0003));  // 2 stagnant -> drop
    CHECK(sched.observe(1.0) == doctest::Approx(0.0003));  // counter restarted
    CHECK(sched.observe(1.0) == doctest::Approx(0.00003));
    CHECK(sched.observe(0.2) == doctest::Approx(0.00003)); // improvement holds rate
    CHECK(sched.current() == doctest::Approx(0.00003));
}

TEST_CASE("eval config validation") {
    EvalConfig ok;
    CHECK_NOTHROW(ok.validate());
    EvalConfig bad;
    bad.objectness_threshold = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = EvalConfig();
    bad.nms_iou = 1.5;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("reference parameter counts") {
    const auto p = reference_param_counts(1);
    CHECK(p.total == 61576342);
    CHECK(p.frozen + p.trainable == p.total);
    CHECK(p.frozen > p.trainable);  // backbone dwarfs the head
    CHECK(p.trainable > 0);
}

TEST_CASE("detector training: schedule bookkeeping, frozen backbone, detect contract") {
    const auto train = toy_detection_set(8, 64, 21);
    const auto val = toy_detection_set(4, 64, 22);
    const fs::path dir = fs::temp_directory_path() / "uts_det_unit";
    fs::remove_all(dir);

    DetectorTrainConfig cfg;
    cfg.net.input_size = 64;
    cfg.net.base_width = 8;
    cfg.epochs = 3;
    cfg.batch_size = 4;
    cfg.seed = 5;
    const auto res = train_detector(train, val, cfg, dir);

    REQUIRE(res.train_loss.size() == res.val_loss.size());
    REQUIRE(!res.train_loss.empty());
    CHECK(res.train_loss.size() <= 3);
    REQUIRE(res.lr_history.size() == res.train_loss.size());
    CHECK(res.lr_history[0] == doctest::Approx(cfg.learning_rate));
    CHECK(res.best_epoch >= 0);
    CHECK(fs::exists(res.best_checkpoint));
    CHECK(fs::exists(res.last_checkpoint));
    CHECK(res.backbone_digest_before == res.backbone_digest_after);  // frozen by default

    // the plateau schedule is replayable from the recorded validation losses
    PlateauScheduler replay(cfg.learning_rate, cfg.lr_reduce_patience, cfg.lr_reduce_factor);
    for (std::size_t e = 0; e < res.val_loss.size(); ++e) {
        CHECK(res.lr_history[e] == doctest::Approx(replay.current()));
        replay.observe(res.val_loss[e]);
    }

    auto net = load_detector(res.best_checkpoint);
    CHECK(net.config().input_size == 64);
    REQUIRE(!net.config().anchors.empty());  // computed from the training boxes

    EvalConfig eval;
    const auto dets1 = detect(net, train[0].image, eval);
    const auto dets2 = detect(net, train[0].image, eval);
    REQUIRE(dets1.size() == dets2.size());
    for (std::size_t i = 0; i < dets1.size(); ++i) {
        CHECK(dets1[i].box == dets2[i].box);
        CHECK(dets1[i].confidence == dets2[i].confidence);
        CHECK(dets1[i].box.within(64, 64));
        CHECK(dets1[i].confidence > 0.0);
        CHECK(dets1[i].confidence <= 1.0);
    }
    // kept detections obey the NMS bound
    for (std::size_t i = 0; i < dets1.size(); ++i)
        for (std::size_t j = i + 1; j < dets1.size(); ++j)
            CHECK(iou(dets1[i].box, dets1[j].box) <= eval.nms_iou);

    // tighter objectness threshold can only shrink the set
    EvalConfig strict = eval;
    strict.objectness_threshold = 0.5;
    CHECK(detect(net, train[0].image, strict).size() <= dets1.size());

    const auto ap = evaluate_detector(net, val, eval);
    CHECK(ap.ap >= 0.0);
    CHECK(ap.ap <= 1.0);

    fs::remove_all(dir);
}

TEST_CASE("detector train config validation and json round-trip") {
    DetectorTrainConfig cfg;
    cfg.net.input_size = 128;
    cfg.epochs = 42;
    cfg.lr_reduce_factor = 0.5;
    cfg.freeze_backbone = false;
    cfg.seed = 11;
    const auto back = DetectorTrainConfig::from_json(cfg.to_json());
    CHECK(back.net.input_size == 128);
    CHECK(back.epochs == 42);
    CHECK(back.lr_reduce_factor == 0.5);
    CHECK(back.freeze_backbone == false);
    CHECK(back.seed == 11);

    DetectorTrainConfig bad;
    bad.epochs = 0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = DetectorTrainConfig();
    bad.net.input_size = 30;  // not a multiple of the stride
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("training on unlabeled data is rejected") {
    Sample empty;
    empty.image = Image8(64, 64, 100);
    DetectorTrainConfig cfg;
    cfg.net.input_size = 64;
    cfg.epochs = 1;
    const fs::path dir = fs::temp_directory_path() / "uts_det_unit_bad";
    CHECK_THROWS_AS(train_detector({empty}, {empty}, cfg, dir), ValidationError);
    CHECK_THROWS_AS(train_detector({}, {}, cfg, dir), TrainError);
}
