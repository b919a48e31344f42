#include "uts/detector/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "uts/core/errors.hpp"
#include "uts/core/rng.hpp"

namespace uts::detector {

void EvalConfig::validate() const {
    auto in_unit = [](double v) { return v > 0.0 && v <= 1.0; };
    if (!in_unit(objectness_threshold) || !in_unit(nms_iou) || !in_unit(match_iou))
        throw ConfigError("eval thresholds must lie in (0,1]");
}

double iou(const Box& a, const Box& b) {
    if (!a.valid() || !b.valid()) return 0.0;
    const int x1 = std::max(a.x, b.x), y1 = std::max(a.y, b.y);
    const int x2 = std::min(a.x + a.w, b.x + b.w), y2 = std::min(a.y + a.h, b.y + b.h);
    const long long inter =
        static_cast<long long>(std::max(0, x2 - x1)) * std::max(0, y2 - y1);
    const long long uni = a.area() + b.area() - inter;
    return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

double shape_iou(double aw, double ah, double bw, double bh) {
    const double inter = std::min(aw, bw) * std::min(ah, bh);
    const double uni = aw * ah + bw * bh - inter;
    return uni > 0.0 ? inter / uni : 0.0;
}

std::vector<Detection> nms(std::vector<Detection> dets, double iou_thresh) {
    std::stable_sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
        return a.confidence > b.confidence;
    });
    std::vector<Detection> kept;
    for (const Detection& d : dets) {
        bool drop = false;
        for (const Detection& k : kept)
            if (iou(d.box, k.box) > iou_thresh) {
                drop = true;
                break;
            }
        if (!drop) kept.push_back(d);
    }
    return kept;
}

double anchor_cost(const std::vector<Box>& boxes, const std::vector<Anchor>& anchors) {
    double total = 0.0;
    for (const Box& b : boxes) {
        double best = 0.0;
        for (const Anchor& a : anchors) best = std::max(best, shape_iou(b.w, b.h, a.w, a.h));
        total += 1.0 - best;
    }
    return boxes.empty() ? 0.0 : total / static_cast<double>(boxes.size());
}

std::vector<Anchor> compute_anchors(const std::vector<Box>& boxes, int k, std::uint64_t seed) {
    if (k <= 0) throw ConfigError("compute_anchors: k must be positive");
    if (static_cast<int>(boxes.size()) < k)
        throw ValidationError("compute_anchors: fewer boxes (" + std::to_string(boxes.size()) +
                              ") than clusters (" + std::to_string(k) + ")");
    Rng rng(seed, 5000);

    // Initial centers: k distinct random boxes.
    std::vector<std::size_t> order(boxes.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    std::vector<Anchor> centers(k);
    for (int i = 0; i < k; ++i)
        centers[i] = {static_cast<double>(boxes[order[i]].w),
                      static_cast<double>(boxes[order[i]].h)};

    std::vector<int> assign(boxes.size(), -1);
    for (int iter = 0; iter < 100; ++iter) {
        bool changed = false;
        for (std::size_t i = 0; i < boxes.size(); ++i) {
            int best = 0;
            double best_d = 2.0;
            for (int c = 0; c < k; ++c) {
                const double d =
                    1.0 - shape_iou(boxes[i].w, boxes[i].h, centers[c].w, centers[c].h);
                if (d < best_d) {
                    best_d = d;
                    best = c;
                }
            }
            if (assign[i] != best) {
                assign[i] = best;
                changed = true;
            }
        }
        if (!changed && iter > 0) break;
        for (int c = 0; c < k; ++c) {
            double sw = 0.0, sh = 0.0;
            int cnt = 0;
            for (std::size_t i = 0; i < boxes.size(); ++i)
                if (assign[i] == c) {
                    sw += boxes[i].w;
                    sh += boxes[i].h;
                    ++cnt;
                }
            if (cnt > 0) {
                centers[c] = {sw / cnt, sh / cnt};
            } else {
                const Box& b = boxes[rng.index(boxes.size())];
                centers[c] = {static_cast<double>(b.w), static_cast<double>(b.h)};
            }
        }
    }
    std::sort(centers.begin(), centers.end(), [](const Anchor& a, const Anchor& b) {
        return a.w * a.h < b.w * b.h;
    });
    return centers;
}

ApResult evaluate_ap(const std::vector<std::vector<Detection>>& detections,
                     const std::vector<std::vector<Box>>& ground_truth, double match_iou) {
    if (detections.size() != ground_truth.size())
        throw ValidationError("evaluate_ap: detections/ground truth image counts differ");
    std::size_t total_gt = 0;
    for (const auto& g : ground_truth) total_gt += g.size();
    if (total_gt == 0) throw ValidationError("undefined AP: zero ground-truth boxes");

    struct Flat {
        std::size_t img;
        std::size_t ord;  // original position, for stable ties
        Detection det;
    };
    std::vector<Flat> flat;
    for (std::size_t i = 0; i < detections.size(); ++i)
        for (std::size_t j = 0; j < detections[i].size(); ++j)
            flat.push_back({i, j, detections[i][j]});
    std::stable_sort(flat.begin(), flat.end(), [](const Flat& a, const Flat& b) {
        return a.det.confidence > b.det.confidence;
    });

    std::vector<std::vector<bool>> used(ground_truth.size());
    for (std::size_t i = 0; i < ground_truth.size(); ++i)
        used[i].assign(ground_truth[i].size(), false);

    ApResult result;
    std::size_t tp = 0, fp = 0;
    for (const Flat& f : flat) {
        const auto& gts = ground_truth[f.img];
        int best = -1;
        double best_iou = match_iou;
        for (std::size_t gi = 0; gi < gts.size(); ++gi) {
            if (used[f.img][gi]) continue;
            const double v = iou(f.det.box, gts[gi]);
            if (v >= best_iou) {
                best_iou = v;
                best = static_cast<int>(gi);
            }
        }
        if (best >= 0) {
            used[f.img][best] = true;
            ++tp;
        } else {
            ++fp;
        }
        result.curve.push_back({static_cast<double>(tp) / static_cast<double>(total_gt),
                                static_cast<double>(tp) / static_cast<double>(tp + fp)});
    }

    // All-points interpolation: running max of precision from the right,
    // integrated over recall increments.
    std::vector<double> prec(result.curve.size());
    for (std::size_t i = result.curve.size(); i-- > 0;) {
        prec[i] = result.curve[i].precision;
        if (i + 1 < result.curve.size()) prec[i] = std::max(prec[i], prec[i + 1]);
    }
    double ap = 0.0, prev_recall = 0.0;
    for (std::size_t i = 0; i < result.curve.size(); ++i) {
        ap += (result.curve[i].recall - prev_recall) * prec[i];
        prev_recall = result.curve[i].recall;
    }
    result.ap = ap;
    return result;
}

}  // namespace uts::detector
