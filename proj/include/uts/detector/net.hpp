#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uts/core/errors.hpp"
#include "uts/core/image.hpp"
#include "uts/nn/adam.hpp"
#include "uts/nn/stack.hpp"

namespace uts::detector {

struct DetectorNetConfig {
    int input_size = 64;   // square network input, multiple of the stride
    int base_width = 16;   // backbone channel scale
    int anchors_n = 3;     // anchors per cell
    std::vector<std::pair<double, double>> anchors;  // (w,h) in input pixels
    std::uint64_t init_seed = 7;

    static constexpr int kStride = 4;

    void validate() const {
        if (input_size <= 0 || input_size % kStride != 0)
            throw ConfigError("detector: input_size must be a positive multiple of " +
                              std::to_string(kStride));
        if (base_width <= 0) throw ConfigError("detector: base_width must be positive");
        if (anchors_n <= 0) throw ConfigError("detector: anchors_n must be positive");
        if (!anchors.empty() && static_cast<int>(anchors.size()) != anchors_n)
            throw ConfigError("detector: anchor list does not match anchors_n");
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["input_size"] = input_size;
        j["base_width"] = base_width;
        j["anchors_n"] = anchors_n;
        j["init_seed"] = init_seed;
        nlohmann::json a = nlohmann::json::array();
        for (const auto& [w, h] : anchors) a.push_back({w, h});
        j["anchors"] = a;
        return j;
    }

    static DetectorNetConfig from_json(const nlohmann::json& j) {
        DetectorNetConfig c;
        c.input_size = j.value("input_size", c.input_size);
        c.base_width = j.value("base_width", c.base_width);
        c.anchors_n = j.value("anchors_n", c.anchors_n);
        c.init_seed = j.value("init_seed", c.init_seed);
        if (j.contains("anchors"))
            for (const auto& a : j.at("anchors"))
                c.anchors.emplace_back(a.at(0).get<double>(), a.at(1).get<double>());
        c.validate();
        return c;
    }
};

/// Anchor-based single-scale detection net. A fixed resize + channel
/// triplication feeds a small convolutional backbone (stride 4), then a
/// trainable head emits anchors_n*(4+1) raw channels per cell:
/// (tx, ty, tw, th, objectness logit) per anchor.
template <typename S>
class DetectorNet {
public:
    explicit DetectorNet(const DetectorNetConfig& config) : cfg_(config) {
        cfg_.validate();
        Rng rng(cfg_.init_seed, 9000);
        const int b = cfg_.base_width;
        using namespace uts::nn;
        backbone_.add(std::make_unique<BilinearInterp<S>>(cfg_.input_size, cfg_.input_size));
        backbone_.add(std::make_unique<ChannelRepeat<S>>(3));
        auto conv = [&](Stack<S>& s, int cin, int cout, int k, int stride) {
            s.add(std::make_unique<Conv2d<S>>(cin, cout, k, stride, k / 2, Init::kHe, rng));
            s.add(std::make_unique<LeakyReLU<S>>(S(0.1)));
        };
        conv(backbone_, 3, b, 3, 1);
        conv(backbone_, b, 2 * b, 3, 2);
        conv(backbone_, 2 * b, 2 * b, 3, 1);
        conv(backbone_, 2 * b, 4 * b, 3, 2);
        conv(backbone_, 4 * b, 4 * b, 3, 1);
        conv(head_, 4 * b, 4 * b, 3, 1);
        conv(head_, 4 * b, 4 * b, 3, 1);
        head_.add(std::make_unique<Conv2d<S>>(4 * b, cfg_.anchors_n * 5, 1, 1, 0,
                                              Init::kHe, rng));
    }

    int grid() const { return cfg_.input_size / DetectorNetConfig::kStride; }
    const DetectorNetConfig& config() const { return cfg_; }
    DetectorNetConfig& config() { return cfg_; }

    /// x: (n,1,h,w) intensities in [0,1] -> raw maps (n, anchors_n*5, g, g).
    nn::Tensor<S> forward(const nn::Tensor<S>& x, bool train) {
        return head_.forward(backbone_.forward(x, train), train);
    }

    /// Routes gradient back to the input. Head gradients always accumulate
    /// when train_head; backbone gradients only when train_backbone.
    nn::Tensor<S> backward(const nn::Tensor<S>& d_raw, bool train_head, bool train_backbone) {
        return backbone_.backward(head_.backward(d_raw, train_head), train_backbone);
    }

    std::vector<nn::Param<S>*> backbone_params() { return backbone_.params(); }
    std::vector<nn::Param<S>*> head_params() { return head_.params(); }
    std::vector<nn::Param<S>*> params() {
        auto p = backbone_.params();
        for (auto* q : head_.params()) p.push_back(q);
        return p;
    }

private:
    DetectorNetConfig cfg_;
    nn::Stack<S> backbone_;
    nn::Stack<S> head_;
};

/// Dense training targets for one batch, all shaped (n, anchors_n, g, g).
template <typename S>
struct YoloTargets {
    nn::Tensor<S> obj_mask;    // 1 at assigned (anchor,cell)
    nn::Tensor<S> noobj_mask;  // 1 where the no-object loss applies
    nn::Tensor<S> tx, ty;      // in-cell center offsets in [0,1)
    nn::Tensor<S> tw, th;      // log size ratios vs the anchor
};

template <typename S>
inline S sigmoid(S z) {
    return S(1) / (S(1) + std::exp(-z));
}

/// Assigns each ground-truth box (input-pixel coordinates) to the best
/// shape-matching anchor at its center cell. Predictions overlapping any
/// ground truth above ignore_threshold are excluded from the no-object
/// loss; `raw` supplies the decoded predictions for that rule.
template <typename S>
YoloTargets<S> build_targets(const std::vector<std::vector<Box>>& boxes_per_image,
                             const nn::Tensor<S>& raw,
                             const std::vector<std::pair<double, double>>& anchors,
                             int input_size, double ignore_threshold);

struct DetectorLossParts {
    double coord = 0.0;
    double obj = 0.0;
    double noobj = 0.0;
    double total = 0.0;
};

/// Squared error on decoded offsets/log-sizes at assigned cells, logistic
/// loss on objectness (assigned -> 1, no-object cells -> 0). Terms are
/// averaged over their own cell counts. Also emits d(total)/d(raw).
template <typename S>
DetectorLossParts detector_loss(const nn::Tensor<S>& raw, const YoloTargets<S>& targets,
                                nn::Tensor<S>* d_raw);

// --- template implementations ---

template <typename S>
YoloTargets<S> build_targets(const std::vector<std::vector<Box>>& boxes_per_image,
                             const nn::Tensor<S>& raw,
                             const std::vector<std::pair<double, double>>& anchors,
                             int input_size, double ignore_threshold) {
    const int n = raw.n;
    const int A = static_cast<int>(anchors.size());
    const int g = raw.h;
    const double stride = static_cast<double>(input_size) / g;

    YoloTargets<S> t;
    t.obj_mask = nn::Tensor<S>(n, A, g, g);
    t.noobj_mask = nn::Tensor<S>(n, A, g, g);
    t.tx = nn::Tensor<S>(n, A, g, g);
    t.ty = nn::Tensor<S>(n, A, g, g);
    t.tw = nn::Tensor<S>(n, A, g, g);
    t.th = nn::Tensor<S>(n, A, g, g);
    t.noobj_mask.fill(S(1));

    auto box_iou = [](double ax, double ay, double aw, double ah, double bx, double by,
                      double bw, double bh) {
        const double x1 = std::max(ax, bx), y1 = std::max(ay, by);
        const double x2 = std::min(ax + aw, bx + bw), y2 = std::min(ay + ah, by + bh);
        const double inter = std::max(0.0, x2 - x1) * std::max(0.0, y2 - y1);
        const double uni = aw * ah + bw * bh - inter;
        return uni > 0.0 ? inter / uni : 0.0;
    };

    for (int in = 0; in < n; ++in) {
        const auto& boxes = boxes_per_image[in];
        // Ignore rule: decoded prediction vs any ground truth.
        if (!boxes.empty()) {
            for (int a = 0; a < A; ++a)
                for (int cy = 0; cy < g; ++cy)
                    for (int cx = 0; cx < g; ++cx) {
                        const double px =
                            (cx + sigmoid(raw.at(in, a * 5 + 0, cy, cx))) * stride;
                        const double py =
                            (cy + sigmoid(raw.at(in, a * 5 + 1, cy, cx))) * stride;
                        const double pw = anchors[a].first *
                                          std::exp(std::min(S(8), raw.at(in, a * 5 + 2, cy, cx)));
                        const double ph = anchors[a].second *
                                          std::exp(std::min(S(8), raw.at(in, a * 5 + 3, cy, cx)));
                        double best = 0.0;
                        for (const Box& b : boxes)
                            best = std::max(best, box_iou(px - pw / 2, py - ph / 2, pw, ph,
                                                          b.x, b.y, b.w, b.h));
                        if (best > ignore_threshold) t.noobj_mask.at(in, a, cy, cx) = S(0);
                    }
        }
        for (const Box& b : boxes) {
            const double cxp = (b.x + b.w / 2.0) / stride;
            const double cyp = (b.y + b.h / 2.0) / stride;
            const int cx = std::min(g - 1, std::max(0, static_cast<int>(cxp)));
            const int cy = std::min(g - 1, std::max(0, static_cast<int>(cyp)));
            int best_a = 0;
            double best_iou = -1.0;
            for (int a = 0; a < A; ++a) {
                const double s = box_iou(0, 0, b.w, b.h, 0, 0, anchors[a].first,
                                         anchors[a].second);
                if (s > best_iou) {
                    best_iou = s;
                    best_a = a;
                }
            }
            t.obj_mask.at(in, best_a, cy, cx) = S(1);
            t.noobj_mask.at(in, best_a, cy, cx) = S(0);
            t.tx.at(in, best_a, cy, cx) = static_cast<S>(cxp - cx);
            t.ty.at(in, best_a, cy, cx) = static_cast<S>(cyp - cy);
            t.tw.at(in, best_a, cy, cx) =
                static_cast<S>(std::log(std::max(1e-9, b.w / anchors[best_a].first)));
            t.th.at(in, best_a, cy, cx) =
                static_cast<S>(std::log(std::max(1e-9, b.h / anchors[best_a].second)));
        }
    }
    return t;
}

template <typename S>
DetectorLossParts detector_loss(const nn::Tensor<S>& raw, const YoloTargets<S>& targets,
                                nn::Tensor<S>* d_raw) {
    const int n = raw.n, g = raw.h;
    const int A = raw.c / 5;
    constexpr double kCoordW = 5.0, kObjW = 1.0, kNoobjW = 0.5;

    double n_obj = 0.0, n_noobj = 0.0;
    for (const S v : targets.obj_mask.v) n_obj += static_cast<double>(v);
    for (const S v : targets.noobj_mask.v) n_noobj += static_cast<double>(v);
    const double obj_div = std::max(1.0, n_obj);
    const double noobj_div = std::max(1.0, n_noobj);

    if (d_raw) *d_raw = nn::Tensor<S>(raw.n, raw.c, raw.h, raw.w);
    DetectorLossParts parts;

    // Numerically stable logistic loss on the raw logit z with target t:
    // max(z,0) - z*t + log(1+exp(-|z|)); gradient sigmoid(z) - t.
    auto bce = [](double z, double t, double* dz) {
        const double loss = std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
        *dz = 1.0 / (1.0 + std::exp(-z)) - t;
        return loss;
    };

    for (int in = 0; in < n; ++in)
        for (int a = 0; a < A; ++a)
            for (int cy = 0; cy < g; ++cy)
                for (int cx = 0; cx < g; ++cx) {
                    const double zo = raw.at(in, a * 5 + 4, cy, cx);
                    if (targets.obj_mask.at(in, a, cy, cx) != S(0)) {
                        const double sx = sigmoid(static_cast<double>(raw.at(in, a * 5 + 0, cy, cx)));
                        const double sy = sigmoid(static_cast<double>(raw.at(in, a * 5 + 1, cy, cx)));
                        const double zw = raw.at(in, a * 5 + 2, cy, cx);
                        const double zh = raw.at(in, a * 5 + 3, cy, cx);
                        const double ex = sx - targets.tx.at(in, a, cy, cx);
                        const double ey = sy - targets.ty.at(in, a, cy, cx);
                        const double ew = zw - targets.tw.at(in, a, cy, cx);
                        const double eh = zh - targets.th.at(in, a, cy, cx);
                        parts.coord += kCoordW * (ex * ex + ey * ey + ew * ew + eh * eh) / obj_div;
                        double dzo;
                        parts.obj += kObjW * bce(zo, 1.0, &dzo) / obj_div;
                        if (d_raw) {
                            d_raw->at(in, a * 5 + 0, cy, cx) =
                                static_cast<S>(kCoordW * 2 * ex * sx * (1 - sx) / obj_div);
                            d_raw->at(in, a * 5 + 1, cy, cx) =
                                static_cast<S>(kCoordW * 2 * ey * sy * (1 - sy) / obj_div);
                            d_raw->at(in, a * 5 + 2, cy, cx) =
                                static_cast<S>(kCoordW * 2 * ew / obj_div);
                            d_raw->at(in, a * 5 + 3, cy, cx) =
                                static_cast<S>(kCoordW * 2 * eh / obj_div);
                            d_raw->at(in, a * 5 + 4, cy, cx) =
                                static_cast<S>(kObjW * dzo / obj_div);
                        }
                    } else if (targets.noobj_mask.at(in, a, cy, cx) != S(0)) {
                        double dzo;
                        parts.noobj += kNoobjW * bce(zo, 0.0, &dzo) / noobj_div;
                        if (d_raw)
                            d_raw->at(in, a * 5 + 4, cy, cx) =
                                static_cast<S>(kNoobjW * dzo / noobj_div);
                    }
                }
    parts.total = parts.coord + parts.obj + parts.noobj;
    return parts;
}

}  // namespace uts::detector
