#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "uts/core/image.hpp"
#include "uts/detector/net.hpp"

namespace uts::detector {

struct Detection {
    Box box;
    double confidence = 0.0;  // in [0,1]
};

struct EvalConfig {
    double objectness_threshold = 0.001;
    double nms_iou = 0.5;
    double match_iou = 0.5;

    void validate() const;
};

/// Intersection over union of two boxes; 0 for disjoint or degenerate.
double iou(const Box& a, const Box& b);

/// IoU of two (w,h) shapes aligned at a common corner.
double shape_iou(double aw, double ah, double bw, double bh);

/// Greedy NMS: keep by descending confidence, drop a detection iff its IoU
/// with an already-kept one exceeds iou_thresh. Ties keep input order.
std::vector<Detection> nms(std::vector<Detection> dets, double iou_thresh);

struct Anchor {
    double w = 0.0;
    double h = 0.0;
};

/// k-means on (w,h) with 1-IoU distance, deterministic per seed, anchors
/// sorted by area. Errors when fewer boxes than clusters.
std::vector<Anchor> compute_anchors(const std::vector<Box>& boxes, int k, std::uint64_t seed);

/// Mean 1-IoU from each box to its nearest anchor (k-means objective).
double anchor_cost(const std::vector<Box>& boxes, const std::vector<Anchor>& anchors);

struct PrPoint {
    double recall = 0.0;
    double precision = 0.0;
};

struct ApResult {
    double ap = 0.0;
    std::vector<PrPoint> curve;  // one point per detection, confidence order
};

/// Greedy confidence-ordered matching (one detection per ground-truth box
/// at IoU >= match_iou), then area under the all-points interpolated
/// precision-recall curve. Zero ground-truth boxes is an error.
ApResult evaluate_ap(const std::vector<std::vector<Detection>>& detections,
                     const std::vector<std::vector<Box>>& ground_truth, double match_iou);

/// Stops after `patience` consecutive epochs without strict improvement.
class EarlyStopper {
public:
    explicit EarlyStopper(int patience) : patience_(patience) {}

    /// Feed one validation loss; true once training should stop.
    bool observe(double loss) {
        if (loss < best_) {
            best_ = loss;
            stagnant_ = 0;
            return false;
        }
        return ++stagnant_ >= patience_;
    }

    int stagnant_epochs() const { return stagnant_; }
    double best() const { return best_; }

private:
    int patience_;
    int stagnant_ = 0;
    double best_ = std::numeric_limits<double>::infinity();
};

/// Multiplies the rate by `factor` after `patience` consecutive epochs
/// without strict improvement, then restarts the count.
class PlateauScheduler {
public:
    PlateauScheduler(double base_lr, int patience, double factor = 0.1)
        : lr_(base_lr), patience_(patience), factor_(factor) {}

    /// Feed one validation loss; returns the rate for the NEXT epoch.
    double observe(double loss) {
        if (loss < best_) {
            best_ = loss;
            stagnant_ = 0;
        } else if (++stagnant_ >= patience_) {
            lr_ *= factor_;
            stagnant_ = 0;
        }
        return lr_;
    }

    double current() const { return lr_; }

private:
    double lr_;
    int patience_;
    double factor_;
    int stagnant_ = 0;
    double best_ = std::numeric_limits<double>::infinity();
};

struct DetectorTrainConfig {
    DetectorNetConfig net;
    int epochs = 100;  // upper bound; early stopping usually ends sooner
    int batch_size = 8;
    double learning_rate = 0.003;
    double ignore_threshold = 0.6;
    int early_stop_patience = 8;
    int lr_reduce_patience = 2;
    double lr_reduce_factor = 0.1;
    bool aug_hflip = true;
    bool aug_crop = true;
    bool aug_value = true;  // brightness/contrast jitter on the single channel
    bool freeze_backbone = true;
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static DetectorTrainConfig from_json(const nlohmann::json& j);
};

struct DetectorTrainResult {
    std::filesystem::path best_checkpoint;
    std::filesystem::path last_checkpoint;
    std::vector<double> train_loss;       // per epoch
    std::vector<double> val_loss;         // per epoch
    std::vector<double> lr_history;       // rate used per epoch
    int best_epoch = -1;
    bool early_stopped = false;
    std::string backbone_digest_before;
    std::string backbone_digest_after;
};

/// Computes anchors on `train`, trains with early stopping and plateau LR
/// decay, keeps the best-validation checkpoint. Backbone parameters stay
/// frozen when configured (digest recorded before and after).
DetectorTrainResult train_detector(const std::vector<Sample>& train,
                                   const std::vector<Sample>& val,
                                   const DetectorTrainConfig& config,
                                   const std::filesystem::path& out_dir);

/// Loads a detector checkpoint (net config + weights).
DetectorNet<nn::real_t> load_detector(const std::filesystem::path& ckpt);

void save_detector(DetectorNet<nn::real_t>& net, const nlohmann::json& extra_meta,
                   const std::filesystem::path& path);

/// Runs one image through the net: resize to the input square, decode,
/// filter by objectness, NMS, map back to image coordinates, clip.
std::vector<Detection> detect(DetectorNet<nn::real_t>& net, const Image8& image,
                              const EvalConfig& eval);

/// AP of a detector over a labeled set.
ApResult evaluate_detector(DetectorNet<nn::real_t>& net, const std::vector<Sample>& samples,
                           const EvalConfig& eval);

/// Parameter bookkeeping of the reference full-scale architecture,
/// computed arithmetically (the reference net is never instantiated).
struct ReferenceParams {
    long long total = 0;      // every variable, including norm statistics
    long long frozen = 0;     // backbone weights + its norm parameters
    long long trainable = 0;  // head variables (norm statistics included)
};

/// Counts for the 53-layer reference backbone + 3-scale head at a given
/// class count. Conventions: conv blocks carry no bias but four norm
/// variables per channel (two learned, two running statistics); the frozen
/// bucket is every backbone variable, the trainable bucket every head
/// variable. Published splits that used different norm-statistics
/// bookkeeping can differ from these buckets by a few thousand.
ReferenceParams reference_param_counts(int num_classes);

}  // namespace uts::detector
