#include "uts/detector/detector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "uts/core/augment.hpp"
#include "uts/core/errors.hpp"
#include "uts/core/io.hpp"
#include "uts/core/rng.hpp"
#include "uts/nn/checkpoint.hpp"

namespace uts::detector {

namespace {

using nn::real_t;
using nn::Tensor;

/// Image (resized to the input square) as a (1,in,in) tensor slice in [0,1].
void fill_input(Tensor<real_t>& batch, int slot, const Image8& img, int input_size) {
    const Image8 r = (img.h == input_size && img.w == input_size)
                         ? img
                         : resize_bilinear(img, input_size, input_size);
    real_t* dst = batch.plane(slot, 0);
    for (std::size_t i = 0; i < r.px.size(); ++i)
        dst[i] = static_cast<real_t>(r.px[i]) / real_t(255);
}

std::vector<Box> boxes_to_input(const std::vector<Box>& boxes, int img_h, int img_w,
                                int input_size) {
    const double fy = static_cast<double>(input_size) / img_h;
    const double fx = static_cast<double>(input_size) / img_w;
    std::vector<Box> out;
    out.reserve(boxes.size());
    for (const Box& b : boxes) {
        Box s;
        s.x = static_cast<int>(std::lround(b.x * fx));
        s.y = static_cast<int>(std::lround(b.y * fy));
        s.w = std::max(1, static_cast<int>(std::lround(b.w * fx)));
        s.h = std::max(1, static_cast<int>(std::lround(b.h * fy)));
        s.x = std::min(s.x, input_size - 1);
        s.y = std::min(s.y, input_size - 1);
        s.w = std::min(s.w, input_size - s.x);
        s.h = std::min(s.h, input_size - s.y);
        out.push_back(s);
    }
    return out;
}

std::vector<std::string> param_names(DetectorNet<real_t>& net) {
    std::vector<std::string> names;
    const std::size_t nb = net.backbone_params().size();
    const std::size_t nh = net.head_params().size();
    for (std::size_t i = 0; i < nb; ++i) names.push_back("backbone.w" + std::to_string(i));
    for (std::size_t i = 0; i < nh; ++i) names.push_back("head.w" + std::to_string(i));
    return names;
}

double batch_loss(DetectorNet<real_t>& net, const std::vector<const Sample*>& batch,
                  const DetectorTrainConfig& cfg, bool train, Rng* aug_rng,
                  Tensor<real_t>* d_raw_out, std::vector<std::vector<Box>>* boxes_out) {
    const int in = cfg.net.input_size;
    Tensor<real_t> x(static_cast<int>(batch.size()), 1, in, in);
    std::vector<std::vector<Box>> boxes(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
        Image8 img = batch[i]->image;
        std::vector<Box> bx = batch[i]->boxes;
        if (train && aug_rng) {
            if (cfg.aug_hflip && aug_rng->uniform() < 0.5) hflip_inplace(img, bx);
            if (cfg.aug_crop && aug_rng->uniform() < 0.5) {
                const double scale = aug_rng->uniform(1.0, 1.15);
                scale_crop_inplace(img, bx, scale, aug_rng->uniform(), aug_rng->uniform());
            }
            if (cfg.aug_value && aug_rng->uniform() < 0.5)
                value_jitter_inplace(img, aug_rng->uniform(0.85, 1.18),
                                     aug_rng->uniform(-15.0, 15.0));
        }
        fill_input(x, static_cast<int>(i), img, in);
        boxes[i] = boxes_to_input(bx, img.h, img.w, in);
    }
    Tensor<real_t> raw = net.forward(x, train);
    YoloTargets<real_t> targets =
        build_targets(boxes, raw, net.config().anchors, in, cfg.ignore_threshold);
    Tensor<real_t> d_raw;
    const DetectorLossParts parts =
        detector_loss(raw, targets, train ? &d_raw : nullptr);
    if (train && d_raw_out) *d_raw_out = std::move(d_raw);
    if (boxes_out) *boxes_out = std::move(boxes);
    return parts.total;
}

}  // namespace

void DetectorTrainConfig::validate() const {
    net.validate();
    if (epochs <= 0) throw ConfigError("detector: epochs must be positive");
    if (batch_size <= 0) throw ConfigError("detector: batch_size must be positive");
    if (learning_rate <= 0) throw ConfigError("detector: learning_rate must be positive");
    if (ignore_threshold < 0 || ignore_threshold > 1)
        throw ConfigError("detector: ignore_threshold must lie in [0,1]");
    if (early_stop_patience < 1 || lr_reduce_patience < 1)
        throw ConfigError("detector: patience values must be >= 1");
    if (lr_reduce_factor <= 0 || lr_reduce_factor >= 1)
        throw ConfigError("detector: lr_reduce_factor must lie in (0,1)");
}

nlohmann::json DetectorTrainConfig::to_json() const {
    nlohmann::json j;
    j["net"] = net.to_json();
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["learning_rate"] = learning_rate;
    j["ignore_threshold"] = ignore_threshold;
    j["early_stop_patience"] = early_stop_patience;
    j["lr_reduce_patience"] = lr_reduce_patience;
    j["lr_reduce_factor"] = lr_reduce_factor;
    j["aug_hflip"] = aug_hflip;
    j["aug_crop"] = aug_crop;
    j["aug_value"] = aug_value;
    j["freeze_backbone"] = freeze_backbone;
    j["seed"] = seed;
    return j;
}

DetectorTrainConfig DetectorTrainConfig::from_json(const nlohmann::json& j) {
    DetectorTrainConfig c;
    if (j.contains("net")) c.net = DetectorNetConfig::from_json(j.at("net"));
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.ignore_threshold = j.value("ignore_threshold", c.ignore_threshold);
    c.early_stop_patience = j.value("early_stop_patience", c.early_stop_patience);
    c.lr_reduce_patience = j.value("lr_reduce_patience", c.lr_reduce_patience);
    c.lr_reduce_factor = j.value("lr_reduce_factor", c.lr_reduce_factor);
    c.aug_hflip = j.value("aug_hflip", c.aug_hflip);
    c.aug_crop = j.value("aug_crop", c.aug_crop);
    c.aug_value = j.value("aug_value", c.aug_value);
    c.freeze_backbone = j.value("freeze_backbone", c.freeze_backbone);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

DetectorTrainResult train_detector(const std::vector<Sample>& train,
                                   const std::vector<Sample>& val,
                                   const DetectorTrainConfig& config,
                                   const std::filesystem::path& out_dir) {
    DetectorTrainConfig cfg = config;
    cfg.validate();
    if (train.empty()) throw TrainError("detector: empty training set");
    io::ensure_directory(out_dir);

    if (cfg.net.anchors.empty()) {
        std::vector<Box> all_boxes;
        for (const Sample& s : train) {
            const auto scaled =
                boxes_to_input(s.boxes, s.image.h, s.image.w, cfg.net.input_size);
            all_boxes.insert(all_boxes.end(), scaled.begin(), scaled.end());
        }
        const auto anchors = compute_anchors(all_boxes, cfg.net.anchors_n, cfg.seed);
        for (const Anchor& a : anchors) cfg.net.anchors.emplace_back(a.w, a.h);
    }

    cfg.net.init_seed = cfg.seed;
    DetectorNet<real_t> net(cfg.net);
    DetectorTrainResult result;
    result.backbone_digest_before = nn::params_digest(net.backbone_params());

    std::vector<nn::Param<real_t>*> train_params = net.head_params();
    if (!cfg.freeze_backbone)
        for (auto* p : net.backbone_params()) train_params.push_back(p);
    nn::Adam<real_t> adam(train_params, 0.9, 0.999);

    EarlyStopper stopper(cfg.early_stop_patience);
    PlateauScheduler scheduler(cfg.learning_rate, cfg.lr_reduce_patience,
                               cfg.lr_reduce_factor);
    double lr = cfg.learning_rate;
    double best_val = std::numeric_limits<double>::infinity();
    result.best_checkpoint = out_dir / "detector_best.ckpt";
    result.last_checkpoint = out_dir / "detector_last.ckpt";

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    const auto names = param_names(net);
    auto save_ckpt = [&](const std::filesystem::path& path, int epoch, double vloss) {
        nn::Checkpoint ck = nn::snapshot("detector", cfg.to_json(), net.params());
        // snapshot names w0..wN; rename to the backbone/head split
        for (std::size_t i = 0; i < ck.entries.size(); ++i) ck.entries[i].name = names[i];
        ck.meta["epoch"] = epoch;
        ck.meta["val_loss"] = vloss;
        ck.meta["backbone_digest"] = result.backbone_digest_before;
        ck.save(path.string());
    };

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(cfg.seed, 6000 + static_cast<std::uint64_t>(epoch));
        shuffle_rng.shuffle(order);
        Rng aug_rng(cfg.seed, 6500 + static_cast<std::uint64_t>(epoch));

        double epoch_loss = 0.0;
        int batches = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::vector<const Sample*> batch;
            for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size);
                 ++i)
                batch.push_back(&train[order[i]]);
            Tensor<real_t> d_raw;
            const double loss = batch_loss(net, batch, cfg, true, &aug_rng, &d_raw, nullptr);
            if (!std::isfinite(loss))
                throw TrainError("detector: non-finite loss at epoch " +
                                 std::to_string(epoch) + " batch " + std::to_string(batches));
            net.backward(d_raw, true, !cfg.freeze_backbone);
            adam.step(lr);
            epoch_loss += loss;
            ++batches;
        }
        result.train_loss.push_back(epoch_loss / std::max(1, batches));
        result.lr_history.push_back(lr);

        double vloss = 0.0;
        int vbatches = 0;
        const std::vector<Sample>& vset = val.empty() ? train : val;
        for (std::size_t start = 0; start < vset.size(); start += cfg.batch_size) {
            std::vector<const Sample*> batch;
            for (std::size_t i = start; i < std::min(vset.size(), start + cfg.batch_size);
                 ++i)
                batch.push_back(&vset[i]);
            vloss += batch_loss(net, batch, cfg, false, nullptr, nullptr, nullptr);
            ++vbatches;
        }
        vloss /= std::max(1, vbatches);
        result.val_loss.push_back(vloss);

        if (vloss < best_val) {
            best_val = vloss;
            result.best_epoch = epoch;
            save_ckpt(result.best_checkpoint, epoch, vloss);
        }
        lr = scheduler.observe(vloss);
        if (stopper.observe(vloss)) {
            result.early_stopped = true;
            break;
        }
    }

    save_ckpt(result.last_checkpoint,
              static_cast<int>(result.val_loss.size()) - 1,
              result.val_loss.empty() ? 0.0 : result.val_loss.back());
    if (result.best_epoch < 0) save_ckpt(result.best_checkpoint, -1, 0.0);
    result.backbone_digest_after = nn::params_digest(net.backbone_params());
    if (cfg.freeze_backbone &&
        result.backbone_digest_after != result.backbone_digest_before)
        throw VerifyError("detector: frozen backbone parameters changed during training");
    return result;
}

void save_detector(DetectorNet<real_t>& net, const nlohmann::json& extra_meta,
                   const std::filesystem::path& path) {
    nn::Checkpoint ck = nn::snapshot("detector", net.config().to_json(), net.params());
    const auto names = param_names(net);
    for (std::size_t i = 0; i < ck.entries.size(); ++i) ck.entries[i].name = names[i];
    ck.meta = extra_meta;
    ck.save(path.string());
}

DetectorNet<real_t> load_detector(const std::filesystem::path& ckpt) {
    const nn::Checkpoint ck = nn::Checkpoint::load(ckpt.string());
    if (ck.kind != "detector")
        throw LoadError("checkpoint kind is '" + ck.kind + "', expected 'detector'");
    const nlohmann::json& cfg_json =
        ck.config.contains("net") ? ck.config.at("net") : ck.config;
    DetectorNet<real_t> net(DetectorNetConfig::from_json(cfg_json));
    ck.restore(param_names(net), net.params());
    return net;
}

std::vector<Detection> detect(DetectorNet<real_t>& net, const Image8& image,
                              const EvalConfig& eval) {
    eval.validate();
    const int in = net.config().input_size;
    Tensor<real_t> x(1, 1, in, in);
    fill_input(x, 0, image, in);
    const Tensor<real_t> raw = net.forward(x, false);
    const int g = raw.h;
    const double stride = static_cast<double>(in) / g;
    const auto& anchors = net.config().anchors;
    if (anchors.empty()) throw ConfigError("detector: checkpoint has no anchors");

    const double fx = static_cast<double>(image.w) / in;
    const double fy = static_cast<double>(image.h) / in;
    std::vector<Detection> dets;
    for (std::size_t a = 0; a < anchors.size(); ++a)
        for (int cy = 0; cy < g; ++cy)
            for (int cx = 0; cx < g; ++cx) {
                const int ac = static_cast<int>(a) * 5;
                const double conf =
                    1.0 / (1.0 + std::exp(-static_cast<double>(raw.at(0, ac + 4, cy, cx))));
                if (conf < eval.objectness_threshold) continue;
                const double bx = (cx + sigmoid(raw.at(0, ac + 0, cy, cx))) * stride;
                const double by = (cy + sigmoid(raw.at(0, ac + 1, cy, cx))) * stride;
                const double bw = anchors[a].first *
                                  std::exp(std::min(real_t(8), raw.at(0, ac + 2, cy, cx)));
                const double bh = anchors[a].second *
                                  std::exp(std::min(real_t(8), raw.at(0, ac + 3, cy, cx)));
                // back to source pixels, clipped to the image
                double x0 = (bx - bw / 2) * fx, y0 = (by - bh / 2) * fy;
                double x1 = (bx + bw / 2) * fx, y1 = (by + bh / 2) * fy;
                x0 = std::clamp(x0, 0.0, static_cast<double>(image.w));
                x1 = std::clamp(x1, 0.0, static_cast<double>(image.w));
                y0 = std::clamp(y0, 0.0, static_cast<double>(image.h));
                y1 = std::clamp(y1, 0.0, static_cast<double>(image.h));
                Box b;
                b.x = static_cast<int>(std::lround(x0));
                b.y = static_cast<int>(std::lround(y0));
                b.w = static_cast<int>(std::lround(x1 - x0));
                b.h = static_cast<int>(std::lround(y1 - y0));
                if (!b.valid()) continue;
                dets.push_back({b, conf});
            }
    return nms(std::move(dets), eval.nms_iou);
}

ApResult evaluate_detector(DetectorNet<real_t>& net, const std::vector<Sample>& samples,
                           const EvalConfig& eval) {
    std::vector<std::vector<Detection>> dets;
    std::vector<std::vector<Box>> gts;
    dets.reserve(samples.size());
    gts.reserve(samples.size());
    for (const Sample& s : samples) {
        dets.push_back(detect(net, s.image, eval));
        gts.push_back(s.boxes);
    }
    return evaluate_ap(dets, gts, eval.match_iou);
}

ReferenceParams reference_param_counts(int num_classes) {
    if (num_classes <= 0) throw ConfigError("reference_param_counts: num_classes must be > 0");
    struct ConvBlock {
        int k, cin, cout;
    };
    std::vector<ConvBlock> body, head;
    auto C = [](std::vector<ConvBlock>& lst, int k, int cin, int cout) {
        lst.push_back({k, cin, cout});
    };
    // backbone: initial conv + five downsample stages with residual pairs
    C(body, 3, 3, 32);
    auto res_stage = [&](int cin, int cout, int blocks) {
        C(body, 3, cin, cout);  // stride-2 downsample
        for (int i = 0; i < blocks; ++i) {
            C(body, 1, cout, cout / 2);
            C(body, 3, cout / 2, cout);
        }
    };
    res_stage(32, 64, 1);
    res_stage(64, 128, 2);
    res_stage(128, 256, 8);
    res_stage(256, 512, 8);
    res_stage(512, 1024, 4);

    // head: three detection scales, each 5 alternating convs + branch conv,
    // with 1x1 reduction convs before the two upsampling merges
    const int out = 3 * (num_classes + 5);
    auto last_layers = [&](int cin, int nf) {
        C(head, 1, cin, nf);
        C(head, 3, nf, nf * 2);
        C(head, 1, nf * 2, nf);
        C(head, 3, nf, nf * 2);
        C(head, 1, nf * 2, nf);
        C(head, 3, nf, nf * 2);  // branch conv feeding the final projection
    };
    last_layers(1024, 512);
    C(head, 1, 512, 256);
    last_layers(256 + 512, 256);
    C(head, 1, 256, 128);
    last_layers(128 + 256, 128);

    auto block_vars = [](const std::vector<ConvBlock>& lst) {
        long long weights = 0, channels = 0;
        for (const auto& b : lst) {
            weights += static_cast<long long>(b.k) * b.k * b.cin * b.cout;
            channels += b.cout;
        }
        return weights + 4 * channels;  // + gamma, beta, mean, variance
    };
    // final per-scale projections carry a bias and no normalization
    const long long finals = static_cast<long long>(1024 + 1 + 512 + 1 + 256 + 1) * out;

    ReferenceParams p;
    p.frozen = block_vars(body);
    p.trainable = block_vars(head) + finals;
    p.total = p.frozen + p.trainable;
    return p;
}

}  // namespace uts::detector
