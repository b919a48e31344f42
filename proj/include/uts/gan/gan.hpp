#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uts/core/errors.hpp"
#include "uts/core/image.hpp"
#include "uts/detector/net.hpp"
#include "uts/gan/nets.hpp"
#include "uts/maskgen/maskgen.hpp"

namespace uts::gan {

struct GanLossWeights {
    double lambda_adv = 1.0;
    double lambda_l1 = 100.0;
    double lambda_fm = 10.0;
    double lambda_det = 1.0;

    void validate() const {
        if (lambda_adv < 0 || lambda_l1 < 0 || lambda_fm < 0 || lambda_det < 0)
            throw ConfigError("gan: loss weights must be >= 0");
    }
    nlohmann::json to_json() const {
        return {{"lambda_adv", lambda_adv},
                {"lambda_l1", lambda_l1},
                {"lambda_fm", lambda_fm},
                {"lambda_det", lambda_det}};
    }
    static GanLossWeights from_json(const nlohmann::json& j) {
        GanLossWeights w;
        w.lambda_adv = j.value("lambda_adv", w.lambda_adv);
        w.lambda_l1 = j.value("lambda_l1", w.lambda_l1);
        w.lambda_fm = j.value("lambda_fm", w.lambda_fm);
        w.lambda_det = j.value("lambda_det", w.lambda_det);
        w.validate();
        return w;
    }
};

struct GanTrainConfig {
    int image_size = 64;
    int gen_base = 16;
    int gen_depth = 4;
    int disc_base = 16;
    bool concat_mask = true;  // discriminators see (image, mask) stacked
    GanLossWeights weights;
    int epochs = 800;
    int decay_epochs = 100;  // final epochs with the linear ramp to zero
    int batch_size = 8;
    double learning_rate = 0.0002;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    bool aug_hflip = true;
    bool aug_brightness = true;
    bool aug_crop = true;
    int checkpoint_every = 50;
    int val_every = 5;  // validation L1 cadence (epochs)
    std::uint64_t seed = 0;

    void validate() const;
    nlohmann::json to_json() const;
    static GanTrainConfig from_json(const nlohmann::json& j);
};

/// Base rate until epochs - decay_epochs, then a linear ramp hitting
/// exactly zero at the final epoch boundary.
double lr_schedule(int epoch, const GanTrainConfig& config);

struct GanLossBreakdown {
    double adv = 0.0;  // weighted contributions; total is their exact sum
    double l1 = 0.0;
    double fm = 0.0;
    double det = 0.0;
    double total = 0.0;
};

template <typename S>
struct GenLossGrads {
    std::vector<nn::Tensor<S>> d_scores;
    std::vector<nn::Tensor<S>> d_feats;
    nn::Tensor<S> d_img;
    std::vector<nn::Tensor<S>> d_det;
};

/// Per-element mean squared distance to a constant target.
template <typename S>
double mse_to(const nn::Tensor<S>& x, double target, double weight, nn::Tensor<S>* dx) {
    double loss = 0.0;
    if (dx && !dx->same_shape(x)) *dx = nn::Tensor<S>(x.n, x.c, x.h, x.w);
    const double inv = 1.0 / static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double e = static_cast<double>(x.v[i]) - target;
        loss += e * e;
        if (dx) dx->v[i] += static_cast<S>(weight * 2.0 * e * inv);
    }
    return loss * inv;
}

/// Per-element mean absolute difference; gradient flows to the first arg.
template <typename S>
double l1_diff(const nn::Tensor<S>& a, const nn::Tensor<S>& b, double weight,
               nn::Tensor<S>* da) {
    if (!a.same_shape(b))
        throw ValidationError("l1 loss: shape mismatch " + a.shape_str() + " vs " +
                              b.shape_str());
    if (da && !da->same_shape(a)) *da = nn::Tensor<S>(a.n, a.c, a.h, a.w);
    double loss = 0.0;
    const double inv = 1.0 / static_cast<double>(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double e = static_cast<double>(a.v[i]) - static_cast<double>(b.v[i]);
        loss += std::abs(e);
        if (da) da->v[i] += static_cast<S>(weight * (e > 0 ? 1.0 : e < 0 ? -1.0 : 0.0) * inv);
    }
    return loss * inv;
}

/// Four-term generator objective. Every reported term carries its weight;
/// the total is the exact sum of the four reported terms. Gradients (when
/// requested) cover everything that depends on the generator output.
template <typename S>
GanLossBreakdown generator_loss(const std::vector<nn::Tensor<S>>& fake_scores,
                                const std::vector<nn::Tensor<S>>& fake_feats,
                                const std::vector<nn::Tensor<S>>& real_feats,
                                const nn::Tensor<S>& fake_img, const nn::Tensor<S>& real_img,
                                const std::vector<nn::Tensor<S>>& det_out_fake,
                                const std::vector<nn::Tensor<S>>& det_out_real,
                                const GanLossWeights& w, GenLossGrads<S>* grads) {
    w.validate();
    if (fake_feats.size() != real_feats.size())
        throw ValidationError("generator_loss: feature list size mismatch");
    if (det_out_fake.size() != det_out_real.size())
        throw ValidationError("generator_loss: detector output list size mismatch");
    if (grads) {
        grads->d_scores.assign(fake_scores.size(), nn::Tensor<S>());
        grads->d_feats.assign(fake_feats.size(), nn::Tensor<S>());
        grads->d_img = nn::Tensor<S>();
        grads->d_det.assign(det_out_fake.size(), nn::Tensor<S>());
    }
    GanLossBreakdown out;
    for (std::size_t i = 0; i < fake_scores.size(); ++i)
        out.adv += w.lambda_adv * mse_to(fake_scores[i], 1.0, w.lambda_adv,
                                         grads ? &grads->d_scores[i] : nullptr);
    out.l1 = w.lambda_l1 *
             l1_diff(fake_img, real_img, w.lambda_l1, grads ? &grads->d_img : nullptr);
    for (std::size_t i = 0; i < fake_feats.size(); ++i)
        out.fm += w.lambda_fm * l1_diff(fake_feats[i], real_feats[i], w.lambda_fm,
                                        grads ? &grads->d_feats[i] : nullptr);
    for (std::size_t i = 0; i < det_out_fake.size(); ++i)
        out.det += w.lambda_det * l1_diff(det_out_fake[i], det_out_real[i], w.lambda_det,
                                          grads ? &grads->d_det[i] : nullptr);
    out.total = out.adv + out.l1 + out.fm + out.det;
    return out;
}

/// 0.5 * [MSE(real, 1) + MSE(fake, 0)] summed over the given score maps.
template <typename S>
double discriminator_loss(const std::vector<nn::Tensor<S>>& real_scores,
                          const std::vector<nn::Tensor<S>>& fake_scores,
                          std::vector<nn::Tensor<S>>* d_real = nullptr,
                          std::vector<nn::Tensor<S>>* d_fake = nullptr) {
    if (real_scores.size() != fake_scores.size())
        throw ValidationError("discriminator_loss: score list size mismatch");
    if (d_real) d_real->assign(real_scores.size(), nn::Tensor<S>());
    if (d_fake) d_fake->assign(fake_scores.size(), nn::Tensor<S>());
    double loss = 0.0;
    for (std::size_t i = 0; i < real_scores.size(); ++i) {
        loss += 0.5 * mse_to(real_scores[i], 1.0, 0.5, d_real ? &(*d_real)[i] : nullptr);
        loss += 0.5 * mse_to(fake_scores[i], 0.0, 0.5, d_fake ? &(*d_fake)[i] : nullptr);
    }
    return loss;
}

/// One conditioning pair: rasterized boxes + the target image.
struct GanPair {
    Mask8 mask;
    std::vector<Box> boxes;
    Image8 image;
};

/// Pairs every sample with the position mask of its own annotations.
std::vector<GanPair> make_pairs(const std::vector<Sample>& samples);

struct GanEpochRecord {
    int epoch = 0;
    double lr = 0.0;
    double d_loss = 0.0;
    double adv = 0.0;
    double l1 = 0.0;
    double fm = 0.0;
    double det = 0.0;
    double total = 0.0;
    double val_l1 = -1.0;  // negative when not measured this epoch
};

struct GanTrainResult {
    std::filesystem::path best_checkpoint;
    std::filesystem::path last_checkpoint;
    std::filesystem::path history_csv;
    std::vector<GanEpochRecord> history;
    int best_epoch = -1;
    long long detector_evals = 0;   // ablation wiring evidence
    int d_input_channels = 0;       // ditto
    std::string detector_digest_before;
    std::string detector_digest_after;
};

/// Full adversarial loop: per batch one discriminator update, then one
/// generator update against the pair of patch discriminators and (when
/// lambda_det > 0) the frozen detector. Checkpoints every
/// checkpoint_every epochs plus best-validation-L1 and final.
GanTrainResult train_gan(const std::vector<GanPair>& train_pairs,
                         const std::vector<GanPair>& val_pairs,
                         detector::DetectorNet<nn::real_t>* frozen_detector,
                         const GanTrainConfig& config, const std::filesystem::path& out_dir);

/// Loads a generator checkpoint (architecture config embedded).
UNetGenerator<nn::real_t> load_generator(const std::filesystem::path& ckpt,
                                         GanTrainConfig* config_out = nullptr);

/// One sample per mask: the generated image with the mask's boxes as
/// annotations, tagged as GAN output. Deterministic per checkpoint.
std::vector<Sample> generate_synthetic_set(const std::filesystem::path& gen_ckpt,
                                           const std::vector<maskgen::PositionMask>& masks,
                                           const std::string& id_prefix = "gan");

/// [0,255] byte image <-> the (-1,1) network range.
nn::Tensor<nn::real_t> image_to_tensor(const Image8& img);
Image8 tensor_to_image(const nn::Tensor<nn::real_t>& t, int slot = 0);
nn::Tensor<nn::real_t> mask_to_tensor(const Mask8& mask);

}  // namespace uts::gan
