#include "uts/gan/gan.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "uts/core/augment.hpp"
#include "uts/core/io.hpp"
#include "uts/nn/adam.hpp"
#include "uts/nn/checkpoint.hpp"

namespace uts::gan {

using nn::real_t;
using nn::Tensor;

void GanTrainConfig::validate() const {
    if (image_size < 64 || image_size % 16 != 0 || image_size % (1 << gen_depth) != 0)
        throw ConfigError(
            "gan: image_size must be >= 64, a multiple of 16 and of 2^gen_depth");
    if (gen_base < 1 || disc_base < 1) throw ConfigError("gan: base widths must be >= 1");
    if (gen_depth < 1) throw ConfigError("gan: gen_depth must be >= 1");
    weights.validate();
    if (epochs < 1) throw ConfigError("gan: epochs must be >= 1");
    if (decay_epochs < 0 || decay_epochs > epochs)
        throw ConfigError("gan: decay_epochs must lie in [0, epochs]");
    if (batch_size < 1) throw ConfigError("gan: batch_size must be >= 1");
    if (learning_rate <= 0) throw ConfigError("gan: learning_rate must be positive");
    if (adam_beta1 < 0 || adam_beta1 >= 1 || adam_beta2 < 0 || adam_beta2 >= 1)
        throw ConfigError("gan: adam betas must lie in [0,1)");
    if (checkpoint_every < 1) throw ConfigError("gan: checkpoint_every must be >= 1");
    if (val_every < 1) throw ConfigError("gan: val_every must be >= 1");
}

nlohmann::json GanTrainConfig::to_json() const {
    nlohmann::json j;
    j["image_size"] = image_size;
    j["gen_base"] = gen_base;
    j["gen_depth"] = gen_depth;
    j["disc_base"] = disc_base;
    j["concat_mask"] = concat_mask;
    j["weights"] = weights.to_json();
    j["epochs"] = epochs;
    j["decay_epochs"] = decay_epochs;
    j["batch_size"] = batch_size;
    j["learning_rate"] = learning_rate;
    j["adam_beta1"] = adam_beta1;
    j["adam_beta2"] = adam_beta2;
    j["aug_hflip"] = aug_hflip;
    j["aug_brightness"] = aug_brightness;
    j["aug_crop"] = aug_crop;
    j["checkpoint_every"] = checkpoint_every;
    j["val_every"] = val_every;
    j["seed"] = seed;
    return j;
}

GanTrainConfig GanTrainConfig::from_json(const nlohmann::json& j) {
    GanTrainConfig c;
    c.image_size = j.value("image_size", c.image_size);
    c.gen_base = j.value("gen_base", c.gen_base);
    c.gen_depth = j.value("gen_depth", c.gen_depth);
    c.disc_base = j.value("disc_base", c.disc_base);
    c.concat_mask = j.value("concat_mask", c.concat_mask);
    if (j.contains("weights")) c.weights = GanLossWeights::from_json(j.at("weights"));
    c.epochs = j.value("epochs", c.epochs);
    c.decay_epochs = j.value("decay_epochs", c.decay_epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.aug_hflip = j.value("aug_hflip", c.aug_hflip);
    c.aug_brightness = j.value("aug_brightness", c.aug_brightness);
    c.aug_crop = j.value("aug_crop", c.aug_crop);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.val_every = j.value("val_every", c.val_every);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
}

double lr_schedule(int epoch, const GanTrainConfig& config) {
    if (epoch < 0 || epoch > config.epochs)
        throw ConfigError("lr_schedule: epoch out of range");
    const int plateau = config.epochs - config.decay_epochs;
    if (epoch < plateau || config.decay_epochs == 0) return config.learning_rate;
    return config.learning_rate * static_cast<double>(config.epochs - epoch) /
           static_cast<double>(config.decay_epochs);
}

std::vector<GanPair> make_pairs(const std::vector<Sample>& samples) {
    std::vector<GanPair> pairs;
    pairs.reserve(samples.size());
    for (const Sample& s : samples) {
        maskgen::PositionMask pm = maskgen::mask_from_annotations(s);
        pairs.push_back({std::move(pm.pixels), std::move(pm.boxes), s.image});
    }
    return pairs;
}

Tensor<real_t> image_to_tensor(const Image8& img) {
    Tensor<real_t> t(1, 1, img.h, img.w);
    for (std::size_t i = 0; i < img.px.size(); ++i)
        t.v[i] = static_cast<real_t>(img.px[i]) / real_t(127.5) - real_t(1);
    return t;
}

Image8 tensor_to_image(const Tensor<real_t>& t, int slot) {
    Image8 img(t.h, t.w);
    const real_t* p = t.plane(slot, 0);
    for (std::size_t i = 0; i < img.px.size(); ++i)
        img.px[i] = clamp_u8((static_cast<double>(p[i]) + 1.0) * 127.5);
    return img;
}

Tensor<real_t> mask_to_tensor(const Mask8& mask) {
    Tensor<real_t> t(1, 1, mask.h, mask.w);
    for (std::size_t i = 0; i < mask.px.size(); ++i)
        t.v[i] = mask.px[i] ? real_t(1) : real_t(0);
    return t;
}

namespace {

/// Batched (mask, image) tensors after augmentation.
struct Batch {
    Tensor<real_t> masks;
    Tensor<real_t> images;
};

Batch make_batch(const std::vector<const GanPair*>& pairs, const GanTrainConfig& cfg,
                 Rng* aug_rng) {
    const int s = cfg.image_size;
    Batch b{Tensor<real_t>(static_cast<int>(pairs.size()), 1, s, s),
            Tensor<real_t>(static_cast<int>(pairs.size()), 1, s, s)};
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        Image8 img = pairs[i]->image;
        Mask8 mask = pairs[i]->mask;
        if (img.h != s || img.w != s)
            throw ValidationError("gan: training image is " + std::to_string(img.w) + "x" +
                                  std::to_string(img.h) + ", configured size is " +
                                  std::to_string(s));
        if (aug_rng) {
            std::vector<Box> boxes = pairs[i]->boxes;
            if (cfg.aug_hflip && aug_rng->uniform() < 0.5) {
                img = flip_horizontal(img);
                mask = flip_horizontal(mask);
            }
            if (cfg.aug_crop && aug_rng->uniform() < 0.5)
                scale_crop_inplace(img, boxes, aug_rng->uniform(1.0, 1.12),
                                   aug_rng->uniform(), aug_rng->uniform(), &mask);
            if (cfg.aug_brightness && aug_rng->uniform() < 0.5)
                value_jitter_inplace(img, aug_rng->uniform(0.9, 1.1), 0.0);
        }
        real_t* mp = b.masks.plane(static_cast<int>(i), 0);
        for (std::size_t k = 0; k < mask.px.size(); ++k)
            mp[k] = mask.px[k] ? real_t(1) : real_t(0);
        real_t* ip = b.images.plane(static_cast<int>(i), 0);
        for (std::size_t k = 0; k < img.px.size(); ++k)
            ip[k] = static_cast<real_t>(img.px[k]) / real_t(127.5) - real_t(1);
    }
    return b;
}

void check_finite(double v, const std::string& term, int epoch, int batch) {
    if (!std::isfinite(v))
        throw TrainError("gan: non-finite " + term + " loss at epoch " +
                         std::to_string(epoch) + " batch " + std::to_string(batch));
}

std::string history_csv_text(const std::vector<GanEpochRecord>& history) {
    std::ostringstream out;
    out << "epoch,lr,d_loss,adv,l1,fm,det,total,val_l1\n";
    out.setf(std::ios::fmtflags(0), std::ios::floatfield);
    out.precision(10);
    for (const auto& r : history)
        out << r.epoch << ',' << r.lr << ',' << r.d_loss << ',' << r.adv << ',' << r.l1
            << ',' << r.fm << ',' << r.det << ',' << r.total << ',' << r.val_l1 << '\n';
    return out.str();
}

}  // namespace

GanTrainResult train_gan(const std::vector<GanPair>& train_pairs,
                         const std::vector<GanPair>& val_pairs,
                         detector::DetectorNet<real_t>* frozen_detector,
                         const GanTrainConfig& config, const std::filesystem::path& out_dir) {
    config.validate();
    if (train_pairs.empty()) throw TrainError("gan: empty training set");
    const bool use_det = config.weights.lambda_det > 0.0;
    if (use_det && !frozen_detector)
        throw ConfigError("gan: lambda_det > 0 requires a detector checkpoint");
    io::ensure_directory(out_dir);

    UNetGenerator<real_t> gen(config.image_size, config.gen_base, config.gen_depth,
                              config.seed);
    PatchDiscriminatorPair<real_t> disc(config.concat_mask, config.disc_base, config.seed);
    nn::Adam<real_t> opt_g(gen.params(), config.adam_beta1, config.adam_beta2);
    nn::Adam<real_t> opt_d(disc.params(), config.adam_beta1, config.adam_beta2);

    GanTrainResult result;
    result.d_input_channels = disc.in_channels();
    if (frozen_detector)
        result.detector_digest_before = nn::params_digest(frozen_detector->params());

    auto save_gen = [&](const std::filesystem::path& path, int epoch) {
        nn::Checkpoint ck = nn::snapshot("generator", config.to_json(), gen.params());
        ck.meta["epoch"] = epoch;
        ck.save(path.string());
    };
    result.best_checkpoint = out_dir / "generator_best.ckpt";
    result.last_checkpoint = out_dir / "generator_last.ckpt";
    result.history_csv = out_dir / "gan_history.csv";

    auto val_l1 = [&]() {
        const std::vector<GanPair>& set = val_pairs.empty() ? train_pairs : val_pairs;
        double total = 0.0;
        for (std::size_t start = 0; start < set.size(); start += config.batch_size) {
            std::vector<const GanPair*> ptrs;
            for (std::size_t i = start; i < std::min(set.size(), start + config.batch_size);
                 ++i)
                ptrs.push_back(&set[i]);
            Batch vb = make_batch(ptrs, config, nullptr);
            const Tensor<real_t> out = gen.forward(vb.masks, false);
            total += l1_diff(out, vb.images, 0.0, static_cast<Tensor<real_t>*>(nullptr)) *
                     static_cast<double>(ptrs.size());
        }
        return total / static_cast<double>(set.size());
    };

    std::vector<std::size_t> order(train_pairs.size());
    std::iota(order.begin(), order.end(), 0);
    double best_val = std::numeric_limits<double>::infinity();

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = lr_schedule(epoch, config);
        Rng shuffle_rng(config.seed, 7000 + static_cast<std::uint64_t>(epoch));
        shuffle_rng.shuffle(order);
        Rng aug_rng(config.seed, 7500 + static_cast<std::uint64_t>(epoch));

        GanEpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        int batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            std::vector<const GanPair*> ptrs;
            for (std::size_t i = start; i < std::min(order.size(), start + config.batch_size);
                 ++i)
                ptrs.push_back(&train_pairs[order[i]]);
            Batch b = make_batch(ptrs, config, &aug_rng);

            Tensor<real_t> fake = gen.forward(b.masks, true);

            // Discriminator update: real toward 1, generated toward 0.
            auto out_real = disc.forward(b.images, b.masks, true);
            std::vector<Tensor<real_t>> d_real_grads(out_real.scores.size());
            double d_loss = 0.0;
            for (std::size_t k = 0; k < out_real.scores.size(); ++k)
                d_loss += 0.5 * mse_to(out_real.scores[k], 1.0, 0.5, &d_real_grads[k]);
            disc.backward(d_real_grads, nullptr, true);
            auto out_fake_d = disc.forward(fake, b.masks, true);
            std::vector<Tensor<real_t>> d_fake_grads(out_fake_d.scores.size());
            for (std::size_t k = 0; k < out_fake_d.scores.size(); ++k)
                d_loss += 0.5 * mse_to(out_fake_d.scores[k], 0.0, 0.5, &d_fake_grads[k]);
            disc.backward(d_fake_grads, nullptr, true);
            check_finite(d_loss, "discriminator", epoch, batches);
            opt_d.step(lr);

            // Generator update against the refreshed discriminator.
            auto out_real_g = disc.forward(b.images, b.masks, true);
            const std::vector<Tensor<real_t>> real_feats = out_real_g.feats;
            auto out_fake_g = disc.forward(fake, b.masks, true);

            std::vector<Tensor<real_t>> det_fake, det_real;
            Tensor<real_t> fake01, real01;
            if (use_det) {
                fake01 = fake;
                for (auto& v : fake01.v) v = (v + real_t(1)) * real_t(0.5);
                real01 = b.images;
                for (auto& v : real01.v) v = (v + real_t(1)) * real_t(0.5);
                det_real.push_back(frozen_detector->forward(real01, false));
                det_fake.push_back(frozen_detector->forward(fake01, true));
                result.detector_evals += 2;
            }

            GenLossGrads<real_t> grads;
            const GanLossBreakdown gl =
                generator_loss(out_fake_g.scores, out_fake_g.feats, real_feats, fake,
                               b.images, det_fake, det_real, config.weights, &grads);
            check_finite(gl.adv, "adversarial", epoch, batches);
            check_finite(gl.l1, "reconstruction", epoch, batches);
            check_finite(gl.fm, "feature-matching", epoch, batches);
            check_finite(gl.det, "detector", epoch, batches);

            Tensor<real_t> d_fake = grads.d_img;
            d_fake.add_scaled(disc.backward(grads.d_scores, &grads.d_feats, false),
                              real_t(1));
            if (use_det) {
                const Tensor<real_t> d_fake01 =
                    frozen_detector->backward(grads.d_det[0], false, false);
                d_fake.add_scaled(d_fake01, real_t(0.5));  // chain of (x+1)/2
            }
            gen.backward(d_fake, true);
            opt_g.step(lr);

            rec.d_loss += d_loss;
            rec.adv += gl.adv;
            rec.l1 += gl.l1;
            rec.fm += gl.fm;
            rec.det += gl.det;
            rec.total += gl.total;
            ++batches;
        }
        const double inv = 1.0 / std::max(1, batches);
        rec.d_loss *= inv;
        rec.adv *= inv;
        rec.l1 *= inv;
        rec.fm *= inv;
        rec.det *= inv;
        rec.total *= inv;

        if ((epoch + 1) % config.val_every == 0 || epoch + 1 == config.epochs) {
            rec.val_l1 = val_l1();
            if (rec.val_l1 < best_val) {
                best_val = rec.val_l1;
                result.best_epoch = epoch;
                save_gen(result.best_checkpoint, epoch);
            }
        }
        if ((epoch + 1) % config.checkpoint_every == 0)
            save_gen(out_dir / ("generator_epoch" + std::to_string(epoch + 1) + ".ckpt"),
                     epoch);
        result.history.push_back(rec);
    }

    save_gen(result.last_checkpoint, config.epochs - 1);
    if (result.best_epoch < 0) {
        save_gen(result.best_checkpoint, config.epochs - 1);
        result.best_epoch = config.epochs - 1;
    }
    io::write_text_file(result.history_csv, history_csv_text(result.history));

    if (frozen_detector) {
        result.detector_digest_after = nn::params_digest(frozen_detector->params());
        if (result.detector_digest_after != result.detector_digest_before)
            throw VerifyError("gan: frozen detector parameters changed during training");
    }
    return result;
}

UNetGenerator<real_t> load_generator(const std::filesystem::path& ckpt,
                                     GanTrainConfig* config_out) {
    const nn::Checkpoint ck = nn::Checkpoint::load(ckpt.string());
    if (ck.kind != "generator")
        throw LoadError("checkpoint kind is '" + ck.kind + "', expected 'generator'");
    const GanTrainConfig cfg = GanTrainConfig::from_json(ck.config);
    UNetGenerator<real_t> gen(cfg.image_size, cfg.gen_base, cfg.gen_depth, cfg.seed);
    std::vector<std::string> names;
    for (std::size_t i = 0; i < gen.params().size(); ++i)
        names.push_back("w" + std::to_string(i));
    ck.restore(names, gen.params());
    if (config_out) *config_out = cfg;
    return gen;
}

std::vector<Sample> generate_synthetic_set(const std::filesystem::path& gen_ckpt,
                                           const std::vector<maskgen::PositionMask>& masks,
                                           const std::string& id_prefix) {
    GanTrainConfig cfg;
    UNetGenerator<real_t> gen = load_generator(gen_ckpt, &cfg);
    std::vector<Sample> out;
    out.reserve(masks.size());
    for (std::size_t i = 0; i < masks.size(); ++i) {
        const maskgen::PositionMask& m = masks[i];
        if (m.pixels.h != cfg.image_size || m.pixels.w != cfg.image_size)
            throw ValidationError("generate: mask " + std::to_string(i) +
                                  " does not match the generator's image size");
        const Tensor<real_t> img = gen.forward(mask_to_tensor(m.pixels), false);
        Sample s;
        s.image = tensor_to_image(img);
        s.boxes = m.boxes;
        for (std::size_t k = 0; k < m.boxes.size(); ++k)
            s.defect_ids.push_back(id_prefix + std::to_string(i) + "." + std::to_string(k));
        s.tag = SourceTag::kGan;
        s.validate("generated sample " + std::to_string(i));
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace uts::gan
