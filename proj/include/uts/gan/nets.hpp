#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "uts/core/errors.hpp"
#include "uts/nn/stack.hpp"

namespace uts::gan {

/// U-net: stride-2 4x4 conv encoder, nearest-upsample + 3x3 conv decoder,
/// skip concatenation at every resolution, tanh output. Channel width
/// doubles per level, capped at 8x base.
template <typename S>
class UNetGenerator {
public:
    UNetGenerator(int image_size, int base, int depth, std::uint64_t init_seed)
        : size_(image_size), depth_(depth) {
        if (depth < 1) throw ConfigError("generator: depth must be >= 1");
        if (base < 1) throw ConfigError("generator: base width must be >= 1");
        if (image_size < (1 << depth) || image_size % (1 << depth) != 0)
            throw ConfigError("generator: image size must be a positive multiple of 2^depth");
        Rng rng(init_seed, 9100);
        using namespace uts::nn;
        auto ch = [&](int level) { return std::min(base << level, base * 8); };

        for (int i = 0; i < depth; ++i) {
            enc_conv_.push_back(std::make_unique<Conv2d<S>>(i == 0 ? 1 : ch(i - 1), ch(i), 4,
                                                            2, 1, Init::kGan, rng));
            enc_norm_.push_back(i == 0 ? nullptr
                                       : std::make_unique<InstanceNorm2d<S>>(ch(i)));
            enc_act_.push_back(std::make_unique<LeakyReLU<S>>(S(0.2)));
        }
        dec_up_.resize(depth);
        dec_conv_.resize(depth);
        dec_norm_.resize(depth);
        dec_act_.resize(depth);
        for (int j = depth - 1; j >= 1; --j) {
            const int cin = (j == depth - 1) ? ch(j) : 2 * ch(j);
            dec_up_[j] = std::make_unique<Upsample2xNearest<S>>();
            dec_conv_[j] =
                std::make_unique<Conv2d<S>>(cin, ch(j - 1), 3, 1, 1, Init::kGan, rng);
            dec_norm_[j] = std::make_unique<InstanceNorm2d<S>>(ch(j - 1));
            dec_act_[j] = std::make_unique<Relu<S>>();
        }
        const int fin_cin = depth == 1 ? ch(0) : 2 * ch(0);
        fin_up_ = std::make_unique<Upsample2xNearest<S>>();
        fin_conv_ = std::make_unique<Conv2d<S>>(fin_cin, 1, 3, 1, 1, Init::kGan, rng);
        fin_tanh_ = std::make_unique<TanhLayer<S>>();
    }

    int image_size() const { return size_; }

    /// mask: (n,1,s,s) -> image (n,1,s,s) in (-1,1).
    nn::Tensor<S> forward(const nn::Tensor<S>& mask, bool train) {
        if (mask.c != 1 || mask.h != size_ || mask.w != size_)
            throw ValidationError("generator: expected (n,1," + std::to_string(size_) + "," +
                                  std::to_string(size_) + ") input, got " + mask.shape_str());
        enc_out_.assign(depth_, nn::Tensor<S>());
        nn::Tensor<S> x = mask;
        for (int i = 0; i < depth_; ++i) {
            x = enc_conv_[i]->forward(x, train);
            if (enc_norm_[i]) x = enc_norm_[i]->forward(x, train);
            x = enc_act_[i]->forward(x, train);
            enc_out_[i] = x;
        }
        for (int j = depth_ - 1; j >= 1; --j) {
            x = dec_up_[j]->forward(x, train);
            x = dec_conv_[j]->forward(x, train);
            x = dec_norm_[j]->forward(x, train);
            x = dec_act_[j]->forward(x, train);
            x = nn::concat_channels(x, enc_out_[j - 1]);
        }
        x = fin_up_->forward(x, train);
        x = fin_conv_->forward(x, train);
        return fin_tanh_->forward(x, train);
    }

    /// d_out: gradient of the output image; returns gradient of the mask.
    nn::Tensor<S> backward(const nn::Tensor<S>& d_out, bool accum_param_grads) {
        nn::Tensor<S> d = fin_tanh_->backward(d_out, accum_param_grads);
        d = fin_conv_->backward(d, accum_param_grads);
        d = fin_up_->backward(d, accum_param_grads);
        std::vector<nn::Tensor<S>> skip(depth_);
        for (int j = 1; j <= depth_ - 1; ++j) {
            nn::Tensor<S> dy, dskip;
            nn::split_channels(d, d.c / 2, &dy, &dskip);
            skip[j - 1] = std::move(dskip);
            dy = dec_act_[j]->backward(dy, accum_param_grads);
            dy = dec_norm_[j]->backward(dy, accum_param_grads);
            dy = dec_conv_[j]->backward(dy, accum_param_grads);
            d = dec_up_[j]->backward(dy, accum_param_grads);
        }
        for (int i = depth_ - 1; i >= 0; --i) {
            if (i < depth_ - 1) d.add_scaled(skip[i], S(1));
            d = enc_act_[i]->backward(d, accum_param_grads);
            if (enc_norm_[i]) d = enc_norm_[i]->backward(d, accum_param_grads);
            d = enc_conv_[i]->backward(d, accum_param_grads);
        }
        return d;
    }

    std::vector<nn::Param<S>*> params() {
        std::vector<nn::Param<S>*> out;
        auto take = [&](nn::Layer<S>* l) {
            if (!l) return;
            for (auto* p : l->params()) out.push_back(p);
        };
        for (int i = 0; i < depth_; ++i) {
            take(enc_conv_[i].get());
            take(enc_norm_[i].get());
        }
        for (int j = 1; j <= depth_ - 1; ++j) {
            take(dec_conv_[j].get());
            take(dec_norm_[j].get());
        }
        take(fin_conv_.get());
        return out;
    }

private:
    int size_, depth_;
    std::vector<std::unique_ptr<nn::Conv2d<S>>> enc_conv_;
    std::vector<std::unique_ptr<nn::InstanceNorm2d<S>>> enc_norm_;
    std::vector<std::unique_ptr<nn::LeakyReLU<S>>> enc_act_;
    std::vector<std::unique_ptr<nn::Upsample2xNearest<S>>> dec_up_;
    std::vector<std::unique_ptr<nn::Conv2d<S>>> dec_conv_;
    std::vector<std::unique_ptr<nn::InstanceNorm2d<S>>> dec_norm_;
    std::vector<std::unique_ptr<nn::Relu<S>>> dec_act_;
    std::unique_ptr<nn::Upsample2xNearest<S>> fin_up_;
    std::unique_ptr<nn::Conv2d<S>> fin_conv_;
    std::unique_ptr<nn::TanhLayer<S>> fin_tanh_;
    std::vector<nn::Tensor<S>> enc_out_;
};

/// Patch classifier: three stride-2 4x4 conv blocks, one stride-1 block,
/// then a 1-channel projection. The output is a score grid; the activation
/// after every block is exposed as a feature map.
template <typename S>
class PatchDiscriminator {
public:
    PatchDiscriminator(int in_channels, int base, Rng& rng) : in_channels_(in_channels) {
        using namespace uts::nn;
        auto block = [&](int cin, int cout, int stride, bool norm) {
            stack_.add(std::make_unique<Conv2d<S>>(cin, cout, 4, stride, 1, Init::kGan, rng));
            if (norm) stack_.add(std::make_unique<InstanceNorm2d<S>>(cout));
            const int idx = stack_.add(std::make_unique<LeakyReLU<S>>(S(0.2)));
            stack_.tap(idx);
            tap_layers_.push_back(idx);
        };
        block(in_channels, base, 2, false);
        block(base, 2 * base, 2, true);
        block(2 * base, 4 * base, 2, true);
        block(4 * base, 8 * base, 1, true);
        stack_.add(std::make_unique<Conv2d<S>>(8 * base, 1, 4, 1, 1, Init::kGan, rng));
    }

    nn::Tensor<S> forward(const nn::Tensor<S>& x, bool train) {
        if (x.c != in_channels_)
            throw ValidationError("discriminator: expected " + std::to_string(in_channels_) +
                                  " channels, got " + x.shape_str());
        return stack_.forward(x, train);
    }

    /// d_feats, when given, must hold one gradient per feature map.
    nn::Tensor<S> backward(const nn::Tensor<S>& d_score, bool accum_param_grads,
                           const std::vector<nn::Tensor<S>>* d_feats = nullptr) {
        std::vector<std::pair<int, nn::Tensor<S>>> tap_grads;
        if (d_feats) {
            if (d_feats->size() != tap_layers_.size())
                throw std::invalid_argument("discriminator: feature gradient count mismatch");
            for (std::size_t i = 0; i < tap_layers_.size(); ++i)
                tap_grads.emplace_back(tap_layers_[i], (*d_feats)[i]);
        }
        return stack_.backward(d_score, accum_param_grads, tap_grads);
    }

    const std::vector<nn::Tensor<S>>& features() const { return stack_.tap_values(); }
    std::vector<nn::Param<S>*> params() { return stack_.params(); }
    int in_channels() const { return in_channels_; }
    static constexpr int kFeatureMaps = 4;

private:
    int in_channels_;
    nn::Stack<S> stack_;
    std::vector<int> tap_layers_;
};

/// Full-scale and half-scale patch discriminators sharing one input
/// convention: channel concatenation of (image, position mask) unless
/// concatenation is disabled, in which case the image alone.
template <typename S>
class PatchDiscriminatorPair {
public:
    static constexpr int kScales = 2;

    PatchDiscriminatorPair(bool concat_mask, int base, std::uint64_t init_seed)
        : concat_(concat_mask), rng_(init_seed, 9200),
          d1_(concat_mask ? 2 : 1, base, rng_), d2_(concat_mask ? 2 : 1, base, rng_) {}

    struct Output {
        std::vector<nn::Tensor<S>> scores;  // [full, half]
        std::vector<nn::Tensor<S>> feats;   // d1 features then d2 features
    };

    Output forward(const nn::Tensor<S>& image, const nn::Tensor<S>& mask, bool train) {
        if (!image.same_shape(mask))
            throw ValidationError("discriminator pair: image/mask shape mismatch " +
                                  image.shape_str() + " vs " + mask.shape_str());
        const nn::Tensor<S> in = concat_ ? nn::concat_channels(image, mask) : image;
        const nn::Tensor<S> in_half = pool_.forward(in, train);
        Output out;
        out.scores.push_back(d1_.forward(in, train));
        for (const auto& f : d1_.features()) out.feats.push_back(f);
        out.scores.push_back(d2_.forward(in_half, train));
        for (const auto& f : d2_.features()) out.feats.push_back(f);
        return out;
    }

    /// Gradients for the most recent forward. Returns d(image); the mask
    /// gradient is discarded (the mask is an input, never trained).
    nn::Tensor<S> backward(const std::vector<nn::Tensor<S>>& d_scores,
                           const std::vector<nn::Tensor<S>>* d_feats, bool accum_param_grads) {
        const std::vector<nn::Tensor<S>>* f1 = nullptr;
        const std::vector<nn::Tensor<S>>* f2 = nullptr;
        std::vector<nn::Tensor<S>> f1v, f2v;
        if (d_feats) {
            const int k = PatchDiscriminator<S>::kFeatureMaps;
            f1v.assign(d_feats->begin(), d_feats->begin() + k);
            f2v.assign(d_feats->begin() + k, d_feats->end());
            f1 = &f1v;
            f2 = &f2v;
        }
        nn::Tensor<S> d_in = d1_.backward(d_scores[0], accum_param_grads, f1);
        const nn::Tensor<S> d_half = d2_.backward(d_scores[1], accum_param_grads, f2);
        d_in.add_scaled(pool_.backward(d_half, accum_param_grads), S(1));
        if (!concat_) return d_in;
        nn::Tensor<S> d_img, d_mask;
        nn::split_channels(d_in, d_in.c / 2, &d_img, &d_mask);
        return d_img;
    }

    std::vector<nn::Param<S>*> params() {
        auto p = d1_.params();
        for (auto* q : d2_.params()) p.push_back(q);
        return p;
    }

    int in_channels() const { return d1_.in_channels(); }
    int feature_map_count() const { return 2 * PatchDiscriminator<S>::kFeatureMaps; }

private:
    bool concat_;
    Rng rng_;
    PatchDiscriminator<S> d1_, d2_;
    nn::AvgPool2x<S> pool_;
};

}  // namespace uts::gan
