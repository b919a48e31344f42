#include "uts/cpsynth/cpsynth.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "uts/core/errors.hpp"
#include "uts/core/imageops.hpp"
#include "uts/core/rng.hpp"

namespace uts::cpsynth {

void PasteAttemptPolicy::validate() const {
    if (max_attempts < 1) throw ConfigError("paste policy: max_attempts must be >= 1");
    if (compatibility_tolerance < 0.0 || compatibility_tolerance >= 1.0)
        throw ConfigError("paste policy: compatibility_tolerance must be in [0,1)");
    if (dilation_iterations < 0) throw ConfigError("paste policy: negative dilation iterations");
    if (max_gain <= 0.0) throw ConfigError("paste policy: max_gain must be positive");
    if (image_restarts < 1) throw ConfigError("paste policy: image_restarts must be >= 1");
}

nlohmann::json PasteAttemptPolicy::to_json() const {
    nlohmann::json j;
    j["max_attempts"] = max_attempts;
    j["compatibility_tolerance"] = compatibility_tolerance;
    j["dilation_iterations"] = dilation_iterations;
    j["max_gain"] = max_gain;
    j["image_restarts"] = image_restarts;
    j["merge"] = merge == MergeOp::kMin ? "min" : "max";
    j["mask_side"] = mask_side == MaskSide::kBright ? "bright" : "dark";
    return j;
}

PasteAttemptPolicy PasteAttemptPolicy::from_json(const nlohmann::json& j) {
    PasteAttemptPolicy p;
    p.max_attempts = j.value("max_attempts", p.max_attempts);
    p.compatibility_tolerance = j.value("compatibility_tolerance", p.compatibility_tolerance);
    p.dilation_iterations = j.value("dilation_iterations", p.dilation_iterations);
    p.max_gain = j.value("max_gain", p.max_gain);
    p.image_restarts = j.value("image_restarts", p.image_restarts);
    const std::string merge = j.value("merge", p.merge == MergeOp::kMin ? "min" : "max");
    if (merge == "min")
        p.merge = MergeOp::kMin;
    else if (merge == "max")
        p.merge = MergeOp::kMax;
    else
        throw ConfigError("paste policy: merge must be 'min' or 'max'");
    const std::string side =
        j.value("mask_side", p.mask_side == MaskSide::kBright ? "bright" : "dark");
    if (side == "bright")
        p.mask_side = MaskSide::kBright;
    else if (side == "dark")
        p.mask_side = MaskSide::kDark;
    else
        throw ConfigError("paste policy: mask_side must be 'bright' or 'dark'");
    p.validate();
    return p;
}

int otsu_threshold(const Image8& img) {
    std::array<std::size_t, 256> hist{};
    for (auto v : img.px) ++hist[v];

    int lo = 0, hi = 255;
    while (lo < 255 && hist[lo] == 0) ++lo;
    while (hi > 0 && hist[hi] == 0) --hi;
    if (lo >= hi) return lo;  // single intensity present

    const double total = static_cast<double>(img.px.size());
    double sum_all = 0.0;
    for (int v = 0; v < 256; ++v) sum_all += static_cast<double>(v) * hist[v];

    double best_var = -1.0;
    int best_t = lo;
    double w0 = 0.0, sum0 = 0.0;
    for (int t = lo; t < hi; ++t) {
        w0 += hist[t];
        sum0 += static_cast<double>(t) * hist[t];
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) continue;
        const double mu0 = sum0 / w0;
        const double mu1 = (sum_all - sum0) / w1;
        const double var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
        if (var > best_var) {
            best_var = var;
            best_t = t;
        }
    }
    return best_t;
}

Mask8 binary_dilate(const Mask8& mask, int iterations) {
    Mask8 cur = mask;
    for (int it = 0; it < iterations; ++it) {
        Mask8 next(cur.h, cur.w);
        for (int y = 0; y < cur.h; ++y)
            for (int x = 0; x < cur.w; ++x) {
                std::uint8_t v = 0;
                for (int dy = -1; dy <= 1 && !v; ++dy)
                    for (int dx = -1; dx <= 1 && !v; ++dx) {
                        const int yy = y + dy, xx = x + dx;
                        if (yy >= 0 && yy < cur.h && xx >= 0 && xx < cur.w && cur.at(yy, xx))
                            v = 1;
                    }
                next.at(y, x) = v;
            }
        cur = std::move(next);
    }
    return cur;
}

Mask8 make_pseudo_mask(const Image8& crop, int dilation_iterations, MaskSide side) {
    if (crop.px.empty()) throw ValidationError("make_pseudo_mask: empty crop");
    const int t = otsu_threshold(crop);
    Mask8 mask(crop.h, crop.w);
    std::size_t fg = 0;
    for (std::size_t i = 0; i < crop.px.size(); ++i) {
        const bool on = side == MaskSide::kBright ? crop.px[i] > t : crop.px[i] < t;
        mask.px[i] = on ? 1 : 0;
        fg += on;
    }
    if (fg == 0) throw ValidationError("empty defect mask");
    return binary_dilate(mask, dilation_iterations);
}

bool region_compatible(const Image8& canvas, const Box& location, double patch_background_mean,
                       double tol) {
    const double canvas_mean = region_mean(canvas, location);
    const double denom = std::max({canvas_mean, patch_background_mean, 1.0});
    return std::abs(canvas_mean - patch_background_mean) / denom <= tol;
}

Image8 adapt_brightness(const Image8& crop, const Mask8& mask, double canvas_region_mean,
                        double max_gain) {
    if (mask.foreground_count() == 0) throw ValidationError("adapt_brightness: empty mask");
    const double bg_mean = masked_mean(crop, mask, /*foreground=*/false);
    double gain = bg_mean > 0.0 ? canvas_region_mean / bg_mean : max_gain;
    gain = std::min(gain, max_gain);
    return apply_gain(crop, gain);
}

Image8 paste_merge(const Image8& canvas, const Image8& crop, const Mask8& mask,
                   const Box& location, MergeOp merge) {
    if (!location.within(canvas.h, canvas.w))
        throw ValidationError("paste_merge: location outside canvas");
    if (crop.h != location.h || crop.w != location.w || mask.h != location.h ||
        mask.w != location.w)
        throw ValidationError("paste_merge: crop/mask shape does not match location");

    Image8 out = canvas;
    for (int y = 0; y < location.h; ++y)
        for (int x = 0; x < location.w; ++x) {
            if (!mask.at(y, x)) continue;
            const std::uint8_t c = canvas.at(location.y + y, location.x + x);
            const std::uint8_t p = crop.at(y, x);
            out.at(location.y + y, location.x + x) =
                merge == MergeOp::kMin ? std::min(c, p) : std::max(c, p);
        }
    return out;
}

std::vector<DefectPatch> build_defect_patches(const std::vector<dataset::DefectCrop>& crops,
                                              const PasteAttemptPolicy& policy) {
    std::vector<DefectPatch> out;
    out.reserve(crops.size());
    for (const auto& c : crops) {
        try {
            DefectPatch p;
            p.pseudo_mask = make_pseudo_mask(c.crop, policy.dilation_iterations, policy.mask_side);
            p.crop = c.crop;
            p.origin_id = c.origin_id;
            out.push_back(std::move(p));
        } catch (const ValidationError&) {
            // crop thresholded to nothing; skip it
        }
    }
    return out;
}

namespace {

double gain_for(const Image8& crop, const Mask8& mask, double canvas_region_mean,
                double max_gain) {
    const double bg_mean = masked_mean(crop, mask, false);
    double gain = bg_mean > 0.0 ? canvas_region_mean / bg_mean : max_gain;
    return std::min(gain, max_gain);
}

}  // namespace

CpSample generate_cp_sample(const std::vector<Image8>& canvases,
                            const std::vector<DefectPatch>& patches, int defects_lo,
                            int defects_hi, const PasteAttemptPolicy& policy,
                            std::uint64_t seed) {
    policy.validate();
    if (canvases.empty()) throw ConfigError("cp synthesis: no canvases");
    if (patches.empty()) throw ConfigError("cp synthesis: no defect patches");
    if (defects_lo < 1 || defects_hi < defects_lo)
        throw ConfigError("cp synthesis: bad defects-per-image range");

    Rng rng(seed, /*stream=*/2000);

    for (int restart = 0; restart < policy.image_restarts; ++restart) {
        const std::size_t canvas_idx = rng.index(canvases.size());
        const Image8& canvas = canvases[canvas_idx];
        Image8 working = canvas;
        const int want = static_cast<int>(rng.uniform_int(defects_lo, defects_hi));

        CpSample result;
        result.sample.tag = SourceTag::kCp;
        int attempts = 0;
        while (static_cast<int>(result.pastes.size()) < want &&
               attempts < policy.max_attempts) {
            ++attempts;
            const std::size_t patch_idx = rng.index(patches.size());
            const DefectPatch& patch = patches[patch_idx];
            if (patch.crop.h > canvas.h || patch.crop.w > canvas.w) continue;

            Box loc;
            loc.w = patch.crop.w;
            loc.h = patch.crop.h;
            loc.x = static_cast<int>(rng.uniform_int(0, canvas.w - loc.w));
            loc.y = static_cast<int>(rng.uniform_int(0, canvas.h - loc.h));

            bool clash = false;
            for (const Box& prev : result.sample.boxes)
                if (loc.intersects(prev)) { clash = true; break; }
            if (clash) continue;

            const double bg_mean = masked_mean(patch.crop, patch.pseudo_mask, false);
            if (!region_compatible(working, loc, bg_mean, policy.compatibility_tolerance))
                continue;

            const double c_mean = region_mean(working, loc);
            const Image8 adapted =
                adapt_brightness(patch.crop, patch.pseudo_mask, c_mean, policy.max_gain);
            working = paste_merge(working, adapted, patch.pseudo_mask, loc, policy.merge);

            PasteRecord rec;
            rec.canvas_index = canvas_idx;
            rec.patch_index = patch_idx;
            rec.location = loc;
            rec.canvas_region_mean = c_mean;
            rec.patch_background_mean = bg_mean;
            rec.gain = gain_for(patch.crop, patch.pseudo_mask, c_mean, policy.max_gain);
            result.pastes.push_back(rec);

            result.sample.boxes.push_back(loc);
            result.sample.defect_ids.push_back(patch.origin_id + "#" +
                                               std::to_string(result.pastes.size() - 1));
        }

        if (static_cast<int>(result.pastes.size()) == want) {
            result.sample.image = std::move(working);
            result.sample.validate("cp sample");
            return result;
        }
        // budget exhausted for this image; move on to a fresh canvas
    }
    throw TrainError("cp synthesis exhausted");
}

std::vector<CpSample> generate_cp_dataset(const std::vector<Image8>& canvases,
                                          const std::vector<DefectPatch>& patches, int count,
                                          int defects_lo, int defects_hi,
                                          const PasteAttemptPolicy& policy,
                                          std::uint64_t seed) {
    std::vector<CpSample> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        Rng mix(seed, 3000 + static_cast<std::uint64_t>(i));
        out.push_back(generate_cp_sample(canvases, patches, defects_lo, defects_hi, policy,
                                         mix.bits()));
    }
    return out;
}

}  // namespace uts::cpsynth
