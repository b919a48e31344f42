#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uts/core/image.hpp"
#include "uts/dataset/dataset.hpp"

namespace uts::cpsynth {

/// Which side of the Otsu threshold counts as defect foreground.
enum class MaskSide { kBright, kDark };

/// Merge rule for pasting. Min keeps the darker pixel (defects darker than
/// background); max is the mirrored convention for bright defects.
enum class MergeOp { kMin, kMax };

struct PasteAttemptPolicy {
    int max_attempts = 100;                // per generated image
    double compatibility_tolerance = 0.05;
    int dilation_iterations = 2;
    double max_gain = 4.0;                 // brightness-adaptation cap
    int image_restarts = 10;               // abandoned images before giving up
    MergeOp merge = MergeOp::kMin;
    MaskSide mask_side = MaskSide::kDark;  // follows the merge convention

    void validate() const;
    nlohmann::json to_json() const;
    static PasteAttemptPolicy from_json(const nlohmann::json& j);
};

/// Otsu's threshold over the 256-bin histogram; smallest maximizer.
/// A single-valued image returns that value (so no pixel is strictly
/// beyond the threshold).
int otsu_threshold(const Image8& img);

/// Binary dilation with a full 3x3 structuring element.
Mask8 binary_dilate(const Mask8& mask, int iterations);

/// threshold + dilate. Throws ValidationError("empty defect mask") when no
/// pixel lands on the requested side of the threshold.
Mask8 make_pseudo_mask(const Image8& crop, int dilation_iterations = 2,
                       MaskSide side = MaskSide::kBright);

/// |mean(canvas over location) - patch_background_mean| relative to the
/// larger of the two means (floored at 1) must not exceed tol.
bool region_compatible(const Image8& canvas, const Box& location,
                       double patch_background_mean, double tol);

/// Uniform gain canvas_region_mean / crop_background_mean applied to every
/// pixel, capped at max_gain, clamped to [0,255]. The crop background mean
/// is taken over the mask complement.
Image8 adapt_brightness(const Image8& crop, const Mask8& mask, double canvas_region_mean,
                        double max_gain = 4.0);

/// Per-pixel min (or max) of canvas and crop under the mask footprint at
/// `location`; the canvas is left untouched elsewhere.
Image8 paste_merge(const Image8& canvas, const Image8& crop, const Mask8& mask,
                   const Box& location, MergeOp merge = MergeOp::kMin);

/// Record of one accepted paste, enough to re-derive the pasted pixels.
struct PasteRecord {
    std::size_t canvas_index = 0;
    std::size_t patch_index = 0;
    Box location;
    double canvas_region_mean = 0.0;
    double patch_background_mean = 0.0;
    double gain = 1.0;
};

struct CpSample {
    Sample sample;
    std::vector<PasteRecord> pastes;
};

/// Builds pseudo-masked defect patches from raw crops, skipping crops whose
/// mask comes out empty.
std::vector<DefectPatch> build_defect_patches(const std::vector<dataset::DefectCrop>& crops,
                                              const PasteAttemptPolicy& policy);

/// One synthetic image: random canvas, random defects, random non-overlapping
/// compatible locations. After max_attempts failed proposals the image is
/// abandoned and a fresh canvas is drawn; image_restarts abandonments raise
/// TrainError("cp synthesis exhausted"). Deterministic per seed.
CpSample generate_cp_sample(const std::vector<Image8>& canvases,
                            const std::vector<DefectPatch>& patches,
                            int defects_lo, int defects_hi,
                            const PasteAttemptPolicy& policy, std::uint64_t seed);

/// count independent samples, one seed stream per image.
std::vector<CpSample> generate_cp_dataset(const std::vector<Image8>& canvases,
                                          const std::vector<DefectPatch>& patches, int count,
                                          int defects_lo, int defects_hi,
                                          const PasteAttemptPolicy& policy, std::uint64_t seed);

}  // namespace uts::cpsynth
