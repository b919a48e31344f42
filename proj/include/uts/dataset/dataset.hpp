#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uts/core/image.hpp"

namespace uts::dataset {

/// Reads a JSON-lines manifest (one object per line:
/// {"image": path, "boxes": [[x,y,w,h,"defect_id"], ...], "tag": "real"})
/// and loads the referenced images. Paths are resolved against `root`.
/// Samples come back in manifest order.
///
/// expected_size > 0 additionally requires every image to be square with
/// that side length.
std::vector<Sample> load_dataset(const std::filesystem::path& root,
                                 const std::filesystem::path& manifest,
                                 int expected_size = 0);

/// Writes images as 8-bit grayscale PNGs plus a manifest.jsonl into `out_dir`.
/// Returns the manifest path.
std::filesystem::path save_dataset(const std::vector<Sample>& samples,
                                   const std::filesystem::path& out_dir,
                                   const std::string& stem = "img");

/// Splits samples so that no defect_id appears in two subsets. Samples
/// sharing a defect id are grouped and assigned as a unit. Fractions must
/// sum to 1; assignment is deterministic for a fixed seed.
DatasetSplit split_by_defect(const std::vector<Sample>& samples,
                             double train_frac, double val_frac, double test_frac,
                             std::uint64_t seed);

/// Images whose box list is empty, in input order.
std::vector<Image8> extract_canvases(const std::vector<Sample>& samples);

/// Defect rectangles cut at every annotation, with their ids.
struct DefectCrop {
    Image8 crop;
    std::string origin_id;
};
std::vector<DefectCrop> extract_defect_crops(const std::vector<Sample>& samples);

/// Parameters of the synthetic stand-in dataset: speckle-textured
/// backgrounds with elongated Gaussian echo blobs. Not a physics model;
/// it exists so the pipeline can run without proprietary scans.
struct PhantomConfig {
    int count = 10;
    int image_size = 64;
    int min_defects = 0;
    int max_defects = 3;

    // background: per-image base level blended with Rayleigh speckle,
    // then blurred for spatial correlation
    double background_lo = 110.0;
    double background_hi = 190.0;
    double speckle_weight = 0.55;
    double blur_sigma = 0.7;

    // echo blobs: anisotropic Gaussian intensity profiles
    double contrast_lo = 45.0;
    double contrast_hi = 110.0;
    bool dark_defects = false;  // subtract the profile instead of adding it
    double sigma_long_lo = 2.5;
    double sigma_long_hi = 6.0;
    double sigma_short_lo = 1.0;
    double sigma_short_hi = 2.2;
    double orientation_max_deg = 20.0;  // tilt around horizontal

    std::string id_prefix = "ph";
    std::uint64_t id_start = 0;

    /// A blob's recorded box covers the region where its own contribution
    /// is at least this fraction of its peak amplitude.
    static constexpr double kBoxCutoff = 0.25;

    void validate() const;
    nlohmann::json to_json() const;
    static PhantomConfig from_json(const nlohmann::json& j);
};

/// Deterministic per seed. Every blob's analytic tight bounding box is
/// recorded as an annotation with a fresh defect id.
std::vector<Sample> generate_phantom_dataset(const PhantomConfig& config, std::uint64_t seed);

}  // namespace uts::dataset
