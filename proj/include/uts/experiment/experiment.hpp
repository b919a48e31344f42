#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "uts/cpsynth/cpsynth.hpp"
#include "uts/dataset/dataset.hpp"
#include "uts/detector/detector.hpp"
#include "uts/gan/gan.hpp"

namespace uts::experiment {

/// One training-matrix cell: how many images of each source feed the
/// detector. real = -1 means the full real training split.
struct CellSpec {
    std::string name;
    int real = 0;
    int cp = 0;
    int gan = 0;

    nlohmann::json to_json() const;
    static CellSpec from_json(const nlohmann::json& j);
};

/// Paste policy matching the default phantom appearance (bright defects).
inline cpsynth::PasteAttemptPolicy bright_paste_policy() {
    cpsynth::PasteAttemptPolicy p;
    p.merge = cpsynth::MergeOp::kMax;
    p.mask_side = cpsynth::MaskSide::kBright;
    return p;
}

struct ExperimentConfig {
    std::string source = "phantom";  // "phantom" | "manifest"

    // manifest source
    std::filesystem::path data_root;
    std::filesystem::path manifest;
    double train_frac = 0.6, val_frac = 0.1, test_frac = 0.3;

    // phantom source (per-image parameters; count comes from the split sizes)
    dataset::PhantomConfig phantom;
    int train_count = 600, val_count = 100, test_count = 300;

    // synthetic pools available to cells
    int cp_pool = 2000;
    int cp_defects_lo = 1, cp_defects_hi = 3;
    cpsynth::PasteAttemptPolicy cp_policy;
    int gan_pool = 2000;
    int mask_count_lo = 1, mask_count_hi = 4;

    gan::GanTrainConfig gan;
    detector::DetectorTrainConfig det;
    detector::EvalConfig eval;

    std::vector<CellSpec> cells;
    std::vector<std::uint64_t> seeds = {1};
    std::uint64_t data_seed = 42;
    std::filesystem::path out_dir = "run";

    void validate() const;
    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
};

struct CellResult {
    std::string name;
    std::uint64_t seed = 0;
    double ap = -1.0;  // negative marks a missing/incomplete cell
    std::vector<detector::PrPoint> pr;
    int train_size = 0;
    int real_used = 0, cp_used = 0, gan_used = 0;
    std::vector<double> train_loss, val_loss;
    std::string detector_ckpt;
};

struct RunReport {
    nlohmann::json config;
    std::string config_digest;
    int train_size = 0, val_size = 0, test_size = 0;
    std::string test_digest;
    nlohmann::json seed_ledger;
    std::vector<CellResult> cells;
    nlohmann::json gan_runs;  // per-seed GAN summaries (ablation evidence)

    nlohmann::json to_json() const;
    static RunReport from_json(const nlohmann::json& j);

    /// Median AP across seeds for one cell name; negative when absent.
    double median_ap(const std::string& cell_name) const;
};

/// Published full-scale reference results attached to every report so the
/// desk-scale numbers are read in context (percent AP).
nlohmann::json reference_ap_metadata();

/// Stable content digest of a sample list (pixels, boxes, ids).
std::string dataset_digest(const std::vector<Sample>& samples);

/// Runs the full matrix: dataset preparation, per-seed GAN training when a
/// cell consumes GAN images, one detector per (cell, seed), evaluation on
/// the single shared test split (digest-verified per cell). Writes
/// report.json into config.out_dir and returns the report.
RunReport run_matrix(const ExperimentConfig& config);

/// Renders report.json from a run directory into table.txt, table.csv and
/// one PR plot per cell. Returns false when any cell is missing (the
/// rendering still completes, with explicit markers).
bool render_report(const std::filesystem::path& run_dir);

}  // namespace uts::experiment
