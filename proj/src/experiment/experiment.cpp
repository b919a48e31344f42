#include "uts/experiment/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "uts/core/errors.hpp"
#include "uts/core/hash.hpp"
#include "uts/core/rng.hpp"

namespace uts::experiment {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// serialization

json CellSpec::to_json() const {
    return {{"name", name}, {"real", real}, {"cp", cp}, {"gan", gan}};
}

CellSpec CellSpec::from_json(const json& j) {
    CellSpec c;
    c.name = j.at("name").get<std::string>();
    c.real = j.value("real", 0);
    c.cp = j.value("cp", 0);
    c.gan = j.value("gan", 0);
    return c;
}

static json eval_to_json(const detector::EvalConfig& e) {
    return {{"objectness_threshold", e.objectness_threshold},
            {"nms_iou", e.nms_iou},
            {"match_iou", e.match_iou}};
}

static detector::EvalConfig eval_from_json(const json& j) {
    detector::EvalConfig e;
    e.objectness_threshold = j.value("objectness_threshold", e.objectness_threshold);
    e.nms_iou = j.value("nms_iou", e.nms_iou);
    e.match_iou = j.value("match_iou", e.match_iou);
    e.validate();
    return e;
}

void ExperimentConfig::validate() const {
    if (source != "phantom" && source != "manifest")
        throw ConfigError("experiment: source must be \"phantom\" or \"manifest\"");
    if (source == "phantom") {
        phantom.validate();
        if (train_count <= 0 || val_count <= 0 || test_count <= 0)
            throw ConfigError("experiment: phantom split counts must be positive");
    } else {
        if (manifest.empty()) throw ConfigError("experiment: manifest path is empty");
        if (!(train_frac > 0) || !(val_frac > 0) || !(test_frac > 0) ||
            std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
            throw ConfigError("experiment: split fractions must be positive and sum to 1");
    }
    if (cp_pool < 0 || gan_pool < 0)
        throw ConfigError("experiment: pool sizes must be >= 0");
    if (cp_defects_lo < 1 || cp_defects_hi < cp_defects_lo)
        throw ConfigError("experiment: cp defect count range invalid");
    if (mask_count_lo < 1 || mask_count_hi < mask_count_lo)
        throw ConfigError("experiment: mask count range invalid");
    cp_policy.validate();
    gan.validate();
    det.validate();
    eval.validate();
    if (cells.empty()) throw ConfigError("experiment: cells list is empty");
    std::set<std::string> names;
    for (const auto& c : cells) {
        if (c.name.empty()) throw ConfigError("experiment: cell with empty name");
        if (!names.insert(c.name).second)
            throw ConfigError("experiment: duplicate cell name \"" + c.name + "\"");
        if (c.real < -1) throw ConfigError("experiment: cell real count < -1");
        if (c.cp < 0 || c.gan < 0)
            throw ConfigError("experiment: cell synthetic counts must be >= 0");
        if (c.cp > cp_pool)
            throw ConfigError("experiment: cell \"" + c.name + "\" wants more cp than cp_pool");
        if (c.gan > gan_pool)
            throw ConfigError("experiment: cell \"" + c.name + "\" wants more gan than gan_pool");
        if (c.real == 0 && c.cp == 0 && c.gan == 0)
            throw ConfigError("experiment: cell \"" + c.name + "\" selects no data");
        if (source == "phantom" && c.real > train_count)
            throw ConfigError("experiment: cell \"" + c.name + "\" wants more real than train_count");
    }
    if (seeds.empty()) throw ConfigError("experiment: seeds list is empty");
    if (source == "phantom" && phantom.image_size != gan.image_size)
        throw ConfigError("experiment: phantom.image_size must equal gan.image_size");
}

json ExperimentConfig::to_json() const {
    json j;
    j["source"] = source;
    j["data_root"] = data_root.string();
    j["manifest"] = manifest.string();
    j["train_frac"] = train_frac;
    j["val_frac"] = val_frac;
    j["test_frac"] = test_frac;
    j["phantom"] = phantom.to_json();
    j["train_count"] = train_count;
    j["val_count"] = val_count;
    j["test_count"] = test_count;
    j["cp_pool"] = cp_pool;
    j["cp_defects_lo"] = cp_defects_lo;
    j["cp_defects_hi"] = cp_defects_hi;
    j["cp_policy"] = cp_policy.to_json();
    j["gan_pool"] = gan_pool;
    j["mask_count_lo"] = mask_count_lo;
    j["mask_count_hi"] = mask_count_hi;
    j["gan"] = gan.to_json();
    j["det"] = det.to_json();
    j["eval"] = eval_to_json(eval);
    j["cells"] = json::array();
    for (const auto& c : cells) j["cells"].push_back(c.to_json());
    j["seeds"] = seeds;
    j["data_seed"] = data_seed;
    j["out_dir"] = out_dir.string();
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    ExperimentConfig c;
    c.source = j.value("source", c.source);
    c.data_root = fs::path(j.value("data_root", c.data_root.string()));
    c.manifest = fs::path(j.value("manifest", c.manifest.string()));
    c.train_frac = j.value("train_frac", c.train_frac);
    c.val_frac = j.value("val_frac", c.val_frac);
    c.test_frac = j.value("test_frac", c.test_frac);
    if (j.contains("phantom")) c.phantom = dataset::PhantomConfig::from_json(j.at("phantom"));
    c.train_count = j.value("train_count", c.train_count);
    c.val_count = j.value("val_count", c.val_count);
    c.test_count = j.value("test_count", c.test_count);
    c.cp_pool = j.value("cp_pool", c.cp_pool);
    c.cp_defects_lo = j.value("cp_defects_lo", c.cp_defects_lo);
    c.cp_defects_hi = j.value("cp_defects_hi", c.cp_defects_hi);
    if (j.contains("cp_policy"))
        c.cp_policy = cpsynth::PasteAttemptPolicy::from_json(j.at("cp_policy"));
    else if (c.source == "phantom" && !c.phantom.dark_defects)
        c.cp_policy = bright_paste_policy();
    c.gan_pool = j.value("gan_pool", c.gan_pool);
    c.mask_count_lo = j.value("mask_count_lo", c.mask_count_lo);
    c.mask_count_hi = j.value("mask_count_hi", c.mask_count_hi);
    if (j.contains("gan")) c.gan = gan::GanTrainConfig::from_json(j.at("gan"));
    if (j.contains("det")) c.det = detector::DetectorTrainConfig::from_json(j.at("det"));
    if (j.contains("eval")) c.eval = eval_from_json(j.at("eval"));
    if (j.contains("cells"))
        for (const auto& e : j.at("cells")) c.cells.push_back(CellSpec::from_json(e));
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.data_seed = j.value("data_seed", c.data_seed);
    c.out_dir = fs::path(j.value("out_dir", c.out_dir.string()));
    c.validate();
    return c;
}

static json cell_result_to_json(const CellResult& r) {
    json j;
    j["name"] = r.name;
    j["seed"] = r.seed;
    j["ap"] = r.ap;
    json pr = json::array();
    for (const auto& p : r.pr) pr.push_back({p.recall, p.precision});
    j["pr"] = std::move(pr);
    j["train_size"] = r.train_size;
    j["real_used"] = r.real_used;
    j["cp_used"] = r.cp_used;
    j["gan_used"] = r.gan_used;
    j["train_loss"] = r.train_loss;
    j["val_loss"] = r.val_loss;
    j["detector_ckpt"] = r.detector_ckpt;
    return j;
}

static CellResult cell_result_from_json(const json& j) {
    CellResult r;
    r.name = j.at("name").get<std::string>();
    r.seed = j.value("seed", std::uint64_t{0});
    r.ap = j.value("ap", -1.0);
    if (j.contains("pr"))
        for (const auto& p : j.at("pr"))
            r.pr.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    r.train_size = j.value("train_size", 0);
    r.real_used = j.value("real_used", 0);
    r.cp_used = j.value("cp_used", 0);
    r.gan_used = j.value("gan_used", 0);
    if (j.contains("train_loss")) r.train_loss = j.at("train_loss").get<std::vector<double>>();
    if (j.contains("val_loss")) r.val_loss = j.at("val_loss").get<std::vector<double>>();
    r.detector_ckpt = j.value("detector_ckpt", std::string());
    return r;
}

json RunReport::to_json() const {
    json j;
    j["format"] = "uts-report-v1";
    j["config"] = config;
    j["config_digest"] = config_digest;
    j["train_size"] = train_size;
    j["val_size"] = val_size;
    j["test_size"] = test_size;
    j["test_digest"] = test_digest;
    j["seed_ledger"] = seed_ledger;
    j["reference_ap"] = reference_ap_metadata();
    json cj = json::array();
    for (const auto& c : cells) cj.push_back(cell_result_to_json(c));
    j["cells"] = std::move(cj);
    j["gan_runs"] = gan_runs;
    return j;
}

RunReport RunReport::from_json(const json& j) {
    if (j.value("format", std::string()) != "uts-report-v1")
        throw ValidationError("report: unknown format tag");
    RunReport r;
    r.config = j.value("config", json::object());
    r.config_digest = j.value("config_digest", std::string());
    r.train_size = j.value("train_size", 0);
    r.val_size = j.value("val_size", 0);
    r.test_size = j.value("test_size", 0);
    r.test_digest = j.value("test_digest", std::string());
    r.seed_ledger = j.value("seed_ledger", json::object());
    if (j.contains("cells"))
        for (const auto& e : j.at("cells")) r.cells.push_back(cell_result_from_json(e));
    r.gan_runs = j.value("gan_runs", json::array());
    return r;
}

static double median_of(std::vector<double> v) {
    if (v.empty()) return -1.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double RunReport::median_ap(const std::string& cell_name) const {
    std::vector<double> aps;
    for (const auto& c : cells)
        if (c.name == cell_name && c.ap >= 0.0) aps.push_back(c.ap);
    return median_of(std::move(aps));
}

json reference_ap_metadata() {
    // Published full-scale reference results (percent AP on the original
    // industrial dataset); attached verbatim for context, never compared
    // against desk-scale runs programmatically.
    return {{"unit", "percent_ap_at_iou_0.5"},
            {"scope", "published full-scale reference, original industrial dataset"},
            {"real", 71.0},
            {"cp_only", 47.42},
            {"gan_only", 72.1},
            {"real_plus_gan", 75.7}};
}

std::string dataset_digest(const std::vector<Sample>& samples) {
    Fnv1a64 f;
    f.update_value<std::uint64_t>(samples.size());
    for (const auto& s : samples) {
        f.update_value<std::int32_t>(s.image.h);
        f.update_value<std::int32_t>(s.image.w);
        f.update(s.image.px.data(), s.image.px.size());
        f.update_value<std::uint64_t>(s.boxes.size());
        for (std::size_t k = 0; k < s.boxes.size(); ++k) {
            const Box& b = s.boxes[k];
            f.update_value<std::int32_t>(b.x);
            f.update_value<std::int32_t>(b.y);
            f.update_value<std::int32_t>(b.w);
            f.update_value<std::int32_t>(b.h);
            f.update_string(s.defect_ids[k]);
        }
        f.update_string(to_string(s.tag));
    }
    return f.hex();
}

// ---------------------------------------------------------------------------
// run_matrix

namespace {

std::uint64_t derive_seed(std::uint64_t base, const std::string& label) {
    Fnv1a64 f;
    f.update_value(base);
    f.update_string(label);
    return f.digest();
}

std::vector<Sample> defective_only(const std::vector<Sample>& in) {
    std::vector<Sample> out;
    for (const auto& s : in)
        if (!s.boxes.empty()) out.push_back(s);
    return out;
}

std::vector<detector::PrPoint> downsample_curve(const std::vector<detector::PrPoint>& c,
                                                std::size_t cap) {
    if (c.size() <= cap || cap < 2) return c;
    std::vector<detector::PrPoint> out;
    out.reserve(cap);
    const double step = static_cast<double>(c.size() - 1) / static_cast<double>(cap - 1);
    for (std::size_t i = 0; i < cap; ++i)
        out.push_back(c[static_cast<std::size_t>(std::llround(i * step))]);
    return out;
}

void write_report_file(const RunReport& report, const fs::path& out_dir) {
    std::ofstream os(out_dir / "report.json");
    if (!os) throw IoError("experiment: cannot write " + (out_dir / "report.json").string());
    os << report.to_json().dump(1) << "\n";
}

std::string rel_to(const fs::path& p, const fs::path& base) {
    std::error_code ec;
    fs::path r = fs::relative(p, base, ec);
    return ec ? p.string() : r.string();
}

}  // namespace

RunReport run_matrix(const ExperimentConfig& config) {
    config.validate();
    const fs::path out = config.out_dir;
    fs::create_directories(out);

    RunReport report;
    report.config = config.to_json();
    {
        Fnv1a64 f;
        f.update_string(report.config.dump());
        report.config_digest = f.hex();
    }

    // --- dataset -----------------------------------------------------------
    DatasetSplit split;
    json data_seeds;
    if (config.source == "phantom") {
        auto gen = [&](const char* label, const char* prefix, int count) {
            dataset::PhantomConfig pc = config.phantom;
            pc.count = count;
            pc.id_prefix = prefix;  // subset-unique prefixes keep defect ids disjoint
            const std::uint64_t s = derive_seed(config.data_seed, label);
            data_seeds[label] = s;
            return dataset::generate_phantom_dataset(pc, s);
        };
        split.train = gen("train", "tr", config.train_count);
        split.val = gen("val", "va", config.val_count);
        split.test = gen("test", "te", config.test_count);
    } else {
        auto all = dataset::load_dataset(config.data_root, config.manifest);
        split = dataset::split_by_defect(all, config.train_frac, config.val_frac,
                                         config.test_frac, config.data_seed);
        data_seeds["split"] = config.data_seed;
    }
    report.train_size = static_cast<int>(split.train.size());
    report.val_size = static_cast<int>(split.val.size());
    report.test_size = static_cast<int>(split.test.size());
    report.test_digest = dataset_digest(split.test);
    report.seed_ledger["data"] = data_seeds;

    bool need_cp = false, need_gan = false;
    int max_real = 0;
    for (const auto& c : config.cells) {
        need_cp = need_cp || c.cp > 0;
        need_gan = need_gan || c.gan > 0;
        if (c.real > max_real) max_real = c.real;
    }
    if (max_real > report.train_size)
        throw ConfigError("experiment: a cell wants more real images than the train split has");

    // --- shared synthesis ingredients (from the train split only) ----------
    std::vector<Image8> canvases;
    std::vector<DefectPatch> patches;
    if (need_cp) {
        canvases = dataset::extract_canvases(split.train);
        patches = cpsynth::build_defect_patches(dataset::extract_defect_crops(split.train),
                                                config.cp_policy);
        if (canvases.empty())
            throw ConfigError("experiment: no defect-free training images to paste onto");
        if (patches.empty())
            throw ConfigError("experiment: no usable defect patches in the train split");
    }
    std::vector<maskgen::AspectEntry> aspect_pool;
    std::vector<gan::GanPair> gan_train_pairs, gan_val_pairs;
    if (need_gan) {
        aspect_pool = maskgen::extract_aspect_ratios(split.train);
        if (aspect_pool.empty())
            throw ConfigError("experiment: no annotated training defects to build masks from");
        gan_train_pairs = gan::make_pairs(defective_only(split.train));
        gan_val_pairs = gan::make_pairs(defective_only(split.val));
        if (gan_train_pairs.empty())
            throw ConfigError("experiment: no defective training images for adversarial training");
        if (config.source == "manifest") {
            for (const auto& s : split.train)
                if (s.image.h != config.gan.image_size || s.image.w != config.gan.image_size)
                    throw ConfigError(
                        "experiment: manifest images must match gan.image_size when a cell "
                        "uses generated data");
        }
    }

    const int input_size = config.det.net.input_size;
    (void)input_size;

    auto verify_test = [&]() {
        if (dataset_digest(split.test) != report.test_digest)
            throw VerifyError("experiment: test split changed during the run");
    };

    report.gan_runs = json::array();
    report.seed_ledger["runs"] = json::array();

    for (const std::uint64_t seed : config.seeds) {
        const fs::path sdir = out / ("seed" + std::to_string(seed));
        fs::create_directories(sdir);

        json ledger;
        ledger["seed"] = seed;
        ledger["detector_seed"] = seed;

        // One real-data baseline per seed: it is both the "all real" cell's
        // detector and the frozen scorer the adversarial run trains against.
        detector::DetectorTrainConfig dcfg = config.det;
        dcfg.seed = seed;
        auto base_res = detector::train_detector(split.train, split.val, dcfg, sdir / "real");
        auto base_net = detector::load_detector(base_res.best_checkpoint);
        verify_test();
        auto base_eval = detector::evaluate_detector(base_net, split.test, config.eval);

        // Synthetic pools for this seed.
        std::vector<Sample> cp_samples;
        if (need_cp) {
            ledger["cp_seed"] = seed;
            auto cp = cpsynth::generate_cp_dataset(canvases, patches, config.cp_pool,
                                                   config.cp_defects_lo, config.cp_defects_hi,
                                                   config.cp_policy, seed);
            cp_samples.reserve(cp.size());
            for (auto& c : cp) cp_samples.push_back(std::move(c.sample));
        }

        std::vector<Sample> gan_samples;
        if (need_gan) {
            gan::GanTrainConfig gcfg = config.gan;
            gcfg.seed = seed;
            ledger["gan_seed"] = seed;
            ledger["mask_seed"] = seed;
            auto gres = gan::train_gan(gan_train_pairs, gan_val_pairs, &base_net, gcfg,
                                       sdir / "gan");
            auto masks = maskgen::sample_position_masks(aspect_pool, gcfg.image_size,
                                                        config.mask_count_lo,
                                                        config.mask_count_hi, config.gan_pool,
                                                        seed);
            gan_samples = gan::generate_synthetic_set(gres.best_checkpoint, masks,
                                                      "gan-s" + std::to_string(seed) + "-");
            json g;
            g["seed"] = seed;
            g["best_epoch"] = gres.best_epoch;
            g["epochs_run"] = gres.history.size();
            g["detector_evals"] = gres.detector_evals;
            g["d_input_channels"] = gres.d_input_channels;
            g["detector_digest_before"] = gres.detector_digest_before;
            g["detector_digest_after"] = gres.detector_digest_after;
            g["best_checkpoint"] = rel_to(gres.best_checkpoint, out);
            g["history_csv"] = rel_to(gres.history_csv, out);
            if (!gres.history.empty()) {
                g["first_l1"] = gres.history.front().l1;
                g["last_l1"] = gres.history.back().l1;
            }
            report.gan_runs.push_back(std::move(g));
        }

        // Nested real subsets: one shuffled order per seed, cells take a prefix.
        std::vector<int> order(split.train.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
        Rng subset_rng(seed, 8000);
        subset_rng.shuffle(order);
        ledger["real_subset_stream"] = 8000;
        report.seed_ledger["runs"].push_back(ledger);

        for (const auto& cell : config.cells) {
            CellResult r;
            r.name = cell.name;
            r.seed = seed;
            const int real_n =
                cell.real < 0 ? report.train_size : std::min(cell.real, report.train_size);
            r.real_used = real_n;
            r.cp_used = cell.cp;
            r.gan_used = cell.gan;

            if (cell.real < 0 && cell.cp == 0 && cell.gan == 0) {
                // The baseline already covers the all-real cell.
                r.ap = base_eval.ap;
                r.pr = downsample_curve(base_eval.curve, 512);
                r.train_size = report.train_size;
                r.train_loss = base_res.train_loss;
                r.val_loss = base_res.val_loss;
                r.detector_ckpt = rel_to(base_res.best_checkpoint, out);
            } else {
                if (cell.cp > static_cast<int>(cp_samples.size()))
                    throw ConfigError("experiment: cp pool smaller than cell demand");
                if (cell.gan > static_cast<int>(gan_samples.size()))
                    throw ConfigError("experiment: gan pool smaller than cell demand");
                std::vector<Sample> train_set;
                train_set.reserve(real_n + cell.cp + cell.gan);
                for (int i = 0; i < real_n; ++i) train_set.push_back(split.train[order[i]]);
                for (int i = 0; i < cell.cp; ++i) train_set.push_back(cp_samples[i]);
                for (int i = 0; i < cell.gan; ++i) train_set.push_back(gan_samples[i]);
                r.train_size = static_cast<int>(train_set.size());

                auto res = detector::train_detector(train_set, split.val, dcfg,
                                                    sdir / ("cell_" + cell.name));
                auto net = detector::load_detector(res.best_checkpoint);
                verify_test();
                auto ev = detector::evaluate_detector(net, split.test, config.eval);
                r.ap = ev.ap;
                r.pr = downsample_curve(ev.curve, 512);
                r.train_loss = res.train_loss;
                r.val_loss = res.val_loss;
                r.detector_ckpt = rel_to(res.best_checkpoint, out);
            }
            report.cells.push_back(std::move(r));
            write_report_file(report, out);  // partial reports survive interruption
        }
    }

    write_report_file(report, out);
    return report;
}

// ---------------------------------------------------------------------------
// render_report

namespace {

std::string sanitize(const std::string& s) {
    std::string out;
    for (char c : s)
        out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
    return out;
}

std::string fmt_full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_short(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

void draw_pr_plot(const std::string& cell,
                  const std::vector<std::pair<std::uint64_t, const CellResult*>>& runs,
                  const fs::path& path) {
    const int size = 480, margin = 56;
    cv::Mat img(size, size, CV_8UC3, cv::Scalar(255, 255, 255));
    const int lo = margin, hi = size - margin;
    auto px = [&](double recall) { return lo + static_cast<int>(std::lround(recall * (hi - lo))); };
    auto py = [&](double prec) { return hi - static_cast<int>(std::lround(prec * (hi - lo))); };

    for (int k = 0; k <= 4; ++k) {
        const double t = k / 4.0;
        cv::line(img, {px(t), py(0)}, {px(t), py(1)}, cv::Scalar(230, 230, 230), 1);
        cv::line(img, {px(0), py(t)}, {px(1), py(t)}, cv::Scalar(230, 230, 230), 1);
        char lab[16];
        std::snprintf(lab, sizeof(lab), "%.2f", t);
        cv::putText(img, lab, {px(t) - 14, hi + 20}, cv::FONT_HERSHEY_SIMPLEX, 0.38,
                    cv::Scalar(60, 60, 60), 1, cv::LINE_AA);
        cv::putText(img, lab, {6, py(t) + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.38,
                    cv::Scalar(60, 60, 60), 1, cv::LINE_AA);
    }
    cv::rectangle(img, {lo, lo}, {hi, hi}, cv::Scalar(40, 40, 40), 1);
    cv::putText(img, "recall", {size / 2 - 24, size - 12}, cv::FONT_HERSHEY_SIMPLEX, 0.45,
                cv::Scalar(40, 40, 40), 1, cv::LINE_AA);
    cv::putText(img, "precision", {6, 24}, cv::FONT_HERSHEY_SIMPLEX, 0.45,
                cv::Scalar(40, 40, 40), 1, cv::LINE_AA);
    cv::putText(img, cell, {size / 2 - 8 * static_cast<int>(cell.size()) / 2, 24},
                cv::FONT_HERSHEY_SIMPLEX, 0.55, cv::Scalar(10, 10, 10), 1, cv::LINE_AA);

    const cv::Scalar palette[] = {{180, 80, 20}, {30, 120, 200}, {40, 160, 60},
                                  {160, 40, 160}, {20, 20, 200}, {140, 140, 20}};
    int ci = 0, legend_y = margin + 16;
    for (const auto& [seed, rp] : runs) {
        const cv::Scalar color = palette[ci++ % 6];
        const auto& pr = rp->pr;
        for (std::size_t i = 1; i < pr.size(); ++i)
            cv::line(img, {px(pr[i - 1].recall), py(pr[i - 1].precision)},
                     {px(pr[i].recall), py(pr[i].precision)}, color, 1, cv::LINE_AA);
        char leg[64];
        std::snprintf(leg, sizeof(leg), "seed %llu  AP %.4f",
                      static_cast<unsigned long long>(seed), rp->ap);
        cv::line(img, {hi - 150, legend_y - 4}, {hi - 130, legend_y - 4}, color, 2);
        cv::putText(img, leg, {hi - 124, legend_y}, cv::FONT_HERSHEY_SIMPLEX, 0.38,
                    cv::Scalar(60, 60, 60), 1, cv::LINE_AA);
        legend_y += 16;
    }
    if (!cv::imwrite(path.string(), img))
        throw IoError("experiment: cannot write " + path.string());
}

}  // namespace

bool render_report(const fs::path& run_dir) {
    const fs::path report_path = run_dir / "report.json";
    std::ifstream is(report_path);
    if (!is) throw IoError("experiment: cannot read " + report_path.string());
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw ValidationError("experiment: bad report.json: " + std::string(e.what()));
    }
    const RunReport report = RunReport::from_json(j);

    // Cell order: the config's if present, else order of first appearance.
    std::vector<std::string> names;
    if (report.config.contains("cells"))
        for (const auto& c : report.config.at("cells"))
            names.push_back(c.at("name").get<std::string>());
    std::vector<std::uint64_t> seeds;
    if (report.config.contains("seeds"))
        seeds = report.config.at("seeds").get<std::vector<std::uint64_t>>();
    for (const auto& c : report.cells) {
        if (std::find(names.begin(), names.end(), c.name) == names.end())
            names.push_back(c.name);
        if (std::find(seeds.begin(), seeds.end(), c.seed) == seeds.end())
            seeds.push_back(c.seed);
    }

    auto find_cell = [&](const std::string& n, std::uint64_t s) -> const CellResult* {
        for (const auto& c : report.cells)
            if (c.name == n && c.seed == s && c.ap >= 0.0) return &c;
        return nullptr;
    };

    bool complete = true;
    std::ostringstream txt, csv;
    csv << "cell,seed,ap\n";

    std::size_t name_w = 4;
    for (const auto& n : names) name_w = std::max(name_w, n.size());

    txt << "AP@0.5 by training mix (" << report.test_size << " test images, digest "
        << report.test_digest << ")\n\n";
    txt << std::string(name_w, ' ') << "  ";
    for (auto s : seeds) {
        std::string h = "seed " + std::to_string(s);
        txt << h << std::string(h.size() < 12 ? 12 - h.size() : 1, ' ');
    }
    txt << "median\n";

    for (const auto& n : names) {
        txt << n << std::string(name_w - n.size(), ' ') << "  ";
        std::vector<double> aps;
        for (auto s : seeds) {
            const CellResult* r = find_cell(n, s);
            if (r) {
                aps.push_back(r->ap);
                std::string v = fmt_short(r->ap);
                txt << v << std::string(v.size() < 12 ? 12 - v.size() : 1, ' ');
                csv << n << "," << s << "," << fmt_full(r->ap) << "\n";
            } else {
                complete = false;
                txt << "missing" << std::string(5, ' ');
                csv << n << "," << s << ",missing\n";
            }
        }
        if (aps.empty()) {
            txt << "missing\n";
            csv << n << ",median,missing\n";
        } else {
            const double med = median_of(aps);
            txt << fmt_short(med) << "\n";
            csv << n << ",median," << fmt_full(med) << "\n";
        }
    }

    if (j.contains("reference_ap")) {
        const auto& ref = j.at("reference_ap");
        txt << "\nContext: " << ref.value("scope", std::string()) << " ("
            << ref.value("unit", std::string()) << ")\n";
        for (const char* k : {"real", "cp_only", "gan_only", "real_plus_gan"})
            if (ref.contains(k)) txt << "  " << k << ": " << ref.at(k).get<double>() << "\n";
    }
    if (!complete) txt << "\nWARNING: one or more cells are missing.\n";

    {
        std::ofstream os(run_dir / "table.txt");
        if (!os) throw IoError("experiment: cannot write table.txt");
        os << txt.str();
    }
    {
        std::ofstream os(run_dir / "table.csv");
        if (!os) throw IoError("experiment: cannot write table.csv");
        os << csv.str();
    }

    for (const auto& n : names) {
        std::vector<std::pair<std::uint64_t, const CellResult*>> runs;
        for (auto s : seeds)
            if (const CellResult* r = find_cell(n, s)) runs.emplace_back(s, r);
        if (!runs.empty())
            draw_pr_plot(n, runs, run_dir / ("pr_" + sanitize(n) + ".png"));
    }
    return complete;
}

}  // namespace uts::experiment
