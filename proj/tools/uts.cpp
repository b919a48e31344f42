// uts — ultrasonic training-set toolkit.
//
// Subcommands: dataset validate|split|phantom, cpsynth generate,
// maskgen sample, gan train|generate, det train|eval|detect,
// exp run|report. Exit codes: 0 ok, 2 config error, 3 training failure,
// 4 verification failure, 1 anything else.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "uts/core/errors.hpp"
#include "uts/core/io.hpp"
#include "uts/cpsynth/cpsynth.hpp"
#include "uts/dataset/dataset.hpp"
#include "uts/detector/detector.hpp"
#include "uts/experiment/experiment.hpp"
#include "uts/gan/gan.hpp"
#include "uts/maskgen/maskgen.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace uts;

namespace {

json read_json_file(const fs::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file " + path.string());
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw ConfigError("bad JSON in " + path.string() + ": " + e.what());
    }
    return j;
}

// Dataset roots: either a directory containing manifest.jsonl, or a
// manifest file given directly.
fs::path manifest_of(const fs::path& root) {
    if (fs::is_directory(root)) return root / "manifest.jsonl";
    return root;
}

std::vector<Sample> load_root(const fs::path& root, int expected_size = 0) {
    const fs::path mf = manifest_of(root);
    return dataset::load_dataset(mf.parent_path(), mf, expected_size);
}

// Train/val layout for the training commands: root/train(/manifest.jsonl)
// plus optional root/val; a bare manifest root trains without validation.
void load_train_val(const fs::path& root, std::vector<Sample>& train,
                    std::vector<Sample>& val) {
    if (fs::exists(root / "train" / "manifest.jsonl") ||
        fs::is_directory(root / "train")) {
        train = load_root(root / "train");
        if (fs::exists(root / "val" / "manifest.jsonl")) val = load_root(root / "val");
        return;
    }
    train = load_root(root);
}

void parse_range(const std::string& s, int& lo, int& hi, const char* what) {
    const auto colon = s.find(':');
    try {
        if (colon == std::string::npos) {
            lo = hi = std::stoi(s);
        } else {
            lo = std::stoi(s.substr(0, colon));
            hi = std::stoi(s.substr(colon + 1));
        }
    } catch (const std::exception&) {
        throw ConfigError(std::string(what) + ": expected N or LO:HI, got \"" + s + "\"");
    }
    if (lo < 1 || hi < lo) throw ConfigError(std::string(what) + ": bad range " + s);
}

void parse_fractions(const std::string& s, double& a, double& b, double& c) {
    std::istringstream is(s);
    char c1 = 0, c2 = 0;
    if (!(is >> a >> c1 >> b >> c2 >> c) || c1 != ',' || c2 != ',')
        throw ConfigError("--fractions: expected a,b,c, got \"" + s + "\"");
}

std::vector<SourceTag> tags_of(const std::vector<Sample>& v) {
    std::vector<SourceTag> t;
    for (const auto& s : v) t.push_back(s.tag);
    return t;
}

// --- command bodies --------------------------------------------------------

int cmd_dataset_validate(const fs::path& root) {
    const auto samples = load_root(root);
    std::size_t boxes = 0, canvases = 0;
    std::set<std::string> ids;
    for (const auto& s : samples) {
        boxes += s.boxes.size();
        if (s.boxes.empty()) ++canvases;
        ids.insert(s.defect_ids.begin(), s.defect_ids.end());
    }
    std::printf("ok: %zu samples, %zu boxes, %zu distinct defect ids, %zu canvases\n",
                samples.size(), boxes, ids.size(), canvases);
    std::printf("digest: %s\n", experiment::dataset_digest(samples).c_str());
    return 0;
}

int cmd_dataset_split(const fs::path& root, const std::string& fractions,
                      std::uint64_t seed, fs::path out) {
    double a, b, c;
    parse_fractions(fractions, a, b, c);
    const auto samples = load_root(root);
    const auto split = dataset::split_by_defect(samples, a, b, c, seed);
    if (out.empty()) out = (fs::is_directory(root) ? root : root.parent_path()) / "splits";
    dataset::save_dataset(split.train, out / "train");
    dataset::save_dataset(split.val, out / "val");
    dataset::save_dataset(split.test, out / "test");
    std::printf("train %zu, val %zu, test %zu -> %s\n", split.train.size(),
                split.val.size(), split.test.size(), out.string().c_str());
    return 0;
}

int cmd_dataset_phantom(const fs::path& config_path, const fs::path& out,
                        std::uint64_t seed) {
    auto cfg = dataset::PhantomConfig::from_json(read_json_file(config_path));
    const auto samples = dataset::generate_phantom_dataset(cfg, seed);
    dataset::save_dataset(samples, out);
    std::size_t boxes = 0;
    for (const auto& s : samples) boxes += s.boxes.size();
    std::printf("%zu phantoms, %zu boxes -> %s\n", samples.size(), boxes,
                out.string().c_str());
    return 0;
}

int cmd_cpsynth_generate(const fs::path& canvases_root, const fs::path& patches_root,
                         int count, const std::string& defects, std::uint64_t seed,
                         const fs::path& out, const std::string& merge,
                         const std::string& mask_side) {
    int lo, hi;
    parse_range(defects, lo, hi, "--defects");
    cpsynth::PasteAttemptPolicy policy;
    json pj = {{"merge", merge}, {"mask_side", mask_side}};
    policy = cpsynth::PasteAttemptPolicy::from_json(pj);

    const auto canvas_samples = load_root(canvases_root);
    auto canvases = dataset::extract_canvases(canvas_samples);
    if (canvases.empty()) {
        // Allow a canvases root whose samples all carry boxes: use the images.
        for (const auto& s : canvas_samples) canvases.push_back(s.image);
    }
    const auto patch_samples = load_root(patches_root);
    const auto patches =
        cpsynth::build_defect_patches(dataset::extract_defect_crops(patch_samples), policy);
    if (patches.empty()) throw ConfigError("cpsynth: no usable defect patches in --patches");

    const auto cp = cpsynth::generate_cp_dataset(canvases, patches, count, lo, hi, policy, seed);
    std::vector<Sample> samples;
    samples.reserve(cp.size());
    for (const auto& c : cp) samples.push_back(c.sample);
    dataset::save_dataset(samples, out);
    std::printf("%d copy/paste images -> %s\n", count, out.string().c_str());
    return 0;
}

int cmd_maskgen_sample(const fs::path& pool_manifest, int count, std::uint64_t seed,
                       const fs::path& out, int size, const std::string& boxes_range) {
    int lo, hi;
    parse_range(boxes_range, lo, hi, "--boxes");
    const fs::path mf = manifest_of(pool_manifest);
    const auto samples = dataset::load_dataset(mf.parent_path(), mf);
    if (size <= 0) {
        if (samples.empty()) throw ConfigError("maskgen: empty pool and no --size");
        size = samples.front().image.h;
    }
    const auto pool = maskgen::extract_aspect_ratios(samples);
    const auto masks = maskgen::sample_position_masks(pool, size, lo, hi, count, seed);

    io::ensure_directory(out);
    std::ofstream manifest(out / "masks.jsonl");
    if (!manifest) throw IoError("maskgen: cannot write " + (out / "masks.jsonl").string());
    for (std::size_t i = 0; i < masks.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "mask_%05zu.png", i);
        io::write_png_mask(out / name, masks[i].pixels);
        json line;
        line["mask"] = name;
        line["boxes"] = json::array();
        for (const auto& b : masks[i].boxes) line["boxes"].push_back({b.x, b.y, b.w, b.h});
        manifest << line.dump() << "\n";
    }
    std::printf("%d masks -> %s\n", count, out.string().c_str());
    return 0;
}

std::vector<maskgen::PositionMask> load_masks(const fs::path& dir) {
    const fs::path mf = dir / "masks.jsonl";
    std::ifstream is(mf);
    if (!is) throw ConfigError("gan generate: cannot open " + mf.string());
    std::vector<maskgen::PositionMask> masks;
    std::string line;
    std::size_t ln = 0;
    while (std::getline(is, line)) {
        ++ln;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ValidationError(mf.string() + ":" + std::to_string(ln) + ": " + e.what());
        }
        maskgen::PositionMask m;
        m.pixels = io::read_png_mask(dir / j.at("mask").get<std::string>());
        for (const auto& b : j.at("boxes"))
            m.boxes.push_back({b.at(0).get<int>(), b.at(1).get<int>(), b.at(2).get<int>(),
                               b.at(3).get<int>()});
        masks.push_back(std::move(m));
    }
    if (masks.empty()) throw ValidationError("gan generate: no masks in " + mf.string());
    return masks;
}

int cmd_gan_train(const fs::path& data, const fs::path& detector_ckpt,
                  const fs::path& config_path, fs::path out) {
    auto cfg = config_path.empty() ? gan::GanTrainConfig()
                                   : gan::GanTrainConfig::from_json(read_json_file(config_path));
    std::vector<Sample> train, val;
    load_train_val(data, train, val);
    auto keep_defective = [](std::vector<Sample>& v) {
        std::erase_if(v, [](const Sample& s) { return s.boxes.empty(); });
    };
    keep_defective(train);
    keep_defective(val);
    const auto train_pairs = gan::make_pairs(train);
    const auto val_pairs = gan::make_pairs(val);

    detector::DetectorNet<nn::real_t>* det_ptr = nullptr;
    std::optional<detector::DetectorNet<nn::real_t>> det;
    if (!detector_ckpt.empty()) {
        det.emplace(detector::load_detector(detector_ckpt));
        det_ptr = &*det;
    }
    if (out.empty()) out = "gan-run";
    const auto res = gan::train_gan(train_pairs, val_pairs, det_ptr, cfg, out);
    std::printf("best epoch %d, checkpoints: %s / %s\nhistory: %s\n", res.best_epoch,
                res.best_checkpoint.string().c_str(), res.last_checkpoint.string().c_str(),
                res.history_csv.string().c_str());
    return 0;
}

int cmd_gan_generate(const fs::path& ckpt, const fs::path& masks_dir, const fs::path& out) {
    const auto masks = load_masks(masks_dir);
    const auto samples = gan::generate_synthetic_set(ckpt, masks);
    dataset::save_dataset(samples, out);
    std::printf("%zu generated images -> %s\n", samples.size(), out.string().c_str());
    return 0;
}

int cmd_det_train(const fs::path& data, const fs::path& config_path, fs::path out) {
    auto cfg = config_path.empty()
                   ? detector::DetectorTrainConfig()
                   : detector::DetectorTrainConfig::from_json(read_json_file(config_path));
    std::vector<Sample> train, val;
    load_train_val(data, train, val);
    if (out.empty()) out = "det-run";
    const auto res = detector::train_detector(train, val, cfg, out);
    std::printf("best epoch %d (val loss %.6f), checkpoint %s\n", res.best_epoch,
                res.best_epoch >= 0 ? res.val_loss[res.best_epoch] : 0.0,
                res.best_checkpoint.string().c_str());
    return 0;
}

int cmd_det_eval(const fs::path& ckpt, const fs::path& data, const fs::path& report_path,
                 double match_iou, double nms_iou, double conf) {
    detector::EvalConfig eval;
    eval.match_iou = match_iou;
    eval.nms_iou = nms_iou;
    eval.objectness_threshold = conf;
    eval.validate();
    auto net = detector::load_detector(ckpt);
    const auto samples = load_root(data);
    const auto res = detector::evaluate_detector(net, samples, eval);

    json j;
    j["ap"] = res.ap;
    j["match_iou"] = eval.match_iou;
    j["nms_iou"] = eval.nms_iou;
    j["objectness_threshold"] = eval.objectness_threshold;
    j["images"] = samples.size();
    j["curve"] = json::array();
    for (const auto& p : res.curve) j["curve"].push_back({p.recall, p.precision});
    io::write_text_file(report_path, j.dump(1) + "\n");

    fs::path csv_path = report_path;
    csv_path.replace_extension(".csv");
    std::ostringstream csv;
    csv << "recall,precision\n";
    for (const auto& p : res.curve) {
        char buf[80];
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", p.recall, p.precision);
        csv << buf;
    }
    io::write_text_file(csv_path, csv.str());
    std::printf("AP@%.2f = %.6f over %zu images -> %s, %s\n", eval.match_iou, res.ap,
                samples.size(), report_path.string().c_str(), csv_path.string().c_str());
    return 0;
}

int cmd_det_detect(const fs::path& ckpt, const fs::path& image_path, double conf,
                   double nms_iou) {
    detector::EvalConfig eval;
    eval.objectness_threshold = conf;
    eval.nms_iou = nms_iou;
    eval.validate();
    auto net = detector::load_detector(ckpt);
    const Image8 img = io::read_png_gray(image_path);
    const auto dets = detector::detect(net, img, eval);
    for (const auto& d : dets) {
        json j = {{"x", d.box.x},
                  {"y", d.box.y},
                  {"w", d.box.w},
                  {"h", d.box.h},
                  {"confidence", d.confidence}};
        std::printf("%s\n", j.dump().c_str());
    }
    std::fprintf(stderr, "%zu detections\n", dets.size());
    return 0;
}

int cmd_exp_run(const fs::path& config_path, const fs::path& out_override) {
    auto cfg = experiment::ExperimentConfig::from_json(read_json_file(config_path));
    if (!out_override.empty()) cfg.out_dir = out_override;
    const auto report = experiment::run_matrix(cfg);
    experiment::render_report(cfg.out_dir);
    std::printf("report -> %s\n", (cfg.out_dir / "report.json").string().c_str());
    std::printf("%s\n", io::read_text_file(cfg.out_dir / "table.txt").c_str());
    return 0;
}

int cmd_exp_report(const fs::path& run_dir) {
    const bool complete = experiment::render_report(run_dir);
    std::printf("%s\n", io::read_text_file(run_dir / "table.txt").c_str());
    if (!complete) throw VerifyError("report has missing cells");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ultrasonic training-set toolkit"};
    app.require_subcommand(1);

    // dataset ----------------------------------------------------------------
    auto* dataset_cmd = app.add_subcommand("dataset", "load, validate, split, synthesize");
    dataset_cmd->require_subcommand(1);

    std::string ds_root;
    auto* dv = dataset_cmd->add_subcommand("validate", "check a dataset root");
    dv->add_option("root", ds_root, "dataset root or manifest")->required();

    std::string sp_root, sp_fracs = "0.6,0.1,0.3", sp_out;
    std::uint64_t sp_seed = 42;
    auto* dsp = dataset_cmd->add_subcommand("split", "defect-disjoint split");
    dsp->add_option("root", sp_root)->required();
    dsp->add_option("--fractions", sp_fracs, "train,val,test");
    dsp->add_option("--seed", sp_seed);
    dsp->add_option("--out", sp_out, "output dir (default <root>/splits)");

    std::string ph_config, ph_out;
    std::uint64_t ph_seed = 1;
    auto* dph = dataset_cmd->add_subcommand("phantom", "generate stand-in dataset");
    dph->add_option("--config", ph_config)->required();
    dph->add_option("--out", ph_out)->required();
    dph->add_option("--seed", ph_seed);

    // cpsynth ------------------------------------------------------------------
    auto* cp_cmd = app.add_subcommand("cpsynth", "copy/paste synthesis");
    cp_cmd->require_subcommand(1);
    std::string cp_canvases, cp_patches, cp_defects = "1:4", cp_out;
    std::string cp_merge = "min", cp_side = "dark";
    int cp_count = 100;
    std::uint64_t cp_seed = 1;
    auto* cpg = cp_cmd->add_subcommand("generate", "synthesize pasted images");
    cpg->add_option("--canvases", cp_canvases, "dataset root for backgrounds")->required();
    cpg->add_option("--patches", cp_patches, "dataset root for defects")->required();
    cpg->add_option("--count", cp_count)->required();
    cpg->add_option("--defects", cp_defects, "defects per image, N or LO:HI");
    cpg->add_option("--seed", cp_seed);
    cpg->add_option("--out", cp_out)->required();
    cpg->add_option("--merge", cp_merge, "min|max paste blend");
    cpg->add_option("--mask-side", cp_side, "dark|bright threshold side");

    // maskgen ------------------------------------------------------------------
    auto* mg_cmd = app.add_subcommand("maskgen", "position-mask sampling");
    mg_cmd->require_subcommand(1);
    std::string mg_pool, mg_out, mg_boxes = "1:4";
    int mg_count = 100, mg_size = 0;
    std::uint64_t mg_seed = 1;
    auto* mgs = mg_cmd->add_subcommand("sample", "sample random masks");
    mgs->add_option("--pool", mg_pool, "annotations manifest")->required();
    mgs->add_option("--count", mg_count)->required();
    mgs->add_option("--seed", mg_seed);
    mgs->add_option("--out", mg_out)->required();
    mgs->add_option("--size", mg_size, "mask side length (default: pool image size)");
    mgs->add_option("--boxes", mg_boxes, "boxes per mask, N or LO:HI");

    // gan -----------------------------------------------------------------------
    auto* gan_cmd = app.add_subcommand("gan", "adversarial synthesis");
    gan_cmd->require_subcommand(1);
    std::string gt_data, gt_det, gt_config, gt_out;
    auto* gtr = gan_cmd->add_subcommand("train", "train the generator");
    gtr->add_option("--data", gt_data, "dataset root (train/[val] or flat)")->required();
    gtr->add_option("--detector", gt_det, "frozen detector checkpoint");
    gtr->add_option("--config", gt_config, "JSON training config");
    gtr->add_option("--out", gt_out, "output dir (default gan-run)");

    std::string gg_ckpt, gg_masks, gg_out;
    auto* ggn = gan_cmd->add_subcommand("generate", "render images from masks");
    ggn->add_option("--ckpt", gg_ckpt)->required();
    ggn->add_option("--masks", gg_masks, "maskgen output dir")->required();
    ggn->add_option("--out", gg_out)->required();

    // det -----------------------------------------------------------------------
    auto* det_cmd = app.add_subcommand("det", "defect detector");
    det_cmd->require_subcommand(1);
    std::string dt_data, dt_config, dt_out;
    auto* dtr = det_cmd->add_subcommand("train", "train the detector");
    dtr->add_option("--data", dt_data, "dataset root (train/[val] or flat)")->required();
    dtr->add_option("--config", dt_config, "JSON training config");
    dtr->add_option("--out", dt_out, "output dir (default det-run)");

    std::string de_ckpt, de_data, de_report;
    double de_match = 0.5, de_nms = 0.5, de_conf = 0.001;
    auto* dev = det_cmd->add_subcommand("eval", "AP on a labeled set");
    dev->add_option("--ckpt", de_ckpt)->required();
    dev->add_option("--data", de_data)->required();
    dev->add_option("--report", de_report, "output JSON (CSV written alongside)")->required();
    dev->add_option("--match-iou", de_match);
    dev->add_option("--nms-iou", de_nms);
    dev->add_option("--conf", de_conf, "objectness threshold");

    std::string dd_ckpt, dd_image;
    double dd_conf = 0.25, dd_nms = 0.5;
    auto* ddt = det_cmd->add_subcommand("detect", "detect on one image");
    ddt->add_option("--ckpt", dd_ckpt)->required();
    ddt->add_option("--image", dd_image)->required();
    ddt->add_option("--conf", dd_conf, "objectness threshold");
    ddt->add_option("--nms-iou", dd_nms);

    // exp -----------------------------------------------------------------------
    auto* exp_cmd = app.add_subcommand("exp", "training matrix");
    exp_cmd->require_subcommand(1);
    std::string xr_config, xr_out;
    auto* xrun = exp_cmd->add_subcommand("run", "run the full matrix");
    xrun->add_option("--config", xr_config)->required();
    xrun->add_option("--out", xr_out, "override config out_dir");

    std::string xp_run;
    auto* xrep = exp_cmd->add_subcommand("report", "render tables and PR plots");
    xrep->add_option("--run", xp_run, "run directory containing report.json")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*dv) return cmd_dataset_validate(ds_root);
        if (*dsp) return cmd_dataset_split(sp_root, sp_fracs, sp_seed, sp_out);
        if (*dph) return cmd_dataset_phantom(ph_config, ph_out, ph_seed);
        if (*cpg)
            return cmd_cpsynth_generate(cp_canvases, cp_patches, cp_count, cp_defects, cp_seed,
                                        cp_out, cp_merge, cp_side);
        if (*mgs) return cmd_maskgen_sample(mg_pool, mg_count, mg_seed, mg_out, mg_size, mg_boxes);
        if (*gtr) return cmd_gan_train(gt_data, gt_det, gt_config, gt_out);
        if (*ggn) return cmd_gan_generate(gg_ckpt, gg_masks, gg_out);
        if (*dtr) return cmd_det_train(dt_data, dt_config, dt_out);
        if (*dev) return cmd_det_eval(de_ckpt, de_data, de_report, de_match, de_nms, de_conf);
        if (*ddt) return cmd_det_detect(dd_ckpt, dd_image, dd_conf, dd_nms);
        if (*xrun) return cmd_exp_run(xr_config, xr_out);
        if (*xrep) return cmd_exp_report(xp_run);
        std::fprintf(stderr, "no subcommand\n");
        return 1;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const TrainError& e) {
        std::fprintf(stderr, "training failure: %s\n", e.what());
        return 3;
    } catch (const VerifyError& e) {
        std::fprintf(stderr, "verification failure: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
