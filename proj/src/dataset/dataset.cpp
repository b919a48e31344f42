#include "uts/dataset/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "uts/core/errors.hpp"
#include "uts/core/imageops.hpp"
#include "uts/core/io.hpp"
#include "uts/core/rng.hpp"

namespace uts::dataset {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<Sample> load_dataset(const fs::path& root, const fs::path& manifest,
                                 int expected_size) {
    std::ifstream in(manifest);
    if (!in) throw LoadError("cannot open manifest: " + manifest.string());

    std::vector<Sample> samples;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
        json row;
        try {
            row = json::parse(line);
        } catch (const json::exception& e) {
            throw LoadError("manifest " + manifest.string() + " line " +
                            std::to_string(line_no) + ": " + e.what());
        }
        if (!row.contains("image"))
            throw LoadError("manifest line " + std::to_string(line_no) + ": missing image path");

        const fs::path img_path = root / row["image"].get<std::string>();
        if (!fs::exists(img_path))
            throw LoadError("missing image file: " + img_path.string());

        Sample s;
        s.image = io::read_png_gray(img_path);
        if (expected_size > 0 && (s.image.h != expected_size || s.image.w != expected_size))
            throw ValidationError("sample " + img_path.string() + ": expected " +
                                  std::to_string(expected_size) + "x" +
                                  std::to_string(expected_size) + " patch, got " +
                                  std::to_string(s.image.w) + "x" + std::to_string(s.image.h));
        if (row.contains("tag")) s.tag = source_tag_from_string(row["tag"].get<std::string>());
        for (const auto& b : row.value("boxes", json::array())) {
            if (!b.is_array() || b.size() != 5)
                throw LoadError("manifest line " + std::to_string(line_no) +
                                ": box must be [x,y,w,h,defect_id]");
            s.boxes.push_back(Box{b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()});
            s.defect_ids.push_back(b[4].get<std::string>());
        }
        s.validate("sample " + img_path.string());
        samples.push_back(std::move(s));
    }
    return samples;
}

fs::path save_dataset(const std::vector<Sample>& samples, const fs::path& out_dir,
                      const std::string& stem) {
    io::ensure_directory(out_dir);
    std::ostringstream manifest;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Sample& s = samples[i];
        char name[64];
        std::snprintf(name, sizeof(name), "%s_%06zu.png", stem.c_str(), i);
        io::write_png_gray(out_dir / name, s.image);

        json boxes = json::array();
        for (std::size_t k = 0; k < s.boxes.size(); ++k) {
            const Box& b = s.boxes[k];
            boxes.push_back({b.x, b.y, b.w, b.h, s.defect_ids[k]});
        }
        json row = {{"image", name}, {"boxes", boxes}, {"tag", to_string(s.tag)}};
        manifest << row.dump() << "\n";
    }
    const fs::path manifest_path = out_dir / "manifest.jsonl";
    io::write_text_file(manifest_path, manifest.str());
    return manifest_path;
}

namespace {

struct UnionFind {
    std::vector<std::size_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) {
        std::iota(parent.begin(), parent.end(), std::size_t{0});
    }
    std::size_t find(std::size_t a) {
        while (parent[a] != a) {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        return a;
    }
    void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
};

}  // namespace

DatasetSplit split_by_defect(const std::vector<Sample>& samples, double train_frac,
                             double val_frac, double test_frac, std::uint64_t seed) {
    const double sum = train_frac + val_frac + test_frac;
    if (std::abs(sum - 1.0) > 1e-9)
        throw ConfigError("split fractions must sum to 1, got " + std::to_string(sum));
    for (const Sample& s : samples)
        for (const auto& id : s.defect_ids)
            if (id.empty()) throw ValidationError("split_by_defect: box without defect_id");

    const std::size_t n = samples.size();

    // Samples sharing a defect id must land in the same subset.
    UnionFind uf(n);
    std::unordered_map<std::string, std::size_t> first_seen;
    for (std::size_t i = 0; i < n; ++i)
        for (const auto& id : samples[i].defect_ids) {
            auto [it, inserted] = first_seen.emplace(id, i);
            if (!inserted) uf.unite(i, it->second);
        }

    std::unordered_map<std::size_t, std::vector<std::size_t>> groups_by_root;
    for (std::size_t i = 0; i < n; ++i) groups_by_root[uf.find(i)].push_back(i);

    std::vector<std::vector<std::size_t>> groups;
    groups.reserve(groups_by_root.size());
    for (std::size_t i = 0; i < n; ++i) {
        auto it = groups_by_root.find(i);
        if (it != groups_by_root.end()) groups.push_back(std::move(it->second));
    }

    // Largest-remainder targets over sample counts.
    const double fracs[3] = {train_frac, val_frac, test_frac};
    std::size_t target[3];
    {
        double exact[3];
        std::size_t assigned = 0;
        for (int k = 0; k < 3; ++k) {
            exact[k] = fracs[k] * static_cast<double>(n);
            target[k] = static_cast<std::size_t>(std::floor(exact[k] + 1e-12));
            assigned += target[k];
        }
        std::vector<int> order = {0, 1, 2};
        std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
            return exact[a] - std::floor(exact[a]) > exact[b] - std::floor(exact[b]);
        });
        for (std::size_t r = 0; r + assigned < n; ++r) ++target[order[r % 3]];
    }

    Rng rng(seed, /*stream=*/101);
    rng.shuffle(groups);
    // Big groups first so deficits can still absorb them.
    std::stable_sort(groups.begin(), groups.end(),
                     [](const auto& a, const auto& b) { return a.size() > b.size(); });

    long long deficit[3] = {static_cast<long long>(target[0]), static_cast<long long>(target[1]),
                            static_cast<long long>(target[2])};
    std::vector<int> assignment(n, -1);
    for (const auto& g : groups) {
        int best = 0;
        for (int k = 1; k < 3; ++k)
            if (deficit[k] > deficit[best]) best = k;
        for (std::size_t idx : g) assignment[idx] = best;
        deficit[best] -= static_cast<long long>(g.size());
    }

    DatasetSplit split;
    for (std::size_t i = 0; i < n; ++i) {
        switch (assignment[i]) {
            case 0: split.train.push_back(samples[i]); break;
            case 1: split.val.push_back(samples[i]); break;
            case 2: split.test.push_back(samples[i]); break;
            default: throw ValidationError("split_by_defect: unassigned sample");
        }
    }

    // A subset that was supposed to get samples but stayed empty means the
    // id groups are too coarse to separate.
    const std::size_t sizes[3] = {split.train.size(), split.val.size(), split.test.size()};
    for (int k = 0; k < 3; ++k) {
        if (target[k] > 0 && sizes[k] == 0) {
            std::string ids;
            for (const auto& g : groups)
                if (!g.empty() && g.size() == n) {
                    for (std::size_t idx : g)
                        for (const auto& id : samples[idx].defect_ids) {
                            if (!ids.empty()) ids += ",";
                            ids += id;
                            if (ids.size() > 200) break;
                        }
                    break;
                }
            throw ValidationError("split_by_defect: defect ids cannot be separated into the "
                                  "requested subsets (conflicting ids: " + ids + ")");
        }
    }
    return split;
}

std::vector<Image8> extract_canvases(const std::vector<Sample>& samples) {
    std::vector<Image8> out;
    for (const Sample& s : samples)
        if (s.boxes.empty()) out.push_back(s.image);
    return out;
}

std::vector<DefectCrop> extract_defect_crops(const std::vector<Sample>& samples) {
    std::vector<DefectCrop> out;
    for (const Sample& s : samples)
        for (std::size_t k = 0; k < s.boxes.size(); ++k)
            out.push_back(DefectCrop{crop_image(s.image, s.boxes[k]), s.defect_ids[k]});
    return out;
}

void PhantomConfig::validate() const {
    if (count < 0) throw ConfigError("phantom: count must be >= 0");
    if (image_size < 8) throw ConfigError("phantom: image_size must be >= 8");
    if (min_defects < 0 || max_defects < min_defects)
        throw ConfigError("phantom: bad defects-per-image range");
    if (sigma_long_hi < sigma_long_lo || sigma_short_hi < sigma_short_lo)
        throw ConfigError("phantom: bad sigma range");
    if (contrast_hi < contrast_lo || contrast_lo < 0)
        throw ConfigError("phantom: bad contrast range");
    // Worst-case blob footprint must fit.
    const double level = std::sqrt(2.0 * std::log(1.0 / kBoxCutoff));
    const double max_half = level * sigma_long_hi;
    if (2.0 * max_half + 3.0 >= image_size)
        throw ConfigError("phantom: blob larger than image (sigma_long_hi too big for image_size)");
}

nlohmann::json PhantomConfig::to_json() const {
    nlohmann::json j;
    j["count"] = count;
    j["image_size"] = image_size;
    j["min_defects"] = min_defects;
    j["max_defects"] = max_defects;
    j["background_lo"] = background_lo;
    j["background_hi"] = background_hi;
    j["speckle_weight"] = speckle_weight;
    j["blur_sigma"] = blur_sigma;
    j["contrast_lo"] = contrast_lo;
    j["contrast_hi"] = contrast_hi;
    j["dark_defects"] = dark_defects;
    j["sigma_long_lo"] = sigma_long_lo;
    j["sigma_long_hi"] = sigma_long_hi;
    j["sigma_short_lo"] = sigma_short_lo;
    j["sigma_short_hi"] = sigma_short_hi;
    j["orientation_max_deg"] = orientation_max_deg;
    j["id_prefix"] = id_prefix;
    j["id_start"] = id_start;
    return j;
}

PhantomConfig PhantomConfig::from_json(const nlohmann::json& j) {
    PhantomConfig c;
    c.count = j.value("count", c.count);
    c.image_size = j.value("image_size", c.image_size);
    c.min_defects = j.value("min_defects", c.min_defects);
    c.max_defects = j.value("max_defects", c.max_defects);
    c.background_lo = j.value("background_lo", c.background_lo);
    c.background_hi = j.value("background_hi", c.background_hi);
    c.speckle_weight = j.value("speckle_weight", c.speckle_weight);
    c.blur_sigma = j.value("blur_sigma", c.blur_sigma);
    c.contrast_lo = j.value("contrast_lo", c.contrast_lo);
    c.contrast_hi = j.value("contrast_hi", c.contrast_hi);
    c.dark_defects = j.value("dark_defects", c.dark_defects);
    c.sigma_long_lo = j.value("sigma_long_lo", c.sigma_long_lo);
    c.sigma_long_hi = j.value("sigma_long_hi", c.sigma_long_hi);
    c.sigma_short_lo = j.value("sigma_short_lo", c.sigma_short_lo);
    c.sigma_short_hi = j.value("sigma_short_hi", c.sigma_short_hi);
    c.orientation_max_deg = j.value("orientation_max_deg", c.orientation_max_deg);
    c.id_prefix = j.value("id_prefix", c.id_prefix);
    c.id_start = j.value("id_start", c.id_start);
    c.validate();
    return c;
}

namespace {

struct Blob {
    double cx, cy, amp, sigma_long, sigma_short, theta;
};

// Half-extents of the axis-aligned box around the ellipse where the blob's
// own contribution is >= kBoxCutoff * amplitude.
void blob_half_extents(const Blob& b, double* hx, double* hy) {
    const double level = std::sqrt(2.0 * std::log(1.0 / PhantomConfig::kBoxCutoff));
    const double c = std::cos(b.theta), s = std::sin(b.theta);
    *hx = level * std::sqrt(b.sigma_long * b.sigma_long * c * c +
                            b.sigma_short * b.sigma_short * s * s);
    *hy = level * std::sqrt(b.sigma_long * b.sigma_long * s * s +
                            b.sigma_short * b.sigma_short * c * c);
}

}  // namespace

std::vector<Sample> generate_phantom_dataset(const PhantomConfig& config, std::uint64_t seed) {
    config.validate();
    std::vector<Sample> out;
    out.reserve(config.count);
    std::uint64_t id_counter = config.id_start;

    for (int i = 0; i < config.count; ++i) {
        Rng rng(seed, /*stream=*/1000 + static_cast<std::uint64_t>(i));
        const int sz = config.image_size;

        // Speckled background.
        const double base = rng.uniform(config.background_lo, config.background_hi);
        std::vector<double> field(static_cast<std::size_t>(sz) * sz);
        const double rayleigh_mean = std::sqrt(M_PI / 2.0);
        for (auto& v : field) {
            const double speckle = rng.rayleigh(1.0) / rayleigh_mean;  // mean 1
            v = base * ((1.0 - config.speckle_weight) + config.speckle_weight * speckle);
        }

        // Echo blobs with non-overlapping boxes.
        const int want = static_cast<int>(rng.uniform_int(config.min_defects, config.max_defects));
        std::vector<Blob> blobs;
        std::vector<Box> boxes;
        int placed = 0;
        int attempts = 0;
        while (placed < want && attempts < 500) {
            ++attempts;
            Blob b;
            b.sigma_long = rng.uniform(config.sigma_long_lo, config.sigma_long_hi);
            b.sigma_short = rng.uniform(config.sigma_short_lo, config.sigma_short_hi);
            b.theta = rng.uniform(-config.orientation_max_deg, config.orientation_max_deg) *
                      M_PI / 180.0;
            b.amp = rng.uniform(config.contrast_lo, config.contrast_hi);
            double hx, hy;
            blob_half_extents(b, &hx, &hy);
            const double margin_x = hx + 1.0, margin_y = hy + 1.0;
            if (2.0 * margin_x >= sz - 2 || 2.0 * margin_y >= sz - 2) continue;
            b.cx = rng.uniform(margin_x, sz - 1.0 - margin_x);
            b.cy = rng.uniform(margin_y, sz - 1.0 - margin_y);

            const int x0 = std::max(0, static_cast<int>(std::floor(b.cx - hx)));
            const int y0 = std::max(0, static_cast<int>(std::floor(b.cy - hy)));
            const int x1 = std::min(sz - 1, static_cast<int>(std::ceil(b.cx + hx)));
            const int y1 = std::min(sz - 1, static_cast<int>(std::ceil(b.cy + hy)));
            const Box box{x0, y0, x1 - x0 + 1, y1 - y0 + 1};
            bool clash = false;
            for (const Box& prev : boxes)
                if (box.intersects(prev)) { clash = true; break; }
            if (clash) continue;
            blobs.push_back(b);
            boxes.push_back(box);
            ++placed;
        }

        for (const Blob& b : blobs) {
            const double c = std::cos(b.theta), s = std::sin(b.theta);
            double hx, hy;
            blob_half_extents(b, &hx, &hy);
            const int x0 = std::max(0, static_cast<int>(std::floor(b.cx - hx)) - 2);
            const int y0 = std::max(0, static_cast<int>(std::floor(b.cy - hy)) - 2);
            const int x1 = std::min(sz - 1, static_cast<int>(std::ceil(b.cx + hx)) + 2);
            const int y1 = std::min(sz - 1, static_cast<int>(std::ceil(b.cy + hy)) + 2);
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) {
                    const double dx = x - b.cx, dy = y - b.cy;
                    const double u = (c * dx + s * dy) / b.sigma_long;
                    const double v = (-s * dx + c * dy) / b.sigma_short;
                    const double g = b.amp * std::exp(-0.5 * (u * u + v * v));
                    auto& px = field[static_cast<std::size_t>(y) * sz + x];
                    px += config.dark_defects ? -g : g;
                }
        }

        Image8 img(sz, sz);
        for (std::size_t k = 0; k < field.size(); ++k) img.px[k] = clamp_u8(field[k]);
        if (config.blur_sigma > 0.0) img = gaussian_blur(img, config.blur_sigma);

        Sample sample;
        sample.image = std::move(img);
        sample.tag = SourceTag::kPhantom;
        for (const Box& b : boxes) {
            sample.boxes.push_back(b);
            char id[64];
            std::snprintf(id, sizeof(id), "%s%08llu", config.id_prefix.c_str(),
                          static_cast<unsigned long long>(id_counter++));
            sample.defect_ids.emplace_back(id);
        }
        sample.validate("phantom " + std::to_string(i));
        out.push_back(std::move(sample));
    }
    return out;
}

}  // namespace uts::dataset
