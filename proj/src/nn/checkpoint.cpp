#include "uts/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "uts/core/errors.hpp"
#include "uts/core/hash.hpp"

namespace uts::nn {

namespace {
constexpr const char* kFormat = "uts-checkpoint-v1";
}

nlohmann::json Checkpoint::to_json() const {
    nlohmann::json j;
    j["format"] = kFormat;
    j["kind"] = kind;
    j["config"] = config;
    j["meta"] = meta;
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& e : entries) {
        // Values travel as raw little-endian float32 bytes; CBOR stores
        // them as a binary string instead of a bloated number array.
        std::vector<std::uint8_t> bytes(e.values.size() * sizeof(float));
        std::memcpy(bytes.data(), e.values.data(), bytes.size());
        nlohmann::json t;
        t["name"] = e.name;
        t["shape"] = e.shape;
        t["data"] = nlohmann::json::binary(std::move(bytes));
        tensors.push_back(std::move(t));
    }
    j["tensors"] = std::move(tensors);
    return j;
}

Checkpoint Checkpoint::from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("format", "") != kFormat)
        throw LoadError("checkpoint: unrecognized format");
    Checkpoint c;
    c.kind = j.value("kind", "");
    c.config = j.value("config", nlohmann::json::object());
    c.meta = j.value("meta", nlohmann::json::object());
    for (const auto& t : j.at("tensors")) {
        Entry e;
        e.name = t.at("name").get<std::string>();
        e.shape = t.at("shape").get<std::vector<int>>();
        const auto& bin = t.at("data").get_binary();
        if (bin.size() % sizeof(float) != 0)
            throw LoadError("checkpoint: tensor '" + e.name + "' has truncated data");
        e.values.resize(bin.size() / sizeof(float));
        std::memcpy(e.values.data(), bin.data(), bin.size());
        std::size_t expect = 1;
        for (int d : e.shape) expect *= static_cast<std::size_t>(d);
        if (e.shape.size() != 4 || expect != e.values.size())
            throw LoadError("checkpoint: tensor '" + e.name + "' shape/data mismatch");
        c.entries.push_back(std::move(e));
    }
    return c;
}

void Checkpoint::save(const std::string& path) const {
    const std::vector<std::uint8_t> bytes = nlohmann::json::to_cbor(to_json());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LoadError("cannot open checkpoint for writing: " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw LoadError("failed writing checkpoint: " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open checkpoint: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    nlohmann::json j;
    try {
        j = nlohmann::json::from_cbor(bytes);
    } catch (const nlohmann::json::exception& e) {
        throw LoadError("checkpoint is not valid CBOR: " + path + " (" + e.what() + ")");
    }
    return from_json(j);
}

void Checkpoint::restore(const std::vector<std::string>& names,
                         const std::vector<Param<float>*>& params) const {
    if (names.size() != params.size())
        throw std::invalid_argument("restore: names/params size mismatch");
    if (entries.size() != params.size())
        throw LoadError("checkpoint: expected " + std::to_string(params.size()) +
                        " tensors, found " + std::to_string(entries.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Entry& e = entries[i];
        Param<float>& p = *params[i];
        if (e.name != names[i])
            throw LoadError("checkpoint: tensor " + std::to_string(i) + " is '" + e.name +
                            "', expected '" + names[i] + "'");
        const std::vector<int> want = {p.w.n, p.w.c, p.w.h, p.w.w};
        if (e.shape != want)
            throw LoadError("checkpoint: tensor '" + e.name + "' shape mismatch");
        p.w.v.assign(e.values.begin(), e.values.end());
    }
}

Checkpoint snapshot(const std::string& kind, const nlohmann::json& config,
                    const std::vector<Param<float>*>& params) {
    Checkpoint c;
    c.kind = kind;
    c.config = config;
    for (std::size_t i = 0; i < params.size(); ++i)
        c.add("w" + std::to_string(i), *params[i]);
    return c;
}

std::string params_digest(const std::vector<Param<float>*>& params) {
    Fnv1a64 h;
    for (const auto* p : params) {
        h.update_value<std::uint64_t>(p->count());
        h.update(p->w.v.data(), p->w.v.size() * sizeof(float));
    }
    return h.hex();
}

}  // namespace uts::nn
