#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uts/nn/stack.hpp"

#include <nlohmann/json.hpp>

namespace uts::nn {

/// Self-describing checkpoint: CBOR document holding the run config, a
/// format tag, and every parameter tensor by name with its shape. Loading
/// verifies names and shapes against the receiving network.
struct Checkpoint {
    std::string kind;            // e.g. "generator", "detector"
    nlohmann::json config;       // training config as written by the caller
    nlohmann::json meta;         // epoch, losses, anything run-specific

    struct Entry {
        std::string name;
        std::vector<int> shape;  // n,c,h,w
        std::vector<float> values;
    };
    std::vector<Entry> entries;

    void add(const std::string& name, const Param<float>& p) {
        Entry e;
        e.name = name;
        e.shape = {p.w.n, p.w.c, p.w.h, p.w.w};
        e.values.assign(p.w.v.begin(), p.w.v.end());
        entries.push_back(std::move(e));
    }

    nlohmann::json to_json() const;
    static Checkpoint from_json(const nlohmann::json& j);

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);

    /// Copies stored tensors into `params`, matching by position and
    /// validating count and shapes. `names` must parallel `params`.
    void restore(const std::vector<std::string>& names,
                 const std::vector<Param<float>*>& params) const;
};

/// Convenience: snapshot a parameter list under generated names w0..wN.
Checkpoint snapshot(const std::string& kind, const nlohmann::json& config,
                    const std::vector<Param<float>*>& params);

/// Deterministic content hash of all parameter values (exact bytes), used
/// to prove a network stayed frozen across a training phase.
std::string params_digest(const std::vector<Param<float>*>& params);

}  // namespace uts::nn
