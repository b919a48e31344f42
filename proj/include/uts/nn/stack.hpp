#pragma once

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "uts/nn/layers.hpp"

namespace uts::nn {

/// Sequential layer list with feature taps: forward can record the output
/// of selected layers, and backward accepts extra gradients to inject at
/// those same points (e.g. feature-matching losses on intermediate maps).
template <typename S>
class Stack {
public:
    /// Returns the index of the appended layer.
    int add(std::unique_ptr<Layer<S>> layer) {
        layers_.push_back(std::move(layer));
        return static_cast<int>(layers_.size()) - 1;
    }

    void tap(int layer_index) { taps_.push_back(layer_index); }

    Tensor<S> forward(const Tensor<S>& x, bool train) {
        tap_values_.clear();
        Tensor<S> cur = x;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            cur = layers_[i]->forward(cur, train);
            for (int t : taps_)
                if (t == static_cast<int>(i)) tap_values_.push_back(cur);
        }
        return cur;
    }

    /// `tap_grads` pairs a layer index with a gradient of that layer's
    /// output; each is added to the flowing gradient during the sweep.
    Tensor<S> backward(const Tensor<S>& dy, bool accum_param_grads,
                       const std::vector<std::pair<int, Tensor<S>>>& tap_grads = {}) {
        Tensor<S> cur = dy;
        for (int i = static_cast<int>(layers_.size()) - 1; i >= 0; --i) {
            for (const auto& [t, g] : tap_grads)
                if (t == i) {
                    if (!g.same_shape(cur))
                        throw std::invalid_argument("tap gradient shape mismatch at layer " +
                                                    std::to_string(i));
                    cur.add_scaled(g, S(1));
                }
            cur = layers_[i]->backward(cur, accum_param_grads);
        }
        return cur;
    }

    std::vector<Param<S>*> params() {
        std::vector<Param<S>*> out;
        for (auto& l : layers_)
            for (auto* p : l->params()) out.push_back(p);
        return out;
    }

    const std::vector<Tensor<S>>& tap_values() const { return tap_values_; }
    std::size_t layer_count() const { return layers_.size(); }
    Layer<S>& layer(int i) { return *layers_[i]; }

private:
    std::vector<std::unique_ptr<Layer<S>>> layers_;
    std::vector<int> taps_;
    std::vector<Tensor<S>> tap_values_;
};

template <typename S>
std::size_t param_count(const std::vector<Param<S>*>& ps) {
    std::size_t n = 0;
    for (const auto* p : ps) n += p->count();
    return n;
}

template <typename S>
void reset_grads(const std::vector<Param<S>*>& ps) {
    for (auto* p : ps) p->reset_grad();
}

}  // namespace uts::nn
