#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace uts::nn {

/// Production scalar for network weights and activations.
using real_t = float;

/// 64-byte aligned allocator. Buffers handed to Eigen must land on a fixed
/// alignment class: vectorized reductions peel their unaligned head from the
/// runtime address, so heap-placement jitter would otherwise change float
/// summation order (and low-order result bits) between runs.
template <typename T>
struct AlignedAlloc {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAlloc() = default;
    template <typename U>
    AlignedAlloc(const AlignedAlloc<U>&) {}

    T* allocate(std::size_t n) {
        return static_cast<T*>(::operator new(n * sizeof(T), kAlign));
    }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

    template <typename U>
    bool operator==(const AlignedAlloc<U>&) const { return true; }
    template <typename U>
    bool operator!=(const AlignedAlloc<U>&) const { return false; }
};

template <typename S>
using AlignedVec = std::vector<S, AlignedAlloc<S>>;

/// Dense NCHW tensor.
template <typename S>
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    AlignedVec<S> v;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_)
        : n(n_), c(c_), h(h_), w(w_),
          v(static_cast<std::size_t>(n_) * c_ * h_ * w_, S(0)) {
        if (n_ < 0 || c_ < 0 || h_ < 0 || w_ < 0)
            throw std::invalid_argument("Tensor: negative dimension");
    }

    std::size_t size() const { return v.size(); }
    S* data() { return v.data(); }
    const S* data() const { return v.data(); }

    S& at(int in, int ic, int iy, int ix) {
        return v[((static_cast<std::size_t>(in) * c + ic) * h + iy) * w + ix];
    }
    S at(int in, int ic, int iy, int ix) const {
        return v[((static_cast<std::size_t>(in) * c + ic) * h + iy) * w + ix];
    }

    S* plane(int in, int ic) {
        return v.data() + (static_cast<std::size_t>(in) * c + ic) * h * w;
    }
    const S* plane(int in, int ic) const {
        return v.data() + (static_cast<std::size_t>(in) * c + ic) * h * w;
    }

    bool same_shape(const Tensor& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }

    std::string shape_str() const {
        return "[" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) +
               "," + std::to_string(w) + "]";
    }

    void fill(S value) { std::fill(v.begin(), v.end(), value); }

    void add_scaled(const Tensor& o, S scale) {
        for (std::size_t i = 0; i < v.size(); ++i) v[i] += scale * o.v[i];
    }

    bool all_finite() const {
        for (S x : v)
            if (!std::isfinite(static_cast<double>(x))) return false;
        return true;
    }
};

template <typename S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.n != b.n || a.h != b.h || a.w != b.w)
        throw std::invalid_argument("concat_channels: shape mismatch " + a.shape_str() + " vs " +
                                    b.shape_str());
    Tensor<S> out(a.n, a.c + b.c, a.h, a.w);
    for (int in = 0; in < a.n; ++in) {
        for (int ic = 0; ic < a.c; ++ic)
            std::copy(a.plane(in, ic), a.plane(in, ic) + a.h * a.w, out.plane(in, ic));
        for (int ic = 0; ic < b.c; ++ic)
            std::copy(b.plane(in, ic), b.plane(in, ic) + b.h * b.w, out.plane(in, a.c + ic));
    }
    return out;
}

/// Splits gradient of concat_channels(a,b) back into the two parts.
template <typename S>
void split_channels(const Tensor<S>& d, int c_first, Tensor<S>* da, Tensor<S>* db) {
    *da = Tensor<S>(d.n, c_first, d.h, d.w);
    *db = Tensor<S>(d.n, d.c - c_first, d.h, d.w);
    for (int in = 0; in < d.n; ++in) {
        for (int ic = 0; ic < c_first; ++ic)
            std::copy(d.plane(in, ic), d.plane(in, ic) + d.h * d.w, da->plane(in, ic));
        for (int ic = c_first; ic < d.c; ++ic)
            std::copy(d.plane(in, ic), d.plane(in, ic) + d.h * d.w, db->plane(in, ic - c_first));
    }
}

}  // namespace uts::nn
