#pragma once

#include <algorithm>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "uts/core/rng.hpp"
#include "uts/nn/tensor.hpp"

namespace uts::nn {

template <typename S>
struct Param {
    Tensor<S> w;
    Tensor<S> g;

    void reset_grad() {
        if (!g.same_shape(w)) g = Tensor<S>(w.n, w.c, w.h, w.w);
        g.fill(S(0));
    }
    std::size_t count() const { return w.size(); }
};

/// One differentiable block. forward(train=true) caches whatever backward
/// needs; backward consumes the cache of the most recent forward and
/// returns the input gradient. Parameter gradients are accumulated only
/// when asked, so a frozen net can still route gradients to its input.
template <typename S>
class Layer {
public:
    virtual ~Layer() = default;
    virtual Tensor<S> forward(const Tensor<S>& x, bool train) = 0;
    virtual Tensor<S> backward(const Tensor<S>& dy, bool accum_param_grads) = 0;
    virtual std::vector<Param<S>*> params() { return {}; }
};

enum class Init { kGan, kHe };  // normal(0,0.02) vs He fan-in

template <typename S>
class Conv2d final : public Layer<S> {
public:
    Conv2d(int cin, int cout, int kernel, int stride, int pad, Init init, Rng& rng)
        : cin_(cin), cout_(cout), k_(kernel), stride_(stride), pad_(pad) {
        weight_.w = Tensor<S>(1, 1, cout, cin * kernel * kernel);
        bias_.w = Tensor<S>(1, 1, 1, cout);
        const double stddev =
            init == Init::kGan ? 0.02 : std::sqrt(2.0 / (cin * kernel * kernel));
        for (auto& x : weight_.w.v) x = static_cast<S>(rng.normal(0.0, stddev));
        weight_.reset_grad();
        bias_.reset_grad();
    }

    int out_dim(int in_dim) const { return (in_dim + 2 * pad_ - k_) / stride_ + 1; }

    Tensor<S> forward(const Tensor<S>& x, bool train) override {
        if (x.c != cin_)
            throw std::invalid_argument("Conv2d: expected " + std::to_string(cin_) +
                                        " input channels, got " + x.shape_str());
        const int oh = out_dim(x.h), ow = out_dim(x.w);
        Tensor<S> y(x.n, cout_, oh, ow);
        const int kk = cin_ * k_ * k_;
        col_.resize(static_cast<std::size_t>(kk) * oh * ow);

        using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        Eigen::Map<const Mat> W(weight_.w.data(), cout_, kk);
        for (int in = 0; in < x.n; ++in) {
            im2col(x, in);
            Eigen::Map<const Mat> C(col_.data(), kk, oh * ow);
            Eigen::Map<Mat> Y(y.plane(in, 0), cout_, oh * ow);
            Y.noalias() = W * C;
            for (int oc = 0; oc < cout_; ++oc)
                Y.row(oc).array() += bias_.w.v[oc];
        }
        if (train) cached_x_ = x;
        return y;
    }

    Tensor<S> backward(const Tensor<S>& dy, bool accum_param_grads) override {
        const Tensor<S>& x = cached_x_;
        const int oh = dy.h, ow = dy.w;
        const int kk = cin_ * k_ * k_;
        Tensor<S> dx(x.n, x.c, x.h, x.w);
        colg_.resize(static_cast<std::size_t>(kk) * oh * ow);

        using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
        Eigen::Map<const Mat> W(weight_.w.data(), cout_, kk);
        Eigen::Map<Mat> dW(weight_.g.data(), cout_, kk);
        for (int in = 0; in < x.n; ++in) {
            Eigen::Map<const Mat> dY(dy.plane(in, 0), cout_, oh * ow);
            if (accum_param_grads) {
                im2col(x, in);
                Eigen::Map<const Mat> C(col_.data(), kk, oh * ow);
                dW.noalias() += dY * C.transpose();
                for (int oc = 0; oc < cout_; ++oc) bias_.g.v[oc] += dY.row(oc).sum();
            }
            Eigen::Map<Mat> dC(colg_.data(), kk, oh * ow);
            dC.noalias() = W.transpose() * dY;
            col2im(dx, in, oh, ow);
        }
        return dx;
    }

    std::vector<Param<S>*> params() override { return {&weight_, &bias_}; }
    Param<S>& weight() { return weight_; }
    Param<S>& bias() { return bias_; }
    int in_channels() const { return cin_; }

private:
    void im2col(const Tensor<S>& x, int in) {
        const int oh = out_dim(x.h), ow = out_dim(x.w);
        std::size_t idx = 0;
        for (int ic = 0; ic < cin_; ++ic) {
            const S* src = x.plane(in, ic);
            for (int ky = 0; ky < k_; ++ky)
                for (int kx = 0; kx < k_; ++kx)
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * stride_ + ky - pad_;
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * stride_ + kx - pad_;
                            col_[idx++] = (iy >= 0 && iy < x.h && ix >= 0 && ix < x.w)
                                              ? src[iy * x.w + ix]
                                              : S(0);
                        }
                    }
        }
    }

    void col2im(Tensor<S>& dx, int in, int oh, int ow) {
        std::size_t idx = 0;
        for (int ic = 0; ic < cin_; ++ic) {
            S* dst = dx.plane(in, ic);
            for (int ky = 0; ky < k_; ++ky)
                for (int kx = 0; kx < k_; ++kx)
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * stride_ + ky - pad_;
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * stride_ + kx - pad_;
                            if (iy >= 0 && iy < dx.h && ix >= 0 && ix < dx.w)
                                dst[iy * dx.w + ix] += colg_[idx];
                            ++idx;
                        }
                    }
        }
    }

    int cin_, cout_, k_, stride_, pad_;
    Param<S> weight_, bias_;
    Tensor<S> cached_x_;
    AlignedVec<S> col_, colg_;
};

template <typename S>
class InstanceNorm2d final : public Layer<S> {
public:
    explicit InstanceNorm2d(int channels, S eps = S(1e-5)) : c_(channels), eps_(eps) {
        gamma_.w = Tensor<S>(1, 1, 1, channels);
        beta_.w = Tensor<S>(1, 1, 1, channels);
        gamma_.w.fill(S(1));
        gamma_.reset_grad();
        beta_.reset_grad();
    }

    Tensor<S> forward(const Tensor<S>& x, bool train) override {
        Tensor<S> y(x.n, x.c, x.h, x.w);
        const int m = x.h * x.w;
        if (train) {
            xhat_ = Tensor<S>(x.n, x.c, x.h, x.w);
            invstd_.assign(static_cast<std::size_t>(x.n) * x.c, S(0));
        }
        for (int in = 0; in < x.n; ++in)
            for (int ic = 0; ic < x.c; ++ic) {
                const S* p = x.plane(in, ic);
                S mean = 0;
                for (int i = 0; i < m; ++i) mean += p[i];
                mean /= S(m);
                S var = 0;
                for (int i = 0; i < m; ++i) var += (p[i] - mean) * (p[i] - mean);
                var /= S(m);
                const S inv = S(1) / std::sqrt(var + eps_);
                S* q = y.plane(in, ic);
                const S g = gamma_.w.v[ic], b = beta_.w.v[ic];
                if (train) {
                    S* xh = xhat_.plane(in, ic);
                    for (int i = 0; i < m; ++i) {
                        xh[i] = (p[i] - mean) * inv;
                        q[i] = g * xh[i] + b;
                    }
                    invstd_[static_cast<std::size_t>(in) * x.c + ic] = inv;
                } else {
                    for (int i = 0; i < m; ++i) q[i] = g * (p[i] - mean) * inv + b;
                }
            }
        return y;
    }

    Tensor<S> backward(const Tensor<S>& dy, bool accum_param_grads) override {
        Tensor<S> dx(dy.n, dy.c, dy.h, dy.w);
        const int m = dy.h * dy.w;
        for (int in = 0; in < dy.n; ++in)
            for (int ic = 0; ic < dy.c; ++ic) {
                const S* d = dy.plane(in, ic);
                const S* xh = xhat_.plane(in, ic);
                const S g = gamma_.w.v[ic];
                const S inv = invstd_[static_cast<std::size_t>(in) * dy.c + ic];
                S sum_d = 0, sum_dx = 0;
                for (int i = 0; i < m; ++i) {
                    sum_d += d[i];
                    sum_dx += d[i] * xh[i];
                }
                if (accum_param_grads) {
                    gamma_.g.v[ic] += sum_dx;
                    beta_.g.v[ic] += sum_d;
                }
                S* o = dx.plane(in, ic);
                const S k1 = g * inv / S(m);
                for (int i = 0; i < m; ++i)
                    o[i] = k1 * (S(m) * d[i] - sum_d - xh[i] * sum_dx);
            }
        return dx;
    }

    std::vector<Param<S>*> params() override { return {&gamma_, &beta_}; }

private:
    int c_;
    S eps_;
    Param<S> gamma_, beta_;
    Tensor<S> xhat_;
    std::vector<S> invstd_;
};

template <typename S>
class LeakyReLU final : public Layer<S> {
public:
    explicit LeakyReLU(S slope = S(0.2)) : slope_(slope) {}

    Tensor<S> forward(const Tensor<S>& x, bool train) override {
        Tensor<S> y = x;
        for (auto& v : y.v) v = v > S(0) ? v : slope_ * v;
        if (train) cached_x_ = x;
        return y;
    }

    Tensor<S> backward(const Tensor<S>& dy, bool) override {
        Tensor<S> dx = dy;
        for (std::size_t i = 0; i < dx.v.size(); ++i)
            if (cached_x_.v[i] <= S(0)) dx.v[i] *= slope_;
        return dx;
    }

private:
    S slope_;
    Tensor<S> cached_x_;
};

template <typename S>
class Relu final : public Layer<S> {
public:
    Tensor<S> forward(const Tensor<S>& x, bool train) override {
        Tensor<S> y = x;
        for (auto& v : y.v) v = std::max(v, S(0));
        if (train) cached_x_ = x;
        return y;
    }
    Tensor<S> backward(const Tensor<S>& dy, bool) override {
        Tensor<S> dx = dy;
        for (std::size_t i = 0; i < dx.v.size(); ++i)
            if (cached_x_.v[i] <= S(0)) dx.v[i] = S(0);
        return dx;
    }

private:
    Tensor<S> cached_x_;
};

template <typename S>
class TanhLayer final : public Layer<S> {
public:
    Tensor<S> forward(const Tensor<S>& x, bool train) override {
        Tensor<S> y = x;
        for (auto& v : y.v) v = std::tanh(v);
        if (train) cached_y_ = y;
        return y;
    }
    Tensor<S> backward(const Tensor<S>& dy, bool) override {
        Tensor<S> dx = dy;
        for (std::size_t i = 0; i < dx.v.size(); ++i)
            dx.v[i] *= S(1) - cached_y_.v[i] * cached_y_.v[i];
        return dx;
    }

private:
    Tensor<S> cached_y_;
};

template <typename S>
class Upsample2xNearest final : public Layer<S> {
public:
    Tensor<S> forward(const Tensor<S>& x, bool) override {
        in_h_ = x.h;
        in_w_ = x.w;
        Tensor<S> y(x.n, x.c, x.h * 2, x.w * 2);
        for (int in = 0; in < x.n; ++in)
            for (int ic = 0; ic < x.c; ++ic) {
                const S* p = x.plane(in, ic);
                S* q = y.plane(in, ic);
                for (int iy = 0; iy < x.h; ++iy)
                    for (int ix = 0; ix < x.w; ++ix) {
                        const S v = p[iy * x.w + ix];
                        const int oy = iy * 2, ox = ix * 2;
                        q[oy * y.w + ox] = v;
                        q[oy * y.w + ox + 1] = v;
                        q[(oy + 1) * y.w + ox] = v;
                        q[(oy + 1) * y.w + ox + 1] = v;
                    }
            }
        return y;
    }

    Tensor<S> backward(const Tensor<S>& dy, bool) override {
        Tensor<S> dx(dy.n, dy.c, in_h_, in_w_);
        for (int in = 0; in < dy.n; ++in)
            for (int ic = 0; ic < dy.c; ++ic) {
                const S* d = dy.plane(in, ic);
                S* o = dx.plane(in, ic);
                for (int iy = 0; iy < in_h_; ++iy)
                    for (int ix = 0; ix < in_w_; ++ix) {
                        const int oy = iy * 2, ox = ix * 2;
                        o[iy * in_w_ + ix] = d[oy * dy.w + ox] + d[oy * dy.w + ox + 1] +
                                             d[(oy + 1) * dy.w + ox] +
                                             d[(oy + 1) * dy.w + ox + 1];
                    }
            }
        return dx;
    }

private:
    int in_h_ = 0, in_w_ = 0;
};

template <typename S>
class AvgPool2x final : public Layer<S> {
public:
    Tensor<S> forward(const Tensor<S>& x, bool) override {
        in_h_ = x.h;
        in_w_ = x.w;
        Tensor<S> y(x.n, x.c, x.h / 2, x.w / 2);
        for (int in = 0; in < x.n; ++in)
            for (int ic = 0; ic < x.c; ++ic) {
                const S* p = x.plane(in, ic);
                S* q = y.plane(in, ic);
                for (int oy = 0; oy < y.h; ++oy)
                    for (int ox = 0; ox < y.w; ++ox) {
                        const int iy = oy * 2, ix = ox * 2;
                        q[oy * y.w + ox] =
                            (p[iy * x.w + ix] + p[iy * x.w + ix + 1] +
                             p[(iy + 1) * x.w + ix] + p[(iy + 1) * x.w + ix + 1]) /
                            S(4);
                    }
            }
        return y;
    }

    Tensor<S> backward(const Tensor<S>& dy, bool) override {
        Tensor<S> dx(dy.n, dy.c, in_h_, in_w_);
        for (int in = 0; in < dy.n; ++in)
            for (int ic = 0; ic < dy.c; ++ic) {
                const S* d = dy.plane(in, ic);
                S* o = dx.plane(in, ic);
                for (int oy = 0; oy < dy.h; ++oy)
                    for (int ox = 0; ox < dy.w; ++ox) {
                        const S v = d[oy * dy.w + ox] / S(4);
                        const int iy = oy * 2, ix = ox * 2;
                        o[iy * in_w_ + ix] = v;
                        o[iy * in_w_ + ix + 1] = v;
                        o[(iy + 1) * in_w_ + ix] = v;
                        o[(iy + 1) * in_w_ + ix + 1] = v;
                    }
            }
        return dx;
    }

private:
    int in_h_ = 0, in_w_ = 0;
};

/// Bilinear resample to a fixed spatial size. Linear in the input, so the
/// backward pass is the exact transpose of the interpolation weights.
template <typename S>
class BilinearInterp final : public Layer<S> {
public:
    BilinearInterp(int out_h, int out_w) : oh_(out_h), ow_(out_w) {}

    Tensor<S> forward(const Tensor<S>& x, bool) override {
        build_tables(x.h, x.w);
        Tensor<S> y(x.n, x.c, oh_, ow_);
        for (int in = 0; in < x.n; ++in)
            for (int ic = 0; ic < x.c; ++ic) {
                const S* p = x.plane(in, ic);
                S* q = y.plane(in, ic);
                for (int oy = 0; oy < oh_; ++oy)
                    for (int ox = 0; ox < ow_; ++ox) {
                        const auto& ty = ytab_[oy];
                        const auto& tx = xtab_[ox];
                        q[oy * ow_ + ox] =
                            ty.w0 * (tx.w0 * p[ty.i0 * in_w_ + tx.i0] +
                                     tx.w1 * p[ty.i0 * in_w_ + tx.i1]) +
                            ty.w1 * (tx.w0 * p[ty.i1 * in_w_ + tx.i0] +
                                     tx.w1 * p[ty.i1 * in_w_ + tx.i1]);
                    }
            }
        return y;
    }

    Tensor<S> backward(const Tensor<S>& dy, bool) override {
        Tensor<S> dx(dy.n, dy.c, in_h_, in_w_);
        for (int in = 0; in < dy.n; ++in)
            for (int ic = 0; ic < dy.c; ++ic) {
                const S* d = dy.plane(in, ic);
                S* o = dx.plane(in, ic);
                for (int oy = 0; oy < oh_; ++oy)
                    for (int ox = 0; ox < ow_; ++ox) {
                        const auto& ty = ytab_[oy];
                        const auto& tx = xtab_[ox];
                        const S g = d[oy * ow_ + ox];
                        o[ty.i0 * in_w_ + tx.i0] += ty.w0 * tx.w0 * g;
                        o[ty.i0 * in_w_ + tx.i1] += ty.w0 * tx.w1 * g;
                        o[ty.i1 * in_w_ + tx.i0] += ty.w1 * tx.w0 * g;
                        o[ty.i1 * in_w_ + tx.i1] += ty.w1 * tx.w1 * g;
                    }
            }
        return dx;
    }

private:
    struct Tap {
        int i0, i1;
        S w0, w1;
    };

    void build_tables(int in_h, int in_w) {
        if (in_h == in_h_ && in_w == in_w_) return;
        in_h_ = in_h;
        in_w_ = in_w;
        ytab_.resize(oh_);
        xtab_.resize(ow_);
        const double sy = static_cast<double>(in_h) / oh_;
        const double sx = static_cast<double>(in_w) / ow_;
        // half-pixel centers with the source coordinate clamped to the valid
        // range, so border outputs read the border pixel alone
        for (int oy = 0; oy < oh_; ++oy) {
            const double f =
                std::clamp((oy + 0.5) * sy - 0.5, 0.0, static_cast<double>(in_h - 1));
            const int i0 = static_cast<int>(std::floor(f));
            const double frac = f - i0;
            ytab_[oy] = Tap{i0, std::min(i0 + 1, in_h - 1), S(1.0 - frac), S(frac)};
        }
        for (int ox = 0; ox < ow_; ++ox) {
            const double f =
                std::clamp((ox + 0.5) * sx - 0.5, 0.0, static_cast<double>(in_w - 1));
            const int i0 = static_cast<int>(std::floor(f));
            const double frac = f - i0;
            xtab_[ox] = Tap{i0, std::min(i0 + 1, in_w - 1), S(1.0 - frac), S(frac)};
        }
    }

    int oh_, ow_;
    int in_h_ = 0, in_w_ = 0;
    std::vector<Tap> ytab_, xtab_;
};

/// 1 -> k channel replication (grayscale into an RGB-shaped backbone).
template <typename S>
class ChannelRepeat final : public Layer<S> {
public:
    explicit ChannelRepeat(int k) : k_(k) {}

    Tensor<S> forward(const Tensor<S>& x, bool) override {
        in_c_ = x.c;
        Tensor<S> y(x.n, x.c * k_, x.h, x.w);
        for (int in = 0; in < x.n; ++in)
            for (int ic = 0; ic < x.c; ++ic)
                for (int r = 0; r < k_; ++r)
                    std::copy(x.plane(in, ic), x.plane(in, ic) + x.h * x.w,
                              y.plane(in, ic * k_ + r));
        return y;
    }

    Tensor<S> backward(const Tensor<S>& dy, bool) override {
        Tensor<S> dx(dy.n, in_c_, dy.h, dy.w);
        const int hw = dy.h * dy.w;
        for (int in = 0; in < dy.n; ++in)
            for (int ic = 0; ic < in_c_; ++ic) {
                S* o = dx.plane(in, ic);
                for (int r = 0; r < k_; ++r) {
                    const S* d = dy.plane(in, ic * k_ + r);
                    for (int i = 0; i < hw; ++i) o[i] += d[i];
                }
            }
        return dx;
    }

private:
    int k_;
    int in_c_ = 0;
};

}  // namespace uts::nn
