#pragma once

#include <cmath>
#include <vector>

#include "uts/nn/stack.hpp"

namespace uts::nn {

/// Adam with bias correction. `step(lr)` consumes the gradients currently
/// stored in each Param and zeroes them afterwards.
template <typename S>
class Adam {
public:
    Adam(std::vector<Param<S>*> params, double beta1 = 0.5, double beta2 = 0.999,
         double eps = 1e-8)
        : params_(std::move(params)), beta1_(beta1), beta2_(beta2), eps_(eps) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (std::size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(params_[i]->count(), 0.0);
            v_[i].assign(params_[i]->count(), 0.0);
        }
    }

    void step(double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            Param<S>& p = *params_[i];
            for (std::size_t j = 0; j < p.count(); ++j) {
                const double g = static_cast<double>(p.g.v[j]);
                m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g;
                v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g * g;
                const double mhat = m_[i][j] / bc1;
                const double vhat = v_[i][j] / bc2;
                p.w.v[j] -= static_cast<S>(lr * mhat / (std::sqrt(vhat) + eps_));
            }
            p.g.fill(S(0));
        }
    }

    long long steps_taken() const { return t_; }

private:
    std::vector<Param<S>*> params_;
    double beta1_, beta2_, eps_;
    long long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace uts::nn
