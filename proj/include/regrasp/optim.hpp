#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "regrasp/autodiff.hpp"

namespace regrasp::optim {

/// Adam over an ordered parameter list. Moment buffers are keyed by
/// position, so the caller must pass the same parameter order every step.
class Adam {
public:
    Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

    void step(const std::vector<ad::Tensor*>& params, const std::vector<const ad::Tensor*>& grads) {
        if (params.size() != grads.size()) throw std::invalid_argument("Adam: params/grads mismatch");
        if (m_.empty()) {
            m_.resize(params.size());
            v_.resize(params.size());
            for (std::size_t i = 0; i < params.size(); ++i) {
                m_[i].assign(params[i]->size(), 0.0);
                v_[i].assign(params[i]->size(), 0.0);
            }
        }
        ++t_;
        const double c1 = 1.0 - std::pow(b1_, t_);
        const double c2 = 1.0 - std::pow(b2_, t_);
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto& p = params[i]->mutable_data();
            const auto& g = grads[i]->data();
            if (p.size() != g.size()) throw std::invalid_argument("Adam: gradient size mismatch");
            for (std::size_t k = 0; k < p.size(); ++k) {
                m_[i][k] = b1_ * m_[i][k] + (1.0 - b1_) * g[k];
                v_[i][k] = b2_ * v_[i][k] + (1.0 - b2_) * g[k] * g[k];
                p[k] -= lr_ * (m_[i][k] / c1) / (std::sqrt(v_[i][k] / c2) + eps_);
            }
        }
    }

    double lr() const { return lr_; }

private:
    double lr_, b1_, b2_, eps_;
    int t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace regrasp::optim
