#pragma once

#include <cmath>
#include <vector>

#include "mitodet/core/error.hpp"
#include "mitodet/nn/layers.hpp"

namespace mitodet::nn {

template <class T>
void zero_grads(std::vector<ParamView<T>>& params) {
    for (auto& p : params) p.g->fill(T(0));
}

// Plain momentum gradient descent: v = m*v + g; w -= lr*v.
template <class T>
class SgdMomentum {
public:
    explicit SgdMomentum(double momentum = 0.9) : momentum_(momentum) {}

    void step(std::vector<ParamView<T>>& params, double lr) {
        ensure_state(params);
        for (size_t i = 0; i < params.size(); ++i) {
            auto& w = params[i].w->v;
            auto& g = params[i].g->v;
            auto& vel = velocity_[i];
            for (size_t j = 0; j < w.size(); ++j) {
                vel[j] = T(momentum_) * vel[j] + g[j];
                w[j] -= T(lr) * vel[j];
            }
        }
    }

    std::vector<std::vector<T>>& state() { return velocity_; }

private:
    void ensure_state(const std::vector<ParamView<T>>& params) {
        if (velocity_.empty()) {
            for (const auto& p : params) velocity_.emplace_back(p.w->size(), T(0));
        } else if (velocity_.size() != params.size()) {
            throw Error("SgdMomentum: parameter list changed between steps");
        }
    }

    double momentum_;
    std::vector<std::vector<T>> velocity_;
};

template <class T>
class Adam {
public:
    Adam(double lr, double beta1 = 0.5, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(std::vector<ParamView<T>>& params) {
        ensure_state(params);
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (size_t i = 0; i < params.size(); ++i) {
            auto& w = params[i].w->v;
            auto& g = params[i].g->v;
            auto& m = m_[i];
            auto& v = v_[i];
            for (size_t j = 0; j < w.size(); ++j) {
                m[j] = T(beta1_) * m[j] + T(1.0 - beta1_) * g[j];
                v[j] = T(beta2_) * v[j] + T(1.0 - beta2_) * g[j] * g[j];
                const double mhat = m[j] / bc1;
                const double vhat = v[j] / bc2;
                w[j] -= T(lr_ * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

private:
    void ensure_state(const std::vector<ParamView<T>>& params) {
        if (m_.empty()) {
            for (const auto& p : params) {
                m_.emplace_back(p.w->size(), T(0));
                v_.emplace_back(p.w->size(), T(0));
            }
        } else if (m_.size() != params.size()) {
            throw Error("Adam: parameter list changed between steps");
        }
    }

    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<std::vector<T>> m_, v_;
};

}  // namespace mitodet::nn
