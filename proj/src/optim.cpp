#include "umi/optim.hpp"

#include <cmath>
#include <string>

#include "umi/errors.hpp"

namespace umi::diff {

namespace {

void require_finite_grads(std::span<Tensor* const> params) {
    for (std::size_t k = 0; k < params.size(); ++k) {
        for (double g : params[k]->grad()) {
            if (!std::isfinite(g)) {
                throw NumericalFailure("non-finite gradient in parameter " + std::to_string(k));
            }
        }
    }
}

}  // namespace

void zero_grad(std::span<Tensor* const> params) {
    for (Tensor* p : params) p->zero_grad();
}

void sgd_step(std::span<Tensor* const> params, double lr) {
    require_finite_grads(params);
    for (Tensor* p : params) {
        if (!p->has_grad()) continue;
        auto v = p->values();
        auto g = p->grad();
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
    }
}

Adam::Adam(std::vector<Tensor*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Tensor* p : params_) {
        m_.emplace_back(p->size(), 0.0);
        v_.emplace_back(p->size(), 0.0);
    }
}

void Adam::step() {
    require_finite_grads(params_);
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Tensor& p = *params_[k];
        if (!p.has_grad()) continue;
        auto val = p.values();
        auto g = p.grad();
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < val.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            val[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace umi::diff
