#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "umi/diff.hpp"

namespace umi::diff {

void zero_grad(std::span<Tensor* const> params);

// Plain momentum-free update: p -= lr * grad.
void sgd_step(std::span<Tensor* const> params, double lr);

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    Adam(std::vector<Tensor*> params, AdamConfig cfg = {});

    void step();
    void zero_grad() { diff::zero_grad(params_); }
    std::size_t steps_taken() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    std::vector<Tensor*> params_;
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    std::size_t t_ = 0;
};

}  // namespace umi::diff
