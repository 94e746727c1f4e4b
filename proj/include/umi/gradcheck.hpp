#pragma once

#include <functional>
#include <span>

#include "umi/diff.hpp"

namespace umi::diff {

// Builds a scalar objective on the given tape from the current parameter values.
using Objective = std::function<Var(Tape&)>;

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_param = 0;
    std::size_t worst_index = 0;
    std::size_t entries = 0;
};

// Compares tape gradients against central differences. The error of one
// entry is |analytic - numeric| / max(1, |numeric|); the maximum is returned.
// Parameter values are restored and their grads cleared on return.
GradCheckResult gradient_check_detailed(const Objective& f, std::span<Tensor* const> params,
                                        double eps = 1e-5);

inline double gradient_check(const Objective& f, std::span<Tensor* const> params,
                             double eps = 1e-5) {
    return gradient_check_detailed(f, params, eps).max_rel_error;
}

}  // namespace umi::diff
