#include "umi/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "umi/errors.hpp"

namespace umi::diff {

namespace {

double evaluate(const Objective& f) {
    Tape tape;
    const double v = f(tape).item();
    if (!std::isfinite(v)) throw NumericalFailure("objective is not finite");
    return v;
}

}  // namespace

GradCheckResult gradient_check_detailed(const Objective& f, std::span<Tensor* const> params,
                                        double eps) {
    for (Tensor* p : params) p->zero_grad();
    std::vector<std::vector<double>> analytic;
    {
        Tape tape;
        Var loss = f(tape);
        if (!std::isfinite(loss.item())) throw NumericalFailure("objective is not finite");
        tape.backward(loss);
        for (Tensor* p : params) {
            const auto g = p->grad();
            analytic.emplace_back(g.begin(), g.end());
        }
    }

    GradCheckResult res;
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto vals = params[k]->values();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double orig = vals[i];
            vals[i] = orig + eps;
            const double up = evaluate(f);
            vals[i] = orig - eps;
            const double down = evaluate(f);
            vals[i] = orig;

            const double numeric = (up - down) / (2.0 * eps);
            const double a = analytic[k][i];
            if (!std::isfinite(a)) {
                throw NumericalFailure("non-finite analytic gradient at parameter " +
                                       std::to_string(k));
            }
            const double err = std::abs(a - numeric) / std::max(1.0, std::abs(numeric));
            ++res.entries;
            if (err > res.max_rel_error) {
                res.max_rel_error = err;
                res.worst_param = k;
                res.worst_index = i;
            }
        }
        params[k]->clear_grad();
    }
    return res;
}

}  // namespace umi::diff
