#pragma once

// Deliberately naive reference implementations. None of them share code with
// the library: ranks are counted pairwise, drawdown is a double loop, moments
// are summed directly.

#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

inline double mean(const std::vector<double>& x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

inline double pop_std(const std::vector<double>& x) {
    const double mu = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - mu) * (v - mu);
    return std::sqrt(s / static_cast<double>(x.size()));
}

// Two-pass Pearson; 0 when either side has no spread.
inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double ma = mean(a), mb = mean(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

// 1-based average ranks by counting: rank = 1 + #smaller + (#equal - 1) / 2.
inline std::vector<double> ranks(const std::vector<double>& x) {
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        double less = 0.0, equal = 0.0;
        for (double v : x) {
            if (v < x[i]) less += 1.0;
            if (v == x[i]) equal += 1.0;
        }
        r[i] = 1.0 + less + (equal - 1.0) / 2.0;
    }
    return r;
}

inline double rank_ic(const std::vector<double>& a, const std::vector<double>& b) {
    return pearson(ranks(a), ranks(b));
}

// Largest S_tau - S_t over tau <= t, running sums S from the first return.
inline double mdd(const std::vector<double>& r) {
    std::vector<double> s(r.size());
    double acc = 0.0;
    for (std::size_t t = 0; t < r.size(); ++t) s[t] = acc += r[t];
    double worst = 0.0;
    for (std::size_t t = 0; t < s.size(); ++t)
        for (std::size_t tau = 0; tau <= t; ++tau) worst = std::max(worst, s[tau] - s[t]);
    return worst;
}

}  // namespace oracle
