#pragma once

// Small descriptive statistics shared by the forecaster loss and the
// evaluation metrics. Standard deviations are population (divide by n).

#include <span>
#include <vector>

namespace umi::stats {

double mean(std::span<const double> x);
double pop_std(std::span<const double> x);

// Pearson correlation with population moments. Returns 0 when either side
// is constant.
double pearson(std::span<const double> x, std::span<const double> y);

// Ascending ranks starting at 1; tied values share their average rank.
std::vector<double> average_ranks(std::span<const double> x);

// Pearson correlation of the average ranks.
double rank_correlation(std::span<const double> x, std::span<const double> y);

}  // namespace umi::stats
