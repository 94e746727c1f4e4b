#pragma once

// Long-short backtest with turnover costs plus the forecast and investment
// metric suite. Panel returns arrive in percent; strategy returns, wealth and
// the risk metrics are in fractions.

#include <cstddef>
#include <span>
#include <vector>

#include "umi/diff.hpp"

namespace umi::eval {

struct PortfolioConfig {
    double n_fraction = 0.10;
    double cost_rate = 0.001;  // fraction of capital per transacted stock
    int trading_days = 252;
    bool gross_wealth = false;  // wealth from gross instead of net returns

    void validate() const;
    // N = max(1, floor(n_fraction * I)).
    std::size_t portfolio_size(std::size_t stocks) const;
};

struct Positions {
    std::vector<std::size_t> longs;   // ascending stock indices
    std::vector<std::size_t> shorts;  // ascending stock indices
};

// Stocks ordered by forecast, highest first; equal forecasts keep index order.
std::vector<std::size_t> rank_by_forecast(std::span<const double> y_hat);

// Top-N long and bottom-N short book for one period.
Positions select_positions(std::span<const double> y_hat, std::size_t n);

// Equal-weight long-short return as a fraction: (sum top - sum bottom) / N / 100.
double long_short_return(std::span<const double> y_hat, std::span<const double> y_true_percent,
                         const PortfolioConfig& cfg);
double book_return(const Positions& pos, std::span<const double> y_true_percent);

// Opens plus closes over both books; a null previous book counts every
// position as opened.
std::size_t turnover(const Positions* previous, const Positions& current);

// R_t = y_STR_t - cost_rate * TC_t / N.
std::vector<double> apply_costs(std::span<const double> gross, std::span<const Positions> books,
                                const PortfolioConfig& cfg);

std::vector<double> cumulative_wealth(std::span<const double> returns);

struct RiskReturn {
    double ar = 0.0;
    double av = 0.0;
    double sr = 0.0;
    bool sr_defined = true;  // false when AV = 0; sr is then reported as 0
};

RiskReturn ar_av_sr(std::span<const double> returns, const PortfolioConfig& cfg);

// Largest fall of the running sum of returns from an earlier running-sum peak.
double mdd(std::span<const double> returns);

struct Ratio {
    double value = 0.0;
    bool defined = true;
};

Ratio calmar(double ar, double max_drawdown);

struct ForecastMetrics {
    double rmse = 0.0;
    double mae = 0.0;
    double ic = 0.0;
    double icir = 0.0;
    double rank_ic = 0.0;
    double rank_icir = 0.0;
    bool icir_defined = true;
    bool rank_icir_defined = true;
};

// Metrics over periods [first, last) of I x T forecast and truth matrices.
// IC_t is the Pearson correlation of forecasts and returns, RankIC_t that of
// their average ranks; ICIR = mean / population std over periods.
ForecastMetrics forecast_metrics(const diff::Tensor& y_hat, const diff::Tensor& y_true,
                                 std::size_t first, std::size_t last);

struct BacktestReport {
    std::vector<double> gross;  // y_STR per period
    std::vector<double> net;    // R per period
    std::vector<double> wealth;
    std::vector<std::size_t> turnover;
    RiskReturn risk;
    double max_drawdown = 0.0;
    Ratio calmar;
    ForecastMetrics forecast;
};

BacktestReport backtest(const diff::Tensor& y_hat, const diff::Tensor& y_true, std::size_t first,
                        std::size_t last, const PortfolioConfig& cfg);

}  // namespace umi::eval
