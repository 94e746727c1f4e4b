#include "umi/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "umi/errors.hpp"
#include "umi/stats.hpp"

namespace umi::eval {

namespace {

std::size_t set_difference_size(const std::vector<std::size_t>& a,
                                 const std::vector<std::size_t>& b) {
    std::size_t n = 0;
    for (std::size_t x : a) n += std::binary_search(b.begin(), b.end(), x) ? 0 : 1;
    return n;
}

std::vector<double> column(const diff::Tensor& m, std::size_t t) {
    std::vector<double> out(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) out[i] = m(i, t);
    return out;
}

// mean / population std, flagged when the spread is zero.
std::pair<double, bool> information_ratio(std::span<const double> series) {
    const double sd = stats::pop_std(series);
    if (sd == 0.0) return {0.0, false};
    return {stats::mean(series) / sd, true};
}

}  // namespace

void PortfolioConfig::validate() const {
    if (!(n_fraction > 0.0 && n_fraction <= 0.5)) {
        throw ConfigError("portfolio n_fraction must lie in (0, 0.5]");
    }
    if (!(cost_rate >= 0.0)) throw ConfigError("cost_rate must be >= 0");
    if (trading_days <= 0) throw ConfigError("trading_days must be > 0");
}

std::size_t PortfolioConfig::portfolio_size(std::size_t stocks) const {
    const auto n = static_cast<std::size_t>(std::floor(n_fraction * static_cast<double>(stocks)));
    return std::max<std::size_t>(1, n);
}

std::vector<std::size_t> rank_by_forecast(std::span<const double> y_hat) {
    std::vector<std::size_t> order(y_hat.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return y_hat[a] > y_hat[b]; });
    return order;
}

Positions select_positions(std::span<const double> y_hat, std::size_t n) {
    if (n == 0 || y_hat.size() < 2 * n) {
        throw UniverseTooSmall("need I >= 2N, have I = " + std::to_string(y_hat.size()) +
                               " and N = " + std::to_string(n));
    }
    const std::vector<std::size_t> order = rank_by_forecast(y_hat);
    Positions p;
    p.longs.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n));
    p.shorts.assign(order.end() - static_cast<std::ptrdiff_t>(n), order.end());
    std::sort(p.longs.begin(), p.longs.end());
    std::sort(p.shorts.begin(), p.shorts.end());
    return p;
}

double book_return(const Positions& pos, std::span<const double> y_true_percent) {
    if (pos.longs.empty() || pos.longs.size() != pos.shorts.size()) {
        throw ShapeError("long and short books must hold N > 0 stocks each");
    }
    double s = 0.0;
    for (std::size_t i : pos.longs) s += y_true_percent[i];
    for (std::size_t i : pos.shorts) s -= y_true_percent[i];
    return s / static_cast<double>(pos.longs.size()) / 100.0;
}

double long_short_return(std::span<const double> y_hat, std::span<const double> y_true_percent,
                         const PortfolioConfig& cfg) {
    if (y_hat.size() != y_true_percent.size()) throw ShapeError("forecast/return length mismatch");
    const Positions p = select_positions(y_hat, cfg.portfolio_size(y_hat.size()));
    return book_return(p, y_true_percent);
}

std::size_t turnover(const Positions* previous, const Positions& current) {
    if (!previous) return current.longs.size() + current.shorts.size();
    return set_difference_size(current.longs, previous->longs) +
           set_difference_size(previous->longs, current.longs) +
           set_difference_size(current.shorts, previous->shorts) +
           set_difference_size(previous->shorts, current.shorts);
}

std::vector<double> apply_costs(std::span<const double> gross, std::span<const Positions> books,
                                const PortfolioConfig& cfg) {
    if (gross.size() != books.size()) throw ShapeError("one book per period required");
    std::vector<double> net(gross.size());
    for (std::size_t t = 0; t < gross.size(); ++t) {
        const std::size_t tc = turnover(t == 0 ? nullptr : &books[t - 1], books[t]);
        const auto n = static_cast<double>(books[t].longs.size());
        net[t] = gross[t] - cfg.cost_rate * static_cast<double>(tc) / n;
    }
    return net;
}

std::vector<double> cumulative_wealth(std::span<const double> returns) {
    std::vector<double> cw(returns.size());
    double w = 1.0;
    for (std::size_t t = 0; t < returns.size(); ++t) {
        w *= 1.0 + returns[t];
        cw[t] = w;
    }
    return cw;
}

RiskReturn ar_av_sr(std::span<const double> returns, const PortfolioConfig& cfg) {
    const double ny = static_cast<double>(cfg.trading_days);
    RiskReturn r;
    r.ar = stats::mean(returns) * ny;
    const auto [lo, hi] = std::minmax_element(returns.begin(), returns.end());
    // A constant series has zero spread; two-pass rounding would otherwise
    // leave a denormal-sized AV and an absurd SR.
    r.av = *lo == *hi ? 0.0 : stats::pop_std(returns) * std::sqrt(ny);
    if (r.av == 0.0) {
        r.sr_defined = false;
    } else {
        r.sr = r.ar / r.av;
    }
    return r;
}

double mdd(std::span<const double> returns) {
    double sum = 0.0, peak = 0.0, worst = 0.0;
    for (std::size_t t = 0; t < returns.size(); ++t) {
        sum += returns[t];
        if (t == 0 || sum > peak) peak = sum;
        worst = std::max(worst, peak - sum);
    }
    return worst;
}

Ratio calmar(double ar, double max_drawdown) {
    if (max_drawdown == 0.0) return {0.0, false};
    return {ar / max_drawdown, true};
}

ForecastMetrics forecast_metrics(const diff::Tensor& y_hat, const diff::Tensor& y_true,
                                 std::size_t first, std::size_t last) {
    if (y_hat.rows() != y_true.rows() || y_hat.cols() != y_true.cols()) {
        throw ShapeError("forecast and truth matrices differ in shape");
    }
    if (first >= last || last > y_hat.cols()) throw ShapeError("empty or out-of-range period span");
    ForecastMetrics m;
    std::vector<double> ics, rank_ics;
    double se = 0.0, ae = 0.0;
    for (std::size_t t = first; t < last; ++t) {
        const std::vector<double> a = column(y_hat, t), b = column(y_true, t);
        for (std::size_t i = 0; i < a.size(); ++i) {
            se += (a[i] - b[i]) * (a[i] - b[i]);
            ae += std::abs(a[i] - b[i]);
        }
        ics.push_back(stats::pearson(a, b));
        rank_ics.push_back(stats::rank_correlation(a, b));
    }
    const double count = static_cast<double>(y_hat.rows() * (last - first));
    m.rmse = std::sqrt(se / count);
    m.mae = ae / count;
    m.ic = stats::mean(ics);
    m.rank_ic = stats::mean(rank_ics);
    std::tie(m.icir, m.icir_defined) = information_ratio(ics);
    std::tie(m.rank_icir, m.rank_icir_defined) = information_ratio(rank_ics);
    return m;
}

BacktestReport backtest(const diff::Tensor& y_hat, const diff::Tensor& y_true, std::size_t first,
                        std::size_t last, const PortfolioConfig& cfg) {
    cfg.validate();
    BacktestReport rep;
    rep.forecast = forecast_metrics(y_hat, y_true, first, last);
    const std::size_t n = cfg.portfolio_size(y_hat.rows());
    std::vector<Positions> books;
    for (std::size_t t = first; t < last; ++t) {
        const std::vector<double> a = column(y_hat, t), b = column(y_true, t);
        books.push_back(select_positions(a, n));
        rep.gross.push_back(book_return(books.back(), b));
        rep.turnover.push_back(turnover(books.size() > 1 ? &books[books.size() - 2] : nullptr,
                                        books.back()));
    }
    rep.net = apply_costs(rep.gross, books, cfg);
    rep.wealth = cumulative_wealth(cfg.gross_wealth ? rep.gross : rep.net);
    rep.risk = ar_av_sr(rep.net, cfg);
    rep.max_drawdown = mdd(rep.net);
    rep.calmar = calmar(rep.risk.ar, rep.max_drawdown);
    return rep;
}

}  // namespace umi::eval
