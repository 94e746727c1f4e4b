#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>

#include "umi/data.hpp"
#include "umi/errors.hpp"
#include "umi/rng.hpp"

namespace umi::data {

namespace {

// Business days from 2000-01-03 as ISO-8601 dates.
std::vector<std::string> business_days(std::size_t count) {
    using namespace std::chrono;
    std::vector<std::string> out;
    out.reserve(count);
    sys_days day = sys_days{year{2000} / January / 3};
    while (out.size() < count) {
        const weekday wd{day};
        if (wd != Saturday && wd != Sunday) {
            const year_month_day ymd{day};
            char buf[16];
            std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                          static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
            out.emplace_back(buf);
        }
        day += days{1};
    }
    return out;
}

}  // namespace

void SyntheticSpec::validate() const {
    if (stocks < 2) throw BadSpec("need at least 2 stocks");
    if (periods < 2) throw BadSpec("need at least 2 periods");
    if (feature_dim < 6) throw BadSpec("feature_dim must be >= 6 (OHLC, vwap, volume)");
    if (!(volatility >= 0.0)) throw BadSpec("volatility must be >= 0");
    if (!(start_price > 0.0)) throw BadSpec("start_price must be > 0");
    if (!(volatility_dispersion >= 0.0)) throw BadSpec("volatility_dispersion must be >= 0");
    if (!(market_volatility >= 0.0)) throw BadSpec("market_volatility must be >= 0");
    if (!(tail_dof == 0.0 || tail_dof > 2.0)) throw BadSpec("tail_dof must be 0 or > 2");
    const auto& s = sentiment;
    if (!(s.event_probability >= 0.0 && s.event_probability <= 1.0)) {
        throw BadSpec("event_probability must lie in [0, 1]");
    }
    if (!(s.event_magnitude >= 0.0)) throw BadSpec("event_magnitude must be >= 0");
    if (!(s.precursor_strength >= 0.0)) throw BadSpec("precursor_strength must be >= 0");

    std::set<std::size_t> targets;
    for (const auto& p : plants) {
        if (p.target >= stocks) throw BadSpec("plant target out of range");
        if (!targets.insert(p.target).second) throw BadSpec("stock planted as target twice");
    }
    for (const auto& p : plants) {
        if (!(std::abs(p.rho) < 1.0)) {
            throw BadSpec("plant on stock " + std::to_string(p.target) +
                          " has unstable rho " + std::to_string(p.rho));
        }
        if (!(p.noise_scale >= 0.0)) throw BadSpec("plant noise_scale must be >= 0");
        if (p.sources.empty() || p.sources.size() != p.betas.size()) {
            throw BadSpec("plant needs matching sources and betas");
        }
        for (std::size_t s : p.sources) {
            if (s >= stocks || s == p.target) throw BadSpec("plant source out of range");
            if (targets.count(s)) throw BadSpec("plant source is itself a planted target");
        }
    }
}

SyntheticMarket generate_synthetic_market(const SyntheticSpec& spec) {
    spec.validate();
    const std::size_t n = spec.stocks, T = spec.periods, D = spec.feature_dim;
    const auto& sent = spec.sentiment;

    Rng rng_events = make_rng(spec.seed, "synthetic/events");
    Rng rng_prices = make_rng(spec.seed, "synthetic/prices");
    Rng rng_plants = make_rng(spec.seed, "synthetic/plants");
    Rng rng_features = make_rng(spec.seed, "synthetic/features");
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const bool heavy = spec.tail_dof > 0.0;
    std::student_t_distribution<double> student(heavy ? spec.tail_dof : 3.0);
    const double t_scale = heavy ? std::sqrt((spec.tail_dof - 2.0) / spec.tail_dof) : 1.0;
    auto innovation = [&](Rng& rng) { return heavy ? t_scale * student(rng) : normal(rng); };

    SyntheticMarket out;
    out.event_betas.resize(n);
    std::vector<double> start(n), volume_level(n);
    for (std::size_t i = 0; i < n; ++i) {
        out.event_betas[i] = 0.5 + unif(rng_prices);
        start[i] = spec.start_price * (0.6 + 0.8 * unif(rng_prices));
        // Liquidity tracks event sensitivity, which makes the latter observable.
        volume_level[i] = 1e6 * out.event_betas[i];
    }

    out.events.assign(T, 0);
    for (std::size_t t = 1; t < T; ++t) {
        if (unif(rng_events) < sent.event_probability) {
            out.events[t] = unif(rng_events) < 0.5 ? 1 : -1;
        }
    }

    Rng rng_common = make_rng(spec.seed, "synthetic/common");
    std::vector<double> common(T, 0.0), stock_vol(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double a = spec.volatility_dispersion * (2.0 * unif(rng_common) - 1.0);
        stock_vol[i] = spec.volatility * std::exp(a);
    }
    for (std::size_t t = 1; t < T; ++t) common[t] = spec.market_volatility * normal(rng_common);

    diff::Tensor prices(n, T);
    std::vector<bool> is_target(n, false);
    for (const auto& p : spec.plants) is_target[p.target] = true;
    for (std::size_t i = 0; i < n; ++i) {
        prices(i, 0) = start[i];
        for (std::size_t t = 1; t < T; ++t) {
            const double r = stock_vol[i] * innovation(rng_prices) + common[t] +
                             out.events[t] * sent.event_magnitude * out.event_betas[i];
            prices(i, t) = prices(i, t - 1) * (1.0 + r / 100.0);
        }
    }

    for (const auto& p : spec.plants) {
        std::vector<double> noise(T);
        noise[0] = p.noise_scale / std::sqrt(1.0 - p.rho * p.rho) * normal(rng_plants);
        for (std::size_t t = 1; t < T; ++t) {
            noise[t] = p.rho * noise[t - 1] + p.noise_scale * normal(rng_plants);
        }
        for (std::size_t t = 0; t < T; ++t) {
            double v = noise[t];
            for (std::size_t k = 0; k < p.sources.size(); ++k) {
                v += p.betas[k] * prices(p.sources[k], t);
            }
            if (!(v > 0.0)) {
                throw BadSpec("plant on stock " + std::to_string(p.target) +
                              " produced a non-positive price at period " + std::to_string(t));
            }
            prices(p.target, t) = v;
        }
        out.plant_noise.push_back(std::move(noise));
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < T; ++t) {
            if (!(prices(i, t) > 0.0)) {
                throw BadSpec("stock " + std::to_string(i) + " price went non-positive; " +
                              "lower volatility or event magnitude");
            }
        }
    }

    const double wiggle = 0.3 * spec.volatility / 100.0;
    std::vector<double> features(n * T * D);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < T; ++t) {
            double* f = &features[(i * T + t) * D];
            const double close = prices(i, t);
            const double prev = t == 0 ? close : prices(i, t - 1);
            const double open = prev * (1.0 + wiggle * normal(rng_features));
            const double high = std::max(open, close) * (1.0 + wiggle * std::abs(normal(rng_features)));
            const double low = std::min(open, close) * (1.0 - wiggle * std::abs(normal(rng_features)));
            const int next_event = t + 1 < T ? out.events[t + 1] : 0;
            const double signal = normal(rng_features) + sent.precursor_strength * next_event;
            f[kOpen] = open;
            f[kClose] = close;
            f[kHigh] = high;
            f[kLow] = low;
            f[kVwap] = (high + low + close) / 3.0;
            f[kVolume] = volume_level[i] * std::exp(0.25 * signal);
            for (std::size_t d = 6; d < D; ++d) f[d] = normal(rng_features);
        }
    }

    std::vector<std::string> ids(n);
    const int width = n > 1 ? static_cast<int>(std::to_string(n - 1).size()) : 1;
    for (std::size_t i = 0; i < n; ++i) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "S%0*zu", width, i);
        ids[i] = buf;
    }
    out.panel = make_panel(std::move(ids), business_days(T), D, std::move(features),
                           std::move(prices));
    return out;
}

}  // namespace umi::data
