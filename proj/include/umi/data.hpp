#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "umi/diff.hpp"

namespace umi::data {

// Canonical feature order of a panel built from OHLCV rows.
inline constexpr std::array<std::string_view, 6> kFeatureNames = {"open", "close", "high",
                                                                  "low",  "vwap",  "volume"};
inline constexpr std::size_t kOpen = 0;
inline constexpr std::size_t kClose = 1;
inline constexpr std::size_t kHigh = 2;
inline constexpr std::size_t kLow = 3;
inline constexpr std::size_t kVwap = 4;
inline constexpr std::size_t kVolume = 5;

// Aligned stock x period panel. Returns are percent; column 0 has no
// predecessor and is held at 0 (masked).
struct MarketPanel {
    std::vector<std::string> stock_ids;
    std::vector<std::string> periods;
    std::size_t feature_dim = 0;
    std::vector<double> features;  // (i * T + t) * D + d
    diff::Tensor prices;           // I x T
    diff::Tensor returns;          // I x T

    std::size_t num_stocks() const { return stock_ids.size(); }
    std::size_t num_periods() const { return periods.size(); }

    double feature(std::size_t i, std::size_t t, std::size_t d) const {
        return features[(i * num_periods() + t) * feature_dim + d];
    }
    double& feature(std::size_t i, std::size_t t, std::size_t d) {
        return features[(i * num_periods() + t) * feature_dim + d];
    }

    // I x D slice of the features at one period.
    diff::Tensor features_at(std::size_t t) const;

    // Throws on inconsistent shapes, non-positive prices or stale returns.
    void validate() const;
};

// Builds a panel from raw parts, deriving returns from prices.
MarketPanel make_panel(std::vector<std::string> stock_ids, std::vector<std::string> periods,
                       std::size_t feature_dim, std::vector<double> features,
                       diff::Tensor prices);

// Percent returns per period; column 0 is masked to 0. Needs T >= 2.
diff::Tensor compute_returns(const diff::Tensor& prices);

struct SynchronismConfig {
    double delta_threshold = 0.5;  // percent
    double hm_ratio = 0.7;

    void validate() const;
    // H_m = ceil(hm_ratio * I)
    long threshold_count(std::size_t stocks) const;
};

enum class SyncClass : int { Up = 0, Down = 1, Neutral = 2 };

struct SynchronismLabel {
    SyncClass cls = SyncClass::Neutral;

    std::size_t index() const { return static_cast<std::size_t>(cls); }
    std::array<double, 3> one_hot() const;
};

std::string_view to_string(SyncClass c);

// Per-stock direction indicators in {-1, 0, 1}.
struct DeltaMatrix {
    std::size_t stocks = 0;
    std::size_t periods = 0;
    std::vector<int> values;

    int operator()(std::size_t i, std::size_t t) const { return values[i * periods + t]; }
    long column_sum(std::size_t t) const;
};

DeltaMatrix compute_deltas(const diff::Tensor& returns, const SynchronismConfig& cfg);
std::vector<SynchronismLabel> compute_synchronism_labels(const DeltaMatrix& deltas,
                                                         const SynchronismConfig& cfg);

// Column names used to read a panel CSV.
struct CsvSchema {
    std::string date = "date";
    std::string stock_id = "stock_id";
    std::string open = "open";
    std::string high = "high";
    std::string low = "low";
    std::string close = "close";
    std::string vwap = "vwap";
    std::string volume = "volume";
};

MarketPanel load_panel(const std::filesystem::path& path, const CsvSchema& schema = {});
MarketPanel read_panel(std::istream& in, const CsvSchema& schema = {});

// Writes date,stock_id,open,high,low,close,vwap,volume rows sorted by
// (stock, date). Requires the canonical six features.
void write_panel(std::ostream& out, const MarketPanel& panel);

// Shortest decimal text that round-trips to the same double.
std::string format_double(double v);

// Features with open/close/high/low/vwap restated as percent deviation from
// the stock's previous close (period 0 uses its own close). Price levels
// wander; these ratios do not, so a scaler fitted on the training split
// still fits later periods. Other features pass through unchanged.
std::vector<double> relative_price_features(const MarketPanel& panel);

// Per-feature z-normalisation fitted on periods [0, fit_end).
struct FeatureScaler {
    std::vector<double> mean;
    std::vector<double> stdev;

    static FeatureScaler fit(const MarketPanel& panel, std::size_t fit_end);
    static FeatureScaler identity(std::size_t feature_dim);
    // Same layout as MarketPanel::features.
    std::vector<double> transform(const MarketPanel& panel) const;
};

// ---------------------------------------------------------------------------
// Synthetic markets

// target price = sum_j beta_j * source_j price + AR(1) noise.
struct CointegrationPlant {
    std::size_t target = 0;
    std::vector<std::size_t> sources;
    std::vector<double> betas;
    double rho = 0.6;
    double noise_scale = 1.0;  // innovation std in price units
};

// Market-wide events at t move every stock by sign * magnitude * beta_i
// percent; a noisy per-stock precursor appears in the volume feature at t-1.
struct SentimentPlant {
    double event_probability = 0.0;
    double event_magnitude = 2.0;     // percent
    double precursor_strength = 0.0;  // in units of the per-stock volume noise
};

struct SyntheticSpec {
    std::size_t stocks = 30;
    std::size_t periods = 400;
    std::size_t feature_dim = 6;
    std::vector<CointegrationPlant> plants;
    SentimentPlant sentiment;
    double volatility = 1.0;  // idiosyncratic daily return std, percent
    // 0 draws Gaussian idiosyncratic returns; a value > 2 draws Student-t with
    // that many degrees of freedom, rescaled to the same std.
    double tail_dof = 0.0;
    // Each stock's idiosyncratic std is volatility * exp(a) with a drawn
    // uniformly from [-volatility_dispersion, volatility_dispersion].
    double volatility_dispersion = 0.0;
    // Std (percent) of an unpredictable return shock shared by every stock.
    double market_volatility = 0.0;
    double start_price = 100.0;
    std::uint64_t seed = 0;

    void validate() const;
};

// Generator output plus the ground truth it planted.
struct SyntheticMarket {
    MarketPanel panel;
    std::vector<int> events;            // per period: +1, -1 or 0
    std::vector<double> event_betas;    // per stock sensitivity to events
    std::vector<std::vector<double>> plant_noise;  // per plant, AR(1) series
};

SyntheticMarket generate_synthetic_market(const SyntheticSpec& spec);
inline MarketPanel generate_synthetic(const SyntheticSpec& spec) {
    return generate_synthetic_market(spec).panel;
}

}  // namespace umi::data
