#pragma once

// End-to-end run: load or synthesize a panel, train the stock factor, the
// market encoder and the forecaster in that order (each frozen before the
// next starts), backtest the test split and write the run directory.

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "umi/config.hpp"
#include "umi/data.hpp"
#include "umi/evaluation.hpp"
#include "umi/forecaster.hpp"
#include "umi/marketfactor.hpp"
#include "umi/stockfactor.hpp"

namespace umi::pipeline {

// A library error tagged with the stage it escaped from.
class StageFailure : public std::runtime_error {
public:
    StageFailure(std::string stage, std::string kind, const std::string& message)
        : std::runtime_error("[" + stage + "] " + message),
          stage_(std::move(stage)),
          kind_(std::move(kind)) {}

    const std::string& stage() const noexcept { return stage_; }
    const std::string& kind() const noexcept { return kind_; }

private:
    std::string stage_;
    std::string kind_;
};

struct Split {
    std::size_t train_end = 0;
    std::size_t test_start = 0;
    std::size_t test_end = 0;
};

// Bounds are period indices, fractions of T (e.g. 0.8) or ISO dates.
Split resolve_split(const config::RunConfig& cfg, const data::MarketPanel& panel);

data::MarketPanel load_data(const config::RunConfig& cfg);

struct FrozenModels {
    data::FeatureScaler features;
    stock::CointegrationParams stock;
    forecast::RowScaler u_scaler;
    market::MarketEncoderParams market;
    forecast::ColumnScaler m_scaler;
    forecast::ForecasterParams forecaster;
};

// Everything downstream of the raw panel under frozen upstream models.
struct DerivedSeries {
    data::MarketPanel panel;           // normalised features, raw prices/returns
    stock::StockFactorSeries factors;  // u and virtual price in price-scaling units
    diff::Tensor u;                    // per-stock normalised u
    diff::Tensor m_raw;                // T x 2D; rows before first_valid are zero
    diff::Tensor m;                    // column-normalised m_raw
    std::vector<diff::Tensor> repr;
    std::size_t first_valid = 0;

    forecast::ForecastInputs inputs() const;
};

DerivedSeries derive_series(const data::MarketPanel& raw, const FrozenModels& models,
                            const config::RunConfig& cfg);

// Forecaster settings after ablation, with the stage seed filled in.
forecast::ForecasterConfig forecaster_config(const config::RunConfig& cfg);

struct UpstreamResult {
    FrozenModels models;  // forecaster left empty
    DerivedSeries series;
    double stock_initial_loss = 0.0;
    double stock_final_loss = 0.0;
    double market_initial_loss = 0.0;
    double market_final_loss = 0.0;
};

// Steps 1 and 2: stock factor, then market encoder, on the training split.
UpstreamResult train_upstream(const config::RunConfig& cfg, const data::MarketPanel& raw,
                              const Split& split);

// Forecasts for [first, last) of a raw panel with every model frozen.
forecast::Prediction predict_frozen(const data::MarketPanel& raw, const FrozenModels& models,
                                    const config::RunConfig& cfg, std::size_t first,
                                    std::size_t last);

struct RunResult {
    config::RunConfig config;
    Split split;
    data::MarketPanel raw;
    FrozenModels models;
    DerivedSeries series;
    forecast::Prediction prediction;
    eval::BacktestReport report;
    std::vector<std::string> resumed;  // stages restored from checkpoints
};

// Whole pipeline in memory; writes nothing.
RunResult run(const config::RunConfig& cfg);

// Whole pipeline writing the run directory. With resume, stages whose
// checkpoint exists (and matches the config hash) are loaded, not trained.
RunResult run_to_directory(const config::RunConfig& cfg, const std::filesystem::path& out,
                           bool resume);

// Writes <out>/panel.csv for the configured synthetic market.
std::filesystem::path write_synthetic(const config::RunConfig& cfg,
                                      const std::filesystem::path& out);

// "# config_hash=<hex> seed=<n>"
std::string stamp(const config::RunConfig& cfg);

// Fixed 4-decimal text; negative zero prints as 0.
std::string format_metric(double v);

std::string format_report(const config::RunConfig& cfg, const RunResult& run);

// Recomputes the metrics from <dir>/predictions.csv (and the portfolio
// settings in <dir>/config.txt when present).
eval::BacktestReport report_from_directory(const std::filesystem::path& dir);

// The 11-metric block printed by `report`.
std::string format_metric_table(const eval::BacktestReport& report);

}  // namespace umi::pipeline
