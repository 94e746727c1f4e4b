#pragma once

// Return forecaster. Each stock's last L inputs g = features || u go through
// a small Transformer encoder; the final-position encoding c is mixed across
// stocks by a relation attention keyed on the market encoder's r_{t-1}, and an
// MLP head maps c || d || m_{t-1} to a next-period return. Training minimises
// MSE plus lambda3 times the negative mean cross-sectional IC against ranks.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "umi/data.hpp"
#include "umi/diff.hpp"

namespace umi::forecast {

enum class Ablation { None, NS, NM, NR, ND };

Ablation parse_ablation(std::string_view name);
std::string_view to_string(Ablation a);

struct ForecasterConfig {
    std::size_t window = 20;
    std::size_t width = 64;
    std::size_t heads = 4;
    std::size_t blocks = 2;
    std::size_t ffn = 0;          // 0 means 2 * width
    std::size_t head_hidden = 0;  // 0 means width
    bool use_stock_factor = true;
    bool use_market_factor = true;
    bool use_relation = true;
    double lambda3 = 0.1;
    double lr = 1e-3;
    std::size_t max_epochs = 100;
    std::size_t patience = 10;
    std::size_t batch_periods = 8;
    double validation_fraction = 0.15;
    std::uint64_t seed = 0;

    void validate() const;
    std::size_t ffn_dim() const { return ffn == 0 ? 2 * width : ffn; }
    std::size_t head_dim() const { return head_hidden == 0 ? width : head_hidden; }
};

// NS drops u, NM zeroes m, NR sets lambda3 = 0, ND drops the relation module.
ForecasterConfig apply_ablation(ForecasterConfig cfg, Ablation a);

struct EncoderBlock {
    diff::Tensor wq, wk, wv, wo;  // width x width
    diff::Tensor ln1_gain, ln1_bias;
    diff::Tensor ff_w1, ff_b1;  // width x ffn, 1 x ffn
    diff::Tensor ff_w2, ff_b2;  // ffn x width, 1 x width
    diff::Tensor ln2_gain, ln2_bias;
};

struct ForecasterParams {
    diff::Tensor w_in, b_in;  // input_dim x width, 1 x width
    std::vector<EncoderBlock> blocks;
    diff::Tensor pc;  // width x 2D
    diff::Tensor wy;  // 2D x 2D
    diff::Tensor head_w1, head_b1;  // head_in x H, 1 x H
    diff::Tensor head_w2, head_b2;  // H x 1, 1 x 1
    std::size_t heads = 1;

    static ForecasterParams initial(const ForecasterConfig& cfg, std::size_t input_dim,
                                    std::size_t repr_dim, std::uint64_t seed);

    std::size_t input_dim() const { return w_in.rows(); }
    std::size_t width() const { return w_in.cols(); }
    std::size_t repr_dim() const { return wy.rows(); }
    std::vector<diff::Tensor*> tensors();
};

// Everything the forecaster reads, aligned on the panel's periods. Features
// and u are expected to be normalised already.
struct ForecastInputs {
    const data::MarketPanel* panel = nullptr;
    const diff::Tensor* u = nullptr;                     // I x T, or null when unused
    const diff::Tensor* market = nullptr;                // T x 2D full-market m_t
    const std::vector<diff::Tensor>* repr = nullptr;     // T matrices of I x 2D r_t
    std::size_t market_first_valid = 0;                  // first t with m_t, r_t defined

    void validate() const;
    std::size_t stocks() const { return panel->num_stocks(); }
    std::size_t periods() const { return panel->num_periods(); }
    std::size_t repr_dim() const { return market->cols(); }
    // Smallest t that can be predicted with window L.
    std::size_t first_period(std::size_t window) const;
};

// Stacked (I * L) x (D [+ 1]) inputs for predicting period t: row i * L + l is
// g_{t-L+l} of stock i. Needs L <= t <= T.
diff::Tensor build_inputs(const data::MarketPanel& panel, const diff::Tensor* u, std::size_t t,
                          std::size_t window);

// Sinusoidal position codes, L x width.
diff::Tensor positional_encoding(std::size_t window, std::size_t width);

struct ForecasterVars {
    diff::Var w_in, b_in;
    struct Block {
        diff::Var wq, wk, wv, wo, ln1_gain, ln1_bias, ff_w1, ff_b1, ff_w2, ff_b2, ln2_gain,
            ln2_bias;
    };
    std::vector<Block> blocks;
    diff::Var pc, wy, head_w1, head_b1, head_w2, head_b2;
    std::size_t heads = 1;
};

ForecasterVars bind(diff::Tape& tape, ForecasterParams& params);
ForecasterVars bind_constant(diff::Tape& tape, const ForecasterParams& params);

// I x width encodings at the final window position.
diff::Var temporal_encode(diff::Tape& tape, const ForecasterVars& v, const diff::Tensor& inputs,
                          std::size_t stocks, std::size_t window);

// d = softmax_row((W_Y h)(W_Y h)^T) c with h = c P_c + r, self included.
diff::Var relation_attention(diff::Tape& tape, const ForecasterVars& v, diff::Var c, diff::Var r);
// Row-stochastic I x I attention matrix of the relation module.
diff::Var relation_weights(diff::Tape& tape, const ForecasterVars& v, diff::Var c, diff::Var r);

// I x 1 forecasts from c, optional d and the 1 x 2D market vector.
diff::Var predict_head(diff::Tape& tape, const ForecasterVars& v, diff::Var c,
                       std::optional<diff::Var> d, diff::Var m);

// Full forward pass for period t; I x 1.
diff::Var forward(diff::Tape& tape, const ForecasterVars& v, const ForecastInputs& in,
                  const ForecasterConfig& cfg, std::size_t t);

// Differentiable Pearson correlation of the I x 1 forecasts with fixed ranks.
// A constant forecast gives 0.
diff::Var ic_t(diff::Tape& tape, diff::Var y_hat, std::span<const double> ranks);
double ic_t(std::span<const double> y_hat, std::span<const double> ranks);

// MSE + lambda3 * (-mean IC_t) over periods. Each entry of y_hats is I x 1.
diff::Var loss_total(diff::Tape& tape, std::span<const diff::Var> y_hats,
                     std::span<const std::vector<double>> y_true, double lambda3);

struct Prediction {
    diff::Tensor y_hat;  // I x T percent forecasts; columns before `first` are zero
    std::size_t first = 0;
};

// Forecasts for every period in [first, last).
Prediction predict_range(const ForecasterParams& params, const ForecastInputs& in,
                         const ForecasterConfig& cfg, std::size_t first, std::size_t last);

struct ForecastTrainResult {
    ForecasterParams params;
    Prediction prediction;  // all periods from the first usable one to T
    std::size_t first_period = 0;
    std::size_t validation_start = 0;
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;
    double best_validation_rank_ic = 0.0;
};

// Trains on periods [first, train_end); the last validation_fraction of them
// drive early stopping on mean RankIC. Targets are panel.returns.
ForecastTrainResult train_forecaster(const ForecastInputs& in, std::size_t train_end,
                                     const ForecasterConfig& cfg);

// Per-stock z-normalisation of a factor series fitted on [0, fit_end).
struct RowScaler {
    std::vector<double> mean;
    std::vector<double> stdev;

    static RowScaler fit(const diff::Tensor& x, std::size_t fit_end);
    diff::Tensor transform(const diff::Tensor& x) const;
};

// Per-column z-normalisation of a period-major series (rows are periods)
// fitted on rows [begin, end).
struct ColumnScaler {
    std::vector<double> mean;
    std::vector<double> stdev;

    static ColumnScaler fit(const diff::Tensor& x, std::size_t begin, std::size_t end);
    diff::Tensor transform(const diff::Tensor& x) const;
};

}  // namespace umi::forecast
