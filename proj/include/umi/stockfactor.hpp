#pragma once

// Stock-level irrationality factor: each stock's price is regressed on an
// attention-weighted mix of the other stocks' scaled prices (a "virtual
// rational price"); the residual u = p_tilde - p is the factor. Training
// minimises the regression error plus an AR(1) stationarity penalty on u.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "umi/data.hpp"
#include "umi/diff.hpp"

namespace umi::stock {

struct CointegrationParams {
    diff::Tensor beta;     // I x I scale of each candidate price; diagonal unused
    diff::Tensor logits;   // I x I attention logits; diagonal unused
    diff::Tensor rho_raw;  // I x 1, rho_i = tanh(rho_raw_i) so |rho_i| < 1

    // beta = 1, logits = 0, rho_raw = 0.
    static CointegrationParams initial(std::size_t stocks);

    std::size_t stocks() const { return beta.rows(); }
    double rho(std::size_t i) const;
    std::vector<diff::Tensor*> tensors() { return {&beta, &logits, &rho_raw}; }
};

struct StockFactorSeries {
    diff::Tensor u;              // I x T
    diff::Tensor virtual_price;  // I x T
};

struct CointegrationVars {
    diff::Var beta;
    diff::Var logits;
    diff::Var rho_raw;
};

CointegrationVars bind(diff::Tape& tape, CointegrationParams& params);

// Row softmax of the logits over j != i; the diagonal is exactly zero.
diff::Var attention(diff::Tape& tape, diff::Var logits);
diff::Var virtual_price(diff::Tape& tape, const CointegrationVars& v, diff::Var prices);
diff::Var loss_beta(diff::Tape& tape, const CointegrationVars& v, diff::Var prices);
// Mean over t = 1..T-1 of (u_t - rho u_{t-1})^2.
diff::Var loss_rho(diff::Tape& tape, diff::Var u, diff::Var rho_raw);
diff::Var loss_s(diff::Tape& tape, const CointegrationVars& v, diff::Var prices, double lambda1);

diff::Tensor attention_weights(const CointegrationParams& params);
diff::Tensor virtual_price(const diff::Tensor& prices, const CointegrationParams& params);
StockFactorSeries residual(const diff::Tensor& prices, const CointegrationParams& params);
double loss_beta(const diff::Tensor& prices, const CointegrationParams& params);
double loss_rho(const diff::Tensor& u, const CointegrationParams& params);
double loss_s(const diff::Tensor& prices, const CointegrationParams& params, double lambda1);

enum class PriceScaling { Raw, FirstPrice };

// Price matrix fed to the factor model. FirstPrice divides each stock by its
// first price so all series start at 1.
diff::Tensor prepare_prices(const data::MarketPanel& panel, PriceScaling scaling);

struct StockTrainConfig {
    double lambda1 = 0.5;
    double lr = 0.02;
    std::size_t steps = 2000;
    std::uint64_t seed = 0;
};

struct StockTrainResult {
    CointegrationParams params;
    StockFactorSeries factors;  // on the training prices
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

// Adam on L_S from the fixed initialisation. Only the given prices are seen.
StockTrainResult train_stock_factors(const diff::Tensor& train_prices,
                                     const StockTrainConfig& cfg);

struct Ar1Fit {
    double rho = 0.0;
    bool degenerate = false;
};

// Least-squares AR(1) slope without intercept: sum u_t u_{t-1} / sum u_{t-1}^2.
Ar1Fit stationarity_diagnostic(std::span<const double> series);

}  // namespace umi::stock
