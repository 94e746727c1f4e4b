#include "umi/stockfactor.hpp"

#include <cmath>
#include <limits>

#include "umi/errors.hpp"
#include "umi/optim.hpp"

namespace umi::stock {

using diff::Tape;
using diff::Tensor;
using diff::Var;

CointegrationParams CointegrationParams::initial(std::size_t stocks) {
    if (stocks < 2) throw TooFewStocks("cointegration attention needs I >= 2");
    return {Tensor(stocks, stocks, 1.0), Tensor(stocks, stocks, 0.0), Tensor(stocks, 1, 0.0)};
}

double CointegrationParams::rho(std::size_t i) const { return std::tanh(rho_raw(i, 0)); }

CointegrationVars bind(Tape& tape, CointegrationParams& params) {
    return {tape.param(params.beta), tape.param(params.logits), tape.param(params.rho_raw)};
}

Var attention(Tape& tape, Var logits) {
    const std::size_t n = logits.rows();
    if (n < 2) throw TooFewStocks("cointegration attention needs I >= 2");
    Tensor mask(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) mask(i, i) = -std::numeric_limits<double>::infinity();
    return tape.softmax_row(logits + tape.constant(std::move(mask)));
}

Var virtual_price(Tape& tape, const CointegrationVars& v, Var prices) {
    if (prices.rows() != v.beta.rows()) {
        throw ShapeError("prices have " + std::to_string(prices.rows()) + " stocks, params " +
                         std::to_string(v.beta.rows()));
    }
    return tape.matmul(attention(tape, v.logits) * v.beta, prices);
}

Var loss_beta(Tape& tape, const CointegrationVars& v, Var prices) {
    Var diff = prices - virtual_price(tape, v, prices);
    return tape.mean(diff * diff);
}

Var loss_rho(Tape& tape, Var u, Var rho_raw) {
    const std::size_t T = u.cols();
    if (T < 2) throw TooShort("stationarity penalty needs T >= 2");
    Var now = tape.slice(u, 0, u.rows(), 1, T);
    Var prev = tape.slice(u, 0, u.rows(), 0, T - 1);
    Var e = now - tape.tanh(rho_raw) * prev;
    return tape.mean(e * e);
}

Var loss_s(Tape& tape, const CointegrationVars& v, Var prices, double lambda1) {
    Var pt = virtual_price(tape, v, prices);
    Var err = prices - pt;
    Var lb = tape.mean(err * err);
    if (lambda1 == 0.0) return lb;
    return lb + lambda1 * loss_rho(tape, pt - prices, v.rho_raw);
}

Tensor attention_weights(const CointegrationParams& params) {
    Tape tape;
    return attention(tape, tape.constant(params.logits)).to_tensor();
}

namespace {

CointegrationVars constants(Tape& tape, const CointegrationParams& p) {
    return {tape.constant(p.beta), tape.constant(p.logits), tape.constant(p.rho_raw)};
}

}  // namespace

Tensor virtual_price(const Tensor& prices, const CointegrationParams& params) {
    Tape tape;
    return virtual_price(tape, constants(tape, params), tape.constant(prices)).to_tensor();
}

StockFactorSeries residual(const Tensor& prices, const CointegrationParams& params) {
    StockFactorSeries s;
    s.virtual_price = virtual_price(prices, params);
    s.u = Tensor(prices.rows(), prices.cols());
    for (std::size_t k = 0; k < prices.size(); ++k) {
        s.u.values()[k] = s.virtual_price.values()[k] - prices.values()[k];
    }
    return s;
}

double loss_beta(const Tensor& prices, const CointegrationParams& params) {
    Tape tape;
    return loss_beta(tape, constants(tape, params), tape.constant(prices)).item();
}

double loss_rho(const Tensor& u, const CointegrationParams& params) {
    Tape tape;
    return loss_rho(tape, tape.constant(u), tape.constant(params.rho_raw)).item();
}

double loss_s(const Tensor& prices, const CointegrationParams& params, double lambda1) {
    Tape tape;
    return loss_s(tape, constants(tape, params), tape.constant(prices), lambda1).item();
}

Tensor prepare_prices(const data::MarketPanel& panel, PriceScaling scaling) {
    Tensor p = panel.prices;
    if (scaling == PriceScaling::FirstPrice) {
        for (std::size_t i = 0; i < p.rows(); ++i) {
            const double base = panel.prices(i, 0);
            for (std::size_t t = 0; t < p.cols(); ++t) p(i, t) /= base;
        }
    }
    return p;
}

StockTrainResult train_stock_factors(const Tensor& train_prices, const StockTrainConfig& cfg) {
    if (cfg.lambda1 < 0.0) throw ConfigError("lambda1 must be >= 0");
    StockTrainResult res{CointegrationParams::initial(train_prices.rows()), {}, 0.0, 0.0};
    diff::Adam opt(res.params.tensors(), {.lr = cfg.lr});

    for (std::size_t step = 0; step <= cfg.steps; ++step) {
        Tape tape;
        Var loss = loss_s(tape, bind(tape, res.params), tape.constant(train_prices), cfg.lambda1);
        const double value = loss.item();
        if (!std::isfinite(value)) {
            throw NumericalFailure("L_S diverged at step " + std::to_string(step));
        }
        if (step == 0) res.initial_loss = value;
        res.final_loss = value;
        if (step == cfg.steps) break;
        opt.zero_grad();
        tape.backward(loss);
        opt.step();
    }
    res.factors = residual(train_prices, res.params);
    return res;
}

Ar1Fit stationarity_diagnostic(std::span<const double> series) {
    if (series.size() < 10) {
        throw TooShort("AR(1) diagnostic needs >= 10 points, got " + std::to_string(series.size()));
    }
    double num = 0.0, den = 0.0;
    for (std::size_t t = 1; t < series.size(); ++t) {
        num += series[t] * series[t - 1];
        den += series[t - 1] * series[t - 1];
    }
    if (den == 0.0) return {0.0, true};
    return {num / den, false};
}

}  // namespace umi::stock
