#pragma once

// Market-level irrationality factor. Each stock gets a dynamic representation
// r_t (current features plus a self-attention summary of its recent window);
// an ID-aware non-negative weight eta pools the r_t into a market vector m_t.
// m_t is trained with sub-market contrastive learning (InfoNCE) and with a
// classifier predicting next-period market synchronism from m_{t-1}.
//
// Vectors are 1 x n rows throughout; stacked vectors are rows of a matrix.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "umi/data.hpp"
#include "umi/diff.hpp"

namespace umi::market {

struct MarketEncoderParams {
    diff::Tensor ws;      // D x D
    diff::Tensor b;       // 1 x D
    diff::Tensor wi;      // 2D x I, column i embeds stock i
    diff::Tensor w_eta;   // 2D x 1
    diff::Tensor w_m;     // 4D x 1
    diff::Tensor b_m;     // 1 x 1
    diff::Tensor cls_w1;  // 2D x H
    diff::Tensor cls_b1;  // 1 x H
    diff::Tensor cls_w2;  // H x 3
    diff::Tensor cls_b2;  // 1 x 3

    static MarketEncoderParams initial(std::size_t feature_dim, std::size_t stocks,
                                       std::size_t hidden, std::uint64_t seed);

    std::size_t feature_dim() const { return ws.rows(); }
    std::size_t repr_dim() const { return 2 * ws.rows(); }
    std::size_t stocks() const { return wi.cols(); }
    std::vector<diff::Tensor*> tensors();
};

struct MarketVars {
    diff::Var ws, b, wi, w_eta, w_m, b_m, cls_w1, cls_b1, cls_w2, cls_b2;
    // Number of pools that fell back to uniform weights because every eta was 0.
    std::size_t uniform_fallbacks = 0;
};

MarketVars bind(diff::Tape& tape, MarketEncoderParams& params);
MarketVars bind_constant(diff::Tape& tape, const MarketEncoderParams& params);

struct MarketRepresentation {
    std::vector<double> m;  // length 2D
};

// I x 2D matrix of r_t for every stock. Needs t >= L-1.
diff::Var dynamic_repr(diff::Tape& tape, const MarketVars& v, const data::MarketPanel& panel,
                       std::size_t t, std::size_t window);
std::vector<double> dynamic_stock_repr(const data::MarketPanel& panel,
                                       const MarketEncoderParams& params, std::size_t stock,
                                       std::size_t t, std::size_t window);

// I x 1 column of eta = ReLU(w_eta . (W_I[:, i] + r_i)).
diff::Var stock_weights(diff::Tape& tape, const MarketVars& v, diff::Var repr);
double stock_weight(const MarketEncoderParams& params, std::size_t stock,
                    std::span<const double> repr);

// 1 x 2D eta-weighted mean of the subset's rows of repr.
diff::Var market_repr(diff::Tape& tape, MarketVars& v, diff::Var repr,
                      std::span<const std::size_t> subset);
MarketRepresentation market_repr(const data::MarketPanel& panel,
                                 const MarketEncoderParams& params,
                                 std::span<const std::size_t> subset, std::size_t t,
                                 std::size_t window);

struct SubmarketSplit {
    std::vector<std::size_t> first;   // ceil(I/2) stocks, ascending
    std::vector<std::size_t> second;  // floor(I/2) stocks, ascending
};

SubmarketSplit submarket_split(std::size_t stocks, std::uint64_t seed, std::uint64_t epoch);

// D = exp((w_M . (m1 || m2) + b_M) / (|t - t'| + 1)).
double criterion(const MarketEncoderParams& params, std::span<const double> m1,
                 std::span<const double> m2, std::size_t t, std::size_t t2);

// InfoNCE over a batch: rows of m1/m2 are the two sub-market vectors at
// periods[k]; negatives of anchor k are the other rows of m2.
diff::Var infonce(diff::Tape& tape, const MarketVars& v, diff::Var m1, diff::Var m2,
                  std::span<const std::size_t> periods);
double infonce_loss(const MarketEncoderParams& params, const data::MarketPanel& panel,
                    std::span<const std::size_t> periods, std::size_t window,
                    std::uint64_t seed, std::uint64_t epoch);

// B x 3 classifier logits from B x 2D market vectors.
diff::Var synchronism_logits(diff::Tape& tape, const MarketVars& v, diff::Var m);
std::array<double, 3> synchronism_predict(const MarketEncoderParams& params,
                                          std::span<const double> m_prev);

// Mean cross-entropy of the classifier on m_prev rows against labels.
diff::Var synchronism_loss(diff::Tape& tape, const MarketVars& v, diff::Var m_prev,
                           std::span<const data::SynchronismLabel> labels);

struct MarketLossParts {
    diff::Var contrastive;
    diff::Var prediction;
    diff::Var total;
};

// L_M = L_C + lambda2 * L_P for the anchor periods. Each anchor t >= L needs
// labels[t]; its prediction reads the full-market m_{t-1} only.
MarketLossParts loss_m(diff::Tape& tape, MarketVars& v, const data::MarketPanel& panel,
                       std::span<const data::SynchronismLabel> labels,
                       std::span<const std::size_t> anchors, std::size_t window,
                       const SubmarketSplit& split, double lambda2);

struct MarketTrainConfig {
    std::size_t window = 20;
    std::size_t hidden = 0;  // 0 means 2D
    std::size_t batch = 32;
    std::size_t epochs = 60;
    double lambda2 = 1.0;
    double lr = 1e-2;
    std::uint64_t seed = 0;
};

struct MarketTrainResult {
    MarketEncoderParams params;
    diff::Tensor series;       // T x 2D full-market m_t; rows before L-1 are zero
    std::size_t first_valid = 0;
    double initial_loss = 0.0;  // L_M on all training anchors, epoch-0 split
    double final_loss = 0.0;
    std::size_t uniform_fallbacks = 0;
};

// Trains on anchors in [L, train_end) and emits m_t for every period.
MarketTrainResult train_market_factors(const data::MarketPanel& panel,
                                       std::span<const data::SynchronismLabel> labels,
                                       std::size_t train_end, const MarketTrainConfig& cfg);

// Full-market m_t for every t >= L-1 (earlier rows zero).
diff::Tensor market_series(const data::MarketPanel& panel, const MarketEncoderParams& params,
                           std::size_t window);

// r_t of every stock for every t >= L-1, as T matrices of I x 2D.
std::vector<diff::Tensor> repr_series(const data::MarketPanel& panel,
                                      const MarketEncoderParams& params, std::size_t window);

struct SeparationStats {
    double mean_positive = 0.0;
    double mean_negative = 0.0;
};

// Mean criterion over positive pairs (t, t) and negative pairs (t, t' != t)
// of the given periods under one random split.
SeparationStats contrastive_separation(const MarketEncoderParams& params,
                                       const data::MarketPanel& panel,
                                       std::span<const std::size_t> periods, std::size_t window,
                                       std::uint64_t seed);

// Fraction of periods t whose label the classifier on m_{t-1} gets right.
double synchronism_accuracy(const MarketEncoderParams& params, const diff::Tensor& series,
                            std::span<const data::SynchronismLabel> labels,
                            std::span<const std::size_t> periods);

}  // namespace umi::market
