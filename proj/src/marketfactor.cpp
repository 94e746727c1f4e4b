#include "umi/marketfactor.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "umi/errors.hpp"
#include "umi/optim.hpp"
#include "umi/rng.hpp"

namespace umi::market {

using diff::Axis;
using diff::Tape;
using diff::Tensor;
using diff::Var;

namespace {

Tensor uniform(std::size_t rows, std::size_t cols, double scale, Rng& rng) {
    std::uniform_real_distribution<double> u(-scale, scale);
    Tensor t(rows, cols);
    for (double& x : t.values()) x = u(rng);
    return t;
}

void check_dims(const MarketVars& v, const data::MarketPanel& panel) {
    if (v.ws.rows() != panel.feature_dim) {
        throw ShapeError("market encoder built for " + std::to_string(v.ws.rows()) +
                         " features, panel has " + std::to_string(panel.feature_dim));
    }
    if (v.wi.cols() != panel.num_stocks()) {
        throw ShapeError("market encoder built for " + std::to_string(v.wi.cols()) +
                         " stocks, panel has " + std::to_string(panel.num_stocks()));
    }
}

Var pool(Tape& tape, MarketVars& v, Var repr, Var eta, std::span<const std::size_t> subset) {
    const std::size_t n = repr.rows();
    if (subset.empty()) throw EmptySubset("market pooling over an empty subset");
    Tensor mask(n, 1, 0.0);
    for (std::size_t i : subset) {
        if (i >= n) throw ShapeError("subset index " + std::to_string(i) + " out of range");
        mask(i, 0) = 1.0;
    }
    Var m = tape.constant(std::move(mask));
    Var weights = eta * m;
    Var total = tape.sum(weights);
    if (total.item() > 0.0) return tape.matmul(tape.transpose(weights), repr) / total;
    // Every eta is zero: the ratio is 0/0, so pool uniformly instead.
    ++v.uniform_fallbacks;
    return tape.matmul(tape.transpose(m), repr) * (1.0 / static_cast<double>(subset.size()));
}

std::vector<std::size_t> all_stocks(std::size_t n) {
    std::vector<std::size_t> s(n);
    std::iota(s.begin(), s.end(), std::size_t{0});
    return s;
}

Tensor to_row(std::span<const double> v) { return Tensor::row({v.begin(), v.end()}); }

}  // namespace

MarketEncoderParams MarketEncoderParams::initial(std::size_t feature_dim, std::size_t stocks,
                                                 std::size_t hidden, std::uint64_t seed) {
    if (stocks < 2) throw TooFewStocks("market encoder needs I >= 2");
    const std::size_t d = feature_dim, d2 = 2 * feature_dim;
    if (hidden == 0) hidden = d2;
    Rng rng = make_rng(seed, "market/init");
    MarketEncoderParams p;
    p.ws = uniform(d, d, 0.01, rng);
    for (std::size_t k = 0; k < d; ++k) p.ws(k, k) += 1.0;
    p.b = Tensor(1, d, 0.0);
    p.wi = uniform(d2, stocks, 1.0 / std::sqrt(static_cast<double>(d2)), rng);
    p.w_eta = uniform(d2, 1, 1.0 / std::sqrt(static_cast<double>(d2)), rng);
    p.w_m = uniform(2 * d2, 1, 1.0 / std::sqrt(static_cast<double>(2 * d2)), rng);
    p.b_m = Tensor(1, 1, 0.0);
    p.cls_w1 = uniform(d2, hidden, std::sqrt(6.0 / static_cast<double>(d2 + hidden)), rng);
    p.cls_b1 = Tensor(1, hidden, 0.0);
    p.cls_w2 = uniform(hidden, 3, std::sqrt(6.0 / static_cast<double>(hidden + 3)), rng);
    p.cls_b2 = Tensor(1, 3, 0.0);
    return p;
}

std::vector<Tensor*> MarketEncoderParams::tensors() {
    return {&ws, &b, &wi, &w_eta, &w_m, &b_m, &cls_w1, &cls_b1, &cls_w2, &cls_b2};
}

MarketVars bind(Tape& tape, MarketEncoderParams& p) {
    return {tape.param(p.ws),     tape.param(p.b),      tape.param(p.wi),     tape.param(p.w_eta),
            tape.param(p.w_m),    tape.param(p.b_m),    tape.param(p.cls_w1), tape.param(p.cls_b1),
            tape.param(p.cls_w2), tape.param(p.cls_b2), 0};
}

MarketVars bind_constant(Tape& tape, const MarketEncoderParams& p) {
    return {tape.constant(p.ws),     tape.constant(p.b),      tape.constant(p.wi),
            tape.constant(p.w_eta),  tape.constant(p.w_m),    tape.constant(p.b_m),
            tape.constant(p.cls_w1), tape.constant(p.cls_b1), tape.constant(p.cls_w2),
            tape.constant(p.cls_b2), 0};
}

Var dynamic_repr(Tape& tape, const MarketVars& v, const data::MarketPanel& panel, std::size_t t,
                 std::size_t window) {
    check_dims(v, panel);
    if (window == 0) throw ShapeError("window must be >= 1");
    if (t >= panel.num_periods()) throw ShapeError("period out of range");
    if (t + 1 < window) {
        throw TooEarly("period " + std::to_string(t) + " has no full window of " +
                       std::to_string(window));
    }
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(panel.feature_dim));
    Var ws_t = tape.transpose(v.ws);
    Var e_now = tape.constant(panel.features_at(t));
    Var q_now = tape.matmul(e_now, ws_t) + v.b;

    std::vector<Var> scores, past;
    scores.reserve(window);
    past.reserve(window);
    for (std::size_t k = 0; k < window; ++k) {
        const std::size_t tau = t + 1 - window + k;
        Var e = tau == t ? e_now : tape.constant(panel.features_at(tau));
        Var q = tau == t ? q_now : tape.matmul(e, ws_t) + v.b;
        scores.push_back(tape.row_sum(q_now * q) * inv_sqrt_d);
        past.push_back(e);
    }
    Var att = tape.softmax_row(tape.concat(scores, Axis::Cols));
    const std::size_t n = panel.num_stocks();
    Var agg = tape.slice(att, 0, n, 0, 1) * past[0];
    for (std::size_t k = 1; k < window; ++k) agg = agg + tape.slice(att, 0, n, k, k + 1) * past[k];
    return tape.concat({e_now, agg}, Axis::Cols);
}

std::vector<double> dynamic_stock_repr(const data::MarketPanel& panel,
                                       const MarketEncoderParams& params, std::size_t stock,
                                       std::size_t t, std::size_t window) {
    if (stock >= panel.num_stocks()) throw ShapeError("stock index out of range");
    Tape tape;
    return dynamic_repr(tape, bind_constant(tape, params), panel, t, window)
        .to_tensor()
        .row_values(stock);
}

Var stock_weights(Tape& tape, const MarketVars& v, Var repr) {
    return tape.relu(tape.matmul(tape.transpose(v.wi) + repr, v.w_eta));
}

double stock_weight(const MarketEncoderParams& params, std::size_t stock,
                    std::span<const double> repr) {
    if (stock >= params.stocks()) throw ShapeError("stock index out of range");
    if (repr.size() != params.repr_dim()) throw ShapeError("representation length mismatch");
    double s = 0.0;
    for (std::size_t k = 0; k < repr.size(); ++k) {
        s += params.w_eta(k, 0) * (params.wi(k, stock) + repr[k]);
    }
    return s > 0.0 ? s : 0.0;
}

Var market_repr(Tape& tape, MarketVars& v, Var repr, std::span<const std::size_t> subset) {
    return pool(tape, v, repr, stock_weights(tape, v, repr), subset);
}

MarketRepresentation market_repr(const data::MarketPanel& panel,
                                 const MarketEncoderParams& params,
                                 std::span<const std::size_t> subset, std::size_t t,
                                 std::size_t window) {
    Tape tape;
    MarketVars v = bind_constant(tape, params);
    Var m = market_repr(tape, v, dynamic_repr(tape, v, panel, t, window), subset);
    const auto vals = m.values();
    return {{vals.begin(), vals.end()}};
}

SubmarketSplit submarket_split(std::size_t stocks, std::uint64_t seed, std::uint64_t epoch) {
    if (stocks < 2) throw TooFewStocks("sub-market split needs I >= 2");
    Rng rng(derive_seed(seed, "market/split", epoch));
    std::vector<std::size_t> perm = all_stocks(stocks);
    // Explicit Fisher-Yates so the split does not depend on the library's shuffle.
    for (std::size_t k = stocks - 1; k > 0; --k) {
        const std::size_t j = static_cast<std::size_t>(rng() % (k + 1));
        std::swap(perm[k], perm[j]);
    }
    const std::size_t half = (stocks + 1) / 2;
    SubmarketSplit s{{perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(half)},
                     {perm.begin() + static_cast<std::ptrdiff_t>(half), perm.end()}};
    std::sort(s.first.begin(), s.first.end());
    std::sort(s.second.begin(), s.second.end());
    return s;
}

double criterion(const MarketEncoderParams& params, std::span<const double> m1,
                 std::span<const double> m2, std::size_t t, std::size_t t2) {
    const std::size_t d2 = params.repr_dim();
    if (m1.size() != d2 || m2.size() != d2) throw ShapeError("criterion input length mismatch");
    double logit = params.b_m(0, 0);
    for (std::size_t k = 0; k < d2; ++k) {
        logit += params.w_m(k, 0) * m1[k] + params.w_m(d2 + k, 0) * m2[k];
    }
    const double gap = t > t2 ? static_cast<double>(t - t2) : static_cast<double>(t2 - t);
    return std::exp(logit / (gap + 1.0));
}

Var infonce(Tape& tape, const MarketVars& v, Var m1, Var m2, std::span<const std::size_t> periods) {
    const std::size_t batch = periods.size();
    if (batch < 2) throw NoNegatives("InfoNCE needs a batch of at least 2 periods");
    if (m1.rows() != batch || m2.rows() != batch) throw ShapeError("InfoNCE batch mismatch");
    const std::size_t d2 = m1.cols();
    Tensor gap_weight(batch, batch), eye(batch, batch, 0.0);
    for (std::size_t a = 0; a < batch; ++a) {
        eye(a, a) = 1.0;
        for (std::size_t c = 0; c < batch; ++c) {
            const double gap = periods[a] > periods[c] ? static_cast<double>(periods[a] - periods[c])
                                                       : static_cast<double>(periods[c] - periods[a]);
            gap_weight(a, c) = 1.0 / (gap + 1.0);
        }
    }
    Var left = tape.matmul(m1, tape.slice(v.w_m, 0, d2, 0, 1));
    Var right = tape.matmul(m2, tape.slice(v.w_m, d2, 2 * d2, 0, 1));
    Var logits = (left + tape.transpose(right) + v.b_m) * tape.constant(std::move(gap_weight));
    Var log_ratio = tape.row_sum(tape.log_softmax_row(logits) * tape.constant(std::move(eye)));
    return -tape.mean(log_ratio);
}

double infonce_loss(const MarketEncoderParams& params, const data::MarketPanel& panel,
                    std::span<const std::size_t> periods, std::size_t window, std::uint64_t seed,
                    std::uint64_t epoch) {
    if (periods.size() < 2) throw NoNegatives("InfoNCE needs a batch of at least 2 periods");
    const SubmarketSplit split = submarket_split(panel.num_stocks(), seed, epoch);
    Tape tape;
    MarketVars v = bind_constant(tape, params);
    std::vector<Var> rows1, rows2;
    for (std::size_t t : periods) {
        Var repr = dynamic_repr(tape, v, panel, t, window);
        Var eta = stock_weights(tape, v, repr);
        rows1.push_back(pool(tape, v, repr, eta, split.first));
        rows2.push_back(pool(tape, v, repr, eta, split.second));
    }
    return infonce(tape, v, tape.concat(rows1, Axis::Rows), tape.concat(rows2, Axis::Rows), periods)
        .item();
}

Var synchronism_logits(Tape& tape, const MarketVars& v, Var m) {
    Var hidden = tape.tanh(tape.matmul(m, v.cls_w1) + v.cls_b1);
    return tape.matmul(hidden, v.cls_w2) + v.cls_b2;
}

std::array<double, 3> synchronism_predict(const MarketEncoderParams& params,
                                          std::span<const double> m_prev) {
    if (m_prev.size() != params.repr_dim()) throw ShapeError("market vector length mismatch");
    Tape tape;
    Var p = tape.softmax_row(synchronism_logits(tape, bind_constant(tape, params),
                                                tape.constant(to_row(m_prev))));
    return {p.value(0, 0), p.value(0, 1), p.value(0, 2)};
}

Var synchronism_loss(Tape& tape, const MarketVars& v, Var m_prev,
                     std::span<const data::SynchronismLabel> labels) {
    if (m_prev.rows() != labels.size()) throw ShapeError("one label per market vector required");
    Tensor onehot(labels.size(), 3, 0.0);
    for (std::size_t k = 0; k < labels.size(); ++k) onehot(k, labels[k].index()) = 1.0;
    Var logp = tape.log_softmax_row(synchronism_logits(tape, v, m_prev));
    return -tape.mean(tape.row_sum(logp * tape.constant(std::move(onehot))));
}

MarketLossParts loss_m(Tape& tape, MarketVars& v, const data::MarketPanel& panel,
                       std::span<const data::SynchronismLabel> labels,
                       std::span<const std::size_t> anchors, std::size_t window,
                       const SubmarketSplit& split, double lambda2) {
    if (labels.size() != panel.num_periods()) throw AlignmentError("one label per period required");
    const std::vector<std::size_t> everyone = all_stocks(panel.num_stocks());
    std::map<std::size_t, std::pair<Var, Var>> cache;  // period -> (repr, eta)
    auto repr_at = [&](std::size_t t) -> const std::pair<Var, Var>& {
        auto it = cache.find(t);
        if (it == cache.end()) {
            Var r = dynamic_repr(tape, v, panel, t, window);
            it = cache.emplace(t, std::make_pair(r, stock_weights(tape, v, r))).first;
        }
        return it->second;
    };

    std::vector<Var> rows1, rows2, prev_rows;
    std::vector<data::SynchronismLabel> targets;
    for (std::size_t t : anchors) {
        if (t < window) throw TooEarly("anchor " + std::to_string(t) + " has no m_{t-1}");
        const auto [r, eta] = repr_at(t);
        rows1.push_back(pool(tape, v, r, eta, split.first));
        rows2.push_back(pool(tape, v, r, eta, split.second));
        const auto [rp, etap] = repr_at(t - 1);
        prev_rows.push_back(pool(tape, v, rp, etap, everyone));
        targets.push_back(labels[t]);
    }
    MarketLossParts parts;
    parts.contrastive =
        infonce(tape, v, tape.concat(rows1, Axis::Rows), tape.concat(rows2, Axis::Rows), anchors);
    parts.prediction = synchronism_loss(tape, v, tape.concat(prev_rows, Axis::Rows), targets);
    parts.total = parts.contrastive + lambda2 * parts.prediction;
    return parts;
}

MarketTrainResult train_market_factors(const data::MarketPanel& panel,
                                       std::span<const data::SynchronismLabel> labels,
                                       std::size_t train_end, const MarketTrainConfig& cfg) {
    if (cfg.lambda2 < 0.0) throw ConfigError("lambda2 must be >= 0");
    if (cfg.batch < 2) throw NoNegatives("market batch must hold at least 2 periods");
    train_end = std::min(train_end, panel.num_periods());
    std::vector<std::size_t> anchors;
    for (std::size_t t = cfg.window; t < train_end; ++t) anchors.push_back(t);
    if (anchors.size() < 2) {
        throw TooShort("training split leaves " + std::to_string(anchors.size()) +
                       " anchor periods for window " + std::to_string(cfg.window));
    }

    MarketTrainResult res;
    res.params = MarketEncoderParams::initial(panel.feature_dim, panel.num_stocks(), cfg.hidden,
                                              cfg.seed);
    const SubmarketSplit eval_split = submarket_split(panel.num_stocks(), cfg.seed, 0);
    auto full_loss = [&] {
        Tape tape;
        MarketVars v = bind_constant(tape, res.params);
        return loss_m(tape, v, panel, labels, anchors, cfg.window, eval_split, cfg.lambda2)
            .total.item();
    };
    res.initial_loss = full_loss();

    diff::Adam opt(res.params.tensors(), {.lr = cfg.lr});
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const SubmarketSplit split = submarket_split(panel.num_stocks(), cfg.seed, epoch);
        std::vector<std::size_t> order = anchors;
        Rng rng(derive_seed(cfg.seed, "market/order", epoch));
        for (std::size_t k = order.size() - 1; k > 0; --k) {
            std::swap(order[k], order[static_cast<std::size_t>(rng() % (k + 1))]);
        }
        for (std::size_t start = 0; start + 2 <= order.size(); start += cfg.batch) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch);
            std::span<const std::size_t> batch(order.data() + start, stop - start);
            Tape tape;
            MarketVars v = bind(tape, res.params);
            Var loss = loss_m(tape, v, panel, labels, batch, cfg.window, split, cfg.lambda2).total;
            if (!std::isfinite(loss.item())) {
                throw NumericalFailure("L_M diverged in epoch " + std::to_string(epoch));
            }
            res.uniform_fallbacks += v.uniform_fallbacks;
            opt.zero_grad();
            tape.backward(loss);
            opt.step();
        }
    }
    res.final_loss = full_loss();
    res.series = market_series(panel, res.params, cfg.window);
    res.first_valid = cfg.window - 1;
    return res;
}

Tensor market_series(const data::MarketPanel& panel, const MarketEncoderParams& params,
                     std::size_t window) {
    const std::size_t d2 = params.repr_dim();
    Tensor out(panel.num_periods(), d2, 0.0);
    const std::vector<std::size_t> everyone = all_stocks(panel.num_stocks());
    for (std::size_t t = window - 1; t < panel.num_periods(); ++t) {
        Tape tape;
        MarketVars v = bind_constant(tape, params);
        Var m = market_repr(tape, v, dynamic_repr(tape, v, panel, t, window), everyone);
        for (std::size_t k = 0; k < d2; ++k) out(t, k) = m.value(0, k);
    }
    return out;
}

std::vector<Tensor> repr_series(const data::MarketPanel& panel, const MarketEncoderParams& params,
                                std::size_t window) {
    std::vector<Tensor> out(panel.num_periods(), Tensor(panel.num_stocks(), params.repr_dim(), 0.0));
    for (std::size_t t = window - 1; t < panel.num_periods(); ++t) {
        Tape tape;
        out[t] = dynamic_repr(tape, bind_constant(tape, params), panel, t, window).to_tensor();
    }
    return out;
}

SeparationStats contrastive_separation(const MarketEncoderParams& params,
                                       const data::MarketPanel& panel,
                                       std::span<const std::size_t> periods, std::size_t window,
                                       std::uint64_t seed) {
    if (periods.size() < 2) throw NoNegatives("separation needs at least 2 periods");
    const SubmarketSplit split = submarket_split(panel.num_stocks(), seed, 0);
    std::vector<std::vector<double>> m1, m2;
    for (std::size_t t : periods) {
        m1.push_back(market_repr(panel, params, split.first, t, window).m);
        m2.push_back(market_repr(panel, params, split.second, t, window).m);
    }
    SeparationStats s;
    std::size_t negatives = 0;
    for (std::size_t a = 0; a < periods.size(); ++a) {
        s.mean_positive += criterion(params, m1[a], m2[a], periods[a], periods[a]);
        for (std::size_t c = 0; c < periods.size(); ++c) {
            if (c == a) continue;
            s.mean_negative += criterion(params, m1[a], m2[c], periods[a], periods[c]);
            ++negatives;
        }
    }
    s.mean_positive /= static_cast<double>(periods.size());
    s.mean_negative /= static_cast<double>(negatives);
    return s;
}

double synchronism_accuracy(const MarketEncoderParams& params, const Tensor& series,
                            std::span<const data::SynchronismLabel> labels,
                            std::span<const std::size_t> periods) {
    if (periods.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t t : periods) {
        if (t == 0 || t >= labels.size()) throw ShapeError("period has no predecessor or label");
        const auto p = synchronism_predict(params, series.row_values(t - 1));
        const auto best = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
        hits += best == labels[t].index() ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(periods.size());
}

}  // namespace umi::market
