#include "umi/forecaster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "umi/errors.hpp"
#include "umi/optim.hpp"
#include "umi/rng.hpp"
#include "umi/stats.hpp"

namespace umi::forecast {

using diff::Axis;
using diff::Tape;
using diff::Tensor;
using diff::Var;

namespace {

Tensor xavier(std::size_t rows, std::size_t cols, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> u(-a, a);
    Tensor t(rows, cols);
    for (double& x : t.values()) x = u(rng);
    return t;
}

Var layer_norm(Tape& tape, Var x, Var gain, Var bias) {
    Var centred = x - tape.row_mean(x);
    return centred / tape.row_std(x) * gain + bias;
}

// Multi-head attention of every query row against its own stock's window.
// With one query per stock the queries are the final positions only.
Var window_attention(Tape& tape, Var q, Var k, Var val, std::size_t stocks, std::size_t window,
                     std::size_t heads) {
    const std::size_t width = q.cols();
    const std::size_t dh = width / heads;
    const std::size_t q_rows = q.rows() / stocks;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Var> head_out;
    head_out.reserve(heads);
    std::vector<Var> per_stock(stocks);
    for (std::size_t h = 0; h < heads; ++h) {
        Var qh = tape.slice(q, 0, q.rows(), h * dh, (h + 1) * dh);
        Var kh = tape.slice(k, 0, k.rows(), h * dh, (h + 1) * dh);
        Var vh = tape.slice(val, 0, val.rows(), h * dh, (h + 1) * dh);
        for (std::size_t i = 0; i < stocks; ++i) {
            Var qi = tape.slice(qh, i * q_rows, (i + 1) * q_rows, 0, dh);
            Var ki = tape.slice(kh, i * window, (i + 1) * window, 0, dh);
            Var vi = tape.slice(vh, i * window, (i + 1) * window, 0, dh);
            Var att = tape.softmax_row(tape.matmul(qi, tape.transpose(ki)) * scale);
            per_stock[i] = tape.matmul(att, vi);
        }
        head_out.push_back(tape.concat(per_stock, Axis::Rows));
    }
    return heads == 1 ? head_out[0] : tape.concat(head_out, Axis::Cols);
}

Tensor selection_matrix(std::size_t stocks, std::size_t window) {
    Tensor sel(stocks, stocks * window, 0.0);
    for (std::size_t i = 0; i < stocks; ++i) sel(i, i * window + window - 1) = 1.0;
    return sel;
}

Tensor column(std::span<const double> v) { return Tensor::column({v.begin(), v.end()}); }

std::vector<double> returns_at(const data::MarketPanel& panel, std::size_t t) {
    std::vector<double> y(panel.num_stocks());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = panel.returns(i, t);
    return y;
}

double mean_rank_ic(const Prediction& pred, const data::MarketPanel& panel,
                    std::span<const std::size_t> periods) {
    double s = 0.0;
    for (std::size_t t : periods) {
        const std::vector<double> yh = [&] {
            std::vector<double> out(panel.num_stocks());
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = pred.y_hat(i, t);
            return out;
        }();
        s += stats::rank_correlation(yh, returns_at(panel, t));
    }
    return s / static_cast<double>(periods.size());
}

}  // namespace

Ablation parse_ablation(std::string_view name) {
    if (name.empty() || name == "none") return Ablation::None;
    if (name == "NS") return Ablation::NS;
    if (name == "NM") return Ablation::NM;
    if (name == "NR") return Ablation::NR;
    if (name == "ND") return Ablation::ND;
    throw ConfigError("unknown ablation '" + std::string(name) + "' (expected NS, NM, NR or ND)");
}

std::string_view to_string(Ablation a) {
    switch (a) {
        case Ablation::NS: return "NS";
        case Ablation::NM: return "NM";
        case Ablation::NR: return "NR";
        case Ablation::ND: return "ND";
        default: return "none";
    }
}

void ForecasterConfig::validate() const {
    if (window == 0) throw ConfigError("forecaster window must be >= 1");
    if (width == 0 || heads == 0 || width % heads != 0) {
        throw ConfigError("forecaster width must be a positive multiple of heads");
    }
    if (!(lambda3 >= 0.0)) throw ConfigError("lambda3 must be >= 0");
    if (!(lr > 0.0)) throw ConfigError("forecaster lr must be > 0");
    if (batch_periods == 0) throw ConfigError("batch_periods must be >= 1");
    if (patience == 0) throw ConfigError("patience must be >= 1");
    if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
        throw ConfigError("validation_fraction must lie in [0, 1)");
    }
}

ForecasterConfig apply_ablation(ForecasterConfig cfg, Ablation a) {
    switch (a) {
        case Ablation::NS: cfg.use_stock_factor = false; break;
        case Ablation::NM: cfg.use_market_factor = false; break;
        case Ablation::NR: cfg.lambda3 = 0.0; break;
        case Ablation::ND: cfg.use_relation = false; break;
        case Ablation::None: break;
    }
    return cfg;
}

ForecasterParams ForecasterParams::initial(const ForecasterConfig& cfg, std::size_t input_dim,
                                           std::size_t repr_dim, std::uint64_t seed) {
    cfg.validate();
    Rng rng = make_rng(seed, "forecast/init");
    const std::size_t w = cfg.width, f = cfg.ffn_dim(), hh = cfg.head_dim();
    ForecasterParams p;
    p.heads = cfg.heads;
    p.w_in = xavier(input_dim, w, rng);
    p.b_in = Tensor(1, w, 0.0);
    for (std::size_t b = 0; b < cfg.blocks; ++b) {
        EncoderBlock blk;
        blk.wq = xavier(w, w, rng);
        blk.wk = xavier(w, w, rng);
        blk.wv = xavier(w, w, rng);
        blk.wo = xavier(w, w, rng);
        blk.ln1_gain = Tensor(1, w, 1.0);
        blk.ln1_bias = Tensor(1, w, 0.0);
        blk.ff_w1 = xavier(w, f, rng);
        blk.ff_b1 = Tensor(1, f, 0.0);
        blk.ff_w2 = xavier(f, w, rng);
        blk.ff_b2 = Tensor(1, w, 0.0);
        blk.ln2_gain = Tensor(1, w, 1.0);
        blk.ln2_bias = Tensor(1, w, 0.0);
        p.blocks.push_back(std::move(blk));
    }
    p.pc = xavier(w, repr_dim, rng);
    p.wy = xavier(repr_dim, repr_dim, rng);
    const std::size_t head_in = w + (cfg.use_relation ? w : 0) + repr_dim;
    p.head_w1 = xavier(head_in, hh, rng);
    p.head_b1 = Tensor(1, hh, 0.0);
    p.head_w2 = xavier(hh, 1, rng);
    p.head_b2 = Tensor(1, 1, 0.0);
    return p;
}

std::vector<Tensor*> ForecasterParams::tensors() {
    std::vector<Tensor*> out{&w_in, &b_in};
    for (auto& b : blocks) {
        for (Tensor* t : {&b.wq, &b.wk, &b.wv, &b.wo, &b.ln1_gain, &b.ln1_bias, &b.ff_w1, &b.ff_b1,
                          &b.ff_w2, &b.ff_b2, &b.ln2_gain, &b.ln2_bias}) {
            out.push_back(t);
        }
    }
    for (Tensor* t : {&pc, &wy, &head_w1, &head_b1, &head_w2, &head_b2}) out.push_back(t);
    return out;
}

void ForecastInputs::validate() const {
    if (!panel || !market || !repr) throw AlignmentError("forecast inputs are incomplete");
    const std::size_t n = panel->num_stocks(), T = panel->num_periods();
    if (market->rows() != T) {
        throw AlignmentError("market series has " + std::to_string(market->rows()) +
                             " periods, panel " + std::to_string(T));
    }
    if (repr->size() != T) throw AlignmentError("representation series length mismatch");
    for (const Tensor& r : *repr) {
        if (r.rows() != n || r.cols() != market->cols()) {
            throw AlignmentError("representation matrix shape mismatch");
        }
    }
    if (u && (u->rows() != n || u->cols() != T)) {
        throw AlignmentError("stock factor is " + std::to_string(u->rows()) + "x" +
                             std::to_string(u->cols()) + ", panel " + std::to_string(n) + "x" +
                             std::to_string(T));
    }
}

std::size_t ForecastInputs::first_period(std::size_t window) const {
    return std::max(window, market_first_valid + 1);
}

Tensor build_inputs(const data::MarketPanel& panel, const Tensor* u, std::size_t t,
                    std::size_t window) {
    const std::size_t n = panel.num_stocks(), D = panel.feature_dim;
    if (u && (u->rows() != n || u->cols() != panel.num_periods())) {
        throw AlignmentError("stock factor does not match the panel");
    }
    if (window == 0 || t < window || t > panel.num_periods()) {
        throw AlignmentError("window of " + std::to_string(window) + " before period " +
                             std::to_string(t) + " lies outside the panel");
    }
    const std::size_t dim = D + (u ? 1 : 0);
    Tensor out(n * window, dim);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t l = 0; l < window; ++l) {
            const std::size_t tau = t - window + l;
            const std::size_t row = i * window + l;
            for (std::size_t d = 0; d < D; ++d) out(row, d) = panel.feature(i, tau, d);
            if (u) out(row, D) = (*u)(i, tau);
        }
    }
    return out;
}

Tensor positional_encoding(std::size_t window, std::size_t width) {
    Tensor pe(window, width);
    for (std::size_t l = 0; l < window; ++l) {
        for (std::size_t k = 0; k < width; ++k) {
            const double freq =
                std::pow(10000.0, -static_cast<double>(k - k % 2) / static_cast<double>(width));
            const double a = static_cast<double>(l) * freq;
            pe(l, k) = k % 2 == 0 ? std::sin(a) : std::cos(a);
        }
    }
    return pe;
}

ForecasterVars bind(Tape& tape, ForecasterParams& p) {
    ForecasterVars v;
    v.heads = p.heads;
    v.w_in = tape.param(p.w_in);
    v.b_in = tape.param(p.b_in);
    for (auto& b : p.blocks) {
        v.blocks.push_back({tape.param(b.wq), tape.param(b.wk), tape.param(b.wv), tape.param(b.wo),
                            tape.param(b.ln1_gain), tape.param(b.ln1_bias), tape.param(b.ff_w1),
                            tape.param(b.ff_b1), tape.param(b.ff_w2), tape.param(b.ff_b2),
                            tape.param(b.ln2_gain), tape.param(b.ln2_bias)});
    }
    v.pc = tape.param(p.pc);
    v.wy = tape.param(p.wy);
    v.head_w1 = tape.param(p.head_w1);
    v.head_b1 = tape.param(p.head_b1);
    v.head_w2 = tape.param(p.head_w2);
    v.head_b2 = tape.param(p.head_b2);
    return v;
}

ForecasterVars bind_constant(Tape& tape, const ForecasterParams& p) {
    ForecasterVars v;
    v.heads = p.heads;
    v.w_in = tape.constant(p.w_in);
    v.b_in = tape.constant(p.b_in);
    for (const auto& b : p.blocks) {
        v.blocks.push_back({tape.constant(b.wq), tape.constant(b.wk), tape.constant(b.wv),
                            tape.constant(b.wo), tape.constant(b.ln1_gain),
                            tape.constant(b.ln1_bias), tape.constant(b.ff_w1),
                            tape.constant(b.ff_b1), tape.constant(b.ff_w2), tape.constant(b.ff_b2),
                            tape.constant(b.ln2_gain), tape.constant(b.ln2_bias)});
    }
    v.pc = tape.constant(p.pc);
    v.wy = tape.constant(p.wy);
    v.head_w1 = tape.constant(p.head_w1);
    v.head_b1 = tape.constant(p.head_b1);
    v.head_w2 = tape.constant(p.head_w2);
    v.head_b2 = tape.constant(p.head_b2);
    return v;
}

Var temporal_encode(Tape& tape, const ForecasterVars& v, const Tensor& inputs,
                    std::size_t stocks, std::size_t window) {
    if (inputs.rows() != stocks * window) throw ShapeError("stacked inputs must be (I*L) x dim");
    const std::size_t width = v.w_in.cols();
    const Tensor pe = positional_encoding(window, width);
    Tensor tiled(stocks * window, width);
    for (std::size_t i = 0; i < stocks; ++i)
        for (std::size_t l = 0; l < window; ++l)
            for (std::size_t k = 0; k < width; ++k) tiled(i * window + l, k) = pe(l, k);

    Var x = tape.matmul(tape.constant(inputs), v.w_in) + v.b_in + tape.constant(std::move(tiled));
    Var select = tape.constant(selection_matrix(stocks, window));
    if (v.blocks.empty()) return tape.matmul(select, x);

    for (std::size_t b = 0; b < v.blocks.size(); ++b) {
        const auto& blk = v.blocks[b];
        // Only the final position feeds the later modules, so the last block
        // computes queries for that position alone.
        const bool last = b + 1 == v.blocks.size();
        Var query_in = last ? tape.matmul(select, x) : x;
        Var att = window_attention(tape, tape.matmul(query_in, blk.wq), tape.matmul(x, blk.wk),
                                   tape.matmul(x, blk.wv), stocks, window, v.heads);
        Var y = layer_norm(tape, query_in + tape.matmul(att, blk.wo), blk.ln1_gain, blk.ln1_bias);
        Var ff = tape.matmul(tape.relu(tape.matmul(y, blk.ff_w1) + blk.ff_b1), blk.ff_w2) +
                 blk.ff_b2;
        x = layer_norm(tape, y + ff, blk.ln2_gain, blk.ln2_bias);
    }
    return x;
}

Var relation_weights(Tape& tape, const ForecasterVars& v, Var c, Var r) {
    if (c.rows() != r.rows()) throw ShapeError("relation attention: stock count mismatch");
    Var z = tape.matmul(tape.matmul(c, v.pc) + r, tape.transpose(v.wy));
    return tape.softmax_row(tape.matmul(z, tape.transpose(z)));
}

Var relation_attention(Tape& tape, const ForecasterVars& v, Var c, Var r) {
    return tape.matmul(relation_weights(tape, v, c, r), c);
}

Var predict_head(Tape& tape, const ForecasterVars& v, Var c, std::optional<Var> d, Var m) {
    Var market = tape.matmul(tape.constant(Tensor(c.rows(), 1, 1.0)), m);
    Var in = d ? tape.concat({c, *d, market}, Axis::Cols) : tape.concat({c, market}, Axis::Cols);
    Var hidden = tape.relu(tape.matmul(in, v.head_w1) + v.head_b1);
    return tape.matmul(hidden, v.head_w2) + v.head_b2;
}

Var forward(Tape& tape, const ForecasterVars& v, const ForecastInputs& in,
            const ForecasterConfig& cfg, std::size_t t) {
    if (t < in.first_period(cfg.window) || t >= in.periods()) {
        throw TooEarly("period " + std::to_string(t) + " cannot be forecast");
    }
    const Tensor g = build_inputs(*in.panel, cfg.use_stock_factor ? in.u : nullptr, t, cfg.window);
    Var c = temporal_encode(tape, v, g, in.stocks(), cfg.window);
    Tensor m_prev(1, in.repr_dim(), 0.0);
    if (cfg.use_market_factor) m_prev = Tensor::row(in.market->row_values(t - 1));
    Var m = tape.constant(std::move(m_prev));
    std::optional<Var> d;
    if (cfg.use_relation) d = relation_attention(tape, v, c, tape.constant((*in.repr)[t - 1]));
    return predict_head(tape, v, c, d, m);
}

Var ic_t(Tape& tape, Var y_hat, std::span<const double> ranks) {
    if (y_hat.rows() != ranks.size() || y_hat.cols() != 1) throw ShapeError("ic_t: shape mismatch");
    if (ranks.size() < 2) throw ShapeError("ic_t needs at least 2 stocks");
    const double mz = stats::mean(ranks);
    double var_z = 0.0;
    std::vector<double> zc(ranks.size());
    for (std::size_t k = 0; k < ranks.size(); ++k) {
        zc[k] = ranks[k] - mz;
        var_z += zc[k] * zc[k];
    }
    var_z /= static_cast<double>(ranks.size());
    const double std_z = std::sqrt(var_z + Tape::kStdEpsilon);
    Var centred = y_hat - tape.mean(y_hat);
    Var cov = tape.mean(centred * tape.constant(column(zc)));
    return cov / tape.std(y_hat) * (1.0 / std_z);
}

double ic_t(std::span<const double> y_hat, std::span<const double> ranks) {
    if (y_hat.size() != ranks.size()) throw ShapeError("ic_t: length mismatch");
    if (ranks.size() < 2) throw ShapeError("ic_t needs at least 2 stocks");
    const double n = static_cast<double>(y_hat.size());
    const double my = stats::mean(y_hat), mz = stats::mean(ranks);
    double cov = 0.0, vy = 0.0, vz = 0.0;
    for (std::size_t k = 0; k < y_hat.size(); ++k) {
        cov += (y_hat[k] - my) * (ranks[k] - mz);
        vy += (y_hat[k] - my) * (y_hat[k] - my);
        vz += (ranks[k] - mz) * (ranks[k] - mz);
    }
    return (cov / n) / (std::sqrt(vy / n + Tape::kStdEpsilon) * std::sqrt(vz / n + Tape::kStdEpsilon));
}

Var loss_total(Tape& tape, std::span<const Var> y_hats, std::span<const std::vector<double>> y_true,
               double lambda3) {
    if (y_hats.empty() || y_hats.size() != y_true.size()) {
        throw ShapeError("loss_total needs one target vector per forecast");
    }
    std::vector<double> stacked;
    for (const auto& y : y_true) stacked.insert(stacked.end(), y.begin(), y.end());
    Var err = tape.concat(y_hats, Axis::Rows) - tape.constant(column(stacked));
    Var loss = tape.mean(err * err);
    if (lambda3 == 0.0) return loss;
    Var ic_sum = ic_t(tape, y_hats[0], stats::average_ranks(y_true[0]));
    for (std::size_t k = 1; k < y_hats.size(); ++k) {
        ic_sum = ic_sum + ic_t(tape, y_hats[k], stats::average_ranks(y_true[k]));
    }
    return loss - (lambda3 / static_cast<double>(y_hats.size())) * ic_sum;
}

Prediction predict_range(const ForecasterParams& params, const ForecastInputs& in,
                         const ForecasterConfig& cfg, std::size_t first, std::size_t last) {
    in.validate();
    last = std::min(last, in.periods());
    Prediction pred{Tensor(in.stocks(), in.periods(), 0.0), first};
    for (std::size_t t = first; t < last; ++t) {
        Tape tape;
        Var y = forward(tape, bind_constant(tape, params), in, cfg, t);
        for (std::size_t i = 0; i < in.stocks(); ++i) {
            const double v = y.value(i, 0);
            if (!std::isfinite(v)) {
                throw NumericalFailure("non-finite forecast at period " + std::to_string(t));
            }
            pred.y_hat(i, t) = v;
        }
    }
    return pred;
}

ForecastTrainResult train_forecaster(const ForecastInputs& in, std::size_t train_end,
                                     const ForecasterConfig& cfg) {
    cfg.validate();
    in.validate();
    train_end = std::min(train_end, in.periods());
    const std::size_t first = in.first_period(cfg.window);
    if (train_end < first + 2) {
        throw TooShort("forecaster training split holds fewer than 2 usable periods");
    }
    const std::size_t usable = train_end - first;
    std::size_t n_val = static_cast<std::size_t>(
        std::llround(cfg.validation_fraction * static_cast<double>(usable)));
    if (cfg.validation_fraction > 0.0) n_val = std::clamp<std::size_t>(n_val, 1, usable - 1);

    ForecastTrainResult res;
    res.first_period = first;
    res.validation_start = train_end - n_val;
    std::vector<std::size_t> fit_periods, val_periods;
    for (std::size_t t = first; t < res.validation_start; ++t) fit_periods.push_back(t);
    for (std::size_t t = res.validation_start; t < train_end; ++t) val_periods.push_back(t);

    const std::size_t input_dim = in.panel->feature_dim + (cfg.use_stock_factor && in.u ? 1 : 0);
    res.params = ForecasterParams::initial(cfg, input_dim, in.repr_dim(), cfg.seed);
    ForecastInputs fit_in = in;
    if (!cfg.use_stock_factor) fit_in.u = nullptr;

    diff::Adam opt(res.params.tensors(), {.lr = cfg.lr});
    ForecasterParams best = res.params;
    double best_ic = -std::numeric_limits<double>::infinity();
    std::size_t stale = 0;

    for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::vector<std::size_t> order = fit_periods;
        Rng rng(derive_seed(cfg.seed, "forecast/order", epoch));
        for (std::size_t k = order.size(); k > 1; --k) {
            std::swap(order[k - 1], order[static_cast<std::size_t>(rng() % k)]);
        }
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_periods) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_periods);
            Tape tape;
            ForecasterVars v = bind(tape, res.params);
            std::vector<Var> y_hats;
            std::vector<std::vector<double>> targets;
            for (std::size_t k = start; k < stop; ++k) {
                y_hats.push_back(forward(tape, v, fit_in, cfg, order[k]));
                targets.push_back(returns_at(*in.panel, order[k]));
            }
            Var loss = loss_total(tape, y_hats, targets, cfg.lambda3);
            if (!std::isfinite(loss.item())) {
                throw NumericalFailure("forecaster loss diverged in epoch " + std::to_string(epoch));
            }
            opt.zero_grad();
            tape.backward(loss);
            opt.step();
        }
        res.epochs_run = epoch + 1;
        if (val_periods.empty()) continue;
        const Prediction val = predict_range(res.params, fit_in, cfg, res.validation_start, train_end);
        const double ic = mean_rank_ic(val, *in.panel, val_periods);
        if (ic > best_ic) {
            best_ic = ic;
            best = res.params;
            res.best_epoch = epoch;
            stale = 0;
        } else if (++stale >= cfg.patience) {
            break;
        }
    }
    if (!val_periods.empty()) {
        res.params = std::move(best);
        res.best_validation_rank_ic = best_ic;
    } else {
        res.best_epoch = res.epochs_run == 0 ? 0 : res.epochs_run - 1;
    }
    for (Tensor* t : res.params.tensors()) t->clear_grad();
    res.prediction = predict_range(res.params, fit_in, cfg, first, in.periods());
    return res;
}

RowScaler RowScaler::fit(const Tensor& x, std::size_t fit_end) {
    fit_end = std::min(fit_end, x.cols());
    if (fit_end == 0) throw TooShort("row scaler needs at least one period");
    RowScaler s{std::vector<double>(x.rows()), std::vector<double>(x.rows())};
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const std::vector<double> row = x.row_values(i);
        std::span<const double> head(row.data(), fit_end);
        s.mean[i] = stats::mean(head);
        s.stdev[i] = stats::pop_std(head);
        if (s.stdev[i] < 1e-12) s.stdev[i] = 1.0;
    }
    return s;
}

Tensor RowScaler::transform(const Tensor& x) const {
    if (x.rows() != mean.size()) throw ShapeError("row scaler fitted on a different row count");
    Tensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t t = 0; t < x.cols(); ++t) out(i, t) = (x(i, t) - mean[i]) / stdev[i];
    return out;
}

ColumnScaler ColumnScaler::fit(const Tensor& x, std::size_t begin, std::size_t end) {
    end = std::min(end, x.rows());
    if (begin >= end) throw TooShort("column scaler needs at least one row");
    ColumnScaler s{std::vector<double>(x.cols()), std::vector<double>(x.cols())};
    std::vector<double> col(end - begin);
    for (std::size_t k = 0; k < x.cols(); ++k) {
        for (std::size_t r = begin; r < end; ++r) col[r - begin] = x(r, k);
        s.mean[k] = stats::mean(col);
        s.stdev[k] = stats::pop_std(col);
        if (s.stdev[k] < 1e-12) s.stdev[k] = 1.0;
    }
    return s;
}

Tensor ColumnScaler::transform(const Tensor& x) const {
    if (x.cols() != mean.size()) throw ShapeError("column scaler fitted on a different width");
    Tensor out(x.rows(), x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t k = 0; k < x.cols(); ++k) out(r, k) = (x(r, k) - mean[k]) / stdev[k];
    return out;
}

}  // namespace umi::forecast
