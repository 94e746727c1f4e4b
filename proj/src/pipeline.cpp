#include "umi/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "umi/errors.hpp"
#include "umi/rng.hpp"

namespace umi::pipeline {

namespace fs = std::filesystem;
using diff::Tensor;
using nlohmann::json;

namespace {

template <class F>
auto in_stage(const std::string& stage, F&& body) -> decltype(body()) {
    try {
        return body();
    } catch (const Error& e) {
        throw StageFailure(stage, e.kind(), e.what());
    }
}

// ---------------------------------------------------------------------------
// split bounds

std::size_t resolve_bound(const std::string& key, const std::string& text,
                          const data::MarketPanel& panel, std::size_t fallback) {
    const std::size_t T = panel.num_periods();
    if (text.empty()) return fallback;
    if (text.find('-') != std::string::npos) {
        const auto it = std::lower_bound(panel.periods.begin(), panel.periods.end(), text);
        return static_cast<std::size_t>(it - panel.periods.begin());
    }
    if (text.find('.') != std::string::npos) {
        double f = 0.0;
        try {
            f = std::stod(text);
        } catch (const std::exception&) {
            throw ConfigError(key + ": cannot read '" + text + "'");
        }
        if (!(f > 0.0 && f < 1.0)) throw ConfigError(key + ": fractions must lie in (0, 1)");
        return static_cast<std::size_t>(std::floor(f * static_cast<double>(T)));
    }
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(text, &used);
        if (used != text.size()) throw ConfigError(key + ": cannot read '" + text + "'");
        return static_cast<std::size_t>(v);
    } catch (const std::logic_error&) {
        throw ConfigError(key + ": cannot read '" + text + "'");
    }
}

// ---------------------------------------------------------------------------
// checkpoints

json tensor_json(const Tensor& t) {
    return {{"rows", t.rows()}, {"cols", t.cols()},
            {"values", std::vector<double>(t.values().begin(), t.values().end())}};
}

Tensor tensor_from(const json& j) {
    return Tensor(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>(),
                  j.at("values").get<std::vector<double>>());
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(1) << '\n';
}

json read_checkpoint(const fs::path& path, const config::RunConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw MissingArtifact("cannot open checkpoint " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    if (j.value("config_hash", std::string()) != cfg.hash_hex()) {
        throw ConfigError(path.string() + " was written by a different configuration");
    }
    return j;
}

json stock_json(const config::RunConfig& cfg, const stock::CointegrationParams& p) {
    return {{"config_hash", cfg.hash_hex()},
            {"beta", tensor_json(p.beta)},
            {"logits", tensor_json(p.logits)},
            {"rho_raw", tensor_json(p.rho_raw)}};
}

stock::CointegrationParams stock_from(const json& j) {
    return {tensor_from(j.at("beta")), tensor_from(j.at("logits")), tensor_from(j.at("rho_raw"))};
}

const std::vector<std::string> kMarketFields = {"ws",  "b",      "wi",     "w_eta",  "w_m",
                                                "b_m", "cls_w1", "cls_b1", "cls_w2", "cls_b2"};

json market_json(const config::RunConfig& cfg, market::MarketEncoderParams p) {
    json j = {{"config_hash", cfg.hash_hex()}};
    const auto tensors = p.tensors();
    for (std::size_t k = 0; k < tensors.size(); ++k) j[kMarketFields[k]] = tensor_json(*tensors[k]);
    return j;
}

market::MarketEncoderParams market_from(const json& j) {
    market::MarketEncoderParams p;
    const auto tensors = p.tensors();
    for (std::size_t k = 0; k < tensors.size(); ++k) *tensors[k] = tensor_from(j.at(kMarketFields[k]));
    return p;
}

json forecaster_json(const config::RunConfig& cfg, forecast::ForecasterParams p) {
    json j = {{"config_hash", cfg.hash_hex()}, {"heads", p.heads}, {"blocks", p.blocks.size()}};
    json tensors = json::array();
    for (const Tensor* t : p.tensors()) tensors.push_back(tensor_json(*t));
    j["tensors"] = std::move(tensors);
    return j;
}

forecast::ForecasterParams forecaster_from(const json& j) {
    forecast::ForecasterParams p;
    p.heads = j.at("heads").get<std::size_t>();
    p.blocks.resize(j.at("blocks").get<std::size_t>());
    const auto tensors = p.tensors();
    const json& saved = j.at("tensors");
    if (saved.size() != tensors.size()) throw ParseError("forecaster checkpoint has the wrong layout");
    for (std::size_t k = 0; k < tensors.size(); ++k) *tensors[k] = tensor_from(saved[k]);
    return p;
}

// ---------------------------------------------------------------------------
// artifacts

std::ofstream open_artifact(const fs::path& path, const config::RunConfig& cfg) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << stamp(cfg) << '\n';
    return out;
}

void write_factors(const fs::path& path, const config::RunConfig& cfg, const RunResult& r) {
    auto out = open_artifact(path, cfg);
    out << "stock_id,date,u,p_tilde\n";
    const auto& f = r.series.factors;
    for (std::size_t i = 0; i < r.raw.num_stocks(); ++i) {
        for (std::size_t t = 0; t < r.raw.num_periods(); ++t) {
            out << r.raw.stock_ids[i] << ',' << r.raw.periods[t] << ',' << data::format_double(f.u(i, t))
                << ',' << data::format_double(f.virtual_price(i, t)) << '\n';
        }
    }
}

void write_market(const fs::path& path, const config::RunConfig& cfg, const RunResult& r) {
    auto out = open_artifact(path, cfg);
    out << "date";
    for (std::size_t k = 0; k < r.series.m_raw.cols(); ++k) out << ",m_" << k + 1;
    out << '\n';
    for (std::size_t t = r.series.first_valid; t < r.raw.num_periods(); ++t) {
        out << r.raw.periods[t];
        for (std::size_t k = 0; k < r.series.m_raw.cols(); ++k) {
            out << ',' << data::format_double(r.series.m_raw(t, k));
        }
        out << '\n';
    }
}

void write_predictions(const fs::path& path, const config::RunConfig& cfg, const RunResult& r) {
    auto out = open_artifact(path, cfg);
    out << "date,stock_id,y_hat,y_true\n";
    for (std::size_t t = r.split.test_start; t < r.split.test_end; ++t) {
        for (std::size_t i = 0; i < r.raw.num_stocks(); ++i) {
            out << r.raw.periods[t] << ',' << r.raw.stock_ids[i] << ','
                << data::format_double(r.prediction.y_hat(i, t)) << ','
                << data::format_double(r.raw.returns(i, t)) << '\n';
        }
    }
}

void write_series(const fs::path& path, const config::RunConfig& cfg, const RunResult& r) {
    auto out = open_artifact(path, cfg);
    out << "date,y_STR,R,CW\n";
    const auto& rep = r.report;
    for (std::size_t k = 0; k < rep.gross.size(); ++k) {
        out << r.raw.periods[r.split.test_start + k] << ',' << data::format_double(rep.gross[k]) << ','
            << data::format_double(rep.net[k]) << ',' << data::format_double(rep.wealth[k]) << '\n';
    }
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    return out;
}

Split validated_split(const config::RunConfig& cfg, const data::MarketPanel& raw) {
    const Split s = resolve_split(cfg, raw);
    const std::size_t first = std::max(cfg.forecaster.window, cfg.market.window);
    if (s.test_start < first) {
        throw ConfigError("test split starts at period " + std::to_string(s.test_start) +
                          " but forecasts need " + std::to_string(first) + " periods of history");
    }
    return s;
}

// Features as the models see them: relative prices (if enabled), then scaled.
data::MarketPanel price_view(const data::MarketPanel& raw, const config::RunConfig& cfg) {
    data::MarketPanel p = raw;
    if (cfg.relative_prices) p.features = data::relative_price_features(raw);
    return p;
}

data::FeatureScaler fit_feature_scaler(const config::RunConfig& cfg, const data::MarketPanel& raw,
                                       std::size_t train_end) {
    if (!cfg.normalize_features) return data::FeatureScaler::identity(raw.feature_dim);
    return data::FeatureScaler::fit(price_view(raw, cfg), train_end);
}

data::MarketPanel model_features(const data::MarketPanel& raw, const FrozenModels& models,
                                 const config::RunConfig& cfg) {
    data::MarketPanel p = price_view(raw, cfg);
    p.features = models.features.transform(p);
    return p;
}

RunResult run_impl(const config::RunConfig& cfg, const fs::path* out, bool resume) {
    in_stage("config", [&] { cfg.validate(); });
    RunResult r;
    r.config = cfg;
    r.raw = in_stage("data", [&] { return load_data(cfg); });
    r.split = in_stage("split", [&] { return validated_split(cfg, r.raw); });

    const fs::path ckpt = out ? *out / "checkpoints" : fs::path();
    if (out) fs::create_directories(ckpt);
    auto restorable = [&](const char* name) { return out && resume && fs::exists(ckpt / name); };

    // Step 1 and 2. With both checkpoints present nothing upstream is trained.
    if (restorable("stock.json") && restorable("market.json")) {
        in_stage("resume", [&] {
            r.models.features = fit_feature_scaler(cfg, r.raw, r.split.train_end);
            r.models.stock = stock_from(read_checkpoint(ckpt / "stock.json", cfg));
            r.models.market = market_from(read_checkpoint(ckpt / "market.json", cfg));
            const auto prices = stock::prepare_prices(r.raw, cfg.price_scaling);
            r.models.u_scaler = forecast::RowScaler::fit(
                stock::residual(prices, r.models.stock).u, r.split.train_end);
            const data::MarketPanel panel = model_features(r.raw, r.models, cfg);
            const Tensor m = market::market_series(panel, r.models.market, cfg.market.window);
            r.models.m_scaler =
                forecast::ColumnScaler::fit(m, cfg.market.window - 1, r.split.train_end);
        });
        r.resumed = {"stock", "market"};
    } else {
        UpstreamResult up = train_upstream(cfg, r.raw, r.split);
        r.models = std::move(up.models);
        if (out) {
            write_json(ckpt / "stock.json", stock_json(cfg, r.models.stock));
            write_json(ckpt / "market.json", market_json(cfg, r.models.market));
        }
    }
    r.series = in_stage("factors", [&] { return derive_series(r.raw, r.models, cfg); });

    // Step 3.
    const forecast::ForecasterConfig fcfg = forecaster_config(cfg);
    if (restorable("forecaster.json") && !r.resumed.empty()) {
        r.models.forecaster =
            in_stage("resume", [&] { return forecaster_from(read_checkpoint(ckpt / "forecaster.json", cfg)); });
        r.resumed.push_back("forecaster");
    } else {
        r.models.forecaster = in_stage("forecaster", [&] {
            return forecast::train_forecaster(r.series.inputs(), r.split.train_end, fcfg).params;
        });
        if (out) write_json(ckpt / "forecaster.json", forecaster_json(cfg, r.models.forecaster));
    }
    r.prediction = in_stage("predict", [&] {
        return forecast::predict_range(r.models.forecaster, r.series.inputs(), fcfg,
                                       r.split.test_start, r.split.test_end);
    });

    // Step 4.
    r.report = in_stage("backtest", [&] {
        return eval::backtest(r.prediction.y_hat, r.raw.returns, r.split.test_start,
                              r.split.test_end, cfg.portfolio);
    });

    if (out) {
        in_stage("write", [&] {
            write_factors(*out / "factors.csv", cfg, r);
            write_market(*out / "market_repr.csv", cfg, r);
            write_predictions(*out / "predictions.csv", cfg, r);
            write_series(*out / "series.csv", cfg, r);
            write_text(*out / "report.txt", format_report(cfg, r));
            std::string resolved = "# resolved configuration\n";
            for (const auto& [k, v] : cfg.to_entries()) resolved += k + " = " + v + "\n";
            write_text(*out / "config.txt", resolved);
        });
    }
    return r;
}

}  // namespace

Split resolve_split(const config::RunConfig& cfg, const data::MarketPanel& panel) {
    const std::size_t T = panel.num_periods();
    Split s;
    s.train_end = resolve_bound("split.train_end", cfg.train_end, panel, T);
    s.test_start = resolve_bound("split.test_start", cfg.test_start, panel, s.train_end);
    s.test_end = resolve_bound("split.test_end", cfg.test_end, panel, T);
    if (s.train_end < 2 || s.train_end > T) {
        throw ConfigError("split.train_end must fall inside the panel");
    }
    if (s.test_start < s.train_end) {
        throw ConfigError("test split starts at period " + std::to_string(s.test_start) +
                          ", before the training split ends at " + std::to_string(s.train_end));
    }
    if (s.test_end > T || s.test_start >= s.test_end) {
        throw ConfigError("test split is empty or runs past the panel");
    }
    return s;
}

data::MarketPanel load_data(const config::RunConfig& cfg) {
    if (cfg.source == config::DataSource::Csv) return data::load_panel(cfg.csv_path);
    return data::generate_synthetic(cfg.resolved_synth());
}

forecast::ForecastInputs DerivedSeries::inputs() const {
    return {&panel, &u, &m, &repr, first_valid};
}

DerivedSeries derive_series(const data::MarketPanel& raw, const FrozenModels& models,
                            const config::RunConfig& cfg) {
    DerivedSeries s;
    s.panel = model_features(raw, models, cfg);
    s.factors = stock::residual(stock::prepare_prices(raw, cfg.price_scaling), models.stock);
    s.u = models.u_scaler.transform(s.factors.u);
    const std::size_t window = cfg.market.window;
    s.first_valid = window - 1;
    s.m_raw = market::market_series(s.panel, models.market, window);
    s.m = models.m_scaler.transform(s.m_raw);
    for (std::size_t t = 0; t < s.first_valid && t < s.m.rows(); ++t)
        for (std::size_t k = 0; k < s.m.cols(); ++k) s.m(t, k) = 0.0;
    s.repr = market::repr_series(s.panel, models.market, window);
    return s;
}

forecast::ForecasterConfig forecaster_config(const config::RunConfig& cfg) {
    forecast::ForecasterConfig f = forecast::apply_ablation(cfg.forecaster, cfg.ablation);
    f.seed = derive_seed(cfg.seed, "stage/forecast");
    return f;
}

UpstreamResult train_upstream(const config::RunConfig& cfg, const data::MarketPanel& raw,
                              const Split& split) {
    UpstreamResult up;
    FrozenModels& m = up.models;
    m.features = fit_feature_scaler(cfg, raw, split.train_end);

    in_stage("stock", [&] {
        const Tensor prices = stock::prepare_prices(raw, cfg.price_scaling);
        Tensor train(prices.rows(), split.train_end);
        for (std::size_t i = 0; i < prices.rows(); ++i)
            for (std::size_t t = 0; t < split.train_end; ++t) train(i, t) = prices(i, t);
        stock::StockTrainConfig scfg = cfg.stock;
        scfg.seed = derive_seed(cfg.seed, "stage/stock");
        const stock::StockTrainResult res = stock::train_stock_factors(train, scfg);
        m.stock = res.params;
        m.u_scaler = forecast::RowScaler::fit(stock::residual(prices, m.stock).u, split.train_end);
        up.stock_initial_loss = res.initial_loss;
        up.stock_final_loss = res.final_loss;
    });

    in_stage("market", [&] {
        const data::MarketPanel panel = model_features(raw, m, cfg);
        const auto labels = data::compute_synchronism_labels(
            data::compute_deltas(raw.returns, cfg.sync), cfg.sync);
        market::MarketTrainConfig mcfg = cfg.market;
        mcfg.seed = derive_seed(cfg.seed, "stage/market");
        const market::MarketTrainResult res =
            market::train_market_factors(panel, labels, split.train_end, mcfg);
        m.market = res.params;
        m.m_scaler = forecast::ColumnScaler::fit(res.series, res.first_valid, split.train_end);
        up.market_initial_loss = res.initial_loss;
        up.market_final_loss = res.final_loss;
    });

    up.series = in_stage("factors", [&] { return derive_series(raw, m, cfg); });
    return up;
}

forecast::Prediction predict_frozen(const data::MarketPanel& raw, const FrozenModels& models,
                                    const config::RunConfig& cfg, std::size_t first,
                                    std::size_t last) {
    const DerivedSeries s = derive_series(raw, models, cfg);
    return forecast::predict_range(models.forecaster, s.inputs(), forecaster_config(cfg), first, last);
}

RunResult run(const config::RunConfig& cfg) { return run_impl(cfg, nullptr, false); }

RunResult run_to_directory(const config::RunConfig& cfg, const fs::path& out, bool resume) {
    fs::create_directories(out);
    return run_impl(cfg, &out, resume);
}

fs::path write_synthetic(const config::RunConfig& cfg, const fs::path& out) {
    const data::MarketPanel panel = in_stage("synth", [&] {
        cfg.validate();
        return data::generate_synthetic(cfg.resolved_synth());
    });
    fs::create_directories(out);
    const fs::path path = out / "panel.csv";
    std::ofstream f(path);
    if (!f) throw StageFailure("synth", "IoError", "cannot write " + path.string());
    data::write_panel(f, panel);
    return path;
}

std::string stamp(const config::RunConfig& cfg) {
    return "# config_hash=" + cfg.hash_hex() + " seed=" + std::to_string(cfg.seed);
}

std::string format_metric(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    std::string s = buf;
    if (s == "-0.0000") s = "0.0000";
    return s;
}

std::string format_report(const config::RunConfig& cfg, const RunResult& run) {
    const auto& rep = run.report;
    const auto& f = rep.forecast;
    std::ostringstream out;
    auto flag = [](bool b) { return b ? "true" : "false"; };
    out << stamp(cfg) << '\n';
    out << "ablation: " << forecast::to_string(cfg.ablation) << '\n';
    out << "stocks: " << run.raw.num_stocks() << '\n';
    out << "train_end: " << run.raw.periods[run.split.train_end - 1] << '\n';
    out << "test_start: " << run.raw.periods[run.split.test_start] << '\n';
    out << "test_end: " << run.raw.periods[run.split.test_end - 1] << '\n';
    out << "test_periods: " << run.split.test_end - run.split.test_start << '\n';
    out << "portfolio_size: " << cfg.portfolio.portfolio_size(run.raw.num_stocks()) << '\n';
    out << "rmse: " << format_metric(f.rmse) << '\n';
    out << "mae: " << format_metric(f.mae) << '\n';
    out << "ic: " << format_metric(f.ic) << '\n';
    out << "icir: " << format_metric(f.icir) << '\n';
    out << "rank_ic: " << format_metric(f.rank_ic) << '\n';
    out << "rank_icir: " << format_metric(f.rank_icir) << '\n';
    out << "ar: " << format_metric(rep.risk.ar) << '\n';
    out << "av: " << format_metric(rep.risk.av) << '\n';
    out << "sr: " << format_metric(rep.risk.sr) << '\n';
    out << "mdd: " << format_metric(rep.max_drawdown) << '\n';
    out << "cr: " << format_metric(rep.calmar.value) << '\n';
    out << "final_wealth: " << format_metric(rep.wealth.empty() ? 1.0 : rep.wealth.back()) << '\n';
    out << "icir_defined: " << flag(f.icir_defined) << '\n';
    out << "rank_icir_defined: " << flag(f.rank_icir_defined) << '\n';
    out << "sr_defined: " << flag(rep.risk.sr_defined) << '\n';
    out << "cr_defined: " << flag(rep.calmar.defined) << '\n';
    out << "wealth_basis: " << (cfg.portfolio.gross_wealth ? "gross" : "net") << '\n';
    return out.str();
}

eval::BacktestReport report_from_directory(const fs::path& dir) {
    const fs::path pred_path = dir / "predictions.csv";
    if (!fs::exists(pred_path)) throw MissingArtifact(pred_path.string() + " not found");
    eval::PortfolioConfig portfolio;
    if (fs::exists(dir / "config.txt")) {
        portfolio = config::load_run_config(dir / "config.txt").portfolio;
    }

    std::ifstream in(pred_path);
    if (!in) throw IoError("cannot read " + pred_path.string());
    std::map<std::pair<std::string, std::string>, std::pair<double, double>> rows;
    std::set<std::string> dates, stocks;
    std::string line;
    bool header = false;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        const auto cells = split_csv(line);
        if (!header) {
            if (cells != std::vector<std::string>{"date", "stock_id", "y_hat", "y_true"}) {
                throw ParseError(pred_path.string() + ": unexpected header '" + line + "'");
            }
            header = true;
            continue;
        }
        if (cells.size() != 4) {
            throw ParseError(pred_path.string() + ":" + std::to_string(lineno) + ": expected 4 cells");
        }
        double y_hat = 0.0, y_true = 0.0;
        try {
            y_hat = std::stod(cells[2]);
            y_true = std::stod(cells[3]);
        } catch (const std::exception&) {
            throw ParseError(pred_path.string() + ":" + std::to_string(lineno) + ": bad number");
        }
        dates.insert(cells[0]);
        stocks.insert(cells[1]);
        rows[{cells[0], cells[1]}] = {y_hat, y_true};
    }
    if (rows.empty()) throw MissingArtifact(pred_path.string() + " holds no predictions");
    if (rows.size() != dates.size() * stocks.size()) {
        throw HoleInPanel(pred_path.string() + " does not cover every (date, stock) pair");
    }
    Tensor y_hat(stocks.size(), dates.size()), y_true(stocks.size(), dates.size());
    std::size_t t = 0;
    for (const auto& d : dates) {
        std::size_t i = 0;
        for (const auto& s : stocks) {
            const auto& v = rows.at({d, s});
            y_hat(i, t) = v.first;
            y_true(i, t) = v.second;
            ++i;
        }
        ++t;
    }
    return eval::backtest(y_hat, y_true, 0, dates.size(), portfolio);
}

std::string format_metric_table(const eval::BacktestReport& rep) {
    const auto& f = rep.forecast;
    const std::vector<std::pair<const char*, double>> cols = {
        {"RMSE", f.rmse},  {"MAE", f.mae},     {"IC", f.ic},           {"ICIR", f.icir},
        {"RankIC", f.rank_ic}, {"RankICIR", f.rank_icir}, {"AR", rep.risk.ar},
        {"AV", rep.risk.av},   {"SR", rep.risk.sr},       {"MDD", rep.max_drawdown},
        {"CR", rep.calmar.value}};
    std::string head, vals;
    char buf[32];
    for (const auto& [name, v] : cols) {
        std::snprintf(buf, sizeof(buf), "%10s", name);
        head += buf;
        std::snprintf(buf, sizeof(buf), "%10s", format_metric(v).c_str());
        vals += buf;
    }
    std::string out = head + "\n" + vals + "\n";
    if (!rep.risk.sr_defined) out += "note: SR undefined (AV = 0), shown as 0\n";
    if (!rep.calmar.defined) out += "note: CR undefined (MDD = 0), shown as 0\n";
    if (!f.icir_defined || !f.rank_icir_defined) out += "note: an IR is undefined (zero spread), shown as 0\n";
    return out;
}

}  // namespace umi::pipeline
