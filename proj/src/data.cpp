#include "umi/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "umi/errors.hpp"

namespace umi::data {

diff::Tensor MarketPanel::features_at(std::size_t t) const {
    diff::Tensor out(num_stocks(), feature_dim);
    for (std::size_t i = 0; i < num_stocks(); ++i)
        for (std::size_t d = 0; d < feature_dim; ++d) out(i, d) = feature(i, t, d);
    return out;
}

void MarketPanel::validate() const {
    const std::size_t n = num_stocks(), t = num_periods();
    if (features.size() != n * t * feature_dim) {
        throw HoleInPanel("feature cube holds " + std::to_string(features.size()) +
                          " values, expected " + std::to_string(n * t * feature_dim));
    }
    if (prices.rows() != n || prices.cols() != t) {
        throw HoleInPanel("price matrix " + diff::to_string(prices.shape()) + " does not match " +
                          std::to_string(n) + "x" + std::to_string(t));
    }
    if (returns.rows() != n || returns.cols() != t) {
        throw HoleInPanel("return matrix " + diff::to_string(returns.shape()) + " does not match");
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < t; ++k) {
            if (!(prices(i, k) > 0.0) || !std::isfinite(prices(i, k))) {
                throw BadPrice("stock " + stock_ids[i] + " period " + periods[k] + " price " +
                               std::to_string(prices(i, k)));
            }
        }
    }
    for (double v : features) {
        if (!std::isfinite(v)) throw ParseError("non-finite feature value");
    }
}

MarketPanel make_panel(std::vector<std::string> stock_ids, std::vector<std::string> periods,
                       std::size_t feature_dim, std::vector<double> features,
                       diff::Tensor prices) {
    MarketPanel p;
    p.stock_ids = std::move(stock_ids);
    p.periods = std::move(periods);
    p.feature_dim = feature_dim;
    p.features = std::move(features);
    p.prices = std::move(prices);
    p.returns = diff::Tensor(p.prices.rows(), p.prices.cols());
    if (p.prices.rows() != p.num_stocks() || p.prices.cols() != p.num_periods()) {
        throw HoleInPanel("price matrix " + diff::to_string(p.prices.shape()) +
                          " does not match identifiers");
    }
    for (std::size_t i = 0; i < p.num_stocks(); ++i) {
        for (std::size_t t = 0; t < p.num_periods(); ++t) {
            if (!(p.prices(i, t) > 0.0)) {
                throw BadPrice("stock " + p.stock_ids[i] + " period " + p.periods[t] +
                               " price " + std::to_string(p.prices(i, t)));
            }
        }
    }
    if (p.num_periods() >= 2) p.returns = compute_returns(p.prices);
    p.validate();
    return p;
}

diff::Tensor compute_returns(const diff::Tensor& prices) {
    if (prices.cols() < 2) {
        throw TooShort("returns need at least 2 periods, got " + std::to_string(prices.cols()));
    }
    diff::Tensor out(prices.rows(), prices.cols(), 0.0);
    for (std::size_t i = 0; i < prices.rows(); ++i) {
        for (std::size_t t = 1; t < prices.cols(); ++t) {
            const double prev = prices(i, t - 1);
            if (!(prev > 0.0)) throw BadPrice("non-positive price " + std::to_string(prev));
            out(i, t) = (prices(i, t) - prev) / prev * 100.0;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synchronism

void SynchronismConfig::validate() const {
    if (!(delta_threshold > 0.0)) throw ConfigError("delta_threshold must be > 0");
    if (!(hm_ratio > 0.0 && hm_ratio < 1.0)) throw ConfigError("hm_ratio must lie in (0, 1)");
}

long SynchronismConfig::threshold_count(std::size_t stocks) const {
    return static_cast<long>(std::ceil(hm_ratio * static_cast<double>(stocks)));
}

std::array<double, 3> SynchronismLabel::one_hot() const {
    std::array<double, 3> v{0.0, 0.0, 0.0};
    v[index()] = 1.0;
    return v;
}

std::string_view to_string(SyncClass c) {
    switch (c) {
        case SyncClass::Up: return "UP";
        case SyncClass::Down: return "DOWN";
        case SyncClass::Neutral: return "NEUTRAL";
    }
    return "?";
}

long DeltaMatrix::column_sum(std::size_t t) const {
    long s = 0;
    for (std::size_t i = 0; i < stocks; ++i) s += (*this)(i, t);
    return s;
}

DeltaMatrix compute_deltas(const diff::Tensor& returns, const SynchronismConfig& cfg) {
    DeltaMatrix d{returns.rows(), returns.cols(), std::vector<int>(returns.size(), 0)};
    for (std::size_t i = 0; i < d.stocks; ++i) {
        for (std::size_t t = 0; t < d.periods; ++t) {
            const double r = returns(i, t);
            d.values[i * d.periods + t] =
                r > cfg.delta_threshold ? 1 : (r < -cfg.delta_threshold ? -1 : 0);
        }
    }
    return d;
}

std::vector<SynchronismLabel> compute_synchronism_labels(const DeltaMatrix& deltas,
                                                         const SynchronismConfig& cfg) {
    const long hm = cfg.threshold_count(deltas.stocks);
    std::vector<SynchronismLabel> labels(deltas.periods);
    for (std::size_t t = 0; t < deltas.periods; ++t) {
        const long s = deltas.column_sum(t);
        labels[t].cls = s > hm ? SyncClass::Up : (s < -hm ? SyncClass::Down : SyncClass::Neutral);
    }
    return labels;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(trim(std::string_view(line).substr(start, pos - start)));
        if (pos == std::string::npos) break;
        start = pos + 1;
    }
    return out;
}

double parse_double(const std::string& s, std::size_t line_no) {
    double v = 0.0;
    const auto* first = s.data();
    const auto* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
        throw ParseError("line " + std::to_string(line_no) + ": bad number '" + s + "'");
    }
    return v;
}

}  // namespace

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

MarketPanel load_panel(const std::filesystem::path& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return read_panel(in, schema);
}

MarketPanel read_panel(std::istream& in, const CsvSchema& schema) {
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty() || line.front() == '#') continue;
        header = split_csv(line);
        break;
    }
    if (header.empty()) throw ParseError("panel CSV has no header row");

    auto column = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw ParseError("panel CSV lacks column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t c_date = column(schema.date), c_id = column(schema.stock_id);
    // Stored in canonical feature order.
    const std::array<std::size_t, 6> c_feat = {column(schema.open), column(schema.close),
                                               column(schema.high), column(schema.low),
                                               column(schema.vwap), column(schema.volume)};

    std::map<std::pair<std::string, std::string>, std::array<double, 6>> rows;
    std::set<std::string> ids, dates;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty() || line.front() == '#') continue;
        const auto cells = split_csv(line);
        if (cells.size() != header.size()) {
            throw ParseError("line " + std::to_string(line_no) + ": expected " +
                             std::to_string(header.size()) + " cells, got " +
                             std::to_string(cells.size()));
        }
        std::array<double, 6> f{};
        for (std::size_t d = 0; d < 6; ++d) f[d] = parse_double(cells[c_feat[d]], line_no);
        if (!(f[kClose] > 0.0)) {
            throw BadPrice("line " + std::to_string(line_no) + ": close " + cells[c_feat[kClose]]);
        }
        auto key = std::make_pair(cells[c_id], cells[c_date]);
        if (!rows.emplace(key, f).second) {
            throw DuplicateRow("stock " + key.first + " date " + key.second + " (line " +
                               std::to_string(line_no) + ")");
        }
        ids.insert(cells[c_id]);
        dates.insert(cells[c_date]);
    }
    if (rows.empty()) throw ParseError("panel CSV has no data rows");

    std::vector<std::string> stock_ids(ids.begin(), ids.end());
    std::vector<std::string> periods(dates.begin(), dates.end());
    const std::size_t n = stock_ids.size(), t = periods.size();
    std::vector<double> features(n * t * 6);
    diff::Tensor prices(n, t);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < t; ++k) {
            const auto it = rows.find({stock_ids[i], periods[k]});
            if (it == rows.end()) {
                throw HoleInPanel("no row for stock " + stock_ids[i] + " on " + periods[k]);
            }
            for (std::size_t d = 0; d < 6; ++d) features[(i * t + k) * 6 + d] = it->second[d];
            prices(i, k) = it->second[kClose];
        }
    }
    return make_panel(std::move(stock_ids), std::move(periods), 6, std::move(features),
                      std::move(prices));
}

void write_panel(std::ostream& out, const MarketPanel& panel) {
    if (panel.feature_dim < 6) {
        throw ShapeError("panel CSV needs the six OHLCV features, panel has " +
                         std::to_string(panel.feature_dim));
    }
    out << "date,stock_id,open,high,low,close,vwap,volume\n";
    for (std::size_t i = 0; i < panel.num_stocks(); ++i) {
        for (std::size_t t = 0; t < panel.num_periods(); ++t) {
            out << panel.periods[t] << ',' << panel.stock_ids[i];
            for (std::size_t d : {kOpen, kHigh, kLow, kClose, kVwap, kVolume}) {
                out << ',' << format_double(panel.feature(i, t, d));
            }
            out << '\n';
        }
    }
}

// ---------------------------------------------------------------------------
// Scaling

std::vector<double> relative_price_features(const MarketPanel& panel) {
    const std::size_t D = panel.feature_dim, T = panel.num_periods();
    if (D < kFeatureNames.size() - 1) {
        throw ShapeError("relative prices need the open/close/high/low/vwap features, panel has " +
                         std::to_string(D));
    }
    std::vector<double> out = panel.features;
    for (std::size_t i = 0; i < panel.num_stocks(); ++i) {
        for (std::size_t t = 0; t < T; ++t) {
            const double ref = panel.feature(i, t == 0 ? 0 : t - 1, kClose);
            if (!(ref > 0.0)) {
                throw BadPrice("non-positive close for " + panel.stock_ids[i] + " at " +
                               panel.periods[t == 0 ? 0 : t - 1]);
            }
            for (std::size_t d = 0; d <= kVwap; ++d) {
                double& x = out[(i * T + t) * D + d];
                x = 100.0 * (x / ref - 1.0);
            }
        }
    }
    return out;
}

FeatureScaler FeatureScaler::fit(const MarketPanel& panel, std::size_t fit_end) {
    const std::size_t dim = panel.feature_dim;
    fit_end = std::min(fit_end, panel.num_periods());
    if (fit_end == 0) throw TooShort("scaler needs at least one period");
    FeatureScaler s{std::vector<double>(dim, 0.0), std::vector<double>(dim, 0.0)};
    const double n = static_cast<double>(panel.num_stocks() * fit_end);
    for (std::size_t i = 0; i < panel.num_stocks(); ++i)
        for (std::size_t t = 0; t < fit_end; ++t)
            for (std::size_t d = 0; d < dim; ++d) s.mean[d] += panel.feature(i, t, d);
    for (double& m : s.mean) m /= n;
    for (std::size_t i = 0; i < panel.num_stocks(); ++i) {
        for (std::size_t t = 0; t < fit_end; ++t) {
            for (std::size_t d = 0; d < dim; ++d) {
                const double x = panel.feature(i, t, d) - s.mean[d];
                s.stdev[d] += x * x;
            }
        }
    }
    for (double& v : s.stdev) {
        v = std::sqrt(v / n);
        if (v < 1e-12) v = 1.0;
    }
    return s;
}

FeatureScaler FeatureScaler::identity(std::size_t feature_dim) {
    return {std::vector<double>(feature_dim, 0.0), std::vector<double>(feature_dim, 1.0)};
}

std::vector<double> FeatureScaler::transform(const MarketPanel& panel) const {
    if (mean.size() != panel.feature_dim) {
        throw ShapeError("scaler fitted for " + std::to_string(mean.size()) +
                         " features, panel has " + std::to_string(panel.feature_dim));
    }
    std::vector<double> out(panel.features.size());
    const std::size_t dim = panel.feature_dim;
    for (std::size_t k = 0; k < out.size(); ++k) {
        const std::size_t d = k % dim;
        out[k] = (panel.features[k] - mean[d]) / stdev[d];
    }
    return out;
}

}  // namespace umi::data
