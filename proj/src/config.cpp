#include "umi/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include "umi/errors.hpp"
#include "umi/rng.hpp"

namespace umi::config {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
    return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size()) {
        throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
    }
    return out;
}

std::size_t to_size(const std::string& key, const std::string& v) {
    return static_cast<std::size_t>(to_u64(key, v));
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::string fmt(double v) { return data::format_double(v); }
std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

struct Binding {
    std::function<void(RunConfig&, const std::string& key, const std::string& value)> set;
    std::function<std::string(const RunConfig&)> get;
};

#define UMI_DOUBLE(path)                                                                   \
    Binding {                                                                              \
        [](RunConfig& c, const std::string& k, const std::string& v) {                     \
            c.path = to_double(k, v);                                                      \
        },                                                                                 \
            [](const RunConfig& c) { return fmt(static_cast<double>(c.path)); }            \
    }
#define UMI_SIZE(path)                                                                     \
    Binding {                                                                              \
        [](RunConfig& c, const std::string& k, const std::string& v) {                     \
            c.path = to_size(k, v);                                                        \
        },                                                                                 \
            [](const RunConfig& c) { return fmt(static_cast<std::uint64_t>(c.path)); }     \
    }
#define UMI_BOOL(path)                                                                     \
    Binding {                                                                              \
        [](RunConfig& c, const std::string& k, const std::string& v) {                     \
            c.path = to_bool(k, v);                                                        \
        },                                                                                 \
            [](const RunConfig& c) { return fmt(static_cast<bool>(c.path)); }              \
    }
#define UMI_TEXT(path)                                                                     \
    Binding {                                                                              \
        [](RunConfig& c, const std::string&, const std::string& v) { c.path = v; },        \
            [](const RunConfig& c) { return c.path; }                                      \
    }

const std::map<std::string, Binding>& bindings() {
    static const std::map<std::string, Binding> table = {
        {"seed", Binding{[](RunConfig& c, const std::string& k,
                            const std::string& v) { c.seed = to_u64(k, v); },
                         [](const RunConfig& c) { return fmt(c.seed); }}},
        {"out", UMI_TEXT(out_dir)},
        {"data.source",
         Binding{[](RunConfig& c, const std::string& k, const std::string& v) {
                     if (v == "synthetic") c.source = DataSource::Synthetic;
                     else if (v == "csv") c.source = DataSource::Csv;
                     else throw ConfigError(k + ": expected synthetic or csv, got '" + v + "'");
                 },
                 [](const RunConfig& c) {
                     return std::string(c.source == DataSource::Csv ? "csv" : "synthetic");
                 }}},
        {"data.csv", UMI_TEXT(csv_path)},
        {"synth.stocks", UMI_SIZE(synth.stocks)},
        {"synth.periods", UMI_SIZE(synth.periods)},
        {"synth.feature_dim", UMI_SIZE(synth.feature_dim)},
        {"synth.volatility", UMI_DOUBLE(synth.volatility)},
        {"synth.volatility_dispersion", UMI_DOUBLE(synth.volatility_dispersion)},
        {"synth.tail_dof", UMI_DOUBLE(synth.tail_dof)},
        {"synth.market_volatility", UMI_DOUBLE(synth.market_volatility)},
        {"synth.start_price", UMI_DOUBLE(synth.start_price)},
        {"synth.event_probability", UMI_DOUBLE(synth.sentiment.event_probability)},
        {"synth.event_magnitude", UMI_DOUBLE(synth.sentiment.event_magnitude)},
        {"synth.precursor_strength", UMI_DOUBLE(synth.sentiment.precursor_strength)},
        {"synth.auto_plants", UMI_SIZE(auto_plants)},
        {"synth.auto_plant_beta", UMI_DOUBLE(auto_plant_beta)},
        {"synth.auto_plant_rho", UMI_DOUBLE(auto_plant_rho)},
        {"synth.auto_plant_noise", UMI_DOUBLE(auto_plant_noise)},
        {"split.train_end", UMI_TEXT(train_end)},
        {"split.test_start", UMI_TEXT(test_start)},
        {"split.test_end", UMI_TEXT(test_end)},
        {"features.normalize", UMI_BOOL(normalize_features)},
        {"features.relative_prices", UMI_BOOL(relative_prices)},
        {"sync.delta_threshold", UMI_DOUBLE(sync.delta_threshold)},
        {"sync.hm_ratio", UMI_DOUBLE(sync.hm_ratio)},
        {"stock.lambda1", UMI_DOUBLE(stock.lambda1)},
        {"stock.lr", UMI_DOUBLE(stock.lr)},
        {"stock.steps", UMI_SIZE(stock.steps)},
        {"stock.price_scaling",
         Binding{[](RunConfig& c, const std::string& k, const std::string& v) {
                     if (v == "raw") c.price_scaling = stock::PriceScaling::Raw;
                     else if (v == "first") c.price_scaling = stock::PriceScaling::FirstPrice;
                     else throw ConfigError(k + ": expected raw or first, got '" + v + "'");
                 },
                 [](const RunConfig& c) {
                     return std::string(c.price_scaling == stock::PriceScaling::Raw ? "raw"
                                                                                    : "first");
                 }}},
        {"market.window", UMI_SIZE(market.window)},
        {"market.hidden", UMI_SIZE(market.hidden)},
        {"market.batch", UMI_SIZE(market.batch)},
        {"market.epochs", UMI_SIZE(market.epochs)},
        {"market.lambda2", UMI_DOUBLE(market.lambda2)},
        {"market.lr", UMI_DOUBLE(market.lr)},
        {"forecast.window", UMI_SIZE(forecaster.window)},
        {"forecast.width", UMI_SIZE(forecaster.width)},
        {"forecast.heads", UMI_SIZE(forecaster.heads)},
        {"forecast.blocks", UMI_SIZE(forecaster.blocks)},
        {"forecast.ffn", UMI_SIZE(forecaster.ffn)},
        {"forecast.head_hidden", UMI_SIZE(forecaster.head_hidden)},
        {"forecast.lambda3", UMI_DOUBLE(forecaster.lambda3)},
        {"forecast.lr", UMI_DOUBLE(forecaster.lr)},
        {"forecast.max_epochs", UMI_SIZE(forecaster.max_epochs)},
        {"forecast.patience", UMI_SIZE(forecaster.patience)},
        {"forecast.batch_periods", UMI_SIZE(forecaster.batch_periods)},
        {"forecast.validation_fraction", UMI_DOUBLE(forecaster.validation_fraction)},
        {"forecast.ablation",
         Binding{[](RunConfig& c, const std::string&, const std::string& v) {
                     c.ablation = forecast::parse_ablation(v);
                 },
                 [](const RunConfig& c) { return std::string(forecast::to_string(c.ablation)); }}},
        {"portfolio.n_fraction", UMI_DOUBLE(portfolio.n_fraction)},
        {"portfolio.cost_rate", UMI_DOUBLE(portfolio.cost_rate)},
        {"portfolio.trading_days", UMI_SIZE(portfolio.trading_days)},
        {"portfolio.gross_wealth", UMI_BOOL(portfolio.gross_wealth)},
    };
    return table;
}

#undef UMI_DOUBLE
#undef UMI_SIZE
#undef UMI_BOOL
#undef UMI_TEXT

constexpr std::string_view kPlantPrefix = "synth.plant.";

std::vector<double> to_doubles(const std::string& key, const std::string& v) {
    std::vector<double> out;
    for (const auto& part : split(v, ',')) out.push_back(to_double(key, part));
    return out;
}

data::CointegrationPlant parse_plant(const std::string& key, const std::string& value) {
    data::CointegrationPlant p;
    bool has_target = false;
    for (const auto& field : split(value, ';')) {
        if (field.empty()) continue;
        const auto eq = field.find('=');
        if (eq == std::string::npos) throw ConfigError(key + ": expected name=value in '" + field + "'");
        const std::string name = trim(field.substr(0, eq)), v = trim(field.substr(eq + 1));
        if (name == "target") {
            p.target = to_size(key, v);
            has_target = true;
        } else if (name == "sources") {
            p.sources.clear();
            for (const auto& s : split(v, ',')) p.sources.push_back(to_size(key, s));
        } else if (name == "betas") {
            p.betas = to_doubles(key, v);
        } else if (name == "rho") {
            p.rho = to_double(key, v);
        } else if (name == "noise") {
            p.noise_scale = to_double(key, v);
        } else {
            throw ConfigError(key + ": unknown plant field '" + name + "'");
        }
    }
    if (!has_target) throw ConfigError(key + ": plant needs a target");
    return p;
}

std::string format_plant(const data::CointegrationPlant& p) {
    std::string s = "target=" + std::to_string(p.target) + "; sources=";
    for (std::size_t k = 0; k < p.sources.size(); ++k) {
        s += (k ? "," : "") + std::to_string(p.sources[k]);
    }
    s += "; betas=";
    for (std::size_t k = 0; k < p.betas.size(); ++k) s += (k ? "," : "") + fmt(p.betas[k]);
    s += "; rho=" + fmt(p.rho) + "; noise=" + fmt(p.noise_scale);
    return s;
}

}  // namespace

Entries parse_entries(std::istream& in) {
    Entries out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string text = trim(line);
        if (text.empty() || text[0] == '#') continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
        }
        const std::string key = trim(text.substr(0, eq));
        const std::string value = trim(text.substr(eq + 1));
        if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
        if (!out.emplace(key, value).second) {
            throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + key + "'");
        }
    }
    return out;
}

Entries load_entries(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    return parse_entries(in);
}

RunConfig RunConfig::from_entries(const Entries& entries) {
    RunConfig c;
    std::vector<std::pair<std::size_t, data::CointegrationPlant>> plants;
    bool source_given = false;
    for (const auto& [key, value] : entries) {
        if (key.starts_with(kPlantPrefix)) {
            const std::string index = key.substr(kPlantPrefix.size());
            plants.emplace_back(to_size(key, index), parse_plant(key, value));
            continue;
        }
        const auto it = bindings().find(key);
        if (it == bindings().end()) throw ConfigError("unknown config key '" + key + "'");
        it->second.set(c, key, value);
        if (key == "data.source") source_given = true;
    }
    if (!source_given && !c.csv_path.empty()) c.source = DataSource::Csv;
    if (c.source == DataSource::Synthetic && !c.csv_path.empty()) {
        throw ConfigError("data.csv is set but data.source is synthetic; give exactly one data source");
    }
    std::sort(plants.begin(), plants.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (auto& [index, p] : plants) c.synth.plants.push_back(std::move(p));
    return c;
}

Entries RunConfig::to_entries() const {
    Entries out;
    for (const auto& [key, b] : bindings()) out[key] = b.get(*this);
    for (std::size_t k = 0; k < synth.plants.size(); ++k) {
        out[std::string(kPlantPrefix) + std::to_string(k)] = format_plant(synth.plants[k]);
    }
    return out;
}

void RunConfig::validate() const {
    if (source == DataSource::Csv && csv_path.empty()) throw ConfigError("data.csv is required for csv data");
    if (train_end.empty()) throw ConfigError("split.train_end is required");
    if (stock.lambda1 < 0.0) throw ConfigError("stock.lambda1 must be >= 0");
    if (market.lambda2 < 0.0) throw ConfigError("market.lambda2 must be >= 0");
    if (market.window == 0) throw ConfigError("market.window must be >= 1");
    if (stock.steps == 0) throw ConfigError("stock.steps must be >= 1");
    sync.validate();
    forecast::apply_ablation(forecaster, ablation).validate();
    portfolio.validate();
    if (source == DataSource::Synthetic) resolved_synth().validate();
}

std::string RunConfig::canonical() const {
    std::string s;
    // The output directory does not influence results.
    for (const auto& [k, v] : to_entries()) {
        if (k != "out") s += k + " = " + v + "\n";
    }
    return s;
}

std::uint64_t RunConfig::hash() const { return fnv1a64(canonical()); }

std::string RunConfig::hash_hex() const {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash()));
    return buf;
}

data::SyntheticSpec RunConfig::resolved_synth() const {
    data::SyntheticSpec s = synth;
    s.seed = derive_seed(seed, "stage/data");
    if (auto_plants > 0) {
        if (2 * auto_plants > s.stocks) {
            throw ConfigError("synth.auto_plants needs 2 * auto_plants <= synth.stocks");
        }
        for (std::size_t k = 0; k < auto_plants; ++k) {
            data::CointegrationPlant p;
            p.target = k;
            p.sources = {auto_plants + k};
            p.betas = {auto_plant_beta};
            p.rho = auto_plant_rho;
            p.noise_scale = auto_plant_noise;
            s.plants.push_back(p);
        }
    }
    return s;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    return RunConfig::from_entries(load_entries(path));
}

}  // namespace umi::config
