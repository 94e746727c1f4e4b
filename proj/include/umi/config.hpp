#pragma once

// Run configuration. Files hold one `key = value` per line; dotted prefixes
// group keys into sections, `#` starts a comment. Every key is known in
// advance, so a typo is an error rather than a silently ignored setting.

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include "umi/data.hpp"
#include "umi/evaluation.hpp"
#include "umi/forecaster.hpp"
#include "umi/marketfactor.hpp"
#include "umi/stockfactor.hpp"

namespace umi::config {

using Entries = std::map<std::string, std::string>;

Entries parse_entries(std::istream& in);
Entries load_entries(const std::filesystem::path& path);

enum class DataSource { Synthetic, Csv };

struct RunConfig {
    std::uint64_t seed = 0;
    std::string out_dir = "run";

    DataSource source = DataSource::Synthetic;
    std::string csv_path;
    data::SyntheticSpec synth;  // synth.seed is derived from `seed`
    // Adds plants target k <- source k + auto_plants for k < auto_plants.
    std::size_t auto_plants = 0;
    double auto_plant_beta = 0.8;
    double auto_plant_rho = 0.6;
    double auto_plant_noise = 1.0;

    // Period index or ISO date (first period on or after it). Empty
    // test_start means train_end; empty ends mean the panel's end.
    std::string train_end = "0.8";
    std::string test_start;
    std::string test_end;

    bool normalize_features = true;
    bool relative_prices = true;  // see data::relative_price_features
    data::SynchronismConfig sync;
    stock::StockTrainConfig stock;
    stock::PriceScaling price_scaling = stock::PriceScaling::Raw;
    market::MarketTrainConfig market;
    forecast::ForecasterConfig forecaster;
    forecast::Ablation ablation = forecast::Ablation::None;
    eval::PortfolioConfig portfolio;

    static RunConfig from_entries(const Entries& entries);
    // Every setting, including defaults, in a form from_entries accepts.
    Entries to_entries() const;
    void validate() const;

    // Stable text form and its FNV-1a hash.
    std::string canonical() const;
    std::uint64_t hash() const;
    std::string hash_hex() const;

    // The synthetic spec with auto plants expanded and the derived seed.
    data::SyntheticSpec resolved_synth() const;
};

RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace umi::config
