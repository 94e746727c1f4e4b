#pragma once

// Small random instances shared by the unit and acceptance tests.

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "umi/data.hpp"
#include "umi/diff.hpp"
#include "umi/marketfactor.hpp"

namespace fixture {

inline std::vector<std::string> dates(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t t = 0; t < n; ++t) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "2001-%02zu-%02zu", 1 + t / 28, 1 + t % 28);
        out.push_back(buf);
    }
    return out;
}

inline std::vector<std::string> ids(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back("S" + std::to_string(i));
    return out;
}

// Random-walk prices near 1 and standard normal features.
inline umi::data::MarketPanel random_panel(std::size_t stocks, std::size_t periods,
                                           std::size_t dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01(0.0, 1.0);
    umi::diff::Tensor prices(stocks, periods);
    for (std::size_t i = 0; i < stocks; ++i) {
        double p = 1.0 + 0.1 * static_cast<double>(i);
        for (std::size_t t = 0; t < periods; ++t) {
            p *= std::exp(0.02 * n01(rng));
            prices(i, t) = p;
        }
    }
    std::vector<double> features(stocks * periods * dim);
    for (double& f : features) f = n01(rng);
    return umi::data::make_panel(ids(stocks), dates(periods), dim, std::move(features),
                                 std::move(prices));
}

inline umi::diff::Tensor random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                                       double scale = 1.0) {
    std::normal_distribution<double> n01(0.0, scale);
    umi::diff::Tensor t(rows, cols);
    for (double& v : t.values()) v = n01(rng);
    return t;
}

inline std::vector<umi::data::SynchronismLabel> random_labels(std::size_t n, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> pick(0, 2);
    std::vector<umi::data::SynchronismLabel> out(n);
    for (auto& l : out) l.cls = static_cast<umi::data::SyncClass>(pick(rng));
    return out;
}

}  // namespace fixture
