#include <doctest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "umi/errors.hpp"
#include "umi/forecaster.hpp"
#include "umi/stats.hpp"

using namespace umi;
using namespace umi::forecast;
using diff::Tape;
using diff::Tensor;
using diff::Var;

namespace {

struct Setup {
    data::MarketPanel panel;
    Tensor u, m;
    std::vector<Tensor> repr;
    ForecasterConfig cfg;

    explicit Setup(std::uint64_t seed, std::size_t I = 4, std::size_t T = 12) {
        std::mt19937_64 rng(seed);
        panel = fixture::random_panel(I, T, 3, seed);
        u = fixture::random_tensor(I, T, rng);
        m = fixture::random_tensor(T, 6, rng);
        for (std::size_t t = 0; t < T; ++t) repr.push_back(fixture::random_tensor(I, 6, rng));
        cfg.window = 3;
        cfg.width = 8;
        cfg.heads = 2;
        cfg.blocks = 2;
        cfg.seed = seed;
    }
    ForecastInputs inputs() const { return {&panel, &u, &m, &repr, 2}; }
};

}  // namespace

TEST_CASE("ablation names") {
    CHECK(parse_ablation("NS") == Ablation::NS);
    CHECK(parse_ablation("none") == Ablation::None);
    CHECK_THROWS_AS(parse_ablation("XS"), ConfigError);
    CHECK_FALSE(apply_ablation({}, Ablation::NS).use_stock_factor);
    CHECK_FALSE(apply_ablation({}, Ablation::NM).use_market_factor);
    CHECK(apply_ablation({}, Ablation::NR).lambda3 == 0.0);
    CHECK_FALSE(apply_ablation({}, Ablation::ND).use_relation);
}

TEST_CASE("input rows append the stock factor") {
    const auto p = fixture::random_panel(3, 10, 6, 1);
    const Tensor u(3, 10, 0.0);
    const Tensor g = build_inputs(p, &u, 8, 4);
    CHECK(g.rows() == 12);
    CHECK(g.cols() == 7);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t l = 0; l < 4; ++l) {
            for (std::size_t d = 0; d < 6; ++d) CHECK(g(i * 4 + l, d) == p.feature(i, 4 + l, d));
            CHECK(g(i * 4 + l, 6) == 0.0);
        }
    CHECK(build_inputs(p, nullptr, 8, 4).cols() == 6);
    const Tensor short_u(3, 9, 0.0);
    CHECK_THROWS_AS(build_inputs(p, &short_u, 8, 4), AlignmentError);
}

TEST_CASE("temporal encoding") {
    Setup s(3);
    auto params = ForecasterParams::initial(s.cfg, 4, 6, 3);
    const Tensor g = build_inputs(s.panel, &s.u, 9, 3);
    Tape tape;
    auto v = bind_constant(tape, params);
    const Tensor c = temporal_encode(tape, v, g, 4, 3).to_tensor();
    CHECK(c.rows() == 4);
    CHECK(c.cols() == 8);

    // Swap the first and last positions of every stock.
    Tensor swapped = g;
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t d = 0; d < g.cols(); ++d) std::swap(swapped(i * 3, d), swapped(i * 3 + 2, d));
    const Tensor c2 = temporal_encode(tape, v, swapped, 4, 3).to_tensor();
    double diff = 0.0;
    for (std::size_t k = 0; k < c.size(); ++k) diff += std::abs(c.values()[k] - c2.values()[k]);
    CHECK(diff > 1e-6);

    // Window of one: a function of the single row only.
    const Tensor one = build_inputs(s.panel, &s.u, 9, 1);
    ForecasterConfig c1 = s.cfg;
    c1.window = 1;
    auto p1 = ForecasterParams::initial(c1, 4, 6, 3);
    Tape t1;
    auto v1 = bind_constant(t1, p1);
    const Tensor a = temporal_encode(t1, v1, one, 4, 1).to_tensor();
    const Tensor b = temporal_encode(t1, v1, one, 4, 1).to_tensor();
    CHECK(std::equal(a.values().begin(), a.values().end(), b.values().begin()));
    CHECK(a.cols() == 8);
}

TEST_CASE("relation attention") {
    Setup s(4);
    auto params = ForecasterParams::initial(s.cfg, 4, 6, 4);
    std::mt19937_64 rng(4);

    SUBCASE("single stock returns its own encoding") {
        Tape tape;
        auto v = bind_constant(tape, params);
        Var c = tape.constant(fixture::random_tensor(1, 8, rng));
        Var d = relation_attention(tape, v, c, tape.constant(fixture::random_tensor(1, 6, rng)));
        for (std::size_t k = 0; k < 8; ++k) CHECK(d.value(0, k) == doctest::Approx(c.value(0, k)).epsilon(1e-15));
    }
    SUBCASE("equal scores average every stock") {
        params.wy = Tensor(6, 6, 0.0);
        Tape tape;
        auto v = bind_constant(tape, params);
        Var c = tape.constant(fixture::random_tensor(5, 8, rng));
        Var d = relation_attention(tape, v, c, tape.constant(fixture::random_tensor(5, 6, rng)));
        for (std::size_t k = 0; k < 8; ++k) {
            double mean = 0.0;
            for (std::size_t j = 0; j < 5; ++j) mean += c.value(j, k) / 5.0;
            for (std::size_t i = 0; i < 5; ++i) CHECK(d.value(i, k) == doctest::Approx(mean).epsilon(1e-13));
        }
    }
    SUBCASE("property: rows sum to one") {
        for (int k = 0; k < 20; ++k) {
            params.wy = fixture::random_tensor(6, 6, rng, 1.0 + k);
            Tape tape;
            auto v = bind_constant(tape, params);
            Var w = relation_weights(tape, v, tape.constant(fixture::random_tensor(6, 8, rng)),
                                     tape.constant(fixture::random_tensor(6, 6, rng)));
            for (std::size_t i = 0; i < 6; ++i) {
                double total = 0.0;
                for (std::size_t j = 0; j < 6; ++j) total += w.value(i, j);
                CHECK(std::abs(total - 1.0) <= 1e-12);
            }
        }
    }
}

TEST_CASE("zero head weights predict the bias") {
    Setup s(5);
    auto params = ForecasterParams::initial(s.cfg, 4, 6, 5);
    params.head_w1 = Tensor(params.head_w1.rows(), params.head_w1.cols(), 0.0);
    params.head_w2 = Tensor(params.head_w2.rows(), 1, 0.0);
    params.head_b2 = Tensor::scalar(0.37);
    Tape tape;
    auto v = bind_constant(tape, params);
    Var y = forward(tape, v, s.inputs(), s.cfg, 8);
    for (std::size_t i = 0; i < 4; ++i) CHECK(y.value(i, 0) == 0.37);
}

TEST_CASE("ablated forecasters ignore the removed input") {
    Setup s(6);
    auto check_ignores = [&](Ablation a, auto mutate) {
        const ForecasterConfig cfg = apply_ablation(s.cfg, a);
        const std::size_t dim = cfg.use_stock_factor ? 4 : 3;
        const auto params = ForecasterParams::initial(cfg, dim, 6, 6);
        const auto before = predict_range(params, s.inputs(), cfg, 5, 12).y_hat;
        Setup t = s;
        mutate(t);
        const auto after = predict_range(params, t.inputs(), cfg, 5, 12).y_hat;
        CHECK(std::equal(before.values().begin(), before.values().end(), after.values().begin()));
    };
    check_ignores(Ablation::NS, [](Setup& t) { for (double& v : t.u.values()) v += 1.0; });
    check_ignores(Ablation::NM, [](Setup& t) { for (double& v : t.m.values()) v += 1.0; });
    check_ignores(Ablation::ND, [](Setup& t) { for (auto& r : t.repr) for (double& v : r.values()) v += 1.0; });
    // Relation-free head is narrower.
    const auto full = ForecasterParams::initial(s.cfg, 4, 6, 6);
    const auto nd = ForecasterParams::initial(apply_ablation(s.cfg, Ablation::ND), 4, 6, 6);
    CHECK(full.head_w1.rows() == nd.head_w1.rows() + 8);
}

TEST_CASE("information coefficient") {
    const std::vector<double> z = {1, 3, 2, 4};
    std::vector<double> neg(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) neg[i] = -z[i];
    CHECK(ic_t(z, z) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(ic_t(neg, z) == doctest::Approx(-1.0).epsilon(1e-10));
    CHECK(ic_t(std::vector<double>(4, 2.0), z) == 0.0);

    std::mt19937_64 rng(8);
    std::normal_distribution<double> n01;
    for (int k = 0; k < 30; ++k) {
        std::vector<double> y(7), r;
        for (double& v : y) v = n01(rng);
        std::vector<double> x(7);
        for (double& v : x) v = n01(rng);
        r = oracle::ranks(x);
        CHECK(std::abs(ic_t(y, r) - oracle::pearson(y, r)) <= 1e-10);
        // An increasing transform of z gives the Pearson value against z.
        std::vector<double> cube(7);
        for (std::size_t i = 0; i < 7; ++i) cube[i] = std::pow(r[i], 3);
        CHECK(std::abs(ic_t(cube, r) - oracle::pearson(cube, r)) <= 1e-10);
    }
}

TEST_CASE("total loss") {
    Tape tape;
    // Evenly spaced targets are linear in their ranks, so a perfect forecast has IC 1.
    const std::vector<std::vector<double>> y = {{1.0, -1.0, 0.0}, {0.3, 0.2, 0.1}};
    auto preds = [&](double shift) {
        std::vector<Var> out;
        for (const auto& col : y) {
            std::vector<double> c = col;
            for (double& v : c) v += shift;
            out.push_back(tape.constant(Tensor::column(c)));
        }
        return out;
    };
    const auto perfect = preds(0.0);
    CHECK(loss_total(tape, perfect, y, 0.0).item() == 0.0);
    CHECK(loss_total(tape, perfect, y, 0.1).item() == doctest::Approx(-0.1).epsilon(1e-8));
    const auto shifted = preds(1.0);
    CHECK(loss_total(tape, shifted, y, 0.0).item() == doctest::Approx(1.0).epsilon(1e-12));
    for (double l3 : {0.0, 0.05, 0.1, 0.15, 0.2}) {
        ForecasterConfig cfg;
        cfg.lambda3 = l3;
        CHECK_NOTHROW(cfg.validate());
    }
    ForecasterConfig bad;
    bad.lambda3 = -0.1;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("forecasts before the first full window are refused") {
    Setup s(7);
    const auto params = ForecasterParams::initial(s.cfg, 4, 6, 7);
    Tape tape;
    auto v = bind_constant(tape, params);
    CHECK_THROWS_AS(forward(tape, v, s.inputs(), s.cfg, 2), TooEarly);
    CHECK_THROWS_AS(forward(tape, v, s.inputs(), s.cfg, 12), TooEarly);
}

TEST_CASE("training is deterministic and never looks past the boundary") {
    Setup s(9, 5, 40);
    s.cfg.max_epochs = 3;
    s.cfg.width = 4;
    s.cfg.blocks = 1;
    const auto a = train_forecaster(s.inputs(), 30, s.cfg);
    const auto b = train_forecaster(s.inputs(), 30, s.cfg);
    CHECK(std::equal(a.prediction.y_hat.values().begin(), a.prediction.y_hat.values().end(),
                     b.prediction.y_hat.values().begin()));
    CHECK(a.validation_start < 30);

    // Changing returns from the boundary on leaves the fitted model unchanged.
    Setup t = s;
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t q = 30; q < 40; ++q) t.panel.returns(i, q) += 5.0;
    const auto c = train_forecaster(t.inputs(), 30, t.cfg);
    CHECK(std::equal(a.prediction.y_hat.values().begin(), a.prediction.y_hat.values().end(),
                     c.prediction.y_hat.values().begin()));
}

TEST_CASE("scalers") {
    std::mt19937_64 rng(3);
    const Tensor x = fixture::random_tensor(3, 20, rng, 4.0);
    const Tensor z = RowScaler::fit(x, 10).transform(x);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto row = z.row_values(i);
        const std::vector<double> head(row.begin(), row.begin() + 10);
        CHECK(std::abs(oracle::mean(head)) < 1e-12);
        CHECK(oracle::pop_std(head) == doctest::Approx(1.0).epsilon(1e-12));
    }
    const Tensor y = fixture::random_tensor(20, 2, rng, 3.0);
    const Tensor w = ColumnScaler::fit(y, 2, 12).transform(y);
    for (std::size_t k = 0; k < 2; ++k) {
        std::vector<double> col;
        for (std::size_t t = 2; t < 12; ++t) col.push_back(w(t, k));
        CHECK(std::abs(oracle::mean(col)) < 1e-12);
        CHECK(oracle::pop_std(col) == doctest::Approx(1.0).epsilon(1e-12));
    }
}
