#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "fixtures.hpp"
#include "umi/errors.hpp"
#include "umi/marketfactor.hpp"

using namespace umi;
using namespace umi::market;
using diff::Tape;
using diff::Tensor;

namespace {

MarketEncoderParams params_for(const data::MarketPanel& p, std::uint64_t seed) {
    return MarketEncoderParams::initial(p.feature_dim, p.num_stocks(), 0, seed);
}

std::vector<std::size_t> all(std::size_t n) {
    std::vector<std::size_t> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = i;
    return v;
}

}  // namespace

TEST_CASE("a one-period window repeats the features") {
    const auto p = fixture::random_panel(3, 6, 4, 1);
    const auto r = dynamic_stock_repr(p, params_for(p, 1), 1, 4, 1);
    REQUIRE(r.size() == 8);
    for (std::size_t d = 0; d < 4; ++d) {
        CHECK(r[d] == p.feature(1, 4, d));
        CHECK(r[4 + d] == doctest::Approx(p.feature(1, 4, d)).epsilon(1e-15));
    }
}

TEST_CASE("identical history aggregates to the current features") {
    auto p = fixture::random_panel(2, 6, 3, 2);
    for (std::size_t t = 0; t < 6; ++t)
        for (std::size_t d = 0; d < 3; ++d) p.feature(0, t, d) = 0.3 * (d + 1);
    const auto r = dynamic_stock_repr(p, params_for(p, 5), 0, 5, 4);
    for (std::size_t d = 0; d < 3; ++d) CHECK(r[3 + d] == doctest::Approx(0.3 * (d + 1)).epsilon(1e-14));
}

TEST_CASE("orthonormal history under identity projection") {
    auto p = fixture::random_panel(2, 4, 4, 3);
    for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t d = 0; d < 4; ++d) p.feature(0, t, d) = t == d ? 1.0 : 0.0;
    auto params = params_for(p, 3);
    params.ws = Tensor(4, 4, 0.0);
    for (std::size_t d = 0; d < 4; ++d) params.ws(d, d) = 1.0;
    params.b = Tensor(1, 4, 0.0);
    // scores are 1/2 at tau = t and 0 elsewhere
    const double self = std::exp(0.5) / (std::exp(0.5) + 3.0), other = 1.0 / (std::exp(0.5) + 3.0);
    const auto r = dynamic_stock_repr(p, params, 0, 3, 4);
    for (std::size_t d = 0; d < 4; ++d) CHECK(r[4 + d] == doctest::Approx(d == 3 ? self : other).epsilon(1e-14));
}

TEST_CASE("window underflow") {
    const auto p = fixture::random_panel(3, 6, 2, 1);
    CHECK_THROWS_AS(dynamic_stock_repr(p, params_for(p, 1), 0, 2, 4), TooEarly);
}

TEST_CASE("stock weights") {
    const auto p = fixture::random_panel(3, 6, 2, 1);
    auto params = params_for(p, 1);
    const std::vector<double> r = {0.1, -0.4, 0.3, 0.9};
    params.w_eta = Tensor(4, 1, 0.0);
    CHECK(stock_weight(params, 0, r) == 0.0);

    // w_eta . (embed + r) = -3
    params.w_eta = Tensor::column({1.0, 0.0, 0.0, 0.0});
    params.wi(0, 0) = -3.1;
    CHECK(stock_weight(params, 0, r) == 0.0);

    // same r, different embedding columns
    params.wi(0, 1) = 1.0;
    params.wi(0, 2) = 2.0;
    CHECK(stock_weight(params, 1, r) != stock_weight(params, 2, r));
}

TEST_CASE("market pooling special cases") {
    const auto p = fixture::random_panel(4, 8, 2, 6);
    auto params = params_for(p, 6);
    const std::vector<std::size_t> one = {2};
    const auto m = market_repr(p, params, one, 6, 3).m;
    const auto r = dynamic_stock_repr(p, params, 2, 6, 3);
    for (std::size_t k = 0; k < r.size(); ++k) CHECK(m[k] == doctest::Approx(r[k]).epsilon(1e-14));

    params.w_eta = Tensor(4, 1, 0.0);  // every eta is 0, pooling falls back to the plain mean
    const auto mean = market_repr(p, params, all(4), 6, 3).m;
    for (std::size_t k = 0; k < 4; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < 4; ++i) s += dynamic_stock_repr(p, params, i, 6, 3)[k];
        CHECK(mean[k] == doctest::Approx(s / 4.0).epsilon(1e-13));
    }
    CHECK_THROWS_AS(market_repr(p, params, std::vector<std::size_t>{}, 6, 3), EmptySubset);
}

TEST_CASE("property: m is a convex combination and ignores the scale of w_eta") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto p = fixture::random_panel(6, 10, 3, seed);
        auto params = params_for(p, seed);
        const std::size_t t = 7, L = 4;
        const auto m = market_repr(p, params, all(6), t, L).m;
        for (std::size_t k = 0; k < m.size(); ++k) {
            double lo = 1e300, hi = -1e300;
            for (std::size_t i = 0; i < 6; ++i) {
                const double v = dynamic_stock_repr(p, params, i, t, L)[k];
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            CHECK(m[k] >= lo - 1e-12);
            CHECK(m[k] <= hi + 1e-12);
        }
        for (double c : {2.0, 0.1, 37.0}) {
            auto scaled = params;
            for (double& w : scaled.w_eta.values()) w *= c;
            const auto ms = market_repr(p, scaled, all(6), t, L).m;
            // eta = relu(w . (W_I + r)) scales by c in numerator and denominator
            for (std::size_t k = 0; k < m.size(); ++k) CHECK(std::abs(ms[k] - m[k]) <= 1e-12);
        }
    }
}

TEST_CASE("sub-market split") {
    const auto s = submarket_split(4, 1, 0);
    CHECK(s.first.size() == 2);
    CHECK(s.second.size() == 2);
    std::set<std::size_t> u(s.first.begin(), s.first.end());
    u.insert(s.second.begin(), s.second.end());
    CHECK(u.size() == 4);
    const auto again = submarket_split(4, 1, 0);
    CHECK(again.first == s.first);
    CHECK_THROWS_AS(submarket_split(1, 1, 0), TooFewStocks);

    std::set<std::vector<std::size_t>> seen;
    for (std::uint64_t e = 0; e < 100; ++e) seen.insert(submarket_split(20, 3, e).first);
    CHECK(seen.size() >= 99);
}

TEST_CASE("pair criterion") {
    const auto p = fixture::random_panel(3, 6, 2, 1);
    auto params = params_for(p, 1);
    const std::vector<double> a = {0.2, -0.1, 0.5, 0.3}, b = {-0.4, 0.6, 0.1, 0.0};
    params.w_m = Tensor(8, 1, 0.0);
    params.b_m = Tensor::scalar(0.0);
    CHECK(criterion(params, a, b, 3, 9) == 1.0);
    params.b_m = Tensor::scalar(2.0);
    CHECK(criterion(params, a, b, 4, 4) == doctest::Approx(std::exp(2.0)).epsilon(1e-15));
    CHECK(criterion(params, a, b, 4, 8) == doctest::Approx(std::exp(2.0 / 5.0)).epsilon(1e-15));
}

TEST_CASE("InfoNCE") {
    const auto p = fixture::random_panel(5, 12, 3, 8);
    auto params = params_for(p, 8);
    const std::vector<std::size_t> periods = {4, 5, 7, 9, 11};
    const std::size_t L = 3;

    SUBCASE("equal criteria give log B") {
        auto flat = params;
        flat.w_m = Tensor(12, 1, 0.0);
        CHECK(infonce_loss(flat, p, periods, L, 1, 0) == doctest::Approx(std::log(5.0)).epsilon(1e-13));
    }
    SUBCASE("matches a two-loop oracle") {
        std::mt19937_64 rng(4);
        params.w_m = fixture::random_tensor(12, 1, rng, 0.3);
        const auto split = submarket_split(5, 1, 0);
        std::vector<std::vector<double>> m1, m2;
        for (auto t : periods) {
            m1.push_back(market_repr(p, params, split.first, t, L).m);
            m2.push_back(market_repr(p, params, split.second, t, L).m);
        }
        double loss = 0.0;
        for (std::size_t a = 0; a < periods.size(); ++a) {
            double den = 0.0;
            for (std::size_t c = 0; c < periods.size(); ++c)
                den += criterion(params, m1[a], m2[c], periods[a], periods[c]);
            loss -= std::log(criterion(params, m1[a], m2[a], periods[a], periods[a]) / den);
        }
        loss /= static_cast<double>(periods.size());
        CHECK(std::abs(infonce_loss(params, p, periods, L, 1, 0) - loss) <= 1e-10);
    }
    SUBCASE("a dominant positive drives the loss to zero") {
        // Positive pairs carry the full logit, negatives a fraction of it.
        auto sharp = params;
        sharp.w_m = Tensor(12, 1, 0.0);
        sharp.b_m = Tensor::scalar(200.0);
        CHECK(infonce_loss(sharp, p, periods, L, 1, 0) < 1e-20);
    }
    SUBCASE("one period has no negatives") {
        CHECK_THROWS_AS(infonce_loss(params, p, std::vector<std::size_t>{4}, L, 1, 0), NoNegatives);
    }
}

TEST_CASE("synchronism classifier output") {
    const auto p = fixture::random_panel(3, 6, 2, 1);
    auto params = params_for(p, 1);
    const std::vector<double> m = {0.3, -1.0, 2.0, 0.5};
    std::mt19937_64 rng(1);
    for (int k = 0; k < 20; ++k) {
        params.cls_w1 = fixture::random_tensor(params.cls_w1.rows(), params.cls_w1.cols(), rng, 2.0);
        const auto q = synchronism_predict(params, m);
        CHECK(std::abs(q[0] + q[1] + q[2] - 1.0) <= 1e-12);
    }
    params.cls_w1 = Tensor(params.cls_w1.rows(), params.cls_w1.cols(), 0.0);
    params.cls_w2 = Tensor(params.cls_w2.rows(), 3, 0.0);
    params.cls_b1 = Tensor(1, params.cls_b1.cols(), 0.0);
    params.cls_b2 = Tensor(1, 3, 0.0);
    for (double q : synchronism_predict(params, m)) CHECK(q == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("combined market loss") {
    const auto p = fixture::random_panel(5, 12, 3, 2);
    std::mt19937_64 rng(2);
    const auto labels = fixture::random_labels(12, rng);
    auto params = params_for(p, 2);
    const std::vector<std::size_t> anchors = {5, 6, 8, 10};
    const auto split = submarket_split(5, 4, 0);

    Tape tape;
    MarketVars v = bind(tape, params);
    const auto zero = loss_m(tape, v, p, labels, anchors, 3, split, 0.0);
    CHECK(zero.total.item() == zero.contrastive.item());
    const auto two = loss_m(tape, v, p, labels, anchors, 3, split, 2.0);
    CHECK(two.total.item() == doctest::Approx(two.contrastive.item() + 2.0 * two.prediction.item()));

    SUBCASE("confident correct predictions cost nothing") {
        // Zero hidden layer and an output bias that strongly favours Up.
        MarketEncoderParams q = params;
        q.cls_w1 = Tensor(q.cls_w1.rows(), q.cls_w1.cols(), 0.0);
        q.cls_b1 = Tensor(1, q.cls_b1.cols(), 0.0);
        q.cls_w2 = Tensor(q.cls_w2.rows(), 3, 0.0);
        q.cls_b2 = Tensor::row({1e3, -1e3, -1e3});
        Tape t3;
        MarketVars v3 = bind_constant(t3, q);
        std::vector<data::SynchronismLabel> ups(3);
        for (auto& x : ups) x.cls = data::SyncClass::Up;
        const auto loss = synchronism_loss(t3, v3, t3.constant(Tensor(3, 6, 0.5)), ups);
        CHECK(loss.item() == doctest::Approx(0.0));
    }
}

TEST_CASE("prediction term never sees the anchor period") {
    const auto p = fixture::random_panel(5, 12, 3, 2);
    std::mt19937_64 rng(2);
    const auto labels = fixture::random_labels(12, rng);
    auto params = params_for(p, 2);
    const std::vector<std::size_t> anchors = {5, 8};
    const auto split = submarket_split(5, 4, 0);
    auto prediction = [&](const data::MarketPanel& panel) {
        Tape tape;
        MarketVars v = bind_constant(tape, params);
        return loss_m(tape, v, panel, labels, anchors, 3, split, 1.0).prediction.item();
    };
    // Anchor 8 reads m_7, whose window ends at period 7.
    auto changed = p;
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t t = 8; t < 12; ++t)
            for (std::size_t d = 0; d < 3; ++d) changed.feature(i, t, d) += 4.0;
    CHECK(prediction(changed) == prediction(p));
}

TEST_CASE("the lambda2 grid trains and does not raise the loss") {
    const auto p = fixture::random_panel(6, 40, 3, 3);
    const data::SynchronismConfig sc;
    const auto labels = data::compute_synchronism_labels(data::compute_deltas(p.returns, sc), sc);
    for (double l2 : {0.0, 0.5, 1.0, 1.5, 2.0}) {
        MarketTrainConfig cfg;
        cfg.window = 4;
        cfg.batch = 8;
        cfg.epochs = 5;
        cfg.lambda2 = l2;
        const auto res = train_market_factors(p, labels, 30, cfg);
        CHECK(res.final_loss <= res.initial_loss);
        CHECK(res.first_valid == 3);
    }
}
