#include <doctest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "umi/diff.hpp"
#include "umi/errors.hpp"
#include "umi/gradcheck.hpp"
#include "umi/optim.hpp"

using namespace umi;
using namespace umi::diff;

TEST_CASE("softmax of equal entries is uniform") {
    Tape tape;
    Var s = tape.softmax_row(tape.constant(Tensor(1, 3, 0.0)));
    for (std::size_t c = 0; c < 3; ++c) CHECK(s.value(0, c) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("relu clips negatives") {
    Tape tape;
    Var r = tape.relu(tape.constant(Tensor::row({-1.0, 2.0})));
    CHECK(r.value(0, 0) == 0.0);
    CHECK(r.value(0, 1) == 2.0);
}

TEST_CASE("std of a constant vector is zero with a finite gradient") {
    Tensor x(1, 4, 1.0);
    Tape tape;
    Var s = tape.std(tape.param(x));
    CHECK(s.item() == doctest::Approx(0.0).epsilon(1e-5));
    x.zero_grad();
    tape.backward(s);
    for (double g : x.grad()) CHECK(std::isfinite(g));
}

TEST_CASE("backward of simple sums") {
    Tensor x = Tensor::row({1.0, 2.0});
    {
        Tape tape;
        x.zero_grad();
        tape.backward(tape.sum(tape.param(x)));
        CHECK(x.grad()[0] == 1.0);
        CHECK(x.grad()[1] == 1.0);
    }
    {
        Tape tape;
        x.zero_grad();
        Var v = tape.param(x);
        tape.backward(tape.sum(v * v));
        CHECK(x.grad()[0] == 2.0);
        CHECK(x.grad()[1] == 4.0);
    }
}

TEST_CASE("error cases") {
    Tape tape;
    Var a = tape.constant(Tensor(2, 3, 1.0));
    Var b = tape.constant(Tensor(2, 2, 1.0));
    CHECK_THROWS_AS(tape.matmul(a, a), ShapeError);
    CHECK_THROWS_AS(tape.add(a, b), ShapeError);
    CHECK_THROWS_AS(tape.log(tape.constant(Tensor::row({1.0, -1.0}))), DomainError);
    CHECK_THROWS_AS(tape.div(a, tape.constant(0.0)), DomainError);
    CHECK_THROWS_AS(tape.backward(a), NotScalar);
}

TEST_CASE("broadcasting adds a row to every row") {
    Tape tape;
    Var s = tape.add(tape.constant(Tensor(3, 2, 1.0)), tape.constant(Tensor::row({1.0, 2.0})));
    CHECK(s.rows() == 3);
    CHECK(s.value(2, 0) == 2.0);
    CHECK(s.value(2, 1) == 3.0);
}

TEST_CASE("gradient check of a quadratic form is tight") {
    std::mt19937_64 rng(3);
    Tensor A = fixture::random_tensor(4, 4, rng);
    Tensor x = fixture::random_tensor(4, 1, rng);
    std::vector<Tensor*> params = {&x};
    const double err = gradient_check(
        [&](Tape& tape) {
            Var xv = tape.param(x);
            return tape.sum(tape.mul(xv, tape.matmul(tape.constant(A), xv)));
        },
        params);
    CHECK(err <= 1e-9);
}

TEST_CASE("gradient check rejects non-finite objectives") {
    Tensor x = Tensor::row({1.0});
    std::vector<Tensor*> params = {&x};
    CHECK_THROWS_AS(gradient_check([&](Tape& tape) { return tape.scale(tape.sum(tape.param(x)), NAN); },
                                   params),
                    NumericalFailure);
}

TEST_CASE("every primitive passes the gradient check") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        std::mt19937_64 rng(seed);
        Tensor a = fixture::random_tensor(3, 4, rng);
        Tensor b = fixture::random_tensor(4, 2, rng);
        Tensor pos(3, 4);
        for (double& v : pos.values()) v = 0.5 + std::abs(std::normal_distribution<double>()(rng));
        std::vector<Tensor*> params = {&a, &b, &pos};
        const double err = gradient_check(
            [&](Tape& tape) {
                Var A = tape.param(a), B = tape.param(b), P = tape.param(pos);
                Var mm = tape.matmul(A, B);
                Var soft = tape.softmax_row(A);
                Var parts = tape.concat({tape.tanh(mm), tape.relu(A)}, Axis::Cols);
                Var lg = tape.log(P) + tape.exp(tape.scale(A, 0.1)) / P;
                Var sl = tape.slice(A, 1, 3, 0, 2);
                Var tot = tape.sum(soft * A) + tape.mean(parts) + tape.sum(tape.row_std(lg)) +
                          tape.sum(tape.row_sum(sl)) + tape.sum(tape.col_sum(lg)) +
                          tape.std(A) + tape.mean(tape.relu(tape.transpose(B))) + tape.sum(tape.row_mean(tape.log_softmax_row(A)));
                return tot;
            },
            params);
        CHECK(err <= 1e-6);
    }
}

TEST_CASE("property: softmax rows sum to one") {
    std::mt19937_64 rng(11);
    for (int k = 0; k < 50; ++k) {
        Tensor x = fixture::random_tensor(1 + k % 5, 1 + k % 7, rng, 1.0 + k);
        Tape tape;
        Var s = tape.softmax_row(tape.constant(x));
        for (std::size_t r = 0; r < s.rows(); ++r) {
            double total = 0.0;
            for (std::size_t c = 0; c < s.cols(); ++c) total += s.value(r, c);
            CHECK(std::abs(total - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("property: replaying a tape gives bit-identical gradients") {
    std::mt19937_64 rng(5);
    Tensor a = fixture::random_tensor(4, 4, rng);
    auto grads = [&] {
        Tape tape;
        a.zero_grad();
        Var A = tape.param(a);
        tape.backward(tape.sum(tape.tanh(tape.matmul(A, A))));
        return std::vector<double>(a.grad().begin(), a.grad().end());
    };
    CHECK(grads() == grads());
}

TEST_CASE("sgd and adam steps") {
    Tensor p = Tensor::scalar(1.0);
    std::vector<Tensor*> params = {&p};
    p.zero_grad();
    p.grad()[0] = 2.0;
    sgd_step(params, 0.1);
    CHECK(p.item() == doctest::Approx(0.8).epsilon(1e-15));

    p.zero_grad();
    sgd_step(params, 0.1);
    CHECK(p.item() == doctest::Approx(0.8).epsilon(1e-15));

    Tensor q = Tensor::row({1.0, 1.0});
    Adam adam({&q});
    adam.zero_grad();
    q.grad()[0] = 3.0;
    q.grad()[1] = -0.5;
    adam.step();
    CHECK(q(0, 0) < 1.0);
    CHECK(q(0, 1) > 1.0);

    q.grad()[0] = NAN;
    CHECK_THROWS_AS(adam.step(), NumericalFailure);
}
