#include <cmath>
#include <random>

#include "doctest.h"
#include "odevae/tape.hpp"

using namespace odevae::ad;

TEST_CASE("forward op examples") {
    Tape tape;
    SUBCASE("matmul with identity") {
        Var I = tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
        Var v = tape.constant(Tensor::vector({2, 1}));
        Var r = matmul(I, v);
        CHECK(r.value()[0] == doctest::Approx(2.0));
        CHECK(r.value()[1] == doctest::Approx(1.0));
    }
    SUBCASE("tanh at origin") {
        Var r = tanh(tape.constant(Tensor::scalar(0.0)));
        CHECK(r.value().item() == 0.0);
    }
    SUBCASE("sum of squares") {
        Var r = sum(square(tape.constant(Tensor::vector({3, 4}))));
        CHECK(r.value().item() == doctest::Approx(25.0));
    }
    SUBCASE("shape mismatch is a descriptive error") {
        Var a = tape.constant(Tensor::vector({1, 2, 3}));
        Var b = tape.constant(Tensor::vector({1, 2}));
        CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("add"), TensorError);
        Var m = tape.constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
        CHECK_THROWS_AS(matmul(m, b), TensorError);
    }
    SUBCASE("scalar broadcasting") {
        Var s = tape.constant(Tensor::scalar(2.0));
        Var v = tape.constant(Tensor::vector({1, 2}));
        Var r = mul(s, v);
        CHECK(r.value()[1] == doctest::Approx(4.0));
    }
}

TEST_CASE("backward examples") {
    SUBCASE("power rule") {
        Tape tape;
        Var x = tape.leaf(Tensor::scalar(3.0));
        GradResult g = tape.backward(square(x), {x});
        CHECK(g.loss == doctest::Approx(9.0));
        CHECK(g.grads[0].item() == doctest::Approx(6.0));
    }
    SUBCASE("sum of W*v gives all-ones gradient") {
        Tape tape;
        Var W = tape.leaf(Tensor::matrix(2, 2, {0.3, -0.1, 0.7, 0.2}));
        Var v = tape.constant(Tensor::vector({1, 1}));
        GradResult g = tape.backward(sum(matmul(W, v)), {W});
        for (int i = 0; i < 4; ++i) CHECK(g.grads[0][i] == doctest::Approx(1.0));
    }
    SUBCASE("tanh slope at zero") {
        Tape tape;
        Var x = tape.leaf(Tensor::scalar(0.0));
        GradResult g = tape.backward(tanh(x), {x});
        CHECK(g.grads[0].item() == doctest::Approx(1.0));
    }
    SUBCASE("non-scalar loss rejected") {
        Tape tape;
        Var x = tape.leaf(Tensor::vector({1, 2}));
        CHECK_THROWS_AS(tape.backward(square(x), {x}), TensorError);
    }
    SUBCASE("parameter off the path gets zeros") {
        Tape tape;
        Var x = tape.leaf(Tensor::scalar(1.0));
        Var y = tape.leaf(Tensor::vector({1, 2}));
        GradResult g = tape.backward(square(x), {x, y});
        CHECK(g.grads[1].same_shape(y.value()));
        CHECK(g.grads[1][0] == 0.0);
        CHECK(g.grads[1][1] == 0.0);
    }
}

TEST_CASE("gradient linearity") {
    // grad(a*f + b*g) == a*grad(f) + b*grad(g) to 1e-12
    const double a = 1.7, b = -0.4;
    Tensor x0 = Tensor::vector({0.5, -1.2, 2.0});

    auto grad_of = [&](auto&& make_loss) {
        Tape tape;
        Var x = tape.leaf(x0);
        return tape.backward(make_loss(x), {x}).grads[0];
    };
    Tensor gf = grad_of([](Var x) { return sum(square(x)); });
    Tensor gg = grad_of([](Var x) { return sum(exp(x)); });
    Tensor gc = grad_of([&](Var x) { return add(scale(sum(square(x)), a), scale(sum(exp(x)), b)); });
    for (int i = 0; i < 3; ++i)
        CHECK(std::abs(gc[i] - (a * gf[i] + b * gg[i])) < 1e-12);
}

TEST_CASE("tape replay is bit-identical") {
    Tensor x0 = Tensor::vector({0.3, 0.9});
    auto run = [&] {
        Tape tape;
        Var x = tape.leaf(x0);
        Var loss = sum(mul(tanh(x), sigmoid(x)));
        return tape.backward(loss, {x});
    };
    GradResult g1 = run();
    GradResult g2 = run();
    CHECK(g1.loss == g2.loss);
    for (int i = 0; i < 2; ++i) CHECK(g1.grads[0][i] == g2.grads[0][i]);
}

TEST_CASE("finite_diff_check oracle") {
    SUBCASE("polynomial passes") {
        auto f = [](Tape&, const std::vector<Var>& p) { return sum(square(p[0])); };
        FiniteDiffReport r = finite_diff_check(f, {Tensor::vector({1.5, -2.0, 0.25})}, 1e-5, 1e-5);
        CHECK(r.pass);
    }
    SUBCASE("zero step rejected") {
        auto f = [](Tape&, const std::vector<Var>& p) { return sum(p[0]); };
        CHECK_THROWS_AS(finite_diff_check(f, {Tensor::scalar(1.0)}, 0.0, 1e-5), TensorError);
    }
}

TEST_CASE("every primitive matches central finite differences") {
    // property test: >= 100 random draws over the primitive set
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::uniform_real_distribution<double> pos(0.5, 2.0);

    auto rand_vec = [&](int n, bool positive) {
        std::vector<double> v(static_cast<std::size_t>(n));
        for (double& x : v) x = positive ? pos(rng) : unit(rng);
        return Tensor::vector(std::move(v));
    };

    using LossFn = std::function<Var(Tape&, const std::vector<Var>&)>;
    struct Case {
        LossFn f;
        bool positive = false;
        int arity = 1;
    };
    std::vector<Case> cases = {
        {[](Tape&, const std::vector<Var>& p) { return sum(tanh(p[0])); }},
        {[](Tape&, const std::vector<Var>& p) { return sum(sigmoid(p[0])); }},
        {[](Tape&, const std::vector<Var>& p) { return sum(exp(p[0])); }},
        {[](Tape&, const std::vector<Var>& p) { return sum(log(p[0])); }, true},
        {[](Tape&, const std::vector<Var>& p) { return sum(square(p[0])); }},
        {[](Tape&, const std::vector<Var>& p) { return mean(p[0]); }},
        {[](Tape&, const std::vector<Var>& p) { return scale(sum(p[0]), 1.3); }},
        {[](Tape&, const std::vector<Var>& p) { return sum(shift(p[0], 0.7)); }},
        {[](Tape&, const std::vector<Var>& p) { return square(slice(p[0], 1)); }},
        {[](Tape&, const std::vector<Var>& p) { return sum(square(add(p[0], p[1]))); }, false, 2},
        {[](Tape&, const std::vector<Var>& p) { return sum(square(sub(p[0], p[1]))); }, false, 2},
        {[](Tape&, const std::vector<Var>& p) { return sum(mul(p[0], p[1])); }, false, 2},
        {[](Tape&, const std::vector<Var>& p) { return sum(div(p[0], p[1])); }, true, 2},
        {[](Tape& t, const std::vector<Var>& p) {
             Var m = reshape(concat({p[0], p[1]}), {2, 4});
             (void)t;
             return sum(square(m));
         }, false, 2},
    };

    int draws = 0;
    for (int rep = 0; rep < 10; ++rep) {
        for (const Case& c : cases) {
            std::vector<Tensor> params;
            for (int a = 0; a < c.arity; ++a) params.push_back(rand_vec(4, c.positive));
            FiniteDiffReport r = finite_diff_check(c.f, params, 1e-6, 1e-6);
            CAPTURE(r.max_rel_err);
            CHECK(r.pass);
            ++draws;
        }
    }
    // matmul against a random matrix, vector and matrix rhs
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> mv(6);
        for (double& x : mv) x = unit(rng);
        Tensor M(std::vector<int>{2, 3}, mv);
        auto f = [&](Tape& t, const std::vector<Var>& p) {
            return sum(square(matmul(t.constant(M), p[0])));
        };
        FiniteDiffReport r = finite_diff_check(f, {rand_vec(3, false)}, 1e-6, 1e-6);
        CHECK(r.pass);
        draws += 1;
    }
    CHECK(draws >= 100);
}
