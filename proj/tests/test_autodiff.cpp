#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oat/array.hpp"
#include "oat/rng.hpp"

using namespace oat;
using ad::Array;
using ad::Tape;

TEST_CASE("softmax of equal logits is uniform") {
    Tape t;
    Array out = t.softmax(Array::row({0.0, 0.0}));
    CHECK(out.at(0, 0) == doctest::Approx(0.5));
    CHECK(out.at(0, 1) == doctest::Approx(0.5));
}

TEST_CASE("matmul identity") {
    Tape t;
    Array eye(2, 2, {1, 0, 0, 1});
    Array v(2, 1, {3, 4});
    Array out = t.matmul(eye, v);
    CHECK(out.at(0, 0) == 3.0);
    CHECK(out.at(1, 0) == 4.0);
}

TEST_CASE("logsumexp analytic case") {
    Tape t;
    Array out = t.logsumexp(Array::row({std::log(1.0), std::log(3.0)}));
    CHECK(out.scalar() == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("logsumexp is stable for large entries") {
    Tape t;
    Array out = t.logsumexp(Array::row({1000.0, 1000.0}));
    CHECK(out.scalar() == doctest::Approx(1000.0 + std::log(2.0)));
}

TEST_CASE("backward: sum of squares") {
    Tape t;
    Array x = t.leaf(Array::row({1.0, 2.0}));
    Array loss = t.sum(t.mul(x, x));
    auto g = t.backward(loss);
    CHECK(g.at(x).at(0, 0) == doctest::Approx(2.0));
    CHECK(g.at(x).at(0, 1) == doctest::Approx(4.0));
}

TEST_CASE("backward: constant loss gives zero grads") {
    Tape t;
    Array x = t.leaf(Array::row({1.0, 2.0}));
    Array c = t.leaf(Array::scalar_of(5.0));
    Array loss = t.add(c, t.scale(t.sum(x), 0.0));
    auto g = t.backward(loss);
    CHECK(g.at(x).at(0, 0) == 0.0);
    CHECK(g.at(x).at(0, 1) == 0.0);
}

TEST_CASE("backward: sigmoid(w*x) at w=0") {
    Tape t;
    Array w = t.leaf(Array::scalar_of(0.0));
    Array x = Array::scalar_of(1.0);
    Array loss = t.sigmoid(t.mul(w, x));
    auto g = t.backward(loss);
    CHECK(g.at(w).scalar() == doctest::Approx(0.25));
}

TEST_CASE("backward rejects non-scalar loss and foreign arrays") {
    Tape t;
    Array x = t.leaf(Array::row({1.0, 2.0}));
    CHECK_THROWS(t.backward(x));
    Array off_tape = Array::row({1.0});
    CHECK_THROWS(t.backward(off_tape));
}

TEST_CASE("shape errors carry the op name") {
    Tape t;
    Array a(2, 3);
    Array b(2, 3);
    CHECK_THROWS_WITH_AS(t.matmul(a, b), doctest::Contains("matmul"), ad::ShapeError);
}

TEST_CASE("non-finite output raises a numeric fault") {
    Tape t;
    CHECK_THROWS_AS(t.log_fn(Array::row({0.0})), ad::NumericFault);
    CHECK_THROWS_AS(t.exp_fn(Array::row({1e9})), ad::NumericFault);
}

TEST_CASE("grad_check: quadratic form") {
    Rng rng(11);
    Array q(3, 3);
    for (auto& v : q.data) v = rng.uniform(-1, 1);
    Array x0 = Array::row({0.3, -0.7, 1.1});

    auto f = [&](std::span<const double> p) {
        Tape t;
        Array x = t.leaf(Array::row({p[0], p[1], p[2]}));
        return t.matmul(t.matmul(x, q), t.transpose(x)).scalar();
    };
    Tape t;
    Array x = t.leaf(x0);
    Array loss = t.matmul(t.matmul(x, q), t.transpose(x));
    auto g = t.backward(loss);
    double err = ad::grad_check(f, x0.data, g.at(x).data, 1e-5);
    CHECK(err < 1e-6);
}

TEST_CASE("grad_check: constant function has zero error") {
    auto f = [](std::span<const double>) { return 42.0; };
    std::vector<double> p{1.0, 2.0};
    std::vector<double> g{0.0, 0.0};
    CHECK(ad::grad_check(f, p, g, 1e-5) == 0.0);
}

TEST_CASE("grad_check rejects eps <= 0") {
    auto f = [](std::span<const double>) { return 0.0; };
    std::vector<double> p{1.0};
    CHECK_THROWS_AS(ad::grad_check(f, p, p, 0.0), std::invalid_argument);
}

TEST_CASE("every differentiable primitive matches central differences") {
    Rng rng(1234);
    // Builds a scalar loss exercising the given primitive, then checks the
    // full input gradient at random points.
    struct Case {
        const char* name;
        int n_inputs;
        std::function<Array(Tape&, const std::vector<Array>&)> f;
        double lo = -2.0, hi = 2.0;
    };
    std::vector<Case> cases = {
        {"matmul", 2,
         [](Tape& t, const std::vector<Array>& in) {
             return t.sum(t.mul(t.matmul(in[0], in[1]), t.matmul(in[0], in[1])));
         }},
        {"transpose", 1,
         [](Tape& t, const std::vector<Array>& in) { return t.sum(t.transpose(in[0])); }},
        {"add", 2,
         [](Tape& t, const std::vector<Array>& in) {
             return t.sum(t.mul(t.add(in[0], in[1]), in[0]));
         }},
        {"sub", 2,
         [](Tape& t, const std::vector<Array>& in) {
             return t.sum(t.mul(t.sub(in[0], in[1]), in[0]));
         }},
        {"mul", 2,
         [](Tape& t, const std::vector<Array>& in) {
             return t.sum(t.mul(t.mul(in[0], in[1]), in[1]));
         }},
        {"softmax", 1,
         [](Tape& t, const std::vector<Array>& in) {
             return t.sum(t.mul(t.softmax(in[0]), in[0]));
         }},
        {"sigmoid", 1,
         [](Tape& t, const std::vector<Array>& in) { return t.sum(t.sigmoid(in[0])); }},
        {"tanh", 1,
         [](Tape& t, const std::vector<Array>& in) { return t.sum(t.tanh_fn(in[0])); }},
        {"relu", 1, [](Tape& t, const std::vector<Array>& in) { return t.sum(t.relu(in[0])); }},
        {"softplus", 1,
         [](Tape& t, const std::vector<Array>& in) { return t.sum(t.softplus(in[0])); }},
        {"log", 1, [](Tape& t, const std::vector<Array>& in) { return t.sum(t.log_fn(in[0])); },
         0.5, 3.0},
        {"exp", 1, [](Tape& t, const std::vector<Array>& in) { return t.sum(t.exp_fn(in[0])); }},
        {"logsumexp", 1,
         [](Tape& t, const std::vector<Array>& in) { return t.sum(t.logsumexp(in[0])); }},
        {"mean", 1,
         [](Tape& t, const std::vector<Array>& in) { return t.mean(t.mul(in[0], in[0])); }},
        {"slice+concat", 1,
         [](Tape& t, const std::vector<Array>& in) {
             Array a = t.slice(in[0], 0, 2, 1, 3);
             Array b = t.slice(in[0], 1, 3, 0, 2);
             return t.sum(t.mul(t.concat_cols({a, b}), t.concat_cols({a, b})));
         }},
        {"reshape", 1,
         [](Tape& t, const std::vector<Array>& in) {
             return t.sum(t.mul(t.reshape(in[0], 9, 1), t.reshape(in[0], 9, 1)));
         }},
    };

    for (const auto& c : cases) {
        CAPTURE(c.name);
        for (int rep = 0; rep < 7; ++rep) {
            std::vector<Array> points;
            for (int i = 0; i < c.n_inputs; ++i) {
                Array p(3, 3);
                for (auto& v : p.data) v = rng.uniform(c.lo, c.hi);
                points.push_back(p);
            }
            // flatten
            std::vector<double> flat;
            for (const auto& p : points) flat.insert(flat.end(), p.data.begin(), p.data.end());

            auto eval = [&](std::span<const double> xs) {
                Tape t;
                std::vector<Array> in;
                size_t off = 0;
                for (int i = 0; i < c.n_inputs; ++i) {
                    Array p(3, 3);
                    std::copy(xs.begin() + off, xs.begin() + off + 9, p.data.begin());
                    off += 9;
                    in.push_back(t.leaf(p));
                }
                return c.f(t, in).scalar();
            };

            Tape t;
            std::vector<Array> in;
            for (const auto& p : points) in.push_back(t.leaf(p));
            Array loss = c.f(t, in);
            auto g = t.backward(loss);
            std::vector<double> analytic;
            for (const auto& p : in) {
                const Array& gi = g.at(p);
                analytic.insert(analytic.end(), gi.data.begin(), gi.data.end());
            }
            double err = ad::grad_check(eval, flat, analytic, 1e-5);
            CHECK(err < 1e-4);
        }
    }
}

TEST_CASE("softmax rows sum to one for wide-range inputs") {
    Rng rng(99);
    for (int rep = 0; rep < 50; ++rep) {
        Tape t;
        Array x(4, 7);
        for (auto& v : x.data) v = rng.uniform(-50, 50);
        Array s = t.softmax(x);
        for (int i = 0; i < s.rows(); ++i) {
            double sum = 0;
            for (int j = 0; j < s.cols(); ++j) sum += s.at(i, j);
            CHECK(std::abs(sum - 1.0) <= 1e-9);
        }
    }
}

TEST_CASE("backward is deterministic bit-for-bit") {
    Rng rng(5);
    Tape t;
    Array x = t.leaf([&] {
        Array a(4, 4);
        for (auto& v : a.data) v = rng.uniform(-1, 1);
        return a;
    }());
    Array y = t.sum(t.softmax(t.matmul(x, t.transpose(x))));
    auto g1 = t.backward(y);
    auto g2 = t.backward(y);
    REQUIRE(g1.by_node.size() == g2.by_node.size());
    for (size_t i = 0; i < g1.by_node.size(); ++i)
        CHECK(g1.by_node[i].data == g2.by_node[i].data);
}

TEST_CASE("apply_primitive dispatches by kind") {
    Tape t;
    Array out = ad::apply_primitive(t, ad::Prim::softmax, {Array::row({0, 0})});
    CHECK(out.at(0, 0) == doctest::Approx(0.5));
    CHECK_THROWS(ad::apply_primitive(t, ad::Prim::matmul, {Array::row({0, 0})}));
}
