#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "vstat/errors.hpp"
#include "vstat/heat_kernel.hpp"

using namespace vstat;

TEST_CASE("truncation order") {
    // Direct evaluation of the neglected-image inequality.
    CHECK(truncation_order(0.5, 1e-12) == 2);
    CHECK(truncation_order(0.01, 1e-12) == 1);
    const int n10 = truncation_order(10.0, 1e-12);
    CHECK(n10 > 2);
    // Incremental-sum oracle: add image pairs until the relative increment drops below eps.
    for (double delta : {0.0, 1.0, 2.5, kPi}) {
        double s = std::exp(-delta * delta / 20.0);
        int n = 0;
        for (;;) {
            ++n;
            const double a = delta + kTwoPi * n;
            const double b = delta - kTwoPi * n;
            const double inc = std::exp(-a * a / 20.0) + std::exp(-b * b / 20.0);
            s += inc;
            if (inc < 1e-12 * s) break;
        }
        CHECK(n10 >= n - 1);
        const double full = oracle::naive_axis_kernel(10.0, delta, 64);
        CHECK(axis_kernel(10.0, delta, n10) == doctest::Approx(full).epsilon(2e-12));
    }
    CHECK(truncation_order(10.0, 1e-14) <= 6);
    CHECK(truncation_order(1e4, 1e-14, 64) == 64);
    CHECK_THROWS_AS(truncation_order(0.0, 1e-12), InvalidInput);
    CHECK_THROWS_AS(truncation_order(-1.0, 1e-12), InvalidInput);
}

TEST_CASE("kernel values") {
    FlatTorus s1(1);
    const Point o = s1.point({0.0});
    CHECK(kernel(s1, 0.5, o, o) == doctest::Approx(oracle::naive_axis_kernel(0.5, 0.0, 10)).epsilon(1e-14));
    CHECK(kernel(s1, 0.5, o, o) == doctest::Approx(0.564190).epsilon(2e-6));
    CHECK(std::abs(kernel(s1, 0.5, o, o) - 1.0 / std::sqrt(kPi)) < 1e-12);
    CHECK_THROWS_AS(kernel(s1, 0.0, o, o), InvalidInput);

    // Conservation of probability, periodic trapezoid with 2048 nodes.
    for (double t : {0.1, 1.0}) {
        double s = 0.0;
        for (int j = 0; j < 2048; ++j) s += kernel(s1, t, o, s1.point({kTwoPi * j / 2048})) * kTwoPi / 2048;
        CHECK(s == doctest::Approx(1.0).epsilon(1e-8));
    }

    FlatTorus t2(2);
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(0.0, kTwoPi);
    for (int i = 0; i < 200; ++i) {
        const Point x = t2.point({u(gen), u(gen)});
        const Point y = t2.point({u(gen), u(gen)});
        const double prod = kernel(s1, 0.3, s1.point({x[0]}), s1.point({y[0]})) *
                            kernel(s1, 0.3, s1.point({x[1]}), s1.point({y[1]}));
        CHECK(kernel(t2, 0.3, x, y) == doctest::Approx(prod).epsilon(1e-14));
        CHECK(kernel(t2, 0.3, x, y) == kernel(t2, 0.3, y, x));
        CHECK(kernel(t2, 0.3, x, y) > 0.0);
    }
}

TEST_CASE("cost examples") {
    FlatTorus s1(1);
    const Point o = s1.point({0.0});
    const Point a = s1.point({kPi});
    CHECK(cost(s1, 0.0, o, a) == doctest::Approx(kPi * kPi).epsilon(1e-15));
    // Two-image formula at the antipode.
    CHECK(cost(s1, 0.01, o, a) == doctest::Approx(oracle::two_image_cost(0.01, 0.0)).epsilon(1e-12));
    CHECK(std::abs(cost(s1, 0.01, o, a) - 9.8281) < 1e-4);
    // Full series cross-check.
    CHECK(cost(s1, 0.01, o, a) ==
          doctest::Approx(-2.0 * 0.01 * std::log(oracle::naive_axis_kernel(0.01, kPi, 10))).epsilon(1e-12));

    // Varadhan limit at y = 1. The gap behaves like t|log(2 pi t)|, which only
    // becomes monotone once t < 1/(2 pi e).
    const Point y = s1.point({1.0});
    double prev = 0.0;
    for (double t : {0.1, 0.05, 0.01}) {
        const double c = cost(s1, t, o, y);
        CHECK(c == doctest::Approx(-2.0 * t * std::log(oracle::naive_axis_kernel(t, 1.0, 10))).epsilon(1e-12));
        CHECK(std::abs(c - 1.0) < 0.3);
    }
    prev = 1e9;
    for (double t : {0.055, 0.02, 0.01, 0.005, 0.001}) {
        const double gap = std::abs(cost(s1, t, o, y) - 1.0);
        CHECK(gap < prev + 1e-15);
        prev = gap;
    }
    CHECK_THROWS_AS(cost(s1, -0.1, o, y), InvalidInput);
}

TEST_CASE("gradient and Hessian examples") {
    FlatTorus s1(1);
    const Point o = s1.point({0.0});
    CHECK(grad_x(s1, 0.1, o, s1.point({kPi})).vec[0] == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
    const double g = grad_x(s1, 0.1, o, s1.point({kPi + 1.0})).vec[0];
    CHECK(g == doctest::Approx(oracle::two_image_grad(0.1, 1.0)).epsilon(1e-12));
    CHECK(g == doctest::Approx(4.28319).epsilon(1e-5));

    CHECK(hess_x(s1, 0.1, o, s1.point({kPi}))(0, 0) == doctest::Approx(2.0 - 2.0 * kPi * kPi / 0.1).epsilon(1e-10));
    CHECK(hess_x(s1, 0.1, o, s1.point({kPi}))(0, 0) == doctest::Approx(-195.392).epsilon(1e-6));
    CHECK(std::abs(hess_x(s1, 0.01, o, s1.point({kPi + 1.0}))(0, 0) - 2.0) < 1e-6);

    FlatTorus t2(2);
    const double th = 0.4, om = -0.7, t = 0.05;
    const CostEval e = evaluate(t2, t, t2.point({0.0, 0.0}), t2.point({kPi + th, kPi + om}));
    CHECK(e.grad.vec[0] == doctest::Approx(oracle::two_image_grad(t, th)).epsilon(1e-12));
    CHECK(e.grad.vec[1] == doctest::Approx(oracle::two_image_grad(t, om)).epsilon(1e-12));
    CHECK(e.hess(0, 1) == 0.0);
    CHECK(e.hess(1, 0) == 0.0);
    CHECK(e.hess(0, 0) == doctest::Approx(oracle::two_image_hess(t, th)).epsilon(1e-10));
    CHECK_THROWS_AS(grad_x(s1, 0.0, o, o), InvalidInput);
    CHECK_THROWS_AS(hess_x(s1, -1.0, o, o), InvalidInput);
}

TEST_CASE("analytic derivatives match finite differences") {
    std::mt19937_64 gen(11);
    std::uniform_real_distribution<double> ut(0.01, 1.0);
    std::uniform_real_distribution<double> ua(0.0, kTwoPi);
    const double h = 1e-5;
    for (int m : {1, 2}) {
        FlatTorus mfd(m);
        for (int i = 0; i < 500; ++i) {
            const double t = ut(gen);
            Vector xc(m), yc(m);
            for (int k = 0; k < m; ++k) {
                xc[k] = ua(gen);
                yc[k] = ua(gen);
            }
            const Point x = mfd.point(xc);
            const Point y = mfd.point(yc);
            const CostEval e = evaluate(mfd, t, x, y);
            CHECK(e.value == doctest::Approx(cost(mfd, t, x, y)).epsilon(1e-14));
            for (int k = 0; k < m; ++k) {
                auto shifted = [&](double s) {
                    Vector c = x.coords;
                    c[k] += s;
                    return Point(c);
                };
                const double fd_g = oracle::central_diff([&](double s) { return cost(mfd, t, shifted(s), y); }, 0.0, h);
                const double fd_h =
                    oracle::central_diff([&](double s) { return grad_x(mfd, t, shifted(s), y).vec[k]; }, 0.0, h);
                REQUIRE(std::abs(e.grad.vec[k] - fd_g) / (1.0 + e.grad.norm()) < 1e-6);
                REQUIRE(std::abs(e.hess(k, k) - fd_h) / (1.0 + e.hess.norm()) < 1e-5);
            }
            REQUIRE((e.hess - e.hess.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
        }
    }
}

TEST_CASE("closed forms near the antipode match the series for small t") {
    FlatTorus s1(1);
    const Point o = s1.point({0.0});
    for (double t : {0.2, 0.1, 0.03, 0.01, 1e-3}) {
        for (double th = -kPi + 1e-3; th < kPi; th += 0.0137) {
            const Point y = s1.point({kPi + th});
            const CostEval e = evaluate(s1, t, o, y);
            REQUIRE(std::abs(e.grad.vec[0] - oracle::two_image_grad(t, th)) < 1e-9);
            REQUIRE(std::abs(e.hess(0, 0) - oracle::two_image_hess(t, th)) < 1e-9 * (1.0 + 2.0 * kPi * kPi / t));
            REQUIRE(std::abs(e.value - oracle::two_image_cost(t, th)) < 1e-9);
        }
    }
}

TEST_CASE("Varadhan convergence on the circle") {
    FlatTorus s1(1);
    const auto g = s1.grid(64);
    double prev = 1e9;
    for (double t : {0.2, 0.1, 0.05, 0.01}) {
        double worst = 0.0;
        for (const auto& x : g)
            for (const auto& y : g) worst = std::max(worst, std::abs(cost(s1, t, x, y) - cost(s1, 0.0, x, y)));
        CHECK(worst < prev);
        prev = worst;
    }
    CHECK(prev < 0.35);
}

TEST_CASE("blow-up rates at the antipode") {
    FlatTorus s1(1);
    const Point o = s1.point({0.0});
    const Point a = s1.point({kPi});
    const double t = 1e-3;
    CHECK(t * std::abs(hess_x(s1, t, o, a)(0, 0)) == doctest::Approx(2.0 * kPi * kPi).epsilon(0.01));
    // Gradient sup-norm over y stays below 2 pi and does not grow at any power of 1/t.
    std::vector<double> lt, ls;
    for (double tt : {0.1, 0.03, 0.01, 0.003, 0.001}) {
        double sup = 0.0;
        for (const auto& y : s1.grid(4096)) sup = std::max(sup, std::abs(grad_x(s1, tt, o, y).vec[0]));
        CHECK(sup <= kTwoPi + 1e-9);
        lt.push_back(std::log(tt));
        ls.push_back(std::log(sup));
    }
    const double slope = (ls.back() - ls.front()) / (lt.back() - lt.front());
    CHECK(std::abs(slope) < 0.05);
}

TEST_CASE("time derivative of the cost") {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> ut(0.02, 1.0);
    std::uniform_real_distribution<double> ua(0.0, kTwoPi);
    FlatTorus t2(2);
    for (int i = 0; i < 200; ++i) {
        const double t = ut(gen);
        const Point x = t2.point({ua(gen), ua(gen)});
        const Point y = t2.point({ua(gen), ua(gen)});
        const double fd = oracle::central_diff([&](double s) { return cost(t2, t + s, x, y); }, 0.0, 1e-4 * t);
        REQUIRE(cost_dt(t2, t, x, y) == doctest::Approx(fd).epsilon(1e-6));
    }
    // On the diagonal d/dt F^t = m (log(2 pi t) + 1) up to image terms: a log(1/t) blow-up.
    for (double t : {1e-2, 1e-3, 1e-4}) {
        const Point o = t2.point({0.0, 0.0});
        CHECK(cost_dt(t2, t, o, o) == doctest::Approx(2.0 * (std::log(kTwoPi * t) + 1.0)).epsilon(1e-12));
    }
    CHECK_THROWS_AS(cost_dt(t2, 0.0, t2.point({0.0, 0.0}), t2.point({0.0, 0.0})), InvalidInput);
}
