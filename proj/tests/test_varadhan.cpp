#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "vstat/errors.hpp"
#include "vstat/varadhan.hpp"

using namespace vstat;

namespace {

Density vm1(double loc, double kappa) { return Density::von_mises(Vector::Constant(1, loc), Vector::Constant(1, kappa)); }

SampleSet single(std::initializer_list<double> xi) {
    SampleSet s;
    s.dim = static_cast<int>(xi.size());
    s.coords.assign(xi.begin(), xi.end());
    return s;
}

double circ_dist(double a, double b) { return std::abs(canonical_offset(b - a)); }

}  // namespace

TEST_CASE("eval examples") {
    const auto fu = VaradhanFunction::population(Density::uniform(1), 0.0, 4096);
    for (double x : {0.0, 1.0, 3.0}) CHECK(std::abs(fu.eval(Point{x}) - kPi * kPi / 3.0) < 1e-6);

    FlatTorus s1(1);
    const auto fe = VaradhanFunction::empirical(single({2.0}), 0.3);
    CHECK(fe.eval(Point{0.5}) == cost(s1, 0.3, Point{0.5}, Point{2.0}));

    const auto fv = VaradhanFunction::population(vm1(0.0, 2.0), 0.0);
    CHECK(fv.eval(Point{0.0}) < fv.eval(Point{kPi}));

    // Frechet function of a von Mises density against a Simpson oracle.
    for (double x : {0.0, 0.7, 2.9}) {
        const double ref = oracle::simpson(
            [x](double y) {
                const double d = oracle::brute_offset(y - x);
                return d * d * oracle::von_mises(y, 0.0, 2.0);
            },
            x - oracle::pi, x + oracle::pi, 20000);
        CHECK(fv.eval(Point{x}) == doctest::Approx(ref).epsilon(1e-9));
    }
    // Varadhan function for t > 0 against a Simpson oracle on the series kernel.
    const double t = 0.05;
    const auto ft = VaradhanFunction::population(vm1(0.3, 1.5), t);
    for (double x : {0.0, 2.0, 4.5}) {
        const double ref = oracle::simpson(
            [&](double y) {
                return -2.0 * t * std::log(oracle::naive_axis_kernel(t, y - x, 6)) * oracle::von_mises(y, 0.3, 1.5);
            },
            0.0, kTwoPi, 40000);
        CHECK(ft.eval(Point{x}) == doctest::Approx(ref).epsilon(1e-9));
    }
}

TEST_CASE("derivatives") {
    FlatTorus s1(1);
    const auto fe = VaradhanFunction::empirical(single({2.0}), 0.2);
    CHECK(fe.grad(Point{0.5}).vec[0] == grad_x(s1, 0.2, Point{0.5}, Point{2.0}).vec[0]);

    const auto fs = VaradhanFunction::population(vm1(1.0, 3.0), 0.1);
    CHECK(std::abs(fs.grad(Point{1.0}).vec[0]) < 1e-10);

    const auto fu = VaradhanFunction::population(Density::uniform(1), 0.05);
    for (double x : {0.0, 0.4, 5.0}) CHECK(std::abs(fu.grad(Point{x}).vec[0]) < 1e-8);

    const auto f0 = VaradhanFunction::population(vm1(0.0, 2.0), 0.0);
    CHECK_THROWS_AS(f0.grad(Point{0.0}), Unsupported);
    CHECK_THROWS_AS(f0.hess(Point{0.0}), Unsupported);

    // Finite differences of eval, on S1 and T2, including small t.
    const Density d2 = Density::mixture(
        {0.6, 0.4}, {Density::von_mises((Vector(2) << 0.5, 1.0).finished(), (Vector(2) << 2.0, 1.0).finished()),
                     Density::von_mises((Vector(2) << 3.0, 4.0).finished(), (Vector(2) << 4.0, 0.5).finished())});
    for (double t : {0.5, 0.1, 0.01}) {
        const auto f = VaradhanFunction::population(d2, t);
        for (const Point& x : {Point{0.2, 0.3}, Point{3.5, 5.9}}) {
            const auto dv = f.derivatives(x);
            CHECK(dv.value == doctest::Approx(f.eval(x)).epsilon(1e-13));
            for (int k = 0; k < 2; ++k) {
                auto along = [&](double s) {
                    Vector c = x.coords;
                    c[k] += s;
                    return Point(c);
                };
                const double fg = oracle::central_diff([&](double s) { return f.eval(along(s)); }, 0.0, 1e-4);
                const double fh = oracle::central_diff([&](double s) { return f.grad(along(s)).vec[k]; }, 0.0, 1e-4);
                CHECK(std::abs(dv.grad[k] - fg) / (1.0 + dv.grad.norm()) < 1e-6);
                CHECK(std::abs(dv.hess(k, k) - fh) / (1.0 + dv.hess.norm()) < 1e-5);
            }
            CHECK(dv.hess(0, 1) == 0.0);
        }
    }
}

TEST_CASE("frechet gradient") {
    // -2 E[Log_0 Xi] for von Mises(0.5, 2): E[offset] by Simpson on (-pi, pi).
    const auto f = VaradhanFunction::population(vm1(0.5, 2.0), 0.0);
    const double ref = -2.0 * oracle::simpson([](double y) { return y * oracle::von_mises(y, 0.5, 2.0); }, -oracle::pi,
                                              oracle::pi, 20000);
    CHECK(f.frechet_gradient(Point{0.0})[0] == doctest::Approx(ref).epsilon(1e-10));
    const auto fe = VaradhanFunction::empirical(single({kPi}), 0.0);
    CHECK(fe.frechet_gradient(Point{0.0})[0] == doctest::Approx(-2.0 * kPi));
}

TEST_CASE("minimize examples") {
    for (double t : {0.0, 0.1, 0.5}) {
        const auto f = VaradhanFunction::empirical(single({2.0, 5.0}), t);
        const MeanResult r = minimize(f);
        CHECK(r.converged);
        CHECK(circ_dist(r.minimizer[0], 2.0) < 1e-7);
        CHECK(circ_dist(r.minimizer[1], 5.0) < 1e-7);
        if (t == 0.0) CHECK(std::abs(r.value) < 1e-14);
    }
    CHECK(variance(VaradhanFunction::empirical(single({1.0}), 0.0)) == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));

    const auto f0 = VaradhanFunction::population(vm1(0.0, 2.0), 0.0);
    CHECK(circ_dist(mean(f0)[0], 0.0) < 1e-6);

    for (double t : {0.0, 0.1}) {
        const MeanResult ru = minimize(VaradhanFunction::population(Density::uniform(1), t));
        CHECK(ru.flat);
        CHECK(ru.uniqueness_margin < 1e-10);
    }
    CHECK(std::abs(variance(VaradhanFunction::population(Density::uniform(1), 0.0, 4096)) - kPi * kPi / 3.0) < 1e-6);

    const auto f4 = VaradhanFunction::population(vm1(1.0, 4.0), 0.1);
    const MeanResult r4 = minimize(f4);
    CHECK(circ_dist(r4.minimizer[0], 1.0) < 1e-4);
    CHECK(r4.value == doctest::Approx(f4.eval(r4.minimizer)).epsilon(1e-14));
    CHECK(f4.grad(r4.minimizer).norm() < 1e-10);
    CHECK(r4.uniqueness_margin > 0.0);
    CHECK(!r4.flat);
}

TEST_CASE("exact circular Frechet mean") {
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(0.0, kTwoPi);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> a(1 + trial % 7);
        for (double& v : a) v = u(gen);
        const LocalResult r = circle_frechet_mean(a);
        // Brute-force oracle on a fine grid plus local polish.
        double best = 1e300;
        for (int j = 0; j < 20000; ++j) {
            const double x = kTwoPi * j / 20000;
            double s = 0.0;
            for (double v : a) s += std::pow(oracle::brute_offset(v - x), 2);
            best = std::min(best, s / a.size());
        }
        CHECK(r.value <= best + 1e-12);
        CHECK(r.value >= best - 1e-3);
        double check = 0.0;
        for (double v : a) check += std::pow(oracle::brute_offset(v - r.point[0]), 2);
        CHECK(r.value == doctest::Approx(check / a.size()).epsilon(1e-12));
    }
}

TEST_CASE("minimizer optimality on an audit grid") {
    const Density mx = Density::mixture({0.5, 0.5}, {vm1(0.0, 3.0), vm1(2.5, 2.0)});
    for (double t : {0.0, 0.2, 0.05}) {
        const auto f = VaradhanFunction::population(mx, t);
        const MeanResult r = minimize(f);
        for (const Point& g : FlatTorus(1).grid(512)) REQUIRE(r.value <= f.eval(g) + 1e-9);
    }
    const auto fe = VaradhanFunction::empirical(sample(mx, 60, 8), 0.1);
    const MeanResult re = minimize(fe);
    for (const Point& g : FlatTorus(1).grid(512)) REQUIRE(re.value <= fe.eval(g) + 1e-9);
}

TEST_CASE("rotation equivariance") {
    const std::vector<Density> ds = {vm1(0.4, 2.0), Density::mixture({0.3, 0.7}, {vm1(0.0, 4.0), vm1(2.0, 1.0)})};
    for (const auto& d : ds) {
        for (double t : {0.0, 0.1}) {
            const MeanResult a = minimize(VaradhanFunction::population(d, t));
            for (double alpha : {0.7, 2.3}) {
                const MeanResult b =
                    minimize(VaradhanFunction::population(d.rotated(Vector::Constant(1, alpha)), t));
                CHECK(circ_dist(b.minimizer[0], a.minimizer[0] + alpha) < 1e-6);
                CHECK(std::abs(b.value - a.value) < 1e-9);
            }
        }
    }
}

TEST_CASE("continuity in t and the min-functional bound") {
    const Density d = vm1(0.0, 2.0);
    const MeanResult r0 = minimize(VaradhanFunction::population(d, 0.0));
    CHECK(circ_dist(r0.minimizer[0], 0.0) < 1e-6);
    const auto grid = FlatTorus(1).grid(256);
    double prev_gap = 1e9;
    for (double t : {0.2, 0.1, 0.05, 0.01, 0.003, 0.001}) {
        const auto ft = VaradhanFunction::population(d, t);
        const auto f0 = VaradhanFunction::population(d, 0.0);
        const MeanResult rt = minimize(ft);
        CHECK(circ_dist(rt.minimizer[0], 0.0) < 1e-4);
        double sup = 0.0;
        for (const Point& g : grid) sup = std::max(sup, std::abs(ft.eval(g) - f0.eval(g)));
        CHECK(std::abs(rt.value - r0.value) <= sup);
        // V^t - V^0 is led by t log(2 pi t); its magnitude is monotone only below t = 1/(2 pi e).
        if (t < 1.0 / (kTwoPi * std::exp(1.0))) {
            if (prev_gap < 1e9) CHECK(std::abs(rt.value - r0.value) < prev_gap);
            prev_gap = std::abs(rt.value - r0.value);
        }
    }
}

TEST_CASE("torus minimization") {
    const Density d = Density::von_mises((Vector(2) << 1.0, 4.0).finished(), (Vector(2) << 3.0, 2.0).finished());
    MinimizeOptions opts;
    opts.starts = 12;
    const MeanResult r = minimize(VaradhanFunction::population(d, 0.05, 128), opts);
    CHECK(circ_dist(r.minimizer[0], 1.0) < 1e-6);
    CHECK(circ_dist(r.minimizer[1], 4.0) < 1e-6);
    CHECK(r.converged);
}
