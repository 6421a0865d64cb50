#include <chrono>
#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "vstat/asymptotics.hpp"
#include "vstat/errors.hpp"

using namespace vstat;

namespace {

Density vm1(double loc, double kappa) { return Density::von_mises(Vector::Constant(1, loc), Vector::Constant(1, kappa)); }

double j_circle_oracle(double kappa) { return -2.0 * std::exp(-kappa) / oracle::bessel_i(0, kappa); }

// von Mises(0, 2) tabulated and set to zero within 0.6 of pi.
Density truncated_vm() {
    return Density::tabulate(1, 1024, [](std::span<const double> p) {
        const double off = std::abs(oracle::brute_offset(p[0]));
        return off > kPi - 0.6 ? 0.0 : std::exp(2.0 * std::cos(p[0]));
    });
}

}  // namespace

TEST_CASE("schedule validation") {
    JTermSchedule s = JTermSchedule::standard();
    CHECK_NOTHROW(s.validate());
    CHECK(s.times[0][0] == doctest::Approx(0.08));
    s.deltas = {0.1, 0.2, 0.4};
    CHECK_THROWS_AS(s.validate(), InvalidInput);
    JTermSchedule big = JTermSchedule::from_deltas({0.4});
    big.times[0] = {0.5};
    CHECK_THROWS_AS(big.validate(), InvalidInput);
    const Density u = Density::uniform(1);
    CHECK_THROWS_AS(j_term(u, Point{0.0}, 0.01, kPi), InvalidInput);
    CHECK_THROWS_AS(j_term(u, Point{0.0}, 0.01, 0.0), InvalidInput);
    CHECK_THROWS_AS(j_term(u, Point{0.0}, 0.0, 0.1), InvalidInput);
}

TEST_CASE("J term at fixed delta on the circle") {
    // Uniform: 2 mu(C_delta) - 2 once t << delta.
    const Density u = Density::uniform(1);
    for (double delta : {0.4, 0.1}) {
        const double jt = j_term(u, Point{0.0}, delta * delta / 8.0, delta)(0, 0);
        CHECK(jt == doctest::Approx(2.0 * (2.0 * delta / kTwoPi) - 2.0).epsilon(1e-6));
    }
    // Independent oracle: Simpson over the strip of hess * psi with the two-image closed form.
    const double t = 0.005, delta = 0.2;
    const double ref = oracle::simpson(
        [&](double th) { return oracle::two_image_hess(t, th) * oracle::von_mises(kPi + th, 0.0, 2.0); }, -delta,
        delta, 200000);
    CHECK(j_term(vm1(0.0, 2.0), Point{0.0}, t, delta)(0, 0) == doctest::Approx(ref).epsilon(1e-8));
}

TEST_CASE("J limit anchors on the circle") {
    const auto start = std::chrono::steady_clock::now();
    const JLimit jv = j_limit(vm1(0.0, 2.0), Point{0.0});
    CHECK(jv.value(0, 0) == doctest::Approx(j_circle_oracle(2.0)).epsilon(0.02));
    CHECK(jv.value(0, 0) == doctest::Approx(-0.11872).epsilon(0.02));
    CHECK(jv.converged);
    CHECK(jv.table.size() == 9);
    CHECK(jv.per_delta.size() == 3);
    const JLimit ju = j_limit(Density::uniform(1), Point{0.0});
    CHECK(ju.value(0, 0) == doctest::Approx(-2.0).epsilon(0.01));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CHECK(secs < 30.0);

    CHECK(std::abs(j_limit(truncated_vm(), Point{0.0}).value(0, 0)) < 1e-8);
}

TEST_CASE("J limit sign and magnitude for shipped densities") {
    const std::vector<std::pair<Density, double>> cases = {
        {vm1(0.0, 2.0), 0.0},
        {vm1(1.0, 4.0), 1.0},
        {Density::mixture({0.7, 0.3}, {vm1(0.5, 3.0), vm1(0.5, 0.5)}), 0.5},
        {Density::tabulate(1, 512, [](std::span<const double> p) { return std::exp(1.5 * std::cos(p[0] - 2.0)); }), 2.0}};
    for (const auto& [d, loc] : cases) {
        const Point x{loc};
        const double j = j_limit(d, x).value(0, 0);
        CHECK(j <= 0.0);
        CHECK(j >= -4.0 * kPi * d.max_value());
        CHECK(j == doctest::Approx(-4.0 * kPi * d.at(Point{wrap_angle(loc + kPi)})).epsilon(0.02));
    }
}

TEST_CASE("J limit on the two-torus") {
    const Density p = Density::von_mises((Vector(2) << 0.0, 0.0).finished(), (Vector(2) << 2.0, 0.0).finished());
    const JLimit j = j_limit(p, Point{0.0, 0.0});
    // 1-D oracles for the marginal integrals along the cut lines.
    const double j11 =
        -4.0 * oracle::pi *
        oracle::simpson([](double w) { return oracle::von_mises(oracle::pi, 0.0, 2.0) / (2.0 * oracle::pi) + 0.0 * w; },
                        0.0, 2.0 * oracle::pi, 200);
    const double j22 = -4.0 * oracle::pi *
                       oracle::simpson([](double th) { return oracle::von_mises(th, 0.0, 2.0) / (2.0 * oracle::pi); },
                                       0.0, 2.0 * oracle::pi, 2000);
    CHECK(j.value(0, 0) == doctest::Approx(j11).epsilon(0.02));
    CHECK(j.value(1, 1) == doctest::Approx(j22).epsilon(0.02));
    CHECK(std::abs(j.value(0, 1)) < 1e-6);
    CHECK(std::abs(j.value(1, 0)) < 1e-6);

    const JLimit ju = j_limit(Density::uniform(2), Point{0.0, 0.0});
    CHECK(ju.value(0, 0) == doctest::Approx(-2.0).epsilon(0.01));
    CHECK(ju.value(1, 1) == doctest::Approx(-2.0).epsilon(0.01));
}

TEST_CASE("Hessian limits") {
    const auto hu = hessian_limit(Density::uniform(1), Point{0.0});
    CHECK(std::abs(hu.limit(0, 0)) < 0.02);
    CHECK(std::abs(hu.direct(0, 0)) < 0.02);

    const auto hv = hessian_limit(vm1(0.0, 2.0), Point{0.0});
    CHECK(hv.limit(0, 0) == doctest::Approx(2.0 + j_circle_oracle(2.0)).epsilon(0.005));
    CHECK(hv.limit(0, 0) == doctest::Approx(1.88128).epsilon(0.005));
    CHECK(hv.rel_gap < 0.05);
    CHECK(!hv.inconsistent);

    const auto ht = hessian_limit(truncated_vm(), Point{0.0});
    CHECK(ht.limit(0, 0) == doctest::Approx(2.0).epsilon(1e-8));
    // Only limited by integrating the piecewise-linear table on cut-aligned panels.
    CHECK(ht.direct(0, 0) == doctest::Approx(2.0).epsilon(5e-4));

    const auto hm = hessian_limit(Density::mixture({0.6, 0.4}, {vm1(0.0, 3.0), vm1(1.0, 1.0)}), Point{0.3});
    CHECK(hm.rel_gap < 0.05);
}

TEST_CASE("Hessian gap over a neighborhood") {
    const auto ng = hessian_neighborhood_gap(vm1(0.0, 2.0), Point{0.0}, 0.25, 5);
    CHECK(ng.points.size() == 5);
    CHECK(ng.points.front()[0] == doctest::Approx(2.0 * kPi - 0.25));
    CHECK(ng.decaying);
    CHECK(ng.max_gap.back() < 0.01);
    CHECK(ng.max_gap.back() >= hessian_limit(vm1(0.0, 2.0), Point{0.0}).rel_gap);

    const auto n2 = hessian_neighborhood_gap(Density::uniform(2), Point{0.0, 0.0}, 0.1, 2, {0.1, 0.01}, JTermSchedule::standard(), 64);
    CHECK(n2.points.size() == 4);
    CHECK(n2.max_gap.back() < 0.02);
    CHECK_THROWS_AS(hessian_neighborhood_gap(vm1(0.0, 2.0), Point{0.0}, 4.0, 5), InvalidInput);
    CHECK_THROWS_AS(hessian_neighborhood_gap(vm1(0.0, 2.0), Point{0.0}, 0.1, 1), InvalidInput);
}

TEST_CASE("gradient limits") {
    const auto gs = gradient_limit(vm1(0.0, 2.0), Point{0.0});
    CHECK(std::abs(gs.target[0]) < 1e-6);
    for (const auto& g : gs.path) CHECK(std::abs(g[0]) < 1e-6);

    const auto g = gradient_limit(vm1(0.5, 2.0), Point{0.0});
    const double ref = -2.0 * oracle::simpson([](double y) { return y * oracle::von_mises(y, 0.5, 2.0); }, -oracle::pi,
                                              oracle::pi, 20000);
    CHECK(g.target[0] == doctest::Approx(ref).epsilon(1e-10));
    CHECK(g.gaps.back() < 1e-3);
    for (size_t i = 1; i < g.gaps.size(); ++i) CHECK(g.gaps[i] < g.gaps[i - 1]);

    // Uniform density: 4 pi int_0^pi psi - 2 int_0^{2pi} theta psi = 0.
    CHECK(std::abs(gradient_limit(Density::uniform(1), Point{0.0}).target[0]) < 1e-12);
}

TEST_CASE("covariance reports") {
    const Density d = vm1(0.0, 2.0);
    const CovarianceReport r = sigma_t(d, 0.1);
    CHECK(r.reconstruction_error < 1e-10);
    // Scalar oracle: E[g^2] / H^2 by Simpson with the series kernel derivatives.
    const double t = 0.1;
    const auto gfun = [t](double y) {
        return oracle::central_diff(
            [&](double s) { return -2.0 * t * std::log(oracle::naive_axis_kernel(t, y - s, 6)); }, 0.0, 1e-4);
    };
    const double eg2 = oracle::simpson([&](double y) { return gfun(y) * gfun(y) * oracle::von_mises(y, 0.0, 2.0); },
                                       -oracle::pi, oracle::pi, 4000);
    CHECK(r.score_cov(0, 0) == doctest::Approx(eg2).epsilon(1e-7));
    CHECK(r.sigma(0, 0) == doctest::Approx(r.score_cov(0, 0) / (r.hess(0, 0) * r.hess(0, 0))).epsilon(1e-12));
    CHECK(std::abs(r.base[0]) < 1e-8);

    const Density p2 = Density::von_mises((Vector(2) << 0.0, 1.0).finished(), (Vector(2) << 2.0, 3.0).finished());
    const CovarianceReport r2 = sigma_t(p2, 0.2, 64);
    CHECK(std::abs(r2.sigma(0, 1)) < 1e-10);
    CHECK(r2.reconstruction_error < 1e-10);

    const CovarianceReport z = sigma_zero(d);
    const double e_log2 = oracle::simpson([](double y) { return y * y * oracle::von_mises(y, 0.0, 2.0); }, -oracle::pi,
                                          oracle::pi, 20000);
    const double h0 = 2.0 + j_circle_oracle(2.0);
    CHECK(z.sigma(0, 0) == doctest::Approx(4.0 * e_log2 / (h0 * h0)).epsilon(0.01));
    CHECK(z.sigma_naive(0, 0) == doctest::Approx(e_log2).epsilon(1e-9));
    CHECK(z.reconstruction_error < 1e-10);

    const CovarianceReport zt = sigma_zero(truncated_vm());
    CHECK(zt.sigma(0, 0) == doctest::Approx(zt.sigma_naive(0, 0)).epsilon(1e-8));

    CHECK_THROWS_AS(sigma_t(Density::uniform(1), 0.1), HypothesisViolation);
    CHECK_THROWS_AS(sigma_zero(Density::uniform(1)), HypothesisViolation);
    CHECK_THROWS_AS(sigma_var(Density::uniform(1), 0.0), HypothesisViolation);
}

TEST_CASE("Sigma^t approaches Sigma^0") {
    const Density d = vm1(0.0, 2.0);
    const double s0 = sigma_zero(d).sigma(0, 0);
    double prev = 1e9;
    for (double t : kDefaultTimeSchedule) {
        const double gap = std::abs(sigma_t(d, t).sigma(0, 0) / s0 - 1.0);
        INFO("t=" << t << " gap=" << gap);
        CHECK(gap < prev);
        prev = gap;
    }
    CHECK(prev < 0.02);
}

TEST_CASE("variance of the Varadhan loss") {
    const double u4 = sigma_var(Density::uniform(1), 0.0, 4096, Point{0.0});
    const double ref = oracle::simpson([](double th) { return std::pow(th, 4) / (2.0 * oracle::pi); }, -oracle::pi,
                                       oracle::pi, 20000) -
                       std::pow(oracle::pi * oracle::pi / 3.0, 2);
    CHECK(u4 == doctest::Approx(ref).epsilon(1e-8));
    CHECK(u4 == doctest::Approx(4.0 * std::pow(kPi, 4) / 45.0).epsilon(1e-8));
    // Concentrating densities: sigma^0 -> 0.
    double prev = 1e9;
    for (double kappa : {10.0, 100.0, 1000.0}) {
        const double s = sigma_var(vm1(0.0, kappa), 0.0, 1024);
        CHECK(s < prev);
        prev = s;
    }
    CHECK(prev < 1e-5);
}

TEST_CASE("Taylor remainder") {
    FlatTorus s1(1);
    auto gradf = [&](double t, double y) {
        return [&s1, t, y](const Point& x) { return grad_x(s1, t, x, Point{y}).vec; };
    };
    auto hessf = [&](double t, double y) {
        return [&s1, t, y](const Point& x) { return hess_x(s1, t, x, Point{y}); };
    };
    const std::vector<double> radii = {0.1, 0.05, 0.025, 0.0125};
    // Base point on the cut locus of y.
    const TaylorRemainder tr = taylor_remainder(gradf(0.2, kPi), hessf(0.2, kPi), Point{0.0}, radii, Vector::Ones(1));
    CHECK(tr.slope >= 1.9);
    // Base point 0.64 from the cut, moving towards it.
    const TaylorRemainder tc = taylor_remainder(gradf(0.2, 2.5), hessf(0.2, 2.5), Point{0.0}, radii, -Vector::Ones(1));
    CHECK(tc.slope >= 1.9);

    const TaylorRemainder t1 = taylor_remainder(gradf(1.0, 1.0), hessf(1.0, 1.0), Point{0.0}, {0.01}, Vector::Ones(1));
    CHECK(t1.residuals[0] < 1e-3);
    CHECK(std::isnan(t1.slope));
    const TaylorRemainder tz =
        taylor_remainder(gradf(0.5, 2.0), hessf(0.5, 2.0), Point{0.3}, {1e-2, 1e-3, 1e-4}, -Vector::Ones(1));
    CHECK(tz.residuals[2] < tz.residuals[1]);
    CHECK(tz.residuals[1] < tz.residuals[0]);
    CHECK(loglog_slope({1.0, 2.0, 4.0}, {3.0, 12.0, 48.0}) == doctest::Approx(2.0));
}
