#include <random>

#include "doctest.h"
#include "vstat/errors.hpp"
#include "vstat/manifold.hpp"

using namespace vstat;

namespace {

// Minimum over lattice representatives q + 2 pi n, n in {-1, 0, 1}^m.
double brute_distance(const Point& p, const Point& q) {
    const int m = p.dim();
    double best = 1e300;
    std::vector<int> n(static_cast<size_t>(m), -1);
    for (;;) {
        double s = 0.0;
        for (int k = 0; k < m; ++k) {
            const double d = q[k] + kTwoPi * n[static_cast<size_t>(k)] - p[k];
            s += d * d;
        }
        best = std::min(best, s);
        int k = 0;
        while (k < m && ++n[static_cast<size_t>(k)] > 1) n[static_cast<size_t>(k++)] = -1;
        if (k == m) break;
    }
    return std::sqrt(best);
}

Point random_point(const FlatTorus& mfd, std::mt19937_64& gen) {
    std::uniform_real_distribution<double> u(0.0, kTwoPi);
    Vector c(mfd.dim());
    for (int k = 0; k < mfd.dim(); ++k) c[k] = u(gen);
    return mfd.point(c);
}

}  // namespace

TEST_CASE("distance examples") {
    FlatTorus s1(1);
    CHECK(s1.distance(s1.point({0.0}), s1.point({kPi})) == doctest::Approx(kPi).epsilon(1e-15));
    CHECK(s1.distance(s1.point({0.0}), s1.point({0.0})) == 0.0);
    FlatTorus t2(2);
    const Point a = t2.point({0.0, 0.0});
    const Point b = t2.point({kPi, kPi});
    CHECK(t2.distance(a, b) == doctest::Approx(brute_distance(a, b)).epsilon(1e-15));
    CHECK(t2.distance(a, b) == doctest::Approx(kPi * std::sqrt(2.0)).epsilon(1e-15));
    CHECK_THROWS_AS(t2.distance(a, s1.point({0.0})), InvalidInput);
}

TEST_CASE("canonical offsets resolve the antipode to +pi") {
    CHECK(canonical_offset(kPi) == kPi);
    CHECK(canonical_offset(-kPi) == kPi);
    CHECK(canonical_offset(3.0 * kPi) == doctest::Approx(kPi));
    CHECK(canonical_offset(1.5 * kPi) == doctest::Approx(-0.5 * kPi));
    CHECK(wrap_angle(-1e-300) >= 0.0);
    CHECK(wrap_angle(-1e-300) < kTwoPi);
}

TEST_CASE("exp examples") {
    FlatTorus s1(1);
    const Point p0 = s1.point({0.0});
    CHECK(s1.exp(p0, s1.tangent(p0, Vector::Constant(1, kPi / 2)))[0] == doctest::Approx(kPi / 2));
    const Point p = s1.point({1.5 * kPi});
    // Wraparound oracle: (3pi/2 + pi) mod 2pi.
    const double expected = std::fmod(1.5 * kPi + kPi, kTwoPi);
    CHECK(s1.exp(p, s1.tangent(p, Vector::Constant(1, kPi)))[0] == doctest::Approx(expected).epsilon(1e-14));
    FlatTorus t2(2);
    const Point o = t2.point({0.0, 0.0});
    CHECK(t2.exp(o, t2.tangent(o, Vector::Zero(2))) == o);
    CHECK_THROWS_AS(s1.exp(p0, s1.tangent(p, Vector::Constant(1, 0.1))), InvalidInput);
}

TEST_CASE("log examples and cut-locus error") {
    FlatTorus s1(1);
    const Point o = s1.point({0.0});
    CHECK(s1.log(o, s1.point({kPi / 2})).vec[0] == doctest::Approx(kPi / 2));
    const Point q = s1.point({1.5 * kPi});
    // Shorter arc by brute force over representatives q - 2pi, q.
    const double brute = std::abs(q[0]) < std::abs(q[0] - kTwoPi) ? q[0] : q[0] - kTwoPi;
    CHECK(s1.log(o, q).vec[0] == doctest::Approx(brute));
    CHECK(s1.log(o, q).vec[0] == doctest::Approx(-kPi / 2));
    CHECK_THROWS_AS(s1.log(o, s1.point({kPi})), CutLocusError);
    CHECK_THROWS_AS(s1.log(o, s1.point({kPi - 1e-10})), CutLocusError);
    CHECK_NOTHROW(s1.log(o, s1.point({kPi - 1e-6})));
}

TEST_CASE("parallel transport is the identity on components") {
    FlatTorus t2(2);
    const Point p = t2.point({0.3, 1.2});
    const Point q = t2.point({4.0, 5.5});
    Vector v(2);
    v << 1.0, 2.0;
    const Tangent moved = t2.parallel_transport(p, q, t2.tangent(p, v));
    CHECK(moved.base == q);
    CHECK(moved.vec == v);
    CHECK(t2.parallel_transport(p, q, t2.tangent(p, Vector::Zero(2))).vec == Vector::Zero(2));
    const Tangent back = t2.parallel_transport(q, p, moved);
    CHECK(back.vec == v);
    CHECK(back.norm() == t2.tangent(p, v).norm());
    CHECK_THROWS_AS(t2.parallel_transport(q, p, t2.tangent(p, v)), InvalidInput);
}

TEST_CASE("distance to the cut locus") {
    FlatTorus s1(1);
    const Point o = s1.point({0.0});
    CHECK(s1.dist_to_cut(o, s1.point({kPi})) == 0.0);
    // Dense-grid brute force: distance from q to the antipode set {pi}.
    const Point q = s1.point({kPi - 0.1});
    CHECK(s1.dist_to_cut(o, q) == doctest::Approx(s1.distance(q, s1.point({kPi}))).epsilon(1e-12));
    CHECK(s1.dist_to_cut(o, q) == doctest::Approx(0.1).epsilon(1e-12));
    FlatTorus t2(2);
    CHECK(t2.dist_to_cut(t2.point({0.0, 0.0}), t2.point({kPi, 0.0})) == 0.0);
}

TEST_CASE("grid ordering and validation") {
    FlatTorus s1(1);
    const auto g = s1.grid(4);
    REQUIRE(g.size() == 4);
    CHECK(g[1][0] == doctest::Approx(kPi / 2));
    CHECK(g[2][0] == doctest::Approx(kPi));
    CHECK(g[3][0] == doctest::Approx(1.5 * kPi));
    FlatTorus t2(2);
    const auto g2 = t2.grid(2);
    REQUIRE(g2.size() == 4);
    CHECK(g2[0] == t2.point({0.0, 0.0}));
    CHECK(g2[1] == t2.point({0.0, kPi}));
    CHECK(g2[2] == t2.point({kPi, 0.0}));
    CHECK(g2[3] == t2.point({kPi, kPi}));
    const auto fine = s1.grid(360);
    CHECK(fine[1][0] - fine[0][0] == doctest::Approx(kTwoPi / 360));
    CHECK_THROWS_AS(s1.grid(1), InvalidInput);
}

TEST_CASE("metric properties on random triples") {
    std::mt19937_64 gen(17);
    for (int m : {1, 2, 3}) {
        FlatTorus mfd(m);
        for (int i = 0; i < 10000; ++i) {
            const Point a = random_point(mfd, gen);
            const Point b = random_point(mfd, gen);
            const Point c = random_point(mfd, gen);
            const double ab = mfd.distance(a, b);
            REQUIRE(ab == doctest::Approx(mfd.distance(b, a)).epsilon(1e-12));
            REQUIRE(ab <= mfd.distance(a, c) + mfd.distance(c, b) + 1e-12);
            REQUIRE(ab <= mfd.diameter() + 1e-12);
        }
    }
}

TEST_CASE("exp and log are inverse inside the injectivity radius") {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int m : {1, 2}) {
        FlatTorus mfd(m);
        for (int i = 0; i < 10000; ++i) {
            const Point p = random_point(mfd, gen);
            Vector v(m);
            for (int k = 0; k < m; ++k) v[k] = u(gen) * (kPi - 1e-6);
            const Tangent tv = mfd.tangent(p, v);
            const Point q = mfd.exp(p, tv);
            const Tangent back = mfd.log(p, q);
            REQUIRE((back.vec - v).cwiseAbs().maxCoeff() < 1e-12);
            if (v.norm() < kPi) REQUIRE(mfd.distance(p, q) == doctest::Approx(v.norm()).epsilon(1e-12));
        }
    }
}

TEST_CASE("diameter attained at antipodes on a dense grid") {
    for (int m : {1, 2}) {
        FlatTorus mfd(m);
        const auto g = mfd.grid(m == 1 ? 64 : 16);
        double worst = 0.0;
        for (const auto& a : g)
            for (const auto& b : g) worst = std::max(worst, mfd.distance(a, b));
        CHECK(worst <= mfd.diameter() + 1e-9);
        CHECK(worst == doctest::Approx(mfd.diameter()).epsilon(1e-12));
    }
}
