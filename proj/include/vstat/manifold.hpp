#pragma once

// Geometry of the flat circle S^1 = R/2piZ and product tori T^m = (R/2piZ)^m.

#include <cmath>
#include <initializer_list>
#include <numbers>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace vstat {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Distance to the cut locus below which `log` refuses to answer.
inline constexpr double kCutTolerance = 1e-9;

/// Wraps an angle into [0, 2pi).
inline double wrap_angle(double a) {
    double r = a - kTwoPi * std::floor(a / kTwoPi);
    if (r >= kTwoPi) r = 0.0;  // rounding of values just below a multiple of 2pi
    if (r < 0.0) r = 0.0;
    return r;
}

/// Signed offset canonicalized to (-pi, pi]; an exact antipode maps to +pi.
inline double canonical_offset(double d) {
    if (d > -kPi && d <= kPi) return d;
    double r = d - kTwoPi * std::floor((d + kPi) / kTwoPi);
    if (r <= -kPi) r += kTwoPi;
    if (r > kPi) r -= kTwoPi;
    return r;
}

struct Point {
    Vector coords;

    Point() = default;
    explicit Point(Vector c) : coords(std::move(c)) {}
    Point(std::initializer_list<double> c) : coords(static_cast<Eigen::Index>(c.size())) {
        Eigen::Index i = 0;
        for (double v : c) coords[i++] = v;
    }

    int dim() const { return static_cast<int>(coords.size()); }
    double operator[](int k) const { return coords[k]; }
    std::span<const double> span() const { return {coords.data(), static_cast<size_t>(coords.size())}; }
    friend bool operator==(const Point& a, const Point& b) {
        return a.coords.size() == b.coords.size() && a.coords == b.coords;
    }
};

/// Tangent vector in the canonical orthonormal frame at `base`.
struct Tangent {
    Point base;
    Vector vec;

    int dim() const { return static_cast<int>(vec.size()); }
    double norm() const { return vec.norm(); }
};

/// Flat torus T^m with period 2pi on every axis; m = 1 is the circle.
class FlatTorus {
public:
    explicit FlatTorus(int dim);

    int dim() const { return dim_; }
    double diameter() const { return kPi * std::sqrt(static_cast<double>(dim_)); }
    double injectivity_radius() const { return kPi; }

    /// Canonicalizes arbitrary coordinates into a point of this torus.
    Point point(const Vector& coords) const;
    Point point(std::initializer_list<double> coords) const;
    Tangent tangent(const Point& base, Vector vec) const;

    double distance(const Point& p, const Point& q) const;
    Point exp(const Point& p, const Tangent& v) const;
    /// Throws CutLocusError when q lies within kCutTolerance of Cut_p.
    Tangent log(const Point& p, const Point& q) const;
    /// Flat connection: components carried over unchanged.
    Tangent parallel_transport(const Point& p, const Point& q, const Tangent& v) const;
    double dist_to_cut(const Point& p, const Point& q) const;
    /// Tensor grid {2 pi j / res}^m in lexicographic order (first axis slowest).
    std::vector<Point> grid(int res) const;

    void check(const Point& p) const;
    void check(const Tangent& v) const;

    friend bool operator==(const FlatTorus& a, const FlatTorus& b) { return a.dim_ == b.dim_; }

private:
    int dim_;
};

// Raw-coordinate helpers for hot loops; callers guarantee matching sizes.
inline double distance_sq(std::span<const double> p, std::span<const double> q) {
    double s = 0.0;
    for (size_t k = 0; k < p.size(); ++k) {
        const double d = canonical_offset(q[k] - p[k]);
        s += d * d;
    }
    return s;
}

inline double dist_to_cut(std::span<const double> p, std::span<const double> q) {
    double best = kPi;
    for (size_t k = 0; k < p.size(); ++k) {
        best = std::min(best, kPi - std::abs(canonical_offset(q[k] - p[k])));
    }
    return best;
}

}  // namespace vstat
