#include "vstat/manifold.hpp"

#include <string>

#include "vstat/errors.hpp"

namespace vstat {

FlatTorus::FlatTorus(int dim) : dim_(dim) {
    if (dim < 1) throw InvalidInput("torus dimension must be positive, got " + std::to_string(dim));
}

void FlatTorus::check(const Point& p) const {
    if (p.dim() != dim_) {
        throw InvalidInput("point of dimension " + std::to_string(p.dim()) + " on torus of dimension " +
                           std::to_string(dim_));
    }
}

void FlatTorus::check(const Tangent& v) const {
    check(v.base);
    if (v.dim() != dim_) {
        throw InvalidInput("tangent of dimension " + std::to_string(v.dim()) + " on torus of dimension " +
                           std::to_string(dim_));
    }
}

Point FlatTorus::point(const Vector& coords) const {
    if (coords.size() != dim_) throw InvalidInput("coordinate count does not match torus dimension");
    Vector c(dim_);
    for (int k = 0; k < dim_; ++k) c[k] = wrap_angle(coords[k]);
    return Point(std::move(c));
}

Point FlatTorus::point(std::initializer_list<double> coords) const {
    Vector c(static_cast<Eigen::Index>(coords.size()));
    Eigen::Index i = 0;
    for (double v : coords) c[i++] = v;
    return point(c);
}

Tangent FlatTorus::tangent(const Point& base, Vector vec) const {
    check(base);
    if (vec.size() != dim_) throw InvalidInput("tangent vector dimension mismatch");
    return Tangent{base, std::move(vec)};
}

double FlatTorus::distance(const Point& p, const Point& q) const {
    check(p);
    check(q);
    return std::sqrt(distance_sq(p.span(), q.span()));
}

Point FlatTorus::exp(const Point& p, const Tangent& v) const {
    check(p);
    check(v);
    if (!(v.base == p)) throw InvalidInput("exp: tangent vector is not based at p");
    Vector c(dim_);
    for (int k = 0; k < dim_; ++k) c[k] = wrap_angle(p[k] + v.vec[k]);
    return Point(std::move(c));
}

Tangent FlatTorus::log(const Point& p, const Point& q) const {
    check(p);
    check(q);
    Vector v(dim_);
    for (int k = 0; k < dim_; ++k) {
        v[k] = canonical_offset(q[k] - p[k]);
        if (kPi - std::abs(v[k]) < kCutTolerance) {
            throw CutLocusError("log: target lies on the cut locus of the base point (axis " + std::to_string(k) +
                                ")");
        }
    }
    return Tangent{p, std::move(v)};
}

Tangent FlatTorus::parallel_transport(const Point& p, const Point& q, const Tangent& v) const {
    check(p);
    check(q);
    check(v);
    if (!(v.base == p)) throw InvalidInput("parallel_transport: tangent vector is not based at p");
    return Tangent{q, v.vec};
}

double FlatTorus::dist_to_cut(const Point& p, const Point& q) const {
    check(p);
    check(q);
    return vstat::dist_to_cut(p.span(), q.span());
}

std::vector<Point> FlatTorus::grid(int res) const {
    if (res < 2) throw InvalidInput("grid resolution must be at least 2");
    size_t total = 1;
    for (int k = 0; k < dim_; ++k) total *= static_cast<size_t>(res);
    std::vector<Point> out;
    out.reserve(total);
    std::vector<int> idx(static_cast<size_t>(dim_), 0);
    for (size_t n = 0; n < total; ++n) {
        Vector c(dim_);
        for (int k = 0; k < dim_; ++k) c[k] = kTwoPi * idx[static_cast<size_t>(k)] / res;
        out.emplace_back(std::move(c));
        for (int k = dim_ - 1; k >= 0; --k) {
            if (++idx[static_cast<size_t>(k)] < res) break;
            idx[static_cast<size_t>(k)] = 0;
        }
    }
    return out;
}

}  // namespace vstat
