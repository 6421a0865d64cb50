#pragma once

// Heat kernel of the flat torus as a truncated periodic Gaussian image sum and
// the associated Varadhan cost F^t(x, y) = -2 t log K(t, x, y), F^0 = d^2.
//
// Everything factorizes over axes, so the per-axis routines below are the
// building blocks; multi-axis quantities are sums (cost) or diagonal stacks
// (gradient, Hessian) of them. Derivatives are taken in the first argument x
// with the offset convention delta = y - x canonicalized to (-pi, pi].

#include "vstat/manifold.hpp"

namespace vstat {

struct KernelConfig {
    double trunc_eps = 1e-14;
    int max_images = 64;

    void validate() const;
};

/// Smallest N >= 1 such that the first neglected image weight
/// exp(-(2 pi N - pi)^2 / (2t)) falls below eps, capped at max_images.
int truncation_order(double t, double eps, int max_images = 64);

/// Per-axis cost with its first and second x-derivatives.
struct AxisTerms {
    double cost;
    double grad;
    double hess;
};

/// Images n in [-images, images]; delta must already be canonical.
AxisTerms axis_terms(double t, double delta, int images);
double axis_cost(double t, double delta, int images);
/// One-dimensional heat kernel factor (2 pi t)^{-1/2} sum_n exp(-(delta + 2 pi n)^2 / (2t)).
double axis_kernel(double t, double delta, int images);

struct CostEval {
    double value;
    Tangent grad;
    Matrix hess;
};

double kernel(const FlatTorus& mfd, double t, const Point& x, const Point& y, const KernelConfig& cfg = {});
/// t = 0 returns the squared distance.
double cost(const FlatTorus& mfd, double t, const Point& x, const Point& y, const KernelConfig& cfg = {});
Tangent grad_x(const FlatTorus& mfd, double t, const Point& x, const Point& y, const KernelConfig& cfg = {});
Matrix hess_x(const FlatTorus& mfd, double t, const Point& x, const Point& y, const KernelConfig& cfg = {});
/// Time derivative d/dt F^t(x, y), t > 0. Diagnostic only: it grows like
/// m log(1/t) on the diagonal, so no bound uniform in t exists.
double cost_dt(const FlatTorus& mfd, double t, const Point& x, const Point& y, const KernelConfig& cfg = {});
/// Value, gradient and Hessian in one pass (t > 0).
CostEval evaluate(const FlatTorus& mfd, double t, const Point& x, const Point& y, const KernelConfig& cfg = {});

}  // namespace vstat
