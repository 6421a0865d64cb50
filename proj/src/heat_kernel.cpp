#include "vstat/heat_kernel.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "vstat/errors.hpp"

namespace vstat {

void KernelConfig::validate() const {
    if (!(trunc_eps > 0.0 && trunc_eps <= 1e-6)) throw InvalidInput("kernel trunc_eps must lie in (0, 1e-6]");
    if (max_images < 1) throw InvalidInput("kernel max_images must be at least 1");
}

int truncation_order(double t, double eps, int max_images) {
    if (!(t > 0.0)) throw InvalidInput("truncation_order: t must be positive");
    if (!(eps > 0.0 && eps < 1.0)) throw InvalidInput("truncation_order: eps must lie in (0, 1)");
    const double threshold = -std::log(eps);
    int n = 1;
    while (n < max_images) {
        const double off = kTwoPi * n - kPi;
        if (off * off / (2.0 * t) > threshold) break;
        ++n;
    }
    return n;
}

namespace {

// Anchored image sums: e_n = exp(-((delta + 2 pi n)^2 - delta^2) / (2t)) with
// the n = 0 term equal to one. Images are added in +-n pairs so that negating
// delta reproduces the sums bitwise.
struct ImageSums {
    double s0;  // sum e_n
    double s1;  // sum e_n * 2 pi n
    double s2;  // sum e_n * (2 pi n)^2
};

ImageSums image_sums(double t, double delta, int images) {
    ImageSums s{1.0, 0.0, 0.0};
    for (int n = 1; n <= images; ++n) {
        const double u = kTwoPi * n;
        const double ep = std::exp(-u * (delta + kPi * n) / t);
        const double em = std::exp(-u * (kPi * n - delta) / t);
        s.s0 += ep + em;
        s.s1 += u * (ep - em);
        s.s2 += u * u * (ep + em);
    }
    return s;
}

void require_positive_time(double t, const char* what) {
    if (!(t > 0.0)) throw InvalidInput(std::string(what) + ": t must be positive");
}

}  // namespace

AxisTerms axis_terms(double t, double delta, int images) {
    const ImageSums s = image_sums(t, delta, images);
    const double mean_shift = s.s1 / s.s0;
    const double var = s.s2 / s.s0 - mean_shift * mean_shift;
    AxisTerms out;
    out.cost = t * std::log(kTwoPi * t) + delta * delta - 2.0 * t * std::log(s.s0);
    out.grad = -2.0 * (delta + mean_shift);
    out.hess = 2.0 - 2.0 * std::max(var, 0.0) / t;
    return out;
}

double axis_cost(double t, double delta, int images) {
    const ImageSums s = image_sums(t, delta, images);
    return t * std::log(kTwoPi * t) + delta * delta - 2.0 * t * std::log(s.s0);
}

double axis_kernel(double t, double delta, int images) {
    const ImageSums s = image_sums(t, delta, images);
    return std::exp(-delta * delta / (2.0 * t)) * s.s0 / std::sqrt(kTwoPi * t);
}

double kernel(const FlatTorus& mfd, double t, const Point& x, const Point& y, const KernelConfig& cfg) {
    require_positive_time(t, "kernel");
    mfd.check(x);
    mfd.check(y);
    const int images = truncation_order(t, cfg.trunc_eps, cfg.max_images);
    double k = 1.0;
    for (int a = 0; a < mfd.dim(); ++a) k *= axis_kernel(t, canonical_offset(y[a] - x[a]), images);
    return k;
}

double cost(const FlatTorus& mfd, double t, const Point& x, const Point& y, const KernelConfig& cfg) {
    if (t < 0.0 || std::isnan(t)) throw InvalidInput("cost: t must be non-negative");
    mfd.check(x);
    mfd.check(y);
    if (t == 0.0) return distance_sq(x.span(), y.span());
    const int images = truncation_order(t, cfg.trunc_eps, cfg.max_images);
    double v = 0.0;
    for (int a = 0; a < mfd.dim(); ++a) v += axis_cost(t, canonical_offset(y[a] - x[a]), images);
    return v;
}

double cost_dt(const FlatTorus& mfd, double t, const Point& x, const Point& y, const KernelConfig& cfg) {
    require_positive_time(t, "cost_dt");
    mfd.check(x);
    mfd.check(y);
    const int images = truncation_order(t, cfg.trunc_eps, cfg.max_images);
    double v = 0.0;
    for (int a = 0; a < mfd.dim(); ++a) {
        const double delta = canonical_offset(y[a] - x[a]);
        const ImageSums s = image_sums(t, delta, images);
        v += std::log(kTwoPi * t) + 1.0 - 2.0 * std::log(s.s0) - (2.0 * delta * s.s1 + s.s2) / (s.s0 * t);
    }
    return v;
}

CostEval evaluate(const FlatTorus& mfd, double t, const Point& x, const Point& y, const KernelConfig& cfg) {
    require_positive_time(t, "evaluate");
    mfd.check(x);
    mfd.check(y);
    const int m = mfd.dim();
    const int images = truncation_order(t, cfg.trunc_eps, cfg.max_images);
    CostEval out{0.0, Tangent{x, Vector::Zero(m)}, Matrix::Zero(m, m)};
    for (int a = 0; a < m; ++a) {
        const AxisTerms at = axis_terms(t, canonical_offset(y[a] - x[a]), images);
        out.value += at.cost;
        out.grad.vec[a] = at.grad;
        out.hess(a, a) = at.hess;
    }
    return out;
}

Tangent grad_x(const FlatTorus& mfd, double t, const Point& x, const Point& y, const KernelConfig& cfg) {
    require_positive_time(t, "grad_x");
    return evaluate(mfd, t, x, y, cfg).grad;
}

Matrix hess_x(const FlatTorus& mfd, double t, const Point& x, const Point& y, const KernelConfig& cfg) {
    require_positive_time(t, "hess_x");
    return evaluate(mfd, t, x, y, cfg).hess;
}

}  // namespace vstat
