#pragma once

// Small-time asymptotics of Varadhan functions on flat tori: the cut-locus
// correction J, Hessian and gradient limits, CLT covariances and the
// Taylor-remainder diagnostic.

#include <functional>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "vstat/distributions.hpp"
#include "vstat/varadhan.hpp"

namespace vstat {

struct JTermSchedule {
    std::vector<double> deltas;              // strictly decreasing, in (0, pi)
    std::vector<std::vector<double>> times;  // per delta, strictly decreasing, t <= delta^2
    int res = kDefaultQuadratureRes;
    double rtol = 1e-2;

    /// delta in {0.4, 0.2, 0.1}, t in {delta^2/2, delta^2/4, delta^2/8}.
    static JTermSchedule standard(int res = kDefaultQuadratureRes);
    /// Same t fractions of delta^2 for an arbitrary delta list.
    static JTermSchedule from_deltas(std::vector<double> deltas, int res = kDefaultQuadratureRes);
    void validate() const;
};

/// Integral of Hess_x(F^t(., xi)) psi(xi) over {xi : dist_to_cut(x, xi) < delta}.
Matrix j_term(const Density& d, const Point& x, double t, double delta, int res = kDefaultQuadratureRes,
              const KernelConfig& cfg = {});

struct JTableRow {
    double delta;
    double t;
    Matrix value;
};

struct JDeltaSummary {
    double delta;
    Matrix estimate;  // smallest-t value
    Matrix limsup;    // elementwise max over the t list
    Matrix liminf;    // elementwise min over the t list
};

struct JLimit {
    Matrix value;  // extrapolated to delta = 0
    std::vector<JTableRow> table;
    std::vector<JDeltaSummary> per_delta;
    double spread;  // Frobenius norm of limsup - liminf at the smallest delta
    bool converged;
    nlohmann::json to_json() const;
};

JLimit j_limit(const Density& d, const Point& x, const JTermSchedule& sched = JTermSchedule::standard(),
               const KernelConfig& cfg = {});

inline const std::vector<double> kDefaultTimeSchedule = {1e-1, 3e-2, 1e-2, 3e-3, 1e-3};

struct HessianLimit {
    Matrix limit;   // E[Hess F^0(., Xi)] + J
    Matrix direct;  // Hess F^t at the smallest t of the schedule
    std::vector<double> times;
    std::vector<Matrix> direct_path;
    double rel_gap;  // ||limit - direct||_F / max(||limit||_F, 1)
    bool inconsistent;
    JLimit j;
};

HessianLimit hessian_limit(const Density& d, const Point& x, const std::vector<double>& times = kDefaultTimeSchedule,
                           const JTermSchedule& sched = JTermSchedule::standard(), int res = kDefaultQuadratureRes,
                           const KernelConfig& cfg = {});

/// Hessian t-gap over a tensor grid of offsets in [-radius, radius]^m around x:
/// an empirical stand-in for uniform convergence on a neighborhood.
struct NeighborhoodGap {
    double radius;
    std::vector<Point> points;
    std::vector<double> times;
    std::vector<double> max_gap;  // max over points of ||Hess F^t - limit||_F / max(||limit||_F, 1)
    bool decaying;                // max_gap strictly decreasing along times
    nlohmann::json to_json() const;
};

NeighborhoodGap hessian_neighborhood_gap(const Density& d, const Point& x, double radius, int per_axis,
                                         const std::vector<double>& times = kDefaultTimeSchedule,
                                         const JTermSchedule& sched = JTermSchedule::standard(),
                                         int res = kDefaultQuadratureRes, const KernelConfig& cfg = {});

struct GradientLimit {
    Vector target;  // -2 E[Log_x Xi]
    std::vector<double> times;
    std::vector<Vector> path;
    std::vector<double> gaps;
};

GradientLimit gradient_limit(const Density& d, const Point& x, const std::vector<double>& times = kDefaultTimeSchedule,
                             int res = kDefaultQuadratureRes, const KernelConfig& cfg = {});

struct CovarianceReport {
    double t = 0.0;
    Point base;
    double value = 0.0;  // variance V at the base
    Matrix hess;
    Matrix score_cov;
    Matrix sigma;        // hess^-1 score_cov hess^-T
    Matrix sigma_naive;  // t = 0 only: same with hess = 2 Id
    double sigma_var = 0.0;
    double reconstruction_error = 0.0;
    nlohmann::json to_json() const;
};

/// Covariance of the t-Varadhan mean estimator, t > 0.
CovarianceReport sigma_t(const Density& d, double t, int res = kDefaultQuadratureRes, const KernelConfig& cfg = {});
/// Covariance of the Frechet mean estimator with the cut-locus Hessian correction.
CovarianceReport sigma_zero(const Density& d, int res = kDefaultQuadratureRes,
                            const JTermSchedule& sched = JTermSchedule::standard(), const KernelConfig& cfg = {});
/// E[F^t(base, Xi)^2] - F^t(base)^2; base defaults to the t-Varadhan mean.
double sigma_var(const Density& d, double t, int res = kDefaultQuadratureRes,
                 const std::optional<Point>& base = std::nullopt, const KernelConfig& cfg = {});

struct TaylorRemainder {
    std::vector<double> radii;
    std::vector<double> residuals;
    double slope;
};

/// Residual || Pi grad f(x) - grad f(x0) - Hess f(x0) Log_{x0} x || at x = Exp_{x0}(r u)
/// for each radius, and its least-squares log-log slope (NaN for a single radius).
TaylorRemainder taylor_remainder(const std::function<Vector(const Point&)>& grad,
                                 const std::function<Matrix(const Point&)>& hess, const Point& x0,
                                 const std::vector<double>& radii, const Vector& direction);

/// Least-squares slope of log y against log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace vstat
