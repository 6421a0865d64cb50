#include "vstat/asymptotics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "vstat/errors.hpp"

namespace vstat {

JTermSchedule JTermSchedule::standard(int res) { return from_deltas({0.4, 0.2, 0.1}, res); }

JTermSchedule JTermSchedule::from_deltas(std::vector<double> deltas, int res) {
    JTermSchedule s;
    s.res = res;
    for (double d : deltas) s.times.push_back({d * d / 2.0, d * d / 4.0, d * d / 8.0});
    s.deltas = std::move(deltas);
    return s;
}

void JTermSchedule::validate() const {
    if (deltas.empty() || deltas.size() != times.size()) throw InvalidInput("J schedule: one t list per delta");
    if (res < 16) throw InvalidInput("J schedule: res must be at least 16");
    if (!(rtol > 0.0)) throw InvalidInput("J schedule: rtol must be positive");
    for (size_t i = 0; i < deltas.size(); ++i) {
        const double d = deltas[i];
        if (!(d > 0.0 && d < kPi)) throw InvalidInput("J schedule: delta must lie in (0, pi)");
        if (i > 0 && !(d < deltas[i - 1])) throw InvalidInput("J schedule: deltas must be strictly decreasing");
        if (times[i].empty()) throw InvalidInput("J schedule: empty t list");
        for (size_t j = 0; j < times[i].size(); ++j) {
            const double t = times[i][j];
            if (!(t > 0.0)) throw InvalidInput("J schedule: t must be positive");
            if (j > 0 && !(t < times[i][j - 1])) throw InvalidInput("J schedule: t lists must be strictly decreasing");
            if (t > d * d * (1.0 + 1e-12)) throw InvalidInput("J schedule: t must not exceed delta^2");
        }
    }
}

Matrix j_term(const Density& d, const Point& x, double t, double delta, int res, const KernelConfig& cfg) {
    if (!(t > 0.0) || !std::isfinite(t)) throw InvalidInput("j_term needs t > 0");
    const FlatTorus mfd(d.dim());
    if (!(delta > 0.0) || delta >= mfd.injectivity_radius()) throw InvalidInput("j_term needs 0 < delta < pi");
    if (res < 16) throw InvalidInput("j_term: res must be at least 16");
    mfd.check(x);
    const int m = mfd.dim();
    cfg.validate();
    const int images = truncation_order(t, cfg.trunc_eps, cfg.max_images);

    const double h = kTwoPi / std::max(4, res / kPanelOrder);
    const AxisRule inside = strip_rule(delta, cut_panel_width(t), std::min(h, delta / 2.0));
    const AxisRule outside = outside_strip_rule(delta, h);

    const Integrand f = [&](std::span<const double> xi, std::span<double> out) {
        for (int k = 0; k < m; ++k) {
            out[static_cast<size_t>(k)] = axis_terms(t, canonical_offset(xi[static_cast<size_t>(k)] - x[k]), images).hess;
        }
    };

    // {some axis within delta of its cut coordinate} as a disjoint union over
    // the nonempty sets of axes that are.
    std::vector<double> acc(static_cast<size_t>(m), 0.0);
    for (unsigned mask = 1; mask < (1u << m); ++mask) {
        TensorRule rule;
        for (int k = 0; k < m; ++k) {
            const bool in = mask & (1u << k);
            rule.axes.push_back(shifted(in ? inside : outside, x[k] + kPi));
        }
        const auto part = integrate(d, f, static_cast<size_t>(m), rule);
        for (int k = 0; k < m; ++k) acc[static_cast<size_t>(k)] += part[static_cast<size_t>(k)];
    }
    Matrix J = Matrix::Zero(m, m);
    for (int k = 0; k < m; ++k) J(k, k) = acc[static_cast<size_t>(k)];
    return J;
}

namespace {

// Polynomial through (x_i, y_i) evaluated at 0.
Matrix extrapolate_to_zero(const std::vector<double>& x, const std::vector<Matrix>& y) {
    Matrix out = Matrix::Zero(y.front().rows(), y.front().cols());
    for (size_t i = 0; i < x.size(); ++i) {
        double w = 1.0;
        for (size_t j = 0; j < x.size(); ++j) {
            if (j != i) w *= x[j] / (x[j] - x[i]);
        }
        out += w * y[i];
    }
    return out;
}

nlohmann::json matrix_json(const Matrix& a) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < a.rows(); ++i) {
        nlohmann::json r = nlohmann::json::array();
        for (int j = 0; j < a.cols(); ++j) r.push_back(a(i, j));
        rows.push_back(r);
    }
    return rows;
}

nlohmann::json vector_json(const Vector& v) {
    nlohmann::json r = nlohmann::json::array();
    for (int i = 0; i < v.size(); ++i) r.push_back(v[i]);
    return r;
}

bool positive_definite(const Matrix& h) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(h, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff() > 0.0;
}

Matrix sandwich(const Matrix& h, const Matrix& s) {
    const Matrix hinv = h.inverse();
    Matrix out = hinv * s * hinv.transpose();
    return 0.5 * (out + out.transpose());
}

double reconstruction(const Matrix& h, const Matrix& s, const Matrix& sigma) {
    return (h * sigma * h.transpose() - s).norm() / std::max(1.0, s.norm());
}

}  // namespace

nlohmann::json JLimit::to_json() const {
    nlohmann::json j;
    j["value"] = matrix_json(value);
    j["spread"] = spread;
    j["converged"] = converged;
    for (const auto& r : table) j["table"].push_back({{"delta", r.delta}, {"t", r.t}, {"value", matrix_json(r.value)}});
    for (const auto& p : per_delta) {
        j["per_delta"].push_back({{"delta", p.delta},
                                  {"estimate", matrix_json(p.estimate)},
                                  {"limsup", matrix_json(p.limsup)},
                                  {"liminf", matrix_json(p.liminf)}});
    }
    return j;
}

JLimit j_limit(const Density& d, const Point& x, const JTermSchedule& sched, const KernelConfig& cfg) {
    sched.validate();
    JLimit out;
    std::vector<double> ds;
    std::vector<Matrix> est;
    for (size_t i = 0; i < sched.deltas.size(); ++i) {
        const double delta = sched.deltas[i];
        JDeltaSummary s{delta, {}, {}, {}};
        for (double t : sched.times[i]) {
            Matrix v = j_term(d, x, t, delta, sched.res, cfg);
            s.limsup = s.limsup.size() ? Matrix(s.limsup.cwiseMax(v)) : v;
            s.liminf = s.liminf.size() ? Matrix(s.liminf.cwiseMin(v)) : v;
            s.estimate = v;
            out.table.push_back({delta, t, std::move(v)});
        }
        ds.push_back(delta);
        est.push_back(s.estimate);
        out.per_delta.push_back(std::move(s));
    }
    const size_t k = std::min<size_t>(3, ds.size());
    out.value = extrapolate_to_zero(std::vector<double>(ds.end() - static_cast<long>(k), ds.end()),
                                    std::vector<Matrix>(est.end() - static_cast<long>(k), est.end()));
    const auto& last = out.per_delta.back();
    out.spread = (last.limsup - last.liminf).norm();
    out.converged = std::isfinite(out.value.norm()) && out.spread <= sched.rtol * (1.0 + out.value.norm());
    return out;
}

HessianLimit hessian_limit(const Density& d, const Point& x, const std::vector<double>& times,
                           const JTermSchedule& sched, int res, const KernelConfig& cfg) {
    if (times.empty()) throw InvalidInput("hessian_limit needs a t schedule");
    const int m = d.dim();
    HessianLimit out;
    out.j = j_limit(d, x, sched, cfg);
    // Off the cut Hess_x d^2(x, xi) = 2 Id, and the cut is a null set.
    out.limit = 2.0 * Matrix::Identity(m, m) + out.j.value;
    out.times = times;
    for (double t : times) {
        if (!(t > 0.0)) throw InvalidInput("hessian_limit: t must be positive");
        out.direct_path.push_back(VaradhanFunction::population(d, t, res, cfg).hess(x));
    }
    out.direct = out.direct_path.back();
    out.rel_gap = (out.limit - out.direct).norm() / std::max(out.limit.norm(), 1.0);
    out.inconsistent = out.rel_gap > 0.05;
    return out;
}

NeighborhoodGap hessian_neighborhood_gap(const Density& d, const Point& x, double radius, int per_axis,
                                         const std::vector<double>& times, const JTermSchedule& sched, int res,
                                         const KernelConfig& cfg) {
    if (!(radius > 0.0 && radius < kPi)) throw InvalidInput("hessian_neighborhood_gap: radius must lie in (0, pi)");
    if (per_axis < 2) throw InvalidInput("hessian_neighborhood_gap: need at least 2 points per axis");
    const int m = d.dim();
    const FlatTorus mfd(m);
    NeighborhoodGap out{radius, {}, times, std::vector<double>(times.size(), 0.0), true};
    std::size_t total = 1;
    for (int a = 0; a < m; ++a) total *= static_cast<std::size_t>(per_axis);
    for (std::size_t i = 0; i < total; ++i) {
        Vector off(m);
        std::size_t rem = i;
        for (int a = m - 1; a >= 0; --a) {
            const auto k = static_cast<double>(rem % static_cast<std::size_t>(per_axis));
            rem /= static_cast<std::size_t>(per_axis);
            off[a] = -radius + 2.0 * radius * k / (per_axis - 1);
        }
        const Point p = mfd.exp(x, Tangent{x, off});
        const HessianLimit hl = hessian_limit(d, p, times, sched, res, cfg);
        const double scale = std::max(hl.limit.norm(), 1.0);
        for (std::size_t k = 0; k < times.size(); ++k) {
            out.max_gap[k] = std::max(out.max_gap[k], (hl.direct_path[k] - hl.limit).norm() / scale);
        }
        out.points.push_back(p);
    }
    for (std::size_t k = 1; k < times.size(); ++k) out.decaying = out.decaying && out.max_gap[k] < out.max_gap[k - 1];
    return out;
}

nlohmann::json NeighborhoodGap::to_json() const {
    nlohmann::json j;
    j["radius"] = radius;
    j["points"] = nlohmann::json::array();
    for (const Point& p : points) j["points"].push_back(vector_json(p.coords));
    j["times"] = times;
    j["max_gap"] = max_gap;
    j["decaying"] = decaying;
    return j;
}

GradientLimit gradient_limit(const Density& d, const Point& x, const std::vector<double>& times, int res,
                             const KernelConfig& cfg) {
    GradientLimit out;
    out.target = VaradhanFunction::population(d, 0.0, res, cfg).frechet_gradient(x);
    out.times = times;
    for (double t : times) {
        if (!(t > 0.0)) throw InvalidInput("gradient_limit: t must be positive");
        Vector g = VaradhanFunction::population(d, t, res, cfg).grad(x).vec;
        out.gaps.push_back((g - out.target).norm());
        out.path.push_back(std::move(g));
    }
    return out;
}

nlohmann::json CovarianceReport::to_json() const {
    nlohmann::json j;
    j["t"] = t;
    j["base"] = vector_json(base.coords);
    j["value"] = value;
    j["hess"] = matrix_json(hess);
    j["score_cov"] = matrix_json(score_cov);
    j["sigma"] = matrix_json(sigma);
    if (sigma_naive.size()) j["sigma_naive"] = matrix_json(sigma_naive);
    j["sigma_var"] = sigma_var;
    j["reconstruction_error"] = reconstruction_error;
    return j;
}

namespace {

MeanResult unique_mean(const VaradhanFunction& f) {
    MeanResult r = minimize(f);
    if (r.flat) throw HypothesisViolation("Varadhan function is flat: the mean is not unique");
    if (!r.converged) throw NumericalError("mean search did not converge");
    return r;
}

// E[c c^T] and E[v^2] for per-node score c and cost v around base.
struct Moments {
    Matrix score_cov;
    double second;
};

Moments moments(const VaradhanFunction& f, const Point& base) {
    const int m = f.manifold().dim();
    const double t = f.t();
    const int images = f.images();
    const size_t width = static_cast<size_t>(m * m + 1);
    const Integrand g = [&](std::span<const double> xi, std::span<double> out) {
        std::vector<double> s(static_cast<size_t>(m));
        double v = 0.0;
        for (int k = 0; k < m; ++k) {
            const double off = canonical_offset(xi[static_cast<size_t>(k)] - base[k]);
            if (t > 0.0) {
                const AxisTerms a = axis_terms(t, off, images);
                s[static_cast<size_t>(k)] = a.grad;
                v += a.cost;
            } else {
                s[static_cast<size_t>(k)] = -2.0 * off;
                v += off * off;
            }
        }
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) out[static_cast<size_t>(i * m + j)] = s[static_cast<size_t>(i)] * s[static_cast<size_t>(j)];
        out[width - 1] = v * v;
    };
    SkipPredicate skip;
    if (t == 0.0) skip = [&](std::span<const double> xi) { return dist_to_cut(base.span(), xi) < kCutTolerance; };
    const auto acc = integrate(f.density(), g, width, f.rule_at(base), skip);
    Moments out{Matrix(m, m), acc[width - 1]};
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) out.score_cov(i, j) = acc[static_cast<size_t>(i * m + j)];
    return out;
}

}  // namespace

CovarianceReport sigma_t(const Density& d, double t, int res, const KernelConfig& cfg) {
    if (!(t > 0.0)) throw InvalidInput("sigma_t needs t > 0; use sigma_zero for t = 0");
    const auto f = VaradhanFunction::population(d, t, res, cfg);
    const MeanResult r = unique_mean(f);
    const auto D = f.derivatives(r.minimizer);
    if (!(D.grad.norm() < 1e-8)) throw NumericalError("gradient at the mean is not below 1e-8");
    if (!positive_definite(D.hess)) throw HypothesisViolation("Hessian at the mean is not positive definite");
    const Moments mo = moments(f, r.minimizer);
    CovarianceReport rep;
    rep.t = t;
    rep.base = r.minimizer;
    rep.value = r.value;
    rep.hess = D.hess;
    rep.score_cov = mo.score_cov;
    rep.sigma = sandwich(rep.hess, rep.score_cov);
    rep.sigma_var = mo.second - r.value * r.value;
    rep.reconstruction_error = reconstruction(rep.hess, rep.score_cov, rep.sigma);
    return rep;
}

CovarianceReport sigma_zero(const Density& d, int res, const JTermSchedule& sched, const KernelConfig& cfg) {
    const auto f = VaradhanFunction::population(d, 0.0, res, cfg);
    const MeanResult r = unique_mean(f);
    const int m = d.dim();
    const JLimit j = j_limit(d, r.minimizer, sched, cfg);
    const Matrix h = 2.0 * Matrix::Identity(m, m) + j.value;
    if (!positive_definite(h)) throw HypothesisViolation("limiting Hessian at the Frechet mean is not positive definite");
    const Moments mo = moments(f, r.minimizer);
    CovarianceReport rep;
    rep.t = 0.0;
    rep.base = r.minimizer;
    rep.value = r.value;
    rep.hess = h;
    rep.score_cov = mo.score_cov;
    rep.sigma = sandwich(h, mo.score_cov);
    rep.sigma_naive = sandwich(2.0 * Matrix::Identity(m, m), mo.score_cov);
    rep.sigma_var = mo.second - r.value * r.value;
    rep.reconstruction_error = reconstruction(rep.hess, rep.score_cov, rep.sigma);
    return rep;
}

double sigma_var(const Density& d, double t, int res, const std::optional<Point>& base, const KernelConfig& cfg) {
    const auto f = VaradhanFunction::population(d, t, res, cfg);
    const Point x = base ? *base : unique_mean(f).minimizer;
    const double v = f.eval(x);
    return moments(f, x).second - v * v;
}

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw InvalidInput("slope fit needs two or more paired points");
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    const double n = static_cast<double>(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0 && y[i] > 0.0)) throw InvalidInput("slope fit needs positive values");
        const double lx = std::log(x[i]);
        const double ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

TaylorRemainder taylor_remainder(const std::function<Vector(const Point&)>& grad,
                                 const std::function<Matrix(const Point&)>& hess, const Point& x0,
                                 const std::vector<double>& radii, const Vector& direction) {
    const FlatTorus mfd(x0.dim());
    if (direction.size() != x0.dim() || !(direction.norm() > 0.0)) throw InvalidInput("taylor_remainder: bad direction");
    const Vector u = direction / direction.norm();
    const Vector g0 = grad(x0);
    const Matrix h0 = hess(x0);
    TaylorRemainder out;
    out.radii = radii;
    for (double r : radii) {
        const Point x = mfd.exp(x0, mfd.tangent(x0, r * u));
        const Vector log = mfd.log(x0, x).vec;
        // Transport back to x0 is the identity on the flat torus.
        const Tangent moved = mfd.parallel_transport(x, x0, mfd.tangent(x, grad(x)));
        out.residuals.push_back((moved.vec - g0 - h0 * log).norm());
    }
    out.slope = radii.size() >= 2 ? loglog_slope(out.radii, out.residuals) : std::numeric_limits<double>::quiet_NaN();
    return out;
}

}  // namespace vstat
