#include "vstat/varadhan.hpp"

#include <algorithm>
#include <cmath>
#include <atomic>
#include <numeric>

#include "vstat/errors.hpp"
#include "vstat/parallel.hpp"

namespace vstat {

VaradhanFunction::VaradhanFunction(FlatTorus mfd, double t, KernelConfig cfg,
                                   std::variant<PopulationSource, EmpiricalSource> src)
    : mfd_(mfd), t_(t), cfg_(cfg), source_(std::move(src)) {
    if (!(t >= 0.0) || !std::isfinite(t)) throw InvalidInput("Varadhan function needs t >= 0");
    cfg_.validate();
    if (t > 0.0) images_ = truncation_order(t, cfg_.trunc_eps, cfg_.max_images);
}

VaradhanFunction VaradhanFunction::population(Density density, double t, int res, KernelConfig cfg) {
    if (res < 16) throw InvalidInput("quadrature resolution must be at least 16");
    if (t < 0.0) throw InvalidInput("Varadhan function needs t >= 0");
    const double cut = 0.0;
    AxisRule tmpl = adapted_periodic_rule(res, std::span<const double>(&cut, 1), cut_panel_width(t));
    FlatTorus mfd(density.dim());
    return VaradhanFunction(mfd, t, cfg, PopulationSource{std::move(density), res, std::move(tmpl)});
}

VaradhanFunction VaradhanFunction::empirical(SampleSet samples, double t, KernelConfig cfg) {
    if (samples.size() == 0) throw InvalidInput("empirical Varadhan function needs at least one sample");
    FlatTorus mfd(samples.dim);
    return VaradhanFunction(mfd, t, cfg, EmpiricalSource{std::move(samples)});
}

const Density& VaradhanFunction::density() const {
    if (!is_population()) throw Unsupported("empirical Varadhan function has no density");
    return std::get<PopulationSource>(source_).density;
}

const SampleSet& VaradhanFunction::samples() const {
    if (is_population()) throw Unsupported("population Varadhan function has no samples");
    return std::get<EmpiricalSource>(source_).samples;
}

int VaradhanFunction::quadrature_res() const {
    return is_population() ? std::get<PopulationSource>(source_).res : 0;
}

TensorRule VaradhanFunction::rule_at(const Point& x) const {
    const auto& pop = std::get<PopulationSource>(source_);
    TensorRule r;
    for (int k = 0; k < mfd_.dim(); ++k) r.axes.push_back(shifted(pop.template_rule, x[k] + kPi));
    return r;
}

namespace {

// Population sums exploit the separable kernel: per-axis terms are tabulated
// once on the shifted axis rules, leaving one density evaluation per node.
std::vector<double> population_sum(const Density& d, const TensorRule& rule,
                                   const std::vector<std::vector<AxisTerms>>& terms, bool derivs) {
    const size_t m = terms.size();
    const size_t width = derivs ? 1 + 2 * m : 1;
    std::vector<double> out(width, 0.0);
    std::atomic<bool> bad{false};
    parallel::block_reduce(rule.size(), out, [&](size_t i, std::span<double> acc) {
        thread_local std::vector<double> xi;
        thread_local std::vector<size_t> idx;
        xi.resize(m);
        idx.resize(m);
        double w = 1.0;
        for (size_t k = m; k-- > 0;) {
            const AxisRule& a = rule.axes[k];
            idx[k] = i % a.size();
            i /= a.size();
            xi[k] = a.nodes[idx[k]];
            w *= a.weights[idx[k]];
        }
        const double psi = d.at(xi);
        if (psi == 0.0) return;
        const double ww = w * psi;
        double v = 0.0;
        for (size_t k = 0; k < m; ++k) v += terms[k][idx[k]].cost;
        if (!std::isfinite(v)) bad.store(true, std::memory_order_relaxed);
        acc[0] += ww * v;
        if (!derivs) return;
        for (size_t k = 0; k < m; ++k) {
            acc[1 + k] += ww * terms[k][idx[k]].grad;
            acc[1 + m + k] += ww * terms[k][idx[k]].hess;
        }
    });
    if (bad.load()) throw NumericalError("non-finite Varadhan integrand at a quadrature node");
    return out;
}

}  // namespace

double VaradhanFunction::eval(const Point& x) const {
    mfd_.check(x);
    const int m = mfd_.dim();
    const double t = t_;
    const int images = images_;
    auto pointwise = [&](std::span<const double> xi) {
        if (t == 0.0) return distance_sq(x.span(), xi);
        double v = 0.0;
        for (int k = 0; k < m; ++k) v += axis_cost(t, canonical_offset(xi[static_cast<size_t>(k)] - x[k]), images);
        return v;
    };
    if (is_population()) {
        const TensorRule rule = rule_at(x);
        std::vector<std::vector<AxisTerms>> terms(static_cast<size_t>(m));
        for (int k = 0; k < m; ++k) {
            for (double xi : rule.axes[static_cast<size_t>(k)].nodes) {
                const double off = canonical_offset(xi - x[k]);
                terms[static_cast<size_t>(k)].push_back({t == 0.0 ? off * off : axis_cost(t, off, images), 0.0, 0.0});
            }
        }
        return population_sum(density(), rule, terms, false)[0];
    }
    const SampleSet& s = samples();
    double acc = 0.0;
    for (size_t i = 0; i < s.size(); ++i) acc += pointwise(s.row(i));
    return acc / static_cast<double>(s.size());
}

VaradhanFunction::Derivatives VaradhanFunction::derivatives(const Point& x) const {
    if (t_ == 0.0) throw Unsupported("derivatives of the t = 0 Varadhan function are limits; use the asymptotics module");
    mfd_.check(x);
    const int m = mfd_.dim();
    const size_t width = 1 + 2 * static_cast<size_t>(m);
    auto pointwise = [&](std::span<const double> xi, std::span<double> v) {
        for (int k = 0; k < m; ++k) {
            const AxisTerms at = axis_terms(t_, canonical_offset(xi[static_cast<size_t>(k)] - x[k]), images_);
            v[0] += at.cost;
            v[1 + static_cast<size_t>(k)] += at.grad;
            v[1 + static_cast<size_t>(m + k)] += at.hess;
        }
    };
    std::vector<double> acc(width, 0.0);
    if (is_population()) {
        const TensorRule rule = rule_at(x);
        std::vector<std::vector<AxisTerms>> terms(static_cast<size_t>(m));
        for (int k = 0; k < m; ++k) {
            for (double xi : rule.axes[static_cast<size_t>(k)].nodes) {
                terms[static_cast<size_t>(k)].push_back(axis_terms(t_, canonical_offset(xi - x[k]), images_));
            }
        }
        acc = population_sum(density(), rule, terms, true);
    } else {
        const SampleSet& s = samples();
        for (size_t i = 0; i < s.size(); ++i) pointwise(s.row(i), acc);
        for (double& a : acc) a /= static_cast<double>(s.size());
    }
    Derivatives d{acc[0], Vector(m), Matrix::Zero(m, m)};
    for (int k = 0; k < m; ++k) {
        d.grad[k] = acc[1 + static_cast<size_t>(k)];
        d.hess(k, k) = acc[1 + static_cast<size_t>(m + k)];
    }
    return d;
}

Tangent VaradhanFunction::grad(const Point& x) const { return Tangent{x, derivatives(x).grad}; }

Matrix VaradhanFunction::hess(const Point& x) const { return derivatives(x).hess; }

Vector VaradhanFunction::frechet_gradient(const Point& x) const {
    mfd_.check(x);
    const int m = mfd_.dim();
    auto pointwise = [&](std::span<const double> xi, std::span<double> v) {
        for (int k = 0; k < m; ++k) v[static_cast<size_t>(k)] = -2.0 * canonical_offset(xi[static_cast<size_t>(k)] - x[k]);
    };
    std::vector<double> acc(static_cast<size_t>(m), 0.0);
    if (is_population()) {
        acc = integrate(density(), pointwise, static_cast<size_t>(m), rule_at(x),
                        [&](std::span<const double> xi) { return dist_to_cut(x.span(), xi) < kCutTolerance; });
    } else {
        const SampleSet& s = samples();
        std::vector<double> v(static_cast<size_t>(m));
        for (size_t i = 0; i < s.size(); ++i) {
            pointwise(s.row(i), v);
            for (int k = 0; k < m; ++k) acc[static_cast<size_t>(k)] += v[static_cast<size_t>(k)];
        }
        for (double& a : acc) a /= static_cast<double>(s.size());
    }
    return Eigen::Map<Vector>(acc.data(), m);
}

// ---------------------------------------------------------------------------
// Minimization

namespace {

Point step_along(const FlatTorus& mfd, const Point& x, const Vector& d) {
    Vector c(mfd.dim());
    for (int k = 0; k < mfd.dim(); ++k) c[k] = wrap_angle(x[k] + d[k]);
    return Point(std::move(c));
}

LocalResult newton(const VaradhanFunction& f, const Point& start, const MinimizeOptions& opts) {
    const FlatTorus& mfd = f.manifold();
    Point x = mfd.point(start.coords);
    auto D = f.derivatives(x);
    for (int iter = 0; iter < opts.max_iter; ++iter) {
        const Vector& g = D.grad;
        const double gnorm = g.norm();
        if (!std::isfinite(D.value) || !std::isfinite(gnorm)) throw NumericalError("non-finite Varadhan function value");
        if (gnorm < opts.gtol) return {x, D.value, true, iter};

        Eigen::SelfAdjointEigenSolver<Matrix> eig(D.hess, Eigen::EigenvaluesOnly);
        Vector d = eig.eigenvalues().minCoeff() > 1e-8 ? Vector(-D.hess.ldlt().solve(g)) : Vector(-g);
        if (d.norm() > 1.0) d /= d.norm();
        const double slope = g.dot(d);

        double alpha = 1.0;
        bool accepted = false;
        Point xn;
        VaradhanFunction::Derivatives Dn;
        for (int ls = 0; ls < 60; ++ls) {
            xn = step_along(mfd, x, alpha * d);
            Dn = f.derivatives(xn);
            if (Dn.value <= D.value + 1e-4 * alpha * slope) {
                accepted = true;
                break;
            }
            // Decrease below rounding: judge the step by the gradient instead.
            if (alpha * d.norm() < 1e-6 && Dn.grad.norm() < gnorm) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) return {x, D.value, gnorm < opts.gtol, iter};
        x = xn;
        D = std::move(Dn);
        if (alpha * d.norm() < 1e-16) return {x, D.value, D.grad.norm() < opts.gtol, iter + 1};
    }
    return {x, D.value, D.grad.norm() < opts.gtol, opts.max_iter};
}

LocalResult frechet_descent(const VaradhanFunction& f, const Point& start, const MinimizeOptions& opts) {
    const FlatTorus& mfd = f.manifold();
    Point x = mfd.point(start.coords);
    double v = f.eval(x);
    for (int iter = 0; iter < opts.max_iter; ++iter) {
        const Vector g = f.frechet_gradient(x);
        const double gnorm = g.norm();
        if (!std::isfinite(v) || !std::isfinite(gnorm)) throw NumericalError("non-finite Frechet function value");
        if (gnorm < opts.gtol) return {x, v, true, iter};
        // Half the negative gradient: the Newton step where the Hessian is 2 Id.
        const Vector d = -0.5 * g;
        double alpha = 1.0;
        for (;;) {
            const double step = alpha * d.norm();
            if (step < opts.step_tol) return {x, v, true, iter};
            const Point xn = step_along(mfd, x, alpha * d);
            const double vn = f.eval(xn);
            if (vn <= v - 1e-4 * alpha * 0.5 * gnorm * gnorm) {
                x = xn;
                v = vn;
                break;
            }
            alpha *= 0.5;
        }
        if (alpha * d.norm() < opts.step_tol) return {x, v, true, iter + 1};
    }
    return {x, v, false, opts.max_iter};
}

}  // namespace

LocalResult minimize_from(const VaradhanFunction& f, const Point& start, const MinimizeOptions& opts) {
    f.manifold().check(start);
    return f.t() > 0.0 ? newton(f, start, opts) : frechet_descent(f, start, opts);
}

LocalResult circle_frechet_mean(std::span<const double> angles, double vtol) {
    const size_t n = angles.size();
    if (n == 0) throw InvalidInput("circle_frechet_mean: no samples");
    std::vector<double> a(angles.begin(), angles.end());
    for (double& v : a) v = wrap_angle(v);
    std::vector<double> cut(n);
    for (size_t i = 0; i < n; ++i) cut[i] = wrap_angle(a[i] + kPi);
    std::sort(cut.begin(), cut.end());

    const double inv_n = 1.0 / static_cast<double>(n);
    bool found = false;
    double best_x = 0.0;
    double best_v = std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < n; ++j) {
        const double lo = cut[j];
        const double hi = (j + 1 < n) ? cut[j + 1] : cut[0] + kTwoPi;
        const double len = hi - lo;
        if (len <= 0.0) continue;
        const double mid = lo + 0.5 * len;
        double sum = 0.0;
        for (double v : a) sum += canonical_offset(v - mid);
        const double shift = sum * inv_n;
        if (std::abs(shift) > 0.5 * len) continue;  // stationary point outside this arc
        double ss = 0.0;
        for (double v : a) {
            const double r = canonical_offset(v - mid) - shift;
            ss += r * r;
        }
        const double value = ss * inv_n;
        const double x = wrap_angle(mid + shift);
        const bool better = !found || value < best_v - vtol || (std::abs(value - best_v) <= vtol && x < best_x);
        if (better) {
            best_v = value;
            best_x = x;
            found = true;
        }
    }
    if (!found) throw NumericalError("circle_frechet_mean: no interior stationary point");
    return {Point{best_x}, best_v, true, 0};
}

MeanResult minimize(const VaradhanFunction& f, const MinimizeOptions& opts) {
    if (opts.starts < 8) throw InvalidInput("minimize needs at least 8 starts per axis");
    const FlatTorus& mfd = f.manifold();

    // Exact path for the empirical Frechet mean on the circle.
    if (!f.is_population() && f.t() == 0.0 && mfd.dim() == 1) {
        const auto& s = f.samples();
        const LocalResult r = circle_frechet_mean(s.coords, opts.vtol);
        MeanResult out{r.point, r.value, {{0, r.point, r.point, r.value, true, 0}},
                       std::numeric_limits<double>::infinity(), true, false};
        return out;
    }

    const std::vector<Point> grid = mfd.grid(opts.starts);
    std::vector<double> values(grid.size());
    for (size_t i = 0; i < grid.size(); ++i) values[i] = f.eval(grid[i]);
    const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    if (!std::isfinite(*lo_it) || !std::isfinite(*hi_it)) throw NumericalError("non-finite value on the start grid");

    std::vector<size_t> order(grid.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return values[a] < values[b]; });

    if (*hi_it - *lo_it < opts.flat_tol) {
        const size_t i = order.front();
        return MeanResult{grid[i], values[i], {{i, grid[i], grid[i], values[i], true, 0}}, 0.0, true, true};
    }

    MeanResult out;
    const size_t k = std::min<size_t>(static_cast<size_t>(std::max(1, opts.top_k)), grid.size());
    for (size_t r = 0; r < k; ++r) {
        const size_t i = order[r];
        const LocalResult lr = minimize_from(f, grid[i], opts);
        out.starts.push_back({i, grid[i], lr.point, lr.value, lr.converged, lr.iterations});
    }
    // Best value; near-ties resolved by the smallest originating grid index.
    const StartRecord* best = &out.starts.front();
    for (const auto& rec : out.starts) {
        if (rec.value < best->value - opts.vtol ||
            (std::abs(rec.value - best->value) <= opts.vtol && rec.start_index < best->start_index)) {
            best = &rec;
        }
    }
    out.minimizer = best->point;
    out.value = best->value;
    out.converged = best->converged;
    out.flat = false;
    out.uniqueness_margin = std::numeric_limits<double>::infinity();
    for (const auto& rec : out.starts) {
        if (mfd.distance(rec.point, best->point) > 1e-6) {
            out.uniqueness_margin = std::min(out.uniqueness_margin, rec.value - best->value);
        }
    }
    return out;
}

Point mean(const VaradhanFunction& f, const MinimizeOptions& opts) { return minimize(f, opts).minimizer; }

double variance(const VaradhanFunction& f, const MinimizeOptions& opts) { return minimize(f, opts).value; }

}  // namespace vstat
