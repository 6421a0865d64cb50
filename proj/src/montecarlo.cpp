#include "vstat/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <boost/math/distributions/chi_squared.hpp>

#include "vstat/errors.hpp"
#include "vstat/parallel.hpp"

namespace vstat {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr int kMaxRedraws = 16;

std::uint64_t stream_key(std::size_t t_idx, std::size_t n_idx, std::size_t rep, int attempt = 0) {
    return (static_cast<std::uint64_t>(attempt) << 58) ^ (static_cast<std::uint64_t>(t_idx) << 44) ^
           (static_cast<std::uint64_t>(n_idx) << 32) ^ static_cast<std::uint64_t>(rep);
}

// Linear interpolation between order statistics.
double quantile(std::vector<double> v, double q) {
    if (v.empty()) return kNaN;
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const size_t lo = static_cast<size_t>(std::floor(pos));
    const size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

double rel_err(double value, double target) { return std::abs(value - target) / std::abs(target); }

nlohmann::json matrix_json(const Matrix& a) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < a.rows(); ++i) {
        nlohmann::json r = nlohmann::json::array();
        for (int j = 0; j < a.cols(); ++j) r.push_back(a(i, j));
        rows.push_back(r);
    }
    return rows;
}

nlohmann::json point_json(const Point& p) {
    nlohmann::json r = nlohmann::json::array();
    for (int i = 0; i < p.dim(); ++i) r.push_back(p[i]);
    return r;
}

bool audited(const ExperimentConfig& cfg, std::size_t rep) {
    if (!(cfg.audit_fraction > 0.0)) return false;
    const auto every = static_cast<std::size_t>(std::max(1.0, std::round(1.0 / cfg.audit_fraction)));
    return rep % every == 0;
}

// Warm-started empirical mean; audited replications are re-solved by full
// multistart and the better basin kept.
struct RepMean {
    LocalResult local;
    bool hopped = false;
};

RepMean replicate_mean(const ExperimentConfig& cfg, const SampleSet& s, double t, const Point& warm, std::size_t rep) {
    RepMean out{empirical_mean(s, t, warm, cfg.kernel), false};
    const bool exact = t == 0.0 && s.dim == 1;
    if (!exact && audited(cfg, rep)) {
        const MeanResult full = minimize(VaradhanFunction::empirical(s, t, cfg.kernel));
        if (full.value < out.local.value - 1e-10) {
            out.local = {full.minimizer, full.value, full.converged, 0};
            out.hopped = true;
        }
    }
    return out;
}

MeanResult population_mean(const VaradhanFunction& f) {
    MeanResult r = minimize(f);
    if (r.flat) throw HypothesisViolation("population Varadhan function is flat: the mean is not unique");
    if (!r.converged) throw NumericalError("population mean search did not converge");
    return r;
}

void check_finite(const Matrix& m, const char* what) {
    if (!m.allFinite()) throw NumericalError(std::string("non-finite ") + what);
}

}  // namespace

void ExperimentConfig::validate(bool clt) const {
    kernel.validate();
    if (t_list.empty()) throw InvalidInput("experiment: empty t list");
    for (double t : t_list) {
        if (!(t >= 0.0) || !std::isfinite(t)) throw InvalidInput("experiment: t must be finite and >= 0");
    }
    if (n_list.empty()) throw InvalidInput("experiment: empty n list");
    for (size_t i = 0; i < n_list.size(); ++i) {
        if (n_list[i] < 1) throw InvalidInput("experiment: n must be at least 1");
        if (i > 0 && n_list[i] <= n_list[i - 1]) throw InvalidInput("experiment: n list must be strictly increasing");
    }
    if (clt && R < 100) throw InvalidInput("experiment: CLT runs need R >= 100");
    if (R < 1) throw InvalidInput("experiment: R must be at least 1");
    if (res < 16) throw InvalidInput("experiment: res must be at least 16");
    if (audit_res < 8) throw InvalidInput("experiment: audit_res must be at least 8");
    if (!(audit_fraction >= 0.0 && audit_fraction <= 1.0)) throw InvalidInput("experiment: audit_fraction in [0, 1]");
    for (const Point& p : probes) {
        if (p.dim() != density.dim()) throw InvalidInput("experiment: probe dimension does not match the density");
    }
}

nlohmann::json ExperimentReport::to_json() const {
    nlohmann::json j;
    j["kind"] = kind;
    j["records"] = nlohmann::json::array();
    for (const auto& r : records) {
        j["records"].push_back({{"t", r.t},
                                {"n", r.n},
                                {"statistic", r.statistic},
                                {"value", r.value},
                                {"target", std::isnan(r.target) ? nlohmann::json() : nlohmann::json(r.target)},
                                {"rel_error", std::isnan(r.rel_error) ? nlohmann::json() : nlohmann::json(r.rel_error)}});
    }
    j["details"] = details;
    return j;
}

const ExperimentRecord& ExperimentReport::find(double t, std::size_t n, const std::string& statistic) const {
    for (const auto& r : records) {
        if (r.t == t && r.n == n && r.statistic == statistic) return r;
    }
    throw InvalidInput("report has no record " + statistic);
}

CovarianceComparison covariance_compare(const Matrix& empirical, const Matrix& target) {
    if (empirical.rows() != target.rows() || empirical.cols() != target.cols() || target.rows() != target.cols()) {
        throw InvalidInput("covariance_compare: shape mismatch");
    }
    auto psd = [](const Matrix& a) {
        Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (a + a.transpose()), Eigen::EigenvaluesOnly);
        return eig.eigenvalues().minCoeff() >= -1e-10;
    };
    return {(empirical - target).norm() / target.norm(), psd(empirical), psd(target)};
}

Matrix sample_covariance(const Matrix& rows) {
    if (rows.rows() < 2) throw InvalidInput("sample covariance needs two or more rows");
    const Vector mean = rows.colwise().mean();
    const Matrix centered = rows.rowwise() - mean.transpose();
    return (centered.transpose() * centered) / static_cast<double>(rows.rows() - 1);
}

nlohmann::json NormalityDiagnostics::to_json() const {
    return {{"skewness", skewness}, {"excess_kurtosis", excess_kurtosis}, {"chi_square", chi_square}, {"p_value", p_value}};
}

NormalityDiagnostics normality(const Matrix& rows) {
    const auto R = static_cast<double>(rows.rows());
    const int m = static_cast<int>(rows.cols());
    NormalityDiagnostics out;
    const Vector mean = rows.colwise().mean();
    for (int k = 0; k < m; ++k) {
        double m2 = 0.0, m3 = 0.0, m4 = 0.0;
        for (Eigen::Index i = 0; i < rows.rows(); ++i) {
            const double d = rows(i, k) - mean[k];
            m2 += d * d;
            m3 += d * d * d;
            m4 += d * d * d * d;
        }
        m2 /= R;
        m3 /= R;
        m4 /= R;
        out.skewness.push_back(m3 / std::pow(m2, 1.5));
        out.excess_kurtosis.push_back(m4 / (m2 * m2) - 3.0);
    }
    // Squared Mahalanobis radii are chi-square(m) under normality; their CDF
    // values should be uniform across 10 equiprobable bins.
    const Matrix cov = sample_covariance(rows);
    const Eigen::LDLT<Matrix> ldlt(cov);
    const boost::math::chi_squared chi_m(m);
    constexpr int bins = 10;
    std::vector<double> counts(bins, 0.0);
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        const Vector d = rows.row(i).transpose() - mean;
        const double r2 = d.dot(ldlt.solve(d));
        const double u = boost::math::cdf(chi_m, std::max(r2, 0.0));
        counts[static_cast<size_t>(std::min(bins - 1, static_cast<int>(u * bins)))] += 1.0;
    }
    const double expected = R / bins;
    out.chi_square = 0.0;
    for (double c : counts) out.chi_square += (c - expected) * (c - expected) / expected;
    out.p_value = boost::math::cdf(boost::math::complement(boost::math::chi_squared(bins - 1), out.chi_square));
    return out;
}

LocalResult empirical_mean(const SampleSet& s, double t, const Point& start, const KernelConfig& kernel) {
    if (t == 0.0 && s.dim == 1) return circle_frechet_mean(s.coords);
    return minimize_from(VaradhanFunction::empirical(s, t, kernel), start);
}

ExperimentReport run_ulln(const ExperimentConfig& cfg) {
    cfg.validate(false);
    const Density& d = cfg.density;
    const FlatTorus mfd(d.dim());
    const std::vector<Point> grid = mfd.grid(cfg.audit_res);
    const size_t T = cfg.t_list.size();

    // Population targets per t.
    std::vector<std::vector<double>> pop_values(T, std::vector<double>(grid.size()));
    std::vector<MeanResult> pop_means(T);
    bool track_means = true;
    for (size_t ti = 0; ti < T; ++ti) {
        const auto f = VaradhanFunction::population(d, cfg.t_list[ti], cfg.res, cfg.kernel);
        for (size_t g = 0; g < grid.size(); ++g) pop_values[ti][g] = f.eval(grid[g]);
        pop_means[ti] = minimize(f);
        if (pop_means[ti].flat) track_means = false;
    }

    ExperimentReport rep;
    rep.kind = "ulln";
    rep.details["mean_tracking"] = track_means;
    rep.details["x_grid_res"] = cfg.audit_res;
    std::vector<double> med_sup_f, med_sup_v, med_sup_x;
    std::atomic<int> hops{0};
    for (size_t ni = 0; ni < cfg.n_list.size(); ++ni) {
        const size_t n = cfg.n_list[ni];
        // [rep][t] errors
        std::vector<std::vector<double>> ef(cfg.R, std::vector<double>(T)), ev = ef, ex = ef;
        parallel::for_each_index(cfg.R, [&](size_t r) {
            Rng rng(cfg.seed, stream_key(0, ni, r));
            const SampleSet s = sample(d, n, rng, cfg.seed);
            for (size_t ti = 0; ti < T; ++ti) {
                const double t = cfg.t_list[ti];
                const auto fe = VaradhanFunction::empirical(s, t, cfg.kernel);
                double sup = 0.0;
                for (size_t g = 0; g < grid.size(); ++g) sup = std::max(sup, std::abs(fe.eval(grid[g]) - pop_values[ti][g]));
                ef[r][ti] = sup;
                if (track_means) {
                    const RepMean m = replicate_mean(cfg, s, t, pop_means[ti].minimizer, r);
                    if (m.hopped) hops.fetch_add(1, std::memory_order_relaxed);
                    ev[r][ti] = std::abs(m.local.value - pop_means[ti].value);
                    ex[r][ti] = mfd.distance(m.local.point, pop_means[ti].minimizer);
                }
            }
        });
        for (size_t ti = 0; ti < T; ++ti) {
            const double t = cfg.t_list[ti];
            auto column = [&](const std::vector<std::vector<double>>& e) {
                std::vector<double> c(cfg.R);
                for (size_t r = 0; r < cfg.R; ++r) c[r] = e[r][ti];
                return c;
            };
            auto add = [&](const std::string& name, const std::vector<double>& c) {
                rep.records.push_back({t, n, name + "_median", quantile(c, 0.5), kNaN, kNaN});
                rep.records.push_back({t, n, name + "_p90", quantile(c, 0.9), kNaN, kNaN});
            };
            add("sup_function", column(ef));
            if (track_means) {
                add("variance_error", column(ev));
                add("mean_distance", column(ex));
            }
        }
        // Suprema over the t-grid.
        std::vector<double> sf(cfg.R), sv(cfg.R), sx(cfg.R);
        for (size_t r = 0; r < cfg.R; ++r) {
            sf[r] = *std::max_element(ef[r].begin(), ef[r].end());
            sv[r] = *std::max_element(ev[r].begin(), ev[r].end());
            sx[r] = *std::max_element(ex[r].begin(), ex[r].end());
        }
        med_sup_f.push_back(quantile(sf, 0.5));
        med_sup_v.push_back(quantile(sv, 0.5));
        med_sup_x.push_back(quantile(sx, 0.5));
        rep.details["sup_over_t"].push_back({{"n", n},
                                             {"function_median", med_sup_f.back()},
                                             {"function_p90", quantile(sf, 0.9)},
                                             {"variance_median", med_sup_v.back()},
                                             {"variance_p90", quantile(sv, 0.9)},
                                             {"mean_distance_median", med_sup_x.back()},
                                             {"mean_distance_p90", quantile(sx, 0.9)}});
    }
    if (cfg.n_list.size() >= 2) {
        std::vector<double> ns(cfg.n_list.begin(), cfg.n_list.end());
        rep.details["slope_function"] = loglog_slope(ns, med_sup_f);
        if (track_means) {
            rep.details["slope_variance"] = loglog_slope(ns, med_sup_v);
            rep.details["slope_mean_distance"] = loglog_slope(ns, med_sup_x);
        }
    }
    rep.details["basin_hops"] = hops.load();
    return rep;
}

ExperimentReport run_clt_function(const ExperimentConfig& cfg) {
    cfg.validate(true);
    if (cfg.probes.size() < 2) throw InvalidInput("function CLT needs at least two probe points");
    const Density& d = cfg.density;
    const int m = d.dim();
    const size_t P = cfg.probes.size();
    ExperimentReport rep;
    rep.kind = "clt_function";
    for (const Point& p : cfg.probes) rep.details["probes"].push_back(point_json(p));

    for (size_t ti = 0; ti < cfg.t_list.size(); ++ti) {
        const double t = cfg.t_list[ti];
        const int images = t > 0.0 ? truncation_order(t, cfg.kernel.trunc_eps, cfg.kernel.max_images) : 0;
        auto pointwise = [&](const Point& x, std::span<const double> xi) {
            double v = 0.0;
            for (int k = 0; k < m; ++k) {
                const double off = canonical_offset(xi[static_cast<size_t>(k)] - x[k]);
                v += t > 0.0 ? axis_cost(t, off, images) : off * off;
            }
            return v;
        };
        // Covariance target: panels broken at every probe's cut coordinate.
        TensorRule rule;
        for (int k = 0; k < m; ++k) {
            std::vector<double> sing;
            for (const Point& p : cfg.probes) sing.push_back(p[k] + kPi);
            rule.axes.push_back(adapted_periodic_rule(cfg.res, sing, cut_panel_width(t)));
        }
        const Integrand moments = [&](std::span<const double> xi, std::span<double> out) {
            std::vector<double> c(P);
            for (size_t j = 0; j < P; ++j) c[j] = pointwise(cfg.probes[j], xi);
            for (size_t j = 0; j < P; ++j) {
                out[j] = c[j];
                for (size_t l = 0; l < P; ++l) out[P + j * P + l] = c[j] * c[l];
            }
        };
        const auto mom = integrate(d, moments, P + P * P, rule);
        Matrix target(P, P);
        for (size_t j = 0; j < P; ++j)
            for (size_t l = 0; l < P; ++l) target(j, l) = mom[P + j * P + l] - mom[j] * mom[l];

        nlohmann::json tj;
        tj["t"] = t;
        tj["target"] = matrix_json(target);
        tj["target_source"] = "quadrature of E[F(x,Xi) F(y,Xi)] - F(x) F(y)";
        for (size_t ni = 0; ni < cfg.n_list.size(); ++ni) {
            const size_t n = cfg.n_list[ni];
            Matrix rows(static_cast<Eigen::Index>(cfg.R), static_cast<Eigen::Index>(P));
            parallel::for_each_index(cfg.R, [&](size_t r) {
                Rng rng(cfg.seed, stream_key(ti, ni, r));
                const SampleSet s = sample(d, n, rng, cfg.seed);
                for (size_t j = 0; j < P; ++j) {
                    double acc = 0.0;
                    for (size_t i = 0; i < n; ++i) acc += pointwise(cfg.probes[j], s.row(i));
                    rows(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
                        std::sqrt(static_cast<double>(n)) * (acc / static_cast<double>(n) - mom[j]);
                }
            });
            check_finite(rows, "function CLT replication");
            const Matrix emp = sample_covariance(rows);
            const CovarianceComparison cc = covariance_compare(emp, target);
            for (size_t j = 0; j < P; ++j)
                for (size_t l = 0; l < P; ++l) {
                    rep.records.push_back({t, n, "cov_" + std::to_string(j) + "_" + std::to_string(l), emp(j, l),
                                           target(j, l), rel_err(emp(j, l), target(j, l))});
                }
            rep.records.push_back({t, n, "rel_frobenius", cc.rel_frobenius, 0.0, kNaN});
            const NormalityDiagnostics nd = normality(rows);
            tj["runs"].push_back({{"n", n},
                                  {"empirical", matrix_json(emp)},
                                  {"rel_frobenius", cc.rel_frobenius},
                                  {"empirical_psd", cc.empirical_psd},
                                  {"target_psd", cc.target_psd},
                                  {"symmetric", emp.isApprox(emp.transpose(), 0.0)},
                                  {"normality", nd.to_json()}});
        }
        rep.details["per_t"].push_back(tj);
    }
    return rep;
}

ExperimentReport run_clt_variance(const ExperimentConfig& cfg) {
    cfg.validate(true);
    const Density& d = cfg.density;
    ExperimentReport rep;
    rep.kind = "clt_variance";
    for (size_t ti = 0; ti < cfg.t_list.size(); ++ti) {
        const double t = cfg.t_list[ti];
        const MeanResult pop = population_mean(VaradhanFunction::population(d, t, cfg.res, cfg.kernel));
        const double target = sigma_var(d, t, cfg.res, pop.minimizer, cfg.kernel);
        nlohmann::json tj{{"t", t},
                          {"population_mean", point_json(pop.minimizer)},
                          {"population_variance", pop.value},
                          {"sigma_var", target},
                          {"target_source", "asymptotics.sigma_var"}};
        for (size_t ni = 0; ni < cfg.n_list.size(); ++ni) {
            const size_t n = cfg.n_list[ni];
            Matrix rows(static_cast<Eigen::Index>(cfg.R), 1);
            std::vector<int> hopped(cfg.R, 0);
            parallel::for_each_index(cfg.R, [&](size_t r) {
                Rng rng(cfg.seed, stream_key(ti, ni, r));
                const SampleSet s = sample(d, n, rng, cfg.seed);
                const RepMean mres = replicate_mean(cfg, s, t, pop.minimizer, r);
                hopped[r] = mres.hopped;
                rows(static_cast<Eigen::Index>(r), 0) = std::sqrt(static_cast<double>(n)) * (mres.local.value - pop.value);
            });
            check_finite(rows, "variance CLT replication");
            const double var = sample_covariance(rows)(0, 0);
            const double bias = rows.col(0).mean();
            rep.records.push_back({t, n, "variance", var, target, rel_err(var, target)});
            rep.records.push_back({t, n, "mean", bias, 0.0, kNaN});
            int hops = 0;
            for (int h : hopped) hops += h;
            tj["runs"].push_back({{"n", n}, {"basin_hops", hops}, {"normality", normality(rows).to_json()}});
        }
        rep.details["per_t"].push_back(tj);
    }
    return rep;
}

ExperimentReport run_clt_mean(const ExperimentConfig& cfg) {
    cfg.validate(true);
    const Density& d = cfg.density;
    const FlatTorus mfd(d.dim());
    const int m = d.dim();
    ExperimentReport rep;
    rep.kind = "clt_mean";
    for (size_t ti = 0; ti < cfg.t_list.size(); ++ti) {
        const double t = cfg.t_list[ti];
        const CovarianceReport target =
            t > 0.0 ? sigma_t(d, t, cfg.res, cfg.kernel) : sigma_zero(d, cfg.res, cfg.jterm, cfg.kernel);
        const Point& base = target.base;
        nlohmann::json tj = target.to_json();
        tj["target_source"] = t > 0.0 ? "asymptotics.sigma_t" : "asymptotics.sigma_zero";
        std::vector<double> traces;
        for (size_t ni = 0; ni < cfg.n_list.size(); ++ni) {
            const size_t n = cfg.n_list[ni];
            Matrix rows(static_cast<Eigen::Index>(cfg.R), m);
            std::vector<int> rejected(cfg.R, 0), hopped(cfg.R, 0);
            parallel::for_each_index(cfg.R, [&](size_t r) {
                for (int attempt = 0;; ++attempt) {
                    if (attempt > kMaxRedraws) throw NumericalError("replication kept landing on the cut locus");
                    Rng rng(cfg.seed, stream_key(ti, ni, r, attempt));
                    const SampleSet s = sample(d, n, rng, cfg.seed);
                    const RepMean mres = replicate_mean(cfg, s, t, base, r);
                    try {
                        const Vector log = mfd.log(base, mres.local.point).vec;
                        rows.row(static_cast<Eigen::Index>(r)) = std::sqrt(static_cast<double>(n)) * log.transpose();
                        hopped[r] = mres.hopped;
                        return;
                    } catch (const CutLocusError&) {
                        ++rejected[r];
                    }
                }
            });
            check_finite(rows, "mean CLT replication");
            const Matrix emp = sample_covariance(rows);
            const CovarianceComparison cc = covariance_compare(emp, target.sigma);
            int rej = 0, hops = 0;
            for (size_t r = 0; r < cfg.R; ++r) {
                rej += rejected[r];
                hops += hopped[r];
            }
            for (int j = 0; j < m; ++j)
                for (int l = 0; l < m; ++l) {
                    const std::string ij = std::to_string(j) + "_" + std::to_string(l);
                    rep.records.push_back({t, n, "sigma_" + ij, emp(j, l), target.sigma(j, l),
                                           rel_err(emp(j, l), target.sigma(j, l))});
                    if (t == 0.0) {
                        rep.records.push_back({t, n, "sigma_naive_" + ij, emp(j, l), target.sigma_naive(j, l),
                                               rel_err(emp(j, l), target.sigma_naive(j, l))});
                    }
                }
            rep.records.push_back({t, n, "rel_frobenius", cc.rel_frobenius, 0.0, kNaN});
            nlohmann::json run{{"n", n},
                               {"empirical", matrix_json(emp)},
                               {"rel_frobenius", cc.rel_frobenius},
                               {"empirical_psd", cc.empirical_psd},
                               {"target_psd", cc.target_psd},
                               {"rejections", rej},
                               {"basin_hops", hops},
                               {"normality", normality(rows).to_json()}};
            if (t == 0.0) {
                const CovarianceComparison cn = covariance_compare(emp, target.sigma_naive);
                rep.records.push_back({t, n, "rel_frobenius_naive", cn.rel_frobenius, 0.0, kNaN});
                run["rel_frobenius_naive"] = cn.rel_frobenius;
                run["corrected_fits_better"] = cc.rel_frobenius < cn.rel_frobenius;
            }
            rep.records.push_back({t, n, "rejections", static_cast<double>(rej), 0.0, kNaN});
            tj["runs"].push_back(run);
            traces.push_back(emp.trace() / static_cast<double>(n));
        }
        if (cfg.n_list.size() >= 2) {
            tj["mean_variance_slope"] = loglog_slope(std::vector<double>(cfg.n_list.begin(), cfg.n_list.end()), traces);
        }
        rep.details["per_t"].push_back(tj);
    }
    return rep;
}

}  // namespace vstat
