#pragma once

// Replicated simulation experiments for the uniform laws of large numbers and
// the central limit theorems of Varadhan functions, variances and means.

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vstat/asymptotics.hpp"
#include "vstat/distributions.hpp"
#include "vstat/varadhan.hpp"

namespace vstat {

struct ExperimentConfig {
    Density density = Density::uniform(1);
    std::vector<double> t_list = {0.1};
    std::vector<std::size_t> n_list = {400};
    std::size_t R = 2000;
    std::uint64_t seed = 1;
    int res = kDefaultQuadratureRes;  // population quadrature
    int audit_res = 64;               // x-grid for sup-errors, per axis
    double audit_fraction = 0.01;     // replications re-solved by full multistart
    std::vector<Point> probes;        // function CLT
    JTermSchedule jterm = JTermSchedule::standard();
    KernelConfig kernel;

    /// R >= 100 for CLT runs, n strictly increasing, t >= 0.
    void validate(bool clt) const;
};

struct ExperimentRecord {
    double t;
    std::size_t n;
    std::string statistic;
    double value;
    double target;     // NaN when the statistic has no theoretical target
    double rel_error;  // NaN likewise
};

struct ExperimentReport {
    std::string kind;
    std::vector<ExperimentRecord> records;
    nlohmann::json details;  // matrices, targets and their producing operations, diagnostics
    nlohmann::json to_json() const;
    const ExperimentRecord& find(double t, std::size_t n, const std::string& statistic) const;
};

struct CovarianceComparison {
    double rel_frobenius;
    bool empirical_psd;
    bool target_psd;
};

/// ||E - T||_F / ||T||_F with eigenvalue >= -1e-10 checks on both.
CovarianceComparison covariance_compare(const Matrix& empirical, const Matrix& target);

struct NormalityDiagnostics {
    std::vector<double> skewness;         // per coordinate
    std::vector<double> excess_kurtosis;  // per coordinate
    double chi_square;                    // Pearson statistic of Mahalanobis radii in 10 equiprobable bins
    double p_value;
    nlohmann::json to_json() const;
};

/// rows: R x m observations.
NormalityDiagnostics normality(const Matrix& rows);

/// Unbiased sample covariance of the rows of an R x m matrix.
Matrix sample_covariance(const Matrix& rows);

/// Sup-errors of F^t_n, V^t_n and x^t_n against population values, per (t, n).
ExperimentReport run_ulln(const ExperimentConfig& cfg);
/// Covariance of sqrt(n) (F^t_n - F^t) at the probe points.
ExperimentReport run_clt_function(const ExperimentConfig& cfg);
/// Variance of sqrt(n) (V^t_n - V^t).
ExperimentReport run_clt_variance(const ExperimentConfig& cfg);
/// Covariance of sqrt(n) Log_{x*}(x^t_n) against Sigma^t, or Sigma^0 with and without the cut correction.
ExperimentReport run_clt_mean(const ExperimentConfig& cfg);

/// Empirical t-Varadhan mean of a sample, warm-started at `start`; exact on the circle at t = 0.
LocalResult empirical_mean(const SampleSet& s, double t, const Point& start, const KernelConfig& kernel = {});

}  // namespace vstat
