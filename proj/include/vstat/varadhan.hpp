#pragma once

// Population and empirical t-Varadhan functions F^t(x) = E[F^t(x, Xi)], their
// minimizers (t-Varadhan means) and minimal values (t-Varadhan variances).
// t = 0 is the Frechet case.

#include <limits>
#include <optional>
#include <variant>
#include <vector>

#include "vstat/distributions.hpp"
#include "vstat/heat_kernel.hpp"
#include "vstat/quadrature.hpp"

namespace vstat {

inline constexpr int kDefaultQuadratureRes = 256;

class VaradhanFunction {
public:
    struct Derivatives {
        double value;
        Vector grad;
        Matrix hess;
    };

    /// Expectation under a density, integrated on panels aligned with the
    /// cut locus of the evaluation point (graded for small t).
    static VaradhanFunction population(Density density, double t, int res = kDefaultQuadratureRes,
                                       KernelConfig cfg = {});
    /// Average over a sample.
    static VaradhanFunction empirical(SampleSet samples, double t, KernelConfig cfg = {});

    double t() const { return t_; }
    const FlatTorus& manifold() const { return mfd_; }
    bool is_population() const { return std::holds_alternative<PopulationSource>(source_); }
    const Density& density() const;
    const SampleSet& samples() const;
    int quadrature_res() const;
    const KernelConfig& kernel_config() const { return cfg_; }
    int images() const { return images_; }

    double eval(const Point& x) const;
    /// t > 0 only; Unsupported at t = 0.
    Tangent grad(const Point& x) const;
    Matrix hess(const Point& x) const;
    Derivatives derivatives(const Point& x) const;
    /// Gradient of the Frechet function, -2 E[Log_x Xi]. Cut-locus contributions
    /// (a null set for densities) are dropped; exact sample antipodes use the
    /// +pi offset convention.
    Vector frechet_gradient(const Point& x) const;

    /// Quadrature rule aligned with the cut locus of x (population source only).
    TensorRule rule_at(const Point& x) const;

private:
    struct PopulationSource {
        Density density;
        int res;
        AxisRule template_rule;  // offsets from the cut point, in [0, 2pi)
    };
    struct EmpiricalSource {
        SampleSet samples;
    };

    VaradhanFunction(FlatTorus mfd, double t, KernelConfig cfg, std::variant<PopulationSource, EmpiricalSource> src);

    FlatTorus mfd_;
    double t_;
    KernelConfig cfg_;
    int images_ = 1;
    std::variant<PopulationSource, EmpiricalSource> source_;
};

struct MinimizeOptions {
    int starts = 32;  // grid points per axis
    int top_k = 5;
    double gtol = 1e-10;
    double step_tol = 1e-12;
    int max_iter = 200;
    double vtol = 1e-10;
    double flat_tol = 1e-9;
};

struct StartRecord {
    std::size_t start_index;
    Point start;
    Point point;
    double value;
    bool converged;
    int iterations;
};

struct LocalResult {
    Point point;
    double value;
    bool converged;
    int iterations;
};

struct MeanResult {
    Point minimizer;
    double value;  // the t-Varadhan variance
    std::vector<StartRecord> starts;
    double uniqueness_margin;  // value gap to the best distinct basin; +inf if none found
    bool converged;
    bool flat;  // grid values indistinguishable: every point is a minimizer
};

/// Local refinement from one start: damped Newton for t > 0, Armijo gradient
/// descent along exp-map retractions for t = 0.
LocalResult minimize_from(const VaradhanFunction& f, const Point& start, const MinimizeOptions& opts = {});

/// Deterministic multistart global search; ties within vtol go to the start
/// with the smallest lexicographic grid index.
MeanResult minimize(const VaradhanFunction& f, const MinimizeOptions& opts = {});

Point mean(const VaradhanFunction& f, const MinimizeOptions& opts = {});
double variance(const VaradhanFunction& f, const MinimizeOptions& opts = {});

/// Exact empirical Frechet mean on the circle: the Frechet function is a convex
/// quadratic on every arc between consecutive sample antipodes, so the global
/// minimizer is one of the per-arc stationary points.
LocalResult circle_frechet_mean(std::span<const double> angles, double vtol = 1e-10);

}  // namespace vstat
