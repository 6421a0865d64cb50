#pragma once

// Probability densities on the flat torus (with respect to dtheta_1...dtheta_m),
// exact samplers and quadrature of scalar/vector/matrix integrands against them.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vstat/manifold.hpp"
#include "vstat/quadrature.hpp"
#include "vstat/rng.hpp"

namespace vstat {

/// Inverse-CDF sampler for a continuous 1-D density on [0, 2pi), tabulated on
/// a periodic grid and treated as piecewise linear between nodes.
class InverseCdfTable {
public:
    InverseCdfTable() = default;
    /// values[j] is the density at 2 pi j / values.size().
    explicit InverseCdfTable(std::vector<double> values);

    double sample(double u) const;
    std::size_t resolution() const { return values_.size(); }

private:
    std::vector<double> values_;
    std::vector<double> cumulative_;  // size res + 1, cumulative_[res] = 1
    double scale_ = 0.0;              // density normalizer
};

inline constexpr int kSamplerResolution = 8192;

class Density {
public:
    enum class Kind { Uniform, VonMises, Mixture, Tabulated };

    static Density uniform(int dim);
    /// Product of von Mises factors exp(kappa_k cos(theta_k - loc_k)) / (2 pi I0(kappa_k)).
    static Density von_mises(Vector loc, Vector kappa);
    static Density mixture(std::vector<double> weights, std::vector<Density> components);
    /// Values on the periodic grid {2 pi j / res}^m (last axis fastest), multilinear
    /// interpolation between nodes; normalized to unit mass.
    static Density tabulated(int dim, int res, std::vector<double> values);
    /// Tabulates f on the periodic grid and normalizes it.
    static Density tabulate(int dim, int res, const std::function<double(std::span<const double>)>& f);

    int dim() const;
    Kind kind() const;
    FlatTorus manifold() const { return FlatTorus(dim()); }

    double at(std::span<const double> p) const;
    double at(const Point& p) const { return at(p.span()); }
    double max_value() const;

    /// Draws one point into out (size dim).
    void sample_one(Rng& rng, std::span<double> out) const;

    /// Density of the pushforward under p -> p + shift.
    Density rotated(const Vector& shift) const;

    nlohmann::json describe() const;

    struct Impl;

private:
    explicit Density(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<const Impl> impl_;
};

/// Sample points stored row-major (n x dim).
struct SampleSet {
    int dim = 1;
    std::vector<double> coords;
    std::uint64_t seed = 0;
    std::string provenance;

    std::size_t size() const { return coords.size() / static_cast<std::size_t>(dim); }
    std::span<const double> row(std::size_t i) const {
        return {coords.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
    }
    Point point(std::size_t i) const;
    FlatTorus manifold() const { return FlatTorus(dim); }
};

SampleSet sample(const Density& d, std::size_t n, std::uint64_t seed);
/// Draws from an explicit stream (replications key their own streams).
SampleSet sample(const Density& d, std::size_t n, Rng& rng, std::uint64_t seed_tag = 0);

/// Integrand writing `out.size()` components at a node.
using Integrand = std::function<void(std::span<const double> xi, std::span<double> out)>;
/// Nodes where the predicate fires are dropped (measure-zero sets such as a cut locus).
using SkipPredicate = std::function<bool(std::span<const double> xi)>;

/// Sum over tensor nodes of w * psi(xi) * f(xi) (OpenMP, worker-count independent).
std::vector<double> integrate(const Density& d, const Integrand& f, std::size_t width, const TensorRule& rule,
                              const SkipPredicate& skip = {});
/// Serial reference for integrate.
std::vector<double> integrate_serial(const Density& d, const Integrand& f, std::size_t width,
                                     const TensorRule& rule, const SkipPredicate& skip = {});

/// Tensor periodic trapezoidal rule with res nodes per axis (res >= 16).
double integrate(const Density& d, const std::function<double(std::span<const double>)>& f, int res,
                 const SkipPredicate& skip = {});
Vector integrate_vector(const Density& d, const std::function<Vector(std::span<const double>)>& f, int dim_out,
                        int res, const SkipPredicate& skip = {});
Matrix integrate_matrix(const Density& d, const std::function<Matrix(std::span<const double>)>& f, int rows,
                        int cols, int res, const SkipPredicate& skip = {});

/// Trapezoidal tensor rule for a density's torus.
TensorRule trapezoid_rule(int dim, int res);

}  // namespace vstat
