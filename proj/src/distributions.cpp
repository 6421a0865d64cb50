#include "vstat/distributions.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <numeric>
#include <string>

#include "vstat/errors.hpp"
#include "vstat/parallel.hpp"

namespace vstat {

// ---------------------------------------------------------------------------
// Inverse CDF tables

InverseCdfTable::InverseCdfTable(std::vector<double> values) : values_(std::move(values)) {
    const size_t n = values_.size();
    if (n < 2) throw InvalidInput("inverse CDF table needs at least two nodes");
    const double h = kTwoPi / static_cast<double>(n);
    cumulative_.assign(n + 1, 0.0);
    for (size_t j = 0; j < n; ++j) {
        const double a = values_[j];
        const double b = values_[(j + 1) % n];
        if (!(a >= 0.0) || !std::isfinite(a)) throw InvalidInput("density values must be finite and non-negative");
        cumulative_[j + 1] = cumulative_[j] + 0.5 * h * (a + b);
    }
    const double total = cumulative_[n];
    if (!(total > 0.0)) throw InvalidInput("density table has zero mass");
    scale_ = 1.0 / total;
    for (double& c : cumulative_) c *= scale_;
    cumulative_[n] = 1.0;
}

double InverseCdfTable::sample(double u) const {
    const size_t n = values_.size();
    const double h = kTwoPi / static_cast<double>(n);
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    size_t j = static_cast<size_t>(std::distance(cumulative_.begin(), it));
    j = (j == 0) ? 0 : j - 1;
    if (j >= n) j = n - 1;
    // Mass to place inside cell j, in the units of the raw (unnormalized) values.
    const double r = std::max(0.0, (u - cumulative_[j]) / scale_);
    const double a = values_[j];
    const double b = values_[(j + 1) % n];
    const double slope = (b - a) / h;
    const double disc = std::max(0.0, a * a + 2.0 * slope * r);
    const double denom = a + std::sqrt(disc);
    double s = denom > 0.0 ? 2.0 * r / denom : 0.0;
    s = std::clamp(s, 0.0, h);
    return wrap_angle(static_cast<double>(j) * h + s);
}

// ---------------------------------------------------------------------------
// Density

struct Density::Impl {
    Kind kind = Kind::Uniform;
    int dim = 1;

    // von Mises
    Vector loc;
    Vector kappa;
    std::vector<double> log_norm;
    std::vector<InverseCdfTable> axis_tables;

    // mixture
    std::vector<double> weights;
    std::vector<double> cum_weights;
    std::vector<Density> components;

    // tabulated
    int res = 0;
    std::vector<double> values;
    InverseCdfTable line_table;
    std::vector<double> cell_cumulative;
    double max_value = 0.0;
};

namespace {

double log_bessel_i0(double k) {
    if (k < 600.0) return std::log(std::cyl_bessel_i(0.0, k));
    return k - 0.5 * std::log(kTwoPi * k) + std::log1p(1.0 / (8.0 * k));
}

double von_mises_axis(double theta, double loc, double kappa, double log_norm) {
    return std::exp(kappa * std::cos(theta - loc) - log_norm);
}

size_t ipow(int base, int e) {
    size_t r = 1;
    for (int i = 0; i < e; ++i) r *= static_cast<size_t>(base);
    return r;
}

double tabulated_at(const Density::Impl& im, std::span<const double> p) {
    const int m = im.dim;
    const double h = kTwoPi / im.res;
    std::array<size_t, 16> lo{};
    std::array<double, 16> frac{};
    for (int k = 0; k < m; ++k) {
        const double u = wrap_angle(p[static_cast<size_t>(k)]) / h;
        double f = std::floor(u);
        size_t i = static_cast<size_t>(f);
        if (i >= static_cast<size_t>(im.res)) i = 0;
        lo[static_cast<size_t>(k)] = i;
        frac[static_cast<size_t>(k)] = u - f;
    }
    double acc = 0.0;
    const size_t corners = size_t{1} << m;
    for (size_t c = 0; c < corners; ++c) {
        double w = 1.0;
        size_t idx = 0;
        for (int k = 0; k < m; ++k) {
            const bool up = (c >> k) & 1U;
            const size_t i = up ? (lo[static_cast<size_t>(k)] + 1) % static_cast<size_t>(im.res)
                                : lo[static_cast<size_t>(k)];
            w *= up ? frac[static_cast<size_t>(k)] : 1.0 - frac[static_cast<size_t>(k)];
            idx = idx * static_cast<size_t>(im.res) + i;
        }
        if (w != 0.0) acc += w * im.values[idx];
    }
    return acc;
}

}  // namespace

Density Density::uniform(int dim) {
    FlatTorus check(dim);
    auto im = std::make_shared<Impl>();
    im->kind = Kind::Uniform;
    im->dim = dim;
    im->max_value = std::pow(kTwoPi, -dim);
    return Density(std::move(im));
}

Density Density::von_mises(Vector loc, Vector kappa) {
    if (loc.size() != kappa.size() || loc.size() < 1) throw InvalidInput("von Mises loc/kappa size mismatch");
    auto im = std::make_shared<Impl>();
    im->kind = Kind::VonMises;
    im->dim = static_cast<int>(loc.size());
    if (im->dim > 16) throw InvalidInput("dimension above 16 is not supported");
    im->loc = loc;
    im->kappa = kappa;
    im->max_value = 1.0;
    for (int k = 0; k < im->dim; ++k) {
        if (!(kappa[k] >= 0.0) || !std::isfinite(kappa[k])) throw InvalidInput("von Mises kappa must be >= 0");
        if (!std::isfinite(loc[k])) throw InvalidInput("von Mises loc must be finite");
        im->loc[k] = wrap_angle(loc[k]);
        const double ln = std::log(kTwoPi) + log_bessel_i0(kappa[k]);
        im->log_norm.push_back(ln);
        std::vector<double> tab(kSamplerResolution);
        for (int j = 0; j < kSamplerResolution; ++j) {
            tab[static_cast<size_t>(j)] = von_mises_axis(kTwoPi * j / kSamplerResolution, im->loc[k], kappa[k], ln);
        }
        im->axis_tables.emplace_back(std::move(tab));
        im->max_value *= std::exp(kappa[k] - ln);
    }
    return Density(std::move(im));
}

Density Density::mixture(std::vector<double> weights, std::vector<Density> components) {
    if (weights.empty() || weights.size() != components.size()) throw InvalidInput("mixture weights/components mismatch");
    const int dim = components.front().dim();
    double total = 0.0;
    for (size_t i = 0; i < weights.size(); ++i) {
        if (!(weights[i] >= 0.0) || !std::isfinite(weights[i])) throw InvalidInput("mixture weights must be >= 0");
        if (components[i].dim() != dim) throw InvalidInput("mixture components differ in dimension");
        total += weights[i];
    }
    if (!(total > 0.0)) throw InvalidInput("mixture weights sum to zero");
    auto im = std::make_shared<Impl>();
    im->kind = Kind::Mixture;
    im->dim = dim;
    double acc = 0.0;
    for (size_t i = 0; i < weights.size(); ++i) {
        im->weights.push_back(weights[i] / total);
        acc += weights[i] / total;
        im->cum_weights.push_back(acc);
        im->max_value += (weights[i] / total) * components[i].max_value();
    }
    im->cum_weights.back() = 1.0;
    im->components = std::move(components);
    return Density(std::move(im));
}

Density Density::tabulated(int dim, int res, std::vector<double> values) {
    FlatTorus check(dim);
    if (dim > 16) throw InvalidInput("dimension above 16 is not supported");
    if (res < 2) throw InvalidInput("tabulated density resolution must be at least 2");
    if (values.size() != ipow(res, dim)) throw InvalidInput("tabulated density needs res^dim values");
    double sum = 0.0;
    for (double v : values) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidInput("tabulated density values must be finite and >= 0");
        sum += v;
    }
    const double cell = std::pow(kTwoPi / res, dim);
    if (!(sum > 0.0)) throw InvalidInput("tabulated density has zero mass");
    for (double& v : values) v /= sum * cell;

    auto im = std::make_shared<Impl>();
    im->kind = Kind::Tabulated;
    im->dim = dim;
    im->res = res;
    im->max_value = *std::max_element(values.begin(), values.end());
    if (dim == 1) {
        im->line_table = InverseCdfTable(values);
    } else {
        const size_t cells = values.size();
        im->cell_cumulative.resize(cells);
        double acc = 0.0;
        std::vector<size_t> idx(static_cast<size_t>(dim));
        for (size_t c = 0; c < cells; ++c) {
            size_t rem = c;
            for (int k = dim - 1; k >= 0; --k) {
                idx[static_cast<size_t>(k)] = rem % static_cast<size_t>(res);
                rem /= static_cast<size_t>(res);
            }
            double corner_sum = 0.0;
            for (size_t corner = 0; corner < (size_t{1} << dim); ++corner) {
                size_t flat = 0;
                for (int k = 0; k < dim; ++k) {
                    const size_t i = ((corner >> k) & 1U) ? (idx[static_cast<size_t>(k)] + 1) % static_cast<size_t>(res)
                                                           : idx[static_cast<size_t>(k)];
                    flat = flat * static_cast<size_t>(res) + i;
                }
                corner_sum += values[flat];
            }
            acc += corner_sum;
            im->cell_cumulative[c] = acc;
        }
        for (double& c : im->cell_cumulative) c /= acc;
        im->cell_cumulative.back() = 1.0;
    }
    im->values = std::move(values);
    return Density(std::move(im));
}

Density Density::tabulate(int dim, int res, const std::function<double(std::span<const double>)>& f) {
    const size_t total = ipow(res, dim);
    std::vector<double> values(total);
    std::vector<double> p(static_cast<size_t>(dim));
    for (size_t c = 0; c < total; ++c) {
        size_t rem = c;
        for (int k = dim - 1; k >= 0; --k) {
            p[static_cast<size_t>(k)] = kTwoPi * static_cast<double>(rem % static_cast<size_t>(res)) / res;
            rem /= static_cast<size_t>(res);
        }
        values[c] = f(p);
    }
    return tabulated(dim, res, std::move(values));
}

int Density::dim() const { return impl_->dim; }
Density::Kind Density::kind() const { return impl_->kind; }
double Density::max_value() const { return impl_->max_value; }

double Density::at(std::span<const double> p) const {
    const Impl& im = *impl_;
    switch (im.kind) {
        case Kind::Uniform:
            return im.max_value;
        case Kind::VonMises: {
            double v = 1.0;
            for (int k = 0; k < im.dim; ++k) {
                v *= von_mises_axis(p[static_cast<size_t>(k)], im.loc[k], im.kappa[k],
                                    im.log_norm[static_cast<size_t>(k)]);
            }
            return v;
        }
        case Kind::Mixture: {
            double v = 0.0;
            for (size_t i = 0; i < im.weights.size(); ++i) v += im.weights[i] * im.components[i].at(p);
            return v;
        }
        case Kind::Tabulated:
            return tabulated_at(im, p);
    }
    return 0.0;
}

void Density::sample_one(Rng& rng, std::span<double> out) const {
    const Impl& im = *impl_;
    switch (im.kind) {
        case Kind::Uniform:
            for (int k = 0; k < im.dim; ++k) out[static_cast<size_t>(k)] = wrap_angle(kTwoPi * rng.uniform());
            return;
        case Kind::VonMises:
            for (int k = 0; k < im.dim; ++k) {
                out[static_cast<size_t>(k)] = im.axis_tables[static_cast<size_t>(k)].sample(rng.uniform());
            }
            return;
        case Kind::Mixture: {
            const double u = rng.uniform();
            size_t c = static_cast<size_t>(
                std::distance(im.cum_weights.begin(), std::upper_bound(im.cum_weights.begin(), im.cum_weights.end(), u)));
            c = std::min(c, im.components.size() - 1);
            im.components[c].sample_one(rng, out);
            return;
        }
        case Kind::Tabulated: {
            if (im.dim == 1) {
                out[0] = im.line_table.sample(rng.uniform());
                return;
            }
            const double u = rng.uniform();
            size_t cell = static_cast<size_t>(std::distance(
                im.cell_cumulative.begin(),
                std::upper_bound(im.cell_cumulative.begin(), im.cell_cumulative.end(), u)));
            cell = std::min(cell, im.cell_cumulative.size() - 1);
            const double h = kTwoPi / im.res;
            std::array<double, 16> origin{};
            size_t rem = cell;
            for (int k = im.dim - 1; k >= 0; --k) {
                origin[static_cast<size_t>(k)] = h * static_cast<double>(rem % static_cast<size_t>(im.res));
                rem /= static_cast<size_t>(im.res);
            }
            // Rejection inside the cell against the largest corner value.
            for (;;) {
                for (int k = 0; k < im.dim; ++k) {
                    out[static_cast<size_t>(k)] = wrap_angle(origin[static_cast<size_t>(k)] + h * rng.uniform());
                }
                if (rng.uniform() * im.max_value <= tabulated_at(im, out)) return;
            }
        }
    }
}

Density Density::rotated(const Vector& shift) const {
    const Impl& im = *impl_;
    if (shift.size() != im.dim) throw InvalidInput("rotation shift dimension mismatch");
    switch (im.kind) {
        case Kind::Uniform:
            return *this;
        case Kind::VonMises:
            return von_mises(im.loc + shift, im.kappa);
        case Kind::Mixture: {
            std::vector<Density> comps;
            for (const auto& c : im.components) comps.push_back(c.rotated(shift));
            return mixture(im.weights, std::move(comps));
        }
        case Kind::Tabulated: {
            const double h = kTwoPi / im.res;
            std::vector<long> steps(static_cast<size_t>(im.dim));
            for (int k = 0; k < im.dim; ++k) {
                const double s = shift[k] / h;
                const double r = std::round(s);
                if (std::abs(s - r) > 1e-9) throw Unsupported("tabulated densities rotate by whole grid steps only");
                steps[static_cast<size_t>(k)] = static_cast<long>(r);
            }
            std::vector<double> out(im.values.size());
            const long res = im.res;
            for (size_t c = 0; c < im.values.size(); ++c) {
                size_t rem = c;
                size_t dst = 0;
                size_t mul = 1;
                for (int k = im.dim - 1; k >= 0; --k) {
                    const long i = static_cast<long>(rem % static_cast<size_t>(res));
                    rem /= static_cast<size_t>(res);
                    const long j = ((i + steps[static_cast<size_t>(k)]) % res + res) % res;
                    dst += static_cast<size_t>(j) * mul;
                    mul *= static_cast<size_t>(res);
                }
                out[dst] = im.values[c];
            }
            return tabulated(im.dim, im.res, std::move(out));
        }
    }
    return *this;
}

nlohmann::json Density::describe() const {
    const Impl& im = *impl_;
    nlohmann::json j;
    j["dim"] = im.dim;
    switch (im.kind) {
        case Kind::Uniform:
            j["kind"] = "uniform";
            break;
        case Kind::VonMises:
            j["kind"] = "von_mises";
            j["loc"] = std::vector<double>(im.loc.data(), im.loc.data() + im.loc.size());
            j["kappa"] = std::vector<double>(im.kappa.data(), im.kappa.data() + im.kappa.size());
            break;
        case Kind::Mixture: {
            j["kind"] = "mixture";
            j["weights"] = im.weights;
            nlohmann::json comps = nlohmann::json::array();
            for (const auto& c : im.components) comps.push_back(c.describe());
            j["components"] = comps;
            break;
        }
        case Kind::Tabulated:
            j["kind"] = "tabulated";
            j["res"] = im.res;
            break;
    }
    return j;
}

// ---------------------------------------------------------------------------
// Samples

Point SampleSet::point(std::size_t i) const {
    const auto r = row(i);
    Vector c(dim);
    for (int k = 0; k < dim; ++k) c[k] = r[static_cast<size_t>(k)];
    return Point(std::move(c));
}

SampleSet sample(const Density& d, std::size_t n, Rng& rng, std::uint64_t seed_tag) {
    if (n < 1) throw InvalidInput("sample size must be at least 1");
    SampleSet s;
    s.dim = d.dim();
    s.seed = seed_tag;
    s.provenance = d.describe().dump();
    s.coords.resize(n * static_cast<size_t>(s.dim));
    for (size_t i = 0; i < n; ++i) {
        d.sample_one(rng, {s.coords.data() + i * static_cast<size_t>(s.dim), static_cast<size_t>(s.dim)});
    }
    return s;
}

SampleSet sample(const Density& d, std::size_t n, std::uint64_t seed) {
    Rng rng(seed, 0);
    return sample(d, n, rng, seed);
}

// ---------------------------------------------------------------------------
// Quadrature

namespace {

template <bool Parallel>
std::vector<double> integrate_impl(const Density& d, const Integrand& f, std::size_t width, const TensorRule& rule,
                                   const SkipPredicate& skip) {
    if (rule.dim() != d.dim()) throw InvalidInput("quadrature rule dimension does not match the density");
    const size_t m = static_cast<size_t>(d.dim());
    std::vector<double> out(width, 0.0);
    std::atomic<bool> non_finite{false};
    auto body = [&](size_t i, std::span<double> acc) {
        thread_local std::vector<double> xi;
        thread_local std::vector<double> val;
        xi.resize(m);
        val.resize(width);
        const double w = rule.node(i, xi);
        if (skip && skip(xi)) return;
        const double psi = d.at(xi);
        if (psi == 0.0) return;
        std::fill(val.begin(), val.end(), 0.0);
        f(xi, val);
        const double ww = w * psi;
        for (size_t k = 0; k < width; ++k) {
            if (!std::isfinite(val[k])) non_finite.store(true, std::memory_order_relaxed);
            acc[k] += ww * val[k];
        }
    };
    if constexpr (Parallel) {
        parallel::block_reduce(rule.size(), out, body);
    } else {
        parallel::serial_reduce(rule.size(), out, body);
    }
    if (non_finite.load()) throw NumericalError("integrand produced a non-finite value at a quadrature node");
    return out;
}

}  // namespace

std::vector<double> integrate(const Density& d, const Integrand& f, std::size_t width, const TensorRule& rule,
                              const SkipPredicate& skip) {
    return integrate_impl<true>(d, f, width, rule, skip);
}

std::vector<double> integrate_serial(const Density& d, const Integrand& f, std::size_t width,
                                     const TensorRule& rule, const SkipPredicate& skip) {
    return integrate_impl<false>(d, f, width, rule, skip);
}

TensorRule trapezoid_rule(int dim, int res) {
    if (res < 16) throw InvalidInput("quadrature resolution must be at least 16");
    TensorRule r;
    r.axes.assign(static_cast<size_t>(dim), periodic_trapezoid(res));
    return r;
}

double integrate(const Density& d, const std::function<double(std::span<const double>)>& f, int res,
                 const SkipPredicate& skip) {
    auto out = integrate(
        d, [&](std::span<const double> xi, std::span<double> v) { v[0] = f(xi); }, 1, trapezoid_rule(d.dim(), res),
        skip);
    return out[0];
}

Vector integrate_vector(const Density& d, const std::function<Vector(std::span<const double>)>& f, int dim_out,
                        int res, const SkipPredicate& skip) {
    auto out = integrate(
        d,
        [&](std::span<const double> xi, std::span<double> v) {
            const Vector r = f(xi);
            for (int k = 0; k < dim_out; ++k) v[static_cast<size_t>(k)] = r[k];
        },
        static_cast<size_t>(dim_out), trapezoid_rule(d.dim(), res), skip);
    return Eigen::Map<Vector>(out.data(), dim_out);
}

Matrix integrate_matrix(const Density& d, const std::function<Matrix(std::span<const double>)>& f, int rows,
                        int cols, int res, const SkipPredicate& skip) {
    auto out = integrate(
        d,
        [&](std::span<const double> xi, std::span<double> v) {
            const Matrix r = f(xi);
            for (int i = 0; i < rows; ++i)
                for (int j = 0; j < cols; ++j) v[static_cast<size_t>(i * cols + j)] = r(i, j);
        },
        static_cast<size_t>(rows * cols), trapezoid_rule(d.dim(), res), skip);
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = out[static_cast<size_t>(i * cols + j)];
    return m;
}

}  // namespace vstat
