#include "vstat/quadrature.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>

#include "vstat/errors.hpp"
#include "vstat/manifold.hpp"

namespace vstat {

double AxisRule::total_weight() const { return std::accumulate(weights.begin(), weights.end(), 0.0); }

AxisRule periodic_trapezoid(int res) {
    if (res < 2) throw InvalidInput("quadrature resolution must be at least 2");
    AxisRule r;
    r.nodes.resize(static_cast<size_t>(res));
    r.weights.assign(static_cast<size_t>(res), kTwoPi / res);
    for (int j = 0; j < res; ++j) r.nodes[static_cast<size_t>(j)] = kTwoPi * j / res;
    return r;
}

namespace {

AxisRule build_gauss_legendre(int order) {
    AxisRule r;
    r.nodes.resize(static_cast<size_t>(order));
    r.weights.resize(static_cast<size_t>(order));
    for (int i = 0; i < order; ++i) {
        // Newton iteration on P_order from the Chebyshev-like initial guess.
        double x = std::cos(kPi * (i + 0.75) / (order + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0;
            double p1 = x;
            for (int k = 2; k <= order; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = order * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        r.nodes[static_cast<size_t>(order - 1 - i)] = x;
        r.weights[static_cast<size_t>(order - 1 - i)] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    return r;
}

}  // namespace

const AxisRule& gauss_legendre(int order) {
    if (order < 1) throw InvalidInput("Gauss-Legendre order must be positive");
    static std::mutex mu;
    static std::map<int, AxisRule> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(order);
    if (it == cache.end()) it = cache.emplace(order, build_gauss_legendre(order)).first;
    return it->second;
}

namespace {

// Panel widths growing from w next to an end, doubling, capped at h, that
// exactly fill `length`.
std::vector<double> graded_widths(double length, double w, double h) {
    std::vector<double> widths;
    double covered = 0.0;
    w = std::min(w, h);
    while (covered < length) {
        widths.push_back(w);
        covered += w;
        w = std::min(2.0 * w, h);
    }
    const double excess = covered - length;
    widths.back() -= excess;
    if (widths.size() > 1 && widths.back() < 0.25 * widths[widths.size() - 2]) {
        const double tail = widths.back();
        widths.pop_back();
        widths.back() += tail;
    }
    return widths;
}

}  // namespace

std::vector<double> graded_breakpoints(double a, double b, double w_left, double w_right, double h) {
    if (!(b > a)) throw InvalidInput("graded_breakpoints: empty interval");
    if (!(w_left > 0.0 && w_right > 0.0 && h > 0.0)) throw InvalidInput("graded_breakpoints: widths must be positive");
    const double mid = 0.5 * (a + b);
    const double half = mid - a;
    std::vector<double> left = graded_widths(half, w_left, h);
    std::vector<double> right = graded_widths(half, w_right, h);
    std::vector<double> bp{a};
    double pos = a;
    for (double w : left) bp.push_back(pos += w);
    bp.back() = mid;
    pos = mid;
    for (auto it = right.rbegin(); it != right.rend(); ++it) bp.push_back(pos += *it);
    bp.back() = b;
    return bp;
}

AxisRule panel_rule(std::span<const double> breakpoints, int order) {
    const AxisRule& gl = gauss_legendre(order);
    AxisRule r;
    for (size_t p = 0; p + 1 < breakpoints.size(); ++p) {
        const double lo = breakpoints[p];
        const double hi = breakpoints[p + 1];
        const double half = 0.5 * (hi - lo);
        const double mid = 0.5 * (hi + lo);
        for (size_t j = 0; j < gl.size(); ++j) {
            r.nodes.push_back(mid + half * gl.nodes[j]);
            r.weights.push_back(half * gl.weights[j]);
        }
    }
    return r;
}

double cut_panel_width(double t) {
    if (t < 0.0) throw InvalidInput("cut_panel_width: negative time");
    return t > 0.0 ? t / (2.0 * kPi) : kTwoPi;
}

AxisRule adapted_periodic_rule(int res, std::span<const double> singular, double min_width, int order) {
    if (res < 16) throw InvalidInput("adapted rule resolution must be at least 16");
    const int panels = std::max(4, res / order);
    const double h = kTwoPi / panels;
    std::vector<double> pts;
    for (double s : singular) pts.push_back(wrap_angle(s));
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end(), [](double a, double b) { return b - a < 1e-14; }), pts.end());
    const bool graded = !pts.empty();
    if (pts.empty()) pts.push_back(0.0);

    AxisRule r;
    for (size_t i = 0; i < pts.size(); ++i) {
        const double a = pts[i];
        const double b = (i + 1 < pts.size()) ? pts[i + 1] : pts[0] + kTwoPi;
        if (b - a < 1e-14) continue;
        const double w = graded ? min_width : h;
        const std::vector<double> bp = graded_breakpoints(a, b, w, w, h);
        AxisRule seg = panel_rule(bp, order);
        for (size_t j = 0; j < seg.size(); ++j) {
            r.nodes.push_back(wrap_angle(seg.nodes[j]));
            r.weights.push_back(seg.weights[j]);
        }
    }
    return r;
}

AxisRule strip_rule(double delta, double min_width, double h, int order) {
    if (!(delta > 0.0 && delta < kPi)) throw InvalidInput("strip_rule: delta must lie in (0, pi)");
    std::vector<double> left = graded_breakpoints(-delta, 0.0, h, min_width, h);
    std::vector<double> right = graded_breakpoints(0.0, delta, min_width, h, h);
    left.pop_back();
    left.insert(left.end(), right.begin(), right.end());
    return panel_rule(left, order);
}

AxisRule outside_strip_rule(double delta, double h, int order) {
    if (!(delta > 0.0 && delta < kPi)) throw InvalidInput("outside_strip_rule: delta must lie in (0, pi)");
    const std::vector<double> bp = graded_breakpoints(delta, kTwoPi - delta, h, h, h);
    return panel_rule(bp, order);
}

AxisRule shifted(const AxisRule& rule, double shift) {
    AxisRule r = rule;
    for (double& x : r.nodes) x = wrap_angle(x + shift);
    return r;
}

std::size_t TensorRule::size() const {
    std::size_t n = 1;
    for (const auto& a : axes) n *= a.size();
    return axes.empty() ? 0 : n;
}

double TensorRule::node(std::size_t i, std::span<double> coords) const {
    double w = 1.0;
    for (int k = dim() - 1; k >= 0; --k) {
        const AxisRule& a = axes[static_cast<size_t>(k)];
        const std::size_t j = i % a.size();
        i /= a.size();
        coords[static_cast<size_t>(k)] = a.nodes[j];
        w *= a.weights[j];
    }
    return w;
}

}  // namespace vstat
