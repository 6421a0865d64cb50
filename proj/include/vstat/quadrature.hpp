#pragma once

// One-dimensional quadrature rules on the period [0, 2pi) and their tensor
// products. Rules carry absolute node positions; integrands that are peaked
// or kinked at known locations (the cut locus of an evaluation point) use
// composite Gauss-Legendre panels whose breakpoints sit on those locations
// and shrink geometrically towards them.

#include <cstddef>
#include <span>
#include <vector>

namespace vstat {

struct AxisRule {
    std::vector<double> nodes;
    std::vector<double> weights;

    std::size_t size() const { return nodes.size(); }
    double total_weight() const;
};

inline constexpr int kPanelOrder = 16;

/// Nodes 2 pi j / res with equal weights 2 pi / res.
AxisRule periodic_trapezoid(int res);

/// Gauss-Legendre rule of the given order on [-1, 1].
const AxisRule& gauss_legendre(int order);

/// Breakpoints covering [a, b]. Panel widths start at w_left (w_right) next to
/// a (b), double away from it, and never exceed h.
std::vector<double> graded_breakpoints(double a, double b, double w_left, double w_right, double h);

/// Composite Gauss-Legendre rule over consecutive breakpoints.
AxisRule panel_rule(std::span<const double> breakpoints, int order = kPanelOrder);

/// Rule over one full period with breakpoints at `singular` (absolute angles).
/// Panels are graded down to `min_width` next to each singular point; the
/// bulk panel width is about 2 pi * order / res. Nodes are wrapped into [0, 2pi).
AxisRule adapted_periodic_rule(int res, std::span<const double> singular, double min_width,
                               int order = kPanelOrder);

/// Smallest panel width used next to a cut point for smoothing time t:
/// resolves the sech^2 profile of width t / pi. Zero time needs no grading.
double cut_panel_width(double t);

/// Offsets in (-delta, delta) about a peak at 0, graded to min_width.
AxisRule strip_rule(double delta, double min_width, double h, int order = kPanelOrder);

/// Offsets in [delta, 2 pi - delta].
AxisRule outside_strip_rule(double delta, double h, int order = kPanelOrder);

/// Same rule with every node moved by `shift` and wrapped into [0, 2pi).
AxisRule shifted(const AxisRule& rule, double shift);

/// Tensor product of per-axis rules.
struct TensorRule {
    std::vector<AxisRule> axes;

    std::size_t size() const;
    int dim() const { return static_cast<int>(axes.size()); }
    /// Writes the coordinates of flat node i (last axis fastest) and returns its weight.
    double node(std::size_t i, std::span<double> coords) const;
};

}  // namespace vstat
