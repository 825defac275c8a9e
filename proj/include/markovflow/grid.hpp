#pragma once

#include <Eigen/Dense>
#include <functional>

namespace markovflow {

using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Uniform 1-D grid. Nodes are stored explicitly; spacing is exact by construction.
struct Grid {
    Vector nodes;
    double lo = 0.0;
    double hi = 0.0;
    double h = 0.0;

    Index size() const noexcept { return nodes.size(); }
    double operator[](Index i) const noexcept { return nodes[i]; }

    /// Interval index j with nodes[j] <= x < nodes[j+1], clamped to [0, n-2].
    Index locate(double x) const noexcept;
};

Grid build_uniform_grid(Index n, double lo, double hi);

/// Probability density sampled on grid nodes.
struct DensitySlice {
    Grid grid;
    Vector values;

    /// Trapezoidal mass.
    double mass() const;
    /// Trapezoidal first moment.
    double mean() const;
};

/// Nondecreasing distribution function sampled on grid nodes, interpolated linearly.
struct MonotoneCdf {
    Grid grid;
    Vector values;
    Vector upper;  ///< 1 - F kept at full relative precision; empty when not tracked

    /// Linear interpolation; constant beyond the grid ends.
    double operator()(double x) const noexcept;

    double survival(Index j) const noexcept { return upper.size() ? upper[j] : 1.0 - values[j]; }
};

/// Monotone flow x -> f(x) on a grid. Nodes outside [active_lo, active_hi]
/// lie in a linear-extrapolation region.
struct FlowSlice {
    Grid grid;
    Vector values;
    Index active_lo = 0;
    Index active_hi = -1;  ///< -1 means "last node"

    FlowSlice() = default;
    FlowSlice(Grid g, Vector v);

    Index last_active() const noexcept { return active_hi < 0 ? values.size() - 1 : active_hi; }

    /// Linear interpolation with linear extrapolation from the end segments.
    double operator()(double x) const noexcept;

    struct Inverse {
        double x;
        bool clamped;  ///< y fell outside the invertible range; x pinned to a grid edge
    };
    /// Piecewise-linear inverse; flat segments resolve to their midpoint.
    Inverse inverse(double y) const noexcept;
};

using QuantileFn = std::function<double(double)>;

/// Clamp applied to CDF values before they are fed to a target quantile function.
inline constexpr double kCdfClamp = 1e-15;

MonotoneCdf cdf_from_density(const DensitySlice& p);

/// Probability of each of the n-1 grid cells, tails lumped into the end cells.
/// Cells in the upper half are differenced from the survival values.
Vector cell_masses(const MonotoneCdf& F);

/// CDF (with survival values) from nonnegative cell masses, normalized to 1.
MonotoneCdf cdf_from_cell_masses(const Grid& grid, const Vector& masses);

/// Cell-centred finite-difference density of a CDF (floored at 0, renormalized).
DensitySlice density_from_cdf(const MonotoneCdf& F);

/// Piecewise-linear inverse of F, flats resolved to midpoints, result in [lo, hi].
double quantile(const MonotoneCdf& F, double q);

/// Nodewise target_quantile(F(x)); throws non-monotone-result on a decreasing output.
FlowSlice compose_quantile_cdf(const QuantileFn& target_quantile, const MonotoneCdf& flow_cdf);

/// As above, but nodes with F > 1/2 use upper_quantile(1 - F) with 1 - F read from
/// the survival values, which keeps the upper tail accurate.
FlowSlice compose_quantile_cdf(const QuantileFn& lower_quantile, const QuantileFn& upper_quantile,
                               const MonotoneCdf& flow_cdf);

/// F sampled at the nodes of `target` (0 below, 1 above the source grid), survival included.
MonotoneCdf resample(const MonotoneCdf& F, const Grid& target);

/// f sampled at the nodes of `target` with linear extrapolation; the active range
/// becomes the target nodes inside the source active range.
FlowSlice resample(const FlowSlice& f, const Grid& target);

/// Normal(mean, variance) CDF sampled on the grid.
MonotoneCdf normal_cdf_on(const Grid& grid, double mean, double variance);

/// Normal(mean, variance) density sampled on the grid.
DensitySlice normal_density_on(const Grid& grid, double mean, double variance);

/// Linear interpolation on sorted (not necessarily uniform) abscissae; flat extrapolation.
double interp_linear(const Vector& xs, const Vector& ys, double x) noexcept;

/// Central first derivative on a uniform grid, one-sided at the ends.
Vector diff1(const Vector& v, double h);

/// Central second derivative on a uniform grid, copied from the neighbour at the ends.
Vector diff2(const Vector& v, double h);

}  // namespace markovflow
