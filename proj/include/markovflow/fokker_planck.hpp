#pragma once

#include <vector>

#include "markovflow/grid.hpp"

namespace markovflow {

inline constexpr double kDefaultDriftCap = 50.0;

/// Time-homogeneous drift sampled on grid nodes.
struct DriftFn {
    Grid grid;
    Vector values;

    /// Linear interpolation, flat beyond the grid.
    double operator()(double x) const noexcept;
};

enum class FpScheme {
    implicit,        ///< backward Euler
    crank_nicolson,  ///< Crank-Nicolson with two backward-Euler half steps at the start; a step that
                     ///< goes negative is redone as two backward-Euler half steps
};

struct PropagatorSpec {
    double t0 = 0.0;
    double t1 = 1.0;
    int n_steps = 100;
    FpScheme scheme = FpScheme::crank_nicolson;
    double drift_cap = kDefaultDriftCap;
};

struct PropagationStats {
    double max_mass_defect = 0.0;  ///< largest per-step change of sum(p) h before renormalization
    double min_density = 0.0;      ///< most negative nodal density seen before flooring
    int implicit_fallbacks = 0;    ///< Crank-Nicolson steps redone implicitly after going negative
};

/// Drift for each time step (evaluated at the step midpoint); size must equal n_steps.
using DriftSchedule = std::vector<Vector>;

/// Solves p_t + (mu p)_x - p_xx / 2 = 0 in flux form with zero-flux ends.
/// The drift flux is central where |mu| h <= 1 and upwind elsewhere, which keeps
/// the spatial operator an M-matrix. Output is floored at 0 and renormalized.
/// Throws instability-detected on NaN or negative mass above 1e-6.
DensitySlice propagate_density(const DensitySlice& p0, const DriftFn& mu, const PropagatorSpec& spec,
                               PropagationStats* stats = nullptr);

DensitySlice propagate_density(const DensitySlice& p0, const DriftSchedule& mu,
                               const PropagatorSpec& spec, PropagationStats* stats = nullptr);

/// Propagates a CDF: cell masses F_{j+1} - F_j form a density on the cell
/// midpoints, which is evolved and summed back. A zero-length period returns F0.
MonotoneCdf propagate_cdf(const MonotoneCdf& F0, const DriftFn& mu, const PropagatorSpec& spec,
                          PropagationStats* stats = nullptr);

MonotoneCdf propagate_cdf(const MonotoneCdf& F0, const DriftSchedule& mu, const PropagatorSpec& spec,
                          PropagationStats* stats = nullptr);

}  // namespace markovflow
