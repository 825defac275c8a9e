#pragma once

#include "markovflow/fokker_planck.hpp"
#include "markovflow/grid.hpp"
#include "markovflow/iteration.hpp"
#include "markovflow/marginals.hpp"

namespace markovflow {

/// Linear tails for the flow where |f| exceeds y_max or where the flow-variable
/// tail probability falls below tail_probability.
struct ExtrapolationPolicy {
    double y_max = 7.0;
    double tail_probability = 1e-12;
};

/// Settings shared by the fixed-point calibrators.
struct FlowConfig {
    int n_steps = 100;
    FpScheme scheme = FpScheme::crank_nicolson;
    double drift_cap = kDefaultDriftCap;
    double tolerance = 1e-7;
    int max_iterations = 500;
    ExtrapolationPolicy policy;
    bool renormalize = true;          ///< mean-zero renormalization of the period-end law in periods after the first
    bool renormalize_first = false;   ///< same for the first period, where X_0 = 0 already fixes the shift
    bool fail_on_stall = false;       ///< throw no-convergence when the flow residual stops shrinking
};

struct HomogeneousPeriod {
    double t_start = 0.0;
    double t_end = 0.0;
    Grid grid;
    bool starts_at_point = false;
    FlowSlice flow;
    DriftFn drift;
    MonotoneCdf F_start;  ///< law of X at t_start (a step at 0 for the first period)
    MonotoneCdf F_end;    ///< law of X at t_end
    IterationLog log;
    ConvergenceStatus status = ConvergenceStatus::converged;
};

/// mu = -f'' / (2 f') on active nodes with f' > 1e-10; 0 elsewhere.
DriftFn drift_from_flow(const FlowSlice& f);

/// Replaces the flow beyond the crossing of |f| = y_max by a line continuing the
/// crossing segment. When `F` is given, the crossing of the tail probability
/// threshold also counts, whichever comes first.
FlowSlice apply_extrapolation(const FlowSlice& f, const ExtrapolationPolicy& policy,
                              const MonotoneCdf* F = nullptr);

/// Multiplies the density by C+ on x > 0, C- on x < 0 and (C+ + C-)/2 at x = 0 so
/// that the trapezoidal mass is 1 and the mean is 0. Throws one-sided-mass.
DensitySlice mean_zero_renormalize(const DensitySlice& p);

/// Same adjustment for a CDF, applied to cell masses by the sign of the cell midpoint.
MonotoneCdf mean_zero_renormalize(const MonotoneCdf& F);

/// First period [0, T1], started from mu = 0.
HomogeneousPeriod calibrate_first_period(const Marginal& nu1, double T1, const Grid& grid,
                                         const FlowConfig& config = {});

/// Later period [T_i, T_{i+1}], started from mu = 0 and F = Normal(0, T_i).
HomogeneousPeriod calibrate_period(const Marginal& nu_i, const Marginal& nu_ip1, double T_i, double T_ip1,
                                   const Grid& grid, const FlowConfig& config = {});

/// max |f(x_j) - Q_nu(F(x_j))| over nodes with F(x_j) in [q_lo, q_hi].
double marginal_match_error(const FlowSlice& f, const MonotoneCdf& F, const Marginal& nu, double q_lo = 0.01,
                            double q_hi = 0.99);

}  // namespace markovflow
