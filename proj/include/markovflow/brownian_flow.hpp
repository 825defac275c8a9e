#pragma once

#include "markovflow/grid.hpp"
#include "markovflow/iteration.hpp"
#include "markovflow/marginals.hpp"

namespace markovflow {

/// Convolution of grid samples with the Gaussian heat kernel of variance tau,
/// evaluated by FFT. Values are extended linearly beyond the grid with the
/// boundary slopes over at least 8 sqrt(tau), and the affine part through the
/// end values is removed before the transform and restored afterwards, so
/// constants and lines pass through exactly.
Vector heat_convolve(const Grid& grid, const Vector& values, double tau);

struct BrownianConfig {
    double tolerance = 1e-9;
    int max_iterations = 500;
    double relaxation = 1.0;  ///< 1 = plain fixed-point update
};

/// One forward period in which the flow variable is a Brownian motion.
struct BrownianPeriod {
    double t_start = 0.0;
    double t_end = 0.0;
    Grid grid;
    bool starts_at_point = false;  ///< X_{t_start} = 0 almost surely (first period)
    MonotoneCdf start_law;         ///< law of X at t_start
    FlowSlice terminal_flow;       ///< f(t_end, .)
    FlowSlice start_flow;          ///< f(t_start, .), heat convolution of terminal_flow
    IterationLog log;
    ConvergenceStatus status = ConvergenceStatus::converged;
};

/// First period [0, T1]: f(T1, x) = Q_nu1(N(x / sqrt(T1))).
BrownianPeriod bass_first_period(const Marginal& nu1, double T1, const Grid& grid);

/// Subsequent period [T_i, T_{i+1}]: fixed point for the law of X_{T_i},
/// F <- F_nu_i( K * Q_nu_{i+1}( K * F ) ), started from Normal(0, T_i).
BrownianPeriod chl_fixed_point(const Marginal& nu_i, const Marginal& nu_ip1, double T_i,
                               double T_ip1, const Grid& grid, const BrownianConfig& config = {});

/// f(t, .) inside the period by backward heat convolution of the terminal flow.
FlowSlice brownian_flow_at(const BrownianPeriod& period, double t);

/// Throws convex-order-violation when call prices of `earlier` exceed those of `later`
/// on a strike ladder spanning the later marginal's central 99.8%.
void require_convex_order(const Marginal& earlier, const Marginal& later);

}  // namespace markovflow
