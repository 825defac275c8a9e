#pragma once

#include <utility>

#include "markovflow/homogeneous_flow.hpp"

namespace markovflow {

enum class TermStructureKind {
    inverse_sqrt,  ///< f = a + b / sqrt(t)
    log_linear,    ///< log f linear in t; needs positive slices
};

const char* to_string(TermStructureKind kind) noexcept;
TermStructureKind term_structure_from_string(const std::string& name);

/// Flow term structure between two maturity slices on the same grid.
struct TermStructureRule {
    TermStructureKind kind = TermStructureKind::inverse_sqrt;
    double T_i = 0.0;
    double T_ip1 = 0.0;
    FlowSlice f_i;
    FlowSlice f_ip1;
};

/// Weights (w_i, w_ip1) of the endpoint slices at time t for the inverse-sqrt rule.
std::pair<double, double> inverse_sqrt_weights(double T_i, double T_ip1, double t);

/// f(t, .); throws time-out-of-period outside [T_i, T_ip1] and invalid-argument when
/// the log-linear rule meets a nonpositive slice value.
FlowSlice interp_flow(const TermStructureRule& rule, double t);

/// d f(t, .) / dt from the analytic time dependence of the rule.
Vector flow_time_derivative(const TermStructureRule& rule, double t);

/// mu = -(f_t + f_xx / 2) / f_x on nodes active in both slices with f_x > 1e-10; 0 elsewhere.
DriftFn drift_from_flow_td(const TermStructureRule& rule, double t);

struct ContinuousPeriod {
    double t_start = 0.0;
    double t_end = 0.0;
    Grid grid;
    TermStructureRule rule;
    DriftSchedule drift;  ///< one slice per time step, at the step midpoint
    MonotoneCdf F_start;
    MonotoneCdf F_end;
    IterationLog log;
    ConvergenceStatus status = ConvergenceStatus::converged;

    /// Time of the midpoint of step k.
    double step_time(int k) const noexcept;
};

/// Period [T_i, T_ip1] from the converged law and flow at T_i. Stops when the
/// change of f(T_ip1, .) falls below tolerance. `nu_i`, when given, is checked
/// for convex order against `nu_ip1`.
ContinuousPeriod calibrate_continuous_period(const MonotoneCdf& prev_F, const FlowSlice& prev_f,
                                             const Marginal& nu_ip1, double T_i, double T_ip1,
                                             TermStructureKind kind, const FlowConfig& config = {},
                                             const Marginal* nu_i = nullptr);

}  // namespace markovflow
