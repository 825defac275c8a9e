#pragma once

#include "markovflow/homogeneous_flow.hpp"

namespace markovflow::detail {

/// Sup-norm flow change over nodes with |a| < y_max.
double flow_residual(const FlowSlice& a, const FlowSlice& b, double y_max);

/// Q_nu(F) with the configured tail extrapolation.
FlowSlice shaped_flow(const Marginal& nu, const MonotoneCdf& F, const FlowConfig& config);

MonotoneCdf transfer_cdf(const Marginal& nu_i, const Marginal& nu_ip1, const MonotoneCdf& G);

DriftFn capped_drift(const FlowSlice& f, double cap);

void check_stall(const IterationLog& log, const FlowConfig& config, const char* what);

}  // namespace markovflow::detail
