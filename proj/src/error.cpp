#include "markovflow/error.hpp"

#include <cstdlib>
#include <iostream>

namespace markovflow {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::invalid_bounds: return "invalid-bounds";
        case ErrorKind::out_of_range_probability: return "out-of-range-probability";
        case ErrorKind::non_monotone_result: return "non-monotone-result";
        case ErrorKind::nonpositive_time: return "nonpositive-time";
        case ErrorKind::root_find_failure: return "root-find-failure";
        case ErrorKind::degenerate_marginal: return "degenerate-marginal";
        case ErrorKind::no_convergence: return "no-convergence";
        case ErrorKind::convex_order_violation: return "convex-order-violation";
        case ErrorKind::time_out_of_period: return "time-out-of-period";
        case ErrorKind::instability_detected: return "instability-detected";
        case ErrorKind::one_sided_mass: return "one-sided-mass";
        case ErrorKind::non_invertible_flow: return "non-invertible-flow";
        case ErrorKind::vanishing_volatility: return "vanishing-volatility";
        case ErrorKind::bracket_failure: return "bracket-failure";
        case ErrorKind::unstitchable_path: return "unstitchable-path";
        case ErrorKind::optimizer_failure: return "optimizer-failure";
        case ErrorKind::solver_singularity: return "solver-singularity";
        case ErrorKind::invalid_argument: return "invalid-argument";
        case ErrorKind::parse_error: return "parse-error";
        case ErrorKind::io_error: return "io-error";
    }
    return "unknown";
}

void warn(const std::string& message) {
    if (std::getenv("MARKOVFLOW_QUIET") != nullptr) return;
    std::cerr << "markovflow: warning: " << message << '\n';
}

}  // namespace markovflow
