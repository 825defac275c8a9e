#pragma once

#include <stdexcept>
#include <string>

namespace markovflow {

enum class ErrorKind {
    invalid_bounds,
    out_of_range_probability,
    non_monotone_result,
    nonpositive_time,
    root_find_failure,
    degenerate_marginal,
    no_convergence,
    convex_order_violation,
    time_out_of_period,
    instability_detected,
    one_sided_mass,
    non_invertible_flow,
    vanishing_volatility,
    bracket_failure,
    unstitchable_path,
    optimizer_failure,
    solver_singularity,
    invalid_argument,
    parse_error,
    io_error,
};

const char* to_string(ErrorKind kind) noexcept;

/// Engine error carrying a machine-readable kind next to the message.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Writes a warning line to stderr unless MARKOVFLOW_QUIET is set.
void warn(const std::string& message);

}  // namespace markovflow
