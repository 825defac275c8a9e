#pragma once

#include <optional>
#include <vector>

namespace markovflow {

/// Successive-difference norms recorded after each fixed-point iteration.
/// Residuals that a scheme does not track are left at 0.
struct IterationRecord {
    int iteration = 0;
    double f_residual = 0.0;
    double mu_residual = 0.0;
    double cdf_residual = 0.0;
};

using IterationLog = std::vector<IterationRecord>;

enum class ResidualKind { flow, drift, cdf };

double residual_of(const IterationRecord& r, ResidualKind kind) noexcept;

/// Least-squares ratio r in residual ~ C r^n over iterations [lo, hi] (inclusive).
/// Empty when fewer than three positive residuals fall in the window.
std::optional<double> estimate_rate(const IterationLog& log, int lo, int hi, ResidualKind kind);

/// Convergence outcome of a fixed-point loop.
enum class ConvergenceStatus {
    converged,       ///< every tracked residual fell below tolerance
    max_iterations,  ///< still contracting when the iteration budget ran out
};

const char* to_string(ConvergenceStatus s) noexcept;

/// True when the residual has stopped decreasing over the trailing `window` iterations.
bool stagnated(const IterationLog& log, ResidualKind kind, int window = 50);

}  // namespace markovflow
