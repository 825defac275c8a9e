#include "markovflow/iteration.hpp"

#include <cmath>

namespace markovflow {

double residual_of(const IterationRecord& r, ResidualKind kind) noexcept {
    switch (kind) {
        case ResidualKind::flow: return r.f_residual;
        case ResidualKind::drift: return r.mu_residual;
        case ResidualKind::cdf: return r.cdf_residual;
    }
    return 0.0;
}

std::optional<double> estimate_rate(const IterationLog& log, int lo, int hi, ResidualKind kind) {
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    int n = 0;
    for (const auto& r : log) {
        if (r.iteration < lo || r.iteration > hi) continue;
        const double v = residual_of(r, kind);
        if (!(v > 0.0) || !std::isfinite(v)) continue;
        const double x = r.iteration;
        const double y = std::log(v);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++n;
    }
    if (n < 3) return std::nullopt;
    const double denom = n * sxx - sx * sx;
    if (denom <= 0.0) return std::nullopt;
    return std::exp((n * sxy - sx * sy) / denom);
}

const char* to_string(ConvergenceStatus s) noexcept {
    switch (s) {
        case ConvergenceStatus::converged: return "converged";
        case ConvergenceStatus::max_iterations: return "max-iterations";
    }
    return "unknown";
}

bool stagnated(const IterationLog& log, ResidualKind kind, int window) {
    if (static_cast<int>(log.size()) < window) return false;
    const int last = log.back().iteration;
    const auto rate = estimate_rate(log, last - window + 1, last, kind);
    return rate && *rate >= 1.0;
}

}  // namespace markovflow
