#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "markovflow/surface_mc.hpp"

namespace markovflow {

inline constexpr const char* kEngineVersion = "0.1.0";

enum class Scheme { bass_chl, homogeneous, continuous };

const char* to_string(Scheme s) noexcept;
Scheme scheme_from_string(const std::string& name);

struct RunConfig {
    int grid_nt = 100;
    int grid_nx = 500;
    double grid_width = 8.0;  ///< half-width of each period grid in units of sqrt(t_end)
    double y_max = 7.0;
    double tolerance = 1e-7;
    int max_iterations = 500;
    Scheme scheme = Scheme::homogeneous;
    TermStructureKind rule = TermStructureKind::inverse_sqrt;
    std::uint64_t seed = 1;
    std::size_t paths = 100000;
    int window_lo = -1;  ///< rate window; -1 picks 50 (first period) or 100
    int window_hi = -1;  ///< -1 picks 100 (first period) or 500

    /// Throws invalid-argument on nonpositive sizes or tolerances.
    void validate() const;
    nlohmann::json to_json() const;
    /// Hex FNV-1a hash of the serialized config.
    std::string hash() const;
    FlowConfig flow_config() const;
};

struct PeriodRate {
    std::size_t period = 0;
    int window_lo = 0;
    int window_hi = 0;
    std::optional<double> rate;
};

struct CalibrationResult {
    ModelSurface surface;
    std::vector<PeriodRate> rates;
    bool converged = true;  ///< every period reached tolerance
};

/// Calibrates every period of the set with the configured scheme. Periods of the
/// bass-chl and homogeneous schemes run in parallel.
CalibrationResult calibrate(const MarginalSet& set, const RunConfig& config);

/// Law of X at the end of a period, recomputed from the stored start law and drift.
MonotoneCdf period_end_law(const CalibratedPeriod& period, const FlowConfig& config);

/// max |f(T, x_j) - Q_nu(G(x_j))| over nodes with G(x_j) in [q_lo, q_hi], where G is
/// the law of X at the period end re-propagated from the stored model.
double pushforward_quantile_error(const CalibratedPeriod& period, const Marginal& nu, const FlowConfig& config,
                                  double q_lo = 0.01, double q_hi = 0.99);

void write_log_csv(std::ostream& out, const IterationLog& log);
void write_rates_csv(std::ostream& out, const CalibrationResult& result);
void write_surface_csv(std::ostream& out, const std::vector<SurfaceRow>& rows);

}  // namespace markovflow
