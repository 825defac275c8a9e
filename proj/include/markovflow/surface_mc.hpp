#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "markovflow/brownian_flow.hpp"
#include "markovflow/continuous_flow.hpp"

namespace markovflow {

using CalibratedPeriod = std::variant<BrownianPeriod, HomogeneousPeriod, ContinuousPeriod>;

double period_start(const CalibratedPeriod& p) noexcept;
double period_end(const CalibratedPeriod& p) noexcept;
/// "brownian", "homogeneous" or "continuous".
const char* period_kind(const CalibratedPeriod& p) noexcept;
const IterationLog& period_log(const CalibratedPeriod& p) noexcept;
ConvergenceStatus period_status(const CalibratedPeriod& p) noexcept;

/// f(t, .) for t in [t_start, t_end]; throws time-out-of-period otherwise.
FlowSlice period_flow(const CalibratedPeriod& p, double t);

/// Drift of X at time t (zero for brownian periods).
DriftFn period_drift(const CalibratedPeriod& p, double t);

struct ModelSurface {
    double spot = 0.0;
    std::vector<CalibratedPeriod> periods;
    /// continuous_boundary[k]: X passes unchanged from period k to k+1.
    std::vector<bool> continuous_boundary;

    /// Throws invalid-argument unless the periods partition [0, T] in order.
    void validate() const;
    std::vector<double> maturities() const;
    /// Period containing t; a maturity belongs to the period it ends.
    std::size_t period_index(double t) const;
};

/// Piecewise-linear local-vol curve sigma_loc(y).
struct LocalVolCurve {
    Vector y;
    Vector sigma;

    /// Linear interpolation in y, flat beyond the ends.
    double operator()(double y_value) const noexcept;
};

/// sigma_loc(f(x_j)) = f'(x_j) over the active nodes; throws non-invertible-flow
/// unless f is strictly increasing there with f' > 0.
LocalVolCurve local_vol_from_flow(const FlowSlice& f);

/// Restricts a curve to [0.85 k_min, 1.15 k_max].
LocalVolCurve clip_to_strikes(const LocalVolCurve& curve, double k_min, double k_max);

/// f'(f^{-1}(y)), following the linear tails beyond the grid.
double local_vol_at(const FlowSlice& f, double y);

/// Solves f' = sigma(f) through (x0, s0) on the grid nodes with an adaptive
/// Dormand-Prince integrator; throws vanishing-volatility when sigma <= 0.
FlowSlice flow_from_local_vol(const std::function<double(double)>& sigma, const Grid& grid, double x0,
                              double s0);

/// Short-maturity flow from a normal implied-vol skew: (f - s0) / sigma_n(f) = x - x0
/// per node, by bracketed root finding; throws bracket-failure, also when the skew is
/// not positive between the solved flow and the at-the-money line s0 + sigma_n(s0) (x - x0).
FlowSlice bbf_short_flow(const std::function<double(double)>& implied_normal_vol, const Grid& grid, double s0,
                         double x0);

struct SimulationConfig {
    std::size_t n_paths = 100000;
    int steps_per_period = 100;
    std::uint64_t seed = 1;
};

struct PathSet {
    std::size_t n_paths = 0;
    int steps_per_period = 0;
    std::uint64_t seed = 0;
    std::vector<double> maturities;
    Eigen::MatrixXd snapshots;  ///< row i: S at maturity i taken from the left period's flow
    std::size_t clamped_stitches = 0;
    double max_stitch_residual = 0.0;  ///< over unclamped stitches
};

/// Euler paths of X with S = f(t, X). Each path draws from its own generator
/// seeded by (seed, path), so results do not depend on the thread count.
PathSet simulate(const ModelSurface& surface, const SimulationConfig& config = {});

/// Kolmogorov-Smirnov distance between samples and a target CDF.
double ks_distance(std::vector<double> samples, const Marginal& target);

struct MaturitySummary {
    double maturity = 0.0;
    double mean = 0.0;
    double stderr_mean = 0.0;
    double ks = -1.0;  ///< -1 without a target
};

std::vector<MaturitySummary> summarize(const PathSet& paths, const MarginalSet* targets = nullptr);

struct SurfaceRow {
    double t;
    double y;
    double sigma_loc;
    std::string period_kind;
};

/// sigma_loc on the t x y product grid.
std::vector<SurfaceRow> export_surface(const ModelSurface& surface, const std::vector<double>& t_grid,
                                       const std::vector<double>& y_grid);

/// Closed-form double-exponential surface sigma^2 = 1 + |y| / sqrt(t).
std::vector<SurfaceRow> de_reference_surface(const std::vector<double>& t_grid,
                                             const std::vector<double>& y_grid);

nlohmann::json to_json(const ModelSurface& surface);
ModelSurface model_surface_from_json(const nlohmann::json& j);

}  // namespace markovflow
