#include "markovflow/brownian_flow.hpp"

#include <algorithm>
#include <cmath>

#include "markovflow/error.hpp"
#include "markovflow/normal.hpp"

namespace markovflow {

namespace {

// Clamp to [0,1] and remove round-off decreases.
void sanitize_cdf(Vector& v) {
    double run = 0.0;
    for (Index j = 0; j < v.size(); ++j) {
        run = std::max(run, std::clamp(v[j], 0.0, 1.0));
        v[j] = run;
    }
}

void check_period(double t0, double t1) {
    if (!(t1 > t0) || !(t0 >= 0.0)) {
        throw Error(ErrorKind::invalid_argument, "period needs 0 <= t_start < t_end");
    }
}

}  // namespace

void require_convex_order(const Marginal& earlier, const Marginal& later) {
    constexpr int n = 64;
    for (int k = 0; k < n; ++k) {
        const double q = 0.001 + 0.998 * k / (n - 1.0);
        const double strike = later.quantile(q);
        const double deficit = earlier.call(strike) - later.call(strike);
        if (deficit > 1e-8 * std::max(1.0, std::abs(later.mean()))) {
            throw Error(ErrorKind::convex_order_violation,
                        "call price decreases with maturity at strike " + std::to_string(strike));
        }
    }
}

BrownianPeriod bass_first_period(const Marginal& nu1, double T1, const Grid& grid) {
    if (!(T1 > 0.0)) throw Error(ErrorKind::nonpositive_time, "Bass period needs T1 > 0");
    const Index n = grid.size();

    BrownianPeriod p;
    p.t_start = 0.0;
    p.t_end = T1;
    p.grid = grid;
    p.starts_at_point = true;
    p.start_law = MonotoneCdf{grid, Vector::Zero(n), {}};
    for (Index j = 0; j < n; ++j) p.start_law.values[j] = grid[j] >= 0.0 ? 1.0 : 0.0;

    p.terminal_flow = compose_quantile_cdf(nu1.quantile_fn(), normal_cdf_on(grid, 0.0, T1));
    const Vector& v = p.terminal_flow.values;
    if (!(v[n - 1] > v[0]) || nu1.quantile(0.25) >= nu1.quantile(0.75)) {
        throw Error(ErrorKind::degenerate_marginal, "target marginal has no spread");
    }
    p.start_flow = FlowSlice(grid, heat_convolve(grid, v, T1));
    return p;
}

BrownianPeriod chl_fixed_point(const Marginal& nu_i, const Marginal& nu_ip1, double T_i,
                               double T_ip1, const Grid& grid, const BrownianConfig& config) {
    check_period(T_i, T_ip1);
    if (!(T_i > 0.0)) throw Error(ErrorKind::nonpositive_time, "subsequent period needs T_i > 0");
    require_convex_order(nu_i, nu_ip1);
    const double dt = T_ip1 - T_i;
    const Index n = grid.size();

    BrownianPeriod p;
    p.t_start = T_i;
    p.t_end = T_ip1;
    p.grid = grid;

    Vector F = normal_cdf_on(grid, 0.0, T_i).values;
    const QuantileFn q_next = nu_ip1.quantile_fn();
    p.status = ConvergenceStatus::max_iterations;
    for (int it = 1; it <= config.max_iterations; ++it) {
        Vector G = heat_convolve(grid, F, dt);
        sanitize_cdf(G);
        const FlowSlice terminal = compose_quantile_cdf(q_next, MonotoneCdf{grid, G, {}});
        const Vector start = heat_convolve(grid, terminal.values, dt);
        Vector F_new(n);
        for (Index j = 0; j < n; ++j) F_new[j] = nu_i.cdf(start[j]);
        F_new = (1.0 - config.relaxation) * F + config.relaxation * F_new;
        sanitize_cdf(F_new);

        const double residual = (F_new - F).cwiseAbs().maxCoeff();
        F = std::move(F_new);
        p.log.push_back({it, 0.0, 0.0, residual});
        if (residual < config.tolerance) {
            p.status = ConvergenceStatus::converged;
            break;
        }
    }
    if (p.status != ConvergenceStatus::converged && stagnated(p.log, ResidualKind::cdf)) {
        throw Error(ErrorKind::no_convergence, "CHL fixed point stagnated above tolerance");
    }

    p.start_law = MonotoneCdf{grid, F, {}};
    Vector G = heat_convolve(grid, F, dt);
    sanitize_cdf(G);
    p.terminal_flow = compose_quantile_cdf(q_next, MonotoneCdf{grid, G, {}});
    p.start_flow = FlowSlice(grid, heat_convolve(grid, p.terminal_flow.values, dt));
    return p;
}

FlowSlice brownian_flow_at(const BrownianPeriod& period, double t) {
    if (t < period.t_start || t > period.t_end) {
        throw Error(ErrorKind::time_out_of_period, "time outside the Brownian period");
    }
    const double tau = period.t_end - t;
    if (tau <= 0.0) return period.terminal_flow;
    return FlowSlice(period.grid, heat_convolve(period.grid, period.terminal_flow.values, tau));
}

}  // namespace markovflow
