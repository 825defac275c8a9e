#include "markovflow/homogeneous_flow.hpp"

#include <algorithm>
#include <cmath>

#include "markovflow/brownian_flow.hpp"
#include "markovflow/error.hpp"
#include "flow_detail.hpp"

namespace markovflow {

using namespace detail;

namespace {

constexpr double kSlopeFloor = 1e-10;

// Cramer solution of the two-multiplier system; a, b are the masses weighted
// onto each side (the zero node split evenly), c, d the first moments.
std::pair<double, double> side_multipliers(double a, double b, double c, double d) {
    const double det = a * d - b * c;
    const double scale = std::max({std::abs(a * d), std::abs(b * c), 1e-300});
    if (std::abs(det) < 1e-12 * scale || a <= 0.0 || b <= 0.0) {
        throw Error(ErrorKind::one_sided_mass, "density has no mass on one side of 0");
    }
    const double c_plus = d / det;
    const double c_minus = -c / det;
    if (!(c_plus > 0.0) || !(c_minus > 0.0)) {
        throw Error(ErrorKind::one_sided_mass, "renormalization multipliers are not positive");
    }
    return {c_plus, c_minus};
}

// Nodes with |x| < h see the jump of the renormalization multipliers inside their
// second-difference stencil; their drift is interpolated from the nodes beside them.
void bridge_seam(DriftFn& mu) {
    const Grid& g = mu.grid;
    const Index n = g.size();
    Index lo = n, hi = -1;
    for (Index j = 0; j < n; ++j) {
        if (std::abs(g[j]) < g.h * (1.0 - 1e-9)) {
            lo = std::min(lo, j);
            hi = std::max(hi, j);
        }
    }
    if (hi < 0 || lo < 1 || hi + 1 >= n) return;
    const double a = mu.values[lo - 1], b = mu.values[hi + 1];
    for (Index j = lo; j <= hi; ++j) {
        const double w = static_cast<double>(j - lo + 1) / static_cast<double>(hi - lo + 2);
        mu.values[j] = (1.0 - w) * a + w * b;
    }
}

}  // namespace

namespace detail {

double flow_residual(const FlowSlice& a, const FlowSlice& b, double y_max) {
    double r = 0.0;
    for (Index j = 0; j < a.values.size(); ++j) {
        if (std::abs(a.values[j]) < y_max) r = std::max(r, std::abs(a.values[j] - b.values[j]));
    }
    return r;
}

FlowSlice shaped_flow(const Marginal& nu, const MonotoneCdf& F, const FlowConfig& config) {
    return apply_extrapolation(compose_quantile_cdf(nu, F), config.policy, &F);
}

// F_nu_i(Q_nu_{i+1}(G)) with the upper half carried through the survival functions.
MonotoneCdf transfer_cdf(const Marginal& nu_i, const Marginal& nu_ip1, const MonotoneCdf& G) {
    const Index n = G.values.size();
    MonotoneCdf F{G.grid, Vector(n), Vector(n)};
    for (Index j = 0; j < n; ++j) {
        if (G.values[j] <= 0.5) {
            F.values[j] = nu_i.cdf(nu_ip1.quantile(std::max(G.values[j], kCdfClamp)));
            F.upper[j] = 1.0 - F.values[j];
        } else {
            F.upper[j] = nu_i.sf(nu_ip1.upper_quantile(std::max(G.survival(j), kCdfClamp)));
            F.values[j] = 1.0 - F.upper[j];
        }
    }
    double run = 0.0;
    for (Index j = 0; j < n; ++j) {
        run = std::max(run, std::clamp(F.values[j], 0.0, 1.0));
        F.values[j] = run;
    }
    run = 0.0;
    for (Index j = n - 1; j >= 0; --j) {
        run = std::max(run, std::clamp(F.upper[j], 0.0, 1.0));
        F.upper[j] = run;
    }
    return F;
}

DriftFn capped_drift(const FlowSlice& f, double cap) {
    DriftFn mu = drift_from_flow(f);
    mu.values = mu.values.cwiseMax(-cap).cwiseMin(cap);
    return mu;
}

void check_stall(const IterationLog& log, const FlowConfig& config, const char* what) {
    if (config.fail_on_stall && !log.empty() && log.back().f_residual > config.tolerance && stagnated(log, ResidualKind::flow)) {
        throw Error(ErrorKind::no_convergence, std::string(what) + " stagnated above tolerance");
    }
}

}  // namespace detail

DriftFn drift_from_flow(const FlowSlice& f) {
    const Index n = f.values.size();
    const double h = f.grid.h;
    DriftFn mu{f.grid, Vector::Zero(n)};
    const Index lo = std::max<Index>(f.active_lo, 0);
    const Index hi = f.last_active();
    for (Index j = std::max<Index>(lo + 1, 1); j < std::min(hi, n - 1); ++j) {
        const double d1 = (f.values[j + 1] - f.values[j - 1]) / (2.0 * h);
        if (!(d1 > kSlopeFloor)) continue;
        const double d2 = (f.values[j + 1] - 2.0 * f.values[j] + f.values[j - 1]) / (h * h);
        mu.values[j] = -d2 / (2.0 * d1);
    }
    return mu;
}

namespace {

// Fractional node index where the right tail starts: the first crossing of
// f = y_max or of log S = log p_min, linear in the node values.
double right_crossing(const Vector& f, const Vector* S, double y_max, double p_min) {
    const Index n = f.size();
    if (f[0] > y_max || (S != nullptr && (*S)[0] < p_min)) return 0.0;
    double c = static_cast<double>(n - 1);
    for (Index j = 0; j + 1 < n; ++j) {
        if (f[j + 1] > y_max && f[j] <= y_max) {
            c = std::min(c, j + (y_max - f[j]) / (f[j + 1] - f[j]));
            break;
        }
    }
    if (S != nullptr) {
        const double lp = std::log(p_min);
        for (Index j = 0; j + 1 < n; ++j) {
            if ((*S)[j + 1] < p_min && (*S)[j] >= p_min) {
                const double a = std::log((*S)[j]);
                const double b = std::log(std::max((*S)[j + 1], 1e-300));
                c = std::min(c, j + (a - lp) / (a - b));
                break;
            }
        }
    }
    return c;
}

// Tail beyond fractional crossing c in segment [k, k+1]: node k+1 keeps its value,
// node k+2 blends its value with the segment line by the crossing fraction, and
// later nodes continue the line through k+1 and k+2. The result moves
// continuously as the crossing point moves across nodes.
void linear_tail(Vector& v, double c) {
    const Index n = v.size();
    const Index k = static_cast<Index>(std::floor(c));
    if (k + 2 >= n) return;
    const double w = c - static_cast<double>(k);
    v[k + 2] = w * v[k + 2] + (1.0 - w) * (2.0 * v[k + 1] - v[k]);
    const double step = v[k + 2] - v[k + 1];
    for (Index j = k + 3; j < n; ++j) v[j] = v[j - 1] + step;
}

}  // namespace

FlowSlice apply_extrapolation(const FlowSlice& f, const ExtrapolationPolicy& policy, const MonotoneCdf* F) {
    if (!(policy.y_max > 0.0)) throw Error(ErrorKind::invalid_argument, "y_max must be positive");
    const Index n = f.values.size();
    const Vector& v = f.values;

    Vector S_right, S_left;
    if (F != nullptr) {
        S_right.resize(n);
        for (Index j = 0; j < n; ++j) S_right[j] = F->survival(j);
        S_left = F->values.reverse();
    }
    const Vector v_left = -v.reverse();
    const double c_hi = right_crossing(v, F ? &S_right : nullptr, policy.y_max, policy.tail_probability);
    const double c_lo =
        (n - 1) - right_crossing(v_left, F ? &S_left : nullptr, policy.y_max, policy.tail_probability);

    FlowSlice out(f.grid, v);
    if (c_hi - c_lo < 1.0) {
        warn("flow exceeds y_max everywhere; linearizing through the central nodes");
        const Index c = n / 2;
        const double slope = (v[c] - v[c - 1]) / f.grid.h;
        for (Index j = 0; j < n; ++j) out.values[j] = v[c] + slope * (f.grid[j] - f.grid[c]);
        out.active_lo = c - 1;
        out.active_hi = c;
        return out;
    }
    linear_tail(out.values, c_hi);
    Vector r = -out.values.reverse();
    linear_tail(r, (n - 1) - c_lo);
    out.values = -r.reverse();
    out.active_lo = std::max<Index>(static_cast<Index>(std::ceil(c_lo)) - 2, 0);
    out.active_hi = std::min<Index>(static_cast<Index>(std::floor(c_hi)) + 2, n - 1);
    return out;
}

DensitySlice mean_zero_renormalize(const DensitySlice& p) {
    const Index n = p.values.size();
    const double h = p.grid.h;
    const double zero_tol = 1e-9 * h;
    double a = 0.0, b = 0.0, c = 0.0, d = 0.0;
    for (Index j = 0; j < n; ++j) {
        const double w = (j == 0 || j == n - 1 ? 0.5 : 1.0) * h * p.values[j];
        const double x = p.grid[j];
        if (x > zero_tol) {
            a += w;
            c += w * x;
        } else if (x < -zero_tol) {
            b += w;
            d += w * x;
        } else {
            a += 0.5 * w;
            b += 0.5 * w;
        }
    }
    const auto [cp, cm] = side_multipliers(a, b, c, d);
    DensitySlice out = p;
    for (Index j = 0; j < n; ++j) {
        const double x = p.grid[j];
        out.values[j] *= x > zero_tol ? cp : (x < -zero_tol ? cm : 0.5 * (cp + cm));
    }
    return out;
}

MonotoneCdf mean_zero_renormalize(const MonotoneCdf& F) {
    const Index n = F.values.size();
    const double h = F.grid.h;
    const double zero_tol = 1e-9 * h;
    Vector m = cell_masses(F);
    double a = 0.0, b = 0.0, c = 0.0, d = 0.0;
    for (Index j = 0; j + 1 < n; ++j) {
        const double x = F.grid[j] + 0.5 * h;
        if (x > zero_tol) {
            a += m[j];
            c += m[j] * x;
        } else if (x < -zero_tol) {
            b += m[j];
            d += m[j] * x;
        } else {
            a += 0.5 * m[j];
            b += 0.5 * m[j];
        }
    }
    const auto [cp, cm] = side_multipliers(a, b, c, d);
    for (Index j = 0; j + 1 < n; ++j) {
        const double x = F.grid[j] + 0.5 * h;
        m[j] *= x > zero_tol ? cp : (x < -zero_tol ? cm : 0.5 * (cp + cm));
    }
    return cdf_from_cell_masses(F.grid, m);
}

HomogeneousPeriod calibrate_first_period(const Marginal& nu1, double T1, const Grid& grid,
                                         const FlowConfig& config) {
    if (!(T1 > 0.0)) throw Error(ErrorKind::nonpositive_time, "first period needs T1 > 0");
    const Index n = grid.size();
    const double s = 4.0 * grid.h * grid.h;
    if (!(s < T1)) throw Error(ErrorKind::invalid_argument, "grid too coarse for the first period");
    const PropagatorSpec spec{s, T1, config.n_steps, config.scheme, config.drift_cap};

    HomogeneousPeriod out;
    out.t_start = 0.0;
    out.t_end = T1;
    out.grid = grid;
    out.starts_at_point = true;
    out.F_start = MonotoneCdf{grid, Vector::Zero(n), {}};
    for (Index j = 0; j < n; ++j) out.F_start.values[j] = grid[j] >= 0.0 ? 1.0 : 0.0;
    out.status = ConvergenceStatus::max_iterations;

    DriftFn mu{grid, Vector::Zero(n)};
    FlowSlice f_prev;
    for (int it = 0; it <= config.max_iterations; ++it) {
        DensitySlice p = propagate_density(normal_density_on(grid, mu(0.0) * s, s), mu, spec);
        if (config.renormalize_first) p = mean_zero_renormalize(p);
        MonotoneCdf F = cdf_from_density(p);
        FlowSlice f = shaped_flow(nu1, F, config);
        if (!(f.values[n - 1] > f.values[0])) throw Error(ErrorKind::degenerate_marginal, "flat flow");
        DriftFn mu_new = capped_drift(f, config.drift_cap);

        out.F_end = std::move(F);
        if (it > 0) {
            const double rf = flow_residual(f, f_prev, config.policy.y_max);
            const double rm = (mu_new.values - mu.values).cwiseAbs().maxCoeff();
            out.log.push_back({it, rf, rm, 0.0});
        }
        f_prev = std::move(f);
        mu = std::move(mu_new);
        if (it > 0 && out.log.back().f_residual < config.tolerance && out.log.back().mu_residual < config.tolerance) {
            out.status = ConvergenceStatus::converged;
            break;
        }
    }
    check_stall(out.log, config, "first-period iteration");
    out.flow = std::move(f_prev);
    out.drift = std::move(mu);
    return out;
}

HomogeneousPeriod calibrate_period(const Marginal& nu_i, const Marginal& nu_ip1, double T_i, double T_ip1,
                                   const Grid& grid, const FlowConfig& config) {
    if (!(T_i > 0.0)) throw Error(ErrorKind::nonpositive_time, "later period needs T_i > 0");
    if (!(T_ip1 > T_i)) throw Error(ErrorKind::invalid_argument, "period needs T_i < T_{i+1}");
    require_convex_order(nu_i, nu_ip1);
    const Index n = grid.size();
    const PropagatorSpec spec{T_i, T_ip1, config.n_steps, config.scheme, config.drift_cap};

    HomogeneousPeriod out;
    out.t_start = T_i;
    out.t_end = T_ip1;
    out.grid = grid;
    out.status = ConvergenceStatus::max_iterations;

    MonotoneCdf F = normal_cdf_on(grid, 0.0, T_i);
    DriftFn mu{grid, Vector::Zero(n)};
    FlowSlice f = shaped_flow(nu_i, F, config);
    for (int it = 1; it <= config.max_iterations; ++it) {
        MonotoneCdf G = propagate_cdf(F, mu, spec);
        if (config.renormalize) G = mean_zero_renormalize(G);
        MonotoneCdf F_new = transfer_cdf(nu_i, nu_ip1, G);
        FlowSlice f_new = shaped_flow(nu_i, F_new, config);
        DriftFn mu_new = capped_drift(f_new, config.drift_cap);
        if (config.renormalize) bridge_seam(mu_new);

        const double rf = flow_residual(f_new, f, config.policy.y_max);
        const double rm = (mu_new.values - mu.values).cwiseAbs().maxCoeff();
        const double rF = (F_new.values - F.values).cwiseAbs().maxCoeff();
        out.log.push_back({it, rf, rm, rF});
        out.F_end = std::move(G);
        F = std::move(F_new);
        f = std::move(f_new);
        mu = std::move(mu_new);
        if (rf < config.tolerance && rm < config.tolerance && rF < config.tolerance) {
            out.status = ConvergenceStatus::converged;
            break;
        }
    }
    check_stall(out.log, config, "period iteration");
    out.F_start = std::move(F);
    out.flow = std::move(f);
    out.drift = std::move(mu);
    return out;
}

double marginal_match_error(const FlowSlice& f, const MonotoneCdf& F, const Marginal& nu, double q_lo,
                            double q_hi) {
    double err = 0.0;
    for (Index j = 0; j < F.values.size(); ++j) {
        const double q = F.values[j];
        if (q < q_lo || q > q_hi) continue;
        err = std::max(err, std::abs(f.values[j] - nu.quantile(q)));
    }
    return err;
}

}  // namespace markovflow
