#include "markovflow/continuous_flow.hpp"

#include <algorithm>
#include <cmath>

#include "markovflow/brownian_flow.hpp"
#include "markovflow/error.hpp"
#include "flow_detail.hpp"

namespace markovflow {

using namespace detail;

const char* to_string(TermStructureKind kind) noexcept {
    return kind == TermStructureKind::log_linear ? "log-linear" : "inverse-sqrt";
}

TermStructureKind term_structure_from_string(const std::string& name) {
    if (name == "inverse-sqrt") return TermStructureKind::inverse_sqrt;
    if (name == "log-linear") return TermStructureKind::log_linear;
    throw Error(ErrorKind::invalid_argument, "unknown term-structure rule '" + name + "'");
}

std::pair<double, double> inverse_sqrt_weights(double T_i, double T_ip1, double t) {
    if (!(T_i > 0.0)) throw Error(ErrorKind::nonpositive_time, "term structure needs T_i > 0");
    if (!(t >= T_i && t <= T_ip1)) throw Error(ErrorKind::time_out_of_period, "t outside [T_i, T_ip1]");
    if (T_ip1 == T_i) return {1.0, 0.0};
    const double a = std::sqrt(T_i), b = std::sqrt(T_ip1);
    const double w = std::clamp((std::sqrt(T_i * T_ip1 / t) - a) / (b - a), 0.0, 1.0);
    return {w, 1.0 - w};
}

namespace {

void check_rule(const TermStructureRule& rule, double t) {
    if (rule.f_i.values.size() != rule.f_ip1.values.size()) {
        throw Error(ErrorKind::invalid_argument, "term-structure slices differ in size");
    }
    if (!(rule.T_i > 0.0)) throw Error(ErrorKind::nonpositive_time, "term structure needs T_i > 0");
    if (!(t >= rule.T_i && t <= rule.T_ip1)) {
        throw Error(ErrorKind::time_out_of_period, "t = " + std::to_string(t) + " outside the period");
    }
    if (rule.kind == TermStructureKind::log_linear &&
        (rule.f_i.values.minCoeff() <= 0.0 || rule.f_ip1.values.minCoeff() <= 0.0)) {
        throw Error(ErrorKind::invalid_argument, "log-linear rule needs positive flow slices");
    }
}

// Fraction of the way from T_i to T_ip1 for the log-linear rule.
double time_fraction(const TermStructureRule& rule, double t) {
    return rule.T_ip1 > rule.T_i ? (t - rule.T_i) / (rule.T_ip1 - rule.T_i) : 0.0;
}

}  // namespace

FlowSlice interp_flow(const TermStructureRule& rule, double t) {
    check_rule(rule, t);
    FlowSlice out = rule.f_i;
    out.active_lo = std::max(rule.f_i.active_lo, rule.f_ip1.active_lo);
    out.active_hi = std::min(rule.f_i.last_active(), rule.f_ip1.last_active());
    if (rule.kind == TermStructureKind::inverse_sqrt) {
        const auto [wa, wb] = inverse_sqrt_weights(rule.T_i, rule.T_ip1, t);
        out.values = wa * rule.f_i.values + wb * rule.f_ip1.values;
    } else {
        const double u = time_fraction(rule, t);
        out.values = ((1.0 - u) * rule.f_i.values.array().log() + u * rule.f_ip1.values.array().log()).exp();
    }
    return out;
}

Vector flow_time_derivative(const TermStructureRule& rule, double t) {
    check_rule(rule, t);
    if (rule.T_ip1 == rule.T_i) return Vector::Zero(rule.f_i.values.size());
    if (rule.kind == TermStructureKind::inverse_sqrt) {
        const double dw = -0.5 * std::sqrt(rule.T_i * rule.T_ip1) * std::pow(t, -1.5) /
                          (std::sqrt(rule.T_ip1) - std::sqrt(rule.T_i));
        return dw * (rule.f_i.values - rule.f_ip1.values);
    }
    const Vector f = interp_flow(rule, t).values;
    const Vector dlog = (rule.f_ip1.values.array().log() - rule.f_i.values.array().log()).matrix();
    return f.cwiseProduct(dlog) / (rule.T_ip1 - rule.T_i);
}

DriftFn drift_from_flow_td(const TermStructureRule& rule, double t) {
    const FlowSlice f = interp_flow(rule, t);
    const Vector ft = flow_time_derivative(rule, t);
    const Index n = f.values.size();
    const double h = f.grid.h;
    DriftFn mu{f.grid, Vector::Zero(n)};
    for (Index j = std::max<Index>(f.active_lo + 1, 1); j < std::min(f.last_active(), n - 1); ++j) {
        const double d1 = (f.values[j + 1] - f.values[j - 1]) / (2.0 * h);
        if (!(d1 > 1e-10)) continue;
        const double d2 = (f.values[j + 1] - 2.0 * f.values[j] + f.values[j - 1]) / (h * h);
        mu.values[j] = -(ft[j] + 0.5 * d2) / d1;
    }
    return mu;
}

double ContinuousPeriod::step_time(int k) const noexcept {
    const double dt = (t_end - t_start) / static_cast<double>(drift.size());
    return t_start + (k + 0.5) * dt;
}

ContinuousPeriod calibrate_continuous_period(const MonotoneCdf& prev_F, const FlowSlice& prev_f,
                                             const Marginal& nu_ip1, double T_i, double T_ip1,
                                             TermStructureKind kind, const FlowConfig& config,
                                             const Marginal* nu_i) {
    if (!(T_i > 0.0)) throw Error(ErrorKind::nonpositive_time, "continuous period needs T_i > 0");
    if (!(T_ip1 >= T_i)) throw Error(ErrorKind::invalid_argument, "period needs T_i <= T_{i+1}");
    if (prev_F.values.size() != prev_f.values.size()) {
        throw Error(ErrorKind::invalid_argument, "previous law and flow live on different grids");
    }
    if (nu_i) require_convex_order(*nu_i, nu_ip1);

    const Grid& grid = prev_F.grid;
    const Index n = grid.size();
    ContinuousPeriod out;
    out.t_start = T_i;
    out.t_end = T_ip1;
    out.grid = grid;
    out.rule = {kind, T_i, T_ip1, prev_f, prev_f};
    out.F_start = prev_F;
    out.F_end = prev_F;
    if (T_ip1 == T_i) {
        out.drift.assign(1, Vector::Zero(n));
        return out;
    }

    const PropagatorSpec spec{T_i, T_ip1, config.n_steps, config.scheme, config.drift_cap};
    out.drift.assign(config.n_steps, Vector::Zero(n));
    out.status = ConvergenceStatus::max_iterations;
    FlowSlice f_prev;
    for (int it = 0; it <= config.max_iterations; ++it) {
        MonotoneCdf G = propagate_cdf(prev_F, out.drift, spec);
        FlowSlice f_next = shaped_flow(nu_ip1, G, config);
        TermStructureRule rule{kind, T_i, T_ip1, prev_f, f_next};
        DriftSchedule mu(config.n_steps);
        double rm = 0.0;
        for (int k = 0; k < config.n_steps; ++k) {
            mu[k] = drift_from_flow_td(rule, out.step_time(k)).values.cwiseMax(-config.drift_cap).cwiseMin(config.drift_cap);
            rm = std::max(rm, (mu[k] - out.drift[k]).cwiseAbs().maxCoeff());
        }
        if (it > 0) {
            const double rf = flow_residual(f_next, f_prev, config.policy.y_max);
            const double rF = (G.values - out.F_end.values).cwiseAbs().maxCoeff();
            out.log.push_back({it, rf, rm, rF});
        }
        out.F_end = std::move(G);
        out.rule = std::move(rule);
        out.drift = std::move(mu);
        f_prev = std::move(f_next);
        if (it > 0 && out.log.back().f_residual < config.tolerance) {
            out.status = ConvergenceStatus::converged;
            break;
        }
    }
    check_stall(out.log, config, "continuous-period iteration");
    return out;
}

}  // namespace markovflow
