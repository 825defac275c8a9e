#include "markovflow/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "markovflow/error.hpp"
#include "markovflow/parallel.hpp"

namespace markovflow {

const char* to_string(Scheme s) noexcept {
    switch (s) {
        case Scheme::bass_chl: return "bass-chl";
        case Scheme::homogeneous: return "homogeneous";
        case Scheme::continuous: return "continuous";
    }
    return "?";
}

Scheme scheme_from_string(const std::string& name) {
    if (name == "bass-chl") return Scheme::bass_chl;
    if (name == "homogeneous") return Scheme::homogeneous;
    if (name == "continuous") return Scheme::continuous;
    throw Error(ErrorKind::invalid_argument, "unknown scheme '" + name + "'");
}

void RunConfig::validate() const {
    if (grid_nt < 1 || grid_nx < 3 || !(grid_width > 0.0) || !(y_max > 0.0) || !(tolerance > 0.0) ||
        max_iterations < 1 || paths < 1) {
        throw Error(ErrorKind::invalid_argument, "run config values must be positive");
    }
}

nlohmann::json RunConfig::to_json() const {
    return {{"grid_nt", grid_nt},       {"grid_nx", grid_nx},     {"grid_width", grid_width},
            {"y_max", y_max},           {"tolerance", tolerance}, {"max_iterations", max_iterations},
            {"scheme", markovflow::to_string(scheme)}, {"rule", markovflow::to_string(rule)},
            {"seed", seed},             {"paths", paths},         {"window_lo", window_lo},
            {"window_hi", window_hi}};
}

std::string RunConfig::hash() const {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : to_json().dump()) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

FlowConfig RunConfig::flow_config() const {
    FlowConfig c;
    c.n_steps = grid_nt;
    c.tolerance = tolerance;
    c.max_iterations = max_iterations;
    c.policy.y_max = y_max;
    return c;
}

namespace {

Grid period_grid_for(const RunConfig& config, double t_end) {
    const double w = config.grid_width * std::sqrt(t_end);
    return build_uniform_grid(config.grid_nx, -w, w);
}

}  // namespace

CalibrationResult calibrate(const MarginalSet& set, const RunConfig& config) {
    config.validate();
    set.validate();
    const std::size_t n = set.size();
    const FlowConfig fc = config.flow_config();
    const auto& T = set.maturities;
    const auto& nu = set.marginals;

    CalibrationResult out;
    out.surface.spot = set.spot;
    out.surface.periods.resize(n);
    out.surface.continuous_boundary.assign(n > 0 ? n - 1 : 0, false);

    if (config.scheme == Scheme::continuous) {
        HomogeneousPeriod first = calibrate_first_period(*nu[0], T[0], period_grid_for(config, T[0]), fc);
        const Grid shared = period_grid_for(config, T[n - 1]);
        MonotoneCdf F = resample(first.F_end, shared);
        FlowSlice f = apply_extrapolation(resample(first.flow, shared), fc.policy, &F);
        out.surface.periods[0] = std::move(first);
        for (std::size_t i = 1; i < n; ++i) {
            ContinuousPeriod p = calibrate_continuous_period(F, f, *nu[i], T[i - 1], T[i], config.rule, fc, nu[i - 1].get());
            F = p.F_end;
            f = p.rule.f_ip1;
            out.surface.periods[i] = std::move(p);
            if (i >= 2) out.surface.continuous_boundary[i - 1] = true;
        }
    } else {
        parallel_for(n, [&](std::size_t begin, std::size_t end) {
            for (std::size_t i = begin; i < end; ++i) {
                const Grid g = period_grid_for(config, T[i]);
                if (config.scheme == Scheme::bass_chl) {
                    const BrownianConfig bc{config.tolerance, config.max_iterations, 1.0};
                    out.surface.periods[i] = i == 0 ? bass_first_period(*nu[0], T[0], g)
                                                    : chl_fixed_point(*nu[i - 1], *nu[i], T[i - 1], T[i], g, bc);
                } else {
                    out.surface.periods[i] = i == 0 ? calibrate_first_period(*nu[0], T[0], g, fc)
                                                    : calibrate_period(*nu[i - 1], *nu[i], T[i - 1], T[i], g, fc);
                }
            }
        });
    }

    for (std::size_t i = 0; i < n; ++i) {
        const auto& p = out.surface.periods[i];
        const int lo = config.window_lo >= 0 ? config.window_lo : (i == 0 ? 50 : 100);
        const int hi = config.window_hi >= 0 ? config.window_hi : (i == 0 ? 100 : 500);
        out.rates.push_back({i, lo, hi, estimate_rate(period_log(p), lo, hi, ResidualKind::flow)});
        if (period_status(p) != ConvergenceStatus::converged) out.converged = false;
    }
    return out;
}

MonotoneCdf period_end_law(const CalibratedPeriod& period, const FlowConfig& config) {
    if (const auto* b = std::get_if<BrownianPeriod>(&period)) {
        const double tau = b->t_end - b->t_start;
        if (b->starts_at_point) return normal_cdf_on(b->grid, 0.0, tau);
        MonotoneCdf G{b->grid, heat_convolve(b->grid, b->start_law.values, tau), {}};
        double run = 0.0;
        for (Index j = 0; j < G.values.size(); ++j) G.values[j] = run = std::max(run, std::clamp(G.values[j], 0.0, 1.0));
        return G;
    }
    if (const auto* h = std::get_if<HomogeneousPeriod>(&period)) {
        if (h->starts_at_point) {
            const double s = 4.0 * h->grid.h * h->grid.h;
            const PropagatorSpec spec{s, h->t_end, config.n_steps, config.scheme, config.drift_cap};
            DensitySlice p = propagate_density(normal_density_on(h->grid, h->drift(0.0) * s, s), h->drift, spec);
            if (config.renormalize_first) p = mean_zero_renormalize(p);
            return cdf_from_density(p);
        }
        const PropagatorSpec spec{h->t_start, h->t_end, config.n_steps, config.scheme, config.drift_cap};
        return propagate_cdf(h->F_start, h->drift, spec);
    }
    const auto& c = std::get<ContinuousPeriod>(period);
    const PropagatorSpec spec{c.t_start, c.t_end, static_cast<int>(c.drift.size()), config.scheme, config.drift_cap};
    return propagate_cdf(c.F_start, c.drift, spec);
}

double pushforward_quantile_error(const CalibratedPeriod& period, const Marginal& nu, const FlowConfig& config,
                                  double q_lo, double q_hi) {
    const MonotoneCdf G = period_end_law(period, config);
    const FlowSlice f = period_flow(period, period_end(period));
    double err = 0.0;
    for (Index j = 0; j < G.values.size(); ++j) {
        const double q = G.values[j];
        if (q < q_lo || q > q_hi) continue;
        const double target = q > 0.5 ? nu.upper_quantile(G.survival(j)) : nu.quantile(q);
        err = std::max(err, std::abs(f.values[j] - target));
    }
    return err;
}

void write_log_csv(std::ostream& out, const IterationLog& log) {
    out << "iteration,f_residual,mu_residual,cdf_residual\n";
    char buf[128];
    for (const auto& r : log) {
        std::snprintf(buf, sizeof buf, "%d,%.10e,%.10e,%.10e\n", r.iteration, r.f_residual, r.mu_residual, r.cdf_residual);
        out << buf;
    }
}

void write_rates_csv(std::ostream& out, const CalibrationResult& result) {
    out << "period,t_start,t_end,kind,iterations,status,window_lo,window_hi,rate\n";
    for (const auto& r : result.rates) {
        const auto& p = result.surface.periods[r.period];
        out << r.period << ',' << period_start(p) << ',' << period_end(p) << ',' << period_kind(p) << ','
            << period_log(p).size() << ',' << to_string(period_status(p)) << ',' << r.window_lo << ',' << r.window_hi
            << ',';
        if (r.rate) out << *r.rate;
        out << '\n';
    }
}

void write_surface_csv(std::ostream& out, const std::vector<SurfaceRow>& rows) {
    out << "t,y,sigma_loc,period_kind\n";
    char buf[160];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10g,", r.t, r.y, r.sigma_loc);
        out << buf << r.period_kind << '\n';
    }
}

}  // namespace markovflow
