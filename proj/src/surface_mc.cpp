#include "markovflow/surface_mc.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>
#include <random>

#include <boost/math/tools/roots.hpp>
#include <boost/numeric/odeint.hpp>

#include "markovflow/error.hpp"
#include "markovflow/parallel.hpp"

namespace markovflow {

namespace {

constexpr double kTimeTol = 1e-12;

template <class... Fs>
struct Overloaded : Fs... {
    using Fs::operator()...;
};
template <class... Fs>
Overloaded(Fs...) -> Overloaded<Fs...>;

const Grid& period_grid(const CalibratedPeriod& p) noexcept {
    return std::visit([](const auto& q) -> const Grid& { return q.grid; }, p);
}

// f'(f^{-1}(y)) from precomputed nodal slopes, linear tails beyond the grid.
double slope_at(const FlowSlice& f, const Vector& d, double y) {
    const Index n = f.values.size();
    if (y <= f.values[0]) return (f.values[1] - f.values[0]) / f.grid.h;
    if (y >= f.values[n - 1]) return (f.values[n - 1] - f.values[n - 2]) / f.grid.h;
    const double x = f.inverse(y).x;
    return DriftFn{f.grid, d}(x);
}

}  // namespace

double period_start(const CalibratedPeriod& p) noexcept {
    return std::visit([](const auto& q) { return q.t_start; }, p);
}

double period_end(const CalibratedPeriod& p) noexcept {
    return std::visit([](const auto& q) { return q.t_end; }, p);
}

const char* period_kind(const CalibratedPeriod& p) noexcept {
    return std::visit(Overloaded{[](const BrownianPeriod&) { return "brownian"; },
                                 [](const HomogeneousPeriod&) { return "homogeneous"; },
                                 [](const ContinuousPeriod&) { return "continuous"; }},
                      p);
}

const IterationLog& period_log(const CalibratedPeriod& p) noexcept {
    return std::visit([](const auto& q) -> const IterationLog& { return q.log; }, p);
}

ConvergenceStatus period_status(const CalibratedPeriod& p) noexcept {
    return std::visit([](const auto& q) { return q.status; }, p);
}

FlowSlice period_flow(const CalibratedPeriod& p, double t) {
    if (t < period_start(p) - kTimeTol || t > period_end(p) + kTimeTol) {
        throw Error(ErrorKind::time_out_of_period, "t = " + std::to_string(t) + " outside the period");
    }
    t = std::clamp(t, period_start(p), period_end(p));
    return std::visit(Overloaded{[&](const BrownianPeriod& q) { return brownian_flow_at(q, t); },
                                 [&](const HomogeneousPeriod& q) { return q.flow; },
                                 [&](const ContinuousPeriod& q) { return interp_flow(q.rule, t); }},
                      p);
}

DriftFn period_drift(const CalibratedPeriod& p, double t) {
    return std::visit(Overloaded{[&](const BrownianPeriod& q) { return DriftFn{q.grid, Vector::Zero(q.grid.size())}; },
                                 [&](const HomogeneousPeriod& q) { return q.drift; },
                                 [&](const ContinuousPeriod& q) {
                                     const int m = static_cast<int>(q.drift.size());
                                     const double dt = (q.t_end - q.t_start) / m;
                                     const int k = dt > 0.0 ? std::clamp(static_cast<int>((t - q.t_start) / dt), 0, m - 1) : 0;
                                     return DriftFn{q.grid, q.drift[k]};
                                 }},
                      p);
}

void ModelSurface::validate() const {
    if (periods.empty()) throw Error(ErrorKind::invalid_argument, "model has no periods");
    if (std::abs(period_start(periods.front())) > kTimeTol) {
        throw Error(ErrorKind::invalid_argument, "first period must start at 0");
    }
    for (std::size_t k = 0; k < periods.size(); ++k) {
        if (!(period_end(periods[k]) > period_start(periods[k]))) {
            throw Error(ErrorKind::invalid_argument, "period " + std::to_string(k) + " is empty");
        }
        if (k > 0 && std::abs(period_start(periods[k]) - period_end(periods[k - 1])) > kTimeTol) {
            throw Error(ErrorKind::invalid_argument, "periods do not partition the time axis");
        }
    }
    if (!continuous_boundary.empty() && continuous_boundary.size() + 1 != periods.size()) {
        throw Error(ErrorKind::invalid_argument, "boundary flags do not match the period count");
    }
}

std::vector<double> ModelSurface::maturities() const {
    std::vector<double> out;
    for (const auto& p : periods) out.push_back(period_end(p));
    return out;
}

std::size_t ModelSurface::period_index(double t) const {
    for (std::size_t k = 0; k < periods.size(); ++k) {
        if (t <= period_end(periods[k]) + kTimeTol) {
            if (t < period_start(periods[k]) - kTimeTol) break;
            return k;
        }
    }
    throw Error(ErrorKind::time_out_of_period, "t = " + std::to_string(t) + " outside the model");
}

double LocalVolCurve::operator()(double y_value) const noexcept { return interp_linear(y, sigma, y_value); }

LocalVolCurve local_vol_from_flow(const FlowSlice& f) {
    const Index lo = std::max<Index>(f.active_lo, 0);
    const Index hi = f.last_active();
    if (hi - lo < 2) throw Error(ErrorKind::non_invertible_flow, "active region too small");
    const Vector d = diff1(f.values, f.grid.h);
    for (Index j = lo; j <= hi; ++j) {
        if (!(d[j] > 0.0) || (j > lo && !(f.values[j] > f.values[j - 1]))) {
            throw Error(ErrorKind::non_invertible_flow, "flow not strictly increasing at x = " + std::to_string(f.grid[j]));
        }
    }
    return {f.values.segment(lo, hi - lo + 1), d.segment(lo, hi - lo + 1)};
}

LocalVolCurve clip_to_strikes(const LocalVolCurve& curve, double k_min, double k_max) {
    const double a = 0.85 * k_min, b = 1.15 * k_max;
    std::vector<Index> keep;
    for (Index j = 0; j < curve.y.size(); ++j) {
        if (curve.y[j] >= a && curve.y[j] <= b) keep.push_back(j);
    }
    LocalVolCurve out{Vector(keep.size()), Vector(keep.size())};
    for (std::size_t i = 0; i < keep.size(); ++i) {
        out.y[i] = curve.y[keep[i]];
        out.sigma[i] = curve.sigma[keep[i]];
    }
    return out;
}

double local_vol_at(const FlowSlice& f, double y) { return slope_at(f, diff1(f.values, f.grid.h), y); }

FlowSlice flow_from_local_vol(const std::function<double(double)>& sigma, const Grid& grid, double x0, double s0) {
    namespace odeint = boost::numeric::odeint;
    using State = std::vector<double>;
    const Index n = grid.size();
    FlowSlice out(grid, Vector(n));

    // direction = +1 integrates f' = sigma(f) to the right, -1 integrates in u = -x to the left.
    auto sweep = [&](int direction) {
        std::vector<double> times{direction * x0};
        std::vector<Index> nodes;
        for (Index k = 0; k < n; ++k) {
            const Index j = direction > 0 ? k : n - 1 - k;
            if (direction * grid[j] > direction * x0) {
                times.push_back(direction * grid[j]);
                nodes.push_back(j);
            } else if (grid[j] == x0) {
                out.values[j] = s0;
            }
        }
        if (nodes.empty()) return;
        auto rhs = [&](const State& s, State& ds, double) {
            const double v = sigma(s[0]);
            if (!(v > 0.0) || !std::isfinite(v)) {
                throw Error(ErrorKind::vanishing_volatility, "local vol not positive at f = " + std::to_string(s[0]));
            }
            ds[0] = direction * v;
        };
        std::size_t seen = 0;
        auto observe = [&](const State& s, double) {
            if (seen > 0) out.values[nodes[seen - 1]] = s[0];
            ++seen;
        };
        State state{s0};
        auto stepper = odeint::make_dense_output(1e-12, 1e-12, odeint::runge_kutta_dopri5<State>());
        odeint::integrate_times(stepper, rhs, state, times.begin(), times.end(), 0.1 * grid.h, observe);
    };
    sweep(1);
    sweep(-1);
    return out;
}

FlowSlice bbf_short_flow(const std::function<double(double)>& implied_normal_vol, const Grid& grid, double s0,
                         double x0) {
    const Index n = grid.size();
    FlowSlice out(grid, Vector(n));
    auto vol = [&](double f) {
        const double v = implied_normal_vol(f);
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw Error(ErrorKind::bracket_failure, "implied vol not positive at f = " + std::to_string(f));
        }
        return v;
    };
    const double v0 = vol(s0);
    for (Index j = 0; j < n; ++j) {
        const double d = grid[j] - x0;
        if (d == 0.0) {
            out.values[j] = s0;
            continue;
        }
        auto g = [&](double f) { return f - s0 - d * vol(f); };
        double step = std::abs(d) * v0;
        double b = s0 + std::copysign(step, d);
        double gb = g(b);
        int tries = 0;
        while ((d > 0.0 ? gb < 0.0 : gb > 0.0) && tries++ < 60) {
            step *= 2.0;
            b = s0 + std::copysign(step, d);
            gb = g(b);
        }
        if (tries > 60) throw Error(ErrorKind::bracket_failure, "no bracket at x = " + std::to_string(grid[j]));
        const double a = s0;
        const double ga = g(a);
        if (gb == 0.0) {
            out.values[j] = b;
            continue;
        }
        std::uintmax_t iters = 200;
        const auto r = d > 0.0 ? boost::math::tools::toms748_solve(g, a, b, ga, gb, boost::math::tools::eps_tolerance<double>(50), iters)
                               : boost::math::tools::toms748_solve(g, b, a, gb, ga, boost::math::tools::eps_tolerance<double>(50), iters);
        out.values[j] = 0.5 * (r.first + r.second);
    }
    // Regularity over the covered range and the at-the-money line: an interior
    // zero of the skew is fatal even where the flow saturates before reaching it.
    const double lo = std::min(out.values.minCoeff(), s0 + v0 * (grid.lo - x0));
    const double hi = std::max(out.values.maxCoeff(), s0 + v0 * (grid.hi - x0));
    for (int k = 0; k <= 1000; ++k) vol(lo + (hi - lo) * k / 1000.0);
    return out;
}

PathSet simulate(const ModelSurface& surface, const SimulationConfig& config) {
    surface.validate();
    if (config.n_paths == 0 || config.steps_per_period < 1) {
        throw Error(ErrorKind::invalid_argument, "simulation needs paths and steps");
    }
    const std::size_t P = surface.periods.size();
    const int m = config.steps_per_period;

    struct Plan {
        double t0, dt;
        std::vector<DriftFn> drift;  // per step; empty for brownian periods
        FlowSlice end_flow;
        FlowSlice next_start;
        bool stitch = false;
    };
    std::vector<Plan> plans(P);
    for (std::size_t k = 0; k < P; ++k) {
        const auto& p = surface.periods[k];
        Plan& plan = plans[k];
        plan.t0 = period_start(p);
        plan.dt = (period_end(p) - plan.t0) / m;
        if (std::holds_alternative<HomogeneousPeriod>(p)) {
            plan.drift.assign(1, std::get<HomogeneousPeriod>(p).drift);
        } else if (std::holds_alternative<ContinuousPeriod>(p)) {
            for (int s = 0; s < m; ++s) plan.drift.push_back(period_drift(p, plan.t0 + (s + 0.5) * plan.dt));
        }
        plan.end_flow = period_flow(p, period_end(p));
        if (k + 1 < P) {
            plan.stitch = surface.continuous_boundary.empty() || !surface.continuous_boundary[k];
            if (plan.stitch) plan.next_start = period_flow(surface.periods[k + 1], period_end(p));
        }
    }

    PathSet out;
    out.n_paths = config.n_paths;
    out.steps_per_period = m;
    out.seed = config.seed;
    out.maturities = surface.maturities();
    out.snapshots.resize(static_cast<Index>(P), static_cast<Index>(config.n_paths));
    std::mutex merge;

    parallel_for(config.n_paths, [&](std::size_t begin, std::size_t end) {
        std::size_t clamped = 0;
        double residual = 0.0;
        for (std::size_t path = begin; path < end; ++path) {
            std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                              static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32)};
            std::mt19937_64 rng(seq);
            std::normal_distribution<double> normal;
            double x = 0.0;
            for (std::size_t k = 0; k < P; ++k) {
                const Plan& plan = plans[k];
                const double sq = std::sqrt(plan.dt);
                for (int s = 0; s < m; ++s) {
                    double mu = 0.0;
                    if (!plan.drift.empty()) mu = plan.drift[plan.drift.size() == 1 ? 0 : s](x);
                    x += mu * plan.dt + sq * normal(rng);
                }
                const double y = plan.end_flow(x);
                out.snapshots(static_cast<Index>(k), static_cast<Index>(path)) = y;
                if (!plan.stitch) continue;
                const auto inv = plan.next_start.inverse(y);
                x = inv.x;
                if (inv.clamped) {
                    ++clamped;
                } else {
                    residual = std::max(residual, std::abs(plan.next_start(x) - y));
                }
            }
        }
        std::lock_guard<std::mutex> lock(merge);
        out.clamped_stitches += clamped;
        out.max_stitch_residual = std::max(out.max_stitch_residual, residual);
    });
    if (out.clamped_stitches > 0) {
        warn(std::to_string(out.clamped_stitches) + " stitches clamped to the grid edge");
    }
    return out;
}

double ks_distance(std::vector<double> samples, const Marginal& target) {
    if (samples.empty()) throw Error(ErrorKind::invalid_argument, "no samples");
    std::sort(samples.begin(), samples.end());
    const double n = static_cast<double>(samples.size());
    double d = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double F = target.cdf(samples[i]);
        d = std::max({d, (i + 1) / n - F, F - i / n});
    }
    return d;
}

std::vector<MaturitySummary> summarize(const PathSet& paths, const MarginalSet* targets) {
    if (targets && targets->size() != paths.maturities.size()) {
        throw Error(ErrorKind::invalid_argument, "target set does not match the simulated maturities");
    }
    std::vector<MaturitySummary> out;
    const double n = static_cast<double>(paths.n_paths);
    for (std::size_t i = 0; i < paths.maturities.size(); ++i) {
        const Vector row = paths.snapshots.row(static_cast<Index>(i)).transpose();
        MaturitySummary s;
        s.maturity = paths.maturities[i];
        s.mean = row.mean();
        const double var = (row.array() - s.mean).square().sum() / std::max(n - 1.0, 1.0);
        s.stderr_mean = std::sqrt(var / n);
        if (targets) s.ks = ks_distance(std::vector<double>(row.data(), row.data() + row.size()), *targets->marginals[i]);
        out.push_back(s);
    }
    return out;
}

std::vector<SurfaceRow> export_surface(const ModelSurface& surface, const std::vector<double>& t_grid,
                                       const std::vector<double>& y_grid) {
    std::vector<SurfaceRow> rows;
    for (double t : t_grid) {
        const auto& p = surface.periods[surface.period_index(t)];
        const FlowSlice f = period_flow(p, t);
        const Vector d = diff1(f.values, f.grid.h);
        for (double y : y_grid) rows.push_back({t, y, slope_at(f, d, y), period_kind(p)});
    }
    return rows;
}

std::vector<SurfaceRow> de_reference_surface(const std::vector<double>& t_grid, const std::vector<double>& y_grid) {
    std::vector<SurfaceRow> rows;
    for (double t : t_grid) {
        if (!(t > 0.0)) throw Error(ErrorKind::nonpositive_time, "reference surface needs t > 0");
        for (double y : y_grid) rows.push_back({t, y, de_local_vol(t, y), "reference"});
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Serialization.

namespace {

using nlohmann::json;

json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vec_from(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

json grid_json(const Grid& g) { return {{"n", g.size()}, {"lo", g.lo}, {"hi", g.hi}}; }

Grid grid_from(const json& j) { return build_uniform_grid(j.at("n").get<Index>(), j.at("lo"), j.at("hi")); }

json flow_json(const FlowSlice& f) {
    return {{"values", vec_json(f.values)}, {"active_lo", f.active_lo}, {"active_hi", f.active_hi}};
}

FlowSlice flow_from(const json& j, const Grid& g) {
    FlowSlice f(g, vec_from(j.at("values")));
    f.active_lo = j.at("active_lo");
    f.active_hi = j.at("active_hi");
    if (f.values.size() != g.size()) throw Error(ErrorKind::parse_error, "flow size differs from grid");
    return f;
}

json cdf_json(const MonotoneCdf& F) {
    json j{{"values", vec_json(F.values)}};
    if (F.upper.size()) j["upper"] = vec_json(F.upper);
    return j;
}

MonotoneCdf cdf_from(const json& j, const Grid& g) {
    MonotoneCdf F{g, vec_from(j.at("values")), {}};
    if (j.contains("upper")) F.upper = vec_from(j["upper"]);
    return F;
}

ConvergenceStatus status_from(const json& j) {
    return j.get<std::string>() == to_string(ConvergenceStatus::converged) ? ConvergenceStatus::converged
                                                                          : ConvergenceStatus::max_iterations;
}

json period_json(const CalibratedPeriod& p) {
    json j{{"kind", period_kind(p)},
           {"t_start", period_start(p)},
           {"t_end", period_end(p)},
           {"grid", grid_json(period_grid(p))},
           {"status", to_string(period_status(p))}};
    std::visit(Overloaded{[&](const BrownianPeriod& q) {
                              j["starts_at_point"] = q.starts_at_point;
                              j["start_law"] = cdf_json(q.start_law);
                              j["terminal_flow"] = flow_json(q.terminal_flow);
                              j["start_flow"] = flow_json(q.start_flow);
                          },
                          [&](const HomogeneousPeriod& q) {
                              j["starts_at_point"] = q.starts_at_point;
                              j["flow"] = flow_json(q.flow);
                              j["drift"] = vec_json(q.drift.values);
                              j["F_start"] = cdf_json(q.F_start);
                              j["F_end"] = cdf_json(q.F_end);
                          },
                          [&](const ContinuousPeriod& q) {
                              j["rule"] = to_string(q.rule.kind);
                              j["f_start"] = flow_json(q.rule.f_i);
                              j["f_end"] = flow_json(q.rule.f_ip1);
                              json d = json::array();
                              for (const auto& v : q.drift) d.push_back(vec_json(v));
                              j["drift"] = std::move(d);
                              j["F_start"] = cdf_json(q.F_start);
                              j["F_end"] = cdf_json(q.F_end);
                          }},
               p);
    return j;
}

CalibratedPeriod period_from(const json& j) {
    const std::string kind = j.at("kind");
    const Grid g = grid_from(j.at("grid"));
    const double t0 = j.at("t_start"), t1 = j.at("t_end");
    const ConvergenceStatus status = status_from(j.at("status"));
    if (kind == "brownian") {
        BrownianPeriod q;
        q.t_start = t0;
        q.t_end = t1;
        q.grid = g;
        q.status = status;
        q.starts_at_point = j.at("starts_at_point");
        q.start_law = cdf_from(j.at("start_law"), g);
        q.terminal_flow = flow_from(j.at("terminal_flow"), g);
        q.start_flow = flow_from(j.at("start_flow"), g);
        return q;
    }
    if (kind == "homogeneous") {
        HomogeneousPeriod q;
        q.t_start = t0;
        q.t_end = t1;
        q.grid = g;
        q.status = status;
        q.starts_at_point = j.at("starts_at_point");
        q.flow = flow_from(j.at("flow"), g);
        q.drift = DriftFn{g, vec_from(j.at("drift"))};
        q.F_start = cdf_from(j.at("F_start"), g);
        q.F_end = cdf_from(j.at("F_end"), g);
        return q;
    }
    if (kind == "continuous") {
        ContinuousPeriod q;
        q.t_start = t0;
        q.t_end = t1;
        q.grid = g;
        q.status = status;
        q.rule = {term_structure_from_string(j.at("rule")), t0, t1, flow_from(j.at("f_start"), g),
                  flow_from(j.at("f_end"), g)};
        for (const auto& v : j.at("drift")) q.drift.push_back(vec_from(v));
        if (q.drift.empty()) throw Error(ErrorKind::parse_error, "continuous period without drift");
        q.F_start = cdf_from(j.at("F_start"), g);
        q.F_end = cdf_from(j.at("F_end"), g);
        return q;
    }
    throw Error(ErrorKind::parse_error, "unknown period kind '" + kind + "'");
}

}  // namespace

nlohmann::json to_json(const ModelSurface& surface) {
    json periods = json::array();
    for (const auto& p : surface.periods) periods.push_back(period_json(p));
    return {{"format", "markovflow-model"},
            {"spot", surface.spot},
            {"continuous_boundary", surface.continuous_boundary},
            {"periods", std::move(periods)}};
}

ModelSurface model_surface_from_json(const nlohmann::json& j) {
    try {
        if (j.value("format", "") != "markovflow-model") throw Error(ErrorKind::parse_error, "not a model file");
        ModelSurface s;
        s.spot = j.at("spot");
        s.continuous_boundary = j.at("continuous_boundary").get<std::vector<bool>>();
        for (const auto& p : j.at("periods")) s.periods.push_back(period_from(p));
        s.validate();
        return s;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::parse_error, e.what());
    }
}

}  // namespace markovflow
