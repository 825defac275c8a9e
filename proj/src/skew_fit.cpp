#include "markovflow/skew_fit.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <sstream>

#include <unsupported/Eigen/NonLinearOptimization>
#include <unsupported/Eigen/NumericalDiff>

#include "markovflow/error.hpp"
#include "markovflow/normal.hpp"
#include "markovflow/tridiagonal.hpp"

namespace markovflow {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        cell.erase(0, cell.find_first_not_of(" \t\r"));
        cell.erase(cell.find_last_not_of(" \t\r") + 1);
        out.push_back(cell);
    }
    return out;
}

double parse_number(const std::string& s, std::size_t line) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorKind::parse_error, "line " + std::to_string(line) + ": bad number '" + s + "'");
    }
}

// Residual functor for Eigen's Levenberg-Marquardt with forward-difference Jacobian.
struct Residuals {
    using Scalar = double;
    enum { InputsAtCompileTime = Eigen::Dynamic, ValuesAtCompileTime = Eigen::Dynamic };
    using InputType = Vector;
    using ValueType = Vector;
    using JacobianType = Eigen::MatrixXd;

    std::function<void(const Vector&, Vector&)> fn;
    int n_inputs;
    int n_values;

    int inputs() const { return n_inputs; }
    int values() const { return n_values; }
    int operator()(const Vector& x, Vector& r) const {
        r.setZero(n_values);
        fn(x, r);
        if (!r.allFinite()) r.setConstant(1e10);
        return 0;
    }
};

struct LmResult {
    Vector x;
    double objective;
    bool ok;
};

// `m` residuals written by `fn` into the head of the vector; padded with zeros so
// that minpack sees at least as many residuals as unknowns.
LmResult least_squares(const std::function<void(const Vector&, Vector&)>& fn, Vector x, int m, int max_evaluations) {
    Residuals f{fn, static_cast<int>(x.size()), std::max(m, static_cast<int>(x.size()))};
    Eigen::NumericalDiff<Residuals> diff(f);
    Eigen::LevenbergMarquardt<Eigen::NumericalDiff<Residuals>> lm(diff);
    lm.parameters.maxfev = max_evaluations;
    lm.parameters.xtol = 1e-12;
    lm.parameters.ftol = 1e-16;
    const auto status = lm.minimize(x);
    Vector r;
    f(x, r);
    const bool ok = status != Eigen::LevenbergMarquardtSpace::ImproperInputParameters &&
                    status != Eigen::LevenbergMarquardtSpace::TooManyFunctionEvaluation && x.allFinite();
    return {x, r.squaredNorm(), ok};
}

// Unconstrained coordinates: logits z_1..z_{n-1} (z_0 = 0), log forward multipliers,
// log of vol above the floor. Forwards are rescaled so that sum w_j F_j equals the forward exactly.
MlnParams decode(const Vector& x, int n, double forward, double vol_floor) {
    MlnParams p;
    p.weights.resize(n);
    p.forwards.resize(n);
    p.vols.resize(n);
    double zmax = 0.0;
    for (int j = 1; j < n; ++j) zmax = std::max(zmax, x[j - 1]);
    double total = 0.0;
    for (int j = 0; j < n; ++j) {
        p.weights[j] = std::exp((j == 0 ? 0.0 : x[j - 1]) - zmax);
        total += p.weights[j];
    }
    double mean = 0.0;
    for (int j = 0; j < n; ++j) {
        p.weights[j] /= total;
        p.forwards[j] = std::exp(std::clamp(x[n - 1 + j], -20.0, 20.0));
        mean += p.weights[j] * p.forwards[j];
    }
    for (int j = 0; j < n; ++j) {
        p.forwards[j] *= forward / mean;
        p.vols[j] = std::min(vol_floor + std::exp(std::min(x[2 * n - 1 + j], 5.0)), 10.0);
    }
    return p;
}

Vector encode(const MlnParams& p, double vol_floor) {
    const int n = static_cast<int>(p.n_modes());
    Vector x(3 * n - 1);
    for (int j = 1; j < n; ++j) x[j - 1] = std::log(std::max(p.weights[j], 1e-300) / std::max(p.weights[0], 1e-300));
    for (int j = 0; j < n; ++j) {
        x[n - 1 + j] = std::log(p.forwards[j]);
        x[2 * n - 1 + j] = std::log(std::max(p.vols[j] - vol_floor, 0.5 * vol_floor + 1e-8));
    }
    return x;
}

double interp_log_strike(const CallSlice& c, double k) {
    const Index n = c.strikes.size();
    if (k <= c.strikes[0]) return c.calls[0];
    if (k >= c.strikes[n - 1]) return c.calls[n - 1];
    const Index j = (std::upper_bound(c.strikes.data(), c.strikes.data() + n, k) - c.strikes.data()) - 1;
    const double w = std::log(k / c.strikes[j]) / std::log(c.strikes[j + 1] / c.strikes[j]);
    return (1.0 - w) * c.calls[j] + w * c.calls[j + 1];
}

double rms(double objective, Index m) { return std::sqrt(objective / static_cast<double>(std::max<Index>(m, 1))); }

}  // namespace

std::vector<OptionQuote> read_quotes_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line[0] != '#') break;
    }
    if (line.empty() || line[0] == '#') throw Error(ErrorKind::parse_error, "empty quote file");
    const auto header = split_csv(line);
    auto column = [&](const std::string& name) {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) throw Error(ErrorKind::parse_error, "missing column '" + name + "'");
        return static_cast<std::size_t>(it - header.begin());
    };
    const std::size_t c_days = column("maturity_days"), c_strike = column("strike"), c_vol = column("implied_vol"),
                      c_fwd = column("forward");
    std::vector<OptionQuote> out;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
        const auto cells = split_csv(line);
        if (cells.size() != header.size()) {
            throw Error(ErrorKind::parse_error, "line " + std::to_string(line_no) + ": wrong column count");
        }
        out.push_back({parse_number(cells[c_days], line_no) / 365.0, parse_number(cells[c_strike], line_no),
                       parse_number(cells[c_vol], line_no), parse_number(cells[c_fwd], line_no)});
    }
    if (out.empty()) throw Error(ErrorKind::parse_error, "no quotes");
    return out;
}

std::vector<QuoteSlice> build_slices(const std::vector<OptionQuote>& quotes) {
    std::map<double, std::vector<std::pair<double, double>>> by_maturity;
    for (const auto& q : quotes) {
        if (!(q.maturity > 0.0) || !(q.strike > 0.0) || !(q.implied_vol > 0.0) || !(q.forward > 0.0)) {
            throw Error(ErrorKind::invalid_argument, "quotes need positive maturity, strike, vol and forward");
        }
        const double k = q.strike / q.forward;
        by_maturity[q.maturity].push_back({k, black_call(1.0, q.implied_vol * std::sqrt(q.maturity), k)});
    }
    std::vector<QuoteSlice> out;
    for (auto& [T, pts] : by_maturity) {
        std::sort(pts.begin(), pts.end());
        QuoteSlice s{T, Vector(pts.size()), Vector(pts.size())};
        for (std::size_t i = 0; i < pts.size(); ++i) {
            s.strikes[i] = pts[i].first;
            s.prices[i] = pts[i].second;
        }
        out.push_back(std::move(s));
    }
    return out;
}

double atm_implied_vol(const QuoteSlice& slice, double forward) {
    Index atm = 0;
    for (Index i = 0; i < slice.strikes.size(); ++i) {
        if (std::abs(slice.strikes[i] - forward) < std::abs(slice.strikes[atm] - forward)) atm = i;
    }
    double vol = 0.2;
    if (slice.strikes.size() > 0) {
        const double s = black_implied_total_vol(forward, slice.strikes[atm], slice.prices[atm]);
        if (std::isfinite(s) && s > 0.0) vol = s / std::sqrt(slice.maturity);
    }
    return vol;
}

MlnParams initial_mln_guess(const QuoteSlice& slice, int n_modes, double forward, int variant) {
    if (n_modes < 1) throw Error(ErrorKind::invalid_argument, "need at least one mode");
    const double vol = atm_implied_vol(slice, forward);
    const double spread = 0.5 * vol * std::sqrt(slice.maturity) * (1.0 + 0.5 * variant);
    const double tilt = (variant % 2 == 0 ? -1.0 : 1.0) * 0.3 * (1.0 + 0.25 * variant);
    MlnParams p;
    double mean = 0.0;
    for (int j = 0; j < n_modes; ++j) {
        const double c = j - 0.5 * (n_modes - 1);
        p.weights.push_back(1.0 / n_modes);
        p.forwards.push_back(forward * std::exp(spread * c));
        p.vols.push_back(vol * std::exp(tilt * c));
        mean += p.forwards.back() / n_modes;
    }
    for (double& f : p.forwards) f *= forward / mean;
    return p;
}

MlnFit fit_mln_slice(const QuoteSlice& slice, int n_modes, const MlnParams& init, const FitOptions& options) {
    if (n_modes < 1) throw Error(ErrorKind::invalid_argument, "need at least one mode");
    if (slice.strikes.size() == 0) throw Error(ErrorKind::invalid_argument, "empty slice");
    if (!init.weights.empty() && static_cast<int>(init.n_modes()) != n_modes) {
        throw Error(ErrorKind::invalid_argument, "initial guess has the wrong mode count");
    }
    const Index m = slice.strikes.size();
    const double floor = options.min_vol_fraction * atm_implied_vol(slice, options.forward);
    auto residual = [&](const Vector& x, Vector& r) {
        const MlnParams p = decode(x, n_modes, options.forward, floor);
        for (Index i = 0; i < m; ++i) r[i] = mln_call(p, slice.maturity, slice.strikes[i]) - slice.prices[i];
    };
    MlnFit best;
    best.objective = std::numeric_limits<double>::infinity();
    best.ok = false;
    for (int start = 0; start < std::max(options.restarts, 1); ++start) {
        const MlnParams guess = start == 0 && !init.weights.empty()
                                    ? init
                                    : initial_mln_guess(slice, n_modes, options.forward, start);
        const LmResult r = least_squares(residual, encode(guess, floor), static_cast<int>(m), options.max_evaluations);
        if (r.objective < best.objective) {
            best.params = decode(r.x, n_modes, options.forward, floor);
            best.objective = r.objective;
            best.ok = r.ok;
        }
        if (best.objective < 1e-24) break;
    }
    if (!best.ok) warn("MLN fit at T = " + std::to_string(slice.maturity) + " stopped before converging");
    return best;
}

Vector pde_strike_grid(int n, double lo, double hi, double forward) {
    if (n < 3 || !(lo > 0.0) || !(hi > lo)) throw Error(ErrorKind::invalid_bounds, "strike grid needs n >= 3, 0 < lo < hi");
    Vector k(n);
    for (int j = 0; j < n; ++j) k[j] = forward * lo * std::pow(hi / lo, static_cast<double>(j) / (n - 1));
    return k;
}

CallSlice mln_call_slice(const MlnParams& p, double T, const Vector& strikes) {
    CallSlice c{strikes, Vector(strikes.size())};
    for (Index j = 0; j < strikes.size(); ++j) c.calls[j] = mln_call(p, T, strikes[j]);
    return c;
}

namespace {

constexpr double kMinRefitFraction = 0.05;

// Weights of the three-point second derivative at node j of a nonuniform grid.
struct Stencil {
    double lower, centre, upper;
};

Stencil second_difference(const Vector& k, Index j) {
    const double hm = k[j] - k[j - 1], hp = k[j + 1] - k[j];
    const double cm = 2.0 / (hm * (hm + hp)), cp = 2.0 / (hp * (hm + hp));
    return {cm, -(cm + cp), cp};
}

double second_derivative(const CallSlice& c, Index j) {
    const Stencil s = second_difference(c.strikes, j);
    return s.lower * c.calls[j - 1] + s.centre * c.calls[j] + s.upper * c.calls[j + 1];
}

// Chord through the neighbours minus the call at node j, in price units.
double chord_gap(const CallSlice& c, Index j) {
    const Vector& k = c.strikes;
    const double w = (k[j] - k[j - 1]) / (k[j + 1] - k[j - 1]);
    return (1.0 - w) * c.calls[j - 1] + w * c.calls[j + 1] - c.calls[j];
}

}  // namespace

AhStep ah_theta(const CallSlice& prev, const CallSlice& mln_next, double dt, double theta2_max) {
    if (!(dt > 0.0)) throw Error(ErrorKind::invalid_argument, "A&H step needs dt > 0");
    const Index n = prev.strikes.size();
    if (mln_next.strikes.size() != n || n < 3) throw Error(ErrorKind::invalid_argument, "slices differ in size");
    AhStep step{Vector::Zero(n), dt, 0, 0, 0};
    for (Index j = 1; j + 1 < n; ++j) {
        double num = (mln_next.calls[j] - prev.calls[j]) / dt;
        if (num < -kAhReportSlack) ++step.calendar_floors;
        num = std::max(num, 0.0);
        if (chord_gap(mln_next, j) < -kAhReportSlack) ++step.butterfly_floors;
        double den = 0.5 * second_derivative(mln_next, j);
        den = std::max(den, kAhDenominatorFloor);
        double th = num / den;
        if (th > theta2_max) {
            th = theta2_max;
            ++step.capped;
        }
        step.theta2[j] = th;
    }
    return step;
}

CallSlice ah_one_step(const CallSlice& prev, const AhStep& step, double forward) {
    const Index n = prev.strikes.size();
    if (step.theta2.size() != n) throw Error(ErrorKind::invalid_argument, "theta size differs from the strike grid");
    Tridiagonal A(n);
    Vector rhs = prev.calls;
    A.diag[0] = 1.0;
    rhs[0] = forward - prev.strikes[0];
    A.diag[n - 1] = 1.0;
    rhs[n - 1] = 0.0;
    for (Index j = 1; j + 1 < n; ++j) {
        const double a = 0.5 * step.dt * std::max(step.theta2[j], 0.0);
        const Stencil s = second_difference(prev.strikes, j);
        A.lower[j] = -a * s.lower;
        A.diag[j] = 1.0 - a * s.centre;
        A.upper[j] = -a * s.upper;
    }
    return {prev.strikes, solve(A, rhs)};
}

double calendar_deficit(const CallSlice& prev, const CallSlice& next) {
    return (prev.calls - next.calls).maxCoeff();
}

double min_convexity(const CallSlice& c) {
    double m = std::numeric_limits<double>::infinity();
    for (Index j = 1; j + 1 < c.strikes.size(); ++j) m = std::min(m, chord_gap(c, j));
    return m;
}

SequenceResult fit_sequence(const std::vector<QuoteSlice>& slices, int n_modes, const FitOptions& options,
                            const Vector& strike_grid) {
    SequenceResult out;
    out.marginals.spot = options.forward;
    CallSlice prev{strike_grid, (options.forward - strike_grid.array()).max(0.0).matrix()};
    double T_prev = 0.0;
    MlnParams warm;
    for (const auto& slice : slices) {
        if (!(slice.maturity > T_prev)) throw Error(ErrorKind::invalid_argument, "slices must have increasing maturities");
        const double T = slice.maturity, dt = T - T_prev;
        const Index m = slice.strikes.size();

        SliceReport report;
        report.maturity = T;
        const MlnFit direct = fit_mln_slice(slice, n_modes, warm, options);
        const double floor = options.min_vol_fraction * atm_implied_vol(slice, options.forward);

        auto step_for = [&](const MlnParams& p) { return ah_theta(prev, mln_call_slice(p, T, strike_grid), dt); };
        auto residual = [&](const Vector& x, Vector& r) {
            const CallSlice c = ah_one_step(prev, step_for(decode(x, n_modes, options.forward, floor)), options.forward);
            for (Index i = 0; i < m; ++i) r[i] = interp_log_strike(c, slice.strikes[i]) - slice.prices[i];
        };
        LmResult best = least_squares(residual, encode(direct.params, floor), static_cast<int>(m), options.max_evaluations);
        if (!warm.weights.empty()) {
            const LmResult alt = least_squares(residual, encode(warm, floor), static_cast<int>(m), options.max_evaluations);
            if (alt.objective < best.objective) best = alt;
        }
        report.optimized = decode(best.x, n_modes, options.forward, floor);
        report.quote_rms = rms(best.objective, m);
        report.optimizer_ok = best.ok && direct.ok;

        const AhStep step = step_for(report.optimized);
        report.calendar_floors = step.calendar_floors;
        report.butterfly_floors = step.butterfly_floors;
        CallSlice next = ah_one_step(prev, step, options.forward);

        QuoteSlice grid_slice{T, strike_grid, next.calls};
        FitOptions refit_options = options;
        refit_options.restarts = 1;
        // A refit that falls below the previous one anywhere on the grid is redone
        // with half the vol floor, down to no floor.
        MlnFit refit;
        for (double fraction = options.refit_min_vol_fraction;; fraction *= 0.5) {
            refit_options.min_vol_fraction = fraction < kMinRefitFraction ? 0.0 : fraction;
            refit = fit_mln_slice(grid_slice, n_modes, report.optimized, refit_options);
            if (refit_options.min_vol_fraction == 0.0 || out.marginals.size() == 0) break;
            const MarginalPtr& earlier = out.marginals.marginals.back();
            bool ordered = true;
            for (Index j = 0; j < strike_grid.size() && ordered; ++j) {
                ordered = earlier->call(strike_grid[j]) - mln_call(refit.params, T, strike_grid[j]) <= kConvexOrderSlack;
            }
            if (ordered) break;
        }
        report.refit = refit.params;
        report.refit_rms = rms(refit.objective, strike_grid.size());

        out.marginals.maturities.push_back(T);
        out.marginals.marginals.push_back(std::make_shared<MlnMarginal>(report.refit, T));
        out.surfaces.push_back(next);
        out.reports.push_back(report);
        warm = report.optimized;
        prev = std::move(next);
        T_prev = T;
    }
    return out;
}

std::vector<OptionQuote> synthetic_skew_quotes(const std::vector<double>& maturity_days, double vol_noise,
                                               std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    const double forward = 100.0;
    std::vector<OptionQuote> out;
    for (double days : maturity_days) {
        const double T = days / 365.0;
        const double atm = 0.18 + 0.05 * std::exp(-T / 0.15);
        const double skew = -0.05 / (std::sqrt(T) + 0.15);
        const double curve = 0.05 / (std::sqrt(T) + 0.15);
        const double width = atm * std::sqrt(T);
        for (int i = 0; i < 17; ++i) {
            const double k = width * (-3.0 + 5.0 * i / 16.0);
            double vol = atm + skew * k + curve * k * k;
            if (vol_noise > 0.0) vol += vol_noise * noise(rng);
            out.push_back({T, forward * std::exp(k), vol, forward});
        }
    }
    return out;
}

}  // namespace markovflow
