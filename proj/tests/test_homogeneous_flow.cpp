#include "doctest.h"

#include "markovflow/error.hpp"
#include "markovflow/homogeneous_flow.hpp"
#include "oracles.hpp"

using namespace markovflow;
using doctest::Approx;

TEST_CASE("drift of a linear flow vanishes") {
    const Grid g = build_uniform_grid(101, -3.0, 3.0);
    const DriftFn mu = drift_from_flow(FlowSlice(g, (2.0 * g.nodes.array() + 1.0).matrix()));
    CHECK(mu.values.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("drift of an exponential flow is minus half sigma") {
    const double sigma = 0.3;
    const Grid g = build_uniform_grid(2001, -3.0, 3.0);
    const DriftFn mu = drift_from_flow(FlowSlice(g, (100.0 * (sigma * g.nodes.array()).exp()).matrix()));
    for (Index j = 1; j < g.size() - 1; ++j) CHECK(mu.values[j] == Approx(-sigma / 2).epsilon(1e-5));
}

TEST_CASE("drift of x + x^2/4 is -1/(4 + 2x)") {
    const Grid g = build_uniform_grid(2001, 0.0, 4.0);
    const DriftFn mu = drift_from_flow(FlowSlice(g, (g.nodes.array() + g.nodes.array().square() / 4).matrix()));
    for (Index j = 1; j < g.size() - 1; j += 50) CHECK(mu.values[j] == Approx(-1.0 / (4.0 + 2.0 * g[j])).epsilon(1e-6));
}

TEST_CASE("renormalization leaves symmetric densities alone and centres shifted ones") {
    const Grid g = build_uniform_grid(801, -8.0, 8.0);
    DensitySlice p{g, Vector(g.size())}, q{g, Vector(g.size())};
    for (Index j = 0; j < g.size(); ++j) {
        p.values[j] = oracle::phi(g[j]);
        q.values[j] = oracle::phi(g[j] - 0.5);
    }
    const DensitySlice ps = mean_zero_renormalize(p);
    CHECK((ps.values - p.values).cwiseAbs().maxCoeff() < 1e-12 * p.values.maxCoeff() + 1e-15);

    const DensitySlice r = mean_zero_renormalize(q);
    double m0 = 0, m1 = 0;
    for (Index j = 0; j < g.size(); ++j) {
        const double w = (j == 0 || j == g.size() - 1 ? 0.5 : 1.0) * g.h;
        m0 += w * r.values[j];
        m1 += w * r.values[j] * g[j];
    }
    CHECK(m0 == Approx(1.0).epsilon(1e-10));
    CHECK(std::abs(m1) < 1e-10);
}

TEST_CASE("density on one side of the origin cannot be centred") {
    const Grid g = build_uniform_grid(101, 1.0, 3.0);
    try {
        mean_zero_renormalize(DensitySlice{g, Vector::Ones(g.size())});
        FAIL("expected one-sided-mass");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::one_sided_mass);
    }
}

TEST_CASE("extrapolation replaces tails beyond y_max by lines") {
    const Grid g = build_uniform_grid(501, -6.0, 6.0);
    Vector v(g.size());
    for (Index j = 0; j < g.size(); ++j) v[j] = oracle::de_flow(0.1, g[j]);
    const FlowSlice f(g, v);

    const FlowSlice same = apply_extrapolation(f, {1e6, 0.0});
    CHECK(same.values == f.values);

    const FlowSlice e = apply_extrapolation(f, {7.0, 0.0});
    REQUIRE(e.active_lo > 0);
    REQUIRE(e.last_active() < g.size() - 1);
    CHECK(std::abs(e.values[e.last_active() - 2]) <= 7.0);
    CHECK(std::abs(e.values[e.active_lo + 2]) <= 7.0);
    const Index n = g.size() - 1;
    const double s_hi = e.values[n] - e.values[n - 1], s_lo = e.values[1] - e.values[0];
    CHECK(e.values[n - 5] - e.values[n - 6] == Approx(s_hi).epsilon(1e-10));
    CHECK(e.values[6] - e.values[5] == Approx(s_lo).epsilon(1e-10));
    for (Index j = 1; j < g.size(); ++j) CHECK(e.values[j] > e.values[j - 1]);
    const DriftFn mu = drift_from_flow(e);
    CHECK(mu.values[n - 2] == 0.0);
    CHECK(mu.values[2] == 0.0);
}

TEST_CASE("y_max below the flow at the origin linearizes the whole slice") {
    const Grid g = build_uniform_grid(101, -3.0, 3.0);
    const FlowSlice f(g, (10.0 + g.nodes.array().exp()).matrix());
    const FlowSlice e = apply_extrapolation(f, {7.0, 0.0});
    const double s = e.values[1] - e.values[0];
    for (Index j = 1; j < g.size(); ++j) CHECK(e.values[j] - e.values[j - 1] == Approx(s).epsilon(1e-9));
}

TEST_CASE("first period of a Brownian marginal converges to the identity") {
    const Grid g = build_uniform_grid(500, -8.0, 8.0);
    const HomogeneousPeriod p = calibrate_first_period(NormalMarginal(0.0, 1.0), 1.0, g);
    CHECK(p.status == ConvergenceStatus::converged);
    for (Index j = 0; j < g.size(); ++j) {
        if (std::abs(g[j]) > 3) continue;
        CHECK(std::abs(p.flow.values[j] - g[j]) < 2e-3);
        CHECK(std::abs(p.drift.values[j]) < 1e-3);
    }
}

TEST_CASE("first period of a lognormal gives drift minus half sigma") {
    const double sigma = 0.2, T = 1.0;
    const Grid g = build_uniform_grid(1601, -8.0, 8.0);
    FlowConfig cfg;
    cfg.n_steps = 200;
    cfg.policy.y_max = 1e9;
    const HomogeneousPeriod p = calibrate_first_period(*make_lognormal(1.0, sigma, T), T, g, cfg);
    for (Index j = 0; j < g.size(); ++j) {
        if (std::abs(g[j]) > 3 * std::sqrt(T)) continue;
        CHECK(p.drift.values[j] == Approx(-sigma / 2).epsilon(2e-3));
        CHECK(p.flow.values[j] == Approx(std::exp(sigma * g[j])).epsilon(1e-4));
    }
}

TEST_CASE("later period of a Gaussian pair stays Brownian") {
    const Grid g = build_uniform_grid(500, -8 * std::sqrt(2.0), 8 * std::sqrt(2.0));
    const HomogeneousPeriod p = calibrate_period(NormalMarginal(0.0, 1.0), NormalMarginal(0.0, 2.0), 1.0, 2.0, g);
    CHECK(p.log.back().f_residual < 1e-7);
    for (Index j = 0; j < g.size(); ++j) {
        if (std::abs(g[j]) > 4) continue;
        CHECK(std::abs(p.flow.values[j] - g[j]) < 2e-3);
        CHECK(std::abs(p.drift.values[j]) < 2e-3);
    }
}

TEST_CASE("later period of a Black-Scholes pair is an exponential flow") {
    const double sigma = 0.25;
    const Grid g = build_uniform_grid(1001, -8 * std::sqrt(2.0), 8 * std::sqrt(2.0));
    FlowConfig cfg;
    cfg.policy.y_max = 1e9;
    const HomogeneousPeriod p = calibrate_period(*make_lognormal(1.0, sigma, 1.0), *make_lognormal(1.0, sigma, 2.0), 1.0, 2.0, g, cfg);
    const Index j0 = g.locate(0.0);
    double f_err = 0.0, mu_l1 = 0.0, width = 0.0;
    for (Index j = 0; j < g.size(); ++j) {
        if (std::abs(g[j]) > 3) continue;
        f_err = std::max(f_err, std::abs(std::log(p.flow.values[j] / p.flow.values[j0]) - sigma * (g[j] - g[j0])));
        mu_l1 += std::abs(p.drift.values[j] + sigma / 2) * g.h;
        width += g.h;
    }
    CHECK(f_err < 1e-4);
    CHECK(mu_l1 / width < 2e-3);
}

TEST_CASE("a Black-Scholes period fifteen times longer than its start stays stable") {
    const double sigma = 0.2, T0 = 2.0 / 365, T1 = 30.0 / 365;
    const Grid g = build_uniform_grid(500, -8 * std::sqrt(T1), 8 * std::sqrt(T1));
    const HomogeneousPeriod p = calibrate_period(*make_lognormal(1.0, sigma, T0), *make_lognormal(1.0, sigma, T1), T0, T1, g);
    CHECK(p.log.back().f_residual < 1e-6);
    double slope_err = 0.0, mu_err = 0.0;
    for (Index j = 1; j < g.size(); ++j) {
        if (std::abs(g[j]) > 3 * std::sqrt(T0)) continue;
        slope_err = std::max(slope_err, std::abs(std::log(p.flow.values[j] / p.flow.values[j - 1]) / g.h - sigma));
        mu_err = std::max(mu_err, std::abs(p.drift.values[j] + sigma / 2));
    }
    CHECK(slope_err < 1e-3);
    CHECK(mu_err < 1e-2);
}

TEST_CASE("first double exponential period contracts at about 0.91") {
    const double T = 0.1;
    const Grid g = build_uniform_grid(500, -8 * std::sqrt(T), 8 * std::sqrt(T));
    const HomogeneousPeriod p = calibrate_first_period(DoubleExponentialMarginal(DoubleExponential::inverse_sqrt(T)), T, g);
    const auto r = estimate_rate(p.log, 50, 100, ResidualKind::flow);
    REQUIRE(r);
    CHECK(*r == Approx(0.912).epsilon(0.03 / 0.912));
    CHECK(marginal_match_error(p.flow, p.F_end, DoubleExponentialMarginal(DoubleExponential::inverse_sqrt(T))) < 1e-3);
}
