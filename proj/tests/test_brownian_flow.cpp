#include "doctest.h"

#include "markovflow/brownian_flow.hpp"
#include "markovflow/error.hpp"
#include "oracles.hpp"

using namespace markovflow;
using doctest::Approx;

namespace {

double max_interior(const Grid& g, const Vector& v, const std::function<double(double)>& f, double margin) {
    double e = 0.0;
    for (Index j = 0; j < g.size(); ++j)
        if (std::abs(g[j]) <= margin) e = std::max(e, std::abs(v[j] - f(g[j])));
    return e;
}

}  // namespace

TEST_CASE("heat convolution keeps constants and lines and adds tau to x^2") {
    const Grid g = build_uniform_grid(401, -10.0, 10.0);
    CHECK(max_interior(g, heat_convolve(g, Vector::Constant(g.size(), 2.5), 0.7), [](double) { return 2.5; }, 6) < 1e-10);
    CHECK(max_interior(g, heat_convolve(g, g.nodes, 0.7), [](double x) { return x; }, 6) < 1e-8);
    const Vector sq = g.nodes.array().square();
    CHECK(max_interior(g, heat_convolve(g, sq, 0.5), [](double x) { return x * x + 0.5; }, 5) < 1e-6);
}

TEST_CASE("Bass flow of a Brownian marginal is the identity") {
    const double T = 0.5;
    const Grid g = build_uniform_grid(500, -8 * std::sqrt(T), 8 * std::sqrt(T));
    const BrownianPeriod p = bass_first_period(NormalMarginal(0.0, T), T, g);
    CHECK(max_interior(g, p.terminal_flow.values, [](double x) { return x; }, 4 * std::sqrt(T)) < 1e-9);
}

TEST_CASE("Bass flow of a lognormal is the Black-Scholes flow at every time") {
    const double S0 = 100.0, sigma = 0.25, T = 1.0;
    const Grid g = build_uniform_grid(500, -8.0, 8.0);
    const BrownianPeriod p = bass_first_period(*make_lognormal(S0, sigma, T), T, g);
    for (double t : {T, 0.5, 0.1}) {
        const FlowSlice f = brownian_flow_at(p, t);
        double rel = 0.0;
        for (Index j = 0; j < g.size(); ++j) {
            if (std::abs(g[j]) > 3 * std::sqrt(T)) continue;
            const double exact = S0 * std::exp(sigma * g[j] - 0.5 * sigma * sigma * t);
            rel = std::max(rel, std::abs(f.values[j] / exact - 1.0));
        }
        CHECK(rel < 1e-4);
    }
}

TEST_CASE("Bass first period matches double exponential quantiles") {
    const double T = 0.1;
    const Grid g = build_uniform_grid(500, -8 * std::sqrt(T), 8 * std::sqrt(T));
    const BrownianPeriod p = bass_first_period(DoubleExponentialMarginal(DoubleExponential::inverse_sqrt(T)), T, g);
    double e = 0.0;
    for (double q = 0.01; q <= 0.99; q += 0.005) {
        double lo = -10, hi = 10;
        for (int k = 0; k < 200; ++k) {
            const double m = 0.5 * (lo + hi);
            (oracle::Phi(m) < q ? lo : hi) = m;
        }
        const double x = 0.5 * (lo + hi) * std::sqrt(T);
        e = std::max(e, std::abs(p.terminal_flow(x) - oracle::de_quantile(T, q)));
    }
    CHECK(e < 1e-3);
}

TEST_CASE("Brownian marginals are a fixed point of the later-period iteration") {
    const Grid g = build_uniform_grid(500, -8 * std::sqrt(2.0), 8 * std::sqrt(2.0));
    const BrownianPeriod p = chl_fixed_point(NormalMarginal(0.0, 1.0), NormalMarginal(0.0, 2.0), 1.0, 2.0, g);
    CHECK(p.status == ConvergenceStatus::converged);
    CHECK(p.log.size() <= 3u);
    CHECK(max_interior(g, p.terminal_flow.values, [](double x) { return x; }, 5) < 1e-6);
    CHECK(max_interior(g, p.start_law.values, [](double x) { return oracle::Phi(x); }, 8) < 1e-6);
}

TEST_CASE("Black-Scholes pair gives a Brownian law and the closed form flow") {
    const double S0 = 1.0, sigma = 0.3;
    const Grid g = build_uniform_grid(500, -8 * std::sqrt(2.0), 8 * std::sqrt(2.0));
    const BrownianPeriod p = chl_fixed_point(*make_lognormal(S0, sigma, 1.0), *make_lognormal(S0, sigma, 2.0), 1.0, 2.0, g);
    double ef = 0.0, eF = 0.0;
    for (Index j = 0; j < g.size(); ++j) {
        eF = std::max(eF, std::abs(p.start_law.values[j] - oracle::Phi(g[j])));
        if (std::abs(g[j]) > 3.0) continue;
        const double exact = S0 * std::exp(sigma * g[j] - sigma * sigma);
        ef = std::max(ef, std::abs(p.terminal_flow.values[j] / exact - 1.0));
    }
    CHECK(eF < 1e-4);
    CHECK(ef < 1e-4);
    const FlowSlice mid = brownian_flow_at(p, 1.5);
    const Index j0 = g.locate(1.0);
    CHECK(mid.values[j0] == Approx(S0 * std::exp(sigma * g[j0] - 0.5 * sigma * sigma * 1.5)).epsilon(1e-4));
}

TEST_CASE("double exponential later period shows geometric residual decay") {
    const Grid g = build_uniform_grid(500, -8 * std::sqrt(2.0), 8 * std::sqrt(2.0));
    const BrownianPeriod p = chl_fixed_point(DoubleExponentialMarginal(DoubleExponential::inverse_sqrt(1.0)),
                                             DoubleExponentialMarginal(DoubleExponential::inverse_sqrt(2.0)), 1.0, 2.0, g);
    REQUIRE(p.log.size() >= 4u);
    CHECK(p.status == ConvergenceStatus::converged);
    const auto rate = estimate_rate(p.log, 1, static_cast<int>(p.log.size()), ResidualKind::cdf);
    REQUIRE(rate);
    CHECK(*rate < 0.9);
}

TEST_CASE("flow at the period end is the terminal slice and outside times are rejected") {
    const Grid g = build_uniform_grid(101, -4.0, 4.0);
    const BrownianPeriod p = bass_first_period(*make_lognormal(1.0, 0.2, 1.0), 1.0, g);
    CHECK(brownian_flow_at(p, 1.0).values == p.terminal_flow.values);
    CHECK_THROWS_AS(brownian_flow_at(p, 1.5), Error);
}

TEST_CASE("reversed convex order is refused") {
    const Grid g = build_uniform_grid(101, -4.0, 4.0);
    CHECK_THROWS_AS(chl_fixed_point(NormalMarginal(0.0, 2.0), NormalMarginal(0.0, 1.0), 1.0, 2.0, g), Error);
}
