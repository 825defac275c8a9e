#include "doctest.h"

#include "markovflow/brownian_flow.hpp"
#include "markovflow/error.hpp"
#include "markovflow/fokker_planck.hpp"
#include "markovflow/homogeneous_flow.hpp"
#include "oracles.hpp"

using namespace markovflow;
using doctest::Approx;

namespace {

double gauss(double x, double m, double v) { return oracle::phi((x - m) / std::sqrt(v)) / std::sqrt(v); }

double l1_to_gauss(const DensitySlice& p, double m, double v) {
    double e = 0.0;
    for (Index j = 0; j < p.values.size(); ++j) e += std::abs(p.values[j] - gauss(p.grid[j], m, v));
    return e * p.grid.h;
}

DriftFn drift_on(const Grid& g, const std::function<double(double)>& mu) {
    DriftFn d{g, Vector(g.size())};
    for (Index j = 0; j < g.size(); ++j) d.values[j] = mu(g[j]);
    return d;
}

DensitySlice sampled(const Grid& g, double m, double v) {
    DensitySlice p{g, Vector(g.size())};
    for (Index j = 0; j < g.size(); ++j) p.values[j] = gauss(g[j], m, v);
    return p;
}

}  // namespace

TEST_CASE("driftless propagation of a near delta gives the heat kernel") {
    const double tau = 1.0;
    const Grid g = build_uniform_grid(500, -8.0, 8.0);
    const double s = 4 * g.h * g.h;
    PropagationStats stats;
    const DensitySlice p = propagate_density(sampled(g, 0.0, s), drift_on(g, [](double) { return 0.0; }),
                                             {s, tau, 100}, &stats);
    CHECK(l1_to_gauss(p, 0.0, tau) < 2e-3);
    CHECK(stats.max_mass_defect < 1e-8);
}

TEST_CASE("Ornstein-Uhlenbeck stationary density is preserved") {
    const Grid g = build_uniform_grid(500, -6.0, 6.0);
    PropagationStats stats;
    const DensitySlice p = propagate_density(sampled(g, 0.0, 0.5), drift_on(g, [](double x) { return -x; }),
                                             {0.0, 2.0, 100}, &stats);
    CHECK(l1_to_gauss(p, 0.0, 0.5) < 1e-3);
    CHECK(stats.max_mass_defect < 1e-8);
}

TEST_CASE("constant drift shifts a Gaussian") {
    const double c = 0.4, s = 0.5, tau = 1.5;
    const Grid g = build_uniform_grid(500, -8.0, 8.0);
    const DensitySlice p = propagate_density(sampled(g, 0.0, s), drift_on(g, [c](double) { return c; }), {0.0, tau, 100});
    CHECK(l1_to_gauss(p, c * tau, s + tau) < 2e-3);
    CHECK(p.mean() == Approx(c * tau).epsilon(1e-3));
}

TEST_CASE("driftless cdf propagation adds variance") {
    const Grid g = build_uniform_grid(500, -10.0, 10.0);
    const MonotoneCdf F = propagate_cdf(normal_cdf_on(g, 0.0, 1.0), drift_on(g, [](double) { return 0.0; }), {0.0, 1.0, 100});
    double e = 0.0;
    for (Index j = 0; j < g.size(); ++j) e = std::max(e, std::abs(F.values[j] - oracle::Phi(g[j] / std::sqrt(2.0))));
    CHECK(e < 1e-3);
}

TEST_CASE("exponential flow drift moves a near delta to a shifted Brownian law") {
    const double sigma = 0.4, T = 1.0;
    const Grid g = build_uniform_grid(500, -8.0, 8.0);
    FlowSlice f(g, (sigma * g.nodes.array()).exp().matrix());
    const DriftFn mu = drift_from_flow(f);
    const double s = 4 * g.h * g.h;
    const MonotoneCdf F0 = normal_cdf_on(g, -0.5 * sigma * s, s);
    const MonotoneCdf F = propagate_cdf(F0, mu, {s, T, 100});
    double e = 0.0;
    for (Index j = 0; j < g.size(); ++j)
        e = std::max(e, std::abs(F.values[j] - oracle::Phi((g[j] + 0.5 * sigma * T) / std::sqrt(T))));
    CHECK(e < 1e-3);
}

TEST_CASE("zero length period returns the start law") {
    const Grid g = build_uniform_grid(200, -5.0, 5.0);
    const MonotoneCdf F0 = normal_cdf_on(g, 0.3, 0.8);
    const MonotoneCdf F = propagate_cdf(F0, drift_on(g, [](double x) { return -x; }), {1.0, 1.0, 10});
    for (Index j = 0; j < g.size(); ++j) CHECK(F.values[j] == Approx(F0.values[j]).epsilon(1e-14));
}

TEST_CASE("driftless solver agrees with the Fourier heat convolution") {
    const Grid g = build_uniform_grid(500, -8 * std::sqrt(3.0), 8 * std::sqrt(3.0));
    MonotoneCdf F0{g, Vector(g.size()), {}};
    for (Index j = 0; j < g.size(); ++j) F0.values[j] = oracle::de_cdf(1.0, g[j]);
    const MonotoneCdf F = propagate_cdf(F0, drift_on(g, [](double) { return 0.0; }), {1.0, 2.0, 100});
    const Vector H = heat_convolve(g, F0.values, 1.0);
    double e = 0.0;
    for (Index j = 0; j < g.size(); ++j) e = std::max(e, std::abs(F.values[j] - H[j]));
    CHECK(e < 2e-3);
}

TEST_CASE("implicit scheme also conserves mass") {
    const Grid g = build_uniform_grid(300, -6.0, 6.0);
    PropagationStats stats;
    const DensitySlice p = propagate_density(sampled(g, 1.0, 0.3), drift_on(g, [](double x) { return -2.0 * x; }),
                                             {0.0, 1.0, 50, FpScheme::implicit}, &stats);
    CHECK(stats.max_mass_defect < 1e-8);
    CHECK(p.mass() == Approx(1.0).epsilon(1e-12));
    CHECK(l1_to_gauss(p, std::exp(-2.0), 0.25 + (0.3 - 0.25) * std::exp(-4.0)) < 2e-2);
}

TEST_CASE("a Crank-Nicolson step that goes negative is redone implicitly") {
    const Grid g = build_uniform_grid(500, -4.0, 4.0);
    PropagationStats stats;
    const DensitySlice p = propagate_density(
        sampled(g, 0.0, 0.01), drift_on(g, [](double x) { return std::sin(10.0 * x) > 0 ? 50.0 : -50.0; }),
        {0.0, 1.0, 10}, &stats);
    CHECK(stats.implicit_fallbacks > 0);
    CHECK(stats.min_density >= -1e-12);
    CHECK(stats.max_mass_defect < 1e-8);
    CHECK(p.values.minCoeff() >= 0.0);
}
