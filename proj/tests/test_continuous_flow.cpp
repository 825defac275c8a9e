#include "doctest.h"

#include "markovflow/continuous_flow.hpp"
#include "markovflow/error.hpp"
#include "markovflow/homogeneous_flow.hpp"
#include "oracles.hpp"

using namespace markovflow;
using doctest::Approx;

namespace {

FlowSlice slice_of(const Grid& g, const std::function<double(double)>& f) {
    Vector v(g.size());
    for (Index j = 0; j < g.size(); ++j) v[j] = f(g[j]);
    return FlowSlice(g, v);
}

}  // namespace

TEST_CASE("inverse sqrt weights at t = 2 between 1 and 4") {
    const auto [a, b] = inverse_sqrt_weights(1.0, 4.0, 2.0);
    CHECK(a == Approx(std::sqrt(2.0) - 1.0).epsilon(1e-14));
    CHECK(b == Approx(2.0 - std::sqrt(2.0)).epsilon(1e-14));
    CHECK(a == Approx(0.41421).epsilon(1e-5));
    CHECK(b == Approx(0.58579).epsilon(1e-5));
    CHECK_THROWS_AS(inverse_sqrt_weights(1.0, 4.0, 5.0), Error);
    CHECK_THROWS_AS(inverse_sqrt_weights(0.0, 4.0, 1.0), Error);
}

TEST_CASE("interpolated flow reproduces the end slices") {
    const Grid g = build_uniform_grid(201, -5.0, 5.0);
    for (auto kind : {TermStructureKind::inverse_sqrt, TermStructureKind::log_linear}) {
        TermStructureRule rule{kind, 1.0, 2.0, slice_of(g, [](double x) { return std::exp(0.2 * x); }),
                               slice_of(g, [](double x) { return std::exp(0.3 * x); })};
        CHECK((interp_flow(rule, 1.0).values - rule.f_i.values).cwiseAbs().maxCoeff() < 1e-14);
        CHECK((interp_flow(rule, 2.0).values - rule.f_ip1.values).cwiseAbs().maxCoeff() < 1e-13);
        CHECK_THROWS_AS(interp_flow(rule, 2.5), Error);
    }
}

TEST_CASE("log linear rule refuses nonpositive slices") {
    const Grid g = build_uniform_grid(11, -1.0, 1.0);
    TermStructureRule rule{TermStructureKind::log_linear, 1.0, 2.0, slice_of(g, [](double x) { return x; }),
                           slice_of(g, [](double x) { return x; })};
    CHECK_THROWS_AS(interp_flow(rule, 1.5), Error);
}

TEST_CASE("time derivative of the inverse sqrt rule matches a difference quotient") {
    const Grid g = build_uniform_grid(101, -3.0, 3.0);
    TermStructureRule rule{TermStructureKind::inverse_sqrt, 0.5, 2.0, slice_of(g, [](double x) { return x; }),
                           slice_of(g, [](double x) { return x + x * x / 4; })};
    const double t = 1.1, h = 1e-6;
    const Vector fd = (interp_flow(rule, t + h).values - interp_flow(rule, t - h).values) / (2 * h);
    CHECK((flow_time_derivative(rule, t) - fd).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("static identity flow has zero drift") {
    const Grid g = build_uniform_grid(101, -3.0, 3.0);
    const FlowSlice id = slice_of(g, [](double x) { return x; });
    const DriftFn mu = drift_from_flow_td({TermStructureKind::inverse_sqrt, 1.0, 2.0, id, id}, 1.5);
    CHECK(mu.values.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("Black-Scholes flow rides a driftless Brownian motion") {
    const double S0 = 1.0, sigma = 0.3, T1 = 1.0, T2 = 2.0;
    const Grid g = build_uniform_grid(2001, -6.0, 6.0);
    auto bs = [&](double t) { return slice_of(g, [&](double x) { return S0 * std::exp(sigma * x - 0.5 * sigma * sigma * t); }); };
    const DriftFn mu = drift_from_flow_td({TermStructureKind::log_linear, T1, T2, bs(T1), bs(T2)}, 1.4);
    for (Index j = 1; j < g.size() - 1; ++j) CHECK(std::abs(mu.values[j]) < 1e-5);
}

TEST_CASE("equal end slices reduce to the homogeneous drift") {
    const Grid g = build_uniform_grid(401, -3.0, 3.0);
    const FlowSlice s = slice_of(g, [](double x) { return oracle::de_flow(1.0, x); });
    const DriftFn a = drift_from_flow_td({TermStructureKind::inverse_sqrt, 1.0, 2.0, s, s}, 1.3);
    const DriftFn b = drift_from_flow(s);
    CHECK((a.values - b.values).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("continuous period on a Black-Scholes pair keeps zero drift") {
    const double S0 = 1.0, sigma = 0.2, T1 = 1.0, T2 = 2.0;
    const Grid g = build_uniform_grid(1001, -8 * std::sqrt(T2), 8 * std::sqrt(T2));
    const FlowSlice f1 = slice_of(g, [&](double x) { return S0 * std::exp(sigma * x - 0.5 * sigma * sigma * T1); });
    FlowConfig cfg;
    cfg.policy.y_max = 1e9;
    const auto nu2 = make_lognormal(S0, sigma, T2);
    const ContinuousPeriod p = calibrate_continuous_period(normal_cdf_on(g, 0.0, T1), f1, *nu2, T1, T2,
                                                           TermStructureKind::log_linear, cfg, make_lognormal(S0, sigma, T1).get());
    double mu_max = 0.0, f_err = 0.0;
    for (const auto& d : p.drift)
        for (Index j = 0; j < g.size(); ++j)
            if (std::abs(g[j]) < 3 * std::sqrt(T2)) mu_max = std::max(mu_max, std::abs(d[j]));
    for (Index j = 0; j < g.size(); ++j)
        if (std::abs(g[j]) < 3 * std::sqrt(T2))
            f_err = std::max(f_err, std::abs(p.rule.f_ip1.values[j] - S0 * std::exp(sigma * g[j] - 0.5 * sigma * sigma * T2)));
    CHECK(mu_max < 1e-3);
    CHECK(f_err < 1e-3);
}

TEST_CASE("zero length continuous period returns its inputs") {
    const Grid g = build_uniform_grid(201, -5.0, 5.0);
    const FlowSlice f = slice_of(g, [](double x) { return x; });
    const MonotoneCdf F = normal_cdf_on(g, 0.0, 1.0);
    const ContinuousPeriod p = calibrate_continuous_period(F, f, NormalMarginal(0.0, 1.0), 1.0, 1.0, TermStructureKind::inverse_sqrt);
    CHECK(p.F_end.values == F.values);
    CHECK(p.rule.f_ip1.values == f.values);
}

TEST_CASE("continuous period refuses a marginal out of convex order") {
    const Grid g = build_uniform_grid(201, -5.0, 5.0);
    const NormalMarginal wide(0.0, 3.0), narrow(0.0, 1.0);
    CHECK_THROWS_AS(calibrate_continuous_period(normal_cdf_on(g, 0.0, 1.0), slice_of(g, [](double x) { return x; }), narrow, 1.0,
                                                2.0, TermStructureKind::inverse_sqrt, {}, &wide),
                    Error);
}
