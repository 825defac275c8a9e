#include "doctest.h"

#include <sstream>

#include "markovflow/calibration.hpp"
#include "markovflow/error.hpp"

using namespace markovflow;
using doctest::Approx;

namespace {

MarginalSet gaussian_set() {
    MarginalSet s{0.0, {0.5, 1.0, 2.0}, {}};
    for (double t : s.maturities) s.marginals.push_back(std::make_shared<NormalMarginal>(0.0, t));
    return s;
}

}  // namespace

TEST_CASE("Gaussian fixture converges in a few iterations to the identity flow under the Brownian scheme") {
    RunConfig cfg;
    cfg.scheme = Scheme::bass_chl;
    const CalibrationResult r = calibrate(gaussian_set(), cfg);
    CHECK(r.converged);
    for (const auto& p : r.surface.periods) {
        CHECK(period_log(p).size() <= 3u);
        const FlowSlice f = period_flow(p, period_end(p));
        for (Index j = 0; j < f.grid.size(); ++j)
            if (std::abs(f.grid[j]) < 3.0) CHECK(std::abs(f.values[j] - f.grid[j]) < 1e-8);
    }
}

TEST_CASE("Gaussian fixture under the PDE schemes settles near the identity flow") {
    for (auto scheme : {Scheme::homogeneous, Scheme::continuous}) {
        CAPTURE(std::string(to_string(scheme)));
        RunConfig cfg;
        cfg.scheme = scheme;
        const CalibrationResult r = calibrate(gaussian_set(), cfg);
        for (const auto& p : r.surface.periods) {
            CHECK(period_log(p).back().f_residual < 1e-6);
            const FlowSlice f = period_flow(p, period_end(p));
            for (Index j = 0; j < f.grid.size(); ++j)
                if (std::abs(f.grid[j]) < 3.0) CHECK(std::abs(f.values[j] - f.grid[j]) < 5e-3);
        }
    }
}

TEST_CASE("run config validation and hashing") {
    RunConfig a, b;
    CHECK(a.hash() == b.hash());
    b.grid_nx = 400;
    CHECK(a.hash() != b.hash());
    b.grid_nx = 2;
    CHECK_THROWS_AS(b.validate(), Error);
    CHECK(scheme_from_string("continuous") == Scheme::continuous);
    CHECK_THROWS_AS(scheme_from_string("explicit"), Error);
}

TEST_CASE("rates file lists one row per period") {
    RunConfig cfg;
    const CalibrationResult r = calibrate(gaussian_set(), cfg);
    std::ostringstream out;
    write_rates_csv(out, r);
    const std::string s = out.str();
    CHECK(std::count(s.begin(), s.end(), '\n') == 4);
}
