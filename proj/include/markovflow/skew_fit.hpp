#pragma once

#include <cstdint>
#include <istream>
#include <string>
#include <vector>

#include "markovflow/marginals.hpp"

namespace markovflow {

/// One quote; strikes are normalized by the forward when slices are built.
struct OptionQuote {
    double maturity = 0.0;  ///< years
    double strike = 0.0;
    double implied_vol = 0.0;
    double forward = 1.0;
};

/// CSV with header maturity_days,strike,implied_vol,forward. Throws parse-error.
std::vector<OptionQuote> read_quotes_csv(std::istream& in);

/// Quotes of one maturity as forward-normalized strikes and undiscounted Black prices.
struct QuoteSlice {
    double maturity = 0.0;
    Vector strikes;
    Vector prices;
};

/// Groups quotes by maturity (ascending). Throws invalid-argument on bad values.
std::vector<QuoteSlice> build_slices(const std::vector<OptionQuote>& quotes);

struct CallSlice {
    Vector strikes;
    Vector calls;
};

struct FitOptions {
    int restarts = 8;
    int max_evaluations = 4000;
    double forward = 1.0;
    double min_vol_fraction = 0.0;         ///< mode vol floor, as a fraction of the slice ATM implied vol
    double refit_min_vol_fraction = 0.5;   ///< the same floor for the refit to the A&H surface
};

struct MlnFit {
    MlnParams params;
    double objective = 0.0;  ///< sum of squared price errors
    bool ok = true;          ///< false when every start ended in an optimizer failure
};

/// Least squares over an n-mode mixture with sum w_j F_j = forward built into the
/// parameterization. `init` (when not empty) is the first start.
MlnFit fit_mln_slice(const QuoteSlice& slice, int n_modes, const MlnParams& init = {}, const FitOptions& options = {});

/// Black implied vol of the quote nearest the forward; 0.2 when it cannot be inverted.
double atm_implied_vol(const QuoteSlice& slice, double forward);

/// Default start: equal weights, forwards split geometrically around the forward,
/// vols spread around the at-the-money implied vol of the slice.
MlnParams initial_mln_guess(const QuoteSlice& slice, int n_modes, double forward = 1.0, int variant = 0);

/// Strike grid uniform in log-strike on [lo, hi] x forward.
Vector pde_strike_grid(int n = 400, double lo = 0.2, double hi = 5.0, double forward = 1.0);

CallSlice mln_call_slice(const MlnParams& p, double T, const Vector& strikes);

struct AhStep {
    Vector theta2;
    double dt = 0.0;
    int calendar_floors = 0;   ///< nodes with a negative calendar increment
    int butterfly_floors = 0;  ///< nodes where C_next lies above its neighbour chord
    int capped = 0;
};

inline constexpr double kAhDenominatorFloor = 1e-12;
inline constexpr double kAhReportSlack = 1e-12;

/// theta^2(K) = ((C_next - C_prev) / dt) / (C_next'' / 2) with the numerator floored
/// at 0 and the denominator at 1e-12. Floors are counted when the calendar increment
/// or the chord gap of C_next (price units) is below -1e-12.
AhStep ah_theta(const CallSlice& prev, const CallSlice& mln_next, double dt, double theta2_max = 100.0);

/// (1 - dt theta^2 d^2/dK^2 / 2) C = C_prev with C(K_min) = forward - K_min, C(K_max) = 0.
CallSlice ah_one_step(const CallSlice& prev, const AhStep& step, double forward = 1.0);

/// Max over nodes of C_prev - C (positive means a calendar violation).
double calendar_deficit(const CallSlice& prev, const CallSlice& next);

/// Min over interior nodes of the neighbour chord minus the call (price units);
/// negative values are butterfly violations.
double min_convexity(const CallSlice& c);

struct SliceReport {
    double maturity = 0.0;
    MlnParams optimized;  ///< MLN whose A&H step matches the quotes
    MlnParams refit;      ///< MLN fitted to the A&H surface on the PDE grid
    double quote_rms = 0.0;
    double refit_rms = 0.0;
    int calendar_floors = 0;
    int butterfly_floors = 0;
    bool optimizer_ok = true;
};

struct SequenceResult {
    MarginalSet marginals;
    std::vector<CallSlice> surfaces;  ///< A&H call surface per maturity on the PDE grid
    std::vector<SliceReport> reports;
};

/// Sequential Andreasen-Huge mixed-lognormal fit over ascending slices.
SequenceResult fit_sequence(const std::vector<QuoteSlice>& slices, int n_modes, const FitOptions& options = {},
                            const Vector& strike_grid = pde_strike_grid());

/// Equity-like smile quotes (skew steepening at short maturity) with optional
/// Gaussian vol noise; for tests and demos.
std::vector<OptionQuote> synthetic_skew_quotes(const std::vector<double>& maturity_days, double vol_noise = 0.0,
                                               std::uint64_t seed = 7);

}  // namespace markovflow
