#pragma once

namespace markovflow {

inline constexpr double kInvSqrt2Pi = 0.398942280401432677939946059934;

/// Standard normal density.
double norm_pdf(double z) noexcept;

/// Standard normal CDF, accurate in both tails (erfc based).
double norm_cdf(double z) noexcept;

/// Inverse standard normal CDF. Acklam's rational approximation polished by
/// one Halley step; relative accuracy ~1e-15. Requires 0 < p < 1.
double norm_quantile(double p);

/// Undiscounted Black call E[(F e^{sW - s^2/2} - K)^+] with total vol s = sigma*sqrt(T).
double black_call(double forward, double total_vol, double strike) noexcept;

/// Undiscounted Bachelier call with absolute total vol s.
double bachelier_call(double forward, double total_vol, double strike) noexcept;

/// Black implied total vol from an undiscounted call price, by bracketed Newton.
/// Returns NaN when the price lies outside the no-arbitrage band.
double black_implied_total_vol(double forward, double strike, double price);

/// Bachelier (absolute) implied total vol from an undiscounted call price.
double bachelier_implied_total_vol(double forward, double strike, double price);

}  // namespace markovflow
