#include "markovflow/normal.hpp"

#include <cmath>
#include <limits>

#include "markovflow/error.hpp"

namespace markovflow {

double norm_pdf(double z) noexcept { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }

double norm_cdf(double z) noexcept { return 0.5 * std::erfc(-z * M_SQRT1_2); }

double norm_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw Error(ErrorKind::out_of_range_probability, "norm_quantile needs 0 < p < 1");
    }
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                   -2.759285104469687e+02, 1.383577518672690e+02,
                                   -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                   -1.556989798598866e+02, 6.680131188771972e+01,
                                   -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                   -2.400758277161838e+00, -2.549732539343734e+00,
                                   4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                   2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // Halley refinement; the error term is formed on the smaller tail to keep precision.
    const double e = (p < 0.5) ? norm_cdf(x) - p : (1.0 - p) - norm_cdf(-x);
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
    return x - u / (1.0 + 0.5 * x * u);
}

double black_call(double forward, double total_vol, double strike) noexcept {
    if (strike <= 0.0) return forward - strike;
    if (total_vol <= 0.0) return std::max(forward - strike, 0.0);
    const double d1 = (std::log(forward / strike) + 0.5 * total_vol * total_vol) / total_vol;
    const double d2 = d1 - total_vol;
    return forward * norm_cdf(d1) - strike * norm_cdf(d2);
}

double bachelier_call(double forward, double total_vol, double strike) noexcept {
    const double m = forward - strike;
    if (total_vol <= 0.0) return std::max(m, 0.0);
    const double d = m / total_vol;
    return m * norm_cdf(d) + total_vol * norm_pdf(d);
}

namespace {

template <class Price>
double invert_monotone_vol(Price price_of, double target, double lo, double hi) {
    double f_lo = price_of(lo) - target;
    double f_hi = price_of(hi) - target;
    int expand = 0;
    while (f_hi < 0.0 && expand++ < 60) {
        lo = hi;
        f_lo = f_hi;
        hi *= 2.0;
        f_hi = price_of(hi) - target;
    }
    if (f_lo > 0.0 || f_hi < 0.0) return std::numeric_limits<double>::quiet_NaN();
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double f_mid = price_of(mid) - target;
        if (f_mid < 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
        if (hi - lo <= 1e-15 * std::max(1.0, hi)) break;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

double black_implied_total_vol(double forward, double strike, double price) {
    const double intrinsic = std::max(forward - strike, 0.0);
    if (!(price > intrinsic) || !(price < forward)) return std::numeric_limits<double>::quiet_NaN();
    return invert_monotone_vol([&](double s) { return black_call(forward, s, strike); }, price,
                               1e-10, 1.0);
}

double bachelier_implied_total_vol(double forward, double strike, double price) {
    const double intrinsic = std::max(forward - strike, 0.0);
    if (!(price > intrinsic)) return std::numeric_limits<double>::quiet_NaN();
    return invert_monotone_vol([&](double s) { return bachelier_call(forward, s, strike); }, price,
                               1e-14, std::max(1e-6, std::abs(forward)));
}

}  // namespace markovflow
