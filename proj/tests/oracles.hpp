#pragma once

// Closed forms used as test oracles, written out independently of the library.

#include <algorithm>
#include <cmath>

namespace oracle {

inline double Phi(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
inline double phi(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI); }

inline double black(double F, double s, double K) {
    if (K <= 0.0) return F - K;
    const double d1 = (std::log(F / K) + 0.5 * s * s) / s;
    return F * Phi(d1) - K * Phi(d1 - s);
}

// p(y) = lambda/2 exp(-lambda|y|), lambda = 1/sqrt(t)
inline double de_lambda(double t) { return 1.0 / std::sqrt(t); }
inline double de_cdf(double t, double y) {
    const double l = de_lambda(t);
    return y < 0.0 ? 0.5 * std::exp(l * y) : 1.0 - 0.5 * std::exp(-l * y);
}
inline double de_quantile(double t, double q) {
    const double l = de_lambda(t);
    return q < 0.5 ? std::log(2.0 * q) / l : -std::log(2.0 * (1.0 - q)) / l;
}
inline double de_call(double t, double K) {
    const double l = de_lambda(t);
    return std::max(-K, 0.0) + std::exp(-l * std::abs(K)) / (2.0 * l);
}
inline double de_flow(double t, double x) { return (x < 0 ? -1.0 : 1.0) * x * x / (4.0 * std::sqrt(t)) + x; }
inline double de_sigma2(double t, double y) { return 1.0 + std::abs(y) / std::sqrt(t); }

}  // namespace oracle
