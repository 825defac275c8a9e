#include <cmath>
#include <complex>
#include <unsupported/Eigen/FFT>
#include <vector>

#include "markovflow/brownian_flow.hpp"
#include "markovflow/error.hpp"

namespace markovflow {

Vector heat_convolve(const Grid& grid, const Vector& values, double tau) {
    if (!(tau > 0.0)) throw Error(ErrorKind::nonpositive_time, "heat convolution needs tau > 0");
    const Index n = values.size();
    const double h = grid.h;
    const Index pad = std::max<Index>(1, static_cast<Index>(std::ceil(8.0 * std::sqrt(tau) / h)));
    const Index len = n + 2 * pad;

    std::size_t fft_len = 1;
    while (fft_len < static_cast<std::size_t>(len + 2 * pad)) fft_len <<= 1;

    // Residual after removing the chord through the end values.
    const double slope_chord = (values[n - 1] - values[0]) / (grid.hi - grid.lo);
    auto chord = [&](double x) { return values[0] + slope_chord * (x - grid.lo); };
    const double left_slope = (values[1] - values[0]) / h;
    const double right_slope = (values[n - 1] - values[n - 2]) / h;

    std::vector<double> signal(fft_len, 0.0);
    for (Index k = 0; k < len; ++k) {
        const Index j = k - pad;
        const double x = grid.lo + static_cast<double>(j) * h;
        double v;
        if (j < 0) {
            v = values[0] + left_slope * (x - grid.lo);
        } else if (j >= n) {
            v = values[n - 1] + right_slope * (x - grid.hi);
        } else {
            v = values[j];
        }
        signal[k] = v - chord(x);
    }

    std::vector<double> kernel(fft_len, 0.0);
    double mass = 0.0;
    for (Index m = -pad; m <= pad; ++m) {
        const double x = static_cast<double>(m) * h;
        const double w = std::exp(-0.5 * x * x / tau);
        kernel[static_cast<std::size_t>((m + static_cast<Index>(fft_len)) % static_cast<Index>(fft_len))] = w;
        mass += w;
    }
    for (double& w : kernel) w /= mass;

    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> sig_hat, ker_hat;
    fft.fwd(sig_hat, signal);
    fft.fwd(ker_hat, kernel);
    for (std::size_t i = 0; i < sig_hat.size(); ++i) sig_hat[i] *= ker_hat[i];
    std::vector<double> conv;
    fft.inv(conv, sig_hat);

    Vector out(n);
    for (Index j = 0; j < n; ++j) out[j] = conv[static_cast<std::size_t>(j + pad)] + chord(grid[j]);
    return out;
}

}  // namespace markovflow
