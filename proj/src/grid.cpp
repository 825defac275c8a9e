#include "markovflow/grid.hpp"

#include <algorithm>
#include <cmath>

#include "markovflow/error.hpp"
#include "markovflow/normal.hpp"

namespace markovflow {

Index Grid::locate(double x) const noexcept {
    const Index n = size();
    const double s = std::floor((x - lo) / h);
    if (!(s > 0.0)) return 0;
    if (s >= static_cast<double>(n - 2)) return n - 2;
    return static_cast<Index>(s);
}

Grid build_uniform_grid(Index n, double lo, double hi) {
    if (n < 3 || !(lo < hi) || !std::isfinite(lo) || !std::isfinite(hi)) {
        throw Error(ErrorKind::invalid_bounds, "grid needs n >= 3 and lo < hi");
    }
    Grid g;
    g.lo = lo;
    g.hi = hi;
    g.h = (hi - lo) / static_cast<double>(n - 1);
    g.nodes.resize(n);
    for (Index i = 0; i < n; ++i) g.nodes[i] = lo + static_cast<double>(i) * g.h;
    g.nodes[n - 1] = hi;
    return g;
}

double DensitySlice::mass() const {
    const Index n = values.size();
    return grid.h * (values.sum() - 0.5 * (values[0] + values[n - 1]));
}

double DensitySlice::mean() const {
    const Index n = values.size();
    const Vector xp = grid.nodes.cwiseProduct(values);
    return grid.h * (xp.sum() - 0.5 * (xp[0] + xp[n - 1]));
}

double MonotoneCdf::operator()(double x) const noexcept {
    const Index n = values.size();
    if (x <= grid.lo) return values[0];
    if (x >= grid.hi) return values[n - 1];
    const Index j = grid.locate(x);
    const double w = (x - grid.nodes[j]) / grid.h;
    return (1.0 - w) * values[j] + w * values[j + 1];
}

FlowSlice::FlowSlice(Grid g, Vector v) : grid(std::move(g)), values(std::move(v)) {}

double FlowSlice::operator()(double x) const noexcept {
    const Index n = values.size();
    if (x <= grid.lo) return values[0] + (x - grid.lo) * (values[1] - values[0]) / grid.h;
    if (x >= grid.hi) return values[n - 1] + (x - grid.hi) * (values[n - 1] - values[n - 2]) / grid.h;
    const Index j = grid.locate(x);
    const double w = (x - grid.nodes[j]) / grid.h;
    return (1.0 - w) * values[j] + w * values[j + 1];
}

namespace {

// Piecewise-linear inverse of nondecreasing samples `v` over `nodes`.
double invert_samples(const Vector& nodes, const Vector& v, double y) {
    const Index n = v.size();
    const double* first = v.data();
    const double* last = v.data() + n;
    const Index a = std::lower_bound(first, last, y) - first;  // first v >= y
    const Index b = (std::upper_bound(first, last, y) - first) - 1;  // last v <= y
    if (a < n && v[a] == y) return 0.5 * (nodes[a] + nodes[std::max(a, b)]);
    // v[a-1] < y < v[a]
    const double t = (y - v[a - 1]) / (v[a] - v[a - 1]);
    return nodes[a - 1] + t * (nodes[a] - nodes[a - 1]);
}

}  // namespace

FlowSlice::Inverse FlowSlice::inverse(double y) const noexcept {
    const Index n = values.size();
    if (y < values[0]) return {grid.lo, true};
    if (y > values[n - 1]) return {grid.hi, true};
    return {invert_samples(grid.nodes, values, y), false};
}

MonotoneCdf cdf_from_density(const DensitySlice& p) {
    const Index n = p.values.size();
    Vector m(n - 1);
    for (Index j = 0; j + 1 < n; ++j) {
        m[j] = 0.5 * p.grid.h * (std::max(p.values[j], 0.0) + std::max(p.values[j + 1], 0.0));
    }
    return cdf_from_cell_masses(p.grid, m);
}

Vector cell_masses(const MonotoneCdf& F) {
    const Index n = F.values.size();
    Vector m(n - 1);
    for (Index j = 0; j + 1 < n; ++j) {
        const double d = F.values[j] >= 0.5 ? F.survival(j) - F.survival(j + 1) : F.values[j + 1] - F.values[j];
        m[j] = std::max(d, 0.0);
    }
    m[0] += std::max(F.values[0], 0.0);
    m[n - 2] += std::max(F.survival(n - 1), 0.0);
    return m;
}

MonotoneCdf cdf_from_cell_masses(const Grid& grid, const Vector& masses) {
    const Index n = grid.size();
    if (masses.size() != n - 1) throw Error(ErrorKind::invalid_argument, "need one mass per grid cell");
    const double total = masses.sum();
    if (!(total > 0.0)) throw Error(ErrorKind::degenerate_marginal, "CDF carries no mass");
    MonotoneCdf F{grid, Vector::Zero(n), Vector::Zero(n)};
    for (Index j = 0; j + 1 < n; ++j) F.values[j + 1] = F.values[j] + masses[j] / total;
    for (Index j = n - 1; j > 0; --j) F.upper[j - 1] = F.upper[j] + masses[j - 1] / total;
    for (Index j = 0; j < n; ++j) {
        if (F.upper[j] < 0.5) F.values[j] = 1.0 - F.upper[j];
        else F.upper[j] = 1.0 - F.values[j];
    }
    F.values = F.values.cwiseMax(0.0).cwiseMin(1.0);
    F.upper = F.upper.cwiseMax(0.0).cwiseMin(1.0);
    return F;
}

DensitySlice density_from_cdf(const MonotoneCdf& F) {
    const Index n = F.values.size();
    const Vector& v = F.values;
    Vector m(n);
    m[0] = 0.5 * (v[0] + v[1]);
    for (Index j = 1; j < n - 1; ++j) m[j] = 0.5 * (v[j + 1] - v[j - 1]);
    m[n - 1] = 1.0 - 0.5 * (v[n - 1] + v[n - 2]);
    m = m.cwiseMax(0.0);
    const double total = m.sum();
    if (!(total > 0.0)) throw Error(ErrorKind::degenerate_marginal, "CDF carries no mass");
    return DensitySlice{F.grid, m / (total * F.grid.h)};
}

double quantile(const MonotoneCdf& F, double q) {
    if (!(q >= 0.0 && q <= 1.0)) {
        throw Error(ErrorKind::out_of_range_probability, "quantile level outside [0,1]");
    }
    const Index n = F.values.size();
    if (q < F.values[0]) return F.grid.lo;
    if (q > F.values[n - 1]) return F.grid.hi;
    return invert_samples(F.grid.nodes, F.values, q);
}

namespace {

FlowSlice monotone_flow(const Grid& grid, Vector out) {
    const Index n = out.size();
    if (!out.allFinite()) throw Error(ErrorKind::non_monotone_result, "non-finite flow value");
    for (Index j = 1; j < n; ++j) {
        if (out[j] < out[j - 1]) {
            const double scale = std::max({1.0, std::abs(out[j]), std::abs(out[j - 1])});
            if (out[j - 1] - out[j] > 1e-10 * scale) {
                throw Error(ErrorKind::non_monotone_result, "composed flow decreases");
            }
            out[j] = out[j - 1];
        }
    }
    return FlowSlice(grid, std::move(out));
}

}  // namespace

FlowSlice compose_quantile_cdf(const QuantileFn& target_quantile, const MonotoneCdf& flow_cdf) {
    const Index n = flow_cdf.values.size();
    Vector out(n);
    for (Index j = 0; j < n; ++j) {
        const double q = std::clamp(flow_cdf.values[j], kCdfClamp, 1.0 - kCdfClamp);
        out[j] = target_quantile(q);
    }
    return monotone_flow(flow_cdf.grid, std::move(out));
}

FlowSlice compose_quantile_cdf(const QuantileFn& lower_quantile, const QuantileFn& upper_quantile,
                               const MonotoneCdf& flow_cdf) {
    const Index n = flow_cdf.values.size();
    Vector out(n);
    for (Index j = 0; j < n; ++j) {
        const double q = flow_cdf.values[j];
        out[j] = q <= 0.5 ? lower_quantile(std::max(q, kCdfClamp))
                          : upper_quantile(std::max(flow_cdf.survival(j), kCdfClamp));
    }
    return monotone_flow(flow_cdf.grid, std::move(out));
}

MonotoneCdf resample(const MonotoneCdf& F, const Grid& target) {
    const Index n = target.size();
    const Index m = F.values.size();
    Vector S(m);
    for (Index j = 0; j < m; ++j) S[j] = F.survival(j);
    MonotoneCdf out{target, Vector(n), Vector(n)};
    for (Index j = 0; j < n; ++j) {
        const double x = target[j];
        if (x < F.grid.lo) {
            out.values[j] = 0.0;
            out.upper[j] = 1.0;
        } else if (x > F.grid.hi) {
            out.values[j] = 1.0;
            out.upper[j] = 0.0;
        } else {
            out.values[j] = interp_linear(F.grid.nodes, F.values, x);
            out.upper[j] = interp_linear(F.grid.nodes, S, x);
        }
    }
    return cdf_from_cell_masses(target, cell_masses(out));
}

FlowSlice resample(const FlowSlice& f, const Grid& target) {
    const Index n = target.size();
    FlowSlice out(target, Vector(n));
    for (Index j = 0; j < n; ++j) out.values[j] = f(target[j]);
    const double x_lo = f.grid[std::max<Index>(f.active_lo, 0)];
    const double x_hi = f.grid[f.last_active()];
    out.active_lo = n - 1;
    out.active_hi = 0;
    for (Index j = 0; j < n; ++j) {
        if (target[j] >= x_lo - 1e-12 && target[j] <= x_hi + 1e-12) {
            out.active_lo = std::min(out.active_lo, j);
            out.active_hi = std::max(out.active_hi, j);
        }
    }
    if (out.active_hi < out.active_lo) {
        out.active_lo = 0;
        out.active_hi = -1;
    }
    return out;
}

MonotoneCdf normal_cdf_on(const Grid& grid, double mean, double variance) {
    const double sd = std::sqrt(variance);
    Vector v(grid.size());
    Vector u(grid.size());
    for (Index j = 0; j < grid.size(); ++j) {
        v[j] = norm_cdf((grid[j] - mean) / sd);
        u[j] = norm_cdf(-(grid[j] - mean) / sd);
    }
    return MonotoneCdf{grid, v, u};
}

DensitySlice normal_density_on(const Grid& grid, double mean, double variance) {
    const double sd = std::sqrt(variance);
    Vector v(grid.size());
    for (Index j = 0; j < grid.size(); ++j) v[j] = norm_pdf((grid[j] - mean) / sd) / sd;
    return DensitySlice{grid, v};
}

double interp_linear(const Vector& xs, const Vector& ys, double x) noexcept {
    const Index n = xs.size();
    if (x <= xs[0]) return ys[0];
    if (x >= xs[n - 1]) return ys[n - 1];
    const Index j = (std::upper_bound(xs.data(), xs.data() + n, x) - xs.data()) - 1;
    const double t = (x - xs[j]) / (xs[j + 1] - xs[j]);
    return ys[j] + t * (ys[j + 1] - ys[j]);
}

Vector diff1(const Vector& v, double h) {
    const Index n = v.size();
    Vector d(n);
    d[0] = (v[1] - v[0]) / h;
    d[n - 1] = (v[n - 1] - v[n - 2]) / h;
    for (Index j = 1; j < n - 1; ++j) d[j] = (v[j + 1] - v[j - 1]) / (2.0 * h);
    return d;
}

Vector diff2(const Vector& v, double h) {
    const Index n = v.size();
    Vector d(n);
    for (Index j = 1; j < n - 1; ++j) d[j] = (v[j + 1] - 2.0 * v[j] + v[j - 1]) / (h * h);
    d[0] = d[1];
    d[n - 1] = d[n - 2];
    return d;
}

}  // namespace markovflow
