#include "markovflow/fokker_planck.hpp"

#include <algorithm>
#include <cmath>

#include "markovflow/error.hpp"
#include "markovflow/tridiagonal.hpp"

namespace markovflow {

double DriftFn::operator()(double x) const noexcept {
    if (x <= grid.lo) return values[0];
    if (x >= grid.hi) return values[values.size() - 1];
    const Index j = grid.locate(x);
    const double w = (x - grid.nodes[j]) / grid.h;
    return (1.0 - w) * values[j] + w * values[j + 1];
}

namespace {

constexpr double kNegativeMassTol = 1e-6;
constexpr double kPositivitySlack = 1e-12;

// Spatial operator for m cells of width h with drift given at the m-1 interior faces.
Tridiagonal fp_operator(const Vector& face_drift, double h, double cap) {
    const Index m = face_drift.size() + 1;
    Tridiagonal A(m);
    const double d = 0.5 / h;
    for (Index k = 0; k + 1 < m; ++k) {
        const double mu = std::clamp(face_drift[k], -cap, cap);
        double a, b;  // flux through face k is a p_k + b p_{k+1}
        if (std::abs(mu) * h <= 1.0) {
            a = 0.5 * mu + d;
            b = 0.5 * mu - d;
        } else {
            a = std::max(mu, 0.0) + d;
            b = std::min(mu, 0.0) - d;
        }
        A.diag[k] -= a / h;
        A.upper[k] -= b / h;
        A.lower[k + 1] += a / h;
        A.diag[k + 1] += b / h;
    }
    return A;
}

// One theta step: (I - theta dt A) p1 = (I + (1 - theta) dt A) p0.
Vector theta_step(const Tridiagonal& A, const Vector& p, double dt, double theta) {
    Vector rhs = p;
    if (theta < 1.0) rhs += (1.0 - theta) * dt * A.apply(p);
    Tridiagonal M = A;
    M.lower *= -theta * dt;
    M.upper *= -theta * dt;
    M.diag = Vector::Ones(A.size()) - theta * dt * A.diag;
    return solve(M, rhs);
}

// Cell-value propagation. `face_drift(k)` gives the face drifts for step k.
template <class FaceDrift>
Vector propagate_cells(Vector p, double h, const PropagatorSpec& spec, FaceDrift face_drift,
                       PropagationStats* stats) {
    if (spec.n_steps < 1) throw Error(ErrorKind::invalid_argument, "need at least one time step");
    if (!(spec.t1 >= spec.t0)) throw Error(ErrorKind::invalid_argument, "propagation needs t1 >= t0");
    PropagationStats local;
    if (spec.t1 == spec.t0) {
        if (stats) *stats = local;
        return p;
    }
    const double dt = (spec.t1 - spec.t0) / spec.n_steps;
    double mass = p.sum() * h;

    auto negative_mass = [&](const Vector& v) { return -v.cwiseMin(0.0).sum() * h; };
    auto advance = [&](const Tridiagonal& A, double step, double theta) {
        Vector next = theta_step(A, p, step, theta);
        if (theta < 1.0 && (!next.allFinite() || next.minCoeff() < -kPositivitySlack)) {
            // Crank-Nicolson step redone as two implicit half steps.
            next = theta_step(A, theta_step(A, p, 0.5 * step, 1.0), 0.5 * step, 1.0);
            ++local.implicit_fallbacks;
        }
        if (!next.allFinite()) throw Error(ErrorKind::instability_detected, "non-finite density");
        const double new_mass = next.sum() * h;
        local.max_mass_defect = std::max(local.max_mass_defect, std::abs(new_mass - mass));
        const double lowest = next.minCoeff();
        local.min_density = std::min(local.min_density, lowest);
        if (lowest < 0.0) {
            const double negative = negative_mass(next);
            if (negative > kNegativeMassTol) {
                throw Error(ErrorKind::instability_detected, "negative density mass " + std::to_string(negative));
            }
            next = next.cwiseMax(0.0);
            next *= mass / (next.sum() * h);
        }
        p = std::move(next);
    };

    for (int k = 0; k < spec.n_steps; ++k) {
        const Tridiagonal A = fp_operator(face_drift(k), h, spec.drift_cap);
        if (spec.scheme == FpScheme::implicit) {
            advance(A, dt, 1.0);
        } else if (k == 0) {
            advance(A, 0.5 * dt, 1.0);
            advance(A, 0.5 * dt, 1.0);
        } else {
            advance(A, dt, 0.5);
        }
    }
    if (stats) *stats = local;
    return p;
}

Vector node_faces(const Vector& mu) {
    const Index n = mu.size();
    return 0.5 * (mu.head(n - 1) + mu.tail(n - 1));
}

DensitySlice finish_density(const Grid& grid, Vector p) {
    DensitySlice out{grid, std::move(p)};
    const double mass = out.mass();
    if (!(mass > 0.0)) throw Error(ErrorKind::degenerate_marginal, "density carries no mass");
    out.values /= mass;
    return out;
}

Vector cells_from_cdf(const MonotoneCdf& F) { return cell_masses(F) / F.grid.h; }

void check_schedule(const DriftSchedule& mu, const PropagatorSpec& spec, Index n) {
    if (static_cast<int>(mu.size()) != spec.n_steps) {
        throw Error(ErrorKind::invalid_argument, "drift schedule length differs from step count");
    }
    for (const auto& v : mu) {
        if (v.size() != n) throw Error(ErrorKind::invalid_argument, "drift schedule size differs from grid");
    }
}

}  // namespace

DensitySlice propagate_density(const DensitySlice& p0, const DriftFn& mu, const PropagatorSpec& spec,
                               PropagationStats* stats) {
    if (mu.values.size() != p0.values.size()) {
        throw Error(ErrorKind::invalid_argument, "drift size differs from grid");
    }
    const Vector faces = node_faces(mu.values);
    Vector p = propagate_cells(p0.values, p0.grid.h, spec, [&](int) -> const Vector& { return faces; }, stats);
    return finish_density(p0.grid, std::move(p));
}

DensitySlice propagate_density(const DensitySlice& p0, const DriftSchedule& mu, const PropagatorSpec& spec,
                               PropagationStats* stats) {
    check_schedule(mu, spec, p0.values.size());
    Vector p = propagate_cells(p0.values, p0.grid.h, spec, [&](int k) { return node_faces(mu[k]); }, stats);
    return finish_density(p0.grid, std::move(p));
}

// On the cell-midpoint grid the interior faces are the original nodes 1..n-2.
MonotoneCdf propagate_cdf(const MonotoneCdf& F0, const DriftFn& mu, const PropagatorSpec& spec,
                          PropagationStats* stats) {
    const Index n = F0.values.size();
    if (mu.values.size() != n) throw Error(ErrorKind::invalid_argument, "drift size differs from grid");
    if (spec.t1 == spec.t0) return F0;
    const Vector faces = mu.values.segment(1, n - 2);
    Vector p = propagate_cells(cells_from_cdf(F0), F0.grid.h, spec,
                               [&](int) -> const Vector& { return faces; }, stats);
    return cdf_from_cell_masses(F0.grid, p.cwiseMax(0.0));
}

MonotoneCdf propagate_cdf(const MonotoneCdf& F0, const DriftSchedule& mu, const PropagatorSpec& spec,
                          PropagationStats* stats) {
    const Index n = F0.values.size();
    check_schedule(mu, spec, n);
    if (spec.t1 == spec.t0) return F0;
    Vector p = propagate_cells(cells_from_cdf(F0), F0.grid.h, spec,
                               [&](int k) -> Vector { return mu[k].segment(1, n - 2); }, stats);
    return cdf_from_cell_masses(F0.grid, p.cwiseMax(0.0));
}

}  // namespace markovflow
