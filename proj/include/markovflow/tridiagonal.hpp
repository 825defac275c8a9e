#pragma once

#include "markovflow/grid.hpp"

namespace markovflow {

/// Tridiagonal matrix in band storage: row i is lower[i]*u[i-1] + diag[i]*u[i] + upper[i]*u[i+1].
/// lower[0] and upper[n-1] are ignored.
struct Tridiagonal {
    Vector lower;
    Vector diag;
    Vector upper;

    explicit Tridiagonal(Index n = 0)
        : lower(Vector::Zero(n)), diag(Vector::Zero(n)), upper(Vector::Zero(n)) {}

    Index size() const noexcept { return diag.size(); }

    Vector apply(const Vector& u) const;
    Eigen::MatrixXd dense() const;
};

/// Thomas algorithm. Throws solver-singularity on a vanishing pivot.
Vector solve(const Tridiagonal& A, const Vector& rhs);

}  // namespace markovflow
