#include "markovflow/tridiagonal.hpp"

#include <cmath>

#include "markovflow/error.hpp"

namespace markovflow {

Vector Tridiagonal::apply(const Vector& u) const {
    const Index n = size();
    Vector out = diag.cwiseProduct(u);
    for (Index i = 1; i < n; ++i) out[i] += lower[i] * u[i - 1];
    for (Index i = 0; i + 1 < n; ++i) out[i] += upper[i] * u[i + 1];
    return out;
}

Eigen::MatrixXd Tridiagonal::dense() const {
    const Index n = size();
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
        m(i, i) = diag[i];
        if (i > 0) m(i, i - 1) = lower[i];
        if (i + 1 < n) m(i, i + 1) = upper[i];
    }
    return m;
}

Vector solve(const Tridiagonal& A, const Vector& rhs) {
    const Index n = A.size();
    Vector c(n);
    Vector d(n);
    double pivot = A.diag[0];
    if (std::abs(pivot) < 1e-300) throw Error(ErrorKind::solver_singularity, "zero pivot");
    c[0] = A.upper[0] / pivot;
    d[0] = rhs[0] / pivot;
    for (Index i = 1; i < n; ++i) {
        pivot = A.diag[i] - A.lower[i] * c[i - 1];
        if (std::abs(pivot) < 1e-300) throw Error(ErrorKind::solver_singularity, "zero pivot");
        c[i] = (i + 1 < n) ? A.upper[i] / pivot : 0.0;
        d[i] = (rhs[i] - A.lower[i] * d[i - 1]) / pivot;
    }
    Vector x(n);
    x[n - 1] = d[n - 1];
    for (Index i = n - 2; i >= 0; --i) x[i] = d[i] - c[i] * x[i + 1];
    return x;
}

}  // namespace markovflow
