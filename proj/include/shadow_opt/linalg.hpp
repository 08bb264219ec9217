#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace shadow_opt {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct SymmetricEigen {
  Vector values;   // ascending
  Matrix vectors;  // orthonormal columns
};

/// Flips each column so that its first component with magnitude above `tol`
/// is positive. Makes eigen-bases reproducible across runs and platforms.
inline void normalize_column_signs(Matrix& columns, double tol = 1e-12) {
  for (Eigen::Index j = 0; j < columns.cols(); ++j) {
    for (Eigen::Index i = 0; i < columns.rows(); ++i) {
      if (std::abs(columns(i, j)) > tol) {
        if (columns(i, j) < 0.0) columns.col(j) *= -1.0;
        break;
      }
    }
  }
}

inline SymmetricEigen symmetric_eigen(const Matrix& sym) {
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
  SymmetricEigen out{solver.eigenvalues(), solver.eigenvectors()};
  normalize_column_signs(out.vectors);
  return out;
}

/// Relative asymmetry ||A - A^T||_F / max(1, ||A||_F).
inline double relative_asymmetry(const Matrix& a) {
  const double scale = std::max(1.0, a.norm());
  return (a - a.transpose()).norm() / scale;
}

namespace detail {

// cosh(sqrt(z)) and sinh(sqrt(z))/sqrt(z) for real z of either sign.
// Near z = 0 the series is used so the critically damped case is the exact
// limit of the neighbouring closed forms.
inline void cosh_sinhc(double z, double& c, double& s) {
  if (std::abs(z) < 1e-3) {
    // Terms through z^5 leave a truncation error below 1e-19.
    c = 1.0 + z / 2.0 + z * z / 24.0 + z * z * z / 720.0 + z * z * z * z / 40320.0 +
        z * z * z * z * z / 3628800.0;
    s = 1.0 + z / 6.0 + z * z / 120.0 + z * z * z / 5040.0 + z * z * z * z / 362880.0 +
        z * z * z * z * z / 39916800.0;
  } else if (z > 0.0) {
    const double r = std::sqrt(z);
    c = std::cosh(r);
    s = std::sinh(r) / r;
  } else {
    const double r = std::sqrt(-z);
    c = std::cos(r);
    s = std::sin(r) / r;
  }
}

}  // namespace detail

/// exp(t * [[0, 1], [-lambda, -alpha]]), the propagator of
/// q'' + alpha q' + lambda q = 0 in (position, velocity) coordinates.
///
/// Uses exp(tM) = e^{st} (cosh(qt) I + t sinhc(qt) (M - sI)) with s = tr(M)/2 and
/// q^2 = s^2 - det(M). The same expression covers the overdamped,
/// underdamped and critically damped (defective) regimes.
inline Eigen::Matrix2d damped_oscillator_propagator(double lambda, double alpha, double t) {
  const double s = -alpha / 2.0;
  const double disc = s * s - lambda;  // q^2
  double c = 0.0;
  double sc = 0.0;
  detail::cosh_sinhc(disc * t * t, c, sc);
  Eigen::Matrix2d shifted;
  shifted << -s, 1.0, -lambda, -alpha - s;
  const Eigen::Matrix2d result = c * Eigen::Matrix2d::Identity() + (t * sc) * shifted;
  return std::exp(s * t) * result;
}

}  // namespace shadow_opt
