#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dynamics.hpp"
#include "error.hpp"
#include "landscape.hpp"
#include "linalg.hpp"

namespace shadow_opt {

/// The sup of gradient norms along a flow is only known to be finite, so the
/// empirical max over the stored samples is inflated to cover peaks between
/// samples.
inline constexpr double kEllSafetyFactor = 1.1;

/// Eigenvalue moduli within this band of 1 are treated as on the unit circle.
inline constexpr double kHyperbolicityTolerance = 1e-8;

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Gradient bound and defects

template <class State>
double estimate_ell(const Objective& obj, const Orbit<State>& orbit) {
  double peak = 0.0;
  for (const State& s : orbit) peak = std::max(peak, obj.gradient(position_of(s)).norm());
  return kEllSafetyFactor * peak;
}

struct DefectReport {
  std::vector<double> per_step_defects;  // ||y_{k+1} - Psi(y_k)||, k = 0..K-1
  double max_defect = 0.0;
  std::optional<double> predicted_bound;
};

template <class State, class Stepper>
DefectReport measure_defect(const Stepper& map, const Orbit<State>& pseudo_orbit,
                            std::optional<double> predicted_bound = std::nullopt) {
  if (pseudo_orbit.size() < 2) {
    throw Error(ErrorKind::InvalidArgument, "defects need an orbit with at least two points");
  }
  DefectReport report;
  report.predicted_bound = predicted_bound;
  report.per_step_defects.reserve(pseudo_orbit.size() - 1);
  for (std::size_t k = 0; k + 1 < pseudo_orbit.size(); ++k) {
    const double d = distance(pseudo_orbit[k + 1], map(pseudo_orbit[k]));
    report.per_step_defects.push_back(d);
    report.max_defect = std::max(report.max_defect, d);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Closed-form bounds

/// Local error of one GD step against the gradient flow: l L h^2 / 2.
inline double bound_defect_gd(double ell, double smoothness, double h) {
  return 0.5 * ell * smoothness * h * h;
}

/// Local error of one semi-implicit HB step against the HB flow started at
/// zero velocity: l (alpha + 1 + L) h^2.
inline double bound_defect_hb(double ell, double smoothness, double alpha, double h) {
  return ell * (alpha + 1.0 + smoothness) * h * h;
}

namespace detail {
inline double require_mu(std::optional<double> mu) {
  if (!mu || !(*mu > 0.0)) {
    throw Error(ErrorKind::NotStronglyConvex, "a positive strong-convexity constant is required");
  }
  return *mu;
}
}  // namespace detail

/// Shadowing radius for GD on a strongly convex objective: h l L / (2 mu).
inline double bound_radius_sc(double h, double ell, double smoothness, std::optional<double> mu) {
  return h * ell * smoothness / (2.0 * detail::require_mu(mu));
}

/// Largest step with radius eps: min{2 mu eps / (L l), 1/L}.
inline double bound_step_sc(double eps, double ell, double smoothness, std::optional<double> mu) {
  const double m = detail::require_mu(mu);
  return std::min(2.0 * m * eps / (smoothness * ell), 1.0 / smoothness);
}

/// Step bound near a quadratic saddle: min{mu eps/(L l), gamma eps/(2 L l), 1/L}.
/// A missing mu (no stable directions) or gamma (no unstable directions)
/// drops the corresponding term.
inline double bound_step_saddle(double eps, double ell, double smoothness,
                                std::optional<double> mu, std::optional<double> gamma) {
  double step = 1.0 / smoothness;
  if (mu) step = std::min(step, *mu * eps / (smoothness * ell));
  if (gamma) step = std::min(step, *gamma * eps / (2.0 * smoothness * ell));
  return step;
}

/// Smallest eps for which `bound_step_saddle` admits h (assuming h <= 1/L).
inline double radius_saddle(double h, double ell, double smoothness, std::optional<double> mu,
                            std::optional<double> gamma) {
  double eps = 0.0;
  if (mu) eps = std::max(eps, h * smoothness * ell / *mu);
  if (gamma) eps = std::max(eps, 2.0 * h * smoothness * ell / *gamma);
  return eps;
}

namespace detail {
inline double saddle_margin(std::optional<double> mu, std::optional<double> gamma) {
  const double m = mu.value_or(kInfinity);
  const double g = gamma ? *gamma / 2.0 : kInfinity;
  const double out = std::min(m, g);
  if (!std::isfinite(out)) {
    throw Error(ErrorKind::InvalidArgument, "quadratic has no nonzero curvature");
  }
  return out;
}
}  // namespace detail

/// Step bound for a perturbed quadratic saddle:
/// eps (min{gamma/2, mu} - 4 L_phi) / (2 l L).
inline double bound_step_perturbed(double eps, double ell, double smoothness,
                                   std::optional<double> mu, std::optional<double> gamma,
                                   double lipschitz_phi) {
  const double margin = detail::saddle_margin(mu, gamma);
  if (!(margin > 4.0 * lipschitz_phi)) {
    throw Error(ErrorKind::PerturbationTooLarge,
                "min{mu, gamma/2} = " + std::to_string(margin) + " must exceed 4 L_phi = " +
                    std::to_string(4.0 * lipschitz_phi));
  }
  return eps * (margin - 4.0 * lipschitz_phi) / (2.0 * ell * smoothness);
}

/// Inverse of `bound_step_perturbed` in eps.
inline double radius_perturbed(double h, double ell, double smoothness, std::optional<double> mu,
                               std::optional<double> gamma, double lipschitz_phi) {
  const double margin = detail::saddle_margin(mu, gamma);
  if (!(margin > 4.0 * lipschitz_phi)) {
    throw Error(ErrorKind::PerturbationTooLarge, "min{mu, gamma/2} must exceed 4 L_phi");
  }
  return 2.0 * h * ell * smoothness / (margin - 4.0 * lipschitz_phi);
}

/// Step bound for SGD with gradient noise bounded by R: 2 (mu eps - R) / (l L).
inline double bound_step_sgd(double eps, double ell, double smoothness, std::optional<double> mu,
                             double noise_bound) {
  const double m = detail::require_mu(mu);
  if (!(m * eps > noise_bound)) {
    throw Error(ErrorKind::NoiseDominates, "mu * eps must exceed the noise bound R");
  }
  return 2.0 * (m * eps - noise_bound) / (ell * smoothness);
}

/// Deviation envelope of a non-expanding map after k steps: delta k.
inline double bound_convex_growth(double delta, std::size_t k) {
  return delta * static_cast<double>(k);
}

// ---------------------------------------------------------------------------
// Reports

enum class Regime { contraction, expansion, hyperbolic, perturbed, convex_growth, sgd };

inline std::string to_string(Regime r) {
  switch (r) {
    case Regime::contraction: return "contraction";
    case Regime::expansion: return "expansion";
    case Regime::hyperbolic: return "hyperbolic";
    case Regime::perturbed: return "perturbed";
    case Regime::convex_growth: return "convex_growth";
    case Regime::sgd: return "sgd";
  }
  return "unknown";
}

template <class State>
struct ShadowReport {
  explicit ShadowReport(Orbit<State> orbit) : shadow(std::move(orbit)) {}

  Orbit<State> shadow;
  std::vector<double> deviations;  // ||x_k - y_k||
  double max_deviation = 0.0;
  double predicted_radius = 0.0;   // NaN when no Euclidean guarantee exists
  double observed_defect = 0.0;    // max one-step defect of the pseudo-orbit
  Regime regime = Regime::contraction;
  std::size_t iterations_used = 0;
  // Deviations are Euclidean, but the guarantee for a non-symmetric linear
  // map only holds in an adapted norm.
  bool adapted_norm_caveat = false;
  std::vector<double> fixed_point_changes;  // sup-norm change per T application
};

namespace detail {

template <class State>
ShadowReport<State> make_report(Orbit<State> shadow, const Orbit<State>& pseudo_orbit,
                                 Regime regime, double predicted, double observed_defect) {
  if (shadow.size() != pseudo_orbit.size()) {
    throw Error(ErrorKind::InvalidArgument, "shadow and pseudo-orbit lengths differ");
  }
  ShadowReport<State> report(std::move(shadow));
  report.predicted_radius = predicted;
  report.observed_defect = observed_defect;
  report.regime = regime;
  report.deviations.reserve(pseudo_orbit.size());
  for (std::size_t k = 0; k < pseudo_orbit.size(); ++k) {
    const double d = distance(report.shadow[k], pseudo_orbit[k]);
    report.deviations.push_back(d);
    report.max_deviation = std::max(report.max_deviation, d);
  }
  return report;
}

template <class State, class Stepper>
double observed_defect(const Stepper& map, const Orbit<State>& pseudo_orbit) {
  if (pseudo_orbit.size() < 2) return 0.0;
  return measure_defect(map, pseudo_orbit).max_defect;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Contraction / non-expansion / expansion

/// Shadow of a pseudo-orbit of a map contracting with factor rho: the true
/// orbit from x0 = y0. Its deviation is at most delta/(1 - rho), reported as
/// the predicted radius.
template <class State, class Stepper>
ShadowReport<State> shadow_contraction(const Stepper& map, const Orbit<State>& pseudo_orbit,
                                       double rho) {
  if (!(rho >= 0.0 && rho < 1.0)) {
    throw Error(ErrorKind::NotContracting, "contraction factor " + std::to_string(rho) +
                                               " is not in [0, 1)");
  }
  const double delta = detail::observed_defect(map, pseudo_orbit);
  auto shadow = generate_orbit(map, pseudo_orbit.front(), pseudo_orbit.size() - 1,
                               pseudo_orbit.step(), OrbitKind::algorithm);
  return detail::make_report(std::move(shadow), pseudo_orbit, Regime::contraction,
                             delta / (1.0 - rho), delta);
}

/// Orbit from x0 = y0 of a non-expanding map; deviation at step k is at most
/// delta k. The predicted radius is the envelope at the last step.
template <class State, class Stepper>
ShadowReport<State> shadow_nonexpanding(const Stepper& map, const Orbit<State>& pseudo_orbit) {
  const double delta = detail::observed_defect(map, pseudo_orbit);
  auto shadow = generate_orbit(map, pseudo_orbit.front(), pseudo_orbit.size() - 1,
                               pseudo_orbit.step(), OrbitKind::algorithm);
  return detail::make_report(std::move(shadow), pseudo_orbit, Regime::convex_growth,
                             bound_convex_growth(delta, pseudo_orbit.size() - 1), delta);
}

/// Shadow of a pseudo-orbit of the expanding linear map x -> A x.
///
/// Sets x_K = y_K and pulls it back K times with A^{-1}, which truncates the
/// limit x0 = lim Psi^{-k}(y_k); the shadow is the forward orbit from there.
/// With rho_u the smallest singular value of A, the deviation is at most
/// delta / (1 - 1/rho_u).
inline ShadowReport<Vector> shadow_expansion(const Matrix& map, const Orbit<Vector>& pseudo_orbit) {
  if (map.rows() != map.cols()) throw Error(ErrorKind::InvalidArgument, "map must be square");
  Eigen::JacobiSVD<Matrix> svd(map);
  const Vector sv = svd.singularValues();
  const double smax = sv.size() ? sv.maxCoeff() : 0.0;
  const double smin = sv.size() ? sv.minCoeff() : 0.0;
  if (!(smin > 1e-14 * std::max(1.0, smax))) {
    throw Error(ErrorKind::SingularMap, "linear map is not invertible");
  }
  if (!(smin > 1.0)) {
    throw Error(ErrorKind::NotExpanding,
                "smallest singular value " + std::to_string(smin) + " is not above 1");
  }
  const auto step = [&map](const Vector& x) -> Vector { return map * x; };
  const double delta = detail::observed_defect(step, pseudo_orbit);

  Eigen::PartialPivLU<Matrix> lu(map);
  Vector x = pseudo_orbit.back();
  for (std::size_t k = 0; k + 1 < pseudo_orbit.size(); ++k) x = lu.solve(x);

  auto shadow = generate_orbit(step, x, pseudo_orbit.size() - 1, pseudo_orbit.step(),
                               OrbitKind::algorithm);
  return detail::make_report(std::move(shadow), pseudo_orbit, Regime::expansion,
                             delta / (1.0 - 1.0 / smin), delta);
}

// ---------------------------------------------------------------------------
// Hyperbolic splitting

/// E_s (+) E_u for a linear map. Bases have orthonormal columns. The
/// projectors are the spectral ones (P_s + P_u = I, each commuting with A);
/// they are orthogonal exactly when A is symmetric.
struct HyperbolicSplitting {
  Matrix stable_basis;
  Matrix unstable_basis;
  double stable_rate = 0.0;          // max modulus inside the unit circle
  double unstable_rate = kInfinity;  // min modulus outside
  Matrix stable_projector;
  Matrix unstable_projector;
};

namespace detail {

inline Matrix orthonormalize(const Matrix& columns) {
  if (columns.cols() == 0) return Matrix(columns.rows(), 0);
  Eigen::HouseholderQR<Matrix> qr(columns);
  return qr.householderQ() * Matrix::Identity(columns.rows(), columns.cols());
}

inline void fill_projectors(HyperbolicSplitting& s, Eigen::Index n) {
  Matrix basis(n, s.stable_basis.cols() + s.unstable_basis.cols());
  basis << s.stable_basis, s.unstable_basis;
  const Matrix inv = basis.inverse();
  const Eigen::Index ns = s.stable_basis.cols();
  s.stable_projector = s.stable_basis * inv.topRows(ns);
  s.unstable_projector = s.unstable_basis * inv.bottomRows(n - ns);
}

inline void throw_not_hyperbolic(std::complex<double> eig) {
  throw Error(ErrorKind::NotHyperbolic,
              "eigenvalue (" + std::to_string(eig.real()) + ", " + std::to_string(eig.imag()) +
                  ") has modulus within " + std::to_string(kHyperbolicityTolerance) + " of 1");
}

}  // namespace detail

inline HyperbolicSplitting hyperbolic_split(const Matrix& map) {
  if (map.rows() != map.cols() || map.rows() == 0) {
    throw Error(ErrorKind::InvalidArgument, "map must be square and non-empty");
  }
  const Eigen::Index n = map.rows();
  HyperbolicSplitting out;

  if (relative_asymmetry(map) <= kSymmetryTolerance) {
    const SymmetricEigen eig = symmetric_eigen(0.5 * (map + map.transpose()));
    std::vector<Eigen::Index> stable;
    std::vector<Eigen::Index> unstable;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double m = std::abs(eig.values(i));
      if (std::abs(m - 1.0) <= kHyperbolicityTolerance) detail::throw_not_hyperbolic(eig.values(i));
      if (m < 1.0) {
        stable.push_back(i);
        out.stable_rate = std::max(out.stable_rate, m);
      } else {
        unstable.push_back(i);
        out.unstable_rate = std::min(out.unstable_rate, m);
      }
    }
    out.stable_basis = eig.vectors(Eigen::all, stable);
    out.unstable_basis = eig.vectors(Eigen::all, unstable);
    detail::fill_projectors(out, n);
    return out;
  }

  Eigen::EigenSolver<Matrix> solver(map);
  const Eigen::VectorXcd values = solver.eigenvalues();
  const Eigen::MatrixXcd vectors = solver.eigenvectors();
  std::vector<Vector> stable_cols;
  std::vector<Vector> unstable_cols;
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::complex<double> lam = values(i);
    const double m = std::abs(lam);
    if (std::abs(m - 1.0) <= kHyperbolicityTolerance) detail::throw_not_hyperbolic(lam);
    auto& target = (m < 1.0) ? stable_cols : unstable_cols;
    if (m < 1.0) {
      out.stable_rate = std::max(out.stable_rate, m);
    } else {
      out.unstable_rate = std::min(out.unstable_rate, m);
    }
    // A conjugate pair spans the real plane of Re(v), Im(v); take it once.
    if (lam.imag() < 0.0) continue;
    target.push_back(vectors.col(i).real());
    if (lam.imag() > 0.0) target.push_back(vectors.col(i).imag());
  }
  auto to_matrix = [n](const std::vector<Vector>& cols) {
    Matrix m(n, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) m.col(static_cast<Eigen::Index>(j)) = cols[j];
    return m;
  };
  out.stable_basis = detail::orthonormalize(to_matrix(stable_cols));
  out.unstable_basis = detail::orthonormalize(to_matrix(unstable_cols));
  normalize_column_signs(out.stable_basis);
  normalize_column_signs(out.unstable_basis);
  detail::fill_projectors(out, n);
  return out;
}

/// Shadow of a pseudo-orbit of the affine hyperbolic map x -> c + A (x - c).
/// The stable component starts at y0's and runs forward; the unstable
/// component is pinned to y_K's and runs backward through the restriction of
/// A to E_u. Works for non-symmetric A (e.g. heavy-ball on a quadratic), where
/// the guarantee is in an adapted norm and no Euclidean radius is reported.
inline ShadowReport<Vector> shadow_linear_hyperbolic(const Matrix& map, const Vector& center,
                                                     const Orbit<Vector>& pseudo_orbit) {
  const HyperbolicSplitting split = hyperbolic_split(map);
  const std::size_t count = pseudo_orbit.size();
  const Matrix& ub = split.unstable_basis;
  const Matrix unstable_block = ub.transpose() * map * ub;  // A restricted to E_u

  std::vector<Vector> stable(count);
  std::vector<Vector> unstable(count);
  stable[0] = split.stable_projector * (pseudo_orbit.front() - center);
  for (std::size_t k = 1; k < count; ++k) stable[k] = map * stable[k - 1];
  unstable[count - 1] = ub.transpose() * (split.unstable_projector * (pseudo_orbit.back() - center));
  if (ub.cols() > 0) {
    Eigen::PartialPivLU<Matrix> lu(unstable_block);
    for (std::size_t k = count - 1; k > 0; --k) unstable[k - 1] = lu.solve(unstable[k]);
  }
  std::vector<Vector> points(count);
  for (std::size_t k = 0; k < count; ++k) points[k] = center + stable[k] + ub * unstable[k];

  const auto step = [&map, &center](const Vector& x) -> Vector { return center + map * (x - center); };
  const double delta = detail::observed_defect(step, pseudo_orbit);
  const bool symmetric = relative_asymmetry(map) <= kSymmetryTolerance;
  double predicted = std::numeric_limits<double>::quiet_NaN();
  if (symmetric) {
    // Each subspace contributes its own radius; the norm is sub-additive.
    double eps = 0.0;
    if (split.stable_basis.cols() > 0) eps += delta / (1.0 - split.stable_rate);
    if (ub.cols() > 0) eps += delta / (1.0 - 1.0 / split.unstable_rate);
    predicted = eps;
  }
  auto report = detail::make_report(Orbit<Vector>(std::move(points), pseudo_orbit.step(),
                                                  OrbitKind::algorithm),
                                    pseudo_orbit, Regime::hyperbolic, predicted, delta);
  report.adapted_norm_caveat = !symmetric;
  return report;
}

// ---------------------------------------------------------------------------
// Quadratic saddles

struct CurvatureSplit {
  std::optional<double> mu;     // smallest positive eigenvalue
  std::optional<double> gamma;  // magnitude of the most negative eigenvalue
  double smoothness = 0.0;
};

inline CurvatureSplit curvature_of(const QuadraticSpec& spec) {
  CurvatureSplit c;
  c.smoothness = spec.eigenvalues.cwiseAbs().maxCoeff();
  const double tol = kZeroCurvatureTolerance * std::max(1.0, c.smoothness);
  for (Eigen::Index i = 0; i < spec.eigenvalues.size(); ++i) {
    const double lam = spec.eigenvalues(i);
    if (lam > tol) c.mu = c.mu ? std::min(*c.mu, lam) : lam;
    if (lam < -tol) c.gamma = c.gamma ? std::max(*c.gamma, -lam) : -lam;
  }
  return c;
}

inline Objective quadratic_objective(const QuadraticSpec& spec) {
  return make_quadratic(spec.hessian, spec.center).objective;
}

/// GD on a quadratic as a linear map: I - h H.
inline Matrix gd_linear_map(const QuadraticSpec& spec, double h) {
  return Matrix::Identity(spec.dim(), spec.dim()) - h * spec.hessian;
}

struct SaddleShadow {
  ShadowReport<Vector> report;
  // Shadows computed in eigen-coordinates of each subspace; empty when the
  // subspace is trivial. Coordinates are w.r.t. the columns of the bases.
  std::optional<ShadowReport<Vector>> stable_part;
  std::optional<ShadowReport<Vector>> unstable_part;
  Matrix stable_basis;
  Matrix unstable_basis;
  double ell = 0.0;
};

/// Shadow near a quadratic saddle. The pseudo-orbit is projected on the
/// stable and unstable eigenspaces of I - hH; the stable part is shadowed by
/// contraction from y0, the unstable part by backward expansion from y_K, and
/// the two are recombined around the center.
inline SaddleShadow shadow_saddle(const QuadraticSpec& spec, double h,
                                  const Orbit<Vector>& pseudo_orbit, double eps_target) {
  require_positive_step(h);
  const Matrix map = gd_linear_map(spec, h);
  hyperbolic_split(map);  // throws NotHyperbolic

  const CurvatureSplit curv = curvature_of(spec);
  const Objective quad = quadratic_objective(spec);
  const double ell = estimate_ell(quad, pseudo_orbit);
  const double step_bound = bound_step_saddle(eps_target, ell, curv.smoothness, curv.mu, curv.gamma);
  if (h > step_bound * (1.0 + 1e-12)) {
    throw Error(ErrorKind::StepTooLarge, "h = " + std::to_string(h) + " exceeds the saddle bound " +
                                             std::to_string(step_bound));
  }

  std::vector<Eigen::Index> s_idx;
  std::vector<Eigen::Index> u_idx;
  for (Eigen::Index i = 0; i < spec.eigenvalues.size(); ++i) {
    (std::abs(1.0 - h * spec.eigenvalues(i)) < 1.0 ? s_idx : u_idx).push_back(i);
  }
  const Matrix vs = spec.eigenvectors(Eigen::all, s_idx);
  const Matrix vu = spec.eigenvectors(Eigen::all, u_idx);

  auto project = [&](const Matrix& basis) {
    std::vector<Vector> pts;
    pts.reserve(pseudo_orbit.size());
    for (const Vector& y : pseudo_orbit) pts.push_back(basis.transpose() * (y - spec.center));
    return Orbit<Vector>(std::move(pts), pseudo_orbit.step(), OrbitKind::sampled_flow);
  };

  SaddleShadow out{detail::make_report(pseudo_orbit, pseudo_orbit, Regime::hyperbolic, eps_target, 0.0),
                   std::nullopt, std::nullopt, vs, vu, ell};
  const std::size_t count = pseudo_orbit.size();
  std::vector<Vector> points(count, spec.center);

  if (!s_idx.empty()) {
    Vector factors(static_cast<Eigen::Index>(s_idx.size()));
    for (std::size_t j = 0; j < s_idx.size(); ++j) factors(j) = 1.0 - h * spec.eigenvalues(s_idx[j]);
    const double rho = factors.cwiseAbs().maxCoeff();
    const auto step = [factors](const Vector& c) -> Vector { return factors.cwiseProduct(c); };
    out.stable_part = shadow_contraction(step, project(vs), rho);
    for (std::size_t k = 0; k < count; ++k) points[k] += vs * out.stable_part->shadow[k];
  }
  if (!u_idx.empty()) {
    Vector factors(static_cast<Eigen::Index>(u_idx.size()));
    for (std::size_t j = 0; j < u_idx.size(); ++j) factors(j) = 1.0 - h * spec.eigenvalues(u_idx[j]);
    out.unstable_part = shadow_expansion(Matrix(factors.asDiagonal()), project(vu));
    for (std::size_t k = 0; k < count; ++k) points[k] += vu * out.unstable_part->shadow[k];
  }

  const auto step = [&map, &spec](const Vector& x) -> Vector {
    return spec.center + map * (x - spec.center);
  };
  out.report = detail::make_report(Orbit<Vector>(std::move(points), pseudo_orbit.step(),
                                                 OrbitKind::algorithm),
                                   pseudo_orbit, Regime::hyperbolic, eps_target,
                                   detail::observed_defect(step, pseudo_orbit));
  return out;
}

// ---------------------------------------------------------------------------
// Perturbed saddles: fixed point of the variation-of-constants operator

struct FixedPointOptions {
  double tolerance = 1e-12;     // sup-norm change between iterates
  std::size_t max_iterations = 10'000;
  std::size_t divergence_window = 10;
  double residual_tolerance = 1e-9;
};

/// Boundary data pinning the shadow: the unstable component of the last point
/// and the stable component of the first. Defaults to the pseudo-orbit's.
struct PerturbedBoundary {
  std::optional<Vector> final_point;
  std::optional<Vector> initial_point;
};

struct PerturbedShadow {
  ShadowReport<Vector> report;
  double contraction_bound = 0.0;  // 2 h L_phi / (1 - rho)
  double skewness = 0.0;           // rho = 1 - min{mu, gamma/2} h
  double ell = 0.0;
  double map_residual = 0.0;       // max ||x_{k+1} - Psi_g(x_k)||
};

/// One application of the operator T in eigen-coordinates of H.
///
/// Stable coordinates (|1 - h lambda| < 1) are propagated forward from the
/// pinned initial value, unstable ones backward from the pinned final value,
/// with the perturbation gradient evaluated along the current iterate:
///   stable:   w_k = R w_{k-1} - h grad phi_s(z_{k-1})
///   unstable: w_k = R^{-1} (w_{k+1} + h grad phi_u(z_k))
/// Unrolled, these are the discrete variation-of-constants sums. A GD orbit
/// of f + phi satisfying the boundary data is a fixed point.
inline std::vector<Vector> apply_shadow_operator(const QuadraticSpec& spec, const Objective& phi,
                                                 double h, const std::vector<Vector>& coords,
                                                 const Vector& initial_coords,
                                                 const Vector& final_coords) {
  const std::size_t count = coords.size();
  const Eigen::Index d = spec.eigenvalues.size();
  const Vector factors = (Vector::Ones(d) - h * spec.eigenvalues);
  std::vector<Vector> grads(count);
  for (std::size_t k = 0; k < count; ++k) {
    grads[k] = spec.eigenvectors.transpose() * phi.gradient(spec.center + spec.eigenvectors * coords[k]);
  }
  std::vector<Vector> out(count, Vector::Zero(d));
  for (Eigen::Index i = 0; i < d; ++i) {
    const double r = factors(i);
    if (std::abs(r) < 1.0) {
      out[0](i) = initial_coords(i);
      for (std::size_t k = 1; k < count; ++k) out[k](i) = r * out[k - 1](i) - h * grads[k - 1](i);
    } else {
      out[count - 1](i) = final_coords(i);
      for (std::size_t k = count - 1; k > 0; --k) {
        out[k - 1](i) = (out[k](i) + h * grads[k - 1](i)) / r;
      }
    }
  }
  return out;
}

/// Shadow of a GD-flow pseudo-orbit of g = f + phi, f a quadratic saddle and
/// phi an L_phi-smooth perturbation, found as the fixed point of
/// `apply_shadow_operator` started from the pseudo-orbit itself.
inline PerturbedShadow shadow_perturbed(const QuadraticSpec& spec, const Objective& phi, double h,
                                        const Orbit<Vector>& pseudo_orbit, double eps_target,
                                        const PerturbedBoundary& boundary = {},
                                        const FixedPointOptions& options = {}) {
  require_positive_step(h);
  const CurvatureSplit curv = curvature_of(spec);
  const double lphi = phi.perturbation_lipschitz.value_or(phi.smoothness);
  const double margin = detail::saddle_margin(curv.mu, curv.gamma);
  if (!(2.0 * lphi < margin)) {
    throw Error(ErrorKind::PerturbationTooLarge,
                "2 L_phi = " + std::to_string(2.0 * lphi) + " must be below min{mu, gamma/2} = " +
                    std::to_string(margin));
  }
  hyperbolic_split(gd_linear_map(spec, h));

  const Objective g = make_sum(quadratic_objective(spec), phi);
  const double smoothness = curv.smoothness + lphi;
  if (h > 1.0 / smoothness) {
    throw Error(ErrorKind::StepTooLarge, "h must not exceed 1/L = " + std::to_string(1.0 / smoothness));
  }
  const double ell = estimate_ell(g, pseudo_orbit);
  const double step_bound =
      bound_step_perturbed(eps_target, ell, smoothness, curv.mu, curv.gamma, lphi);
  if (h > step_bound * (1.0 + 1e-12)) {
    throw Error(ErrorKind::StepTooLarge, "h = " + std::to_string(h) +
                                             " exceeds the perturbed-saddle bound " +
                                             std::to_string(step_bound));
  }

  const Vector x_final = boundary.final_point.value_or(pseudo_orbit.back());
  const Vector x_initial = boundary.initial_point.value_or(pseudo_orbit.front());
  const Matrix& v = spec.eigenvectors;
  const Vector final_coords = v.transpose() * (x_final - spec.center);
  const Vector initial_coords = v.transpose() * (x_initial - spec.center);
  {
    const Vector yk = v.transpose() * (pseudo_orbit.back() - spec.center);
    const Vector y0 = v.transpose() * (pseudo_orbit.front() - spec.center);
    double unstable_gap = 0.0;
    double stable_gap = 0.0;
    for (Eigen::Index i = 0; i < spec.eigenvalues.size(); ++i) {
      if (std::abs(1.0 - h * spec.eigenvalues(i)) < 1.0) {
        stable_gap += std::pow(initial_coords(i) - y0(i), 2);
      } else {
        unstable_gap += std::pow(final_coords(i) - yk(i), 2);
      }
    }
    if (std::sqrt(unstable_gap) + std::sqrt(stable_gap) > eps_target / 2.0) {
      throw Error(ErrorKind::InvalidArgument, "boundary data must lie within eps/2 of the pseudo-orbit");
    }
  }

  std::vector<Vector> iterate;
  iterate.reserve(pseudo_orbit.size());
  for (const Vector& y : pseudo_orbit) iterate.push_back(v.transpose() * (y - spec.center));

  std::vector<double> changes;
  std::size_t growth_streak = 0;
  bool converged = false;
  for (std::size_t it = 0; it < options.max_iterations; ++it) {
    std::vector<Vector> next =
        apply_shadow_operator(spec, phi, h, iterate, initial_coords, final_coords);
    double change = 0.0;
    for (std::size_t k = 0; k < next.size(); ++k) change = std::max(change, (next[k] - iterate[k]).norm());
    iterate = std::move(next);
    if (!changes.empty() && change > changes.back()) {
      ++growth_streak;
    } else {
      growth_streak = 0;
    }
    changes.push_back(change);
    if (change <= options.tolerance) {
      converged = true;
      break;
    }
    if (growth_streak >= options.divergence_window || !std::isfinite(change)) break;
  }
  auto history = [&changes] {
    std::string s;
    const std::size_t from = changes.size() > 5 ? changes.size() - 5 : 0;
    for (std::size_t i = from; i < changes.size(); ++i) s += " " + std::to_string(changes[i]);
    return s;
  };
  if (!converged) {
    throw Error(ErrorKind::FixedPointNotConverged,
                "after " + std::to_string(changes.size()) + " iterations; last changes:" + history());
  }

  std::vector<Vector> points;
  points.reserve(iterate.size());
  for (const Vector& c : iterate) points.push_back(spec.center + v * c);

  PerturbedShadow out{
      detail::make_report(Orbit<Vector>(std::move(points), pseudo_orbit.step(), OrbitKind::algorithm),
                          pseudo_orbit, Regime::perturbed, eps_target,
                          detail::observed_defect(gd_map(g, h), pseudo_orbit)),
      0.0, 1.0 - margin * h, ell, 0.0};
  out.contraction_bound = 2.0 * h * lphi / (1.0 - out.skewness);
  // The last application only confirms the fixed point.
  out.report.iterations_used = changes.size() - 1;
  out.report.fixed_point_changes = std::move(changes);

  for (std::size_t k = 0; k + 1 < out.report.shadow.size(); ++k) {
    out.map_residual = std::max(
        out.map_residual, distance(out.report.shadow[k + 1], gd_step(g, h, out.report.shadow[k])));
  }
  if (out.map_residual > options.residual_tolerance) {
    throw Error(ErrorKind::FixedPointNotConverged,
                "fixed point is not a GD orbit: residual " + std::to_string(out.map_residual) +
                    "; last changes:" + history());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stochastic gradients

/// Orbit of x -> x - h (grad f(x) + noise_k) from y0, shadowing the
/// deterministic flow when h <= 2 (mu eps - R) / (l L).
inline ShadowReport<Vector> shadow_sgd(const Objective& obj, double h,
                                       const Orbit<Vector>& flow_orbit,
                                       const std::vector<Vector>& noise, double noise_bound,
                                       double eps_target) {
  require_positive_step(h);
  if (!obj.strongly_convex) {
    throw Error(ErrorKind::NotStronglyConvex, "SGD shadowing needs a strongly convex objective");
  }
  if (noise.size() + 1 < flow_orbit.size()) {
    throw Error(ErrorKind::InvalidArgument, "need one noise vector per step");
  }
  const double ell = estimate_ell(obj, flow_orbit);
  const double step_bound =
      bound_step_sgd(eps_target, ell, obj.smoothness, obj.strong_convexity, noise_bound);
  if (h > step_bound * (1.0 + 1e-12)) {
    throw Error(ErrorKind::StepTooLarge, "h = " + std::to_string(h) + " exceeds the SGD bound " +
                                             std::to_string(step_bound));
  }
  std::vector<Vector> points;
  points.reserve(flow_orbit.size());
  points.push_back(flow_orbit.front());
  for (std::size_t k = 0; k + 1 < flow_orbit.size(); ++k) {
    try {
      points.push_back(sgd_step(obj, h, points.back(), noise[k], noise_bound));
    } catch (const Error& e) {
      throw Error(e.kind(), std::string(e.what()) + " (at iteration " + std::to_string(k) + ")", k);
    }
  }
  return detail::make_report(Orbit<Vector>(std::move(points), h, OrbitKind::algorithm), flow_orbit,
                             Regime::sgd, eps_target,
                             detail::observed_defect(gd_map(obj, h), flow_orbit));
}

// ---------------------------------------------------------------------------
// Heavy-ball on quadratics

/// HB-PS on a quadratic in packed (z - x*, v) coordinates:
///   [[I - h^2 H, beta h I], [-h H, beta I]].
inline Matrix hb_linear_map(const QuadraticSpec& spec, double h, double alpha) {
  require_momentum(alpha, h);
  const double beta = 1.0 - h * alpha;
  const Eigen::Index d = spec.dim();
  const Matrix eye = Matrix::Identity(d, d);
  Matrix a(2 * d, 2 * d);
  a << eye - h * h * spec.hessian, beta * h * eye, -h * spec.hessian, beta * eye;
  return a;
}

struct CharacteristicRoots {
  double lambda = 0.0;
  std::complex<double> q1;
  std::complex<double> q2;
  double modulus1 = 0.0;
  double modulus2 = 0.0;
};

struct HbHyperbolicity {
  bool hyperbolic = true;
  std::vector<CharacteristicRoots> roots;
};

/// Roots of q^2 - (beta + 1 - h^2 lambda) q + beta = 0 for each eigenvalue of
/// H. These are the eigenvalues of `hb_linear_map`; the map is hyperbolic iff
/// none has modulus within the tolerance of 1.
inline HbHyperbolicity hb_hyperbolicity_check(const QuadraticSpec& spec, double h, double alpha) {
  require_positive_step(h);
  require_momentum(alpha, h);
  const double beta = 1.0 - h * alpha;
  HbHyperbolicity out;
  for (Eigen::Index i = 0; i < spec.eigenvalues.size(); ++i) {
    const double lam = spec.eigenvalues(i);
    const double b = beta + 1.0 - h * h * lam;
    const std::complex<double> root = std::sqrt(std::complex<double>(b * b - 4.0 * beta, 0.0));
    CharacteristicRoots r;
    r.lambda = lam;
    // Avoid cancellation: take the larger-magnitude root first, then use
    // q1 q2 = beta for the other one.
    const std::complex<double> big = (b >= 0.0) ? (b + root) / 2.0 : (b - root) / 2.0;
    r.q1 = big;
    r.q2 = (std::abs(big) > 0.0) ? std::complex<double>(beta) / big : std::complex<double>(0.0);
    if (std::abs(big) == 0.0) r.q2 = 0.0;
    r.modulus1 = std::abs(r.q1);
    r.modulus2 = std::abs(r.q2);
    if (std::abs(r.modulus1 - 1.0) <= kHyperbolicityTolerance ||
        std::abs(r.modulus2 - 1.0) <= kHyperbolicityTolerance) {
      out.hyperbolic = false;
    }
    out.roots.push_back(r);
  }
  return out;
}

/// Runtime check of the velocity / acceleration / jerk envelopes of the HB
/// flow started at zero velocity: ||p|| <= l/alpha, ||p'|| <= 2l,
/// ||p''|| <= 2 (alpha + L) l.
struct HbFlowEnvelope {
  double max_velocity = 0.0;
  double max_acceleration = 0.0;
  double max_jerk = 0.0;
  double velocity_bound = 0.0;
  double acceleration_bound = 0.0;
  double jerk_bound = 0.0;

  bool holds() const {
    return max_velocity <= velocity_bound && max_acceleration <= acceleration_bound &&
           max_jerk <= jerk_bound;
  }
};

inline HbFlowEnvelope check_hb_flow_envelope(const Objective& obj, double alpha,
                                             const Orbit<PhasePoint>& flow, double ell) {
  HbFlowEnvelope env;
  env.velocity_bound = ell / alpha;
  env.acceleration_bound = 2.0 * ell;
  env.jerk_bound = 2.0 * (alpha + obj.smoothness) * ell;
  for (const PhasePoint& s : flow) {
    const Vector accel = -alpha * s.velocity - obj.gradient(s.position);
    // Hessian-vector product along the velocity by central differences.
    Vector hess_v = Vector::Zero(s.velocity.size());
    const double vn = s.velocity.norm();
    if (vn > 0.0) {
      const double eps = 1e-6 * (1.0 + s.position.norm()) / vn;
      hess_v = (obj.gradient(s.position + eps * s.velocity) -
                obj.gradient(s.position - eps * s.velocity)) / (2.0 * eps);
    }
    const Vector jerk = -alpha * accel - hess_v;
    env.max_velocity = std::max(env.max_velocity, vn);
    env.max_acceleration = std::max(env.max_acceleration, accel.norm());
    env.max_jerk = std::max(env.max_jerk, jerk.norm());
  }
  return env;
}

/// Constants the bounds are stated in, gathered for one experiment.
struct Rates {
  double ell = 0.0;
  double smoothness = 0.0;
  std::optional<double> mu;
  std::optional<double> gamma;
  std::optional<double> lipschitz_phi;
  double h = 0.0;
  double alpha = 0.0;
  double noise_bound = 0.0;
};

template <class State>
Rates make_rates(const Objective& obj, const Orbit<State>& orbit, const MapParams& params) {
  Rates r;
  r.ell = estimate_ell(obj, orbit);
  r.smoothness = obj.smoothness;
  r.mu = obj.strong_convexity;
  r.gamma = obj.concavity;
  r.lipschitz_phi = obj.perturbation_lipschitz;
  r.h = params.h;
  r.alpha = params.alpha;
  r.noise_bound = params.noise_bound;
  return r;
}

}  // namespace shadow_opt
