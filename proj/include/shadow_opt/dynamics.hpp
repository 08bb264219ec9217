#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "error.hpp"
#include "landscape.hpp"
#include "linalg.hpp"

namespace shadow_opt {

/// Heavy-ball phase-space state: position z and velocity v.
struct PhasePoint {
  Vector position;
  Vector velocity;
};

/// (z, v) stacked into one 2d-vector; position first.
inline Vector pack(const PhasePoint& p) {
  Vector out(p.position.size() + p.velocity.size());
  out << p.position, p.velocity;
  return out;
}

inline PhasePoint unpack(const Vector& y) {
  const Eigen::Index d = y.size() / 2;
  return {y.head(d), y.tail(d)};
}

inline double distance(const Vector& a, const Vector& b) { return (a - b).norm(); }

inline double distance(const PhasePoint& a, const PhasePoint& b) {
  return std::sqrt((a.position - b.position).squaredNorm() +
                   (a.velocity - b.velocity).squaredNorm());
}

inline const Vector& position_of(const Vector& x) { return x; }
inline const Vector& position_of(const PhasePoint& p) { return p.position; }

inline bool all_finite(const Vector& x) { return x.allFinite(); }
inline bool all_finite(const PhasePoint& p) {
  return p.position.allFinite() && p.velocity.allFinite();
}

enum class OrbitKind { algorithm, sampled_flow };

inline constexpr std::size_t kMaxOrbitPoints = 10'000'000;

/// Finite orbit of a map or a sampled flow with fixed step h. Immutable.
template <class State>
class Orbit {
 public:
  Orbit(std::vector<State> points, double step, OrbitKind kind)
      : points_(std::move(points)), step_(step), kind_(kind) {
    if (points_.empty()) throw Error(ErrorKind::InvalidArgument, "orbit must have a point");
    if (!(step_ > 0.0)) throw Error(ErrorKind::InvalidArgument, "orbit step must be positive");
  }

  std::size_t size() const { return points_.size(); }
  const State& operator[](std::size_t k) const { return points_[k]; }
  const State& front() const { return points_.front(); }
  const State& back() const { return points_.back(); }
  const std::vector<State>& points() const { return points_; }
  double step() const { return step_; }
  OrbitKind kind() const { return kind_; }

  auto begin() const { return points_.begin(); }
  auto end() const { return points_.end(); }

 private:
  std::vector<State> points_;
  double step_;
  OrbitKind kind_;
};

struct MapParams {
  double h = 0.0;
  double alpha = 0.0;
  double noise_bound = 0.0;

  double momentum() const { return 1.0 - h * alpha; }
};

inline void require_positive_step(double h) {
  if (!(h > 0.0) || !std::isfinite(h)) {
    throw Error(ErrorKind::InvalidArgument, "step h must be positive and finite");
  }
}

inline void require_momentum(double alpha, double h) {
  const double beta = 1.0 - h * alpha;
  if (!(alpha >= 0.0) || !(beta >= 0.0 && beta < 1.0)) {
    throw Error(ErrorKind::BadMomentum,
                "beta = 1 - h*alpha = " + std::to_string(beta) + " is outside [0, 1)");
  }
}

namespace detail {
inline Vector checked_gradient(const Objective& obj, const Vector& x) {
  Vector g = obj.gradient(x);
  if (!g.allFinite()) throw Error(ErrorKind::NonFiniteGradient, "gradient has non-finite entries");
  return g;
}
}  // namespace detail

/// x - h grad f(x).
inline Vector gd_step(const Objective& obj, double h, const Vector& x) {
  require_positive_step(h);
  return x - h * detail::checked_gradient(obj, x);
}

/// x - h (grad f(x) + noise), with ||noise|| <= R enforced.
inline Vector sgd_step(const Objective& obj, double h, const Vector& x, const Vector& noise,
                       double noise_bound) {
  require_positive_step(h);
  const double n = noise.norm();
  if (n > noise_bound * (1.0 + 1e-12)) {
    throw Error(ErrorKind::NoiseBoundViolated,
                "||noise|| = " + std::to_string(n) + " exceeds R = " + std::to_string(noise_bound));
  }
  return x - h * (detail::checked_gradient(obj, x) + noise);
}

/// Semi-implicit Euler on the heavy-ball ODE:
///   v+ = v + h(-alpha v - grad f(z)),  z+ = z + h v+.
/// The positions obey z+ = z + beta (z - z-) - h^2 grad f(z) with beta = 1 - h alpha.
inline PhasePoint hb_step(const Objective& obj, double alpha, double h, const PhasePoint& p) {
  require_positive_step(h);
  require_momentum(alpha, h);
  const Vector g = detail::checked_gradient(obj, p.position);
  PhasePoint out;
  out.velocity = p.velocity + h * (-alpha * p.velocity - g);
  out.position = p.position + h * out.velocity;
  return out;
}

/// Exact flow of y' = -H (y - x*) for time t.
inline Vector flow_quadratic_gd(const QuadraticSpec& spec, double t, const Vector& y) {
  const Vector coords = spec.eigenvectors.transpose() * (y - spec.center);
  const Vector decay = (-t * spec.eigenvalues).array().exp().matrix();
  return spec.center + spec.eigenvectors * decay.cwiseProduct(coords);
}

/// Exact flow of p' = -alpha p - H (q - x*), q' = p for time t, one 2x2
/// propagator per eigendirection of H.
inline PhasePoint flow_quadratic_hb(const QuadraticSpec& spec, double alpha, double t,
                                    const PhasePoint& p) {
  if (!(alpha >= 0.0)) throw Error(ErrorKind::InvalidArgument, "alpha must be >= 0");
  Vector q = spec.eigenvectors.transpose() * (p.position - spec.center);
  Vector w = spec.eigenvectors.transpose() * p.velocity;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    const Eigen::Matrix2d prop = damped_oscillator_propagator(spec.eigenvalues(i), alpha, t);
    const double qi = prop(0, 0) * q(i) + prop(0, 1) * w(i);
    const double wi = prop(1, 0) * q(i) + prop(1, 1) * w(i);
    q(i) = qi;
    w(i) = wi;
  }
  return {spec.center + spec.eigenvectors * q, spec.eigenvectors * w};
}

using VectorField = std::function<Vector(const Vector&)>;

/// Descent field -grad f. (Gradient flow runs downhill.)
inline VectorField gd_vector_field(const Objective& obj) {
  return [obj](const Vector& y) -> Vector { return -obj.gradient(y); };
}

/// Heavy-ball field on packed (q, p): (p, -alpha p - grad f(q)).
inline VectorField hb_vector_field(const Objective& obj, double alpha) {
  return [obj, alpha](const Vector& y) -> Vector {
    const Eigen::Index d = y.size() / 2;
    Vector out(y.size());
    out.head(d) = y.tail(d);
    out.tail(d) = -alpha * y.tail(d) - obj.gradient(y.head(d));
    return out;
  };
}

/// Classical fourth-order Runge-Kutta over time h, in `substeps` equal steps.
inline Vector rk4_flow(const VectorField& field, double h, int substeps, const Vector& y0) {
  if (substeps < 1) throw Error(ErrorKind::InvalidArgument, "substeps must be >= 1");
  const double dt = h / substeps;
  Vector y = y0;
  for (int s = 0; s < substeps; ++s) {
    const Vector k1 = field(y);
    const Vector k2 = field(y + 0.5 * dt * k1);
    const Vector k3 = field(y + 0.5 * dt * k2);
    const Vector k4 = field(y + dt * k3);
    y += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!y.allFinite()) {
      throw Error(ErrorKind::NonFiniteState, "RK4 state left the finite range", s);
    }
  }
  return y;
}

inline PhasePoint rk4_flow(const VectorField& field, double h, int substeps,
                           const PhasePoint& p) {
  return unpack(rk4_flow(field, h, substeps, pack(p)));
}

inline constexpr double kMaxInnerStep = 0.1;
inline constexpr int kMaxSubsteps = 1 << 16;

/// Smallest power-of-two multiple of ceil(h / 0.1) substeps whose Richardson
/// error estimate at `y0` is at most `defect_bound / 100`, so integrator
/// error stays two orders below the defects being measured.
inline int choose_substeps(const VectorField& field, double h, const Vector& y0,
                           double defect_bound) {
  int n = std::max(1, static_cast<int>(std::ceil(h / kMaxInnerStep - 1e-12)));
  const double target = defect_bound / 100.0;
  while (n < kMaxSubsteps) {
    const Vector coarse = rk4_flow(field, h, n, y0);
    const Vector fine = rk4_flow(field, h, 2 * n, y0);
    const double estimate = (coarse - fine).norm() * 16.0 / 15.0;
    if (estimate <= target) return n;
    n *= 2;
  }
  return kMaxSubsteps;
}

/// points[0] = start, points[k+1] = stepper(points[k]) for k < K.
template <class State, class Stepper>
Orbit<State> generate_orbit(const Stepper& stepper, const State& start, std::size_t iterations,
                            double h, OrbitKind kind) {
  if (iterations + 1 > kMaxOrbitPoints) {
    throw Error(ErrorKind::OrbitTooLong, "orbit would exceed " + std::to_string(kMaxOrbitPoints) +
                                             " points");
  }
  std::vector<State> points;
  points.reserve(iterations + 1);
  points.push_back(start);
  for (std::size_t k = 0; k < iterations; ++k) {
    try {
      points.push_back(stepper(points.back()));
    } catch (const Error& e) {
      throw Error(e.kind(), std::string(e.what()) + " (at iteration " + std::to_string(k) + ")", k);
    }
  }
  return Orbit<State>(std::move(points), h, kind);
}

// Stepper factories. Each returns a pure callable State -> State.

inline auto gd_map(const Objective& obj, double h) {
  require_positive_step(h);
  return [obj, h](const Vector& x) { return gd_step(obj, h, x); };
}

inline auto hb_map(const Objective& obj, double alpha, double h) {
  require_momentum(alpha, h);
  return [obj, alpha, h](const PhasePoint& p) { return hb_step(obj, alpha, h, p); };
}

inline auto gd_flow_map(const QuadraticSpec& spec, double h) {
  return [spec, h](const Vector& y) { return flow_quadratic_gd(spec, h, y); };
}

inline auto hb_flow_map(const QuadraticSpec& spec, double alpha, double h) {
  return [spec, alpha, h](const PhasePoint& p) { return flow_quadratic_hb(spec, alpha, h, p); };
}

inline auto gd_rk4_map(const Objective& obj, double h, int substeps) {
  return [field = gd_vector_field(obj), h, substeps](const Vector& y) {
    return rk4_flow(field, h, substeps, y);
  };
}

inline auto hb_rk4_map(const Objective& obj, double alpha, double h, int substeps) {
  return [field = hb_vector_field(obj, alpha), h, substeps](const PhasePoint& p) {
    return rk4_flow(field, h, substeps, p);
  };
}

}  // namespace shadow_opt
