#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "error.hpp"
#include "linalg.hpp"

namespace shadow_opt {

/// A differentiable objective together with the curvature constants the
/// shadowing bounds are stated in.
///
/// `smoothness` is L (upper bound on the Hessian norm). `strong_convexity`
/// is the smallest positive curvature mu and `concavity` the magnitude gamma of
/// the most negative one; either is empty when the objective has no such
/// direction (or no certified bound). `strongly_convex` is set only when every
/// direction has curvature at least mu. The gradient bound along an orbit is
/// deliberately not stored here; see `estimate_ell`.
///
/// Objectives are immutable once built and may be evaluated concurrently.
struct Objective {
  int dim = 0;
  std::function<double(const Vector&)> eval;
  std::function<Vector(const Vector&)> grad;
  double smoothness = 0.0;
  std::optional<double> strong_convexity;
  std::optional<double> concavity;
  std::optional<double> perturbation_lipschitz;
  bool strongly_convex = false;
  std::string name;

  double value(const Vector& x) const { return eval(x); }
  Vector gradient(const Vector& x) const { return grad(x); }
};

/// Quadratic centred at `center`, with the eigendecomposition of its Hessian.
/// Eigenvalues ascend; eigenvector signs follow `normalize_column_signs`.
struct QuadraticSpec {
  Matrix hessian;
  Vector center;
  Vector eigenvalues;
  Matrix eigenvectors;

  int dim() const { return static_cast<int>(center.size()); }
};

struct Quadratic {
  Objective objective;
  QuadraticSpec spec;
};

/// Binary classification samples. `features` already carries the trailing
/// bias column of ones.
struct Dataset {
  Matrix features;  // n x d
  Vector labels;    // n, entries exactly +1 or -1

  int size() const { return static_cast<int>(features.rows()); }
  int dim() const { return static_cast<int>(features.cols()); }
};

inline constexpr double kSymmetryTolerance = 1e-12;

// Eigenvalues of this magnitude (relative to max(1, L)) count as zero
// curvature when filling in mu and gamma.
inline constexpr double kZeroCurvatureTolerance = 1e-12;

/// f(x) = 1/2 <x - x*, H (x - x*)>, so grad f(x) = H (x - x*).
inline Quadratic make_quadratic(const Matrix& hessian, const Vector& center) {
  if (hessian.rows() != hessian.cols() || hessian.rows() != center.size() ||
      center.size() == 0) {
    throw Error(ErrorKind::InvalidArgument, "Hessian must be square and match the center");
  }
  const double asym = relative_asymmetry(hessian);
  if (asym > kSymmetryTolerance) {
    throw Error(ErrorKind::NonSymmetric,
                "relative asymmetry " + std::to_string(asym) + " exceeds tolerance");
  }
  const Matrix sym = 0.5 * (hessian + hessian.transpose());
  const SymmetricEigen eig = symmetric_eigen(sym);

  QuadraticSpec spec{sym, center, eig.values, eig.vectors};

  Objective obj;
  obj.dim = static_cast<int>(center.size());
  obj.name = "quadratic";
  obj.smoothness = eig.values.cwiseAbs().maxCoeff();
  const double zero_tol = kZeroCurvatureTolerance * std::max(1.0, obj.smoothness);
  bool all_positive = true;
  for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
    const double lam = eig.values(i);
    if (lam > zero_tol) {
      if (!obj.strong_convexity || lam < *obj.strong_convexity) obj.strong_convexity = lam;
    } else {
      all_positive = false;
      if (lam < -zero_tol && (!obj.concavity || -lam > *obj.concavity)) obj.concavity = -lam;
    }
  }
  obj.strongly_convex = all_positive;

  auto h = std::make_shared<const Matrix>(sym);
  auto c = std::make_shared<const Vector>(center);
  obj.eval = [h, c](const Vector& x) {
    const Vector d = x - *c;
    return 0.5 * d.dot(*h * d);
  };
  obj.grad = [h, c](const Vector& x) -> Vector { return *h * (x - *c); };
  return {std::move(obj), std::move(spec)};
}

/// Logistic-type loss phi(t) = 1 / (1 + e^t), evaluated without overflow.
inline double sigmoid_loss(double t) {
  if (t > 0.0) {
    const double e = std::exp(-t);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(t));
}

inline double sigmoid_loss_derivative(double t) {
  const double p = sigmoid_loss(t);
  return -p * (1.0 - p);
}

/// sup_t |phi''(t)| for phi(t) = 1/(1+e^t). With s = phi(t), phi'' = s(1-s)(1-2s)
/// up to sign; maximising over s in (0,1) gives s = 1/2 - 1/(2 sqrt 3) and the
/// value 1/(6 sqrt 3).
inline const double kSigmoidCurvatureBound = 1.0 / (6.0 * std::sqrt(3.0));

/// f(x) = lambda/2 ||x||^2 + (1/n) sum_i phi(<a_i, x> l_i).
inline Objective make_sigmoid_erm(const Dataset& data, double lambda_reg) {
  if (data.size() == 0) throw Error(ErrorKind::EmptyDataset, "dataset has no samples");
  if (!std::isfinite(lambda_reg) || lambda_reg < 0.0) {
    throw Error(ErrorKind::InvalidArgument, "lambda_reg must be finite and non-negative");
  }
  auto shared = std::make_shared<const Dataset>(data);
  const double n = static_cast<double>(data.size());

  Objective obj;
  obj.dim = data.dim();
  obj.name = "sigmoid_erm";
  const double curvature =
      data.features.rowwise().squaredNorm().sum() / n * kSigmoidCurvatureBound;
  obj.smoothness = lambda_reg + curvature;
  if (lambda_reg > curvature) {
    obj.strong_convexity = lambda_reg - curvature;
    obj.strongly_convex = true;
  }
  obj.eval = [shared, lambda_reg, n](const Vector& x) {
    const Vector margins = (shared->features * x).cwiseProduct(shared->labels);
    double loss = 0.0;
    for (Eigen::Index i = 0; i < margins.size(); ++i) loss += sigmoid_loss(margins(i));
    return 0.5 * lambda_reg * x.squaredNorm() + loss / n;
  };
  obj.grad = [shared, lambda_reg, n](const Vector& x) -> Vector {
    const Vector margins = (shared->features * x).cwiseProduct(shared->labels);
    Vector weights(margins.size());
    for (Eigen::Index i = 0; i < margins.size(); ++i) {
      weights(i) = sigmoid_loss_derivative(margins(i)) * shared->labels(i);
    }
    return lambda_reg * x + shared->features.transpose() * weights / n;
  };
  return obj;
}

/// Hosaki test function on R^2:
/// f(u, v) = (1 - 8u + 7u^2 - 7u^3/3 + u^4/4) v^2 e^{-v}.
/// Critical points include a saddle at (2, 2) and the global minimum at (4, 2).
/// Smoothness is reported for the box [0, 5]^2.
inline Objective make_hosaki() {
  Objective obj;
  obj.dim = 2;
  obj.name = "hosaki";
  obj.smoothness = 10.3;  // max Hessian norm on [0,5]^2 is about 10.29, attained at (5, 2)
  obj.eval = [](const Vector& x) {
    const double u = x(0);
    const double v = x(1);
    const double p = 1.0 - 8.0 * u + 7.0 * u * u - 7.0 * u * u * u / 3.0 + u * u * u * u / 4.0;
    return p * v * v * std::exp(-v);
  };
  obj.grad = [](const Vector& x) -> Vector {
    const double u = x(0);
    const double v = x(1);
    const double p = 1.0 - 8.0 * u + 7.0 * u * u - 7.0 * u * u * u / 3.0 + u * u * u * u / 4.0;
    const double dp = -8.0 + 14.0 * u - 7.0 * u * u + u * u * u;
    const double e = std::exp(-v);
    Vector g(2);
    g(0) = dp * v * v * e;
    g(1) = p * (2.0 * v - v * v) * e;
    return g;
  };
  return obj;
}

/// phi(x) = L_phi * sum_i (1 - cos(x_i - c_i)). Smooth with constant L_phi and
/// stationary at c, which makes it a valid perturbation of a quadratic
/// centred at c.
inline Objective make_cosine_perturbation(const Vector& center, double lipschitz) {
  if (!(lipschitz >= 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "perturbation Lipschitz constant must be >= 0");
  }
  Objective obj;
  obj.dim = static_cast<int>(center.size());
  obj.name = "cosine_perturbation";
  obj.smoothness = lipschitz;
  obj.perturbation_lipschitz = lipschitz;
  auto c = std::make_shared<const Vector>(center);
  obj.eval = [c, lipschitz](const Vector& x) {
    return lipschitz * (1.0 - (x - *c).array().cos()).sum();
  };
  obj.grad = [c, lipschitz](const Vector& x) -> Vector {
    return lipschitz * (x - *c).array().sin().matrix();
  };
  return obj;
}

/// f(x) = sum_i x_i^4 / 4: convex, flat at the origin, never strongly convex.
/// `radius` bounds |x_i| on the region of interest and fixes L = 3 radius^2.
inline Objective make_quartic(int dim, double radius) {
  if (dim < 1 || !(radius > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "quartic needs dim >= 1 and radius > 0");
  }
  Objective obj;
  obj.dim = dim;
  obj.name = "quartic";
  obj.smoothness = 3.0 * radius * radius;
  obj.eval = [](const Vector& x) { return x.array().pow(4).sum() / 4.0; };
  obj.grad = [](const Vector& x) -> Vector { return x.array().cube().matrix(); };
  return obj;
}

/// g = f + phi. Curvature constants combine conservatively.
inline Objective make_sum(const Objective& f, const Objective& phi) {
  if (f.dim != phi.dim) throw Error(ErrorKind::InvalidArgument, "dimension mismatch in sum");
  const double lphi = phi.perturbation_lipschitz.value_or(phi.smoothness);
  Objective obj;
  obj.dim = f.dim;
  obj.name = f.name + "+" + phi.name;
  obj.smoothness = f.smoothness + phi.smoothness;
  obj.perturbation_lipschitz = lphi;
  if (f.strong_convexity && *f.strong_convexity > lphi) {
    obj.strong_convexity = *f.strong_convexity - lphi;
    obj.strongly_convex = f.strongly_convex;
  }
  if (f.concavity && *f.concavity > lphi) obj.concavity = *f.concavity - lphi;
  auto fe = f.eval;
  auto fg = f.grad;
  auto pe = phi.eval;
  auto pg = phi.grad;
  obj.eval = [fe, pe](const Vector& x) { return fe(x) + pe(x); };
  obj.grad = [fg, pg](const Vector& x) -> Vector { return fg(x) + pg(x); };
  return obj;
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return value;
}

inline Dataset with_bias(const std::vector<std::vector<double>>& rows,
                         const std::vector<double>& labels) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(rows.front().size());
  Dataset data;
  data.features.resize(n, d + 1);
  data.labels.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) data.features(i, j) = rows[i][j];
    data.features(i, d) = 1.0;
    data.labels(i) = labels[i];
  }
  return data;
}

}  // namespace detail

/// Reads one sample per line: comma-separated features followed by a +1/-1
/// label, no header. Blank lines are skipped. Row numbers in errors are
/// 1-based line numbers.
inline Dataset parse_dataset_csv(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::vector<double> labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    std::vector<double> fields;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      const auto token = rest.substr(0, comma);
      const auto value = detail::parse_double(token);
      if (!value || !std::isfinite(*value)) {
        throw Error(ErrorKind::ParseError,
                    "row " + std::to_string(line_no) + ": bad field '" + std::string(token) + "'",
                    line_no);
      }
      fields.push_back(*value);
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (fields.size() < 2) {
      throw Error(ErrorKind::ParseError,
                  "row " + std::to_string(line_no) + ": need at least one feature and a label",
                  line_no);
    }
    const double label = fields.back();
    fields.pop_back();
    if (label != 1.0 && label != -1.0) {
      throw Error(ErrorKind::BadLabel,
                  "row " + std::to_string(line_no) + ": label must be +1 or -1", line_no);
    }
    if (!rows.empty() && fields.size() != rows.front().size()) {
      throw Error(ErrorKind::ParseError,
                  "row " + std::to_string(line_no) + ": expected " +
                      std::to_string(rows.front().size()) + " features",
                  line_no);
    }
    rows.push_back(std::move(fields));
    labels.push_back(label);
  }
  if (rows.empty()) throw Error(ErrorKind::EmptyDataset, "no samples in CSV input");
  return detail::with_bias(rows, labels);
}

inline Dataset load_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open dataset '" + path + "'");
  return parse_dataset_csv(in);
}

/// Two unit-variance Gaussian clusters centred at +/- m with ||m|| = 2;
/// labels alternate +1, -1 and equal the cluster sign. Deterministic in `seed`.
inline Dataset generate_synthetic(int n, int d, std::uint64_t seed) {
  if (n < 1 || d < 1) throw Error(ErrorKind::InvalidArgument, "synthetic data needs n, d >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const double offset = 2.0 / std::sqrt(static_cast<double>(d));
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(n), std::vector<double>(d));
  std::vector<double> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double label = (i % 2 == 0) ? 1.0 : -1.0;
    labels[i] = label;
    for (int j = 0; j < d; ++j) rows[i][j] = label * offset + normal(rng);
  }
  return detail::with_bias(rows, labels);
}

}  // namespace shadow_opt
