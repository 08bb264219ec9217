#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dynamics.hpp"
#include "error.hpp"
#include "landscape.hpp"
#include "linalg.hpp"
#include "shadowing.hpp"

namespace shadow_opt {

enum class Preset { sc_quadratic, saddle, hosaki, hb_quadratic, sigmoid_erm, h_sweep };

inline std::string to_string(Preset p) {
  switch (p) {
    case Preset::sc_quadratic: return "sc_quadratic";
    case Preset::saddle: return "saddle";
    case Preset::hosaki: return "hosaki";
    case Preset::hb_quadratic: return "hb_quadratic";
    case Preset::sigmoid_erm: return "sigmoid_erm";
    case Preset::h_sweep: return "h_sweep";
  }
  return "unknown";
}

inline Preset parse_preset(std::string_view name) {
  for (Preset p : {Preset::sc_quadratic, Preset::saddle, Preset::hosaki, Preset::hb_quadratic,
                   Preset::sigmoid_erm, Preset::h_sweep}) {
    if (to_string(p) == name) return p;
  }
  throw ConfigError("preset", "unknown preset '" + std::string(name) + "'");
}

/// Experiment settings. Unset optionals take the preset's default.
struct ExperimentConfig {
  Preset preset = Preset::sc_quadratic;
  std::optional<double> h;
  std::optional<double> alpha;
  std::optional<std::size_t> iterations;  // K
  std::optional<double> lambda_reg;
  std::uint64_t seed = 0;
  std::optional<std::vector<double>> initial_point;
  bool random_initial_point = false;
  std::optional<std::string> dataset_path;
  std::string output_dir;  // empty: nothing is written
  std::vector<double> h_grid;
  bool naive_start = false;
  std::size_t naive_horizon = 30;
  int samples = 1000;  // n
  int features = 20;   // d
  double init_scale = 0.01;
  std::string method = "gd";
  Preset sweep_base = Preset::sigmoid_erm;
};

// ---------------------------------------------------------------------------
// Config parsing

namespace detail {

inline double parse_config_double(const std::string& field, std::string_view text) {
  const auto v = parse_double(text);
  if (!v || !std::isfinite(*v)) throw ConfigError(field, "expected a number, got '" + std::string(text) + "'");
  return *v;
}

inline std::uint64_t parse_config_unsigned(const std::string& field, std::string_view text) {
  text = trim(text);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) {
    throw ConfigError(field, "expected a non-negative integer, got '" + std::string(text) + "'");
  }
  return v;
}

inline std::vector<double> parse_config_list(const std::string& field, std::string_view text) {
  std::vector<double> out;
  text = trim(text);
  if (!text.empty() && (text.front() == '{' || text.front() == '[')) text.remove_prefix(1);
  if (!text.empty() && (text.back() == '}' || text.back() == ']')) text.remove_suffix(1);
  while (true) {
    const auto comma = text.find(',');
    out.push_back(parse_config_double(field, text.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return out;
}

inline bool parse_config_bool(const std::string& field, std::string_view text) {
  text = trim(text);
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError(field, "expected true or false, got '" + std::string(text) + "'");
}

}  // namespace detail

inline const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "preset", "h",         "alpha",         "K",    "lambda_reg", "seed",
      "initial_point", "dataset_path", "output_dir", "h_grid", "naive_start", "naive_horizon",
      "n",      "d",         "init_scale",    "method", "sweep_base"};
  return keys;
}

/// Sets one field from its textual value. Unknown keys are rejected.
inline void apply_setting(ExperimentConfig& cfg, const std::string& key, std::string_view raw) {
  const std::string_view value = detail::trim(raw);
  if (key == "preset") {
    cfg.preset = parse_preset(value);
  } else if (key == "h") {
    cfg.h = detail::parse_config_double(key, value);
  } else if (key == "alpha") {
    cfg.alpha = detail::parse_config_double(key, value);
  } else if (key == "K" || key == "k") {
    cfg.iterations = detail::parse_config_unsigned("K", value);
  } else if (key == "lambda_reg") {
    cfg.lambda_reg = detail::parse_config_double(key, value);
  } else if (key == "seed") {
    cfg.seed = detail::parse_config_unsigned(key, value);
  } else if (key == "initial_point") {
    if (value == "random") {
      cfg.random_initial_point = true;
      cfg.initial_point.reset();
    } else {
      cfg.random_initial_point = false;
      cfg.initial_point = detail::parse_config_list(key, value);
    }
  } else if (key == "dataset_path") {
    cfg.dataset_path = std::string(value);
  } else if (key == "output_dir") {
    cfg.output_dir = std::string(value);
  } else if (key == "h_grid") {
    cfg.h_grid = detail::parse_config_list(key, value);
  } else if (key == "naive_start") {
    cfg.naive_start = detail::parse_config_bool(key, value);
  } else if (key == "naive_horizon") {
    cfg.naive_horizon = detail::parse_config_unsigned(key, value);
  } else if (key == "n") {
    cfg.samples = static_cast<int>(detail::parse_config_unsigned(key, value));
  } else if (key == "d") {
    cfg.features = static_cast<int>(detail::parse_config_unsigned(key, value));
  } else if (key == "init_scale") {
    cfg.init_scale = detail::parse_config_double(key, value);
  } else if (key == "method") {
    if (value != "gd" && value != "hb") throw ConfigError(key, "expected gd or hb");
    cfg.method = std::string(value);
  } else if (key == "sweep_base") {
    cfg.sweep_base = parse_preset(value);
  } else {
    throw ConfigError(key, "unknown key");
  }
}

/// Flat key=value lines; '#' starts a comment.
inline void parse_config(std::istream& in, ExperimentConfig& cfg) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = detail::trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no), "expected key=value");
    }
    apply_setting(cfg, std::string(detail::trim(view.substr(0, eq))), view.substr(eq + 1));
  }
}

inline void load_config_file(const std::string& path, ExperimentConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config", "cannot open '" + path + "'");
  parse_config(in, cfg);
}

// ---------------------------------------------------------------------------
// Reports

struct ExperimentRow {
  std::size_t k = 0;
  Vector pseudo;  // y_k (packed (z, v) for heavy-ball)
  Vector shadow;  // x_k
  double deviation = 0.0;
  double defect = 0.0;  // ||y_k - Psi(y_{k-1})||, 0 at k = 0
  double delta_bound = 0.0;
  double eps_bound = std::numeric_limits<double>::quiet_NaN();
  double loss = 0.0;  // f at the position of x_k
};

struct ExperimentSummary {
  double max_deviation = 0.0;
  double delta_obs = 0.0;
  double delta_bound = 0.0;
  double eps_bound = std::numeric_limits<double>::quiet_NaN();
  double ell = 0.0;
  std::string regime;
  std::string note;
};

struct ExperimentReport {
  std::string name;
  double h = 0.0;
  std::vector<ExperimentRow> rows;
  ExperimentSummary summary;
};

inline std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void emit_csv(const ExperimentReport& report, std::ostream& out) {
  out << "k,deviation,defect,delta_bound,eps_bound,loss\n";
  for (const ExperimentRow& r : report.rows) {
    out << r.k << ',' << format_double(r.deviation) << ',' << format_double(r.defect) << ','
        << format_double(r.delta_bound) << ',' << format_double(r.eps_bound) << ','
        << format_double(r.loss) << '\n';
  }
}

inline void emit_csv(const ExperimentReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::IoError, "cannot write '" + path + "'");
  emit_csv(report, out);
  if (!out) throw Error(ErrorKind::IoError, "write to '" + path + "' failed");
}

inline void emit_summary(const ExperimentReport& report, std::ostream& out) {
  const ExperimentSummary& s = report.summary;
  out << "experiment     " << report.name << '\n'
      << "regime         " << s.regime << '\n'
      << "h              " << format_double(report.h) << '\n'
      << "iterations     " << (report.rows.empty() ? 0 : report.rows.size() - 1) << '\n'
      << "ell            " << format_double(s.ell) << '\n'
      << "quantity       observed                 bound\n"
      << "defect         " << format_double(s.delta_obs) << "    " << format_double(s.delta_bound) << '\n'
      << "deviation      " << format_double(s.max_deviation) << "    " << format_double(s.eps_bound)
      << '\n';
  if (!s.note.empty()) out << "note           " << s.note << '\n';
}

// ---------------------------------------------------------------------------
// Presets

namespace detail {

template <class T>
T value_or_default(const std::optional<T>& v, T fallback) {
  return v ? *v : fallback;
}

inline Vector initial_point(const ExperimentConfig& cfg, int dim, const Vector& fallback,
                            double random_scale) {
  if (cfg.random_initial_point) {
    std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector x(dim);
    for (int i = 0; i < dim; ++i) x(i) = random_scale * normal(rng);
    return x;
  }
  if (!cfg.initial_point) return fallback;
  if (static_cast<int>(cfg.initial_point->size()) != dim) {
    throw ConfigError("initial_point", "expected " + std::to_string(dim) + " coordinates");
  }
  return Eigen::Map<const Vector>(cfg.initial_point->data(), dim);
}

inline double checked_step(const ExperimentConfig& cfg, double fallback) {
  const double h = value_or_default(cfg.h, fallback);
  if (!(h > 0.0)) throw ConfigError("h", "must be positive");
  return h;
}

inline std::size_t checked_iterations(const ExperimentConfig& cfg, std::size_t fallback) {
  const std::size_t k = value_or_default(cfg.iterations, fallback);
  if (k < 1) throw ConfigError("K", "must be at least 1");
  return k;
}

inline double checked_alpha(const ExperimentConfig& cfg, double fallback, double h) {
  const double alpha = value_or_default(cfg.alpha, fallback);
  const double beta = 1.0 - h * alpha;
  if (!(alpha >= 0.0) || !(beta >= 0.0 && beta < 1.0)) {
    throw ConfigError("alpha", "momentum 1 - h*alpha must lie in [0, 1)");
  }
  return alpha;
}

inline Vector as_vector(const Vector& x) { return x; }
inline Vector as_vector(const PhasePoint& p) { return pack(p); }

/// Fills rows from a pseudo-orbit, the algorithm's map and the orbit
/// tracking it. Bounds are filled in by the caller.
template <class State, class Stepper>
ExperimentReport tabulate(const std::string& name, const Objective& obj, const Stepper& map,
                          const Orbit<State>& pseudo, const Orbit<State>& shadow) {
  ExperimentReport report;
  report.name = name;
  report.h = pseudo.step();
  report.rows.reserve(pseudo.size());
  for (std::size_t k = 0; k < pseudo.size(); ++k) {
    ExperimentRow row;
    row.k = k;
    row.pseudo = as_vector(pseudo[k]);
    row.shadow = as_vector(shadow[k]);
    row.deviation = distance(pseudo[k], shadow[k]);
    row.defect = (k == 0) ? 0.0 : distance(pseudo[k], map(pseudo[k - 1]));
    row.loss = obj.value(position_of(shadow[k]));
    report.summary.max_deviation = std::max(report.summary.max_deviation, row.deviation);
    report.summary.delta_obs = std::max(report.summary.delta_obs, row.defect);
    report.rows.push_back(std::move(row));
  }
  return report;
}

inline void set_bounds(ExperimentReport& report, double delta_bound, double eps_bound) {
  report.summary.delta_bound = delta_bound;
  report.summary.eps_bound = eps_bound;
  for (ExperimentRow& r : report.rows) {
    r.delta_bound = delta_bound;
    r.eps_bound = eps_bound;
  }
}

inline Quadratic sc_quadratic_instance() {
  Matrix h = Matrix::Zero(2, 2);
  h.diagonal() << 1.0, 3.0;
  return make_quadratic(h, Vector::Zero(2));
}

inline ExperimentReport run_sc_quadratic(const ExperimentConfig& cfg) {
  const double h = checked_step(cfg, 0.2);
  const std::size_t k = checked_iterations(cfg, 30);
  const Quadratic q = sc_quadratic_instance();
  const Vector y0 = initial_point(cfg, 2, Vector::Ones(2), 1.0);
  const auto pseudo = generate_orbit(gd_flow_map(q.spec, h), y0, k, h, OrbitKind::sampled_flow);
  const auto map = gd_map(q.objective, h);
  const double rho = (Vector::Ones(2) - h * q.spec.eigenvalues).cwiseAbs().maxCoeff();
  const auto shadow = shadow_contraction(map, pseudo, rho);

  ExperimentReport report = tabulate("sc_quadratic", q.objective, map, pseudo, shadow.shadow);
  const double ell = estimate_ell(q.objective, pseudo);
  const double smooth = q.objective.smoothness;
  set_bounds(report, bound_defect_gd(ell, smooth, h),
             bound_radius_sc(h, ell, smooth, q.objective.strong_convexity));
  report.summary.ell = ell;
  report.summary.regime = to_string(Regime::contraction);
  return report;
}

inline ExperimentReport run_saddle(const ExperimentConfig& cfg) {
  const double h = checked_step(cfg, 0.2);
  const std::size_t k = checked_iterations(cfg, 7);
  Matrix hess = Matrix::Zero(2, 2);
  hess.diagonal() << -1.0, 1.0;
  const Quadratic q = make_quadratic(hess, Vector::Zero(2));
  const Vector y0 = initial_point(cfg, 2, Vector::Ones(2), 1.0);
  const auto map = gd_map(q.objective, h);

  const auto window = generate_orbit(gd_flow_map(q.spec, h), y0, k, h, OrbitKind::sampled_flow);
  const CurvatureSplit curv = curvature_of(q.spec);
  const double ell = estimate_ell(q.objective, window);
  const double eps = radius_saddle(h, ell, curv.smoothness, curv.mu, curv.gamma);

  ExperimentReport report;
  double ell_rows = ell;
  if (cfg.naive_start) {
    const std::size_t horizon = std::max(k, cfg.naive_horizon);
    const auto pseudo =
        generate_orbit(gd_flow_map(q.spec, h), y0, horizon, h, OrbitKind::sampled_flow);
    const auto naive = generate_orbit(map, y0, horizon, h, OrbitKind::algorithm);
    report = tabulate("saddle", q.objective, map, pseudo, naive);
    ell_rows = estimate_ell(q.objective, pseudo);
    report.summary.regime = "naive";
    report.summary.note = "orbit started at y0; eps is computed over the first " +
                          std::to_string(k) + " steps";
  } else {
    const SaddleShadow shadow = shadow_saddle(q.spec, h, window, eps);
    report = tabulate("saddle", q.objective, map, window, shadow.report.shadow);
    report.summary.regime = to_string(Regime::hyperbolic);
  }
  set_bounds(report, bound_defect_gd(ell_rows, curv.smoothness, h), eps);
  report.summary.ell = ell_rows;
  return report;
}

inline ExperimentReport run_hosaki(const ExperimentConfig& cfg) {
  const double h = checked_step(cfg, 0.3);
  const std::size_t k = checked_iterations(cfg, 40);
  const Objective f = make_hosaki();
  Vector fallback(2);
  fallback << 2.05, 1.9;
  const Vector y0 = initial_point(cfg, 2, fallback, 1.0);
  const VectorField field = gd_vector_field(f);
  const double target = 1e-2 * bound_defect_gd(f.gradient(y0).norm(), f.smoothness, h);
  const int substeps = choose_substeps(field, h, y0, target);
  const auto pseudo = generate_orbit(gd_rk4_map(f, h, substeps), y0, k, h, OrbitKind::sampled_flow);
  const auto map = gd_map(f, h);
  const auto orbit = generate_orbit(map, y0, k, h, OrbitKind::algorithm);

  ExperimentReport report = tabulate("hosaki", f, map, pseudo, orbit);
  const double ell = estimate_ell(f, pseudo);
  set_bounds(report, bound_defect_gd(ell, f.smoothness, h),
             std::numeric_limits<double>::quiet_NaN());
  report.summary.ell = ell;
  report.summary.regime = "naive";
  report.summary.note = "orbit started at y0; no closed-form radius away from a saddle";
  return report;
}

inline ExperimentReport run_hb_quadratic(const ExperimentConfig& cfg) {
  const double h = checked_step(cfg, 0.2);
  const double alpha = checked_alpha(cfg, 1.0, h);
  const std::size_t k = checked_iterations(cfg, 30);
  const Quadratic q = sc_quadratic_instance();
  const Vector y0 = initial_point(cfg, 2, Vector::Ones(2), 1.0);
  const PhasePoint start{y0, Vector::Zero(2)};
  const auto pseudo =
      generate_orbit(hb_flow_map(q.spec, alpha, h), start, k, h, OrbitKind::sampled_flow);
  const auto map = hb_map(q.objective, alpha, h);

  std::vector<Vector> packed;
  packed.reserve(pseudo.size());
  for (const PhasePoint& p : pseudo) packed.push_back(pack(p));
  Vector center = Vector::Zero(4);
  center.head(2) = q.spec.center;
  const auto shadow = shadow_linear_hyperbolic(
      hb_linear_map(q.spec, h, alpha), center,
      Orbit<Vector>(std::move(packed), h, OrbitKind::sampled_flow));
  std::vector<PhasePoint> points;
  points.reserve(shadow.shadow.size());
  for (const Vector& v : shadow.shadow) points.push_back(unpack(v));

  ExperimentReport report = tabulate("hb_quadratic", q.objective, map, pseudo,
                                     Orbit<PhasePoint>(std::move(points), h, OrbitKind::algorithm));
  const double ell = estimate_ell(q.objective, pseudo);
  set_bounds(report, bound_defect_hb(ell, q.objective.smoothness, alpha, h),
             std::numeric_limits<double>::quiet_NaN());
  report.summary.ell = ell;
  report.summary.regime = to_string(Regime::hyperbolic);
  report.summary.note = "no Euclidean radius for heavy-ball; deviation is empirical";
  return report;
}

inline ExperimentReport run_sigmoid_erm(const ExperimentConfig& cfg) {
  const double h = checked_step(cfg, 1.0);
  const std::size_t k = checked_iterations(cfg, 100);
  const double lambda = value_or_default(cfg.lambda_reg, 0.005);
  if (!(lambda >= 0.0)) throw ConfigError("lambda_reg", "must be non-negative");
  if (!cfg.dataset_path && (cfg.samples < 1 || cfg.features < 1)) {
    throw ConfigError("n", "synthetic data needs n, d >= 1");
  }
  const Dataset data = cfg.dataset_path ? load_dataset_csv(*cfg.dataset_path)
                                        : generate_synthetic(cfg.samples, cfg.features, cfg.seed);
  const Objective f = make_sigmoid_erm(data, lambda);
  ExperimentConfig init_cfg = cfg;
  if (!cfg.initial_point) init_cfg.random_initial_point = true;
  const Vector x0 = initial_point(init_cfg, data.dim(), Vector::Zero(data.dim()), cfg.init_scale);
  const double ell0 = f.gradient(x0).norm();

  ExperimentReport report;
  double ell = 0.0;
  if (cfg.method == "hb") {
    const double alpha = checked_alpha(cfg, 0.3, h);
    const PhasePoint start{x0, Vector::Zero(data.dim())};
    const VectorField field = hb_vector_field(f, alpha);
    const int substeps = choose_substeps(field, h, pack(start),
                                         1e-2 * bound_defect_hb(ell0, f.smoothness, alpha, h));
    const auto pseudo =
        generate_orbit(hb_rk4_map(f, alpha, h, substeps), start, k, h, OrbitKind::sampled_flow);
    const auto map = hb_map(f, alpha, h);
    const auto orbit = generate_orbit(map, start, k, h, OrbitKind::algorithm);
    report = tabulate("sigmoid_erm", f, map, pseudo, orbit);
    ell = estimate_ell(f, pseudo);
    set_bounds(report, bound_defect_hb(ell, f.smoothness, alpha, h),
               std::numeric_limits<double>::quiet_NaN());
  } else {
    const VectorField field = gd_vector_field(f);
    const int substeps =
        choose_substeps(field, h, x0, 1e-2 * bound_defect_gd(ell0, f.smoothness, h));
    const auto pseudo = generate_orbit(gd_rk4_map(f, h, substeps), x0, k, h, OrbitKind::sampled_flow);
    const auto map = gd_map(f, h);
    const auto orbit = generate_orbit(map, x0, k, h, OrbitKind::algorithm);
    report = tabulate("sigmoid_erm", f, map, pseudo, orbit);
    ell = estimate_ell(f, pseudo);
    double eps = std::numeric_limits<double>::quiet_NaN();
    if (f.strong_convexity) eps = bound_radius_sc(h, ell, f.smoothness, f.strong_convexity);
    set_bounds(report, bound_defect_gd(ell, f.smoothness, h), eps);
  }
  report.summary.ell = ell;
  report.summary.regime = "naive";
  report.summary.note = "method " + cfg.method + ", orbit and flow share the initial point";
  return report;
}

}  // namespace detail

inline ExperimentReport run_preset_in_memory(const ExperimentConfig& cfg) {
  switch (cfg.preset) {
    case Preset::sc_quadratic: return detail::run_sc_quadratic(cfg);
    case Preset::saddle: return detail::run_saddle(cfg);
    case Preset::hosaki: return detail::run_hosaki(cfg);
    case Preset::hb_quadratic: return detail::run_hb_quadratic(cfg);
    case Preset::sigmoid_erm: return detail::run_sigmoid_erm(cfg);
    case Preset::h_sweep: break;
  }
  throw ConfigError("preset", "h_sweep is run with run_h_sweep");
}

inline void write_report_files(const ExperimentReport& report, const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorKind::IoError, "cannot create '" + dir + "': " + ec.message());
  emit_csv(report, (std::filesystem::path(dir) / (report.name + ".csv")).string());
  const std::string summary = (std::filesystem::path(dir) / "summary.txt").string();
  std::ofstream out(summary);
  if (!out) throw Error(ErrorKind::IoError, "cannot write '" + summary + "'");
  emit_summary(report, out);
}

/// Runs one preset; writes `<preset>.csv` and `summary.txt` into
/// `output_dir` when it is set.
inline ExperimentReport run_preset(const ExperimentConfig& cfg) {
  ExperimentReport report = run_preset_in_memory(cfg);
  if (!cfg.output_dir.empty()) write_report_files(report, cfg.output_dir);
  return report;
}

// ---------------------------------------------------------------------------
// Step-size sweep

struct SweepPoint {
  double h = 0.0;
  std::size_t iterations = 0;
  double max_deviation = 0.0;
  double delta_obs = 0.0;
  double delta_bound = 0.0;
};

struct SweepReport {
  std::string base;
  double horizon = 0.0;
  std::vector<SweepPoint> points;
  double slope = 0.0;  // least-squares slope of log(max deviation) vs log(h)
};

inline double loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  const std::size_t n = xs.size();
  double mx = 0.0;
  double my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += std::log(xs[i]);
    my += std::log(ys[i]);
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0;
  double sxx = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = std::log(xs[i]) - mx;
    sxy += dx * (std::log(ys[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

/// Runs the base preset once per step in `h_grid` over a common time
/// horizon K * max(h) and fits the log-log slope of the max deviation.
inline SweepReport run_h_sweep(const ExperimentConfig& cfg) {
  if (cfg.h_grid.size() < 3) throw ConfigError("h_grid", "need at least 3 step sizes");
  for (double h : cfg.h_grid) {
    if (!(h > 0.0) || !std::isfinite(h)) throw ConfigError("h_grid", "steps must be positive");
  }
  const auto [lo, hi] = std::minmax_element(cfg.h_grid.begin(), cfg.h_grid.end());
  if (*hi < 4.0 * *lo * (1.0 - 1e-12)) throw ConfigError("h_grid", "steps must span at least 4x");
  if (cfg.sweep_base == Preset::h_sweep) throw ConfigError("sweep_base", "cannot sweep a sweep");

  SweepReport report;
  report.base = to_string(cfg.sweep_base);
  report.horizon = static_cast<double>(detail::checked_iterations(cfg, 20)) * *hi;
  std::vector<double> hs;
  std::vector<double> devs;
  for (double h : cfg.h_grid) {
    ExperimentConfig sub = cfg;
    sub.preset = cfg.sweep_base;
    sub.h = h;
    sub.iterations = static_cast<std::size_t>(std::llround(report.horizon / h));
    sub.output_dir.clear();
    const ExperimentReport run = run_preset_in_memory(sub);
    report.points.push_back({h, *sub.iterations, run.summary.max_deviation, run.summary.delta_obs,
                             run.summary.delta_bound});
    hs.push_back(h);
    devs.push_back(run.summary.max_deviation);
  }
  for (double d : devs) {
    if (!(d > 0.0)) throw Error(ErrorKind::InvalidArgument, "zero deviation; slope undefined");
  }
  report.slope = loglog_slope(hs, devs);

  if (!cfg.output_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.output_dir, ec);
    if (ec) throw Error(ErrorKind::IoError, "cannot create '" + cfg.output_dir + "'");
    const auto dir = std::filesystem::path(cfg.output_dir);
    std::ofstream csv(dir / "h_sweep.csv");
    if (!csv) throw Error(ErrorKind::IoError, "cannot write h_sweep.csv");
    csv << "h,iterations,max_deviation,delta_obs,delta_bound\n";
    for (const SweepPoint& p : report.points) {
      csv << format_double(p.h) << ',' << p.iterations << ',' << format_double(p.max_deviation)
          << ',' << format_double(p.delta_obs) << ',' << format_double(p.delta_bound) << '\n';
    }
    std::ofstream summary(dir / "summary.txt");
    if (!summary) throw Error(ErrorKind::IoError, "cannot write summary.txt");
    summary << "experiment     h_sweep\n"
            << "base           " << report.base << '\n'
            << "horizon        " << format_double(report.horizon) << '\n'
            << "h              max_deviation            delta_obs                delta_bound\n";
    for (const SweepPoint& p : report.points) {
      summary << format_double(p.h) << "    " << format_double(p.max_deviation) << "    "
              << format_double(p.delta_obs) << "    " << format_double(p.delta_bound) << '\n';
    }
    summary << "slope          " << format_double(report.slope) << '\n';
  }
  return report;
}

}  // namespace shadow_opt
