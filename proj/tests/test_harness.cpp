#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "shadow_opt/harness.hpp"

using namespace shadow_opt;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("shadow_opt_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

ExperimentConfig config_for(Preset preset) {
  ExperimentConfig cfg;
  cfg.preset = preset;
  return cfg;
}

std::string config_field(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ConfigError& e) {
    return e.field();
  }
  ADD_FAILURE() << "no ConfigError";
  return {};
}

std::vector<std::vector<double>> parse_csv_numbers(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::strtod(cell.c_str(), nullptr));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

TEST(Config, ParsesKeysAndComments) {
  std::istringstream in(
      "# saddle run\n"
      "preset = saddle\n"
      "h=0.1   # smaller step\n"
      "\n"
      "K=12\n"
      "initial_point = 1.5, -2\n"
      "naive_start=true\n"
      "h_grid={0.125,0.25,0.5,1}\n");
  ExperimentConfig cfg;
  parse_config(in, cfg);
  EXPECT_EQ(cfg.preset, Preset::saddle);
  EXPECT_DOUBLE_EQ(*cfg.h, 0.1);
  EXPECT_EQ(*cfg.iterations, 12u);
  ASSERT_EQ(cfg.initial_point->size(), 2u);
  EXPECT_DOUBLE_EQ((*cfg.initial_point)[1], -2.0);
  EXPECT_TRUE(cfg.naive_start);
  EXPECT_EQ(cfg.h_grid.size(), 4u);
}

TEST(Config, ErrorsNameTheField) {
  ExperimentConfig cfg;
  EXPECT_EQ(config_field([&] { apply_setting(cfg, "h", "abc"); }), "h");
  EXPECT_EQ(config_field([&] { apply_setting(cfg, "colour", "red"); }), "colour");
  EXPECT_EQ(config_field([&] { apply_setting(cfg, "preset", "mnist"); }), "preset");
  EXPECT_EQ(config_field([&] { apply_setting(cfg, "K", "-3"); }), "K");
  EXPECT_EQ(config_field([&] { apply_setting(cfg, "method", "adam"); }), "method");
  std::istringstream bad("h 0.1\n");
  EXPECT_EQ(config_field([&] { parse_config(bad, cfg); }), "line 1");
  apply_setting(cfg, "initial_point", "random");
  EXPECT_TRUE(cfg.random_initial_point);
}

TEST(Config, PresetPreconditions) {
  ExperimentConfig cfg = config_for(Preset::sc_quadratic);
  cfg.h = -1.0;
  EXPECT_EQ(config_field([&] { run_preset(cfg); }), "h");
  cfg.h = 0.1;
  cfg.iterations = 0;
  EXPECT_EQ(config_field([&] { run_preset(cfg); }), "K");
  cfg.iterations = 5;
  cfg.initial_point = std::vector<double>{1.0, 2.0, 3.0};
  EXPECT_EQ(config_field([&] { run_preset(cfg); }), "initial_point");
  ExperimentConfig hb = config_for(Preset::hb_quadratic);
  hb.alpha = 100.0;
  EXPECT_EQ(config_field([&] { run_preset(hb); }), "alpha");
}

TEST(Presets, RowCountAndDefectBounds) {
  for (Preset p : {Preset::sc_quadratic, Preset::saddle, Preset::hosaki, Preset::hb_quadratic,
                   Preset::sigmoid_erm}) {
    ExperimentConfig cfg = config_for(p);
    cfg.iterations = 25;
    cfg.samples = 200;
    const ExperimentReport report = run_preset(cfg);
    ASSERT_EQ(report.rows.size(), 26u) << to_string(p);
    for (const ExperimentRow& r : report.rows) {
      EXPECT_LE(r.defect, r.delta_bound) << to_string(p) << " k " << r.k;
    }
    double max_dev = 0.0;
    for (const ExperimentRow& r : report.rows) max_dev = std::max(max_dev, r.deviation);
    EXPECT_DOUBLE_EQ(report.summary.max_deviation, max_dev) << to_string(p);
  }
  ExperimentConfig saddle = config_for(Preset::saddle);
  saddle.naive_start = true;
  for (const ExperimentRow& r : run_preset(saddle).rows) EXPECT_LE(r.defect, r.delta_bound);
}

TEST(Presets, StronglyConvexDeviationSettlesBelowRadius) {
  const ExperimentReport report = run_preset(config_for(Preset::sc_quadratic));
  EXPECT_LE(report.summary.max_deviation, report.summary.eps_bound);
  EXPECT_LE(report.rows.back().deviation, report.rows.back().eps_bound);
  EXPECT_LT(report.rows.back().deviation, 1e-2 * report.summary.max_deviation);
}

TEST(Presets, SaddleNaiveBlowsUpShadowDoesNot) {
  ExperimentConfig naive = config_for(Preset::saddle);
  naive.naive_start = true;
  const ExperimentReport blown = run_preset(naive);
  ASSERT_EQ(blown.rows.size(), 31u);
  bool exceeded = false;
  for (const ExperimentRow& r : blown.rows) {
    if (r.k < 30 && r.deviation > 10.0 * r.eps_bound) exceeded = true;
  }
  EXPECT_TRUE(exceeded);

  const ExperimentReport shadowed = run_preset(config_for(Preset::saddle));
  for (const ExperimentRow& r : shadowed.rows) EXPECT_LE(r.deviation, r.eps_bound);
}

TEST(Presets, ErmGdLossDecreases) {
  ExperimentConfig cfg = config_for(Preset::sigmoid_erm);
  cfg.lambda_reg = 0.005;
  const ExperimentReport report = run_preset(cfg);
  for (std::size_t k = 1; k < report.rows.size(); ++k) {
    EXPECT_LT(report.rows[k].loss, report.rows[k - 1].loss) << "k " << k;
  }
}

TEST(Presets, ErmReadsDatasetFile) {
  const fs::path dir = scratch_dir("dataset");
  {
    std::ofstream out(dir / "data.csv");
    const Dataset d = generate_synthetic(50, 3, 1);
    for (int i = 0; i < d.size(); ++i) {
      out << d.features(i, 0) << ',' << d.features(i, 1) << ',' << d.features(i, 2) << ','
          << d.labels(i) << '\n';
    }
  }
  ExperimentConfig cfg = config_for(Preset::sigmoid_erm);
  cfg.dataset_path = (dir / "data.csv").string();
  cfg.iterations = 5;
  EXPECT_EQ(run_preset(cfg).rows.front().shadow.size(), 4);
  cfg.dataset_path = (dir / "missing.csv").string();
  try {
    run_preset(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::IoError);
  }
}

TEST(Csv, HeaderRowsAndRoundTrip) {
  ExperimentConfig cfg = config_for(Preset::sc_quadratic);
  cfg.iterations = 1;
  const ExperimentReport report = run_preset(cfg);
  std::ostringstream out;
  emit_csv(report, out);
  const std::string text = out.str();
  EXPECT_EQ(text.substr(0, text.find('\n')), "k,deviation,defect,delta_bound,eps_bound,loss");
  const auto rows = parse_csv_numbers(text);
  ASSERT_EQ(rows.size(), 2u);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const ExperimentRow& r = report.rows[k];
    EXPECT_EQ(rows[k][1], r.deviation);
    EXPECT_EQ(rows[k][2], r.defect);
    EXPECT_EQ(rows[k][3], r.delta_bound);
    EXPECT_EQ(rows[k][4], r.eps_bound);
    EXPECT_EQ(rows[k][5], r.loss);
  }
}

TEST(Csv, DeterministicFiles) {
  ExperimentConfig cfg = config_for(Preset::sigmoid_erm);
  cfg.samples = 300;
  cfg.seed = 17;
  cfg.iterations = 20;
  const fs::path first = scratch_dir("det_a");
  const fs::path second = scratch_dir("det_b");
  cfg.output_dir = first.string();
  run_preset(cfg);
  cfg.output_dir = second.string();
  run_preset(cfg);
  const std::string a = read_file(first / "sigmoid_erm.csv");
  const std::string b = read_file(second / "sigmoid_erm.csv");
  EXPECT_FALSE(a.empty());
  EXPECT_EQ(a, b);
  EXPECT_TRUE(fs::exists(second / "summary.txt"));
}

TEST(Csv, UnwritablePathIsIoError) {
  ExperimentReport report;
  try {
    emit_csv(report, "/nonexistent/dir/out.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::IoError);
  }
}

TEST(Sweep, GridPreconditions) {
  ExperimentConfig cfg = config_for(Preset::h_sweep);
  cfg.h_grid = {0.1};
  EXPECT_EQ(config_field([&] { run_h_sweep(cfg); }), "h_grid");
  cfg.h_grid = {0.1, 0.15, 0.2};
  EXPECT_EQ(config_field([&] { run_h_sweep(cfg); }), "h_grid");
}

TEST(Sweep, QuadraticDeviationIsLinearInStep) {
  ExperimentConfig cfg = config_for(Preset::h_sweep);
  cfg.sweep_base = Preset::sc_quadratic;
  cfg.h_grid = {0.01, 0.02, 0.04, 0.08};
  cfg.iterations = 40;
  const SweepReport report = run_h_sweep(cfg);
  EXPECT_GE(report.slope, 0.8);
  EXPECT_LE(report.slope, 1.2);
  for (std::size_t i = 1; i < report.points.size(); ++i) {
    const double ratio = report.points[i].max_deviation / report.points[i - 1].max_deviation;
    EXPECT_GE(ratio, 1.6);
    EXPECT_LE(ratio, 2.4);
  }
  EXPECT_EQ(report.points.front().iterations, 320u);
}

TEST(Sweep, LeastSquaresSlopeOracle) {
  EXPECT_NEAR(loglog_slope({1.0, 2.0, 4.0}, {3.0, 12.0, 48.0}), 2.0, 1e-12);
}

namespace {

int run_cli(const std::string& args) {
  const char* cli = std::getenv("SHADOW_OPT_CLI");
  if (!cli) return -1;
  const std::string cmd = std::string(cli) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, ExitCodes) {
  if (!std::getenv("SHADOW_OPT_CLI")) GTEST_SKIP() << "SHADOW_OPT_CLI not set";
  const fs::path dir = scratch_dir("cli");
  {
    std::ofstream cfg(dir / "sweep.cfg");
    cfg << "sweep_base=sc_quadratic\nh_grid=0.01,0.02,0.04,0.08\nK=10\n";
    std::ofstream bad(dir / "bad.cfg");
    bad << "h_grid=0.1\n";
  }
  EXPECT_EQ(run_cli("run --preset saddle --k 7 --out " + (dir / "run").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "run" / "saddle.csv"));
  EXPECT_EQ(run_cli("sweep --config " + (dir / "sweep.cfg").string() + " --out " + (dir / "sw").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "sw" / "h_sweep.csv"));
  EXPECT_EQ(run_cli("sweep --config " + (dir / "bad.cfg").string()), 2);
  EXPECT_EQ(run_cli("run --preset nope"), 2);
  EXPECT_EQ(run_cli("run --preset saddle --colour red"), 2);
  // A unit-circle eigenvalue of I - hH is a numeric failure.
  EXPECT_EQ(run_cli("run --preset saddle --h 2"), 1);
}
