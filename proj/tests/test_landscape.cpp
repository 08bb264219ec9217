#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "shadow_opt/landscape.hpp"
#include "test_support.hpp"

using namespace shadow_opt;
using test_support::fd_gradient;
using test_support::fd_hessian;

namespace {

Matrix diag(std::initializer_list<double> values) {
  Vector v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v(i++) = x;
  return v.asDiagonal();
}

}  // namespace

TEST(Quadratic, ConstantsOfSaddle) {
  const Quadratic q = make_quadratic(diag({-1.0, 1.0}), Vector::Zero(2));
  EXPECT_DOUBLE_EQ(q.objective.smoothness, 1.0);
  ASSERT_TRUE(q.objective.strong_convexity);
  ASSERT_TRUE(q.objective.concavity);
  EXPECT_DOUBLE_EQ(*q.objective.strong_convexity, 1.0);
  EXPECT_DOUBLE_EQ(*q.objective.concavity, 1.0);
  EXPECT_FALSE(q.objective.strongly_convex);
  EXPECT_DOUBLE_EQ(q.spec.eigenvalues(0), -1.0);
}

TEST(Quadratic, ConstantsOfStronglyConvex) {
  const Quadratic q = make_quadratic(diag({3.0, 1.0}), Vector::Zero(2));
  EXPECT_DOUBLE_EQ(q.objective.smoothness, 3.0);
  EXPECT_DOUBLE_EQ(*q.objective.strong_convexity, 1.0);
  EXPECT_FALSE(q.objective.concavity);
  EXPECT_TRUE(q.objective.strongly_convex);
}

TEST(Quadratic, ZeroEigenvalueIsNotStronglyConvex) {
  const Quadratic q = make_quadratic(diag({0.0, 2.0}), Vector::Zero(2));
  EXPECT_FALSE(q.objective.strongly_convex);
  EXPECT_DOUBLE_EQ(*q.objective.strong_convexity, 2.0);
  EXPECT_FALSE(q.objective.concavity);
}

TEST(Quadratic, RejectsAsymmetricHessian) {
  Matrix h = diag({1.0, 2.0});
  h(0, 1) = 1e-6;
  try {
    make_quadratic(h, Vector::Zero(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonSymmetric);
  }
}

TEST(Quadratic, GradientAndSpectrumMatchOracles) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 1 + trial % 6;
    Vector values = test_support::random_vector(d, rng, 2.0);
    const Matrix h = test_support::random_symmetric(values, rng);
    const Vector c = test_support::random_vector(d, rng);
    const Quadratic q = make_quadratic(h, c);
    const Vector x = test_support::random_vector(d, rng);
    EXPECT_LT((q.objective.gradient(x) - fd_gradient(q.objective, x)).norm(), 1e-6);
    const Matrix rebuilt =
        q.spec.eigenvectors * q.spec.eigenvalues.asDiagonal() * q.spec.eigenvectors.transpose();
    EXPECT_LT((rebuilt - h).norm(), 1e-10);
    EXPECT_LT((q.spec.eigenvectors.transpose() * q.spec.eigenvectors -
               Matrix::Identity(d, d)).norm(), 1e-12);
    for (Eigen::Index i = 1; i < d; ++i) EXPECT_LE(q.spec.eigenvalues(i - 1), q.spec.eigenvalues(i));
    EXPECT_NEAR(q.objective.smoothness, values.cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Quadratic, EigenvectorSignsAreCanonical) {
  std::mt19937_64 rng(3);
  const Matrix h = test_support::random_symmetric(Vector::LinSpaced(4, -2.0, 3.0), rng);
  const Quadratic q = make_quadratic(h, Vector::Zero(4));
  for (Eigen::Index j = 0; j < 4; ++j) {
    for (Eigen::Index i = 0; i < 4; ++i) {
      if (std::abs(q.spec.eigenvectors(i, j)) > 1e-12) {
        EXPECT_GT(q.spec.eigenvectors(i, j), 0.0);
        break;
      }
    }
  }
}

TEST(Sigmoid, LossIsStableAtExtremes) {
  EXPECT_NEAR(sigmoid_loss(0.0), 0.5, 1e-15);
  EXPECT_EQ(sigmoid_loss(1000.0), 0.0);
  EXPECT_EQ(sigmoid_loss(-1000.0), 1.0);
  EXPECT_TRUE(std::isfinite(sigmoid_loss_derivative(800.0)));
  EXPECT_NEAR(sigmoid_loss(2.0) + sigmoid_loss(-2.0), 1.0, 1e-15);
}

TEST(Sigmoid, DerivativeMatchesFiniteDifference) {
  for (double t = -6.0; t <= 6.0; t += 0.37) {
    const double fd = (sigmoid_loss(t + 1e-6) - sigmoid_loss(t - 1e-6)) / 2e-6;
    EXPECT_NEAR(sigmoid_loss_derivative(t), fd, 1e-8);
  }
}

TEST(Sigmoid, CurvatureBoundIsTheSupremum) {
  double peak = 0.0;
  for (double t = -10.0; t <= 10.0; t += 1e-3) {
    const double e = 1e-4;
    const double second = (sigmoid_loss(t + e) - 2.0 * sigmoid_loss(t) + sigmoid_loss(t - e)) / (e * e);
    peak = std::max(peak, std::abs(second));
  }
  EXPECT_NEAR(peak, kSigmoidCurvatureBound, 1e-6);
  EXPECT_NEAR(kSigmoidCurvatureBound, 0.0962250448649376, 1e-15);
}

TEST(SigmoidErm, GradientMatchesFiniteDifference) {
  const Dataset data = generate_synthetic(60, 4, 11);
  const Objective f = make_sigmoid_erm(data, 0.05);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 5; ++i) {
    const Vector x = test_support::random_vector(data.dim(), rng);
    EXPECT_LT((f.gradient(x) - fd_gradient(f, x)).norm(), 1e-7);
  }
}

TEST(SigmoidErm, SmoothnessBoundsSampledHessians) {
  const Dataset data = generate_synthetic(80, 3, 2);
  const Objective f = make_sigmoid_erm(data, 0.1);
  std::mt19937_64 rng(9);
  for (int i = 0; i < 20; ++i) {
    const Vector x = test_support::random_vector(data.dim(), rng, 2.0);
    const Matrix h = fd_hessian(f, x);
    const double norm = Eigen::SelfAdjointEigenSolver<Matrix>(h).eigenvalues().cwiseAbs().maxCoeff();
    EXPECT_LE(norm, f.smoothness + 1e-6);
  }
}

TEST(SigmoidErm, StrongConvexityOnlyWhenRegularizerDominates) {
  const Dataset data = generate_synthetic(100, 5, 1);
  const Objective weak = make_sigmoid_erm(data, 0.005);
  EXPECT_FALSE(weak.strongly_convex);
  EXPECT_FALSE(weak.strong_convexity);
  const Objective strong = make_sigmoid_erm(data, 50.0);
  EXPECT_TRUE(strong.strongly_convex);
  ASSERT_TRUE(strong.strong_convexity);
  EXPECT_GT(*strong.strong_convexity, 0.0);
}

TEST(SigmoidErm, RejectsEmptyDataset) {
  Dataset empty;
  try {
    make_sigmoid_erm(empty, 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyDataset);
  }
}

TEST(Hosaki, GradientMatchesFiniteDifference) {
  const Objective f = make_hosaki();
  for (double u = 0.0; u <= 5.0; u += 0.7) {
    for (double v = 0.1; v <= 5.0; v += 0.9) {
      Vector x(2);
      x << u, v;
      EXPECT_LT((f.gradient(x) - fd_gradient(f, x)).norm(), 1e-7);
    }
  }
}

TEST(Hosaki, CriticalPoints) {
  const Objective f = make_hosaki();
  for (const auto& [u, v] : {std::pair{2.0, 2.0}, std::pair{1.0, 2.0}, std::pair{4.0, 2.0}}) {
    Vector x(2);
    x << u, v;
    EXPECT_LT(f.gradient(x).norm(), 1e-12);
  }
  Vector best(2);
  best << 4.0, 2.0;
  // p(4) = -13/3 and v^2 e^{-v} = 4 e^{-2}.
  EXPECT_NEAR(f.value(best), -52.0 / 3.0 * std::exp(-2.0), 1e-12);
  EXPECT_NEAR(f.value(best), -2.3458, 1e-4);
  Vector saddle(2);
  saddle << 2.0, 2.0;
  const Vector eig = Eigen::SelfAdjointEigenSolver<Matrix>(fd_hessian(f, saddle)).eigenvalues();
  EXPECT_LT(eig(0), 0.0);
  EXPECT_GT(eig(1), 0.0);
}

TEST(Hosaki, SmoothnessBoundsHessianOnBox) {
  const Objective f = make_hosaki();
  double peak = 0.0;
  for (double u = 0.0; u <= 5.0 + 1e-9; u += 0.05) {
    for (double v = 0.0; v <= 5.0 + 1e-9; v += 0.05) {
      Vector x(2);
      x << u, v;
      const Matrix h = fd_hessian(f, x);
      peak = std::max(peak, Eigen::SelfAdjointEigenSolver<Matrix>(h).eigenvalues().cwiseAbs().maxCoeff());
    }
  }
  EXPECT_LE(peak, f.smoothness);
  EXPECT_GT(peak, 0.95 * f.smoothness);
}

TEST(CosinePerturbation, GradientAndCurvature) {
  Vector c(3);
  c << 0.5, -1.0, 2.0;
  const Objective phi = make_cosine_perturbation(c, 0.05);
  EXPECT_LT(phi.gradient(c).norm(), 1e-15);
  std::mt19937_64 rng(4);
  for (int i = 0; i < 10; ++i) {
    const Vector x = test_support::random_vector(3, rng, 3.0);
    EXPECT_LT((phi.gradient(x) - fd_gradient(phi, x)).norm(), 1e-8);
    const Matrix h = fd_hessian(phi, x);
    EXPECT_LE(h.cwiseAbs().maxCoeff(), 0.05 + 1e-8);
  }
}

TEST(Quartic, GradientAndLocalSmoothness) {
  const Objective f = make_quartic(2, 1.0);
  Vector x(2);
  x << 0.7, -0.4;
  EXPECT_LT((f.gradient(x) - fd_gradient(f, x)).norm(), 1e-8);
  EXPECT_DOUBLE_EQ(f.smoothness, 3.0);
  EXPECT_FALSE(f.strongly_convex);
}

TEST(Sum, CombinesConstantsConservatively) {
  const Quadratic q = make_quadratic(diag({-1.0, 1.0}), Vector::Zero(2));
  const Objective phi = make_cosine_perturbation(Vector::Zero(2), 0.05);
  const Objective g = make_sum(q.objective, phi);
  EXPECT_DOUBLE_EQ(g.smoothness, 1.05);
  EXPECT_DOUBLE_EQ(*g.concavity, 0.95);
  EXPECT_DOUBLE_EQ(*g.perturbation_lipschitz, 0.05);
  Vector x(2);
  x << 0.3, 0.8;
  EXPECT_LT((g.gradient(x) - fd_gradient(g, x)).norm(), 1e-8);
}

TEST(DatasetCsv, ParsesRowsAndAppendsBias) {
  std::istringstream in("1.5,2,1\n\n-0.5, 3e-1 ,-1\n");
  const Dataset data = parse_dataset_csv(in);
  ASSERT_EQ(data.size(), 2);
  ASSERT_EQ(data.dim(), 3);
  EXPECT_DOUBLE_EQ(data.features(1, 1), 0.3);
  EXPECT_DOUBLE_EQ(data.features(0, 2), 1.0);
  EXPECT_DOUBLE_EQ(data.labels(1), -1.0);
}

TEST(DatasetCsv, ReportsErrorsWithRow) {
  auto kind_of = [](const std::string& text, std::optional<std::size_t>* row = nullptr) {
    std::istringstream in(text);
    try {
      parse_dataset_csv(in);
    } catch (const Error& e) {
      if (row) *row = e.index();
      return e.kind();
    }
    return ErrorKind::InvalidArgument;
  };
  std::optional<std::size_t> row;
  EXPECT_EQ(kind_of("1,2,1\n1,x,1\n", &row), ErrorKind::ParseError);
  EXPECT_EQ(row, 2u);
  EXPECT_EQ(kind_of("1,2,0\n", &row), ErrorKind::BadLabel);
  EXPECT_EQ(row, 1u);
  EXPECT_EQ(kind_of("1,2,1\n1,1\n"), ErrorKind::ParseError);
  EXPECT_EQ(kind_of("\n\n"), ErrorKind::EmptyDataset);
  EXPECT_EQ(kind_of("1,nan,1\n"), ErrorKind::ParseError);
}

TEST(DatasetCsv, MissingFileIsIoError) {
  try {
    load_dataset_csv("/nonexistent/data.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::IoError);
  }
}

TEST(Synthetic, DeterministicAndBalanced) {
  const Dataset a = generate_synthetic(400, 5, 42);
  const Dataset b = generate_synthetic(400, 5, 42);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.dim(), 6);
  EXPECT_TRUE((a.features.col(5).array() == 1.0).all());
  EXPECT_DOUBLE_EQ(a.labels.sum(), 0.0);
  // Class means sit near +/- (2/sqrt 5) per coordinate.
  Vector mean = Vector::Zero(5);
  for (int i = 0; i < a.size(); ++i) mean += a.labels(i) * a.features.row(i).head(5).transpose();
  mean /= a.size();
  EXPECT_NEAR(mean.norm(), 2.0, 0.3);
  const Dataset c = generate_synthetic(400, 5, 43);
  EXPECT_NE(a.features, c.features);
}
