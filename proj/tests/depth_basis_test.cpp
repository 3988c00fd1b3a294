#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "ridgesfm/depth_basis.hpp"
#include "test_util.hpp"

namespace ridgesfm {
namespace {

using testing::random_basis;

// Plain gradient descent on |mu + sigma b - t|^2 + lambda |b|^2 with step 1/L.
DepthCode gradient_descent_ridge(const DepthBasis& b, const DepthMap& t, double lambda, int steps) {
  const Eigen::MatrixXd gram = b.sigma.transpose() * b.sigma;
  const double lipschitz = 2.0 * (gram.eigenvalues().real().maxCoeff() + lambda);
  DepthCode beta = DepthCode::Zero(b.K());
  for (int s = 0; s < steps; ++s) {
    const Eigen::VectorXd grad = 2.0 * (b.sigma.transpose() * (b.mu + b.sigma * beta - t) + lambda * beta);
    beta -= grad / lipschitz;
  }
  return beta;
}

// Bilinear interpolation written out from the grid convention: node (r, c)
// sits at frame pixel ((c + 0.5) W_f / W_b - 0.5, (r + 0.5) H_f / H_b - 0.5).
double bilinear_oracle(const Eigen::VectorXd& plane, const DepthBasis& b, const Pixel& p) {
  const double sx = static_cast<double>(b.frame_width) / b.basis_width;
  const double sy = static_cast<double>(b.frame_height) / b.basis_height;
  double gx = (p.u + 0.5) / sx - 0.5;
  double gy = (p.v + 0.5) / sy - 0.5;
  gx = std::min(std::max(gx, 0.0), b.basis_width - 1.0);
  gy = std::min(std::max(gy, 0.0), b.basis_height - 1.0);
  const int x0 = std::min(static_cast<int>(gx), b.basis_width - 2);
  const int y0 = std::min(static_cast<int>(gy), b.basis_height - 2);
  const double fx = gx - x0, fy = gy - y0;
  const auto at = [&](int r, int c) { return plane(r * b.basis_width + c); };
  return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1)) + fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1));
}

std::vector<Pixel> random_pixels(std::mt19937_64& rng, const DepthBasis& b, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Pixel> px;
  for (int k = 0; k < n; ++k) px.push_back({u(rng) * b.frame_width, u(rng) * b.frame_height});
  return px;
}

TEST(EvaluateDense, ZeroCodeGivesMean) {
  std::mt19937_64 rng(1);
  const DepthBasis b = random_basis(rng, 6, 8, 4, 48, 64);
  EXPECT_EQ(evaluate_dense(b, DepthCode::Zero(4)), b.mu);
}

TEST(EvaluateDense, SingleOnesPlane) {
  std::mt19937_64 rng(2);
  DepthBasis b = random_basis(rng, 6, 8, 1, 48, 64);
  b.sigma.setOnes();
  const DepthMap d = evaluate_dense(b, DepthCode::Constant(1, 0.5));
  EXPECT_LT((d - (b.mu.array() + 0.5).matrix()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(EvaluateDense, MatchesElementwiseLoop) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const DepthBasis b = random_basis(rng, 12, 16, 7, 120, 160);
    DepthCode beta(7);
    for (auto& x : beta) x = n(rng);
    const DepthMap d = evaluate_dense(b, beta);
    for (Eigen::Index p = 0; p < d.size(); ++p) {
      double expected = b.mu(p);
      for (int k = 0; k < 7; ++k) expected += beta(k) * b.sigma(p, k);
      EXPECT_NEAR(d(p), expected, 1e-12);
    }
  }
}

TEST(EvaluateDense, CodeLengthMismatchThrows) {
  std::mt19937_64 rng(4);
  const DepthBasis b = random_basis(rng, 6, 8, 4, 48, 64);
  EXPECT_THROW(evaluate_dense(b, DepthCode::Zero(3)), DimensionError);
}

TEST(EvaluateDense, Linearity) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const DepthBasis b = random_basis(rng, 6, 8, 5, 48, 64);
    DepthCode b1(5), b2(5);
    for (auto& x : b1) x = n(rng);
    for (auto& x : b2) x = n(rng);
    const double a = n(rng), c = n(rng);
    const DepthMap lhs = evaluate_dense(b, a * b1 + c * b2);
    const DepthMap rhs = a * evaluate_dense(b, b1) + c * evaluate_dense(b, b2) - (a + c - 1.0) * b.mu;
    EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(SampleAt, ExactNode) {
  std::mt19937_64 rng(6);
  const DepthBasis b = random_basis(rng, 6, 8, 3, 48, 64);
  for (int r = 0; r < 6; ++r) {
    for (int c = 0; c < 8; ++c) {
      const Pixel p = b.node_pixel(r, c);
      const SampledBasis s = sample_at(b, std::vector<Pixel>{p});
      EXPECT_NEAR(s.mean(0), b.mu(r * 8 + c), 1e-12);
      for (int k = 0; k < 3; ++k) EXPECT_NEAR(s.factors(0, k), b.sigma(r * 8 + c, k), 1e-12);
    }
  }
}

TEST(SampleAt, MidpointOfConstantPlane) {
  std::mt19937_64 rng(7);
  DepthBasis b = random_basis(rng, 6, 8, 2, 48, 64);
  b.mu.setConstant(2.5);
  const Pixel a = b.node_pixel(2, 3), c = b.node_pixel(2, 4);
  const SampledBasis s = sample_at(b, std::vector<Pixel>{{(a.u + c.u) / 2, (a.v + c.v) / 2}});
  EXPECT_NEAR(s.mean(0), 2.5, 1e-15);
}

TEST(SampleAt, MatchesDirectBilinearFormula) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    const DepthBasis b = random_basis(rng, 15, 20, 4, 120, 160);
    const auto px = random_pixels(rng, b, 200);
    const SampledBasis s = sample_at(b, px);
    for (size_t m = 0; m < px.size(); ++m) {
      const auto row = static_cast<Eigen::Index>(m);
      EXPECT_NEAR(s.mean(row), bilinear_oracle(b.mu, b, px[m]), 1e-12);
      for (int k = 0; k < 4; ++k)
        EXPECT_NEAR(s.factors(row, k), bilinear_oracle(b.sigma.col(k), b, px[m]), 1e-12);
    }
  }
}

TEST(SampleAt, OutOfBoundsThrows) {
  std::mt19937_64 rng(9);
  const DepthBasis b = random_basis(rng, 6, 8, 2, 48, 64);
  EXPECT_THROW(sample_at(b, std::vector<Pixel>{{64.0, 1.0}}), DomainError);
  EXPECT_THROW(sample_at(b, std::vector<Pixel>{{-0.1, 1.0}}), DomainError);
}

TEST(SampleAt, CommutesWithEvaluateDense) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const DepthBasis b = random_basis(rng, 15, 20, 6, 120, 160);
    DepthCode beta(6);
    for (auto& x : beta) x = n(rng);
    const auto px = random_pixels(rng, b, 100);
    const SampledBasis s = sample_at(b, px);
    const DepthMap dense = evaluate_dense(b, beta);
    for (size_t m = 0; m < px.size(); ++m)
      EXPECT_NEAR(bilinear_oracle(dense, b, px[m]), s.depth(static_cast<Eigen::Index>(m), beta), 1e-9);
  }
}

TEST(RidgeFit, TargetEqualsMean) {
  std::mt19937_64 rng(11);
  const DepthBasis b = random_basis(rng, 6, 8, 4, 48, 64);
  EXPECT_LT(ridge_fit(b, b.mu, 0.1).norm(), 1e-15);
}

TEST(RidgeFit, SingleFactorRecovery) {
  std::mt19937_64 rng(12);
  DepthBasis b = random_basis(rng, 8, 8, 4, 64, 64);
  // Orthonormal factor columns.
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(b.sigma);
  b.sigma = qr.householderQ() * Eigen::MatrixXd::Identity(64, 4);
  const double lambda = 1e-6;
  const DepthCode beta = ridge_fit(b, b.mu + b.sigma.col(0), lambda);
  EXPECT_LT((beta - DepthCode::Unit(4, 0)).norm(), 10 * lambda);
}

TEST(RidgeFit, MatchesGradientDescentOracle) {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const DepthBasis b = random_basis(rng, 10, 12, 6, 80, 96);
    DepthMap target = b.mu;
    for (auto& x : target) x += 0.2 * n(rng);
    const double lambda = 0.05;
    const double closed = ridge_objective(b, target, lambda, ridge_fit(b, target, lambda));
    const double iterative = ridge_objective(b, target, lambda, gradient_descent_ridge(b, target, lambda, 10000));
    EXPECT_LE(closed, iterative + 1e-8);
  }
}

TEST(RidgeFit, StationarityOfTheObjective) {
  std::mt19937_64 rng(14);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const DepthBasis b = random_basis(rng, 10, 12, 8, 80, 96);
    DepthMap target = b.mu;
    for (auto& x : target) x += 0.3 * n(rng);
    const double lambda = 0.1;
    const DepthCode beta = ridge_fit(b, target, lambda);
    const Eigen::VectorXd g = b.sigma.transpose() * (evaluate_dense(b, beta) - target) + lambda * beta;
    EXPECT_LT(g.cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(RidgeFit, Validation) {
  std::mt19937_64 rng(15);
  const DepthBasis b = random_basis(rng, 6, 8, 4, 48, 64);
  EXPECT_THROW(ridge_fit(b, b.mu, 0.0), DomainError);
  EXPECT_THROW(ridge_fit(b, DepthMap::Ones(10), 0.1), DimensionError);
}

TEST(RowVariance, ConstantRowIsZero) {
  std::mt19937_64 rng(16);
  DepthBasis b = random_basis(rng, 6, 8, 2, 48, 64);
  b.sigma.col(0).setConstant(3.0);
  EXPECT_NEAR(row_variance(b)(0), 0.0, 1e-15);
}

TEST(RowVariance, AlternatingSignsByDefinition) {
  std::mt19937_64 rng(17);
  DepthBasis b = random_basis(rng, 6, 8, 1, 48, 64);
  for (Eigen::Index p = 0; p < 48; ++p) b.sigma(p, 0) = p % 2 == 0 ? -1.0 : 1.0;
  // Mean 0, sum of squares n, denominator n - 1.
  EXPECT_NEAR(row_variance(b)(0), 48.0 / 47.0, 1e-14);
}

DepthBasis standardized_basis(std::mt19937_64& rng, int k) {
  DepthBasis b = random_basis(rng, 8, 10, k, 64, 80);
  for (int c = 0; c < k; ++c) {
    Eigen::VectorXd col = b.sigma.col(c);
    col.array() -= col.mean();
    col /= std::sqrt(col.squaredNorm() / static_cast<double>(col.size() - 1));
    b.sigma.col(c) = col;
  }
  return b;
}

TEST(DepthLoss, ZeroAtPerfectBasis) {
  std::mt19937_64 rng(18);
  const DepthBasis b = standardized_basis(rng, 5);
  const DepthLoss loss = depth_training_loss(b, b.mu, 0.1);
  EXPECT_NEAR(loss.total, 0.0, 1e-12);
}

TEST(DepthLoss, DoubledFactorsGiveVarianceTermThreeK) {
  std::mt19937_64 rng(19);
  DepthBasis b = standardized_basis(rng, 6);
  b.sigma *= 2.0;
  const DepthLoss loss = depth_training_loss(b, b.mu, 0.1);
  EXPECT_NEAR(loss.variance_term, 3.0 * 6, 1e-10);
}

TEST(DepthLoss, TotalIsSumOfIndependentComponents) {
  std::mt19937_64 rng(20);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const DepthBasis b = random_basis(rng, 8, 10, 4, 64, 80);
    DepthMap target = b.mu;
    for (auto& x : target) x += 0.1 * n(rng);
    const double lambda = 0.07;
    for (const bool squared : {false, true}) {
      for (const auto red : {PixelReduction::kSum, PixelReduction::kMean}) {
        const DepthLoss loss = depth_training_loss(b, target, lambda, {squared, red});
        // Independent recomputation from the normal equations and raw loops.
        Eigen::MatrixXd gram = b.sigma.transpose() * b.sigma;
        gram.diagonal().array() += lambda;
        const DepthCode beta = gram.ldlt().solve(b.sigma.transpose() * (target - b.mu));
        const double npx = red == PixelReduction::kMean ? 80.0 : 1.0;
        double mean_term = 0.0, fit_sq = 0.0;
        for (Eigen::Index p = 0; p < 80; ++p) {
          mean_term += std::pow(b.mu(p) - target(p), 2);
          double d = b.mu(p);
          for (int k = 0; k < 4; ++k) d += b.sigma(p, k) * beta(k);
          fit_sq += std::pow(d - target(p), 2);
        }
        double var_term = 0.0;
        for (int k = 0; k < 4; ++k) {
          double m = 0.0;
          for (Eigen::Index p = 0; p < 80; ++p) m += b.sigma(p, k);
          m /= 80.0;
          double v = 0.0;
          for (Eigen::Index p = 0; p < 80; ++p) v += std::pow(b.sigma(p, k) - m, 2);
          var_term += std::abs(v / 79.0 - 1.0);
        }
        const double fit = squared ? fit_sq / npx : std::sqrt(fit_sq / npx);
        const double expected = mean_term / npx + fit + lambda * beta.squaredNorm() + var_term;
        EXPECT_NEAR(loss.total, expected, 1e-10);
        EXPECT_NEAR(loss.total, loss.mean_term + loss.fit_term + loss.ridge_term + loss.variance_term, 1e-12);
      }
    }
  }
}

TEST(DepthBasis, ValidateRejectsNonpositiveMean) {
  std::mt19937_64 rng(21);
  DepthBasis b = random_basis(rng, 6, 8, 2, 48, 64);
  EXPECT_NO_THROW(b.validate());
  b.mu(3) = 0.0;
  EXPECT_THROW(b.validate(), DomainError);
}

}  // namespace
}  // namespace ridgesfm
