#pragma once

// Linear depth parametrization D(beta) = mu + sigma * beta, the closed-form
// ridge fit of beta to a target depth map, and bilinear sampling of the basis
// planes at keypoint locations.

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <string>

#include "ridgesfm/errors.hpp"
#include "ridgesfm/geometry.hpp"

namespace ridgesfm {

using DepthCode = Eigen::VectorXd;
using DepthMap = Eigen::VectorXd;  // row-major H_b x W_b

struct DepthBasis {
  int basis_height = 0;
  int basis_width = 0;
  int frame_height = 0;
  int frame_width = 0;
  Eigen::VectorXd mu;     // H_b*W_b mean depths, meters
  Eigen::MatrixXd sigma;  // (H_b*W_b) x K, column k is factor plane k

  int K() const { return static_cast<int>(sigma.cols()); }
  int pixel_count() const { return basis_height * basis_width; }

  void validate() const {
    if (basis_height <= 0 || basis_width <= 0 || frame_height <= 0 || frame_width <= 0)
      throw DimensionError("depth basis: resolutions must be positive");
    if (mu.size() != pixel_count() || sigma.rows() != pixel_count())
      throw DimensionError("depth basis: plane sizes do not match resolution");
    if (K() < 1) throw DimensionError("depth basis: K must be at least 1");
    if (!(mu.array() > 0.0).all()) throw DomainError("depth basis: mean depth must be positive");
    if (!sigma.allFinite()) throw DomainError("depth basis: factor planes must be finite");
  }

  double scale_x() const { return static_cast<double>(frame_width) / basis_width; }
  double scale_y() const { return static_cast<double>(frame_height) / basis_height; }

  // Frame-pixel coordinates of basis node (row, col); nodes sit at the centres
  // of the frame-pixel blocks they cover.
  Pixel node_pixel(int row, int col) const {
    return {(col + 0.5) * scale_x() - 0.5, (row + 0.5) * scale_y() - 0.5};
  }

  // Continuous basis-grid coordinates (col, row) of a frame pixel.
  Eigen::Vector2d grid_coords(const Pixel& p) const {
    return {(p.u + 0.5) / scale_x() - 0.5, (p.v + 0.5) / scale_y() - 0.5};
  }
};

struct SampledBasis {
  Eigen::VectorXd mean;     // M
  Eigen::MatrixXd factors;  // M x K

  Eigen::Index size() const { return mean.size(); }

  double depth(Eigen::Index m, const DepthCode& code) const {
    return mean(m) + factors.row(m).dot(code);
  }

  Eigen::VectorXd depths(const DepthCode& code) const { return mean + factors * code; }
};

struct BilinearTaps {
  std::array<int, 4> index{};
  std::array<double, 4> weight{};
};

// Four-tap bilinear stencil at a frame pixel; borders replicate the edge nodes.
inline BilinearTaps bilinear_taps(const DepthBasis& basis, const Pixel& p) {
  if (!p.inside(basis.frame_width, basis.frame_height))
    throw DomainError("sample_at: pixel (" + std::to_string(p.u) + ", " + std::to_string(p.v) +
                      ") outside the frame");
  const Eigen::Vector2d g = basis.grid_coords(p);
  const double gx = std::clamp(g.x(), 0.0, basis.basis_width - 1.0);
  const double gy = std::clamp(g.y(), 0.0, basis.basis_height - 1.0);
  const int x0 = std::min(static_cast<int>(std::floor(gx)), std::max(basis.basis_width - 2, 0));
  const int y0 = std::min(static_cast<int>(std::floor(gy)), std::max(basis.basis_height - 2, 0));
  const int x1 = std::min(x0 + 1, basis.basis_width - 1);
  const int y1 = std::min(y0 + 1, basis.basis_height - 1);
  const double fx = gx - x0;
  const double fy = gy - y0;
  const int w = basis.basis_width;
  BilinearTaps t;
  t.index = {y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1};
  t.weight = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
  return t;
}

inline DepthMap evaluate_dense(const DepthBasis& basis, const DepthCode& code) {
  if (code.size() != basis.K())
    throw DimensionError("evaluate_dense: code length " + std::to_string(code.size()) +
                         " != K " + std::to_string(basis.K()));
  return basis.mu + basis.sigma * code;
}

inline SampledBasis sample_at(const DepthBasis& basis, std::span<const Pixel> pixels) {
  SampledBasis out;
  const auto m = static_cast<Eigen::Index>(pixels.size());
  out.mean.resize(m);
  out.factors.resize(m, basis.K());
  for (Eigen::Index i = 0; i < m; ++i) {
    const BilinearTaps t = bilinear_taps(basis, pixels[static_cast<size_t>(i)]);
    double mean = 0.0;
    out.factors.row(i).setZero();
    for (int k = 0; k < 4; ++k) {
      mean += t.weight[k] * basis.mu(t.index[k]);
      out.factors.row(i) += t.weight[k] * basis.sigma.row(t.index[k]);
    }
    out.mean(i) = mean;
  }
  return out;
}

// argmin_beta |mu + sigma beta - target|^2 + lambda |beta|^2
inline DepthCode ridge_fit(const DepthBasis& basis, const DepthMap& target, double lambda) {
  if (target.size() != basis.pixel_count())
    throw DimensionError("ridge_fit: target resolution does not match the basis");
  if (!(lambda > 0.0)) throw DomainError("ridge_fit: lambda must be positive");
  Eigen::MatrixXd gram = basis.sigma.transpose() * basis.sigma;
  gram.diagonal().array() += lambda;
  return gram.llt().solve(basis.sigma.transpose() * (target - basis.mu));
}

inline double ridge_objective(const DepthBasis& basis, const DepthMap& target, double lambda,
                              const DepthCode& code) {
  return (evaluate_dense(basis, code) - target).squaredNorm() + lambda * code.squaredNorm();
}

// Per-plane sample variance (denominator n - 1).
inline Eigen::VectorXd row_variance(const DepthBasis& basis) {
  const auto n = basis.sigma.rows();
  if (n < 2) throw DimensionError("row_variance: need at least two pixels");
  const Eigen::RowVectorXd mean = basis.sigma.colwise().mean();
  return ((basis.sigma.rowwise() - mean).colwise().squaredNorm() / static_cast<double>(n - 1))
      .transpose();
}

enum class PixelReduction { kSum, kMean };

struct DepthLossOptions {
  // The fit term is an unsquared L2 norm unless this is set.
  bool squared_fit_term = false;
  PixelReduction reduction = PixelReduction::kSum;
};

struct DepthLoss {
  double total = 0.0;
  double mean_term = 0.0;      // |mu - D*|^2
  double fit_term = 0.0;       // |mu + sigma beta* - D*|
  double ridge_term = 0.0;     // lambda |beta*|^2
  double variance_term = 0.0;  // |RowVar(sigma) - 1|_1
  DepthCode code;
};

inline DepthLoss depth_training_loss(const DepthBasis& basis, const DepthMap& target, double lambda,
                                     const DepthLossOptions& options = {}) {
  DepthLoss loss;
  loss.code = ridge_fit(basis, target, lambda);
  const double n = options.reduction == PixelReduction::kMean ? basis.pixel_count() : 1.0;
  loss.mean_term = (basis.mu - target).squaredNorm() / n;
  const double fit_sq = (evaluate_dense(basis, loss.code) - target).squaredNorm() / n;
  loss.fit_term = options.squared_fit_term ? fit_sq : std::sqrt(fit_sq);
  loss.ridge_term = lambda * loss.code.squaredNorm();
  loss.variance_term = (row_variance(basis).array() - 1.0).abs().sum();
  loss.total = loss.mean_term + loss.fit_term + loss.ridge_term + loss.variance_term;
  return loss;
}

}  // namespace ridgesfm
