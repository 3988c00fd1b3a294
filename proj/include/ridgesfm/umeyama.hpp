#pragma once

// Closed-form least-squares rigid / similarity alignment of corresponding
// point sets.

#include <Eigen/Dense>

#include "ridgesfm/errors.hpp"
#include "ridgesfm/geometry.hpp"

namespace ridgesfm {

using Points3 = Eigen::Matrix3Xd;  // one point per column

struct SimilarityTransform {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return scale * (rotation * x) + translation; }
};

// argmin_{s,R,T} sum |s R x_n + T - y_n|^2, with s fixed to one unless
// estimate_scale is set.
inline SimilarityTransform umeyama_similarity(const Points3& x, const Points3& y,
                                              bool estimate_scale = true) {
  if (x.cols() != y.cols()) throw DimensionError("umeyama: point counts differ");
  if (x.cols() < 3) throw DimensionError("umeyama: need at least 3 points");
  const double n = static_cast<double>(x.cols());
  const Vec3 mx = x.rowwise().mean();
  const Vec3 my = y.rowwise().mean();
  const Points3 xc = x.colwise() - mx;
  const Points3 yc = y.colwise() - my;
  const double var_x = xc.squaredNorm() / n;
  if (!(var_x > 1e-24)) throw EstimationError("umeyama: source points are coincident");

  const Mat3 cov = yc * xc.transpose() / n;
  Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3 s = Vec3::Ones();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) s(2) = -1.0;

  SimilarityTransform out;
  out.rotation = svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
  out.scale = estimate_scale ? svd.singularValues().dot(s) / var_x : 1.0;
  out.translation = my - out.scale * (out.rotation * mx);
  return out;
}

// argmin_{R,T} sum |R x_m + T - y_m|^2 with det R = +1.
inline RigidPose umeyama_rigid(const Points3& x, const Points3& y) {
  const SimilarityTransform t = umeyama_similarity(x, y, false);
  return {t.rotation, t.translation};
}

}  // namespace ridgesfm
