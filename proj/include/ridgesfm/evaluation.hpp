#pragma once

// Reconstruction metrics after 7-d.o.f. alignment of the prediction onto the
// ground truth: camera rotation/center errors, depth L1/RMSE and point-cloud
// L1/RMSE.

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "ridgesfm/depth_basis.hpp"
#include "ridgesfm/errors.hpp"
#include "ridgesfm/geometry.hpp"
#include "ridgesfm/umeyama.hpp"

namespace ridgesfm {

// Camera and depth-grid layout shared by every frame of a reconstruction.
struct DepthCamera {
  Intrinsics intrinsics;
  int grid_height = 0;
  int grid_width = 0;

  int pixel_count() const { return grid_height * grid_width; }

  // Frame pixel of grid node (row, col), same convention as DepthBasis.
  Pixel node_pixel(int row, int col) const {
    const double sx = static_cast<double>(intrinsics.width) / grid_width;
    const double sy = static_cast<double>(intrinsics.height) / grid_height;
    return {(col + 0.5) * sx - 0.5, (row + 0.5) * sy - 0.5};
  }

  Vec3 node_ray(Eigen::Index p) const {
    const Pixel px = node_pixel(static_cast<int>(p / grid_width), static_cast<int>(p % grid_width));
    return intrinsics.ray(px.u, px.v);
  }
};

struct Reconstruction {
  std::vector<RigidPose> poses;
  std::vector<DepthMap> depths;  // grid resolution, one per pose
};

struct ErrorPair {
  double l1 = 0.0;
  double rmse = 0.0;
};

struct MetricsReport {
  double rotation_error_deg = 0.0;
  double center_error_m = 0.0;
  double depth_l1 = 0.0;
  double depth_rmse = 0.0;
  double pcl_l1 = 0.0;
  double pcl_rmse = 0.0;
  int frames = 0;
  long aligned_points = 0;
  SimilarityTransform alignment;
};

// Mean rotation angle and center distance after mapping the predicted
// cameras through sim (centers s R c + t, rotations R_s R).
inline std::pair<double, double> camera_errors(std::span<const RigidPose> pred, std::span<const RigidPose> gt,
                                               const SimilarityTransform& sim) {
  if (pred.size() != gt.size()) throw DimensionError("camera_errors: camera counts differ");
  if (pred.empty()) throw DimensionError("camera_errors: no cameras");
  double rot = 0.0, center = 0.0;
  for (size_t f = 0; f < pred.size(); ++f) {
    rot += rotation_angle_deg(sim.rotation * pred[f].rotation, gt[f].rotation);
    center += (sim.apply(pred[f].translation) - gt[f].translation).norm();
  }
  const double n = static_cast<double>(pred.size());
  return {rot / n, center / n};
}

// Per-frame L1 and RMSE of scale * pred against gt over pixels with gt > 0,
// each averaged over frames.
inline ErrorPair depth_errors(std::span<const DepthMap> pred, std::span<const DepthMap> gt, double scale) {
  if (pred.size() != gt.size()) throw DimensionError("depth_errors: frame counts differ");
  if (pred.empty()) throw DimensionError("depth_errors: no frames");
  ErrorPair out;
  for (size_t f = 0; f < pred.size(); ++f) {
    if (pred[f].size() != gt[f].size()) throw DimensionError("depth_errors: resolutions differ");
    const Eigen::ArrayXd valid = (gt[f].array() > 0.0).cast<double>();
    const double n = valid.sum();
    if (n == 0.0) throw DomainError("depth_errors: frame without valid ground-truth pixels");
    const Eigen::ArrayXd diff = (scale * pred[f].array() - gt[f].array()) * valid;
    out.l1 += diff.abs().sum() / n;
    out.rmse += std::sqrt(diff.square().sum() / n);
  }
  out.l1 /= static_cast<double>(pred.size());
  out.rmse /= static_cast<double>(pred.size());
  return out;
}

namespace detail {

inline void check_reconstruction(const Reconstruction& r, const DepthCamera& cam, const char* what) {
  if (r.poses.size() != r.depths.size()) throw DimensionError(std::string(what) + ": one depth map per pose required");
  for (const auto& d : r.depths)
    if (d.size() != cam.pixel_count()) throw DimensionError(std::string(what) + ": depth map does not match grid");
}

// World points of every stride-th pixel (flattened per frame) with gt > 0.
inline std::pair<Points3, Points3> corresponding_clouds(const Reconstruction& pred, const Reconstruction& gt,
                                                        const DepthCamera& cam, int stride) {
  if (stride < 1) throw DomainError("point cloud stride must be positive");
  check_reconstruction(pred, cam, "prediction");
  check_reconstruction(gt, cam, "ground truth");
  if (pred.poses.size() != gt.poses.size()) throw DimensionError("frame counts differ");
  std::vector<Eigen::Index> rays;
  for (Eigen::Index p = 0; p < cam.pixel_count(); p += stride) rays.push_back(p);
  long n = 0;
  for (const auto& d : gt.depths)
    for (const auto p : rays) n += d(p) > 0.0;
  Points3 x(3, n), y(3, n);
  long k = 0;
  for (size_t f = 0; f < gt.poses.size(); ++f) {
    for (const auto p : rays) {
      const double dg = gt.depths[f](p);
      if (!(dg > 0.0)) continue;
      const Vec3 r = cam.node_ray(p);
      x.col(k) = pred.poses[f].apply(pred.depths[f](p) * r);
      y.col(k) = gt.poses[f].apply(dg * r);
      ++k;
    }
  }
  return {x, y};
}

}  // namespace detail

// Distances between corresponding backprojected points, the prediction
// mapped through sim, reduced to L1 mean and RMSE over all points.
inline ErrorPair pcl_errors(const Reconstruction& pred, const Reconstruction& gt, const DepthCamera& cam,
                            const SimilarityTransform& sim, int stride = 8) {
  const auto [x, y] = detail::corresponding_clouds(pred, gt, cam, stride);
  if (x.cols() == 0) throw DomainError("pcl_errors: empty point cloud");
  const Eigen::VectorXd dist =
      (((sim.scale * (sim.rotation * x)).colwise() + sim.translation) - y).colwise().norm().transpose();
  const double n = static_cast<double>(dist.size());
  return {dist.sum() / n, std::sqrt(dist.squaredNorm() / n)};
}

// Similarity that best maps the predicted point cloud onto the ground truth.
inline SimilarityTransform align_reconstructions(const Reconstruction& pred, const Reconstruction& gt,
                                                 const DepthCamera& cam, int stride = 8) {
  const auto [x, y] = detail::corresponding_clouds(pred, gt, cam, stride);
  return umeyama_similarity(x, y, true);
}

inline MetricsReport evaluate(const Reconstruction& pred, const Reconstruction& gt, const DepthCamera& cam,
                              int stride = 8) {
  MetricsReport r;
  r.alignment = align_reconstructions(pred, gt, cam, stride);
  std::tie(r.rotation_error_deg, r.center_error_m) = camera_errors(pred.poses, gt.poses, r.alignment);
  const ErrorPair depth = depth_errors(pred.depths, gt.depths, r.alignment.scale);
  const ErrorPair pcl = pcl_errors(pred, gt, cam, r.alignment, stride);
  r.depth_l1 = depth.l1;
  r.depth_rmse = depth.rmse;
  r.pcl_l1 = pcl.l1;
  r.pcl_rmse = pcl.rmse;
  r.frames = static_cast<int>(pred.poses.size());
  r.aligned_points = detail::corresponding_clouds(pred, gt, cam, stride).first.cols();
  return r;
}

}  // namespace ridgesfm
