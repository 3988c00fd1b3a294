#pragma once

// Random instances shared by the unit tests.

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <filesystem>
#include <vector>
#include <numeric>
#include <algorithm>
#include <random>
#include <string>

#include "ridgesfm/depth_basis.hpp"
#include "ridgesfm/geometry.hpp"
#include "ridgesfm/pairwise_align.hpp"

namespace ridgesfm::testing {

inline Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return q.toRotationMatrix();
}

inline Vec3 random_vec3(std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

inline RigidPose random_pose(std::mt19937_64& rng, double translation_scale = 1.0) {
  return {random_rotation(rng), random_vec3(rng, translation_scale)};
}

inline Intrinsics random_intrinsics(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> f(200.0, 800.0), c(0.3, 0.7);
  Intrinsics k;
  k.width = 640;
  k.height = 480;
  k.fx = f(rng);
  k.fy = f(rng);
  k.cx = c(rng) * k.width;
  k.cy = c(rng) * k.height;
  return k;
}

inline DepthBasis random_basis(std::mt19937_64& rng, int h, int w, int k, int frame_h, int frame_w,
                               double mean_depth = 3.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  DepthBasis b;
  b.basis_height = h;
  b.basis_width = w;
  b.frame_height = frame_h;
  b.frame_width = frame_w;
  b.mu.resize(h * w);
  for (Eigen::Index p = 0; p < b.mu.size(); ++p) b.mu(p) = mean_depth + 0.5 * u(rng);
  b.sigma.resize(h * w, k);
  for (Eigen::Index p = 0; p < b.sigma.size(); ++p) b.sigma.data()[p] = 0.1 * u(rng);
  return b;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("ridgesfm_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline const Intrinsics kPlantedCamera{150.0, 150.0, 80.0, 60.0, 160, 120};

struct PlantedPair {
  PairObservations obs;
  RigidPose pose;
  DepthCode code_i, code_j;
  std::vector<bool> outlier;
};

DepthCode random_code(std::mt19937_64& rng, int k, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  DepthCode c(k);
  for (auto& x : c) x = n(rng);
  return c;
}

// Matches whose sampled depths reproduce the planted 3D points exactly under
// (pose, code_i, code_j); outliers pair a random pixel and depth in frame j.
PlantedPair planted_pair(std::mt19937_64& rng, int inliers, int outliers, const RigidPose& pose,
                         const DepthCode& ci, const DepthCode& cj, double factor_scale = 0.1) {
  PlantedPair p;
  p.pose = pose;
  p.code_i = ci;
  p.code_j = cj;
  const int k = static_cast<int>(ci.size());
  const int n = inliers + outliers;
  std::uniform_real_distribution<double> u(0.0, 1.0), z(2.0, 5.0);
  std::normal_distribution<double> g(0.0, factor_scale);
  p.obs.rays_i.resize(3, n);
  p.obs.rays_j.resize(3, n);
  p.obs.basis_i.mean.resize(n);
  p.obs.basis_j.mean.resize(n);
  p.obs.basis_i.factors.resize(n, k);
  p.obs.basis_j.factors.resize(n, k);
  for (int m = 0; m < n; ++m) {
    Pixel a, b;
    double di, dj;
    if (m < inliers) {
      while (true) {
        a = {u(rng) * kPlantedCamera.width, u(rng) * kPlantedCamera.height};
        di = z(rng);
        const Vec3 xj = pose.apply(di * kPlantedCamera.ray(a.u, a.v));
        if (xj.z() < 0.5) continue;
        b = project(xj, kPlantedCamera);
        if (!b.inside(kPlantedCamera.width, kPlantedCamera.height)) continue;
        dj = xj.z();
        break;
      }
    } else {
      a = {u(rng) * kPlantedCamera.width, u(rng) * kPlantedCamera.height};
      b = {u(rng) * kPlantedCamera.width, u(rng) * kPlantedCamera.height};
      di = z(rng);
      dj = z(rng);
    }
    p.obs.pixels_i.push_back(a);
    p.obs.pixels_j.push_back(b);
    p.obs.rays_i.col(m) = kPlantedCamera.ray(a.u, a.v);
    p.obs.rays_j.col(m) = kPlantedCamera.ray(b.u, b.v);
    for (int c = 0; c < k; ++c) {
      p.obs.basis_i.factors(m, c) = g(rng);
      p.obs.basis_j.factors(m, c) = g(rng);
    }
    p.obs.basis_i.mean(m) = di - p.obs.basis_i.factors.row(m).dot(ci);
    p.obs.basis_j.mean(m) = dj - p.obs.basis_j.factors.row(m).dot(cj);
    p.obs.matches.pairs.push_back({m, m});
    p.outlier.push_back(m >= inliers);
  }
  // Interleave inliers and outliers.
  std::vector<int> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  PlantedPair q = p;
  for (int m = 0; m < n; ++m) {
    const int s = perm[static_cast<size_t>(m)];
    q.obs.rays_i.col(m) = p.obs.rays_i.col(s);
    q.obs.rays_j.col(m) = p.obs.rays_j.col(s);
    q.obs.basis_i.mean(m) = p.obs.basis_i.mean(s);
    q.obs.basis_j.mean(m) = p.obs.basis_j.mean(s);
    q.obs.basis_i.factors.row(m) = p.obs.basis_i.factors.row(s);
    q.obs.basis_j.factors.row(m) = p.obs.basis_j.factors.row(s);
    q.obs.pixels_i[static_cast<size_t>(m)] = p.obs.pixels_i[static_cast<size_t>(s)];
    q.obs.pixels_j[static_cast<size_t>(m)] = p.obs.pixels_j[static_cast<size_t>(s)];
    q.outlier[static_cast<size_t>(m)] = p.outlier[static_cast<size_t>(s)];
  }
  return q;
}

RigidPose small_motion(std::mt19937_64& rng) {
  return {tait_bryan_to_rotation(random_vec3(rng, 0.08)), random_vec3(rng, 0.3)};
}

}  // namespace ridgesfm::testing
