#pragma once

// Ground-truth scenes for testing every stage without a depth network.
//
// The world is an axis-aligned room (y points down, the floor is at +y) with
// box-shaped clutter standing on the floor. Depth renders in closed form by
// ray/box intersection. Each frame gets a depth basis whose factor planes
// span the perturbation applied to its mean plane, so a known code maps the
// basis back onto the rendered depth.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "ridgesfm/bundle_adjust.hpp"
#include "ridgesfm/depth_basis.hpp"
#include "ridgesfm/errors.hpp"
#include "ridgesfm/geometry.hpp"
#include "ridgesfm/match_verify.hpp"
#include "ridgesfm/pairwise_align.hpp"

namespace ridgesfm {

struct SceneSpec {
  int frames = 20;
  std::uint64_t seed = 1;

  int frame_width = 320;
  int frame_height = 240;
  double focal = 289.0;
  int basis_width = 80;
  int basis_height = 60;
  int K = 8;

  Vec3 room_half_extent{3.0, 1.5, 3.0};
  int clutter_boxes = 4;

  // Random-walk limits between consecutive frames.
  double max_step_rotation_deg = 3.0;
  double max_step_translation = 0.05;

  int keypoints_per_frame = 300;
  int descriptor_dim = 32;

  double pixel_noise = 0.0;       // keypoint position sigma, pixels
  double code_sigma = 0.05;       // in-span perturbation RMS as a fraction of mean depth
  double depth_noise = 0.0;       // out-of-span perturbation sigma of mu, meters
  double descriptor_noise = 0.05;
  double outlier_rate = 0.0;
  double outlier_min_separation = 0.6;  // meters between the two points of a planted outlier

  int retry_limit = 50;

  Intrinsics intrinsics() const {
    return {focal, focal, frame_width / 2.0, frame_height / 2.0, frame_width, frame_height};
  }

  void validate() const {
    if (frames < 1 || K < 1 || keypoints_per_frame < 1 || descriptor_dim < 1 || basis_width < 2 ||
        basis_height < 2 || frame_width < 1 || frame_height < 1 || clutter_boxes < 0)
      throw DomainError("scene spec: counts must be positive");
    if (outlier_rate < 0.0 || outlier_rate > 1.0) throw DomainError("scene spec: outlier rate outside [0, 1]");
    if (pixel_noise < 0 || code_sigma < 0 || depth_noise < 0 || descriptor_noise < 0)
      throw DomainError("scene spec: noise levels must be nonnegative");
  }
};

struct AxisBox {
  Vec3 lo;
  Vec3 hi;
};

struct RoomGeometry {
  AxisBox room;
  std::vector<AxisBox> clutter;
};

struct RayHit {
  double t = std::numeric_limits<double>::infinity();
  int surface = -1;
};

struct GroundTruth {
  SceneSpec spec;
  Intrinsics intrinsics;
  RoomGeometry geometry;
  std::vector<RigidPose> poses;
  std::vector<DepthBasis> bases;
  std::vector<DepthCode> codes;
  std::vector<DepthMap> depths;  // basis resolution

  std::vector<Vec3> landmarks;
  std::vector<int> landmark_surface;
  std::vector<KeypointSet> keypoints;
  std::vector<std::vector<int>> keypoint_landmark;  // per frame, landmark id of each keypoint
};

// Casts origin + t * dir against the room interior and the clutter boxes.
inline RayHit cast_ray(const RoomGeometry& g, const Vec3& origin, const Vec3& dir) {
  RayHit hit;
  for (int a = 0; a < 3; ++a) {
    if (dir(a) == 0.0) continue;
    const bool up = dir(a) > 0.0;
    const double t = ((up ? g.room.hi(a) : g.room.lo(a)) - origin(a)) / dir(a);
    if (t > 0.0 && t < hit.t) hit = {t, 2 * a + (up ? 1 : 0)};
  }
  for (size_t b = 0; b < g.clutter.size(); ++b) {
    const AxisBox& box = g.clutter[b];
    double t_near = -std::numeric_limits<double>::infinity();
    double t_far = std::numeric_limits<double>::infinity();
    int face = -1;
    bool miss = false;
    for (int a = 0; a < 3 && !miss; ++a) {
      if (dir(a) == 0.0) {
        if (origin(a) < box.lo(a) || origin(a) > box.hi(a)) miss = true;
        continue;
      }
      double t0 = (box.lo(a) - origin(a)) / dir(a);
      double t1 = (box.hi(a) - origin(a)) / dir(a);
      int f0 = 2 * a;
      if (t0 > t1) {
        std::swap(t0, t1);
        f0 = 2 * a + 1;
      }
      if (t0 > t_near) {
        t_near = t0;
        face = f0;
      }
      t_far = std::min(t_far, t1);
    }
    if (!miss && t_near <= t_far && t_near > 0.0 && t_near < hit.t)
      hit = {t_near, 6 + 6 * static_cast<int>(b) + face};
  }
  return hit;
}

namespace detail {

inline Mat3 camera_rotation(double yaw, double pitch, double roll) {
  return rotation_y(yaw) * rotation_x(pitch) * rotation_z(roll);
}

inline RoomGeometry make_room(const SceneSpec& spec, std::mt19937_64& rng) {
  RoomGeometry g;
  g.room = {-spec.room_half_extent, spec.room_half_extent};
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Vec3& h = spec.room_half_extent;
  for (int b = 0; b < spec.clutter_boxes; ++b) {
    // Boxes stand on the floor along the walls, outside the camera region.
    const double sx = 0.3 + 0.5 * unit(rng);
    const double sz = 0.3 + 0.5 * unit(rng);
    const double sy = 0.4 + 0.8 * unit(rng);
    const int wall = b % 4;
    const double along = (2.0 * unit(rng) - 1.0) * 0.6;
    Vec3 c;
    switch (wall) {
      case 0: c = {h.x() - sx / 2 - 0.05, 0, along * h.z()}; break;
      case 1: c = {-h.x() + sx / 2 + 0.05, 0, along * h.z()}; break;
      case 2: c = {along * h.x(), 0, h.z() - sz / 2 - 0.05}; break;
      default: c = {along * h.x(), 0, -h.z() + sz / 2 + 0.05}; break;
    }
    AxisBox box;
    box.lo = {c.x() - sx / 2, h.y() - sy, c.z() - sz / 2};
    box.hi = {c.x() + sx / 2, h.y(), c.z() + sz / 2};
    g.clutter.push_back(box);
  }
  return g;
}

inline bool camera_allowed(const SceneSpec& spec, const Vec3& p) {
  const Vec3& h = spec.room_half_extent;
  return std::abs(p.x()) <= h.x() - 1.2 && std::abs(p.z()) <= h.z() - 1.2 && std::abs(p.y()) <= 0.6;
}

inline std::vector<RigidPose> random_walk(const SceneSpec& spec, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double max_rot = spec.max_step_rotation_deg * std::numbers::pi / 180.0;
  for (int attempt = 0; attempt < spec.retry_limit; ++attempt) {
    std::vector<RigidPose> poses;
    double yaw = std::uniform_real_distribution<double>(-std::numbers::pi, std::numbers::pi)(rng);
    double pitch = 0.0, roll = 0.0;
    Vec3 pos = Vec3::Zero();
    Vec3 vel = Vec3::Zero();
    double yaw_rate = 0.0;
    bool ok = true;
    for (int f = 0; f < spec.frames && ok; ++f) {
      if (f > 0) {
        yaw_rate = 0.7 * yaw_rate + 0.5 * max_rot * normal(rng);
        yaw_rate = std::clamp(yaw_rate, -max_rot, max_rot);
        const double new_pitch = std::clamp(0.9 * pitch + 0.1 * max_rot * normal(rng), -0.3, 0.3);
        const double new_roll = std::clamp(0.9 * roll + 0.05 * max_rot * normal(rng), -0.1, 0.1);
        Mat3 prev = camera_rotation(yaw, pitch, roll);
        double ny = yaw + yaw_rate, np = new_pitch, nr = new_roll;
        // Scale the step down until it respects the rotation limit.
        for (int s = 0; s < 30 && rotation_angle_deg(prev, camera_rotation(ny, np, nr)) > spec.max_step_rotation_deg; ++s) {
          ny = yaw + 0.5 * (ny - yaw);
          np = pitch + 0.5 * (np - pitch);
          nr = roll + 0.5 * (nr - roll);
        }
        yaw = ny;
        pitch = np;
        roll = nr;

        Vec3 noise(normal(rng), 0.3 * normal(rng), normal(rng));
        vel = 0.8 * vel + 0.3 * spec.max_step_translation * noise - 0.02 * pos;
        if (vel.norm() > spec.max_step_translation) vel *= spec.max_step_translation / vel.norm();
        pos += vel;
        ok = camera_allowed(spec, pos);
      }
      poses.push_back({camera_rotation(yaw, pitch, roll), pos});
    }
    if (ok) return poses;
  }
  throw DomainError("generate_scene: camera trajectory left the room after retry limit");
}

// Smooth random plane with zero mean and unit sample variance.
inline Eigen::VectorXd smooth_plane(int h, int w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(h) * w);
  for (int mode = 0; mode < 8; ++mode) {
    const double fx = 3.0 * unit(rng), fy = 3.0 * unit(rng);
    const double phase = 2.0 * std::numbers::pi * unit(rng);
    const double amp = 0.5 + unit(rng);
    for (int r = 0; r < h; ++r)
      for (int c = 0; c < w; ++c)
        p(r * w + c) += amp * std::cos(2.0 * std::numbers::pi * (fx * c / w + fy * r / h) + phase);
  }
  p.array() -= p.mean();
  const double var = p.squaredNorm() / static_cast<double>(p.size() - 1);
  return p / std::sqrt(var);
}

}  // namespace detail

// Renders the z-depth of every basis node of a camera.
inline std::pair<DepthMap, std::vector<int>> render_depth(const RoomGeometry& g, const RigidPose& pose,
                                                          const Intrinsics& k, const DepthBasis& layout) {
  DepthMap d(layout.pixel_count());
  std::vector<int> surface(static_cast<size_t>(layout.pixel_count()));
  for (int r = 0; r < layout.basis_height; ++r) {
    for (int c = 0; c < layout.basis_width; ++c) {
      const Pixel p = layout.node_pixel(r, c);
      const RayHit hit = cast_ray(g, pose.translation, pose.rotation * k.ray(p.u, p.v));
      d(r * layout.basis_width + c) = hit.t;  // ray has unit z, so t is the depth
      surface[static_cast<size_t>(r * layout.basis_width + c)] = hit.surface;
    }
  }
  return {d, surface};
}

namespace detail {

// Smallest node-depth change that makes the bilinear interpolant hit each
// target depth exactly at its pixel (minimum-norm solution of B d = r).
inline void pin_depths_at(const DepthBasis& layout, std::span<const Pixel> pixels, std::span<const double> targets,
                          DepthMap& nodes) {
  const auto n = static_cast<Eigen::Index>(pixels.size());
  if (n == 0) return;
  std::vector<BilinearTaps> taps;
  std::map<int, std::vector<std::pair<Eigen::Index, double>>> by_node;
  for (Eigen::Index k = 0; k < n; ++k) {
    taps.push_back(bilinear_taps(layout, pixels[static_cast<size_t>(k)]));
    for (int t = 0; t < 4; ++t) by_node[taps.back().index[t]].emplace_back(k, taps.back().weight[t]);
  }
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(n, n);
  for (const auto& [node, entries] : by_node)
    for (const auto& [a, wa] : entries)
      for (const auto& [b, wb] : entries) gram(a, b) += wa * wb;
  gram.diagonal().array() += 1e-14;
  const Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
  for (int pass = 0; pass < 3; ++pass) {
    Eigen::VectorXd r(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      double d = 0.0;
      for (int t = 0; t < 4; ++t) d += taps[static_cast<size_t>(k)].weight[t] * nodes(taps[static_cast<size_t>(k)].index[t]);
      r(k) = targets[static_cast<size_t>(k)] - d;
    }
    const Eigen::VectorXd y = ldlt.solve(r);
    for (Eigen::Index k = 0; k < n; ++k)
      for (int t = 0; t < 4; ++t) nodes(taps[static_cast<size_t>(k)].index[t]) += taps[static_cast<size_t>(k)].weight[t] * y(k);
  }
}

}  // namespace detail

// Scene generation. Besides the rendering, the node depths of every frame get
// a millimetre-scale correction so that interpolated depth at each keypoint
// reproduces the landmark depth exactly; with zero noise every true match
// therefore aligns exactly under the ground-truth parameters.
inline GroundTruth generate_scene(const SceneSpec& spec) {
  spec.validate();
  GroundTruth gt;
  gt.spec = spec;
  gt.intrinsics = spec.intrinsics();
  gt.intrinsics.validate();
  std::mt19937_64 rng(spec.seed);
  gt.geometry = detail::make_room(spec, rng);
  gt.poses = detail::random_walk(spec, rng);

  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  DepthBasis layout;
  layout.basis_height = spec.basis_height;
  layout.basis_width = spec.basis_width;
  layout.frame_height = spec.frame_height;
  layout.frame_width = spec.frame_width;

  std::vector<DepthMap> rendered;
  std::vector<std::vector<int>> node_surface;
  for (int f = 0; f < spec.frames; ++f) {
    auto [d, surface] = render_depth(gt.geometry, gt.poses[static_cast<size_t>(f)], gt.intrinsics, layout);
    rendered.push_back(std::move(d));
    node_surface.push_back(std::move(surface));
  }

  // Landmarks: surface points seen through random pixels of every frame.
  for (int f = 0; f < spec.frames; ++f) {
    const RigidPose& pose = gt.poses[static_cast<size_t>(f)];
    for (int n = 0; n < spec.keypoints_per_frame; ++n) {
      const double u = unit(rng) * spec.frame_width;
      const double v = unit(rng) * spec.frame_height;
      const Vec3 dir = pose.rotation * gt.intrinsics.ray(u, v);
      const RayHit hit = cast_ray(gt.geometry, pose.translation, dir);
      if (!std::isfinite(hit.t)) continue;
      gt.landmarks.push_back(pose.translation + hit.t * dir);
      gt.landmark_surface.push_back(hit.surface);
    }
  }
  const auto n_landmarks = static_cast<Eigen::Index>(gt.landmarks.size());
  std::vector<double> priority(static_cast<size_t>(n_landmarks));
  for (auto& p : priority) p = unit(rng);
  Eigen::MatrixXf landmark_desc(n_landmarks, spec.descriptor_dim);
  for (Eigen::Index l = 0; l < n_landmarks; ++l) {
    for (int d = 0; d < spec.descriptor_dim; ++d) landmark_desc(l, d) = static_cast<float>(normal(rng));
    landmark_desc.row(l).normalize();
  }

  // Keypoints: the highest-priority landmarks each frame sees cleanly, i.e.
  // unoccluded and with all four bilinear taps on the landmark's surface.
  for (int f = 0; f < spec.frames; ++f) {
    const RigidPose& pose = gt.poses[static_cast<size_t>(f)];
    const RigidPose inv = pose.inverse();
    const auto& surface = node_surface[static_cast<size_t>(f)];
    std::vector<std::pair<double, int>> visible;
    for (Eigen::Index l = 0; l < n_landmarks; ++l) {
      const Vec3 xc = inv.apply(gt.landmarks[static_cast<size_t>(l)]);
      if (xc.z() < 0.1) continue;
      const Pixel p = project(xc, gt.intrinsics);
      if (!p.inside(spec.frame_width, spec.frame_height)) continue;
      const Eigen::Vector2d g = layout.grid_coords(p);
      if (g.x() < 0.0 || g.y() < 0.0 || g.x() > layout.basis_width - 1.0 || g.y() > layout.basis_height - 1.0) continue;
      const RayHit hit = cast_ray(gt.geometry, pose.translation, pose.rotation * gt.intrinsics.ray(p.u, p.v));
      if (!(std::abs(hit.t - xc.z()) <= 1e-6 * xc.z())) continue;
      const BilinearTaps taps = bilinear_taps(layout, p);
      bool same = true;
      for (int t : taps.index) same = same && surface[static_cast<size_t>(t)] == gt.landmark_surface[static_cast<size_t>(l)];
      if (!same) continue;
      visible.emplace_back(-priority[static_cast<size_t>(l)], static_cast<int>(l));
    }
    std::sort(visible.begin(), visible.end());
    if (static_cast<int>(visible.size()) > spec.keypoints_per_frame) visible.resize(static_cast<size_t>(spec.keypoints_per_frame));
    std::sort(visible.begin(), visible.end(), [](const auto& a, const auto& b) { return a.second < b.second; });

    KeypointSet kp;
    std::vector<int> ids;
    std::vector<Pixel> exact;
    std::vector<double> depth;
    kp.descriptors.resize(static_cast<Eigen::Index>(visible.size()), spec.descriptor_dim);
    for (size_t n = 0; n < visible.size(); ++n) {
      const int l = visible[n].second;
      const Vec3 xc = inv.apply(gt.landmarks[static_cast<size_t>(l)]);
      Pixel p = project(xc, gt.intrinsics);
      exact.push_back(p);
      depth.push_back(xc.z());
      if (spec.pixel_noise > 0.0) {
        p.u = std::clamp(p.u + spec.pixel_noise * normal(rng), 0.0, std::nextafter(spec.frame_width, 0.0));
        p.v = std::clamp(p.v + spec.pixel_noise * normal(rng), 0.0, std::nextafter(spec.frame_height, 0.0));
      }
      kp.pixels.push_back(p);
      Eigen::RowVectorXf desc = landmark_desc.row(l);
      if (spec.descriptor_noise > 0.0)
        for (int d = 0; d < spec.descriptor_dim; ++d) desc(d) += static_cast<float>(spec.descriptor_noise * normal(rng));
      kp.descriptors.row(static_cast<Eigen::Index>(n)) = desc.normalized();
      ids.push_back(l);
    }
    detail::pin_depths_at(layout, exact, depth, rendered[static_cast<size_t>(f)]);
    gt.keypoints.push_back(std::move(kp));
    gt.keypoint_landmark.push_back(std::move(ids));
  }

  for (int f = 0; f < spec.frames; ++f) {
    const DepthMap& truth = rendered[static_cast<size_t>(f)];
    DepthBasis basis = layout;
    basis.sigma.resize(basis.pixel_count(), spec.K);
    for (int k = 0; k < spec.K; ++k) basis.sigma.col(k) = detail::smooth_plane(spec.basis_height, spec.basis_width, rng);
    DepthCode code(spec.K);
    const double code_scale = spec.code_sigma * truth.mean() / std::sqrt(static_cast<double>(spec.K));
    for (int k = 0; k < spec.K; ++k) code(k) = code_scale * normal(rng);
    Eigen::VectorXd noise = Eigen::VectorXd::Zero(basis.pixel_count());
    if (spec.depth_noise > 0.0)
      for (Eigen::Index p = 0; p < noise.size(); ++p) noise(p) = spec.depth_noise * normal(rng);
    // Halve the planted code until the mean plane stays in front of the camera.
    for (int s = 0; s < 40; ++s) {
      basis.mu = truth - basis.sigma * code + noise;
      if ((basis.mu.array() > 0.05).all()) break;
      code *= 0.5;
    }
    basis.validate();
    gt.depths.push_back(spec.depth_noise > 0.0 ? truth : evaluate_dense(basis, code));
    gt.bases.push_back(std::move(basis));
    gt.codes.push_back(std::move(code));
  }
  return gt;
}

struct RenderedMatches {
  KeypointSet keypoints_i;
  KeypointSet keypoints_j;
  MatchSet matches;
  std::vector<std::uint8_t> outlier;  // 1 for planted outliers
};

// True correspondences between two frames (shared landmarks) plus planted
// outliers so that exactly ceil(rate * M) of the M matches are outliers.
inline RenderedMatches render_matches(const GroundTruth& gt, int i, int j, double outlier_rate, std::uint64_t seed) {
  if (outlier_rate < 0.0 || outlier_rate >= 1.0) throw DomainError("render_matches: outlier rate must be in [0, 1)");
  RenderedMatches out;
  out.keypoints_i = gt.keypoints[static_cast<size_t>(i)];
  out.keypoints_j = gt.keypoints[static_cast<size_t>(j)];
  out.matches.frame_i = i;
  out.matches.frame_j = j;
  const auto& ids_i = gt.keypoint_landmark[static_cast<size_t>(i)];
  const auto& ids_j = gt.keypoint_landmark[static_cast<size_t>(j)];
  // Both id lists are ascending.
  size_t a = 0, b = 0;
  while (a < ids_i.size() && b < ids_j.size()) {
    if (ids_i[a] < ids_j[b]) ++a;
    else if (ids_i[a] > ids_j[b]) ++b;
    else {
      out.matches.pairs.push_back({static_cast<int>(a), static_cast<int>(b)});
      out.outlier.push_back(0);
      ++a;
      ++b;
    }
  }
  const int inliers = static_cast<int>(out.matches.pairs.size());
  if (inliers == 0 || outlier_rate == 0.0) return out;
  int n_out = 0;
  while (n_out < static_cast<int>(std::ceil(outlier_rate * (inliers + n_out) - 1e-9))) ++n_out;

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> pick_i(0, static_cast<int>(ids_i.size()) - 1);
  std::uniform_int_distribution<int> pick_j(0, static_cast<int>(ids_j.size()) - 1);
  std::set<Match> used(out.matches.pairs.begin(), out.matches.pairs.end());
  for (int k = 0, tries = 0; k < n_out && tries < 1000 * n_out; ++tries) {
    const Match m{pick_i(rng), pick_j(rng)};
    const Vec3& pa = gt.landmarks[static_cast<size_t>(ids_i[static_cast<size_t>(m.i)])];
    const Vec3& pb = gt.landmarks[static_cast<size_t>(ids_j[static_cast<size_t>(m.j)])];
    if (used.contains(m) || (pa - pb).norm() < gt.spec.outlier_min_separation) continue;
    used.insert(m);
    out.matches.pairs.push_back(m);
    out.outlier.push_back(1);
    ++k;
  }
  // Interleave outliers with inliers deterministically.
  std::vector<size_t> perm(out.matches.pairs.size());
  std::iota(perm.begin(), perm.end(), size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  MatchSet shuffled = out.matches;
  std::vector<std::uint8_t> labels(perm.size());
  for (size_t k = 0; k < perm.size(); ++k) {
    shuffled.pairs[k] = out.matches.pairs[perm[k]];
    labels[k] = out.outlier[perm[k]];
  }
  out.matches = std::move(shuffled);
  out.outlier = std::move(labels);
  return out;
}

inline PairObservations observations_for(const GroundTruth& gt, const RenderedMatches& rm) {
  const int i = rm.matches.frame_i, j = rm.matches.frame_j;
  return make_pair_observations(rm.matches, rm.keypoints_i, rm.keypoints_j, gt.bases[static_cast<size_t>(i)],
                                gt.bases[static_cast<size_t>(j)], gt.intrinsics, gt.intrinsics);
}

inline RigidPose true_relative_pose(const GroundTruth& gt, int i, int j) {
  return relative_pose(gt.poses[static_cast<size_t>(i)], gt.poses[static_cast<size_t>(j)]);
}

inline Mat3 random_small_rotation(double sigma_rad, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, sigma_rad / std::sqrt(3.0));
  const Vec3 w(normal(rng), normal(rng), normal(rng));
  const double angle = w.norm();
  if (angle == 0.0) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, w / angle).toRotationMatrix();
}

// Constraints for the given pairs: every match of render_matches (planted
// outliers included) and the true relative pose perturbed by a random rotation
// of RMS angle rotation_sigma_deg and translation of RMS length translation_sigma.
inline std::vector<PairConstraint> perturb_relative_poses(const GroundTruth& gt,
                                                          std::span<const std::pair<int, int>> pairs,
                                                          double rotation_sigma_deg, double translation_sigma,
                                                          std::uint64_t seed, double outlier_rate = 0.0,
                                                          int min_matches = 1) {
  if (rotation_sigma_deg < 0.0 || translation_sigma < 0.0) throw DomainError("perturb_relative_poses: negative sigma");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, translation_sigma / std::sqrt(3.0));
  std::vector<PairConstraint> out;
  for (const auto& [i, j] : pairs) {
    const RenderedMatches rm = render_matches(gt, i, j, outlier_rate, detail::splitmix64(seed ^ (static_cast<std::uint64_t>(i) << 32 | static_cast<std::uint64_t>(j))));
    const Mat3 dr = random_small_rotation(rotation_sigma_deg * std::numbers::pi / 180.0, rng);
    const Vec3 dt(normal(rng), normal(rng), normal(rng));
    if (static_cast<int>(rm.matches.size()) < min_matches) continue;
    const PairObservations obs = observations_for(gt, rm);
    PairAlignment all;
    all.relative_pose = true_relative_pose(gt, i, j);
    all.relative_pose.rotation = all.relative_pose.rotation * dr;
    all.relative_pose.translation += dt;
    all.inlier_indices = detail::all_indices(obs.size());
    PairConstraint c = constraint_from_alignment(obs, all);
    c.outlier_labels = rm.outlier;
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace ridgesfm
