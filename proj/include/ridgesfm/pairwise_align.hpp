#pragma once

// Pairwise alignment of two frames from matched keypoints.
//
// Minimizes
//   L_pw = sum_m l_m + lambda (|beta_i|^2 + |beta_j|^2),
//   l_m  = |R x_i^m(beta_i) + T - x_j^m(beta_j)|^2,
// by coordinate descent (rigid Umeyama step, joint ridge step), wrapped in a
// progressive-growing RANSAC whose runs are ranked by keypoint coverage.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <utility>
#include <vector>

#include "ridgesfm/depth_basis.hpp"
#include "ridgesfm/errors.hpp"
#include "ridgesfm/geometry.hpp"
#include "ridgesfm/match_verify.hpp"
#include "ridgesfm/parallel.hpp"
#include "ridgesfm/umeyama.hpp"

namespace ridgesfm {

enum class AlignStatus {
  kOk,
  kNonPositiveDepth,
  kDegenerate,
  kTooFewMatches,
  kAllRunsFailed,
  kLowCoverage,
};

inline const char* to_string(AlignStatus s) {
  switch (s) {
    case AlignStatus::kOk: return "ok";
    case AlignStatus::kNonPositiveDepth: return "non-positive depth";
    case AlignStatus::kDegenerate: return "degenerate sample";
    case AlignStatus::kTooFewMatches: return "too few matches";
    case AlignStatus::kAllRunsFailed: return "all runs failed";
    case AlignStatus::kLowCoverage: return "low coverage";
  }
  return "unknown";
}

struct RansacConfig {
  std::uint64_t seed = 0;
  int initial_size = 3;
  double growth = 1.2;
  double epsilon = 0.10;  // meters; a match stays valid while l_m <= epsilon^2
  int runs = 32;
  double lambda = 0.05;
  int coverage_cell = 10;
  int min_covered_cells = 30;
  int grow_iters = 3;      // coordinate-descent iterations per growth step
  int final_iters = 50;    // iterations for the final fit of a run
  double tolerance = 1e-8;
  int threads = 1;

  void validate() const {
    if (!(growth > 1.0)) throw DomainError("ransac: growth must exceed 1");
    if (!(epsilon > 0.0)) throw DomainError("ransac: epsilon must be positive");
    if (initial_size < 3) throw DomainError("ransac: initial size must be at least 3");
    if (runs < 1) throw DomainError("ransac: need at least one run");
    if (!(lambda > 0.0)) throw DomainError("ransac: lambda must be positive");
  }
};

struct PairAlignment {
  RigidPose relative_pose;  // x_j = R x_i + T
  DepthCode code_i;
  DepthCode code_j;
  MatchSet inliers;
  std::vector<int> inlier_indices;  // positions in the input match list
  std::vector<double> errors;       // l_m per inlier, meters^2
  std::vector<double> objective_trace;
  int coverage_score = 0;
  int iterations = 0;
  bool success = false;
  AlignStatus status = AlignStatus::kAllRunsFailed;
};

// Everything the alignment needs about one candidate match list.
struct PairObservations {
  MatchSet matches;
  Points3 rays_i;  // K_i^-1 [u v 1]^T per match
  Points3 rays_j;
  SampledBasis basis_i;
  SampledBasis basis_j;
  std::vector<Pixel> pixels_i;
  std::vector<Pixel> pixels_j;

  int size() const { return static_cast<int>(matches.pairs.size()); }
};

inline PairObservations make_pair_observations(const MatchSet& matches, const KeypointSet& kp_i,
                                               const KeypointSet& kp_j, const DepthBasis& basis_i,
                                               const DepthBasis& basis_j, const Intrinsics& k_i,
                                               const Intrinsics& k_j) {
  PairObservations obs;
  obs.matches = matches;
  const auto m = static_cast<Eigen::Index>(matches.pairs.size());
  obs.rays_i.resize(3, m);
  obs.rays_j.resize(3, m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const auto& p = matches.pairs[static_cast<size_t>(k)];
    if (p.i < 0 || p.i >= kp_i.size() || p.j < 0 || p.j >= kp_j.size())
      throw DomainError("pairwise: match index out of range");
    const Pixel& a = kp_i.pixels[static_cast<size_t>(p.i)];
    const Pixel& b = kp_j.pixels[static_cast<size_t>(p.j)];
    obs.pixels_i.push_back(a);
    obs.pixels_j.push_back(b);
    obs.rays_i.col(k) = k_i.ray(a.u, a.v);
    obs.rays_j.col(k) = k_j.ray(b.u, b.v);
  }
  obs.basis_i = sample_at(basis_i, obs.pixels_i);
  obs.basis_j = sample_at(basis_j, obs.pixels_j);
  return obs;
}

namespace detail {

inline std::vector<int> all_indices(int n) {
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  return idx;
}

inline Points3 camera_points(const Points3& rays, const SampledBasis& basis, const DepthCode& code,
                             std::span<const int> active, bool* nonpositive = nullptr) {
  const Eigen::VectorXd depth = basis.depths(code);
  Points3 x(3, static_cast<Eigen::Index>(active.size()));
  for (Eigen::Index k = 0; k < x.cols(); ++k) {
    const int m = active[static_cast<size_t>(k)];
    const double d = depth(m);
    if (nonpositive && !(d > 0.0)) *nonpositive = true;
    x.col(k) = rays.col(m) * d;
  }
  return x;
}

}  // namespace detail

// l_m for every match in `active` under the given parameters.
inline std::vector<double> alignment_errors(const PairObservations& obs, const RigidPose& pose,
                                            const DepthCode& code_i, const DepthCode& code_j,
                                            std::span<const int> active) {
  const Eigen::VectorXd di = obs.basis_i.depths(code_i);
  const Eigen::VectorXd dj = obs.basis_j.depths(code_j);
  std::vector<double> err(active.size());
  for (size_t k = 0; k < active.size(); ++k) {
    const int m = active[k];
    const Vec3 xi = obs.rays_i.col(m) * di(m);
    const Vec3 xj = obs.rays_j.col(m) * dj(m);
    err[k] = (pose.apply(xi) - xj).squaredNorm();
  }
  return err;
}

inline double pairwise_objective(const PairObservations& obs, const RigidPose& pose,
                                 const DepthCode& code_i, const DepthCode& code_j, double lambda,
                                 std::span<const int> active) {
  const auto err = alignment_errors(obs, pose, code_i, code_j, active);
  return std::accumulate(err.begin(), err.end(), 0.0) +
         lambda * (code_i.squaredNorm() + code_j.squaredNorm());
}

// Exact minimizer of L_pw over (beta_i, beta_j) with the pose held fixed. The
// residual is affine in the stacked 2K unknowns, so this is one regularized
// normal-equation solve.
inline std::pair<DepthCode, DepthCode> joint_ridge_update(const RigidPose& pose,
                                                          const SampledBasis& sampled_i,
                                                          const SampledBasis& sampled_j,
                                                          const Points3& rays_i,
                                                          const Points3& rays_j, double lambda,
                                                          std::span<const int> active) {
  if (!(lambda > 0.0)) throw DomainError("joint_ridge_update: lambda must be positive");
  const auto ki = sampled_i.factors.cols();
  const auto kj = sampled_j.factors.cols();
  // Residual of match m is c_m + J_m z with J_m = [p f_i^T, -b f_j^T]; the
  // 3-row blocks J_m are stacked into one matrix.
  const auto n = static_cast<Eigen::Index>(active.size());
  Eigen::MatrixXd jac(3 * n, ki + kj);
  Eigen::VectorXd c(3 * n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const int m = active[static_cast<size_t>(k)];
    const Vec3 p = pose.rotation * rays_i.col(m);
    const Vec3 b = rays_j.col(m);
    c.segment<3>(3 * k) = p * sampled_i.mean(m) + pose.translation - b * sampled_j.mean(m);
    jac.block(3 * k, 0, 3, ki).noalias() = p * sampled_i.factors.row(m);
    jac.block(3 * k, ki, 3, kj).noalias() = -b * sampled_j.factors.row(m);
  }
  Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(ki + kj, ki + kj);
  normal.selfadjointView<Eigen::Lower>().rankUpdate(jac.transpose());
  normal = normal.selfadjointView<Eigen::Lower>();
  normal.diagonal().array() += lambda;
  const Eigen::VectorXd rhs = -jac.transpose() * c;
  const Eigen::VectorXd z = normal.llt().solve(rhs);
  return {z.head(ki), z.tail(kj)};
}

// Pose-independent parts of the joint ridge normal equations for one active
// set. With p = R r_i the cross term p^T r_j equals sum_ab R_ab r_j,a r_i,b, so
// the off-diagonal block is a fixed combination of nine K_i x K_j sums.
class RidgeSystem {
 public:
  RidgeSystem(const SampledBasis& sampled_i, const SampledBasis& sampled_j, const Points3& rays_i,
              const Points3& rays_j, std::span<const int> active)
      : sampled_i_(&sampled_i), sampled_j_(&sampled_j), rays_i_(&rays_i), rays_j_(&rays_j),
        active_(active.begin(), active.end()) {
    const auto ki = sampled_i.factors.cols();
    const auto kj = sampled_j.factors.cols();
    const auto n = static_cast<Eigen::Index>(active_.size());
    fi_.resize(n, ki);
    fj_.resize(n, kj);
    for (Eigen::Index k = 0; k < n; ++k) {
      fi_.row(k) = sampled_i.factors.row(active_[static_cast<size_t>(k)]);
      fj_.row(k) = sampled_j.factors.row(active_[static_cast<size_t>(k)]);
    }
    Eigen::VectorXd wi(n), wj(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      wi(k) = rays_i.col(active_[static_cast<size_t>(k)]).squaredNorm();
      wj(k) = rays_j.col(active_[static_cast<size_t>(k)]).squaredNorm();
    }
    aa_.noalias() = fi_.transpose() * wi.asDiagonal() * fi_;
    bb_.noalias() = fj_.transpose() * wj.asDiagonal() * fj_;
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) {
        Eigen::VectorXd w(n);
        for (Eigen::Index k = 0; k < n; ++k) {
          const int m = active_[static_cast<size_t>(k)];
          w(k) = rays_j(a, m) * rays_i(b, m);
        }
        ab_[static_cast<size_t>(3 * a + b)].noalias() = fi_.transpose() * w.asDiagonal() * fj_;
      }
    }
  }

  std::pair<DepthCode, DepthCode> solve(const RigidPose& pose, double lambda) const {
    if (!(lambda > 0.0)) throw DomainError("joint_ridge_update: lambda must be positive");
    const auto ki = aa_.rows();
    const auto kj = bb_.rows();
    const auto n = static_cast<Eigen::Index>(active_.size());
    Eigen::MatrixXd normal(ki + kj, ki + kj);
    normal.topLeftCorner(ki, ki) = aa_;
    normal.bottomRightCorner(kj, kj) = bb_;
    Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(ki, kj);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) cross -= pose.rotation(a, b) * ab_[static_cast<size_t>(3 * a + b)];
    normal.topRightCorner(ki, kj) = cross;
    normal.bottomLeftCorner(kj, ki) = cross.transpose();
    normal.diagonal().array() += lambda;
    Eigen::VectorXd si(n), sj(n);
    for (Eigen::Index k = 0; k < n; ++k) {
      const int m = active_[static_cast<size_t>(k)];
      const Vec3 p = pose.rotation * rays_i_->col(m);
      const Vec3 b = rays_j_->col(m);
      const Vec3 c = p * sampled_i_->mean(m) + pose.translation - b * sampled_j_->mean(m);
      si(k) = p.dot(c);
      sj(k) = b.dot(c);
    }
    Eigen::VectorXd rhs(ki + kj);
    rhs.head(ki).noalias() = -fi_.transpose() * si;
    rhs.tail(kj).noalias() = fj_.transpose() * sj;
    const Eigen::VectorXd z = normal.llt().solve(rhs);
    return {z.head(ki), z.tail(kj)};
  }

 private:
  const SampledBasis* sampled_i_;
  const SampledBasis* sampled_j_;
  const Points3* rays_i_;
  const Points3* rays_j_;
  std::vector<int> active_;
  Eigen::MatrixXd fi_, fj_, aa_, bb_;
  std::array<Eigen::MatrixXd, 9> ab_;
};

inline std::pair<DepthCode, DepthCode> joint_ridge_update(
    const RigidPose& pose, const SampledBasis& sampled_i, const SampledBasis& sampled_j,
    std::span<const Pixel> pixels_i, std::span<const Pixel> pixels_j, const Intrinsics& k_i,
    const Intrinsics& k_j, double lambda) {
  if (pixels_i.size() != pixels_j.size() ||
      static_cast<Eigen::Index>(pixels_i.size()) != sampled_i.size() ||
      static_cast<Eigen::Index>(pixels_j.size()) != sampled_j.size())
    throw DimensionError("joint_ridge_update: matched sets differ in length");
  const auto m = static_cast<Eigen::Index>(pixels_i.size());
  Points3 ri(3, m), rj(3, m);
  for (Eigen::Index k = 0; k < m; ++k) {
    ri.col(k) = k_i.ray(pixels_i[static_cast<size_t>(k)].u, pixels_i[static_cast<size_t>(k)].v);
    rj.col(k) = k_j.ray(pixels_j[static_cast<size_t>(k)].u, pixels_j[static_cast<size_t>(k)].v);
  }
  const auto idx = detail::all_indices(static_cast<int>(m));
  return joint_ridge_update(pose, sampled_i, sampled_j, ri, rj, lambda, idx);
}

struct DescentOptions {
  double lambda = 0.05;
  int max_iters = 50;
  double tolerance = 1e-8;  // stop on relative objective decrease below this
};

// Alternates the rigid and ridge steps starting from the given codes (zero by
// default). objective_trace holds the objective after every half step.
inline PairAlignment coordinate_descent_align(const PairObservations& obs,
                                              std::span<const int> active,
                                              const DescentOptions& options,
                                              const DepthCode* init_i = nullptr,
                                              const DepthCode* init_j = nullptr) {
  PairAlignment out;
  out.code_i = init_i ? *init_i : DepthCode::Zero(obs.basis_i.factors.cols());
  out.code_j = init_j ? *init_j : DepthCode::Zero(obs.basis_j.factors.cols());
  out.inliers.frame_i = obs.matches.frame_i;
  out.inliers.frame_j = obs.matches.frame_j;
  if (active.size() < 3) {
    out.status = AlignStatus::kTooFewMatches;
    return out;
  }
  const RidgeSystem ridge(obs.basis_i, obs.basis_j, obs.rays_i, obs.rays_j, active);
  double previous = std::numeric_limits<double>::infinity();
  for (int it = 0; it < options.max_iters; ++it) {
    bool nonpositive = false;
    const Points3 xi = detail::camera_points(obs.rays_i, obs.basis_i, out.code_i, active, &nonpositive);
    const Points3 xj = detail::camera_points(obs.rays_j, obs.basis_j, out.code_j, active, &nonpositive);
    if (nonpositive) {
      out.status = AlignStatus::kNonPositiveDepth;
      return out;
    }
    try {
      out.relative_pose = umeyama_rigid(xi, xj);
    } catch (const EstimationError&) {
      out.status = AlignStatus::kDegenerate;
      return out;
    }
    out.objective_trace.push_back(
        pairwise_objective(obs, out.relative_pose, out.code_i, out.code_j, options.lambda, active));

    std::tie(out.code_i, out.code_j) = ridge.solve(out.relative_pose, options.lambda);
    const double current =
        pairwise_objective(obs, out.relative_pose, out.code_i, out.code_j, options.lambda, active);
    out.objective_trace.push_back(current);
    out.iterations = it + 1;
    if (std::isfinite(previous) && previous - current <= options.tolerance * std::max(std::abs(previous), 1e-300)) break;
    previous = current;
  }
  const Eigen::VectorXd di = obs.basis_i.depths(out.code_i);
  const Eigen::VectorXd dj = obs.basis_j.depths(out.code_j);
  for (const int m : active) {
    if (!(di(m) > 0.0) || !(dj(m) > 0.0)) {
      out.status = AlignStatus::kNonPositiveDepth;
      return out;
    }
  }
  out.inlier_indices.assign(active.begin(), active.end());
  out.inliers.pairs.clear();
  for (const int m : active) out.inliers.pairs.push_back(obs.matches.pairs[static_cast<size_t>(m)]);
  out.errors = alignment_errors(obs, out.relative_pose, out.code_i, out.code_j, active);
  out.success = true;
  out.status = AlignStatus::kOk;
  return out;
}

// Distinct coverage cells touched by the inlier keypoints of both frames.
inline int coverage_score(const PairObservations& obs, std::span<const int> inliers, int cell) {
  std::set<std::pair<long, long>> ci, cj;
  for (const int m : inliers) {
    const Pixel& a = obs.pixels_i[static_cast<size_t>(m)];
    const Pixel& b = obs.pixels_j[static_cast<size_t>(m)];
    ci.emplace(static_cast<long>(std::floor(a.u / cell)), static_cast<long>(std::floor(a.v / cell)));
    cj.emplace(static_cast<long>(std::floor(b.u / cell)), static_cast<long>(std::floor(b.v / cell)));
  }
  return static_cast<int>(ci.size() + cj.size());
}

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Three points spanning less than a plane leave the rotation undetermined.
inline bool collinear(const Points3& x) {
  const Points3 c = x.colwise() - x.rowwise().mean();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(c);
  const auto& s = svd.singularValues();
  return !(s(1) > 1e-8 * std::max(s(0), 1e-300));
}

}  // namespace detail

// One progressive-growing run: seed a minimal random subset, then alternate
// fitting and re-selecting the ceil(growth * M) lowest-error matches while
// every active match stays within epsilon.
inline PairAlignment ransac_run(const PairObservations& obs, const RansacConfig& cfg, int run) {
  PairAlignment failed;
  failed.inliers.frame_i = obs.matches.frame_i;
  failed.inliers.frame_j = obs.matches.frame_j;
  const int n = obs.size();
  if (n < cfg.initial_size) {
    failed.status = AlignStatus::kTooFewMatches;
    return failed;
  }
  std::mt19937_64 rng(detail::splitmix64(cfg.seed ^ detail::splitmix64(static_cast<std::uint64_t>(run))));
  std::vector<int> order = detail::all_indices(n);
  for (int k = 0; k < cfg.initial_size; ++k) {
    std::uniform_int_distribution<int> pick(k, n - 1);
    std::swap(order[static_cast<size_t>(k)], order[static_cast<size_t>(pick(rng))]);
  }
  std::vector<int> active(order.begin(), order.begin() + cfg.initial_size);

  const DepthCode zero_i = DepthCode::Zero(obs.basis_i.factors.cols());
  const DepthCode zero_j = DepthCode::Zero(obs.basis_j.factors.cols());
  if (detail::collinear(detail::camera_points(obs.rays_i, obs.basis_i, zero_i, active)) ||
      detail::collinear(detail::camera_points(obs.rays_j, obs.basis_j, zero_j, active))) {
    failed.status = AlignStatus::kDegenerate;
    return failed;
  }

  const double eps_sq = cfg.epsilon * cfg.epsilon;
  const DescentOptions grow_opts{cfg.lambda, cfg.grow_iters, cfg.tolerance};
  const auto all = detail::all_indices(n);
  PairAlignment valid = failed;
  bool have_valid = false;
  DepthCode ci = zero_i, cj = zero_j;
  while (true) {
    PairAlignment fit = coordinate_descent_align(obs, active, grow_opts, &ci, &cj);
    if (!fit.success) {
      if (!have_valid) failed.status = fit.status;
      break;
    }
    if (*std::max_element(fit.errors.begin(), fit.errors.end()) > eps_sq) break;
    valid = std::move(fit);
    have_valid = true;
    ci = valid.code_i;
    cj = valid.code_j;
    if (static_cast<int>(active.size()) == n) break;

    const auto err = alignment_errors(obs, valid.relative_pose, ci, cj, all);
    std::vector<int> ranked = all;
    std::stable_sort(ranked.begin(), ranked.end(),
                     [&](int a, int b) { return err[static_cast<size_t>(a)] < err[static_cast<size_t>(b)]; });
    // Growth is capped at the matches already within epsilon so the final
    // step does not discard up to 1/growth of the consensus set.
    const int within = static_cast<int>(std::count_if(err.begin(), err.end(), [&](double e) { return e <= eps_sq; }));
    const int target = std::min(static_cast<int>(std::ceil(cfg.growth * static_cast<double>(active.size()))), n);
    const int next = std::min(target, within);
    if (next <= static_cast<int>(active.size())) break;
    active.assign(ranked.begin(), ranked.begin() + next);
  }
  if (!have_valid) return failed;

  const DescentOptions final_opts{cfg.lambda, cfg.final_iters, cfg.tolerance};
  PairAlignment refined = coordinate_descent_align(obs, valid.inlier_indices, final_opts, &valid.code_i, &valid.code_j);
  if (refined.success && *std::max_element(refined.errors.begin(), refined.errors.end()) <= eps_sq)
    valid = std::move(refined);
  valid.coverage_score = coverage_score(obs, valid.inlier_indices, cfg.coverage_cell);
  return valid;
}

inline std::vector<PairAlignment> ransac_runs(const PairObservations& obs, const RansacConfig& cfg) {
  cfg.validate();
  std::vector<PairAlignment> runs(static_cast<size_t>(cfg.runs));
  parallel_for(cfg.runs, cfg.threads, [&](int r) { runs[static_cast<size_t>(r)] = ransac_run(obs, cfg, r); });
  return runs;
}

// Picks the successful run with the largest coverage (lowest index on ties);
// fewer than min_covered_cells marks the pair as negative.
inline PairAlignment coverage_select(std::span<const PairAlignment> runs, const RansacConfig& cfg) {
  if (runs.empty()) throw DimensionError("coverage_select: no runs");
  int best = -1;
  for (size_t r = 0; r < runs.size(); ++r) {
    if (!runs[r].success) continue;
    if (best < 0 || runs[r].coverage_score > runs[static_cast<size_t>(best)].coverage_score)
      best = static_cast<int>(r);
  }
  if (best < 0) {
    PairAlignment out = runs.front();
    out.success = false;
    out.status = AlignStatus::kAllRunsFailed;
    return out;
  }
  PairAlignment out = runs[static_cast<size_t>(best)];
  if (out.coverage_score < cfg.min_covered_cells) {
    out.success = false;
    out.status = AlignStatus::kLowCoverage;
  }
  return out;
}

inline PairAlignment ransac_progressive_grow(const PairObservations& obs, const RansacConfig& cfg) {
  if (obs.size() < cfg.initial_size) {
    PairAlignment out;
    out.status = AlignStatus::kTooFewMatches;
    out.inliers.frame_i = obs.matches.frame_i;
    out.inliers.frame_j = obs.matches.frame_j;
    return out;
  }
  const auto runs = ransac_runs(obs, cfg);
  return coverage_select(runs, cfg);
}

}  // namespace ridgesfm
