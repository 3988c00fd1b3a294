#pragma once

// Scene directories and the end-to-end reconstruction pipeline.
//
// A scene directory holds
//   frames.txt                      frame manifest
//   basis/NNNN.rsfmb                depth basis per frame
//   keypoints/NNNN.txt              keypoints per frame
//   matches/IIII_JJJJ.txt           optional raw matches for a frame pair
//   matches/IIII_JJJJ.labels        optional outlier labels (synthetic scenes)
//   gt/trajectory.txt, gt/codes.txt, gt/depth.rsfmd   ground truth (synthetic scenes)

#include <cstdio>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "ridgesfm/bundle_adjust.hpp"
#include "ridgesfm/evaluation.hpp"
#include "ridgesfm/io.hpp"
#include "ridgesfm/match_verify.hpp"
#include "ridgesfm/pairwise_align.hpp"
#include "ridgesfm/synthetic_scene.hpp"

namespace ridgesfm {

inline std::string frame_stem(int id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d", id);
  return buf;
}

inline std::string pair_stem(int i, int j) { return frame_stem(i) + "_" + frame_stem(j); }

struct Scene {
  fs::path dir;
  std::vector<FrameEntry> frames;
  std::vector<DepthBasis> bases;
  std::vector<KeypointSet> keypoints;

  int size() const { return static_cast<int>(frames.size()); }

  fs::path match_path(int i, int j) const { return dir / "matches" / (pair_stem(frames[static_cast<size_t>(i)].frame_id, frames[static_cast<size_t>(j)].frame_id) + ".txt"); }

  DepthCamera camera() const {
    const DepthBasis& b = bases.front();
    return {frames.front().intrinsics, b.basis_height, b.basis_width};
  }
};

inline Scene load_scene(const fs::path& dir) {
  Scene s;
  s.dir = dir;
  const fs::path manifest = dir / "frames.txt";
  s.frames = decode_manifest(read_file(manifest), manifest.string());
  for (const auto& f : s.frames) {
    DepthBasis b = load_basis(dir / f.basis_path);
    if (b.frame_width != f.intrinsics.width || b.frame_height != f.intrinsics.height)
      throw FormatError(FormatErrorKind::kValidation, (dir / f.basis_path).string() +
                                                          ": basis frame size disagrees with manifest intrinsics");
    if (!s.bases.empty() && (b.basis_height != s.bases.front().basis_height || b.basis_width != s.bases.front().basis_width))
      throw FormatError(FormatErrorKind::kValidation, (dir / f.basis_path).string() + ": basis resolution differs from frame 0");
    s.bases.push_back(std::move(b));
    s.keypoints.push_back(load_keypoints(dir / f.keypoint_path));
  }
  return s;
}

// Writes a synthetic scene: manifest, bases, keypoints, raw matches (with
// labels) for the given pairs, and ground truth.
inline void write_scene(const fs::path& dir, const GroundTruth& gt, std::span<const std::pair<int, int>> pairs,
                        double outlier_rate, std::uint64_t seed) {
  std::vector<FrameEntry> frames;
  for (int f = 0; f < static_cast<int>(gt.poses.size()); ++f) {
    FrameEntry e{f, "basis/" + frame_stem(f) + ".rsfmb", "keypoints/" + frame_stem(f) + ".txt", gt.intrinsics};
    save_basis(dir / e.basis_path, gt.bases[static_cast<size_t>(f)]);
    save_keypoints(dir / e.keypoint_path, gt.keypoints[static_cast<size_t>(f)]);
    frames.push_back(std::move(e));
  }
  write_file(dir / "frames.txt", encode_manifest(frames));
  for (const auto& [i, j] : pairs) {
    const RenderedMatches rm = render_matches(gt, i, j, outlier_rate, detail::splitmix64(seed ^ (static_cast<std::uint64_t>(i) << 32 | static_cast<std::uint64_t>(j))));
    if (rm.matches.size() == 0) continue;
    save_matches(dir / "matches" / (pair_stem(i, j) + ".txt"), rm.matches);
    write_file(dir / "matches" / (pair_stem(i, j) + ".labels"), encode_labels(rm.outlier));
  }
  save_trajectory(dir / "gt" / "trajectory.txt", gt.poses);
  save_codes(dir / "gt" / "codes.txt", gt.codes);
  save_depths(dir / "gt" / "depth.rsfmd", {gt.spec.basis_height, gt.spec.basis_width, gt.depths});
}

struct PipelineConfig {
  int window = 10;       // sliding-window radius for pair proposals
  int random_pairs = 2;  // long-range pairs per frame
  std::uint64_t seed = 0;
  bool verify_matches = true;
  int min_matches = 20;
  MatchConfig matching;
  LmedsConfig lmeds;
  RansacConfig ransac;
  BundleConfig bundle;
};

struct PairReport {
  int frame_i = 0;
  int frame_j = 0;
  int raw_matches = 0;
  int verified_matches = 0;
  int inliers = 0;
  int coverage = 0;
  AlignStatus status = AlignStatus::kTooFewMatches;
  bool accepted = false;
};

struct PipelineResult {
  std::vector<RigidPose> poses;
  std::vector<DepthCode> codes;
  std::vector<DepthMap> depths;
  std::vector<double> warmstart_trace;
  std::vector<double> loss_trace;
  std::vector<PairReport> pairs;
  int constraints = 0;
  bool converged = false;
};

// Matches for one pair: the raw match file when present, else mutual nearest
// neighbours, optionally filtered by LMedS epipolar verification.
inline MatchSet pair_matches(const Scene& scene, int i, int j, const PipelineConfig& cfg, PairReport& report) {
  const auto& ki = scene.keypoints[static_cast<size_t>(i)];
  const auto& kj = scene.keypoints[static_cast<size_t>(j)];
  MatchSet m;
  const fs::path path = scene.match_path(i, j);
  if (fs::exists(path)) m = load_matches(path, ki.size(), kj.size());
  else m = mutual_nn_match(ki, kj, cfg.matching);
  m.frame_i = i;
  m.frame_j = j;
  report.raw_matches = static_cast<int>(m.size());
  if (cfg.verify_matches && m.size() >= 8) {
    const auto verified = lmeds_verify(m, ki, kj, detail::splitmix64(cfg.seed ^ static_cast<std::uint64_t>(i * 1000003 + j)), cfg.lmeds);
    m = verified.matches;
  }
  report.verified_matches = static_cast<int>(m.size());
  return m;
}

inline std::vector<PairConstraint> align_pairs(const Scene& scene, std::span<const std::pair<int, int>> pairs,
                                               const PipelineConfig& cfg, std::vector<PairReport>& reports) {
  std::vector<PairConstraint> out;
  for (const auto& [i, j] : pairs) {
    PairReport rep{i, j};
    const MatchSet m = pair_matches(scene, i, j, cfg, rep);
    if (static_cast<int>(m.size()) >= std::max(cfg.min_matches, cfg.ransac.initial_size)) {
      const PairObservations obs = make_pair_observations(
          m, scene.keypoints[static_cast<size_t>(i)], scene.keypoints[static_cast<size_t>(j)],
          scene.bases[static_cast<size_t>(i)], scene.bases[static_cast<size_t>(j)],
          scene.frames[static_cast<size_t>(i)].intrinsics, scene.frames[static_cast<size_t>(j)].intrinsics);
      RansacConfig rc = cfg.ransac;
      rc.seed = detail::splitmix64(cfg.ransac.seed ^ (static_cast<std::uint64_t>(i) << 32 | static_cast<std::uint64_t>(j)));
      const PairAlignment pa = ransac_progressive_grow(obs, rc);
      rep.inliers = static_cast<int>(pa.inlier_indices.size());
      rep.coverage = pa.coverage_score;
      rep.status = pa.status;
      rep.accepted = pa.success;
      if (pa.success) out.push_back(constraint_from_alignment(obs, pa));
    }
    reports.push_back(rep);
  }
  return out;
}

inline PipelineResult run_bundle_pipeline(const Scene& scene, const PipelineConfig& cfg) {
  if (scene.size() < 1) throw DomainError("pipeline: scene has no frames");
  PipelineResult res;
  const auto pairs = propose_pairs(scene.size(), cfg.window, cfg.random_pairs, cfg.seed);
  std::vector<PairConstraint> constraints = align_pairs(scene, pairs, cfg, res.pairs);
  res.constraints = static_cast<int>(constraints.size());
  std::vector<int> code_sizes;
  for (const auto& b : scene.bases) code_sizes.push_back(b.K());
  BundleProblem problem(scene.size(), std::move(code_sizes), std::move(constraints));
  res.warmstart_trace = warmstart_poses(problem, cfg.bundle).loss_trace;
  if (problem.constraints().empty()) {
    res.loss_trace = {};
    res.converged = true;
  } else {
    const BundleResult br = optimize_bundle(problem, cfg.bundle);
    res.loss_trace = br.loss_trace;
    res.converged = br.converged;
  }
  res.poses = problem.poses();
  for (int f = 0; f < scene.size(); ++f) res.codes.emplace_back(problem.code(f));
  res.depths = dense_depths(problem, scene.bases, cfg.bundle.depth_floor).depths;
  return res;
}

}  // namespace ridgesfm
