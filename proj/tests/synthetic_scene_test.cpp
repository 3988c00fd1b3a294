#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>
#include <span>
#include <vector>

#include "ridgesfm/bundle_adjust.hpp"
#include "ridgesfm/pairwise_align.hpp"
#include "ridgesfm/synthetic_scene.hpp"

namespace ridgesfm {
namespace {

SceneSpec small_spec(int frames, std::uint64_t seed) {
  SceneSpec s;
  s.frames = frames;
  s.seed = seed;
  return s;
}

// World-space squared distance of every match under ground truth, computed
// from keypoint rays and the true codes.
std::vector<double> ground_truth_residuals(const GroundTruth& gt, const RenderedMatches& rm) {
  const int i = rm.matches.frame_i, j = rm.matches.frame_j;
  std::vector<double> out;
  for (const Match& m : rm.matches.pairs) {
    const Pixel pi = rm.keypoints_i.pixels[static_cast<size_t>(m.i)];
    const Pixel pj = rm.keypoints_j.pixels[static_cast<size_t>(m.j)];
    const double di = sample_at(gt.bases[static_cast<size_t>(i)], std::span(&pi, 1)).depth(0, gt.codes[static_cast<size_t>(i)]);
    const double dj = sample_at(gt.bases[static_cast<size_t>(j)], std::span(&pj, 1)).depth(0, gt.codes[static_cast<size_t>(j)]);
    const Vec3 wi = gt.poses[static_cast<size_t>(i)].apply(backproject(pi, di, gt.intrinsics));
    const Vec3 wj = gt.poses[static_cast<size_t>(j)].apply(backproject(pj, dj, gt.intrinsics));
    out.push_back((wi - wj).squaredNorm());
  }
  return out;
}

TEST(GenerateScene, Deterministic) {
  SceneSpec spec = small_spec(6, 42);
  spec.pixel_noise = 0.5;
  spec.depth_noise = 0.02;
  const GroundTruth a = generate_scene(spec), b = generate_scene(spec);
  ASSERT_EQ(a.poses.size(), b.poses.size());
  for (size_t f = 0; f < a.poses.size(); ++f) {
    EXPECT_EQ(a.poses[f].rotation, b.poses[f].rotation);
    EXPECT_EQ(a.poses[f].translation, b.poses[f].translation);
    EXPECT_EQ(a.bases[f].mu, b.bases[f].mu);
    EXPECT_EQ(a.bases[f].sigma, b.bases[f].sigma);
    EXPECT_EQ(a.codes[f], b.codes[f]);
    EXPECT_EQ(a.depths[f], b.depths[f]);
    EXPECT_EQ(a.keypoints[f].descriptors, b.keypoints[f].descriptors);
    ASSERT_EQ(a.keypoints[f].pixels.size(), b.keypoints[f].pixels.size());
    for (size_t n = 0; n < a.keypoints[f].pixels.size(); ++n) {
      EXPECT_EQ(a.keypoints[f].pixels[n].u, b.keypoints[f].pixels[n].u);
      EXPECT_EQ(a.keypoints[f].pixels[n].v, b.keypoints[f].pixels[n].v);
    }
  }
  const RenderedMatches ma = render_matches(a, 0, 2, 0.2, 7), mb = render_matches(b, 0, 2, 0.2, 7);
  EXPECT_EQ(ma.matches.pairs, mb.matches.pairs);
  EXPECT_EQ(ma.outlier, mb.outlier);
}

TEST(GenerateScene, DifferentSeedsDiffer) {
  const GroundTruth a = generate_scene(small_spec(3, 1)), b = generate_scene(small_spec(3, 2));
  EXPECT_NE(a.poses[2].translation, b.poses[2].translation);
}

TEST(GenerateScene, DenseDepthIsBasisEvaluationWithoutDepthNoise) {
  const GroundTruth gt = generate_scene(small_spec(5, 3));
  for (size_t f = 0; f < gt.depths.size(); ++f) {
    EXPECT_EQ(gt.depths[f], evaluate_dense(gt.bases[f], gt.codes[f]));
    EXPECT_GT(gt.depths[f].minCoeff(), 0.0);
  }
}

TEST(GenerateScene, SigmaPlanesHaveUnitVariance) {
  const GroundTruth gt = generate_scene(small_spec(4, 4));
  for (const auto& b : gt.bases) {
    const Eigen::VectorXd var = row_variance(b);
    for (Eigen::Index k = 0; k < var.size(); ++k) EXPECT_NEAR(var(k), 1.0, 1e-6);
  }
}

TEST(GenerateScene, SingleFrameRidgeRecoversDepth) {
  const GroundTruth gt = generate_scene(small_spec(1, 5));
  const DepthCode code = ridge_fit(gt.bases[0], gt.depths[0], 1e-3);
  const DepthMap fit = evaluate_dense(gt.bases[0], code);
  const double rmse = std::sqrt((fit - gt.depths[0]).squaredNorm() / static_cast<double>(fit.size()));
  EXPECT_LT(rmse, 0.01);
  EXPECT_GT((gt.bases[0].mu - gt.depths[0]).cwiseAbs().maxCoeff(), 0.01);
}

TEST(GenerateScene, PosesStayInsideRoomAndOrthonormal) {
  const GroundTruth gt = generate_scene(small_spec(30, 6));
  const Vec3 half = gt.spec.room_half_extent;
  for (const auto& p : gt.poses) {
    EXPECT_TRUE(p.is_orthonormal(1e-9));
    EXPECT_LT(p.translation.cwiseAbs().maxCoeff(), half.maxCoeff());
  }
  for (size_t f = 1; f < gt.poses.size(); ++f) {
    const double step = rotation_angle_deg(gt.poses[f - 1].rotation, gt.poses[f].rotation);
    EXPECT_LE(step, gt.spec.max_step_rotation_deg + 1e-9);
    EXPECT_LE((gt.poses[f].translation - gt.poses[f - 1].translation).norm(), gt.spec.max_step_translation + 1e-12);
  }
}

TEST(GenerateScene, InvalidSpecThrows) {
  SceneSpec s = small_spec(0, 1);
  EXPECT_THROW(generate_scene(s), DomainError);
  s = small_spec(2, 1);
  s.outlier_rate = 1.5;
  EXPECT_THROW(generate_scene(s), DomainError);
  s = small_spec(2, 1);
  s.pixel_noise = -1.0;
  EXPECT_THROW(generate_scene(s), DomainError);
}

TEST(RenderMatches, GroundTruthResidualsVanish) {
  const GroundTruth gt = generate_scene(small_spec(8, 7));
  int checked = 0;
  for (int i = 0; i < 7; ++i) {
    const RenderedMatches rm = render_matches(gt, i, i + 1, 0.0, 1);
    for (double l : ground_truth_residuals(gt, rm)) {
      EXPECT_LT(l, 1e-9);
      ++checked;
    }
  }
  EXPECT_GT(checked, 500);
}

TEST(RenderMatches, IdentityMotionHasZeroAlignmentError) {
  SceneSpec spec = small_spec(2, 8);
  spec.max_step_rotation_deg = 0.0;
  spec.max_step_translation = 0.0;
  const GroundTruth gt = generate_scene(spec);
  EXPECT_EQ(gt.poses[0].rotation, gt.poses[1].rotation);
  EXPECT_EQ(gt.poses[0].translation, gt.poses[1].translation);
  const RenderedMatches rm = render_matches(gt, 0, 1, 0.0, 1);
  ASSERT_GT(rm.matches.size(), 50u);
  const PairObservations obs = observations_for(gt, rm);
  const auto all = detail::all_indices(obs.size());
  for (double l : alignment_errors(obs, RigidPose::identity(), gt.codes[0], gt.codes[1], all)) EXPECT_LT(l, 1e-9);
}

TEST(RenderMatches, OutlierCountIsCeilingOfRate) {
  const GroundTruth gt = generate_scene(small_spec(5, 9));
  for (const double rate : {0.1, 0.3, 0.5}) {
    for (int j = 1; j < 5; ++j) {
      const RenderedMatches rm = render_matches(gt, 0, j, rate, static_cast<std::uint64_t>(j));
      const auto m = static_cast<double>(rm.matches.size());
      int outliers = 0;
      for (auto o : rm.outlier) outliers += o;
      ASSERT_EQ(rm.outlier.size(), rm.matches.size());
      EXPECT_EQ(outliers, static_cast<int>(std::ceil(rate * m - 1e-9)));
    }
  }
}

TEST(RenderMatches, PlantedOutliersAreFarApart) {
  const GroundTruth gt = generate_scene(small_spec(3, 10));
  const RenderedMatches rm = render_matches(gt, 0, 1, 0.3, 5);
  const auto res = ground_truth_residuals(gt, rm);
  for (size_t n = 0; n < res.size(); ++n) {
    if (rm.outlier[n]) {
      EXPECT_GT(std::sqrt(res[n]), 0.5);
    } else {
      EXPECT_LT(res[n], 1e-9);
    }
  }
}

TEST(RenderMatches, NonOverlappingFramesGiveEmptySet) {
  SceneSpec spec = small_spec(40, 11);
  spec.max_step_rotation_deg = 25.0;
  const GroundTruth gt = generate_scene(spec);
  int empty_pairs = 0;
  for (int j = 1; j < 40; ++j) {
    const auto& a = gt.keypoint_landmark[0];
    const auto& b = gt.keypoint_landmark[static_cast<size_t>(j)];
    std::set<int> shared(a.begin(), a.end());
    bool overlap = false;
    for (int l : b) overlap = overlap || shared.contains(l);
    if (overlap) continue;
    ++empty_pairs;
    const RenderedMatches rm = render_matches(gt, 0, j, 0.3, 1);
    EXPECT_EQ(rm.matches.size(), 0u);
    EXPECT_TRUE(rm.outlier.empty());
  }
  EXPECT_GT(empty_pairs, 0);
}

TEST(RenderMatches, ZeroNoisePairAlignsExactly) {
  const GroundTruth gt = generate_scene(small_spec(4, 12));
  const RenderedMatches rm = render_matches(gt, 0, 3, 0.0, 1);
  const PairObservations obs = observations_for(gt, rm);
  RansacConfig cfg;
  cfg.seed = 3;
  const PairAlignment pa = ransac_progressive_grow(obs, cfg);
  ASSERT_TRUE(pa.success);
  const RigidPose truth = true_relative_pose(gt, 0, 3);
  EXPECT_LT(rotation_angle_deg(pa.relative_pose.rotation, truth.rotation), 0.05);
  EXPECT_LT((pa.relative_pose.translation - truth.translation).norm(), 1e-3);
}

TEST(PerturbRelativePoses, ZeroSigmaIsExact) {
  const GroundTruth gt = generate_scene(small_spec(6, 13));
  const auto pairs = propose_pairs(6, 2, 0, 1);
  const auto cs = perturb_relative_poses(gt, pairs, 0.0, 0.0, 5);
  ASSERT_EQ(cs.size(), pairs.size());
  for (const auto& c : cs) {
    const RigidPose truth = true_relative_pose(gt, c.frame_i, c.frame_j);
    EXPECT_LT((c.relative_pose.rotation - truth.rotation).norm(), 1e-15);
    EXPECT_LT((c.relative_pose.translation - truth.translation).norm(), 1e-15);
  }
}

TEST(PerturbRelativePoses, NoiseMagnitudeAndDeterminism) {
  const GroundTruth gt = generate_scene(small_spec(30, 14));
  const auto pairs = propose_pairs(30, 3, 0, 1);
  const auto a = perturb_relative_poses(gt, pairs, 1.0, 0.02, 9);
  const auto b = perturb_relative_poses(gt, pairs, 1.0, 0.02, 9);
  double sq_rot = 0.0, sq_trans = 0.0;
  for (size_t n = 0; n < a.size(); ++n) {
    EXPECT_EQ(a[n].relative_pose.rotation, b[n].relative_pose.rotation);
    EXPECT_EQ(a[n].relative_pose.translation, b[n].relative_pose.translation);
    const RigidPose truth = true_relative_pose(gt, a[n].frame_i, a[n].frame_j);
    sq_rot += std::pow(rotation_angle_deg(a[n].relative_pose.rotation, truth.rotation), 2);
    sq_trans += (a[n].relative_pose.translation - truth.translation).squaredNorm();
  }
  const double n = static_cast<double>(a.size());
  EXPECT_NEAR(std::sqrt(sq_rot / n), 1.0, 0.25);
  EXPECT_NEAR(std::sqrt(sq_trans / n), 0.02, 0.005);
  EXPECT_THROW(perturb_relative_poses(gt, pairs, -1.0, 0.0, 1), DomainError);
}

TEST(PerturbRelativePoses, LongSequenceAccumulatesDrift) {
  SceneSpec spec = small_spec(300, 15);
  spec.keypoints_per_frame = 60;
  const GroundTruth gt = generate_scene(spec);
  const auto pairs = propose_pairs(300, 1, 0, 1);
  auto cs = perturb_relative_poses(gt, pairs, 1.0, 0.0, 3, 0.0, 1);
  ASSERT_EQ(cs.size(), pairs.size());
  BundleProblem p(300, std::vector<int>(300, spec.K), std::move(cs));
  warmstart_poses(p);
  const auto poses = p.poses();
  const Mat3 est = poses.front().rotation.transpose() * poses.back().rotation;
  const Mat3 truth = gt.poses.front().rotation.transpose() * gt.poses.back().rotation;
  EXPECT_GT(rotation_angle_deg(est, truth), 1.0);
}

}  // namespace
}  // namespace ridgesfm
