#pragma once

// Command-line front end. Subcommands: synth, pairwise, bundle, eval,
// export-ply. Every subcommand accepts --config FILE (key = value lines,
// '#' or ';' comments, [section] headers ignored; command-line flags take
// precedence).
//
// Exit status: 0 success, 2 usage error, 3 data or I/O error, 4 estimation
// failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <iostream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "ridgesfm/bundle_adjust.hpp"
#include "ridgesfm/errors.hpp"
#include "ridgesfm/evaluation.hpp"
#include "ridgesfm/io.hpp"
#include "ridgesfm/parallel.hpp"
#include "ridgesfm/pipeline.hpp"
#include "ridgesfm/synthetic_scene.hpp"

namespace ridgesfm {

enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitData = 3, kExitCompute = 4 };

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  s = s.substr(b, e - b + 1);
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) s = s.substr(1, s.size() - 2);
  return s;
}

/// Replaces "--config FILE" with the flags it lists. Keys already given on
/// the command line are skipped; "true"/"false" values toggle bare flags.
inline std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::vector<std::string> result;
  const auto given = [&](const std::string& flag) {
    for (const auto& a : args)
      if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    return false;
  };
  for (size_t t = 0; t < args.size(); ++t) {
    std::string file;
    if (args[t] == "--config" && t + 1 < args.size()) {
      file = args[++t];
    } else if (args[t].rfind("--config=", 0) == 0) {
      file = args[t].substr(9);
    } else {
      result.push_back(args[t]);
      continue;
    }
    std::istringstream in(read_file(file));
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      line = trim(line);
      if (line.empty() || line[0] == '#' || line[0] == ';' || line[0] == '[') continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw FormatError(FormatErrorKind::kParse, file + ":" + std::to_string(lineno) + ": expected key = value");
      std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      std::replace(key.begin(), key.end(), '_', '-');
      const std::string flag = "--" + key;
      if (key.empty() || given(flag)) continue;
      if (value == "true") {
        result.push_back(flag);
      } else if (value != "false") {
        result.push_back(flag);
        result.push_back(value);
      }
    }
  }
  return result;
}

inline nlohmann::json pose_json(const RigidPose& p) {
  const auto e = trajectory_from_poses(std::span<const RigidPose>(&p, 1)).front();
  return {{"translation", {p.translation.x(), p.translation.y(), p.translation.z()}},
          {"quaternion_wxyz", {e.rotation.w(), e.rotation.x(), e.rotation.y(), e.rotation.z()}}};
}

inline nlohmann::json metrics_json(const MetricsReport& r) {
  return {{"rotation_error_deg", r.rotation_error_deg}, {"center_error_m", r.center_error_m},
          {"depth_l1", r.depth_l1},                     {"depth_rmse", r.depth_rmse},
          {"pcl_l1", r.pcl_l1},                         {"pcl_rmse", r.pcl_rmse},
          {"frames", r.frames},                         {"aligned_points", r.aligned_points},
          {"alignment_scale", r.alignment.scale}};
}

inline void write_loss_trace(const fs::path& path, const PipelineResult& res) {
  std::string out = "# phase step loss\n";
  for (size_t t = 0; t < res.warmstart_trace.size(); ++t)
    out += "warmstart " + std::to_string(t) + " " + format_number(res.warmstart_trace[t]) + "\n";
  for (size_t t = 0; t < res.loss_trace.size(); ++t)
    out += "bundle " + std::to_string(t) + " " + format_number(res.loss_trace[t]) + "\n";
  write_file(path, out);
}

}  // namespace detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Dense-depth structure from motion with ridge-regressed depth bases", "ridgesfm"};
  app.require_subcommand(1, 1);
  bool deterministic = false;
  std::string config_file;
  app.add_flag("--deterministic", deterministic, "Force ordered reductions (single-threaded bundle)");

  // ------------------------------------------------------------ synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic scene directory");
  synth->add_option("--config", config_file, "Read key = value options from FILE");
  SceneSpec spec;
  std::string synth_out;
  int synth_window = 10, synth_random = 2;
  synth->add_option("--out", synth_out, "Output scene directory")->required();
  synth->add_option("--frames", spec.frames, "Frame count")->capture_default_str();
  synth->add_option("--seed", spec.seed, "Random seed")->capture_default_str();
  synth->add_option("--K", spec.K, "Basis planes per frame")->capture_default_str();
  synth->add_option("--keypoints", spec.keypoints_per_frame, "Keypoints per frame")->capture_default_str();
  synth->add_option("--descriptor-dim", spec.descriptor_dim)->capture_default_str();
  synth->add_option("--pixel-noise", spec.pixel_noise, "Keypoint noise sigma, px")->capture_default_str();
  synth->add_option("--code-sigma", spec.code_sigma, "In-span depth perturbation, fraction of depth")->capture_default_str();
  synth->add_option("--depth-noise", spec.depth_noise, "Out-of-span depth noise sigma, m")->capture_default_str();
  synth->add_option("--descriptor-noise", spec.descriptor_noise)->capture_default_str();
  synth->add_option("--outlier-rate", spec.outlier_rate, "Fraction of planted outlier matches")->capture_default_str();
  synth->add_option("--max-rotation", spec.max_step_rotation_deg, "Per-step rotation limit, degrees")->capture_default_str();
  synth->add_option("--max-translation", spec.max_step_translation, "Per-step translation limit, m")->capture_default_str();
  synth->add_option("--clutter", spec.clutter_boxes)->capture_default_str();
  synth->add_option("--window", synth_window, "Pair window for written match files")->capture_default_str();
  synth->add_option("--random-pairs", synth_random)->capture_default_str();

  // ------------------------------------------------------------ pairwise
  auto* pairwise = app.add_subcommand("pairwise", "Align two frames of a scene directory");
  pairwise->add_option("--config", config_file, "Read key = value options from FILE");
  std::string pw_scene, pw_out;
  int pw_i = 0, pw_j = 1;
  PipelineConfig pw_cfg;
  pairwise->add_option("--scene", pw_scene, "Scene directory")->required();
  pairwise->add_option("--i", pw_i, "First frame index")->capture_default_str();
  pairwise->add_option("--j", pw_j, "Second frame index")->capture_default_str();
  pairwise->add_option("--out", pw_out, "Write a JSON report here");
  pairwise->add_option("--seed", pw_cfg.ransac.seed)->capture_default_str();
  pairwise->add_option("--runs", pw_cfg.ransac.runs)->capture_default_str();
  pairwise->add_option("--epsilon", pw_cfg.ransac.epsilon)->capture_default_str();
  pairwise->add_option("--lambda", pw_cfg.ransac.lambda)->capture_default_str();
  pairwise->add_option("--min-coverage", pw_cfg.ransac.min_covered_cells)->capture_default_str();
  pairwise->add_flag("!--no-verify", pw_cfg.verify_matches, "Skip LMedS verification");

  // ------------------------------------------------------------ bundle
  auto* bundle = app.add_subcommand("bundle", "Reconstruct a scene directory");
  bundle->add_option("--config", config_file, "Read key = value options from FILE");
  std::string bd_scene, bd_out;
  PipelineConfig bd_cfg;
  bundle->add_option("--scene", bd_scene, "Scene directory")->required();
  bundle->add_option("--out", bd_out, "Output directory")->required();
  bundle->add_option("--window", bd_cfg.window)->capture_default_str();
  bundle->add_option("--random-pairs", bd_cfg.random_pairs)->capture_default_str();
  bundle->add_option("--seed", bd_cfg.seed)->capture_default_str();
  bundle->add_option("--min-matches", bd_cfg.min_matches)->capture_default_str();
  bundle->add_flag("!--no-verify", bd_cfg.verify_matches, "Skip LMedS verification");
  bundle->add_option("--runs", bd_cfg.ransac.runs)->capture_default_str();
  bundle->add_option("--epsilon", bd_cfg.ransac.epsilon)->capture_default_str();
  bundle->add_option("--lambda", bd_cfg.ransac.lambda)->capture_default_str();
  bundle->add_option("--min-coverage", bd_cfg.ransac.min_covered_cells)->capture_default_str();
  bundle->add_option("--lambda-u", bd_cfg.bundle.lambda_u)->capture_default_str();
  bundle->add_option("--step-size", bd_cfg.bundle.step_size)->capture_default_str();
  bundle->add_option("--warmstart-step-size", bd_cfg.bundle.warmstart_step_size)->capture_default_str();
  bundle->add_option("--weight-decay", bd_cfg.bundle.beta_weight_decay)->capture_default_str();
  bundle->add_option("--tolerance", bd_cfg.bundle.tolerance)->capture_default_str();
  bundle->add_option("--max-iterations", bd_cfg.bundle.max_iterations)->capture_default_str();
  bundle->add_option("--depth-floor", bd_cfg.bundle.depth_floor)->capture_default_str();

  // ------------------------------------------------------------ eval
  auto* eval = app.add_subcommand("eval", "Compare a reconstruction with ground truth");
  eval->add_option("--config", config_file, "Read key = value options from FILE");
  std::string ev_pred, ev_gt, ev_json;
  int ev_stride = 8;
  eval->add_option("--pred", ev_pred, "Reconstruction directory (trajectory.txt, depth.rsfmd)")->required();
  eval->add_option("--scene", ev_gt, "Scene directory with frames.txt and gt/")->required();
  eval->add_option("--json", ev_json, "Write the report as JSON here");
  eval->add_option("--stride", ev_stride, "Point-cloud subsampling stride")->capture_default_str();

  // ------------------------------------------------------------ export-ply
  auto* ply = app.add_subcommand("export-ply", "Write a reconstruction as a point cloud");
  ply->add_option("--config", config_file, "Read key = value options from FILE");
  std::string ply_pred, ply_scene, ply_out;
  int ply_stride = 1;
  ply->add_option("--pred", ply_pred, "Reconstruction directory (trajectory.txt, depth.rsfmd)")->required();
  ply->add_option("--scene", ply_scene, "Scene directory with frames.txt")->required();
  ply->add_option("--out", ply_out, "Output PLY file")->required();
  ply->add_option("--stride", ply_stride)->capture_default_str();

  std::vector<std::string> args;
  try {
    args = detail::expand_config(std::vector<std::string>(argv + std::min(argc, 1), argv + argc));
  } catch (const FormatError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  }
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  const auto bundle_threads = [&](BundleConfig& b) {
    b.deterministic = deterministic || b.deterministic;
    b.threads = worker_threads();
  };

  try {
    if (*synth) {
      const GroundTruth gt = generate_scene(spec);
      const auto pairs = propose_pairs(spec.frames, synth_window, synth_random, spec.seed);
      write_scene(synth_out, gt, pairs, spec.outlier_rate, spec.seed);
      out << "wrote " << spec.frames << " frames to " << synth_out << "\n";
    } else if (*pairwise) {
      const Scene scene = load_scene(pw_scene);
      if (pw_i < 0 || pw_j < 0 || pw_i >= scene.size() || pw_j >= scene.size() || pw_i == pw_j)
        throw DomainError("pairwise: frame indices out of range");
      PipelineConfig cfg = pw_cfg;
      cfg.min_matches = cfg.ransac.initial_size;
      PairReport rep{pw_i, pw_j};
      const MatchSet m = pair_matches(scene, pw_i, pw_j, cfg, rep);
      const PairObservations obs = make_pair_observations(
          m, scene.keypoints[static_cast<size_t>(pw_i)], scene.keypoints[static_cast<size_t>(pw_j)],
          scene.bases[static_cast<size_t>(pw_i)], scene.bases[static_cast<size_t>(pw_j)],
          scene.frames[static_cast<size_t>(pw_i)].intrinsics, scene.frames[static_cast<size_t>(pw_j)].intrinsics);
      const PairAlignment pa = ransac_progressive_grow(obs, cfg.ransac);
      nlohmann::json j = {{"frame_i", pw_i},           {"frame_j", pw_j},
                          {"raw_matches", rep.raw_matches}, {"verified_matches", rep.verified_matches},
                          {"inliers", pa.inlier_indices.size()},     {"coverage", pa.coverage_score},
                          {"status", to_string(pa.status)}, {"success", pa.success},
                          {"relative_pose", detail::pose_json(pa.relative_pose)}};
      out << j.dump(2) << "\n";
      if (!pw_out.empty()) write_file(pw_out, j.dump(2) + "\n");
      if (!pa.success) return kExitCompute;
    } else if (*bundle) {
      const Scene scene = load_scene(bd_scene);
      bundle_threads(bd_cfg.bundle);
      const PipelineResult res = run_bundle_pipeline(scene, bd_cfg);
      const fs::path dir(bd_out);
      save_trajectory(dir / "trajectory.txt", res.poses);
      save_codes(dir / "codes.txt", res.codes);
      detail::write_loss_trace(dir / "loss.txt", res);
      save_depths(dir / "depth.rsfmd", {scene.bases.front().basis_height, scene.bases.front().basis_width, res.depths});
      std::string pairs = "# frame_i frame_j raw verified inliers coverage status\n";
      for (const auto& p : res.pairs)
        pairs += std::to_string(p.frame_i) + " " + std::to_string(p.frame_j) + " " + std::to_string(p.raw_matches) +
                 " " + std::to_string(p.verified_matches) + " " + std::to_string(p.inliers) + " " +
                 std::to_string(p.coverage) + " " + to_string(p.status) + "\n";
      write_file(dir / "pairs.txt", pairs);
      out << "frames " << scene.size() << ", constraints " << res.constraints << ", iterations "
          << res.loss_trace.size() << ", final loss "
          << (res.loss_trace.empty() ? 0.0 : res.loss_trace.back()) << (res.converged ? "" : " (not converged)")
          << "\n";
    } else if (*eval) {
      const Scene scene = load_scene(ev_gt);
      const fs::path gt_dir = fs::path(ev_gt) / "gt";
      Reconstruction gt{load_trajectory(gt_dir / "trajectory.txt"), load_depths(gt_dir / "depth.rsfmd").maps};
      Reconstruction pred{load_trajectory(fs::path(ev_pred) / "trajectory.txt"),
                          load_depths(fs::path(ev_pred) / "depth.rsfmd").maps};
      if (pred.poses.size() != gt.poses.size())
        throw FormatError(FormatErrorKind::kValidation, "eval: prediction has " + std::to_string(pred.poses.size()) +
                                                            " frames, ground truth " + std::to_string(gt.poses.size()));
      const MetricsReport r = evaluate(pred, gt, scene.camera(), ev_stride);
      out << "frames             " << r.frames << "\n"
          << "aligned points     " << r.aligned_points << "\n"
          << "rotation error deg " << r.rotation_error_deg << "\n"
          << "center error m     " << r.center_error_m << "\n"
          << "depth L1 m         " << r.depth_l1 << "\n"
          << "depth RMSE m       " << r.depth_rmse << "\n"
          << "PCL L1 m           " << r.pcl_l1 << "\n"
          << "PCL RMSE m         " << r.pcl_rmse << "\n";
      if (!ev_json.empty()) write_file(ev_json, detail::metrics_json(r).dump(2) + "\n");
    } else if (*ply) {
      const Scene scene = load_scene(ply_scene);
      const auto poses = load_trajectory(fs::path(ply_pred) / "trajectory.txt");
      const auto depths = load_depths(fs::path(ply_pred) / "depth.rsfmd").maps;
      export_ply(ply_out, poses, depths, scene.camera(), ply_stride);
      out << "wrote " << ply_out << "\n";
    }
  } catch (const FormatError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const DimensionError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const DomainError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "estimation error: " << e.what() << "\n";
    return kExitCompute;
  }
  return kExitOk;
}

}  // namespace ridgesfm
