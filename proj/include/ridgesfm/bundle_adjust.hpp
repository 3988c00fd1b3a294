#pragma once

// Global bundle adjustment over all frames.
//
//   L = sum_{(i,j)} L^matches_ij + w_pose * L^pose_ij
//   L^matches_ij = sum_m s(u_m) e_m + lambda_u s(-u_m),
//       e_m = |(R_i x_i^m + T_i) - (R_j x_j^m + T_j)|   (unsquared)
//   L^pose_ij = |R_i - R_j R_ij|_1 + |T_i - R_j T_ij - T_j|_1
//
// Absolute rotations are cumulative products of per-frame Tait-Bryan deltas
// and translations cumulative sums, so every parameter lives in one flat
// vector driven by Adam.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "ridgesfm/depth_basis.hpp"
#include "ridgesfm/errors.hpp"
#include "ridgesfm/geometry.hpp"
#include "ridgesfm/parallel.hpp"
#include "ridgesfm/pairwise_align.hpp"

namespace ridgesfm {

struct PairConstraint {
  int frame_i = 0;
  int frame_j = 0;
  RigidPose relative_pose;  // x_j = R_ij x_i + T_ij
  Points3 rays_i;           // one column per inlier match
  Points3 rays_j;
  SampledBasis basis_i;
  SampledBasis basis_j;
  std::vector<Match> matches;
  std::vector<std::uint8_t> outlier_labels;  // optional ground truth, 1 = planted outlier

  int size() const { return static_cast<int>(rays_i.cols()); }
};

// Builds the constraint for an accepted pairwise alignment.
inline PairConstraint constraint_from_alignment(const PairObservations& obs, const PairAlignment& pa) {
  PairConstraint c;
  c.frame_i = obs.matches.frame_i;
  c.frame_j = obs.matches.frame_j;
  c.relative_pose = pa.relative_pose;
  const auto m = static_cast<Eigen::Index>(pa.inlier_indices.size());
  c.rays_i.resize(3, m);
  c.rays_j.resize(3, m);
  c.basis_i.mean.resize(m);
  c.basis_j.mean.resize(m);
  c.basis_i.factors.resize(m, obs.basis_i.factors.cols());
  c.basis_j.factors.resize(m, obs.basis_j.factors.cols());
  for (Eigen::Index k = 0; k < m; ++k) {
    const int src = pa.inlier_indices[static_cast<size_t>(k)];
    c.rays_i.col(k) = obs.rays_i.col(src);
    c.rays_j.col(k) = obs.rays_j.col(src);
    c.basis_i.mean(k) = obs.basis_i.mean(src);
    c.basis_j.mean(k) = obs.basis_j.mean(src);
    c.basis_i.factors.row(k) = obs.basis_i.factors.row(src);
    c.basis_j.factors.row(k) = obs.basis_j.factors.row(src);
    c.matches.push_back(obs.matches.pairs[static_cast<size_t>(src)]);
  }
  return c;
}

struct BundleConfig {
  double lambda_u = 0.3;
  double step_size = 1e-3;
  double warmstart_step_size = 1e-2;
  double beta_weight_decay = 1e-2;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  int warmstart_steps_per_constraint = 6;
  int warmstart_ramp = 5;
  double pose_weight = 1.0;
  double tolerance = 1e-5;  // relative loss decrease over one window
  int window = 100;
  int max_iterations = 20000;
  double depth_floor = 0.01;
  bool deterministic = true;
  int threads = 1;

  void validate() const {
    if (!(lambda_u > 0.0)) throw DomainError("bundle: lambda_u must be positive");
    if (!(step_size > 0.0) || !(warmstart_step_size > 0.0))
      throw DomainError("bundle: step size must be positive");
    if (warmstart_ramp < 1 || window < 1) throw DomainError("bundle: ramp and window must be positive");
  }
};

// Numerical zero for the kinks of |.| and the Euclidean norm: subgradients are
// taken as 0 below this magnitude.
inline constexpr double kKinkZero = 1e-12;

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

// (sigmoid(x), sigmoid(-x)) from a single exponential.
inline std::pair<double, double> sigmoid_pair(double x) {
  const double e = std::exp(-std::abs(x));
  const double a = 1.0 / (1.0 + e);
  const double b = e / (1.0 + e);
  return x >= 0.0 ? std::pair{a, b} : std::pair{b, a};
}

inline double kink_sign(double x) { return x > kKinkZero ? 1.0 : (x < -kKinkZero ? -1.0 : 0.0); }

class BundleProblem {
 public:
  BundleProblem() = default;

  // Constraints are reordered ascending by (j, i). code_sizes holds K per frame.
  BundleProblem(int frames, std::vector<int> code_sizes, std::vector<PairConstraint> constraints)
      : frames_(frames), code_sizes_(std::move(code_sizes)), constraints_(std::move(constraints)) {
    if (frames_ < 1) throw DimensionError("bundle: need at least one frame");
    if (static_cast<int>(code_sizes_.size()) != frames_)
      throw DimensionError("bundle: one code size per frame required");
    std::stable_sort(constraints_.begin(), constraints_.end(), [](const PairConstraint& a, const PairConstraint& b) {
      return a.frame_j != b.frame_j ? a.frame_j < b.frame_j : a.frame_i < b.frame_i;
    });
    for (const auto& c : constraints_) {
      if (c.frame_i == c.frame_j) throw DomainError("bundle: constraint links a frame to itself");
      if (c.frame_i < 0 || c.frame_j < 0 || c.frame_i >= frames_ || c.frame_j >= frames_)
        throw DomainError("bundle: constraint frame out of range");
      if (c.size() < 1) throw DomainError("bundle: constraint without matches");
      if (c.basis_i.factors.cols() != code_sizes_[static_cast<size_t>(c.frame_i)] ||
          c.basis_j.factors.cols() != code_sizes_[static_cast<size_t>(c.frame_j)])
        throw DimensionError("bundle: sampled basis width does not match frame K");
    }
    Eigen::Index offset = 6 * static_cast<Eigen::Index>(frames_);
    for (int k : code_sizes_) {
      code_offset_.push_back(offset);
      offset += k;
    }
    aux_begin_ = offset;
    for (const auto& c : constraints_) {
      aux_offset_.push_back(offset);
      offset += c.size();
    }
    params_ = Eigen::VectorXd::Zero(offset);
  }

  int frames() const { return frames_; }
  const std::vector<PairConstraint>& constraints() const { return constraints_; }
  int code_size(int f) const { return code_sizes_[static_cast<size_t>(f)]; }

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  Eigen::Index angle_offset(int f) const { return 6 * static_cast<Eigen::Index>(f); }
  Eigen::Index translation_offset(int f) const { return 6 * static_cast<Eigen::Index>(f) + 3; }
  Eigen::Index code_offset(int f) const { return code_offset_[static_cast<size_t>(f)]; }
  Eigen::Index aux_offset(int c) const { return aux_offset_[static_cast<size_t>(c)]; }
  Eigen::Index chain_size() const { return 6 * static_cast<Eigen::Index>(frames_); }
  Eigen::Index aux_begin() const { return aux_begin_; }

  auto code(int f) { return params_.segment(code_offset(f), code_size(f)); }
  auto code(int f) const { return params_.segment(code_offset(f), code_size(f)); }
  auto aux(int c) { return params_.segment(aux_offset(c), constraints_[static_cast<size_t>(c)].size()); }
  auto aux(int c) const {
    return params_.segment(aux_offset(c), constraints_[static_cast<size_t>(c)].size());
  }

  std::vector<TaitBryanDelta> deltas() const {
    std::vector<TaitBryanDelta> d(static_cast<size_t>(frames_));
    for (int f = 0; f < frames_; ++f) {
      d[static_cast<size_t>(f)].angles = params_.segment<3>(angle_offset(f));
      d[static_cast<size_t>(f)].translation_delta = params_.segment<3>(translation_offset(f));
    }
    return d;
  }

  void set_deltas(std::span<const TaitBryanDelta> d) {
    if (static_cast<int>(d.size()) != frames_) throw DimensionError("bundle: delta count mismatch");
    for (int f = 0; f < frames_; ++f) {
      params_.segment<3>(angle_offset(f)) = d[static_cast<size_t>(f)].angles;
      params_.segment<3>(translation_offset(f)) = d[static_cast<size_t>(f)].translation_delta;
    }
  }

  void set_poses(std::span<const RigidPose> poses) {
    const auto d = decompose_chain(poses);
    set_deltas(d);
  }

  std::vector<RigidPose> poses() const {
    const auto d = deltas();
    return compose_chain(d);
  }

 private:
  int frames_ = 0;
  std::vector<int> code_sizes_;
  std::vector<PairConstraint> constraints_;
  std::vector<Eigen::Index> code_offset_;
  std::vector<Eigen::Index> aux_offset_;
  Eigen::Index aux_begin_ = 0;
  Eigen::VectorXd params_;
};

inline double matches_loss(const BundleProblem& problem, int c, double lambda_u = 0.3) {
  const auto poses = problem.poses();
  const PairConstraint& pc = problem.constraints()[static_cast<size_t>(c)];
  const RigidPose& pi = poses[static_cast<size_t>(pc.frame_i)];
  const RigidPose& pj = poses[static_cast<size_t>(pc.frame_j)];
  const Eigen::VectorXd bi = problem.code(pc.frame_i);
  const Eigen::VectorXd bj = problem.code(pc.frame_j);
  const auto u = problem.aux(c);
  double loss = 0.0;
  for (int m = 0; m < pc.size(); ++m) {
    const Vec3 xi = pc.rays_i.col(m) * pc.basis_i.depth(m, bi);
    const Vec3 xj = pc.rays_j.col(m) * pc.basis_j.depth(m, bj);
    const double e = (pi.apply(xi) - pj.apply(xj)).norm();
    loss += sigmoid(u(m)) * e + lambda_u * sigmoid(-u(m));
  }
  return loss;
}

inline double pose_loss(const BundleProblem& problem, int c) {
  const auto poses = problem.poses();
  const PairConstraint& pc = problem.constraints()[static_cast<size_t>(c)];
  const RigidPose& pi = poses[static_cast<size_t>(pc.frame_i)];
  const RigidPose& pj = poses[static_cast<size_t>(pc.frame_j)];
  return (pi.rotation - pj.rotation * pc.relative_pose.rotation).cwiseAbs().sum() +
         (pi.translation - pj.rotation * pc.relative_pose.translation - pj.translation).cwiseAbs().sum();
}

struct LossOptions {
  bool include_matches = true;
  bool include_pose = true;
  int active_constraints = -1;  // prefix of the (j, i)-sorted list; -1 = all
  double lambda_u = 0.3;
  double pose_weight = 1.0;
  bool deterministic = true;
  int threads = 1;
};

struct LossAndGrad {
  double loss = 0.0;
  double matches = 0.0;
  double pose = 0.0;
  Eigen::VectorXd grad;
};

namespace detail {

struct GradBuffer {
  std::vector<Mat3> d_rot;    // dL/dR_f
  std::vector<Vec3> d_trans;  // dL/dT_f
  Eigen::VectorXd d_code;     // laid out like the problem's code block
  double matches = 0.0;
  double pose = 0.0;

  void reset(int frames, Eigen::Index code_len) {
    d_rot.assign(static_cast<size_t>(frames), Mat3::Zero());
    d_trans.assign(static_cast<size_t>(frames), Vec3::Zero());
    d_code = Eigen::VectorXd::Zero(code_len);
    matches = pose = 0.0;
  }
};

}  // namespace detail

// Loss and analytic gradient over every parameter (chain deltas, codes, u).
inline LossAndGrad total_loss_and_grad(const BundleProblem& problem, const LossOptions& opt = {}) {
  const int frames = problem.frames();
  const auto& cons = problem.constraints();
  const int n_active = opt.active_constraints < 0
                           ? static_cast<int>(cons.size())
                           : std::min(opt.active_constraints, static_cast<int>(cons.size()));
  const auto deltas = problem.deltas();
  const auto poses = compose_chain(deltas);
  const Eigen::VectorXd& params = problem.params();
  const Eigen::Index code_begin = problem.chain_size();
  const Eigen::Index code_len = problem.aux_begin() - code_begin;

  LossAndGrad out;
  out.grad = Eigen::VectorXd::Zero(params.size());

  const int chunks = std::max(1, std::min(n_active, opt.deterministic ? 64 : std::max(opt.threads, 1)));
  std::vector<detail::GradBuffer> buffers(static_cast<size_t>(chunks));

  parallel_for(chunks, opt.threads, [&](int chunk) {
    detail::GradBuffer& buf = buffers[static_cast<size_t>(chunk)];
    buf.reset(frames, code_len);
    const int begin = n_active * chunk / chunks;
    const int end = n_active * (chunk + 1) / chunks;
    for (int c = begin; c < end; ++c) {
      const PairConstraint& pc = cons[static_cast<size_t>(c)];
      const int fi = pc.frame_i, fj = pc.frame_j;
      const RigidPose& pi = poses[static_cast<size_t>(fi)];
      const RigidPose& pj = poses[static_cast<size_t>(fj)];
      Mat3& gri = buf.d_rot[static_cast<size_t>(fi)];
      Mat3& grj = buf.d_rot[static_cast<size_t>(fj)];
      Vec3& gti = buf.d_trans[static_cast<size_t>(fi)];
      Vec3& gtj = buf.d_trans[static_cast<size_t>(fj)];

      if (opt.include_matches) {
        const auto bi = params.segment(problem.code_offset(fi), problem.code_size(fi));
        const auto bj = params.segment(problem.code_offset(fj), problem.code_size(fj));
        auto gbi = buf.d_code.segment(problem.code_offset(fi) - code_begin, problem.code_size(fi));
        auto gbj = buf.d_code.segment(problem.code_offset(fj) - code_begin, problem.code_size(fj));
        const Eigen::Index aux = problem.aux_offset(c);
        const Eigen::VectorXd di = pc.basis_i.mean + pc.basis_i.factors * bi;
        const Eigen::VectorXd dj = pc.basis_j.mean + pc.basis_j.factors * bj;
        Eigen::VectorXd wi(pc.size()), wj(pc.size());
        Mat3 acc_i = Mat3::Zero(), acc_j = Mat3::Zero();
        Vec3 acc_t = Vec3::Zero();
        for (int m = 0; m < pc.size(); ++m) {
          const Vec3 ri = pi.rotation * pc.rays_i.col(m);
          const Vec3 rj = pj.rotation * pc.rays_j.col(m);
          const Vec3 diff = ri * di(m) + pi.translation - rj * dj(m) - pj.translation;
          const double e = diff.norm();
          const double u = params(aux + m);
          const auto [s, sn] = sigmoid_pair(u);
          buf.matches += s * e + opt.lambda_u * sn;
          // d/du [s e + lambda_u (1 - s)] = s (1 - s) (e - lambda_u)
          out.grad(aux + m) = s * sn * (e - opt.lambda_u);
          if (e <= kKinkZero) {
            wi(m) = wj(m) = 0.0;
            continue;
          }
          const Vec3 n = diff * (s / e);
          acc_i.noalias() += n * (pc.rays_i.col(m) * di(m)).transpose();
          acc_j.noalias() += n * (pc.rays_j.col(m) * dj(m)).transpose();
          acc_t += n;
          wi(m) = n.dot(ri);
          wj(m) = n.dot(rj);
        }
        gri += acc_i;
        grj -= acc_j;
        gti += acc_t;
        gtj -= acc_t;
        gbi.noalias() += pc.basis_i.factors.transpose() * wi;
        gbj.noalias() -= pc.basis_j.factors.transpose() * wj;
      }
      if (opt.include_pose) {
        const Mat3& rij = pc.relative_pose.rotation;
        const Vec3& tij = pc.relative_pose.translation;
        const Mat3 a = pi.rotation - pj.rotation * rij;
        const Vec3 b = pi.translation - pj.rotation * tij - pj.translation;
        buf.pose += opt.pose_weight * (a.cwiseAbs().sum() + b.cwiseAbs().sum());
        const Mat3 sa = a.unaryExpr([](double x) { return kink_sign(x); }) * opt.pose_weight;
        const Vec3 sb = b.unaryExpr([](double x) { return kink_sign(x); }) * opt.pose_weight;
        gri += sa;
        grj -= sa * rij.transpose();
        grj -= sb * tij.transpose();
        gti += sb;
        gtj -= sb;
      }
    }
  });

  std::vector<Mat3> d_rot(static_cast<size_t>(frames), Mat3::Zero());
  std::vector<Vec3> d_trans(static_cast<size_t>(frames), Vec3::Zero());
  for (const auto& buf : buffers) {
    for (int f = 0; f < frames; ++f) {
      d_rot[static_cast<size_t>(f)] += buf.d_rot[static_cast<size_t>(f)];
      d_trans[static_cast<size_t>(f)] += buf.d_trans[static_cast<size_t>(f)];
    }
    out.grad.segment(code_begin, code_len) += buf.d_code;
    out.matches += buf.matches;
    out.pose += buf.pose;
  }
  out.loss = out.matches + out.pose;

  // Back through the chain. With P_k the absolute rotation of frame k,
  // dL/dR(delta_k) = P_{k-1}^T [sum_{i>=k} G_i P_i^T] P_k and
  // dL/dt_k = sum_{i>=k} dL/dT_i.
  Mat3 suffix_rot = Mat3::Zero();
  Vec3 suffix_trans = Vec3::Zero();
  for (int k = frames - 1; k >= 0; --k) {
    const auto ks = static_cast<size_t>(k);
    suffix_rot += d_rot[ks] * poses[ks].rotation.transpose();
    suffix_trans += d_trans[ks];
    const Mat3 prev = k > 0 ? poses[ks - 1].rotation : Mat3::Identity();
    const Mat3 d_delta = prev.transpose() * suffix_rot * poses[ks].rotation;
    const auto jac = tait_bryan_jacobian(deltas[ks].angles);
    for (int a = 0; a < 3; ++a) out.grad(problem.angle_offset(k) + a) = d_delta.cwiseProduct(jac[static_cast<size_t>(a)]).sum();
    out.grad.segment<3>(problem.translation_offset(k)) = suffix_trans;
  }
  return out;
}

// Adam with decoupled weight decay restricted to a coordinate range.
class AdamOptimizer {
 public:
  AdamOptimizer(Eigen::Index size, double beta1, double beta2, double epsilon)
      : m_(Eigen::VectorXd::Zero(size)), v_(Eigen::VectorXd::Zero(size)),
        beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {}

  // Updates params[begin, end) only; weight decay applies to [decay_begin, decay_end).
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, double lr, Eigen::Index begin,
            Eigen::Index end, double weight_decay = 0.0, Eigen::Index decay_begin = 0,
            Eigen::Index decay_end = 0) {
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    const Eigen::Index n = end - begin;
    auto m = m_.segment(begin, n);
    auto v = v_.segment(begin, n);
    const auto g = grad.segment(begin, n);
    m = beta1_ * m + (1.0 - beta1_) * g;
    v = beta2_ * v + (1.0 - beta2_) * g.cwiseProduct(g);
    if (weight_decay > 0.0 && decay_end > decay_begin)
      params.segment(decay_begin, decay_end - decay_begin) *= 1.0 - lr * weight_decay;
    params.segment(begin, n).array() -=
        lr * (m.array() / c1) / ((v.array() / c2).sqrt() + epsilon_);
  }

 private:
  Eigen::VectorXd m_, v_;
  double beta1_, beta2_, epsilon_;
  long t_ = 0;
};

// Number of constraints active at warm-start step t (1-based).
inline int warmstart_active_count(long t, int ramp, int constraints) {
  const long active = (t + ramp - 1) / ramp;
  return static_cast<int>(std::min<long>(active, constraints));
}

struct WarmstartResult {
  std::vector<double> loss_trace;
  long steps = 0;
};

// Minimizes the growing prefix sum of pose terms for
// steps_per_constraint * |I| steps; codes and u are left untouched.
inline WarmstartResult warmstart_poses(BundleProblem& problem, const BundleConfig& cfg = {}) {
  cfg.validate();
  WarmstartResult res;
  const int n = static_cast<int>(problem.constraints().size());
  if (n == 0) return res;
  AdamOptimizer adam(problem.params().size(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon);
  LossOptions opt;
  opt.include_matches = false;
  opt.pose_weight = 1.0;
  opt.deterministic = cfg.deterministic;
  opt.threads = cfg.threads;
  res.steps = static_cast<long>(cfg.warmstart_steps_per_constraint) * n;
  res.loss_trace.reserve(static_cast<size_t>(res.steps));
  for (long t = 1; t <= res.steps; ++t) {
    opt.active_constraints = warmstart_active_count(t, cfg.warmstart_ramp, n);
    const LossAndGrad lg = total_loss_and_grad(problem, opt);
    res.loss_trace.push_back(lg.loss);
    adam.step(problem.params(), lg.grad, cfg.warmstart_step_size, 0, problem.chain_size());
  }
  return res;
}

class BundleDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class BundleObjective { kFull, kPoseOnly };

struct BundleResult {
  std::vector<double> loss_trace;
  long iterations = 0;
  bool converged = false;
  std::vector<RigidPose> poses;
};

// True once the loss fell by less than tol (relative) over the last window.
inline bool window_converged(std::span<const double> trace, int window, double tol) {
  if (static_cast<int>(trace.size()) <= window) return false;
  const double old = trace[trace.size() - 1 - static_cast<size_t>(window)];
  const double now = trace.back();
  return old - now < tol * std::max(std::abs(old), 1e-300);
}

inline BundleResult optimize_bundle(BundleProblem& problem, const BundleConfig& cfg = {},
                                    BundleObjective objective = BundleObjective::kFull) {
  cfg.validate();
  BundleResult res;
  AdamOptimizer adam(problem.params().size(), cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon);
  LossOptions opt;
  opt.include_matches = objective == BundleObjective::kFull;
  opt.lambda_u = cfg.lambda_u;
  opt.pose_weight = objective == BundleObjective::kFull ? cfg.pose_weight : 1.0;
  opt.deterministic = cfg.deterministic;
  opt.threads = cfg.threads;
  const Eigen::Index end = objective == BundleObjective::kFull ? problem.params().size() : problem.chain_size();
  const Eigen::Index decay_begin = problem.chain_size();
  const Eigen::Index decay_end = objective == BundleObjective::kFull ? problem.aux_begin() : decay_begin;
  for (long it = 0; it < cfg.max_iterations; ++it) {
    const LossAndGrad lg = total_loss_and_grad(problem, opt);
    if (!std::isfinite(lg.loss) || !lg.grad.allFinite()) {
      std::ostringstream dump;
      dump << "bundle: non-finite loss at iteration " << it << " (matches=" << lg.matches
           << ", pose=" << lg.pose << "); |params|=" << problem.params().norm()
           << ", last finite loss=" << (res.loss_trace.empty() ? 0.0 : res.loss_trace.back());
      throw BundleDivergence(dump.str());
    }
    res.loss_trace.push_back(lg.loss);
    res.iterations = it + 1;
    if (window_converged(res.loss_trace, cfg.window, cfg.tolerance)) {
      res.converged = true;
      break;
    }
    adam.step(problem.params(), lg.grad, cfg.step_size, 0, end, cfg.beta_weight_decay, decay_begin, decay_end);
  }
  res.poses = problem.poses();
  return res;
}

struct DenseDepths {
  std::vector<DepthMap> depths;
  std::vector<int> clamped;  // pixels raised to the floor, per frame
};

inline DenseDepths dense_depths(const BundleProblem& problem, std::span<const DepthBasis> bases,
                                double floor = 0.01) {
  if (static_cast<int>(bases.size()) != problem.frames())
    throw DimensionError("dense_depths: one basis per frame required");
  DenseDepths out;
  for (int f = 0; f < problem.frames(); ++f) {
    DepthMap d = evaluate_dense(bases[static_cast<size_t>(f)], problem.code(f));
    int clamped = 0;
    for (Eigen::Index p = 0; p < d.size(); ++p) {
      if (!(d(p) >= floor)) {
        d(p) = floor;
        ++clamped;
      }
    }
    out.depths.push_back(std::move(d));
    out.clamped.push_back(clamped);
  }
  return out;
}

// Sliding window of the given radius plus `random_per_frame` long-range pairs
// per frame; pairs are (i, j) with i < j, sorted.
inline std::vector<std::pair<int, int>> propose_pairs(int frames, int window, int random_per_frame,
                                                      std::uint64_t seed) {
  std::set<std::pair<int, int>> pairs;
  for (int j = 0; j < frames; ++j)
    for (int i = std::max(0, j - window); i < j; ++i) pairs.emplace(i, j);
  std::mt19937_64 rng(seed);
  if (frames > window + 1) {
    for (int f = 0; f < frames; ++f) {
      for (int r = 0; r < random_per_frame; ++r) {
        std::uniform_int_distribution<int> pick(0, frames - 1);
        int g = pick(rng);
        for (int tries = 0; std::abs(g - f) <= window && tries < 32; ++tries) g = pick(rng);
        if (std::abs(g - f) > window) pairs.emplace(std::min(f, g), std::max(f, g));
      }
    }
  }
  return {pairs.begin(), pairs.end()};
}

}  // namespace ridgesfm
