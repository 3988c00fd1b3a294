#pragma once

// Weakly verified matches: mutual nearest neighbours in descriptor space,
// then least-median-of-squares fundamental-matrix outlier rejection.

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "ridgesfm/errors.hpp"
#include "ridgesfm/geometry.hpp"

namespace ridgesfm {

struct KeypointSet {
  std::vector<Pixel> pixels;
  Eigen::MatrixXf descriptors;  // N x D, unit-norm rows

  Eigen::Index size() const { return static_cast<Eigen::Index>(pixels.size()); }

  // Rows whose norm is already within 1e-6 of one are left untouched, so that
  // normalizing stored data is a no-op.
  void normalize_descriptors() {
    for (Eigen::Index r = 0; r < descriptors.rows(); ++r) {
      const float n = descriptors.row(r).norm();
      if (n > 0.0f && std::abs(n - 1.0f) > 1e-6f) descriptors.row(r) /= n;
    }
  }
};

struct Match {
  int i = 0;  // keypoint index in frame i
  int j = 0;  // keypoint index in frame j

  friend bool operator==(const Match&, const Match&) = default;
  friend auto operator<=>(const Match&, const Match&) = default;
};

struct MatchSet {
  int frame_i = 0;
  int frame_j = 0;
  std::vector<Match> pairs;

  std::size_t size() const { return pairs.size(); }
};

struct MatchConfig {
  int k = 1;  // candidates per side; 1 is the classic mutual nearest neighbour
};

namespace detail {

// Indices of the k smallest entries of row r of dist, ties broken by index.
inline std::vector<int> k_smallest(const Eigen::MatrixXd& dist, Eigen::Index r, int k, bool by_row) {
  const Eigen::Index n = by_row ? dist.cols() : dist.rows();
  std::vector<int> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  const auto value = [&](int c) { return by_row ? dist(r, c) : dist(c, r); };
  const auto kk = std::min<Eigen::Index>(k, n);
  std::partial_sort(idx.begin(), idx.begin() + kk, idx.end(), [&](int x, int y) {
    const double vx = value(x), vy = value(y);
    return vx < vy || (vx == vy && x < y);
  });
  idx.resize(static_cast<size_t>(kk));
  return idx;
}

}  // namespace detail

inline MatchSet mutual_nn_match(const KeypointSet& a, const KeypointSet& b,
                                const MatchConfig& config = {}) {
  MatchSet out;
  if (a.size() == 0 || b.size() == 0) return out;
  if (a.descriptors.cols() != b.descriptors.cols())
    throw DimensionError("mutual_nn_match: descriptor dimensions differ");
  const Eigen::MatrixXd da = a.descriptors.cast<double>();
  const Eigen::MatrixXd db = b.descriptors.cast<double>();
  Eigen::MatrixXd dist(da.rows(), db.rows());
  for (Eigen::Index m = 0; m < da.rows(); ++m)
    for (Eigen::Index n = 0; n < db.rows(); ++n)
      dist(m, n) = (da.row(m) - db.row(n)).squaredNorm();

  std::vector<std::vector<int>> nn_of_b(static_cast<size_t>(db.rows()));
  for (Eigen::Index n = 0; n < db.rows(); ++n)
    nn_of_b[static_cast<size_t>(n)] = detail::k_smallest(dist, n, config.k, false);

  for (Eigen::Index m = 0; m < da.rows(); ++m) {
    for (int n : detail::k_smallest(dist, m, config.k, true)) {
      const auto& back = nn_of_b[static_cast<size_t>(n)];
      if (std::find(back.begin(), back.end(), static_cast<int>(m)) != back.end())
        out.pairs.push_back({static_cast<int>(m), n});
    }
  }
  return out;
}

struct PixelPair {
  Pixel a;
  Pixel b;
};

// Squared first-order geometric (Sampson) error of b^T F a = 0, in pixels^2.
inline double sampson_error_sq(const Mat3& f, const Pixel& a, const Pixel& b) {
  const Vec3 xa(a.u, a.v, 1.0), xb(b.u, b.v, 1.0);
  const Vec3 fa = f * xa;
  const Vec3 ftb = f.transpose() * xb;
  const double num = xb.dot(fa);
  const double den = fa.x() * fa.x() + fa.y() * fa.y() + ftb.x() * ftb.x() + ftb.y() * ftb.y();
  if (den <= 0.0) return std::numeric_limits<double>::infinity();
  return num * num / den;
}

namespace detail {

// Similarity moving the centroid to the origin with mean distance sqrt(2).
inline Mat3 hartley_normalization(std::span<const Pixel> pts) {
  Eigen::Vector2d c = Eigen::Vector2d::Zero();
  for (const auto& p : pts) c += Eigen::Vector2d(p.u, p.v);
  c /= static_cast<double>(pts.size());
  double mean_dist = 0.0;
  for (const auto& p : pts) mean_dist += (Eigen::Vector2d(p.u, p.v) - c).norm();
  mean_dist /= static_cast<double>(pts.size());
  if (!(mean_dist > 1e-12)) throw EstimationError("eight_point_fundamental: coincident points");
  const double s = std::sqrt(2.0) / mean_dist;
  Mat3 t;
  t << s, 0, -s * c.x(), 0, s, -s * c.y(), 0, 0, 1;
  return t;
}

}  // namespace detail

// Normalized 8-point algorithm; returns a rank-2 F with unit Frobenius norm
// such that b^T F a = 0.
inline Mat3 eight_point_fundamental(std::span<const PixelPair> corr) {
  if (corr.size() < 8) throw EstimationError("eight_point_fundamental: need at least 8 pairs");
  std::vector<Pixel> pa, pb;
  pa.reserve(corr.size());
  pb.reserve(corr.size());
  for (const auto& c : corr) {
    pa.push_back(c.a);
    pb.push_back(c.b);
  }
  const Mat3 ta = detail::hartley_normalization(pa);
  const Mat3 tb = detail::hartley_normalization(pb);

  const auto rows = std::max<Eigen::Index>(9, static_cast<Eigen::Index>(corr.size()));
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(rows, 9);
  for (size_t r = 0; r < corr.size(); ++r) {
    const Vec3 xa = ta * Vec3(pa[r].u, pa[r].v, 1.0);
    const Vec3 xb = tb * Vec3(pb[r].u, pb[r].v, 1.0);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) a(static_cast<Eigen::Index>(r), 3 * i + j) = xb(i) * xa(j);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  // A one-dimensional null space is required; zero motion or coincident
  // geometry leaves a larger one.
  if (!(sv(7) > 1e-9 * sv(0))) throw EstimationError("eight_point_fundamental: degenerate configuration");
  const Eigen::VectorXd f = svd.matrixV().col(8);
  Mat3 fn;
  fn << f(0), f(1), f(2), f(3), f(4), f(5), f(6), f(7), f(8);

  Eigen::JacobiSVD<Mat3> svd_f(fn, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3 s = svd_f.singularValues();
  s(2) = 0.0;
  fn = svd_f.matrixU() * s.asDiagonal() * svd_f.matrixV().transpose();

  Mat3 out = tb.transpose() * fn * ta;
  out /= out.norm();
  // Rank 2 again after denormalization round-off.
  Eigen::JacobiSVD<Mat3> svd_o(out, Eigen::ComputeFullU | Eigen::ComputeFullV);
  s = svd_o.singularValues();
  s(2) = 0.0;
  out = svd_o.matrixU() * s.asDiagonal() * svd_o.matrixV().transpose();
  return out / out.norm();
}

struct LmedsConfig {
  int samples = 512;
  double scale_factor = 1.4826;  // median absolute deviation to sigma for a Gaussian
  double inlier_sigmas = 2.5;
  double min_threshold_px = 1e-3;
};

struct VerifiedMatches {
  MatchSet matches;
  Mat3 fundamental = Mat3::Zero();
  double median_error_sq = 0.0;
  bool warning = false;  // too few matches, input passed through
};

inline VerifiedMatches lmeds_verify(const MatchSet& matches, const KeypointSet& a,
                                    const KeypointSet& b, std::uint64_t seed,
                                    const LmedsConfig& config = {}) {
  VerifiedMatches out;
  out.matches = matches;
  const auto n = matches.pairs.size();
  if (n < 8) {
    out.warning = true;
    return out;
  }
  std::vector<PixelPair> corr(n);
  for (size_t m = 0; m < n; ++m) {
    const auto& p = matches.pairs[m];
    if (p.i < 0 || p.i >= a.size() || p.j < 0 || p.j >= b.size())
      throw DomainError("lmeds_verify: match index out of range");
    corr[m] = {a.pixels[static_cast<size_t>(p.i)], b.pixels[static_cast<size_t>(p.j)]};
  }

  std::mt19937_64 rng(seed);
  std::vector<size_t> perm(n);
  std::vector<PixelPair> sample(8);
  std::vector<double> err(n);
  double best_median = std::numeric_limits<double>::infinity();
  Mat3 best_f = Mat3::Zero();
  for (int s = 0; s < config.samples; ++s) {
    std::iota(perm.begin(), perm.end(), size_t{0});
    for (size_t k = 0; k < 8; ++k) {
      std::uniform_int_distribution<size_t> pick(k, n - 1);
      std::swap(perm[k], perm[pick(rng)]);
      sample[k] = corr[perm[k]];
    }
    Mat3 f;
    try {
      f = eight_point_fundamental(sample);
    } catch (const EstimationError&) {
      continue;
    }
    for (size_t m = 0; m < n; ++m) err[m] = sampson_error_sq(f, corr[m].a, corr[m].b);
    auto mid = err.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(err.begin(), mid, err.end());
    if (*mid < best_median) {
      best_median = *mid;
      best_f = f;
    }
  }
  if (!std::isfinite(best_median)) {
    out.warning = true;
    return out;
  }
  const double sigma = config.scale_factor * std::sqrt(best_median);
  const double threshold = std::max(config.inlier_sigmas * sigma, config.min_threshold_px);
  out.fundamental = best_f;
  out.median_error_sq = best_median;
  out.matches.pairs.clear();
  for (size_t m = 0; m < n; ++m)
    if (std::sqrt(sampson_error_sq(best_f, corr[m].a, corr[m].b)) < threshold)
      out.matches.pairs.push_back(matches.pairs[m]);
  return out;
}

}  // namespace ridgesfm
