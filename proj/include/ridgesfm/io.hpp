#pragma once

// File formats. Every format has an in-memory encode/decode pair plus
// save/load wrappers; decoders validate strictly and report the file name
// with a line number or byte offset.
//
//   basis      "RSFMB1", u32 LE H_b W_b K frame_H frame_W, f32 mu, f32 sigma planes
//   keypoints  "RSFMK1 N D", then N lines "u v d0 .. d(D-1)"
//   matches    "RSFMM1 M", then M lines "idx_i idx_j"
//   labels     "RSFML1 M", then M lines "0" (inlier) or "1" (outlier)
//   trajectory one line per frame "frame_id tx ty tz qw qx qy qz"
//   codes      "RSFMC1 N K", then N lines of K values
//   depths     "RSFMD1", u32 LE N H W, f32 maps
//   manifest   "frame_id basis_path keypoint_path fx fy cx cy W H" per frame
//   PLY        binary little-endian, float x y z, uchar red green blue

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ridgesfm/depth_basis.hpp"
#include "ridgesfm/errors.hpp"
#include "ridgesfm/evaluation.hpp"
#include "ridgesfm/geometry.hpp"
#include "ridgesfm/match_verify.hpp"

namespace ridgesfm {

namespace fs = std::filesystem;

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatErrorKind::kIo, path.string() + ": cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw FormatError(FormatErrorKind::kIo, path.string() + ": read failed");
  return ss.str();
}

inline void write_file(const fs::path& path, std::string_view bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError(FormatErrorKind::kIo, path.string() + ": cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError(FormatErrorKind::kIo, path.string() + ": write failed");
}

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
}

inline void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

inline std::uint32_t get_u32(std::string_view in, size_t offset) {
  std::uint32_t v = 0;
  for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[offset + static_cast<size_t>(b)])) << (8 * b);
  return v;
}

inline float get_f32(std::string_view in, size_t offset) { return std::bit_cast<float>(get_u32(in, offset)); }

// Shortest decimal form that parses back to the same value.
template <typename T>
std::string format_number(T v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

// Binary header check shared by the two binary formats.
inline void check_binary_header(std::string_view bytes, std::string_view magic, size_t header, const std::string& name) {
  if (bytes.size() < magic.size() || bytes.substr(0, magic.size()) != magic)
    throw FormatError(FormatErrorKind::kBadMagic, name + ": expected magic \"" + std::string(magic) + "\" at offset 0");
  if (bytes.size() < header)
    throw FormatError(FormatErrorKind::kTruncated, name + ": header needs " + std::to_string(header) +
                                                       " bytes, file has " + std::to_string(bytes.size()));
}

inline void check_payload(std::string_view bytes, size_t header, std::uint64_t payload, const std::string& name) {
  const std::uint64_t expected = header + payload;
  if (bytes.size() < expected)
    throw FormatError(FormatErrorKind::kTruncated, name + ": expected " + std::to_string(expected) + " bytes, got " +
                                                       std::to_string(bytes.size()));
  if (bytes.size() > expected)
    throw FormatError(FormatErrorKind::kValidation, name + ": " + std::to_string(bytes.size() - expected) +
                                                        " trailing bytes after offset " + std::to_string(expected));
}

// Whitespace-tokenized line reader with line-number bookkeeping.
class TextReader {
 public:
  TextReader(std::string_view text, std::string name) : text_(text), name_(std::move(name)) {}

  // Next non-blank line split into tokens; nullopt at end of input. Lines
  // starting with '#' are skipped when comments are enabled.
  std::optional<std::vector<std::string_view>> next(bool comments = false) {
    while (pos_ < text_.size()) {
      size_t end = text_.find('\n', pos_);
      if (end == std::string_view::npos) end = text_.size();
      std::string_view line = text_.substr(pos_, end - pos_);
      pos_ = end + 1;
      ++line_;
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      std::vector<std::string_view> tokens;
      size_t i = 0;
      while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
        if (j > i) tokens.push_back(line.substr(i, j - i));
        i = j;
      }
      if (tokens.empty()) continue;
      if (comments && tokens.front().front() == '#') continue;
      return tokens;
    }
    return std::nullopt;
  }

  std::string where() const { return name_ + ":" + std::to_string(line_); }
  const std::string& name() const { return name_; }

  [[noreturn]] void fail(FormatErrorKind kind, const std::string& what) const {
    throw FormatError(kind, where() + ": " + what);
  }

  template <typename T>
  T number(std::string_view tok) const {
    T v{};
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
      fail(FormatErrorKind::kParse, "cannot parse \"" + std::string(tok) + "\" as a number");
    if constexpr (std::is_floating_point_v<T>) {
      if (!std::isfinite(v)) fail(FormatErrorKind::kNonFinite, "value \"" + std::string(tok) + "\" is not finite");
    }
    return v;
  }

  // Parses the "MAGIC n [m]" header line.
  std::vector<long> header(std::string_view magic, size_t counts) {
    auto tok = next();
    if (!tok || tok->front() != magic) fail(FormatErrorKind::kBadMagic, "expected header \"" + std::string(magic) + "\"");
    if (tok->size() != counts + 1) fail(FormatErrorKind::kParse, "header needs " + std::to_string(counts) + " counts");
    std::vector<long> out;
    for (size_t c = 0; c < counts; ++c) {
      const long v = number<long>((*tok)[c + 1]);
      if (v < 0) fail(FormatErrorKind::kRange, "negative count in header");
      out.push_back(v);
    }
    return out;
  }

  std::vector<std::string_view> record(size_t fields, long index, long total) {
    auto tok = next();
    if (!tok)
      throw FormatError(FormatErrorKind::kTruncated, name_ + ": expected " + std::to_string(total) + " records, found " +
                                                         std::to_string(index) + " before end of file");
    if (tok->size() != fields)
      fail(FormatErrorKind::kParse, "expected " + std::to_string(fields) + " fields, got " + std::to_string(tok->size()));
    return *tok;
  }

  void expect_end() {
    if (next()) fail(FormatErrorKind::kValidation, "unexpected extra record");
  }

 private:
  std::string_view text_;
  std::string name_;
  size_t pos_ = 0;
  long line_ = 0;
};

}  // namespace detail

// ---------------------------------------------------------------- basis

inline constexpr size_t kBasisHeaderBytes = 26;

inline std::string encode_basis(const DepthBasis& b) {
  b.validate();
  std::string out = "RSFMB1";
  for (int v : {b.basis_height, b.basis_width, b.K(), b.frame_height, b.frame_width})
    detail::put_u32(out, static_cast<std::uint32_t>(v));
  out.reserve(kBasisHeaderBytes + 4 * static_cast<size_t>(b.pixel_count()) * static_cast<size_t>(b.K() + 1));
  for (Eigen::Index p = 0; p < b.mu.size(); ++p) detail::put_f32(out, static_cast<float>(b.mu(p)));
  for (int k = 0; k < b.K(); ++k)
    for (Eigen::Index p = 0; p < b.sigma.rows(); ++p) detail::put_f32(out, static_cast<float>(b.sigma(p, k)));
  return out;
}

inline DepthBasis decode_basis(std::string_view bytes, const std::string& name = "<basis>") {
  detail::check_binary_header(bytes, "RSFMB1", kBasisHeaderBytes, name);
  std::array<std::uint32_t, 5> dims{};
  for (size_t d = 0; d < 5; ++d) dims[d] = detail::get_u32(bytes, 6 + 4 * d);
  for (size_t d = 0; d < 5; ++d)
    if (dims[d] == 0 || dims[d] > (1u << 20))
      throw FormatError(FormatErrorKind::kRange, name + ": header field at offset " + std::to_string(6 + 4 * d) +
                                                     " is " + std::to_string(dims[d]) + ", must be in [1, 2^20]");
  const std::uint64_t pixels = std::uint64_t{dims[0]} * dims[1];
  detail::check_payload(bytes, kBasisHeaderBytes, 4 * pixels * (std::uint64_t{dims[2]} + 1), name);
  DepthBasis b;
  b.basis_height = static_cast<int>(dims[0]);
  b.basis_width = static_cast<int>(dims[1]);
  b.frame_height = static_cast<int>(dims[3]);
  b.frame_width = static_cast<int>(dims[4]);
  const auto n = static_cast<Eigen::Index>(pixels);
  b.mu.resize(n);
  b.sigma.resize(n, static_cast<Eigen::Index>(dims[2]));
  size_t off = kBasisHeaderBytes;
  for (Eigen::Index p = 0; p < n; ++p, off += 4) {
    const float v = detail::get_f32(bytes, off);
    if (!std::isfinite(v))
      throw FormatError(FormatErrorKind::kNonFinite, name + ": mu value at offset " + std::to_string(off) + " is not finite");
    if (!(v > 0.0f))
      throw FormatError(FormatErrorKind::kRange, name + ": mu value at offset " + std::to_string(off) + " is not positive");
    b.mu(p) = v;
  }
  for (Eigen::Index k = 0; k < b.sigma.cols(); ++k) {
    for (Eigen::Index p = 0; p < n; ++p, off += 4) {
      const float v = detail::get_f32(bytes, off);
      if (!std::isfinite(v))
        throw FormatError(FormatErrorKind::kNonFinite, name + ": sigma value at offset " + std::to_string(off) + " is not finite");
      b.sigma(p, k) = v;
    }
  }
  return b;
}

inline void save_basis(const fs::path& path, const DepthBasis& b) { write_file(path, encode_basis(b)); }
inline DepthBasis load_basis(const fs::path& path) { return decode_basis(read_file(path), path.string()); }

// ---------------------------------------------------------------- keypoints

inline std::string encode_keypoints(const KeypointSet& kp) {
  if (kp.descriptors.rows() != kp.size()) throw DimensionError("keypoints: one descriptor row per keypoint required");
  std::string out = "RSFMK1 " + std::to_string(kp.size()) + " " + std::to_string(kp.descriptors.cols()) + "\n";
  for (Eigen::Index n = 0; n < kp.size(); ++n) {
    const Pixel& p = kp.pixels[static_cast<size_t>(n)];
    out += detail::format_number(p.u) + " " + detail::format_number(p.v);
    for (Eigen::Index d = 0; d < kp.descriptors.cols(); ++d) out += " " + detail::format_number(kp.descriptors(n, d));
    out += "\n";
  }
  return out;
}

inline KeypointSet decode_keypoints(std::string_view text, const std::string& name = "<keypoints>") {
  detail::TextReader r(text, name);
  const auto h = r.header("RSFMK1", 2);
  const long n = h[0], dim = h[1];
  KeypointSet kp;
  kp.pixels.reserve(static_cast<size_t>(n));
  kp.descriptors.resize(n, dim);
  for (long i = 0; i < n; ++i) {
    const auto tok = r.record(static_cast<size_t>(dim + 2), i, n);
    const Pixel p{r.number<double>(tok[0]), r.number<double>(tok[1])};
    if (p.u < 0.0 || p.v < 0.0) r.fail(FormatErrorKind::kRange, "negative pixel coordinate");
    kp.pixels.push_back(p);
    for (long d = 0; d < dim; ++d) kp.descriptors(i, d) = r.number<float>(tok[static_cast<size_t>(d + 2)]);
  }
  r.expect_end();
  kp.normalize_descriptors();
  return kp;
}

inline void save_keypoints(const fs::path& path, const KeypointSet& kp) { write_file(path, encode_keypoints(kp)); }
inline KeypointSet load_keypoints(const fs::path& path) { return decode_keypoints(read_file(path), path.string()); }

// ---------------------------------------------------------------- matches

inline std::string encode_matches(const MatchSet& m) {
  std::string out = "RSFMM1 " + std::to_string(m.size()) + "\n";
  for (const auto& p : m.pairs) out += std::to_string(p.i) + " " + std::to_string(p.j) + "\n";
  return out;
}

// Indices are checked against the keypoint counts when those are given.
inline MatchSet decode_matches(std::string_view text, const std::string& name = "<matches>", long size_i = -1,
                               long size_j = -1) {
  detail::TextReader r(text, name);
  const long m = r.header("RSFMM1", 1)[0];
  MatchSet out;
  out.pairs.reserve(static_cast<size_t>(m));
  for (long k = 0; k < m; ++k) {
    const auto tok = r.record(2, k, m);
    const int a = r.number<int>(tok[0]), b = r.number<int>(tok[1]);
    if (a < 0 || b < 0 || (size_i >= 0 && a >= size_i) || (size_j >= 0 && b >= size_j))
      r.fail(FormatErrorKind::kRange, "match index out of range");
    out.pairs.push_back({a, b});
  }
  r.expect_end();
  return out;
}

inline void save_matches(const fs::path& path, const MatchSet& m) { write_file(path, encode_matches(m)); }
inline MatchSet load_matches(const fs::path& path, long size_i = -1, long size_j = -1) {
  return decode_matches(read_file(path), path.string(), size_i, size_j);
}

// ---------------------------------------------------------------- labels

inline std::string encode_labels(std::span<const std::uint8_t> labels) {
  std::string out = "RSFML1 " + std::to_string(labels.size()) + "\n";
  for (auto l : labels) out += l ? "1\n" : "0\n";
  return out;
}

inline std::vector<std::uint8_t> decode_labels(std::string_view text, const std::string& name = "<labels>") {
  detail::TextReader r(text, name);
  const long m = r.header("RSFML1", 1)[0];
  std::vector<std::uint8_t> out;
  for (long k = 0; k < m; ++k) {
    const int v = r.number<int>(r.record(1, k, m)[0]);
    if (v != 0 && v != 1) r.fail(FormatErrorKind::kRange, "label must be 0 or 1");
    out.push_back(static_cast<std::uint8_t>(v));
  }
  r.expect_end();
  return out;
}

// ---------------------------------------------------------------- trajectory

struct TrajectoryEntry {
  int frame_id = 0;
  Vec3 translation = Vec3::Zero();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();

  RigidPose pose() const { return {rotation.normalized().toRotationMatrix(), translation}; }

  friend bool operator==(const TrajectoryEntry& a, const TrajectoryEntry& b) {
    return a.frame_id == b.frame_id && a.translation == b.translation && a.rotation.coeffs() == b.rotation.coeffs();
  }
};

// Quaternions are stored with a nonnegative scalar part.
inline std::vector<TrajectoryEntry> trajectory_from_poses(std::span<const RigidPose> poses) {
  std::vector<TrajectoryEntry> out;
  for (size_t f = 0; f < poses.size(); ++f) {
    Eigen::Quaterniond q(orthonormalize(poses[f].rotation));
    if (q.w() < 0.0) q.coeffs() *= -1.0;
    out.push_back({static_cast<int>(f), poses[f].translation, q.normalized()});
  }
  return out;
}

inline std::vector<RigidPose> poses_from_trajectory(std::span<const TrajectoryEntry> entries) {
  std::vector<RigidPose> out;
  for (const auto& e : entries) out.push_back(e.pose());
  return out;
}

inline std::string encode_trajectory(std::span<const TrajectoryEntry> entries) {
  std::string out;
  for (const auto& e : entries) {
    out += std::to_string(e.frame_id);
    for (double v : {e.translation.x(), e.translation.y(), e.translation.z(), e.rotation.w(), e.rotation.x(),
                     e.rotation.y(), e.rotation.z()})
      out += " " + detail::format_number(v);
    out += "\n";
  }
  return out;
}

inline std::vector<TrajectoryEntry> decode_trajectory(std::string_view text, const std::string& name = "<trajectory>") {
  detail::TextReader r(text, name);
  std::vector<TrajectoryEntry> out;
  while (auto tok = r.next(true)) {
    if (tok->size() != 8) r.fail(FormatErrorKind::kParse, "expected 8 fields, got " + std::to_string(tok->size()));
    TrajectoryEntry e;
    e.frame_id = r.number<int>((*tok)[0]);
    if (e.frame_id < 0) r.fail(FormatErrorKind::kRange, "negative frame id");
    for (int a = 0; a < 3; ++a) e.translation(a) = r.number<double>((*tok)[static_cast<size_t>(a + 1)]);
    e.rotation = Eigen::Quaterniond(r.number<double>((*tok)[4]), r.number<double>((*tok)[5]),
                                    r.number<double>((*tok)[6]), r.number<double>((*tok)[7]));
    const double norm = e.rotation.norm();
    if (std::abs(norm - 1.0) > 1e-6)
      r.fail(FormatErrorKind::kValidation, "quaternion norm " + detail::format_number(norm) + " is not within 1e-6 of 1");
    if (!out.empty() && e.frame_id <= out.back().frame_id)
      r.fail(FormatErrorKind::kValidation, "frame ids must be strictly increasing");
    out.push_back(e);
  }
  return out;
}

inline void save_trajectory(const fs::path& path, std::span<const RigidPose> poses) {
  write_file(path, encode_trajectory(trajectory_from_poses(poses)));
}
inline std::vector<RigidPose> load_trajectory(const fs::path& path) {
  const auto entries = decode_trajectory(read_file(path), path.string());
  return poses_from_trajectory(entries);
}

// ---------------------------------------------------------------- codes

inline std::string encode_codes(std::span<const DepthCode> codes) {
  const Eigen::Index k = codes.empty() ? 0 : codes.front().size();
  std::string out = "RSFMC1 " + std::to_string(codes.size()) + " " + std::to_string(k) + "\n";
  for (const auto& c : codes) {
    if (c.size() != k) throw DimensionError("codes: every frame must have the same K");
    for (Eigen::Index i = 0; i < k; ++i) out += (i ? " " : "") + detail::format_number(c(i));
    out += "\n";
  }
  return out;
}

inline std::vector<DepthCode> decode_codes(std::string_view text, const std::string& name = "<codes>") {
  detail::TextReader r(text, name);
  const auto h = r.header("RSFMC1", 2);
  std::vector<DepthCode> out;
  for (long n = 0; n < h[0]; ++n) {
    const auto tok = r.record(static_cast<size_t>(h[1]), n, h[0]);
    DepthCode c(h[1]);
    for (long i = 0; i < h[1]; ++i) c(i) = r.number<double>(tok[static_cast<size_t>(i)]);
    out.push_back(std::move(c));
  }
  r.expect_end();
  return out;
}

inline void save_codes(const fs::path& path, std::span<const DepthCode> codes) { write_file(path, encode_codes(codes)); }
inline std::vector<DepthCode> load_codes(const fs::path& path) { return decode_codes(read_file(path), path.string()); }

// ---------------------------------------------------------------- depth maps

struct DepthStack {
  int height = 0;
  int width = 0;
  std::vector<DepthMap> maps;
};

inline constexpr size_t kDepthHeaderBytes = 18;

inline std::string encode_depths(const DepthStack& s) {
  std::string out = "RSFMD1";
  detail::put_u32(out, static_cast<std::uint32_t>(s.maps.size()));
  detail::put_u32(out, static_cast<std::uint32_t>(s.height));
  detail::put_u32(out, static_cast<std::uint32_t>(s.width));
  for (const auto& m : s.maps) {
    if (m.size() != static_cast<Eigen::Index>(s.height) * s.width) throw DimensionError("depths: map size mismatch");
    for (Eigen::Index p = 0; p < m.size(); ++p) detail::put_f32(out, static_cast<float>(m(p)));
  }
  return out;
}

inline DepthStack decode_depths(std::string_view bytes, const std::string& name = "<depths>") {
  detail::check_binary_header(bytes, "RSFMD1", kDepthHeaderBytes, name);
  const std::uint32_t n = detail::get_u32(bytes, 6), h = detail::get_u32(bytes, 10), w = detail::get_u32(bytes, 14);
  if (h == 0 || w == 0 || h > (1u << 20) || w > (1u << 20))
    throw FormatError(FormatErrorKind::kRange, name + ": depth resolution at offset 10 must be in [1, 2^20]");
  detail::check_payload(bytes, kDepthHeaderBytes, 4 * std::uint64_t{n} * h * w, name);
  DepthStack s{static_cast<int>(h), static_cast<int>(w), {}};
  size_t off = kDepthHeaderBytes;
  for (std::uint32_t f = 0; f < n; ++f) {
    DepthMap m(static_cast<Eigen::Index>(h) * w);
    for (Eigen::Index p = 0; p < m.size(); ++p, off += 4) {
      const float v = detail::get_f32(bytes, off);
      if (!std::isfinite(v))
        throw FormatError(FormatErrorKind::kNonFinite, name + ": depth at offset " + std::to_string(off) + " is not finite");
      m(p) = v;
    }
    s.maps.push_back(std::move(m));
  }
  return s;
}

inline void save_depths(const fs::path& path, const DepthStack& s) { write_file(path, encode_depths(s)); }
inline DepthStack load_depths(const fs::path& path) { return decode_depths(read_file(path), path.string()); }

// ---------------------------------------------------------------- manifest

struct FrameEntry {
  int frame_id = 0;
  std::string basis_path;  // relative to the manifest directory
  std::string keypoint_path;
  Intrinsics intrinsics;

  friend bool operator==(const FrameEntry& a, const FrameEntry& b) {
    return a.frame_id == b.frame_id && a.basis_path == b.basis_path && a.keypoint_path == b.keypoint_path &&
           a.intrinsics.fx == b.intrinsics.fx && a.intrinsics.fy == b.intrinsics.fy &&
           a.intrinsics.cx == b.intrinsics.cx && a.intrinsics.cy == b.intrinsics.cy &&
           a.intrinsics.width == b.intrinsics.width && a.intrinsics.height == b.intrinsics.height;
  }
};

inline std::string encode_manifest(std::span<const FrameEntry> frames) {
  std::string out = "# frame_id basis_path keypoint_path fx fy cx cy W H\n";
  for (const auto& f : frames) {
    if (f.basis_path.find_first_of(" \t\n") != std::string::npos ||
        f.keypoint_path.find_first_of(" \t\n") != std::string::npos)
      throw DomainError("manifest: paths must not contain whitespace");
    const Intrinsics& k = f.intrinsics;
    out += std::to_string(f.frame_id) + " " + f.basis_path + " " + f.keypoint_path + " " +
           detail::format_number(k.fx) + " " + detail::format_number(k.fy) + " " + detail::format_number(k.cx) + " " +
           detail::format_number(k.cy) + " " + std::to_string(k.width) + " " + std::to_string(k.height) + "\n";
  }
  return out;
}

inline std::vector<FrameEntry> decode_manifest(std::string_view text, const std::string& name = "<manifest>") {
  detail::TextReader r(text, name);
  std::vector<FrameEntry> out;
  while (auto tok = r.next(true)) {
    if (tok->size() != 9) r.fail(FormatErrorKind::kParse, "expected 9 fields, got " + std::to_string(tok->size()));
    FrameEntry f;
    f.frame_id = r.number<int>((*tok)[0]);
    f.basis_path = std::string((*tok)[1]);
    f.keypoint_path = std::string((*tok)[2]);
    f.intrinsics = {r.number<double>((*tok)[3]), r.number<double>((*tok)[4]), r.number<double>((*tok)[5]),
                    r.number<double>((*tok)[6]), r.number<int>((*tok)[7]),    r.number<int>((*tok)[8])};
    if (!f.intrinsics.valid()) r.fail(FormatErrorKind::kRange, "intrinsics violate fx,fy > 0 and 0 < c < size");
    if (!out.empty() && f.frame_id <= out.back().frame_id)
      r.fail(FormatErrorKind::kValidation, "frame ids must be strictly increasing");
    out.push_back(std::move(f));
  }
  if (out.empty()) throw FormatError(FormatErrorKind::kValidation, name + ": manifest lists no frames");
  return out;
}

// ---------------------------------------------------------------- PLY

struct Rgb {
  std::uint8_t r = 128, g = 128, b = 128;
};

// One vertex per stride-th pixel (flattened per frame) of each frame's depth
// grid, backprojected and moved to world coordinates. colors, when given,
// holds one entry per grid pixel per frame.
inline std::string encode_ply(std::span<const RigidPose> poses, std::span<const DepthMap> depths,
                              const DepthCamera& cam, int stride = 1,
                              std::span<const std::vector<Rgb>> colors = {}) {
  if (stride < 1) throw DomainError("export_ply: stride must be positive");
  if (poses.size() != depths.size()) throw DimensionError("export_ply: one depth map per pose required");
  if (!colors.empty() && colors.size() != poses.size()) throw DimensionError("export_ply: one color set per frame");
  std::string body;
  long count = 0;
  for (size_t f = 0; f < poses.size(); ++f) {
    if (depths[f].size() != cam.pixel_count()) throw DimensionError("export_ply: depth map does not match grid");
    if (!colors.empty() && static_cast<Eigen::Index>(colors[f].size()) != cam.pixel_count())
      throw DimensionError("export_ply: color map does not match grid");
    for (Eigen::Index p = 0; p < cam.pixel_count(); p += stride) {
      const Vec3 x = poses[f].apply(depths[f](p) * cam.node_ray(p));
      for (int a = 0; a < 3; ++a) detail::put_f32(body, static_cast<float>(x(a)));
      const Rgb c = colors.empty() ? Rgb{} : colors[f][static_cast<size_t>(p)];
      body.push_back(static_cast<char>(c.r));
      body.push_back(static_cast<char>(c.g));
      body.push_back(static_cast<char>(c.b));
      ++count;
    }
  }
  std::string out = "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(count) +
                    "\nproperty float x\nproperty float y\nproperty float z\n"
                    "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  return out + body;
}

inline void export_ply(const fs::path& path, std::span<const RigidPose> poses, std::span<const DepthMap> depths,
                       const DepthCamera& cam, int stride = 1, std::span<const std::vector<Rgb>> colors = {}) {
  write_file(path, encode_ply(poses, depths, cam, stride, colors));
}

struct PlyVertex {
  Eigen::Vector3f position;
  Rgb color;
};

// Reader for the vertex layout written above.
inline std::vector<PlyVertex> decode_ply(std::string_view bytes, const std::string& name = "<ply>") {
  const std::string_view end_tag = "end_header\n";
  const size_t end = bytes.find(end_tag);
  if (bytes.substr(0, 4) != "ply\n" || end == std::string_view::npos)
    throw FormatError(FormatErrorKind::kBadMagic, name + ": not a PLY file");
  detail::TextReader r(bytes.substr(0, end), name);
  long count = -1;
  bool binary_le = false;
  std::vector<std::string> props;
  while (auto tok = r.next()) {
    if ((*tok)[0] == "format" && tok->size() == 3) binary_le = (*tok)[1] == "binary_little_endian";
    if ((*tok)[0] == "element" && tok->size() == 3 && (*tok)[1] == "vertex") count = r.number<long>((*tok)[2]);
    if ((*tok)[0] == "property" && tok->size() == 3) props.emplace_back((*tok)[2]);
  }
  const std::vector<std::string> expected{"x", "y", "z", "red", "green", "blue"};
  if (!binary_le || count < 0 || props != expected)
    throw FormatError(FormatErrorKind::kValidation, name + ": unsupported PLY layout");
  const size_t begin = end + end_tag.size();
  detail::check_payload(bytes, begin, 15 * static_cast<std::uint64_t>(count), name);
  std::vector<PlyVertex> out(static_cast<size_t>(count));
  for (long v = 0; v < count; ++v) {
    const size_t off = begin + 15 * static_cast<size_t>(v);
    auto& vert = out[static_cast<size_t>(v)];
    for (int a = 0; a < 3; ++a) vert.position(a) = detail::get_f32(bytes, off + 4 * static_cast<size_t>(a));
    vert.color = {static_cast<std::uint8_t>(bytes[off + 12]), static_cast<std::uint8_t>(bytes[off + 13]),
                  static_cast<std::uint8_t>(bytes[off + 14])};
  }
  return out;
}

}  // namespace ridgesfm
