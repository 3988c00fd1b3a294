#pragma once

#include <stdexcept>
#include <string>

namespace ridgesfm {

// Invalid numeric input (nonpositive depth, bad config value, ...).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Sizes that do not agree (code length vs K, resolution mismatch, ...).
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Degenerate geometric configuration for an estimator.
class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class FormatErrorKind {
  kIo,
  kBadMagic,
  kTruncated,
  kParse,
  kNonFinite,
  kRange,
  kValidation,
};

inline const char* to_string(FormatErrorKind kind) {
  switch (kind) {
    case FormatErrorKind::kIo: return "io error";
    case FormatErrorKind::kBadMagic: return "bad magic";
    case FormatErrorKind::kTruncated: return "truncated payload";
    case FormatErrorKind::kParse: return "parse error";
    case FormatErrorKind::kNonFinite: return "non-finite value";
    case FormatErrorKind::kRange: return "range violation";
    case FormatErrorKind::kValidation: return "validation error";
  }
  return "unknown";
}

// Raised by the file loaders. The message always carries the file path and
// a line number or byte offset.
class FormatError : public std::runtime_error {
 public:
  FormatError(FormatErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  FormatErrorKind kind() const noexcept { return kind_; }

 private:
  FormatErrorKind kind_;
};

}  // namespace ridgesfm
