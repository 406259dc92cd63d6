#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace cpfusion {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Microseconds since the Unix epoch. Every timestamp in the library uses it.
using TimestampUs = std::int64_t;

enum class Errc {
  // usage / configuration
  InvalidArgument,
  ConfigError,
  // data
  Io,
  ParseError,
  BadStartBytes,
  CrcMismatch,
  Truncated,
  UnknownFunctionCode,
  MalformedObjectHeader,
  UnsortedInput,
  MissingWindows,
  ColumnNotFound,
  ColumnMismatch,
  LengthMismatch,
  ShapeMismatch,
  TooFewRows,
  SingleClassTraining,
  SingleClassSeed,
  EmptyUnlabeled,
  FoldTooSmall,
  KOutOfRange,
  SingleCluster,
  // numeric
  NonFiniteInput,
  NonFiniteFeature,
  DegenerateMatrix,
  ConstantColumn,
  PerplexityTooLarge,
  ZeroMean,
};

enum class ErrorCategory { Config, Data, Numeric };

std::string_view errc_name(Errc code) noexcept;
ErrorCategory errc_category(Errc code) noexcept;

/// Library-wide exception. `detail` carries the error's numeric payload:
/// the line number of a ParseError, the block index of a CrcMismatch
/// (-1 for the header block), the raw value of an UnknownFunctionCode.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what, std::int64_t detail = 0)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what),
        code_(code),
        detail_(detail) {}

  Errc code() const noexcept { return code_; }
  std::int64_t detail() const noexcept { return detail_; }
  ErrorCategory category() const noexcept { return errc_category(code_); }

 private:
  Errc code_;
  std::int64_t detail_;
};

/// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Applies the log level named by CPFUSION_LOG (trace|debug|info|warn|error|off).
void init_logging_from_env();

}  // namespace cpfusion
