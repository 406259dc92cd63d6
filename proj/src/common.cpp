#include "cpfusion/common.hpp"

#include <cstdlib>

#include <spdlog/spdlog.h>

namespace cpfusion {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::ConfigError: return "ConfigError";
    case Errc::Io: return "Io";
    case Errc::ParseError: return "ParseError";
    case Errc::BadStartBytes: return "BadStartBytes";
    case Errc::CrcMismatch: return "CrcMismatch";
    case Errc::Truncated: return "Truncated";
    case Errc::UnknownFunctionCode: return "UnknownFunctionCode";
    case Errc::MalformedObjectHeader: return "MalformedObjectHeader";
    case Errc::UnsortedInput: return "UnsortedInput";
    case Errc::MissingWindows: return "MissingWindows";
    case Errc::ColumnNotFound: return "ColumnNotFound";
    case Errc::ColumnMismatch: return "ColumnMismatch";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::TooFewRows: return "TooFewRows";
    case Errc::SingleClassTraining: return "SingleClassTraining";
    case Errc::SingleClassSeed: return "SingleClassSeed";
    case Errc::EmptyUnlabeled: return "EmptyUnlabeled";
    case Errc::FoldTooSmall: return "FoldTooSmall";
    case Errc::KOutOfRange: return "KOutOfRange";
    case Errc::SingleCluster: return "SingleCluster";
    case Errc::NonFiniteInput: return "NonFiniteInput";
    case Errc::NonFiniteFeature: return "NonFiniteFeature";
    case Errc::DegenerateMatrix: return "DegenerateMatrix";
    case Errc::ConstantColumn: return "ConstantColumn";
    case Errc::PerplexityTooLarge: return "PerplexityTooLarge";
    case Errc::ZeroMean: return "ZeroMean";
  }
  return "Unknown";
}

ErrorCategory errc_category(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidArgument:
    case Errc::ConfigError:
      return ErrorCategory::Config;
    case Errc::NonFiniteInput:
    case Errc::NonFiniteFeature:
    case Errc::DegenerateMatrix:
    case Errc::ConstantColumn:
    case Errc::PerplexityTooLarge:
    case Errc::ZeroMean:
      return ErrorCategory::Numeric;
    default:
      return ErrorCategory::Data;
  }
}

void init_logging_from_env() {
  const char* level = std::getenv("CPFUSION_LOG");
  if (level == nullptr) {
    spdlog::set_level(spdlog::level::warn);
    return;
  }
  spdlog::set_level(spdlog::level::from_str(level));
}

}  // namespace cpfusion
