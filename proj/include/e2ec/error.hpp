#pragma once

#include <stdexcept>
#include <string>

namespace e2ec {

enum class Errc {
  zero_area,
  start_off_boundary,
  no_intersection,
  dimension_mismatch,
  center_outside,
  length_mismatch,
  index_out_of_range,
  kernel_too_wide,
  stale_cache,
  generation_exhausted,
  divergence_detected,
  config_error,
  parse_error,
  io_error,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::zero_area: return "ZeroArea";
    case Errc::start_off_boundary: return "StartOffBoundary";
    case Errc::no_intersection: return "NoIntersection";
    case Errc::dimension_mismatch: return "DimensionMismatch";
    case Errc::center_outside: return "CenterOutside";
    case Errc::length_mismatch: return "LengthMismatch";
    case Errc::index_out_of_range: return "IndexOutOfRange";
    case Errc::kernel_too_wide: return "KernelTooWide";
    case Errc::stale_cache: return "StaleCache";
    case Errc::generation_exhausted: return "GenerationExhausted";
    case Errc::divergence_detected: return "DivergenceDetected";
    case Errc::config_error: return "ConfigError";
    case Errc::parse_error: return "ParseError";
    case Errc::io_error: return "IoError";
  }
  return "UnknownError";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

}  // namespace e2ec
