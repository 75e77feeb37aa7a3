#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gpia {

enum class Errc {
  missing_file,
  ragged_attributes,
  edge_out_of_range,
  parse_error,
  invalid_argument,
  empty_graph,
  isolated_start,
  non_finite_loss,
  dimension_mismatch,
  single_class,
  mixed_references,
  config,
  io,
  phase_failure,
};

constexpr std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::missing_file: return "missing file";
    case Errc::ragged_attributes: return "ragged attributes";
    case Errc::edge_out_of_range: return "edge endpoint out of range";
    case Errc::parse_error: return "parse error";
    case Errc::invalid_argument: return "invalid argument";
    case Errc::empty_graph: return "empty graph";
    case Errc::isolated_start: return "isolated start node";
    case Errc::non_finite_loss: return "non-finite loss";
    case Errc::dimension_mismatch: return "dimension mismatch";
    case Errc::single_class: return "single-class training set";
    case Errc::mixed_references: return "mixed references";
    case Errc::config: return "config error";
    case Errc::io: return "i/o error";
    case Errc::phase_failure: return "phase failure";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + (detail.empty() ? "" : ": " + detail)),
        code_(code) {}

  [[nodiscard]] Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& detail = {}) { throw Error(code, detail); }

inline void require(bool condition, Errc code, std::string_view detail = {}) {
  if (!condition) [[unlikely]] fail(code, std::string(detail));
}

}  // namespace gpia
