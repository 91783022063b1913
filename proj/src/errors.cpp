#include "ummec/errors.hpp"

namespace ummec {

const char* to_string(FormatErrc code) noexcept {
  switch (code) {
  case FormatErrc::malformed_header: return "malformed_header";
  case FormatErrc::dimension_mismatch: return "dimension_mismatch";
  case FormatErrc::bad_value: return "bad_value";
  case FormatErrc::non_finite: return "non_finite";
  case FormatErrc::bad_magic: return "bad_magic";
  case FormatErrc::unsupported_version: return "unsupported_version";
  case FormatErrc::truncated: return "truncated";
  case FormatErrc::trailing_data: return "trailing_data";
  }
  return "unknown";
}

namespace {
std::string format_message(FormatErrc code, const std::string& detail, std::size_t line) {
  std::string msg = to_string(code);
  if (line > 0) msg += " at line " + std::to_string(line);
  if (!detail.empty()) msg += ": " + detail;
  return msg;
}
} // namespace

FormatError::FormatError(FormatErrc code, const std::string& detail, std::size_t line)
    : Error(format_message(code, detail, line)), code_(code), line_(line) {}

} // namespace ummec
