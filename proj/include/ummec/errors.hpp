#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ummec {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
public:
  using Error::Error;
};

/// An episode whose labels cannot support the requested computation
/// (for example a class without support samples).
class InvalidEpisode : public Error {
public:
  using Error::Error;
};

/// Embedding state violated an invariant, e.g. a row left the unit sphere.
class InvalidState : public Error {
public:
  using Error::Error;
};

/// The request cannot be served from the available data.
class InvalidRequest : public Error {
public:
  using Error::Error;
};

class Diverged : public Error {
public:
  Diverged(int step, const std::string& what)
      : Error("diverged at step " + std::to_string(step) + ": " + what), step_(step) {}
  int step() const noexcept { return step_; }

private:
  int step_;
};

class NumericalUnderflow : public Error {
public:
  using Error::Error;
};

class DegenerateClass : public Error {
public:
  DegenerateClass(std::size_t cls, const std::string& what)
      : Error(what), cls_(cls) {}
  std::size_t class_index() const noexcept { return cls_; }

private:
  std::size_t cls_;
};

class IoError : public Error {
public:
  using Error::Error;
};

enum class FormatErrc {
  malformed_header,
  dimension_mismatch,
  bad_value,
  non_finite,
  bad_magic,
  unsupported_version,
  truncated,
  trailing_data,
};

const char* to_string(FormatErrc code) noexcept;

/// Feature file parse failure. `line()` is 1-based for CSV input and 0
/// when the error has no line (binary input).
class FormatError : public Error {
public:
  FormatError(FormatErrc code, const std::string& detail, std::size_t line = 0);
  FormatErrc code() const noexcept { return code_; }
  std::size_t line() const noexcept { return line_; }

private:
  FormatErrc code_;
  std::size_t line_;
};

} // namespace ummec
