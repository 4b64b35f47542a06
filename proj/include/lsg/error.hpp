#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace lsg {

/// Base exception for the library. `code()` is a stable machine-readable
/// category that the CLI forwards verbatim in its error JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& msg) : Error("shape_error", msg) {}
};

struct IndexError : Error {
  explicit IndexError(const std::string& msg) : Error("index_error", msg) {}
};

struct ValueError : Error {
  explicit ValueError(const std::string& msg) : Error("value_error", msg) {}
};

struct IoError : Error {
  explicit IoError(const std::string& msg) : Error("io_error", msg) {}
};

struct FormatError : Error {
  explicit FormatError(const std::string& msg) : Error("format_error", msg) {}
};

struct DivergenceError : Error {
  explicit DivergenceError(const std::string& msg) : Error("divergence", msg) {}
};

}  // namespace lsg
