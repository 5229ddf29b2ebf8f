#ifndef FLUIDSFORMER_ERRORS_HPP_
#define FLUIDSFORMER_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace fluidsformer {

/// Base for all library errors. `code()` is a short machine-readable tag
/// that the CLI prints alongside the message.
class Error : public std::runtime_error {
public:
  Error(std::string code, const std::string &what)
      : std::runtime_error(what), code_(std::move(code)) {}
  const std::string &code() const noexcept { return code_; }

private:
  std::string code_;
};

struct ShapeError : Error {
  explicit ShapeError(const std::string &what) : Error("shape", what) {}
};

struct DimensionMismatch : Error {
  explicit DimensionMismatch(const std::string &what)
      : Error("dimension_mismatch", what) {}
};

struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string &what)
      : Error("invalid_argument", what) {}
};

struct IntegrityError : Error {
  explicit IntegrityError(const std::string &what)
      : Error("integrity", what) {}
};

struct VersionError : Error {
  explicit VersionError(const std::string &what) : Error("version", what) {}
};

struct IoError : Error {
  explicit IoError(const std::string &what) : Error("io", what) {}
};

struct ConvergenceError : Error {
  explicit ConvergenceError(const std::string &what)
      : Error("convergence", what) {}
};

struct NumericalError : Error {
  explicit NumericalError(const std::string &what) : Error("nan", what) {}
};

} // namespace fluidsformer

#endif // FLUIDSFORMER_ERRORS_HPP_
