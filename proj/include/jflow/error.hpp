#pragma once

#include <stdexcept>
#include <string>

namespace jflow {

/// A form that must be positive definite (or invertible) was not.
class SingularFormError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Dimension or degree mismatch between operands.
class ShapeError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// NaN/Inf appeared during a numerical iteration.
class NumericalFailure : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid input data (configs, lattice files, field files).
class InputError : public std::runtime_error {
public:
  InputError(std::string path, const std::string& what)
      : std::runtime_error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

private:
  std::string path_;
};

}  // namespace jflow
