#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace shica {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file contents (bad magic, truncated payload, bad JSON layout).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Values that are structurally valid but unusable (NaN/Inf, too few samples).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Inconsistent dimensions between views or operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// A factorization or iteration failed (non-SPD pencil, failed bracketing).
/// Pipelines tag the error with the stage that raised it.
class NumericalError : public Error {
 public:
  using Error::Error;

  const std::string& stage() const noexcept { return stage_; }
  void set_stage(std::string stage) {
    if (stage_.empty()) stage_ = std::move(stage);
  }

 private:
  std::string stage_;
};

/// Runs f(), tagging any NumericalError with `stage` before rethrowing it.
template <class F>
decltype(auto) in_stage(const char* stage, F&& f) {
  try {
    return f();
  } catch (NumericalError& e) {
    e.set_stage(stage);
    throw;
  }
}

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The scaling fixed point hit a zero denominator for one component.
class DegenerateScaleError : public NumericalError {
 public:
  DegenerateScaleError(std::size_t view, std::size_t component)
      : NumericalError("degenerate scale update for view " + std::to_string(view) +
                       ", component " + std::to_string(component)),
        view_(view),
        component_(component) {}

  std::size_t view() const noexcept { return view_; }
  std::size_t component() const noexcept { return component_; }

 private:
  std::size_t view_;
  std::size_t component_;
};

}  // namespace shica
