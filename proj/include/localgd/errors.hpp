#pragma once

#include <memory>
#include <stdexcept>
#include <string>

namespace localgd {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed arguments: dimension mismatch, empty client, bad config values.
struct InputError : Error {
  using Error::Error;
};

/// Argument outside the representable domain of a special function.
struct DomainError : Error {
  using Error::Error;
};

struct FormatError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

struct SeparabilityError : Error {
  using Error::Error;
};

/// Antipodal client directions (c <= -1) make the GF constants undefined.
struct DegenerateGeometryError : Error {
  using Error::Error;
};

/// A check was requested on a run that does not carry the needed trace fields.
struct CapabilityError : Error {
  using Error::Error;
};

class NumericConvergenceError : public Error {
 public:
  NumericConvergenceError(const std::string& what, double last_estimate)
      : Error(what), last_estimate_(last_estimate) {}
  double last_estimate() const noexcept { return last_estimate_; }

 private:
  double last_estimate_;
};

struct RunResult;

/// Non-finite iterate. Carries the round index and the trace recorded up to it.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int round, std::shared_ptr<const RunResult> partial)
      : Error(what), round_(round), partial_(std::move(partial)) {}
  int round() const noexcept { return round_; }
  const std::shared_ptr<const RunResult>& partial() const noexcept { return partial_; }

 private:
  int round_;
  std::shared_ptr<const RunResult> partial_;
};

}  // namespace localgd
