#pragma once

#include <stdexcept>
#include <string>

namespace cmf {

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Point configuration too degenerate to define a rotation (collinear,
/// near-zero spread, or a reflective solution on rank-deficient input).
class DegenerateGeometry : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operation called in the wrong lifecycle state (e.g. backward before forward).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, int epoch)
      : std::runtime_error(what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

/// Statistical test not defined on the given data (e.g. all differences zero).
class UndefinedTest : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cmf
