#pragma once

#include <stdexcept>
#include <string>

namespace gkmvlp {

// Input data breaks a record, prompt or manifest invariant.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A configuration value is out of range or inconsistent with another one.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shapes or masks make an operation undefined.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A metric has no defined value for the given input (e.g. AUROC on one class).
class UndefinedMetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a NaN or Inf.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gkmvlp
