#pragma once

#include <stdexcept>
#include <string>

namespace depthflow {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Mismatched vector or matrix dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Depth value (or other argument) outside the admissible domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// The integrated state became non-finite.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, double depth)
      : Error(what), depth_(depth) {}
  double depth() const noexcept { return depth_; }

 private:
  double depth_;
};

/// The adaptive step size collapsed below the allowed minimum.
class StiffnessError : public Error {
 public:
  StiffnessError(const std::string& what, double depth)
      : Error(what), depth_(depth) {}
  double depth() const noexcept { return depth_; }

 private:
  double depth_;
};

/// Invalid experiment configuration; `path` names the offending field.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& path, const std::string& message)
      : Error(path.empty() ? message : path + ": " + message), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace depthflow
