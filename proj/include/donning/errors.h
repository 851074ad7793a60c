#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace donning {

// Base for every error raised by the library. Callers that only need to
// report a failure can catch this one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateGeometryError : public Error {
 public:
  using Error::Error;
};

class TopologyError : public Error {
 public:
  using Error::Error;
};

class UnreachableVertexError : public Error {
 public:
  UnreachableVertexError(const std::string& what, std::vector<int> vertices)
      : Error(what), vertices_(std::move(vertices)) {}
  const std::vector<int>& vertices() const { return vertices_; }

 private:
  std::vector<int> vertices_;
};

class LimitViolationError : public Error {
 public:
  LimitViolationError(const std::string& what, int dof) : Error(what), dof_(dof) {}
  int dof() const { return dof_; }

 private:
  int dof_;
};

class InvalidActionError : public Error {
 public:
  using Error::Error;
};

class SolverDivergenceError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ObservationError : public Error {
 public:
  using Error::Error;
};

class IncompatibleCheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace donning
