#pragma once

#include <stdexcept>
#include <string>

namespace tikzmcts {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

class InvalidConfig : public Error {
 public:
  using Error::Error;
};

/// Required external tooling (LaTeX engine, rasterizer) is missing or broken.
class EnvironmentError : public Error {
 public:
  using Error::Error;
};

/// Transport-level failure talking to a model server.
class GatewayError : public Error {
 public:
  GatewayError(const std::string& what, int retries)
      : Error(what + " (after " + std::to_string(retries) + " retries)"),
        retries_(retries) {}

  int retries() const { return retries_; }

 private:
  int retries_;
};

/// The peer answered, but not in the shape the wire protocol prescribes.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

class DegenerateEmbedding : public Error {
 public:
  using Error::Error;
};

/// Transportation solve failed; carries the worst marginal residual.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, double residual)
      : Error(what + " (residual " + std::to_string(residual) + ")"),
        residual_(residual) {}

  double residual() const { return residual_; }

 private:
  double residual_;
};

class UndefinedCorrelation : public Error {
 public:
  using Error::Error;
};

class DegeneratePca : public Error {
 public:
  using Error::Error;
};

}  // namespace tikzmcts
