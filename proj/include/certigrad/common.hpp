#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>
#include <string_view>

namespace certigrad {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class ErrorCode {
  DimensionMismatch,
  DegenerateInput,
  DuplicateHomogenizing,
  NumericalFailure,
  HomogeneousEntryZero,
  DivisionByZero,
  NotStationary,
  LsqrDiverged,
  MultiplierResidualTooLarge,
  TightnessLostUnderPerturbation,
  TightnessLost,
  InsufficientSamples,
  SolverFailure,
  BehindCamera,
  ZeroDisparity,
  TooFewLandmarks,
  DegenerateConfiguration,
  ParseError,
  ConfigError,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require_dims(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::DimensionMismatch, what);
}

inline Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace certigrad
