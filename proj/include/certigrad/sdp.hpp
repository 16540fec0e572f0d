#pragma once

// Dense primal-dual interior-point solver for standard-form SDPs
//
//   min <C, X>  s.t.  <A_i, X> = b_i,  X >= 0
//   max b^T y   s.t.  S = C - sum_i y_i A_i >= 0
//
// and the Shor relaxation of a HomQCQP expressed in that form.

#include "certigrad/common.hpp"
#include "certigrad/qcqp.hpp"

#include <string_view>
#include <vector>

namespace certigrad {

enum class SdpStatus { Optimal, MaxIter, NumericalFailure, Infeasible, Unbounded };

std::string_view to_string(SdpStatus s);

struct SdpOptions {
  double tol = 1e-12;         // interior-point stopping tolerance on all three residuals
  Index max_iter = 100;
  double step_fraction = 0.98;
  double dependence_tol = 1e-10;
  double optimal_tol = 1e-9;  // residual threshold for reporting Optimal
};

struct SdpResiduals {
  double primal = 0.0;  // ||A(X) - b|| / (1 + ||b||)
  double dual = 0.0;    // max(0, -lambda_min(C - A^*(y))) / (1 + ||C||_F)
  double gap = 0.0;     // |<C,X> - b^T y| / (1 + |<C,X>|)
};

struct SdpProblem {
  Matrix c;
  std::vector<Matrix> a;
  Vector b;
};

struct SdpSolution {
  Matrix x;
  Vector y;
  Matrix s;  // recomputed as C - sum y_i A_i
  SdpStatus status = SdpStatus::NumericalFailure;
  SdpResiduals residuals;
  Index iterations = 0;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
};

SdpResiduals sdp_residuals(const SdpProblem& p, const Matrix& x, const Vector& y);

/// Linearly dependent equality rows are dropped before solving and their
/// multipliers restored as zero; an inconsistent right-hand side yields Infeasible.
SdpSolution solve_standard_sdp(const SdpProblem& p, const SdpOptions& opts = {});

struct ShorSDP {
  Index dim = 0;
  Index homog_index = 0;
  Matrix cost;
  std::vector<Matrix> constraints;  // A_1..A_m, then A_0
  Vector rhs;                       // zeros, then 1

  SdpProblem standard_form() const { return {cost, constraints, rhs}; }
};

ShorSDP build_shor_relaxation(const HomQCQP& q);

struct SDPPrimalDual {
  Matrix X;
  Vector lambda;  // (lambda_1..lambda_m, lambda_0), lambda = -y
  Matrix H;       // C + sum lambda_i A_i, always recomputed
  SdpStatus status = SdpStatus::NumericalFailure;
  SdpResiduals residuals;
  Index iterations = 0;
  double primal_objective = 0.0;
  double dual_objective = 0.0;
};

SDPPrimalDual solve_sdp(const ShorSDP& sdp, const SdpOptions& opts = {});

/// Accepts a primal-dual pair from elsewhere; status follows the same residual thresholds.
SDPPrimalDual inject_external_solution(const ShorSDP& sdp, const Matrix& X, const Vector& lambda,
                                       double optimal_tol = 1e-9);

}  // namespace certigrad
