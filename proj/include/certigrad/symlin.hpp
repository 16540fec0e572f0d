#pragma once

// Small dense linear-algebra kernels shared by the solver and the
// differentiation engines: matrix-free operators, LSQR, symmetric
// eigendecomposition and rank-revealing row selection.

#include "certigrad/common.hpp"

#include <functional>
#include <optional>
#include <string_view>
#include <vector>

namespace certigrad::symlin {

/// Matrix-free linear map R^cols -> R^rows together with its adjoint.
struct LinearOperator {
  Index rows = 0;
  Index cols = 0;
  std::function<Vector(const Vector&)> apply;
  std::function<Vector(const Vector&)> apply_adjoint;

  static LinearOperator from_dense(Matrix a);
  static LinearOperator identity(Index n);
};

enum class LsqrStatus {
  ZeroSolution,          // rhs = 0, x = 0 is exact
  ConsistentSolution,    // ||r|| small: Ax = b solved to atol/btol
  LeastSquaresSolution,  // ||A^T r|| small: least-squares optimum found
  ConditionLimit,        // cond(A) estimate exceeded conlim
  IterationLimit,
};

std::string_view to_string(LsqrStatus s);

struct LsqrOptions {
  double atol = 1e-10;
  double btol = 1e-10;
  double conlim = 1e14;
  double damp = 0.0;
  Index max_iter = 0;  // 0 selects 4 * cols
};

struct LsqrResult {
  Vector x;
  LsqrStatus status = LsqrStatus::IterationLimit;
  Index iterations = 0;
  double residual_norm = 0.0;         // ||b - A x|| (damped form when damp > 0)
  double normal_residual_norm = 0.0;  // ||A^T r - damp^2 x||
  double operator_norm_estimate = 0.0;
  double condition_estimate = 0.0;

  bool converged() const {
    return status == LsqrStatus::ZeroSolution || status == LsqrStatus::ConsistentSolution ||
           status == LsqrStatus::LeastSquaresSolution;
  }
};

/// Paige-Saunders LSQR for min ||A x - b||^2 + damp^2 ||x||^2.
/// Reaching max_iter is reported through the status, not thrown.
LsqrResult lsqr_solve(const LinearOperator& op, const Vector& rhs, const LsqrOptions& opts = {});

struct EigDecomp {
  Vector eigenvalues;  // descending
  Matrix eigenvectors;  // columns, orthonormal, matching eigenvalues
};

EigDecomp sym_eig(const Matrix& s);
Vector sym_eigenvalues_ascending(const Matrix& s);

double spectral_norm(const Matrix& a);

/// Maximal set of linearly independent rows of `g`, found by column-pivoted QR
/// of g^T. A pivot is accepted while its magnitude exceeds tol * ||g||_2.
/// When `keep_row` is given that row is placed first and always retained.
/// Returned indices are sorted ascending.
std::vector<Index> select_independent_rows(const Matrix& g, double tol = 1e-8,
                                           std::optional<Index> keep_row = std::nullopt);

}  // namespace certigrad::symlin
