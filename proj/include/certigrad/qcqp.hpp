#pragma once

// Parameterized homogenized QCQPs:
//
//   min  x^T Q x   s.t.  x^T A_i x = 0 (i = 1..m),   x^T A_0 x = 1,
//
// with A_0 = e_h e_h^T. Multipliers and constraint-gradient rows are ordered
// (A_1, ..., A_m, A_0): the homogenizing entry is always last.

#include "certigrad/common.hpp"

#include <vector>

namespace certigrad {

struct Triplet {
  Index row = 0;
  Index col = 0;
  double value = 0.0;
};

/// Sparse symmetric matrix stored as upper-triangle triplets, with an optional
/// affine sensitivity: d S / d theta_k is itself a symmetric triplet list.
class ParamSymMatrix {
 public:
  ParamSymMatrix() = default;
  /// Triplets may address either triangle; they are mirrored to the upper
  /// triangle, duplicates are summed and the list is sorted row-major.
  ParamSymMatrix(Index dim, std::vector<Triplet> entries,
                 std::vector<std::vector<Triplet>> sensitivity = {});

  static ParamSymMatrix from_dense(const Matrix& s, double drop_tol = 0.0);
  static ParamSymMatrix zero(Index dim) { return ParamSymMatrix(dim, {}); }

  Index dim() const { return dim_; }
  const std::vector<Triplet>& entries() const { return entries_; }
  const std::vector<std::vector<Triplet>>& sensitivity() const { return sensitivity_; }
  Index param_count() const { return static_cast<Index>(sensitivity_.size()); }

  Matrix dense() const;
  Matrix sensitivity_dense(Index k) const;
  /// <G, dS/dtheta_k> for every parameter k.
  Vector sensitivity_adjoint(const Matrix& g) const;
  /// <G, S> without materializing S.
  double frobenius_with(const Matrix& g) const;
  bool is_zero() const { return entries_.empty(); }

 private:
  Index dim_ = 0;
  std::vector<Triplet> entries_;
  std::vector<std::vector<Triplet>> sensitivity_;
};

std::vector<Triplet> normalize_triplets(Index dim, std::vector<Triplet> entries);

class HomQCQP {
 public:
  HomQCQP() = default;

  Index dim() const { return dim_; }
  Index homog_index() const { return homog_index_; }
  Index constraint_count() const { return static_cast<Index>(constraints_.size()); }
  Index param_count() const;

  const ParamSymMatrix& cost() const { return cost_; }
  const std::vector<ParamSymMatrix>& constraints() const { return constraints_; }
  const ParamSymMatrix& homog_constraint() const { return homog_; }
  const std::vector<bool>& redundant_flags() const { return redundant_; }

  const Matrix& cost_dense() const { return cost_dense_; }
  const std::vector<Matrix>& constraints_dense() const { return constraints_dense_; }
  Matrix homog_dense() const { return homog_.dense(); }

  /// Chains gradients w.r.t. (Q, A_1..A_m) through the parameter sensitivities.
  Vector chain_to_params(const Matrix& grad_q, const std::vector<Matrix>& grad_a) const;

  /// Same problem with extra constraints appended (sensitivities empty).
  HomQCQP with_constraints(const std::vector<ParamSymMatrix>& extra, bool redundant) const;

 private:
  friend HomQCQP build_hom_qcqp(ParamSymMatrix, std::vector<ParamSymMatrix>, Index, std::vector<bool>);

  Index dim_ = 0;
  Index homog_index_ = 0;
  ParamSymMatrix cost_;
  std::vector<ParamSymMatrix> constraints_;
  ParamSymMatrix homog_;
  std::vector<bool> redundant_;
  Matrix cost_dense_;
  std::vector<Matrix> constraints_dense_;
};

/// Appends A_0 = e_h e_h^T automatically. A user constraint that is itself a
/// multiple of e_h e_h^T is rejected with DuplicateHomogenizing.
HomQCQP build_hom_qcqp(ParamSymMatrix cost, std::vector<ParamSymMatrix> constraints, Index homog_index,
                       std::vector<bool> redundant_flags = {});

struct ObjectiveResiduals {
  double objective = 0.0;
  Vector residuals;  // m + 1 entries, homogenizing residual last
};

ObjectiveResiduals eval_objective_and_residuals(const HomQCQP& q, const Vector& x);

/// Rows (A_1 x)^T, ..., (A_m x)^T, (A_0 x)^T.
Matrix constraint_gradients(const HomQCQP& q, const Vector& x);

/// H = Q + sum_i lambda_i A_i + lambda_0 A_0 with lambda ordered (lambda_1..lambda_m, lambda_0).
Matrix certificate_matrix(const HomQCQP& q, const Vector& lambda);

/// Full column-major vectorization [vec(Q); vec(A_1); ...; vec(A_m)].
Vector vectorize_params(const HomQCQP& q);
Vector vectorize_params(const Matrix& q, const std::vector<Matrix>& a);

struct UnvectorizedParams {
  Matrix cost;
  std::vector<Matrix> constraints;
};

UnvectorizedParams unvectorize_params(const Vector& nu, Index dim, Index constraint_count);

}  // namespace certigrad
