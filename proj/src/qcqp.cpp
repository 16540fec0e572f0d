#include "certigrad/qcqp.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>

namespace certigrad {

std::vector<Triplet> normalize_triplets(Index dim, std::vector<Triplet> entries) {
  std::map<std::pair<Index, Index>, double> acc;
  for (const Triplet& t : entries) {
    if (t.row < 0 || t.col < 0 || t.row >= dim || t.col >= dim) {
      throw Error(ErrorCode::DimensionMismatch, "triplet (" + std::to_string(t.row) + ", " +
                                                    std::to_string(t.col) + ") outside a " +
                                                    std::to_string(dim) + "x" + std::to_string(dim) + " matrix");
    }
    const Index r = std::min(t.row, t.col);
    const Index c = std::max(t.row, t.col);
    acc[{r, c}] += t.value;
  }
  std::vector<Triplet> out;
  out.reserve(acc.size());
  for (const auto& [rc, v] : acc) {
    if (v != 0.0) out.push_back({rc.first, rc.second, v});
  }
  return out;
}

namespace {

void add_triplets(Matrix& m, const std::vector<Triplet>& ts) {
  for (const Triplet& t : ts) {
    m(t.row, t.col) += t.value;
    if (t.row != t.col) m(t.col, t.row) += t.value;
  }
}

double frobenius(const Matrix& g, const std::vector<Triplet>& ts) {
  double s = 0.0;
  for (const Triplet& t : ts) {
    s += t.row == t.col ? t.value * g(t.row, t.col) : t.value * (g(t.row, t.col) + g(t.col, t.row));
  }
  return s;
}

}  // namespace

ParamSymMatrix::ParamSymMatrix(Index dim, std::vector<Triplet> entries, std::vector<std::vector<Triplet>> sensitivity)
    : dim_(dim) {
  if (dim < 0) throw Error(ErrorCode::DimensionMismatch, "negative matrix dimension");
  entries_ = normalize_triplets(dim, std::move(entries));
  sensitivity_.reserve(sensitivity.size());
  for (auto& s : sensitivity) sensitivity_.push_back(normalize_triplets(dim, std::move(s)));
}

ParamSymMatrix ParamSymMatrix::from_dense(const Matrix& s, double drop_tol) {
  require_dims(s.rows() == s.cols(), "ParamSymMatrix::from_dense: matrix must be square");
  std::vector<Triplet> ts;
  for (Index c = 0; c < s.cols(); ++c) {
    for (Index r = 0; r <= c; ++r) {
      const double v = r == c ? s(r, c) : 0.5 * (s(r, c) + s(c, r));
      if (std::abs(v) > drop_tol) ts.push_back({r, c, v});
    }
  }
  return ParamSymMatrix(s.rows(), std::move(ts));
}

Matrix ParamSymMatrix::dense() const {
  Matrix m = Matrix::Zero(dim_, dim_);
  add_triplets(m, entries_);
  return m;
}

Matrix ParamSymMatrix::sensitivity_dense(Index k) const {
  Matrix m = Matrix::Zero(dim_, dim_);
  if (k < param_count()) add_triplets(m, sensitivity_[static_cast<size_t>(k)]);
  return m;
}

Vector ParamSymMatrix::sensitivity_adjoint(const Matrix& g) const {
  Vector out(param_count());
  for (Index k = 0; k < param_count(); ++k) out(k) = frobenius(g, sensitivity_[static_cast<size_t>(k)]);
  return out;
}

double ParamSymMatrix::frobenius_with(const Matrix& g) const { return frobenius(g, entries_); }

Index HomQCQP::param_count() const {
  Index p = cost_.param_count();
  for (const auto& a : constraints_) p = std::max(p, a.param_count());
  return p;
}

Vector HomQCQP::chain_to_params(const Matrix& grad_q, const std::vector<Matrix>& grad_a) const {
  require_dims(static_cast<Index>(grad_a.size()) == constraint_count(),
               "chain_to_params: one gradient per constraint expected");
  Vector out = Vector::Zero(param_count());
  const Vector gq = cost_.sensitivity_adjoint(grad_q);
  out.head(gq.size()) += gq;
  for (size_t i = 0; i < constraints_.size(); ++i) {
    const Vector ga = constraints_[i].sensitivity_adjoint(grad_a[i]);
    out.head(ga.size()) += ga;
  }
  return out;
}

HomQCQP HomQCQP::with_constraints(const std::vector<ParamSymMatrix>& extra, bool redundant) const {
  std::vector<ParamSymMatrix> cons = constraints_;
  std::vector<bool> flags = redundant_;
  for (const auto& a : extra) {
    cons.push_back(a);
    flags.push_back(redundant);
  }
  return build_hom_qcqp(cost_, std::move(cons), homog_index_, std::move(flags));
}

HomQCQP build_hom_qcqp(ParamSymMatrix cost, std::vector<ParamSymMatrix> constraints, Index homog_index,
                       std::vector<bool> redundant_flags) {
  const Index n = cost.dim();
  require_dims(n > 0, "build_hom_qcqp: empty cost matrix");
  require_dims(homog_index >= 0 && homog_index < n, "build_hom_qcqp: homogenizing index out of range");
  for (size_t i = 0; i < constraints.size(); ++i) {
    require_dims(constraints[i].dim() == n, "build_hom_qcqp: constraint " + std::to_string(i) + " has dimension " +
                                                std::to_string(constraints[i].dim()) + ", cost has " +
                                                std::to_string(n));
    const auto& e = constraints[i].entries();
    if (e.size() == 1 && e[0].row == homog_index && e[0].col == homog_index) {
      throw Error(ErrorCode::DuplicateHomogenizing,
                  "constraint " + std::to_string(i) + " duplicates the homogenizing constraint (added automatically)");
    }
  }
  if (redundant_flags.empty()) redundant_flags.assign(constraints.size(), false);
  require_dims(redundant_flags.size() == constraints.size(), "build_hom_qcqp: one redundant flag per constraint");

  HomQCQP q;
  q.dim_ = n;
  q.homog_index_ = homog_index;
  q.cost_ = std::move(cost);
  q.constraints_ = std::move(constraints);
  q.homog_ = ParamSymMatrix(n, {{homog_index, homog_index, 1.0}});
  q.redundant_ = std::move(redundant_flags);
  q.cost_dense_ = q.cost_.dense();
  q.constraints_dense_.reserve(q.constraints_.size());
  for (const auto& a : q.constraints_) q.constraints_dense_.push_back(a.dense());
  return q;
}

ObjectiveResiduals eval_objective_and_residuals(const HomQCQP& q, const Vector& x) {
  require_dims(x.size() == q.dim(), "eval_objective_and_residuals: |x| != n");
  ObjectiveResiduals out;
  out.objective = x.dot(q.cost_dense() * x);
  const Index m = q.constraint_count();
  out.residuals.resize(m + 1);
  for (Index i = 0; i < m; ++i) out.residuals(i) = x.dot(q.constraints_dense()[static_cast<size_t>(i)] * x);
  const double xh = x(q.homog_index());
  out.residuals(m) = xh * xh - 1.0;
  return out;
}

Matrix constraint_gradients(const HomQCQP& q, const Vector& x) {
  require_dims(x.size() == q.dim(), "constraint_gradients: |x| != n");
  const Index m = q.constraint_count();
  Matrix g = Matrix::Zero(m + 1, q.dim());
  for (Index i = 0; i < m; ++i) g.row(i) = (q.constraints_dense()[static_cast<size_t>(i)] * x).transpose();
  g(m, q.homog_index()) = x(q.homog_index());
  return g;
}

Matrix certificate_matrix(const HomQCQP& q, const Vector& lambda) {
  const Index m = q.constraint_count();
  require_dims(lambda.size() == m + 1, "certificate_matrix: expected m + 1 multipliers");
  Matrix h = q.cost_dense();
  for (Index i = 0; i < m; ++i) h += lambda(i) * q.constraints_dense()[static_cast<size_t>(i)];
  h(q.homog_index(), q.homog_index()) += lambda(m);
  return h;
}

Vector vectorize_params(const Matrix& q, const std::vector<Matrix>& a) {
  const Index n = q.rows();
  const Index block = n * n;
  Vector nu(block * static_cast<Index>(a.size() + 1));
  nu.head(block) = q.reshaped();
  for (size_t i = 0; i < a.size(); ++i) {
    require_dims(a[i].rows() == n && a[i].cols() == n, "vectorize_params: dimension mismatch");
    nu.segment(block * static_cast<Index>(i + 1), block) = a[i].reshaped();
  }
  return nu;
}

Vector vectorize_params(const HomQCQP& q) { return vectorize_params(q.cost_dense(), q.constraints_dense()); }

UnvectorizedParams unvectorize_params(const Vector& nu, Index dim, Index constraint_count) {
  const Index block = dim * dim;
  require_dims(nu.size() == block * (constraint_count + 1), "unvectorize_params: length != (m+1) n^2");
  UnvectorizedParams out;
  out.cost = nu.head(block).reshaped(dim, dim);
  for (Index i = 0; i < constraint_count; ++i) {
    out.constraints.push_back(nu.segment(block * (i + 1), block).reshaped(dim, dim));
  }
  return out;
}

}  // namespace certigrad
