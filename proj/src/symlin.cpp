#include "certigrad/symlin.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

namespace certigrad {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DegenerateInput: return "DegenerateInput";
    case ErrorCode::DuplicateHomogenizing: return "DuplicateHomogenizing";
    case ErrorCode::NumericalFailure: return "NumericalFailure";
    case ErrorCode::HomogeneousEntryZero: return "HomogeneousEntryZero";
    case ErrorCode::DivisionByZero: return "DivisionByZero";
    case ErrorCode::NotStationary: return "NotStationary";
    case ErrorCode::LsqrDiverged: return "LSQRDiverged";
    case ErrorCode::MultiplierResidualTooLarge: return "MultiplierResidualTooLarge";
    case ErrorCode::TightnessLostUnderPerturbation: return "TightnessLostUnderPerturbation";
    case ErrorCode::TightnessLost: return "TightnessLost";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::SolverFailure: return "SolverFailure";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::ZeroDisparity: return "ZeroDisparity";
    case ErrorCode::TooFewLandmarks: return "TooFewLandmarks";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

namespace symlin {

std::string_view to_string(LsqrStatus s) {
  switch (s) {
    case LsqrStatus::ZeroSolution: return "ZeroSolution";
    case LsqrStatus::ConsistentSolution: return "ConsistentSolution";
    case LsqrStatus::LeastSquaresSolution: return "LeastSquaresSolution";
    case LsqrStatus::ConditionLimit: return "ConditionLimit";
    case LsqrStatus::IterationLimit: return "IterationLimit";
  }
  return "Unknown";
}

LinearOperator LinearOperator::from_dense(Matrix a) {
  LinearOperator op;
  op.rows = a.rows();
  op.cols = a.cols();
  auto shared = std::make_shared<const Matrix>(std::move(a));
  op.apply = [shared](const Vector& v) -> Vector { return (*shared) * v; };
  op.apply_adjoint = [shared](const Vector& v) -> Vector { return shared->transpose() * v; };
  return op;
}

LinearOperator LinearOperator::identity(Index n) {
  LinearOperator op;
  op.rows = n;
  op.cols = n;
  op.apply = [](const Vector& v) { return v; };
  op.apply_adjoint = [](const Vector& v) { return v; };
  return op;
}

namespace {

struct Givens {
  double c, s, r;
};

double sign_of(double v) { return v < 0.0 ? -1.0 : 1.0; }

Givens sym_ortho(double a, double b) {
  if (b == 0.0) return {sign_of(a), 0.0, std::abs(a)};
  if (a == 0.0) return {0.0, sign_of(b), std::abs(b)};
  if (std::abs(b) > std::abs(a)) {
    const double tau = a / b;
    const double s = sign_of(b) / std::sqrt(1.0 + tau * tau);
    const double c = s * tau;
    return {c, s, b / s};
  }
  const double tau = b / a;
  const double c = sign_of(a) / std::sqrt(1.0 + tau * tau);
  const double s = c * tau;
  return {c, s, a / c};
}

}  // namespace

LsqrResult lsqr_solve(const LinearOperator& op, const Vector& rhs, const LsqrOptions& opts) {
  require_dims(rhs.size() == op.rows, "lsqr_solve: rhs length does not match operator rows");
  if (!(opts.atol > 0.0) || !(opts.btol > 0.0)) {
    throw Error(ErrorCode::DegenerateInput, "lsqr_solve: atol and btol must be positive");
  }
  const Index n = op.cols;
  const Index max_iter = opts.max_iter > 0 ? opts.max_iter : 4 * n;
  const double eps = std::numeric_limits<double>::epsilon();
  const double damp = opts.damp;
  const double ctol = opts.conlim > 0.0 ? 1.0 / opts.conlim : 0.0;

  LsqrResult out;
  out.x = Vector::Zero(n);

  Vector u = rhs;
  double beta = u.norm();
  Vector v = Vector::Zero(n);
  double alpha = 0.0;
  if (beta > 0.0) {
    u /= beta;
    v = op.apply_adjoint(u);
    alpha = v.norm();
  }
  if (alpha > 0.0) v /= alpha;

  Vector w = v;
  double rhobar = alpha;
  double phibar = beta;
  const double bnorm = beta;
  double anorm = 0.0, acond = 0.0, ddnorm = 0.0, res2 = 0.0, xxnorm = 0.0, z = 0.0;
  double cs2 = -1.0, sn2 = 0.0;
  double rnorm = beta;
  double arnorm = alpha * beta;
  double xnorm = 0.0;

  if (arnorm == 0.0) {
    out.status = LsqrStatus::ZeroSolution;
    out.residual_norm = rnorm;
    return out;
  }

  int istop = 0;
  Index itn = 0;
  while (itn < max_iter) {
    ++itn;
    u = op.apply(v) - alpha * u;
    beta = u.norm();
    if (beta > 0.0) {
      u /= beta;
      anorm = std::sqrt(anorm * anorm + alpha * alpha + beta * beta + damp * damp);
      v = op.apply_adjoint(u) - beta * v;
      alpha = v.norm();
      if (alpha > 0.0) v /= alpha;
    }

    double rhobar1 = rhobar;
    double psi = 0.0;
    if (damp > 0.0) {
      rhobar1 = std::hypot(rhobar, damp);
      const double cs1 = rhobar / rhobar1;
      const double sn1 = damp / rhobar1;
      psi = sn1 * phibar;
      phibar = cs1 * phibar;
    }

    const Givens g = sym_ortho(rhobar1, beta);
    const double cs = g.c, sn = g.s, rho = g.r;
    const double theta = sn * alpha;
    rhobar = -cs * alpha;
    const double phi = cs * phibar;
    phibar = sn * phibar;
    const double tau = sn * phi;

    const double t1 = phi / rho;
    const double t2 = -theta / rho;
    ddnorm += (w / rho).squaredNorm();
    out.x += t1 * w;
    w = v + t2 * w;

    const double delta = sn2 * rho;
    const double gambar = -cs2 * rho;
    const double rhs_z = phi - delta * z;
    const double zbar = rhs_z / gambar;
    xnorm = std::sqrt(xxnorm + zbar * zbar);
    const double gamma = std::hypot(gambar, theta);
    cs2 = gambar / gamma;
    sn2 = theta / gamma;
    z = rhs_z / gamma;
    xxnorm += z * z;

    acond = anorm * std::sqrt(ddnorm);
    res2 += psi * psi;
    rnorm = std::sqrt(phibar * phibar + res2);
    arnorm = alpha * std::abs(tau);

    const double test1 = rnorm / bnorm;
    const double test2 = arnorm / (anorm * rnorm + eps);
    const double test3 = 1.0 / (acond + eps);
    const double t1_scaled = test1 / (1.0 + anorm * xnorm / bnorm);
    const double rtol = opts.btol + opts.atol * anorm * xnorm / bnorm;

    if (itn >= max_iter) istop = 7;
    if (1.0 + test3 <= 1.0) istop = 6;
    if (1.0 + test2 <= 1.0) istop = 5;
    if (1.0 + t1_scaled <= 1.0) istop = 4;
    if (test3 <= ctol) istop = 3;
    if (test2 <= opts.atol) istop = 2;
    if (test1 <= rtol) istop = 1;
    if (istop != 0) break;
  }

  switch (istop) {
    case 1:
    case 4: out.status = LsqrStatus::ConsistentSolution; break;
    case 2:
    case 5: out.status = LsqrStatus::LeastSquaresSolution; break;
    case 3:
    case 6: out.status = LsqrStatus::ConditionLimit; break;
    default: out.status = LsqrStatus::IterationLimit; break;
  }
  out.iterations = itn;
  out.residual_norm = rnorm;
  out.normal_residual_norm = arnorm;
  out.operator_norm_estimate = anorm;
  out.condition_estimate = acond;
  return out;
}

EigDecomp sym_eig(const Matrix& s) {
  require_dims(s.rows() == s.cols(), "sym_eig: matrix must be square");
  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  if (es.info() != Eigen::Success) {
    throw Error(ErrorCode::NumericalFailure, "sym_eig: eigendecomposition did not converge");
  }
  EigDecomp out;
  out.eigenvalues = es.eigenvalues().reverse();
  out.eigenvectors = es.eigenvectors().rowwise().reverse();
  return out;
}

Vector sym_eigenvalues_ascending(const Matrix& s) {
  require_dims(s.rows() == s.cols(), "sym_eigenvalues: matrix must be square");
  Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    throw Error(ErrorCode::NumericalFailure, "sym_eigenvalues: eigendecomposition did not converge");
  }
  return es.eigenvalues();
}

double spectral_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(a);
  return svd.singularValues()(0);
}

std::vector<Index> select_independent_rows(const Matrix& g, double tol, std::optional<Index> keep_row) {
  if (g.rows() == 0 || g.cols() == 0) {
    throw Error(ErrorCode::DegenerateInput, "select_independent_rows: empty matrix");
  }
  if (!(tol > 0.0)) throw Error(ErrorCode::DegenerateInput, "select_independent_rows: tol must be positive");
  const double gnorm = spectral_norm(g);
  if (gnorm == 0.0) throw Error(ErrorCode::DegenerateInput, "select_independent_rows: matrix is all zero");
  if (keep_row && (*keep_row < 0 || *keep_row >= g.rows())) {
    throw Error(ErrorCode::DimensionMismatch, "select_independent_rows: keep_row out of range");
  }
  const double threshold = tol * gnorm;

  // Candidate rows, with the kept row projected out when present.
  std::vector<Index> candidates;
  for (Index i = 0; i < g.rows(); ++i) {
    if (!keep_row || i != *keep_row) candidates.push_back(i);
  }
  Matrix cols(g.cols(), static_cast<Index>(candidates.size()));
  for (Index k = 0; k < cols.cols(); ++k) cols.col(k) = g.row(candidates[k]).transpose();

  std::vector<Index> chosen;
  if (keep_row) {
    chosen.push_back(*keep_row);
    const Vector q = g.row(*keep_row).transpose();
    const double qq = q.squaredNorm();
    if (qq > 0.0) cols -= q * ((q.transpose() * cols) / qq);
  }

  if (cols.cols() > 0) {
    Eigen::ColPivHouseholderQR<Matrix> qr(cols);
    const Index diag = std::min(cols.rows(), cols.cols());
    const auto& perm = qr.colsPermutation().indices();
    for (Index k = 0; k < diag; ++k) {
      if (std::abs(qr.matrixQR()(k, k)) <= threshold) break;
      chosen.push_back(candidates[perm(k)]);
    }
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

}  // namespace symlin
}  // namespace certigrad
