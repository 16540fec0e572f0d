#include "certigrad/certify.hpp"

#include "certigrad/symlin.hpp"

#include <Eigen/LU>
#include <Eigen/QR>

#include <cmath>
#include <limits>
#include <string>

namespace certigrad {

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::TightCertified: return "TightCertified";
    case Verdict::TightUncertified: return "TightUncertified";
    case Verdict::NotTight: return "NotTight";
  }
  return "Unknown";
}

double tightness_ratio(const Matrix& x) {
  require_dims(x.rows() == x.cols() && x.rows() >= 2, "tightness_ratio: X must be square with n >= 2");
  const Vector ev = symlin::sym_eigenvalues_ascending(symmetrized(x));
  const double l1 = ev(ev.size() - 1);
  const double l2 = ev(ev.size() - 2);
  if (l2 <= 1e-300) return std::numeric_limits<double>::infinity();
  return l1 / l2;
}

Rank1Extraction extract_rank1(const Matrix& X, Index homog_index, double ratio_threshold) {
  require_dims(X.rows() == X.cols(), "extract_rank1: X must be square");
  require_dims(homog_index >= 0 && homog_index < X.rows(), "extract_rank1: homogenizing index out of range");
  Rank1Extraction out;
  if (X.rows() == 1) {
    out.ratio = std::numeric_limits<double>::infinity();
  } else {
    out.ratio = tightness_ratio(X);
  }
  if (!(out.ratio >= ratio_threshold)) return out;

  const symlin::EigDecomp eig = symlin::sym_eig(symmetrized(X));
  Vector x = std::sqrt(std::max(eig.eigenvalues(0), 0.0)) * eig.eigenvectors.col(0);
  const double xh = x(homog_index);
  if (std::abs(xh) < 1e-8) {
    throw Error(ErrorCode::HomogeneousEntryZero,
                "extract_rank1: homogenizing entry " + std::to_string(xh) + " of the leading factor is ~0");
  }
  if (xh < 0.0) x = -x;
  x /= std::abs(xh);
  x(homog_index) = 1.0;
  out.tight = true;
  out.x = x;
  return out;
}

CertificateFlags certificate_check(const Matrix& H, const Vector& x, const CertifyOptions& tols) {
  require_dims(H.rows() == H.cols() && H.rows() == x.size(), "certificate_check: H must be n x n with |x| = n");
  CertificateFlags f;
  const Vector ev = symlin::sym_eigenvalues_ascending(symmetrized(H));
  const double hnorm2 = std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
  f.min_eig = ev(0);
  f.second_eig = ev.size() > 1 ? ev(1) : std::numeric_limits<double>::infinity();
  f.stationarity_residual = (H * x).norm();
  f.psd_ok = f.min_eig >= -tols.psd_tol * (1.0 + hnorm2);
  f.stationarity_ok = f.stationarity_residual <= tols.stat_tol * (1.0 + H.norm());
  f.corank1_ok = std::abs(f.min_eig) <= tols.psd_tol * (1.0 + hnorm2) && f.second_eig >= tols.corank_gap * hnorm2;
  return f;
}

double suboptimality_gap(const Matrix& Q, const Vector& xhat, const Matrix& X) {
  require_dims(Q.rows() == X.rows() && Q.cols() == X.cols() && Q.rows() == xhat.size(),
               "suboptimality_gap: dimension mismatch");
  const double lower = Q.cwiseProduct(X).sum();
  if (lower == 0.0) throw Error(ErrorCode::DivisionByZero, "suboptimality_gap: <Q, X> is zero");
  return (xhat.dot(Q * xhat) - lower) / lower;
}

PolishResult polish_kkt(const HomQCQP& q, const Vector& x0, const Vector& lambda0) {
  const Index n = q.dim();
  const Index m = q.constraint_count();
  require_dims(x0.size() == n && lambda0.size() == m + 1, "polish_kkt: dimension mismatch");
  PolishResult out;
  out.x = x0;
  out.lambda = lambda0;

  const std::vector<Index> rows = symlin::select_independent_rows(constraint_gradients(q, x0), 1e-8, m);
  const Index r = static_cast<Index>(rows.size());
  auto constraint = [&](Index i) -> Matrix { return i == m ? q.homog_dense() : q.constraints_dense()[static_cast<size_t>(i)]; };
  std::vector<Matrix> a;
  Vector b = Vector::Zero(r);
  for (Index k = 0; k < r; ++k) {
    a.push_back(constraint(rows[static_cast<size_t>(k)]));
    if (rows[static_cast<size_t>(k)] == m) b(k) = 1.0;
  }
  const Matrix& qm = q.cost_dense();
  auto gradients = [&](const Vector& x) {
    Matrix g(r, n);
    for (Index k = 0; k < r; ++k) g.row(k) = (a[static_cast<size_t>(k)] * x).transpose();
    return g;
  };
  auto residual = [&](const Vector& x, const Vector& lr) {
    Vector f(n + r);
    f.head(n) = qm * x + gradients(x).transpose() * lr;
    for (Index k = 0; k < r; ++k) f(n + k) = 0.5 * (x.dot(a[static_cast<size_t>(k)] * x) - b(k));
    return f;
  };

  Vector x = x0;
  Vector lr = gradients(x).transpose().completeOrthogonalDecomposition().solve(-(qm * x));
  double fnorm = residual(x, lr).norm();
  for (int it = 0; it < 20; ++it) {
    Matrix hr = qm;
    for (Index k = 0; k < r; ++k) hr += lr(k) * a[static_cast<size_t>(k)];
    const Matrix g = gradients(x);
    Matrix jac = Matrix::Zero(n + r, n + r);
    jac.topLeftCorner(n, n) = hr;
    jac.topRightCorner(n, r) = g.transpose();
    jac.bottomLeftCorner(r, n) = g;
    const Vector step = jac.fullPivLu().solve(-residual(x, lr));
    if (!step.allFinite()) break;
    const Vector xn = x + step.head(n);
    const Vector ln = lr + step.tail(r);
    const double fn = residual(xn, ln).norm();
    if (!(fn < fnorm)) break;
    x = xn;
    lr = ln;
    fnorm = fn;
  }
  if ((x - x0).norm() > 1e-3 * x0.norm()) return out;

  x /= x(q.homog_index());
  // Smallest correction of the full multiplier vector with H(lambda) x = 0: G^T d = -H(lambda0) x.
  const Matrix gfull = constraint_gradients(q, x);
  const Vector hx = certificate_matrix(q, lambda0) * x;
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(gfull.transpose());
  cod.setThreshold(1e-8);
  const Vector delta = cod.solve(-hx);
  out.x = x;
  out.lambda = lambda0 + delta;
  // The correction must not cost PSD-ness; otherwise the SDP multipliers are kept.
  const Matrix h0 = symmetrized(certificate_matrix(q, lambda0));
  const Vector ev0 = symlin::sym_eigenvalues_ascending(h0);
  const Vector ev1 = symlin::sym_eigenvalues_ascending(symmetrized(certificate_matrix(q, out.lambda)));
  const double scale = 1.0 + std::max(std::abs(ev0(0)), std::abs(ev0(ev0.size() - 1)));
  if (!delta.allFinite() || ev1(0) < std::min(ev0(0), 0.0) - 1e-9 * scale) out.lambda = lambda0;
  out.accepted = true;
  out.kkt_residual = fnorm;
  return out;
}

CertifiedSolution certify_solution(const HomQCQP& q, const SDPPrimalDual& sdp, const CertifyOptions& opts,
                                   const RoundingHook& rounding) {
  CertifiedSolution sol;
  const Rank1Extraction ext = extract_rank1(sdp.X, q.homog_index(), opts.ratio_threshold);
  sol.tightness_ratio = ext.ratio;
  sol.lambda = sdp.lambda;
  sol.H = sdp.H;
  if (ext.tight) {
    sol.x = ext.x;
    if (opts.polish) {
      const PolishResult pr = polish_kkt(q, sol.x, sdp.lambda);
      if (pr.accepted) {
        sol.x = pr.x;
        sol.lambda = pr.lambda;
        sol.H = symmetrized(certificate_matrix(q, pr.lambda));
        sol.polished = true;
      }
    }
  } else if (rounding) {
    sol.x = rounding(q, sdp.X);
    sol.suboptimality = suboptimality_gap(q.cost_dense(), sol.x, sdp.X);
  } else {
    // Leading factor only as a diagnostic; not a QCQP solution.
    const symlin::EigDecomp eig = symlin::sym_eig(symmetrized(sdp.X));
    sol.x = std::sqrt(std::max(eig.eigenvalues(0), 0.0)) * eig.eigenvectors.col(0);
    const double xh = sol.x(q.homog_index());
    if (std::abs(xh) > 1e-8) sol.x /= xh;
  }
  sol.flags = certificate_check(sol.H, sol.x, opts);
  sol.certificate_min_eig = sol.flags.min_eig;
  sol.certificate_second_eig = sol.flags.second_eig;
  sol.stationarity_residual = sol.flags.stationarity_residual;
  if (!ext.tight) {
    sol.verdict = Verdict::NotTight;
  } else if (sol.flags.psd_ok && sol.flags.stationarity_ok) {
    sol.verdict = Verdict::TightCertified;
  } else {
    sol.verdict = Verdict::TightUncertified;
  }
  return sol;
}

PipelineResult solve_and_certify(const HomQCQP& q, const SdpOptions& sdp_opts, const CertifyOptions& opts,
                                 const RoundingHook& rounding) {
  PipelineResult out;
  out.sdp = solve_sdp(build_shor_relaxation(q), sdp_opts);
  if (out.sdp.status != SdpStatus::Optimal) {
    throw Error(ErrorCode::SolverFailure, std::string("SDP solve ended with status ") +
                                              std::string(to_string(out.sdp.status)));
  }
  out.solution = certify_solution(q, out.sdp, opts, rounding);
  return out;
}

}  // namespace certigrad
