#include "certigrad/sdp.hpp"

#include "certigrad/symlin.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>

namespace certigrad {

std::string_view to_string(SdpStatus s) {
  switch (s) {
    case SdpStatus::Optimal: return "Optimal";
    case SdpStatus::MaxIter: return "MaxIter";
    case SdpStatus::NumericalFailure: return "NumericalFailure";
    case SdpStatus::Infeasible: return "Infeasible";
    case SdpStatus::Unbounded: return "Unbounded";
  }
  return "Unknown";
}

namespace {

double inner(const Matrix& a, const Matrix& b) { return a.cwiseProduct(b).sum(); }

Vector apply_a(const std::vector<Matrix>& a, const Matrix& x) {
  Vector out(static_cast<Index>(a.size()));
  for (size_t i = 0; i < a.size(); ++i) out(static_cast<Index>(i)) = inner(a[i], x);
  return out;
}

Matrix apply_a_adjoint(const std::vector<Matrix>& a, const Vector& y, Index n) {
  Matrix out = Matrix::Zero(n, n);
  for (size_t i = 0; i < a.size(); ++i) out += y(static_cast<Index>(i)) * a[i];
  return out;
}

void validate(const SdpProblem& p) {
  const Index n = p.c.rows();
  require_dims(n > 0 && p.c.cols() == n, "sdp: cost must be square and nonempty");
  require_dims(static_cast<Index>(p.a.size()) == p.b.size(), "sdp: one rhs entry per constraint");
  for (const auto& a : p.a) require_dims(a.rows() == n && a.cols() == n, "sdp: constraint dimension mismatch");
}

// Largest alpha in (0, 1] keeping D + alpha * dX PSD, scaled by the step fraction.
double step_length(const Vector& d, const Matrix& dx, double fraction) {
  const Vector isd = d.cwiseSqrt().cwiseInverse();
  const Matrix t = isd.asDiagonal() * dx * isd.asDiagonal();
  const double lmin = symlin::sym_eigenvalues_ascending(symmetrized(t))(0);
  if (lmin >= 0.0) return 1.0;
  return std::min(1.0, fraction * (-1.0 / lmin));
}

struct Direction {
  Matrix dx;  // scaled
  Matrix ds;  // scaled
  Vector dy;
};

}  // namespace

SdpResiduals sdp_residuals(const SdpProblem& p, const Matrix& x, const Vector& y) {
  SdpResiduals r;
  const Index n = p.c.rows();
  r.primal = (apply_a(p.a, x) - p.b).norm() / (1.0 + p.b.norm());
  const Matrix h = symmetrized(p.c - apply_a_adjoint(p.a, y, n));
  const double lmin = symlin::sym_eigenvalues_ascending(h)(0);
  r.dual = std::max(0.0, -lmin) / (1.0 + p.c.norm());
  const double pobj = inner(p.c, x);
  r.gap = std::abs(pobj - p.b.dot(y)) / (1.0 + std::abs(pobj));
  return r;
}

namespace {

SdpSolution solve_reduced(const SdpProblem& p, const SdpOptions& opts) {
  const Index n = p.c.rows();
  const Index m = static_cast<Index>(p.a.size());
  const double cnorm = p.c.norm();
  const double bnorm = p.b.norm();
  const double tau = 1.0 + cnorm;

  // X is carried as a factor X = F F^T so that a nearly rank-deficient X is never refactored.
  Matrix f = std::sqrt(tau) * Matrix::Identity(n, n);
  Matrix x = f * f.transpose();
  Matrix s = tau * Matrix::Identity(n, n);
  Vector y = Vector::Zero(m);

  SdpSolution out;
  out.status = SdpStatus::MaxIter;
  Index stalls = 0;
  // Iterate with the smallest worst-case residual; returned when the loop ends without converging.
  Matrix best_f = f;
  Vector best_y = y;
  double best_score = std::numeric_limits<double>::infinity();

  for (Index it = 0; it <= opts.max_iter; ++it) {
    out.iterations = it;
    x = symmetrized(f * f.transpose());
    const Vector rp = p.b - apply_a(p.a, x);
    const Matrix rd = p.c - s - apply_a_adjoint(p.a, y, n);
    const double pobj = inner(p.c, x);
    const double dobj = p.b.dot(y);
    const double rel_p = rp.norm() / (1.0 + bnorm);
    const double rel_d = rd.norm() / (1.0 + cnorm);
    const double rel_gap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj));
    if (rel_p <= opts.tol && rel_d <= opts.tol && rel_gap <= opts.tol) {
      out.status = SdpStatus::Optimal;
      break;
    }
    const double score = std::max({rel_p, rel_d, rel_gap});
    if (score < best_score) {
      best_score = score;
      best_f = f;
      best_y = y;
    }
    if (x.norm() > 1e12) {
      out.status = SdpStatus::Unbounded;
      break;
    }
    if (y.norm() > 1e12 || s.norm() > 1e12) {
      out.status = SdpStatus::Infeasible;
      break;
    }
    if (it == opts.max_iter) break;

    // Nesterov-Todd scaling: X = G D G^T, S = G^-T D G^-1 with F^T S F = U D^2 U^T, G = F U D^-1/2.
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrized(f.transpose() * s * f));
    if (es.info() != Eigen::Success || !(es.eigenvalues()(n - 1) > 0.0)) {
      out.status = SdpStatus::NumericalFailure;
      break;
    }
    // Rounding can push the smallest eigenvalues of F^T S F to or below zero near convergence.
    const double eig_floor = 1e-30 * es.eigenvalues()(n - 1);
    const Vector d = es.eigenvalues().cwiseMax(eig_floor).cwiseSqrt();
    const Matrix g = f * es.eigenvectors() * d.cwiseSqrt().cwiseInverse().asDiagonal();

    std::vector<Matrix> at(static_cast<size_t>(m));
    for (Index i = 0; i < m; ++i) {
      at[static_cast<size_t>(i)] = symmetrized(g.transpose() * p.a[static_cast<size_t>(i)] * g);
    }
    Matrix schur(m, m);
    for (Index i = 0; i < m; ++i) {
      for (Index j = i; j < m; ++j) {
        schur(i, j) = schur(j, i) = inner(at[static_cast<size_t>(i)], at[static_cast<size_t>(j)]);
      }
    }
    Eigen::LDLT<Matrix> schur_llt(schur);
    if (schur_llt.info() != Eigen::Success) {
      out.status = SdpStatus::NumericalFailure;
      break;
    }
    const Matrix rd_t = symmetrized(g.transpose() * rd * g);
    const double mu = d.squaredNorm() / static_cast<double>(n);

    Matrix denom(n, n);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < n; ++j) denom(i, j) = 0.5 * (d(i) + d(j));
    }

    auto solve_direction = [&](const Matrix& rc) {
      Direction dir;
      const Matrix pm = rc.cwiseQuotient(denom);
      dir.dy = schur_llt.solve(rp - apply_a(at, pm - rd_t));
      dir.ds = rd_t - apply_a_adjoint(at, dir.dy, n);
      dir.dx = pm - dir.ds;
      // Refine against the unscaled primal equation A(G dX G^T) = r_p; the scaled Schur system loses
      // accuracy as the spectrum of D spreads.
      for (int refine = 0; refine < 2; ++refine) {
        const Vector err = rp - apply_a(p.a, symmetrized(g * dir.dx * g.transpose()));
        const Vector ddy = schur_llt.solve(err);
        dir.dy += ddy;
        const Matrix dds = apply_a_adjoint(at, ddy, n);
        dir.ds -= dds;
        dir.dx += dds;
      }
      return dir;
    };

    const Matrix dmat = d.asDiagonal();
    const Matrix d2 = d.cwiseAbs2().asDiagonal();
    const Direction aff = solve_direction(-d2);
    const double ap_aff = step_length(d, aff.dx, 1.0);
    const double ad_aff = step_length(d, aff.ds, 1.0);
    const double mu_aff = inner(dmat + ap_aff * aff.dx, dmat + ad_aff * aff.ds) / static_cast<double>(n);
    const double sigma = std::clamp(std::pow(mu_aff / mu, 3.0), 0.0, 1.0);

    const Matrix second = symmetrized(aff.dx * aff.ds);
    const Direction dir = solve_direction(sigma * mu * Matrix::Identity(n, n) - d2 - second);
    double ap = step_length(d, dir.dx, opts.step_fraction);
    double ad = step_length(d, dir.ds, opts.step_fraction);

    // Primal update in scaled space: X+ = G (D + ap dX) G^T = (G K)(G K)^T.
    Eigen::LLT<Matrix> kf(symmetrized(dmat + ap * dir.dx));
    for (int back = 0; back < 30 && kf.info() != Eigen::Success; ++back) {
      ap *= 0.5;
      kf.compute(symmetrized(dmat + ap * dir.dx));
    }
    if (kf.info() != Eigen::Success) {
      out.status = SdpStatus::NumericalFailure;
      break;
    }
    f = g * Matrix(kf.matrixL());
    // The dual equation is linear, so the unscaled step is exact: dS = R_d - A^*(dy).
    const Matrix ds = rd - apply_a_adjoint(p.a, dir.dy, n);
    s = symmetrized(s + ad * ds);
    y += ad * dir.dy;

    stalls = (ap < 1e-10 && ad < 1e-10) ? stalls + 1 : 0;
    if (stalls >= 3) {
      out.status = SdpStatus::NumericalFailure;
      break;
    }
  }

  if (out.status != SdpStatus::Optimal) {
    f = best_f;
    y = best_y;
  }
  out.x = symmetrized(f * f.transpose());
  out.y = y;
  return out;
}

}  // namespace

SdpSolution solve_standard_sdp(const SdpProblem& p, const SdpOptions& opts) {
  validate(p);
  const Index n = p.c.rows();
  const Index m = static_cast<Index>(p.a.size());

  std::vector<Index> keep;
  if (m > 0) {
    Matrix rows(m, n * n);
    for (Index i = 0; i < m; ++i) rows.row(i) = p.a[static_cast<size_t>(i)].reshaped().transpose();
    if (rows.norm() > 0.0) keep = symlin::select_independent_rows(rows, opts.dependence_tol);
  }

  SdpProblem reduced{p.c, {}, Vector(static_cast<Index>(keep.size()))};
  for (size_t k = 0; k < keep.size(); ++k) {
    reduced.a.push_back(p.a[static_cast<size_t>(keep[k])]);
    reduced.b(static_cast<Index>(k)) = p.b(keep[k]);
  }

  SdpSolution out;
  if (static_cast<Index>(keep.size()) < m) {
    // Dropped rows must be consistent: b_dropped = coeffs * b_kept.
    Matrix kept_rows(n * n, static_cast<Index>(keep.size()));
    for (size_t k = 0; k < keep.size(); ++k) kept_rows.col(static_cast<Index>(k)) = reduced.a[k].reshaped();
    const auto qr = kept_rows.colPivHouseholderQr();
    for (Index i = 0; i < m; ++i) {
      if (std::binary_search(keep.begin(), keep.end(), i)) continue;
      const Vector coeff = qr.solve(Vector(p.a[static_cast<size_t>(i)].reshaped()));
      const double implied = coeff.dot(reduced.b);
      if (std::abs(implied - p.b(i)) > 1e-8 * (1.0 + std::abs(p.b(i)))) {
        out.x = Matrix::Zero(n, n);
        out.y = Vector::Zero(m);
        out.s = p.c;
        out.status = SdpStatus::Infeasible;
        out.residuals = sdp_residuals(p, out.x, out.y);
        return out;
      }
    }
  }

  const SdpSolution red = solve_reduced(reduced, opts);
  out.x = red.x;
  out.y = Vector::Zero(m);
  for (size_t k = 0; k < keep.size(); ++k) out.y(keep[k]) = red.y(static_cast<Index>(k));
  out.s = symmetrized(p.c - apply_a_adjoint(p.a, out.y, n));
  out.iterations = red.iterations;
  out.residuals = sdp_residuals(p, out.x, out.y);
  out.primal_objective = inner(p.c, out.x);
  out.dual_objective = p.b.dot(out.y);
  const bool within = out.residuals.primal <= opts.optimal_tol && out.residuals.dual <= opts.optimal_tol &&
                      out.residuals.gap <= opts.optimal_tol;
  if (red.status == SdpStatus::Optimal || red.status == SdpStatus::MaxIter ||
      red.status == SdpStatus::NumericalFailure) {
    out.status = within ? SdpStatus::Optimal : (red.status == SdpStatus::Optimal ? SdpStatus::MaxIter : red.status);
  } else {
    out.status = red.status;
  }
  return out;
}

ShorSDP build_shor_relaxation(const HomQCQP& q) {
  ShorSDP sdp;
  sdp.dim = q.dim();
  sdp.homog_index = q.homog_index();
  sdp.cost = q.cost_dense();
  sdp.constraints = q.constraints_dense();
  sdp.constraints.push_back(q.homog_dense());
  sdp.rhs = Vector::Zero(q.constraint_count() + 1);
  sdp.rhs(q.constraint_count()) = 1.0;
  return sdp;
}

namespace {

SDPPrimalDual to_primal_dual(const ShorSDP& sdp, const Matrix& x, const Vector& lambda) {
  SDPPrimalDual out;
  out.X = x;
  out.lambda = lambda;
  out.H = sdp.cost;
  for (size_t i = 0; i < sdp.constraints.size(); ++i) out.H += lambda(static_cast<Index>(i)) * sdp.constraints[i];
  out.H = symmetrized(out.H);
  out.residuals = sdp_residuals(sdp.standard_form(), x, -lambda);
  out.primal_objective = inner(sdp.cost, x);
  out.dual_objective = -sdp.rhs.dot(lambda);
  return out;
}

}  // namespace

SDPPrimalDual solve_sdp(const ShorSDP& sdp, const SdpOptions& opts) {
  const SdpSolution sol = solve_standard_sdp(sdp.standard_form(), opts);
  SDPPrimalDual out = to_primal_dual(sdp, sol.x, -sol.y);
  out.status = sol.status;
  out.iterations = sol.iterations;
  return out;
}

SDPPrimalDual inject_external_solution(const ShorSDP& sdp, const Matrix& X, const Vector& lambda,
                                       double optimal_tol) {
  require_dims(X.rows() == sdp.dim && X.cols() == sdp.dim, "inject_external_solution: X must be n x n");
  require_dims(lambda.size() == static_cast<Index>(sdp.constraints.size()),
               "inject_external_solution: expected m + 1 multipliers");
  SDPPrimalDual out = to_primal_dual(sdp, symmetrized(X), lambda);
  const bool psd_ok = symlin::sym_eigenvalues_ascending(out.X)(0) >= -1e-9 * std::max(1.0, symlin::spectral_norm(out.X));
  const bool within = out.residuals.primal <= optimal_tol && out.residuals.dual <= optimal_tol &&
                      out.residuals.gap <= optimal_tol;
  out.status = within && psd_ok ? SdpStatus::Optimal : SdpStatus::NumericalFailure;
  return out;
}

}  // namespace certigrad
