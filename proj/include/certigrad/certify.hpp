#pragma once

// Rank-1 extraction, certificate tests and the suboptimality gap.

#include "certigrad/common.hpp"
#include "certigrad/qcqp.hpp"
#include "certigrad/sdp.hpp"

#include <functional>
#include <optional>
#include <string_view>

namespace certigrad {

enum class Verdict { TightCertified, TightUncertified, NotTight };

std::string_view to_string(Verdict v);

struct CertifyOptions {
  double ratio_threshold = 1e5;
  double psd_tol = 1e-7;
  double stat_tol = 1e-6;
  double corank_gap = 1e-6;
  // Newton refinement of (x, lambda) on the QCQP KKT system after extraction.
  bool polish = true;
};

/// lambda_1(X) / lambda_2(X); +inf when lambda_2 <= 1e-300.
double tightness_ratio(const Matrix& x);

struct Rank1Extraction {
  bool tight = false;
  double ratio = 0.0;
  Vector x;  // set only when tight; x_h == 1
};

/// Throws HomogeneousEntryZero when the leading factor has |x_h| < 1e-8.
Rank1Extraction extract_rank1(const Matrix& X, Index homog_index, double ratio_threshold = 1e5);

struct CertificateFlags {
  bool psd_ok = false;
  bool stationarity_ok = false;
  bool corank1_ok = false;
  double min_eig = 0.0;
  double second_eig = 0.0;
  double stationarity_residual = 0.0;  // ||H x||

  bool all() const { return psd_ok && stationarity_ok && corank1_ok; }
};

CertificateFlags certificate_check(const Matrix& H, const Vector& x, const CertifyOptions& tols = {});

/// (<Q, x x^T> - <Q, X>) / <Q, X>. Throws DivisionByZero when <Q, X> == 0.
double suboptimality_gap(const Matrix& Q, const Vector& xhat, const Matrix& X);

struct CertifiedSolution {
  Vector x;
  Vector lambda;  // multipliers behind the certificate (SDP multipliers, corrected when polished)
  Matrix H;       // certificate_matrix(q, lambda)
  bool polished = false;
  double tightness_ratio = 0.0;
  double certificate_min_eig = 0.0;
  double certificate_second_eig = 0.0;
  double stationarity_residual = 0.0;
  Verdict verdict = Verdict::NotTight;
  CertificateFlags flags;
  std::optional<double> suboptimality;  // only on the rounding path
};

struct PolishResult {
  Vector x;
  Vector lambda;
  bool accepted = false;
  double kkt_residual = 0.0;
};

/// Newton iterations on [H_r x; (x^T A_i x - b_i) / 2] over an independent constraint subset,
/// then the smallest multiplier correction restoring H(lambda) x = 0 (dropped if it lowers the
/// smallest eigenvalue of H). Rejected (accepted = false) when x moves by more than 1e-3 ||x||.
PolishResult polish_kkt(const HomQCQP& q, const Vector& x, const Vector& lambda);

/// Maps a non-tight X to a feasible point of the QCQP.
using RoundingHook = std::function<Vector(const HomQCQP&, const Matrix&)>;

struct PipelineResult {
  SDPPrimalDual sdp;
  CertifiedSolution solution;
};

/// Certifies an existing primal-dual bundle.
CertifiedSolution certify_solution(const HomQCQP& q, const SDPPrimalDual& sdp, const CertifyOptions& opts = {},
                                   const RoundingHook& rounding = {});

/// Relax, solve, extract and certify. Solver failures throw SolverFailure.
PipelineResult solve_and_certify(const HomQCQP& q, const SdpOptions& sdp_opts = {},
                                 const CertifyOptions& opts = {}, const RoundingHook& rounding = {});

}  // namespace certigrad
