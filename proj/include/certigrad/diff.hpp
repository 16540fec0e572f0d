#pragma once

// Backward passes from dl/dx to dl/d(Q, A_1..A_m) at a certified QCQP optimum.
//
// KKT residual F(x, lambda; Q, A) = [2 H x; x^T A_i x (retained i); x^T A_0 x - 1].
// IS solves min ||M_r^T y - (g; 0)|| with M_r = 2 [[H, G^T], [G_r, 0]] and returns -N^T y.
// CIFT recomputes multipliers on the retained rows and solves the square system.

#include "certigrad/certify.hpp"
#include "certigrad/common.hpp"
#include "certigrad/qcqp.hpp"
#include "certigrad/symlin.hpp"

#include <functional>
#include <string_view>
#include <vector>

namespace certigrad {

enum class BackpropMethod { IS, CIFT };

std::string_view to_string(BackpropMethod m);

struct BackpropOptions {
  double atol = 1e-10;
  double btol = 1e-10;
  Index max_iter = 0;  // 0 selects 10 * (n + m)
  double damp = 0.0;
  double rank_tol = 1e-8;
  double stat_tol = 1e-6;  // relative to 1 + ||H||_F
  bool fully_reduced_kkt = false;
};

struct GradientReport {
  Matrix grad_Q;
  std::vector<Matrix> grad_A;
  BackpropMethod method = BackpropMethod::IS;
  Index lsqr_iters = 0;
  double lsqr_residual = 0.0;
  symlin::LsqrStatus lsqr_status = symlin::LsqrStatus::ZeroSolution;

  Vector vec() const { return vectorize_params(grad_Q, grad_A); }
};

struct KKTWorkspace {
  Matrix H;
  Matrix G;  // (m + 1) x n, homogenizing row last
  std::vector<Index> independent_rows;
  Vector x;
  Vector lambda;        // m + 1, lambda_0 last
  Vector lambda_prime;  // lambda without lambda_0

  Index dim() const { return x.size(); }
  Index constraint_count() const { return lambda_prime.size(); }
};

/// Throws NotStationary when ||H x|| exceeds stat_tol * (1 + ||H||_F).
KKTWorkspace make_kkt_workspace(const HomQCQP& q, const Vector& x, const Vector& lambda,
                                const BackpropOptions& opts = {});

/// grad_Q = sym(2 y_x x^T); grad_A_i = sym(2 lambda'_i y_x x^T + y_g,i x x^T) over `rows`,
/// where y = (y_x, y_g for each retained constraint row, y_h).
struct NAdjoint {
  Matrix grad_Q;
  std::vector<Matrix> grad_A;
};

NAdjoint apply_N_adjoint(const Vector& x, const Vector& lambda_prime, const Vector& y,
                         const std::vector<Index>& retained_constraints);

/// Dense N over (stationarity rows, retained constraint rows, homogenizing row) acting on
/// full column-major vec(Q, A_1..A_m). Test oracle and small-problem utility.
Matrix assemble_N(const Vector& x, const Vector& lambda_prime, const std::vector<Index>& retained_constraints);

GradientReport backprop_is(const KKTWorkspace& ws, const Vector& incoming, const BackpropOptions& opts = {});

/// Throws MultiplierResidualTooLarge when the recomputed multipliers leave
/// ||H_r x|| above stat_tol * (1 + ||H_r||_F).
GradientReport backprop_cift(const HomQCQP& q, const Vector& x, const Vector& incoming,
                             const BackpropOptions& opts = {});

/// Jacobian dx/dtheta (n x d) assembled row by row from one-hot backprops.
Matrix jacobian_is(const HomQCQP& q, const KKTWorkspace& ws, const BackpropOptions& opts = {});
Matrix jacobian_cift(const HomQCQP& q, const Vector& x, const BackpropOptions& opts = {});

/// Central differences (f(theta + h_k e_k) - f(theta - h_k e_k)) / (2 h_k), h_k = h (1 + |theta_k|).
Matrix central_difference(const std::function<Vector(const Vector&)>& f, const Vector& theta, double h);

using ParamMap = std::function<HomQCQP(const Vector&)>;

/// FD Jacobian of the certified solution x(theta). Any perturbed solve that is not
/// TightCertified raises TightnessLostUnderPerturbation naming the parameter.
Matrix fd_jacobian_oracle(const ParamMap& param_map, const Vector& theta, double h = 1e-5,
                          const SdpOptions& sdp_opts = {}, const CertifyOptions& cert_opts = {});

/// Certified solution x(theta); throws TightnessLost when the pipeline does not certify.
Vector certified_solve(const HomQCQP& q, const SdpOptions& sdp_opts = {}, const CertifyOptions& cert_opts = {});

}  // namespace certigrad
