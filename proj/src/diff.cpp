#include "certigrad/diff.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <string>

namespace certigrad {

std::string_view to_string(BackpropMethod m) { return m == BackpropMethod::IS ? "IS" : "CIFT"; }

KKTWorkspace make_kkt_workspace(const HomQCQP& q, const Vector& x, const Vector& lambda,
                                const BackpropOptions& opts) {
  require_dims(x.size() == q.dim(), "make_kkt_workspace: |x| != n");
  require_dims(lambda.size() == q.constraint_count() + 1, "make_kkt_workspace: expected m + 1 multipliers");
  KKTWorkspace ws;
  ws.x = x;
  ws.lambda = lambda;
  ws.lambda_prime = lambda.head(q.constraint_count());
  ws.H = certificate_matrix(q, lambda);
  const double res = (ws.H * x).norm();
  if (res > opts.stat_tol * (1.0 + ws.H.norm())) {
    throw Error(ErrorCode::NotStationary, "||H x|| = " + std::to_string(res) + " at the cached point");
  }
  ws.G = constraint_gradients(q, x);
  ws.independent_rows = symlin::select_independent_rows(ws.G, opts.rank_tol, q.constraint_count());
  return ws;
}

NAdjoint apply_N_adjoint(const Vector& x, const Vector& lambda_prime, const Vector& y,
                         const std::vector<Index>& retained_constraints) {
  const Index n = x.size();
  const Index m = lambda_prime.size();
  const Index r = static_cast<Index>(retained_constraints.size());
  require_dims(y.size() == n + r + 1, "apply_N_adjoint: y must have n + retained + 1 entries");
  const Vector yx = y.head(n);
  const Matrix yxx = yx * x.transpose();
  const Matrix sym_yxx = symmetrized(yxx);
  const Matrix xx = x * x.transpose();

  NAdjoint out;
  out.grad_Q = 2.0 * sym_yxx;
  out.grad_A.assign(static_cast<size_t>(m), Matrix::Zero(n, n));
  for (Index i = 0; i < m; ++i) out.grad_A[static_cast<size_t>(i)] = 2.0 * lambda_prime(i) * sym_yxx;
  for (Index k = 0; k < r; ++k) {
    const Index i = retained_constraints[static_cast<size_t>(k)];
    require_dims(i >= 0 && i < m, "apply_N_adjoint: retained constraint index out of range");
    out.grad_A[static_cast<size_t>(i)] += y(n + k) * xx;
  }
  return out;
}

Matrix assemble_N(const Vector& x, const Vector& lambda_prime, const std::vector<Index>& retained_constraints) {
  const Index n = x.size();
  const Index m = lambda_prime.size();
  const Index r = static_cast<Index>(retained_constraints.size());
  const Index block = n * n;
  Matrix nmat = Matrix::Zero(n + r + 1, (m + 1) * block);
  // vec(dS x) = (x^T kron I) vec(dS)
  Matrix kx(n, block);
  for (Index c = 0; c < n; ++c) kx.middleCols(c * n, n) = x(c) * Matrix::Identity(n, n);
  nmat.block(0, 0, n, block) = 2.0 * kx;
  for (Index i = 0; i < m; ++i) nmat.block(0, (i + 1) * block, n, block) = 2.0 * lambda_prime(i) * kx;
  const Matrix xx = x * x.transpose();
  for (Index k = 0; k < r; ++k) {
    const Index i = retained_constraints[static_cast<size_t>(k)];
    nmat.block(n + k, (i + 1) * block, 1, block) = xx.reshaped().transpose();
  }
  return nmat;
}

namespace {

std::vector<Index> retained_constraints_of(const std::vector<Index>& rows, Index m) {
  std::vector<Index> out;
  for (Index i : rows) {
    if (i != m) out.push_back(i);
  }
  return out;
}

Index default_iters(const BackpropOptions& opts, Index n, Index m) {
  return opts.max_iter > 0 ? opts.max_iter : 10 * (n + m);
}

void check_finite(const symlin::LsqrResult& res) {
  if (!res.x.allFinite()) throw Error(ErrorCode::LsqrDiverged, "LSQR produced non-finite iterates");
}

GradientReport finish(const NAdjoint& adj, BackpropMethod method, const symlin::LsqrResult& res) {
  GradientReport rep;
  rep.grad_Q = -adj.grad_Q;
  rep.grad_A.reserve(adj.grad_A.size());
  for (const auto& g : adj.grad_A) rep.grad_A.push_back(-g);
  rep.method = method;
  rep.lsqr_iters = res.iterations;
  rep.lsqr_residual = res.residual_norm;
  rep.lsqr_status = res.status;
  return rep;
}

}  // namespace

GradientReport backprop_is(const KKTWorkspace& ws, const Vector& incoming, const BackpropOptions& opts) {
  const Index n = ws.dim();
  const Index m = ws.constraint_count();
  require_dims(incoming.size() == n, "backprop_is: incoming gradient must have length n");
  const std::vector<Index> rows = ws.independent_rows;  // includes the homogenizing row m
  const Index r = static_cast<Index>(rows.size());
  Matrix gr(r, n);
  for (Index k = 0; k < r; ++k) gr.row(k) = ws.G.row(rows[static_cast<size_t>(k)]);

  // Multiplier columns: all m + 1 rows of G, or only the retained ones.
  const Matrix gcols = opts.fully_reduced_kkt ? gr : ws.G;
  const Index nl = gcols.rows();
  const Matrix h = ws.H;

  symlin::LinearOperator mt;  // M_r^T : R^{n + r} -> R^{n + nl}
  mt.rows = n + nl;
  mt.cols = n + r;
  mt.apply = [h, gr, gcols, n, r, nl](const Vector& y) {
    Vector out(n + nl);
    out.head(n) = 2.0 * (h * y.head(n) + gr.transpose() * y.tail(r));
    out.tail(nl) = 2.0 * (gcols * y.head(n));
    return out;
  };
  mt.apply_adjoint = [h, gr, gcols, n, r, nl](const Vector& z) {
    Vector out(n + r);
    out.head(n) = 2.0 * (h * z.head(n) + gcols.transpose() * z.tail(nl));
    out.tail(r) = 2.0 * (gr * z.head(n));
    return out;
  };

  Vector rhs = Vector::Zero(n + nl);
  rhs.head(n) = incoming;
  symlin::LsqrOptions lo;
  lo.atol = opts.atol;
  lo.btol = opts.btol;
  lo.damp = opts.damp;
  lo.max_iter = default_iters(opts, n, m);
  const symlin::LsqrResult res = symlin::lsqr_solve(mt, rhs, lo);
  check_finite(res);

  const std::vector<Index> retained = retained_constraints_of(rows, m);
  // y is ordered (y_x, retained constraint rows in ascending order, homogenizing row).
  return finish(apply_N_adjoint(ws.x, ws.lambda_prime, res.x, retained), BackpropMethod::IS, res);
}

GradientReport backprop_cift(const HomQCQP& q, const Vector& x, const Vector& incoming, const BackpropOptions& opts) {
  const Index n = q.dim();
  const Index m = q.constraint_count();
  require_dims(x.size() == n && incoming.size() == n, "backprop_cift: |x| and |incoming| must equal n");
  const Matrix g = constraint_gradients(q, x);
  const std::vector<Index> rows = symlin::select_independent_rows(g, opts.rank_tol, m);
  const Index r = static_cast<Index>(rows.size());
  Matrix gr(r, n);
  for (Index k = 0; k < r; ++k) gr.row(k) = g.row(rows[static_cast<size_t>(k)]);

  // G_r^T lambda_r = -Q x in the least-squares sense.
  const Vector lambda_r = gr.transpose().completeOrthogonalDecomposition().solve(-(q.cost_dense() * x));
  Vector lambda = Vector::Zero(m + 1);
  for (Index k = 0; k < r; ++k) lambda(rows[static_cast<size_t>(k)]) = lambda_r(k);
  const Matrix hr = certificate_matrix(q, lambda);
  const double res_norm = (hr * x).norm();
  if (res_norm > opts.stat_tol * (1.0 + hr.norm())) {
    throw Error(ErrorCode::MultiplierResidualTooLarge,
                "||H_r x|| = " + std::to_string(res_norm) + " with multipliers on the retained rows");
  }

  Matrix mm = Matrix::Zero(n + r, n + r);
  mm.topLeftCorner(n, n) = 2.0 * hr;
  mm.topRightCorner(n, r) = 2.0 * gr.transpose();
  mm.bottomLeftCorner(r, n) = 2.0 * gr;
  Vector rhs = Vector::Zero(n + r);
  rhs.head(n) = incoming;
  symlin::LsqrOptions lo;
  lo.atol = opts.atol;
  lo.btol = opts.btol;
  lo.damp = opts.damp;
  lo.max_iter = default_iters(opts, n, m);
  const symlin::LsqrResult res = symlin::lsqr_solve(symlin::LinearOperator::from_dense(mm), rhs, lo);
  check_finite(res);

  return finish(apply_N_adjoint(x, lambda.head(m), res.x, retained_constraints_of(rows, m)), BackpropMethod::CIFT,
                res);
}

namespace {

Matrix jacobian_rows(const HomQCQP& q, const std::function<GradientReport(const Vector&)>& back) {
  const Index n = q.dim();
  Matrix jac(n, q.param_count());
  for (Index k = 0; k < n; ++k) {
    const GradientReport rep = back(Vector::Unit(n, k));
    jac.row(k) = q.chain_to_params(rep.grad_Q, rep.grad_A).transpose();
  }
  return jac;
}

}  // namespace

Matrix jacobian_is(const HomQCQP& q, const KKTWorkspace& ws, const BackpropOptions& opts) {
  return jacobian_rows(q, [&](const Vector& g) { return backprop_is(ws, g, opts); });
}

Matrix jacobian_cift(const HomQCQP& q, const Vector& x, const BackpropOptions& opts) {
  return jacobian_rows(q, [&](const Vector& g) { return backprop_cift(q, x, g, opts); });
}

Matrix central_difference(const std::function<Vector(const Vector&)>& f, const Vector& theta, double h) {
  if (!(h > 0.0)) throw Error(ErrorCode::DegenerateInput, "central_difference: step must be positive");
  Matrix jac;
  for (Index k = 0; k < theta.size(); ++k) {
    const double hk = h * (1.0 + std::abs(theta(k)));
    Vector tp = theta;
    Vector tm = theta;
    tp(k) += hk;
    tm(k) -= hk;
    const Vector col = (f(tp) - f(tm)) / (2.0 * hk);
    if (k == 0) jac.resize(col.size(), theta.size());
    jac.col(k) = col;
  }
  return jac;
}

Vector certified_solve(const HomQCQP& q, const SdpOptions& sdp_opts, const CertifyOptions& cert_opts) {
  const PipelineResult res = solve_and_certify(q, sdp_opts, cert_opts);
  if (res.solution.verdict != Verdict::TightCertified) {
    throw Error(ErrorCode::TightnessLost, std::string("pipeline verdict ") +
                                              std::string(to_string(res.solution.verdict)) + ", ratio " +
                                              std::to_string(res.solution.tightness_ratio));
  }
  return res.solution.x;
}

Matrix fd_jacobian_oracle(const ParamMap& param_map, const Vector& theta, double h, const SdpOptions& sdp_opts,
                          const CertifyOptions& cert_opts) {
  Index current = -1;
  int side = 0;
  auto f = [&](const Vector& t) -> Vector {
    side = 1 - side;
    if (side == 1) ++current;
    try {
      return certified_solve(param_map(t), sdp_opts, cert_opts);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::TightnessLost && e.code() != ErrorCode::SolverFailure) throw;
      throw Error(ErrorCode::TightnessLostUnderPerturbation,
                  "perturbation of parameter " + std::to_string(current) + (side == 1 ? " (+h)" : " (-h)") +
                      ": " + e.what());
    }
  };
  // Baseline must certify as well.
  certified_solve(param_map(theta), sdp_opts, cert_opts);
  return central_difference(f, theta, h);
}

}  // namespace certigrad
