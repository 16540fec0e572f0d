#include "certigrad/certify.hpp"
#include "certigrad/diff.hpp"
#include "certigrad/experiments.hpp"
#include "test_util.hpp"

#include <doctest.h>

using namespace certigrad;
using certigrad::testing::Rng;

namespace {

struct Solved {
  HomQCQP q;
  CertifiedSolution sol;
  KKTWorkspace ws;
};

Solved solve(const HomQCQP& q) {
  const PipelineResult res = solve_and_certify(q);
  CHECK_EQ(res.solution.verdict, Verdict::TightCertified);
  return {q, res.solution, make_kkt_workspace(q, res.solution.x, res.solution.lambda)};
}

Solved poly_solved() { return solve(experiments::poly_problem(experiments::poly_initial_theta())); }

Solved stereo_solved(std::uint64_t seed) {
  using namespace experiments;
  Rng rng(seed);
  const LocalizationInstance inst = make_instance({}, sample_pose(rng), grid_landmarks(), Weighting::Matrix, rng);
  return solve(build_localization_qcqp(inst, true, LocalizationParams::Landmarks));
}

Matrix dense_mr(const KKTWorkspace& ws) {
  const Index n = ws.dim(), nl = ws.G.rows(), r = static_cast<Index>(ws.independent_rows.size());
  Matrix mr = Matrix::Zero(n + r, n + nl);
  mr.topLeftCorner(n, n) = 2.0 * ws.H;
  mr.topRightCorner(n, nl) = 2.0 * ws.G.transpose();
  for (Index k = 0; k < r; ++k) mr.block(n + k, 0, 1, n) = 2.0 * ws.G.row(ws.independent_rows[static_cast<size_t>(k)]);
  return mr;
}

bool all_zero(const GradientReport& g) {
  bool z = g.grad_Q.isZero(0.0);
  for (const Matrix& a : g.grad_A) z = z && a.isZero(0.0);
  return z;
}

void expect_symmetric(const GradientReport& g) {
  CHECK_EQ(g.grad_Q, g.grad_Q.transpose());
  for (const Matrix& a : g.grad_A) CHECK_EQ(a, a.transpose());
}

// dL/dtheta for L = (t* - 1.7)^2 + (p(t*) - 7.3)^2 holding theta's dependence of p explicit.
Vector outer_loss_grad_x(const Vector& x, const Vector& th) {
  const double t = x(1);
  const double p = certigrad::testing::poly_direct(th, t);
  const double dp = certigrad::testing::poly_direct_deriv(th, t);
  Vector g = Vector::Zero(4);
  g(1) = 2.0 * (t - 1.7) + 2.0 * (p - 7.3) * dp;
  return g;
}

}  // namespace

TEST_CASE("BackpropIs.ZeroIncomingGivesZero") {
  const Solved s = poly_solved();
  CHECK((all_zero(backprop_is(s.ws, Vector::Zero(4)))));
  CHECK((all_zero(backprop_cift(s.q, s.sol.x, Vector::Zero(4)))));
}

TEST_CASE("BackpropIs.PolynomialOuterLossMatchesFiniteDifference") {
  const Vector th = experiments::poly_initial_theta();
  const Solved s = poly_solved();
  const Vector g = outer_loss_grad_x(s.sol.x, th);
  const GradientReport rep = backprop_is(s.ws, g);
  const Vector dl = s.q.chain_to_params(rep.grad_Q, rep.grad_A);
  // FD of t*(theta) only: the explicit theta-dependence of p is excluded on both sides.
  const Matrix jfd = fd_jacobian_oracle([](const Vector& t) { return experiments::poly_problem(t); }, th, 1e-5);
  const Vector fd = jfd.transpose() * g;
  CHECK_LE(certigrad::testing::rel_inf(dl, fd), 1e-4);
}

TEST_CASE("BackpropCift.AgreesWithIsOnPolynomial") {
  const Solved s = poly_solved();
  Rng rng(2);
  for (int k = 0; k < 5; ++k) {
    const Vector g = certigrad::testing::random_vector(rng, 4);
    const GradientReport is = backprop_is(s.ws, g), cift = backprop_cift(s.q, s.sol.x, g);
    // A_1 is dependent at the optimum, so multipliers are not unique: IS keeps the SDP value on it and
    // CIFT sets it to zero. The constraint blocks therefore differ; Q and parameter gradients do not.
    CHECK_LE(certigrad::testing::rel_inf(is.grad_Q, cift.grad_Q), 1e-6);
    CHECK_LE(certigrad::testing::rel_inf(s.q.chain_to_params(is.grad_Q, is.grad_A),
                                          s.q.chain_to_params(cift.grad_Q, cift.grad_A)), 1e-6);
    expect_symmetric(is);
    expect_symmetric(cift);
  }
}

TEST_CASE("BackpropCift.MatrixWeightedStereoMatchesFiniteDifference") {
  using namespace experiments;
  JacCompareConfig cfg;
  cfg.trials = 2;
  cfg.seed = 5;
  const JacCompareSummary sum = jacobian_compare(cfg);
  REQUIRE_EQ(sum.failures, 0);
  for (const JacCompareRow& r : sum.rows) {
    CHECK_LE(r.cift_vs_fd, 1e-4);
    CHECK_LE(r.is_vs_fd, 1e-4);
  }
}

TEST_CASE("BackpropCift.BadPointRaisesMultiplierResidual") {
  const Solved s = poly_solved();
  const Vector x = certigrad::testing::monomials(0.3);  // feasible but not stationary
  try {
    backprop_cift(s.q, x, Vector::Unit(4, 1));
    FAIL("expected an exception");
  } catch (const Error& e) {
    CHECK_EQ(e.code(), ErrorCode::MultiplierResidualTooLarge);
  }
  try {
    make_kkt_workspace(s.q, x, s.sol.lambda);
    FAIL("expected an exception");
  } catch (const Error& e) {
    CHECK_EQ(e.code(), ErrorCode::NotStationary);
  }
}

TEST_CASE("ApplyNAdjoint.ZeroAndSingleOuterProduct") {
  const NAdjoint z = apply_N_adjoint(Vector::Unit(4, 0), Vector::Zero(3), Vector::Zero(4 + 2 + 1), {0, 1});
  CHECK((z.grad_Q.isZero(0.0)));
  const Index j = 2;
  Vector y = Vector::Zero(4 + 2 + 1);
  y(j) = 1.0;
  const NAdjoint a = apply_N_adjoint(Vector::Unit(4, 0), Vector::Zero(3), y, {0, 1});
  const Matrix outer = 2.0 * Vector::Unit(4, j) * Vector::Unit(4, 0).transpose();
  CHECK_EQ(a.grad_Q, 0.5 * (outer + outer.transpose()));
  for (const Matrix& g : a.grad_A) CHECK((g.isZero(0.0)));
}

TEST_CASE("ApplyNAdjointProperty.MatchesDenseAssembly") {
  Rng rng(101);
  for (int trial = 0; trial < 40; ++trial) {
    const Index n = 2 + trial % 6, m = 1 + trial % 5;
    std::vector<Index> retained;
    for (Index i = 0; i < m; ++i)
      if ((i + trial) % 3 != 0) retained.push_back(i);
    const Index r = static_cast<Index>(retained.size());
    const Vector x = certigrad::testing::random_vector(rng, n);
    const Vector lp = certigrad::testing::random_vector(rng, m);
    const Vector y = certigrad::testing::random_vector(rng, n + r + 1);
    // Symmetric perturbation d nu = vec(dQ, dA_1..dA_m).
    std::vector<Matrix> da;
    const Matrix dq = certigrad::testing::random_symmetric(rng, n);
    for (Index i = 0; i < m; ++i) da.push_back(certigrad::testing::random_symmetric(rng, n));
    const Vector dnu = vectorize_params(dq, da);

    const NAdjoint adj = apply_N_adjoint(x, lp, y, retained);
    const double lhs = vectorize_params(adj.grad_Q, adj.grad_A).dot(dnu);
    const Matrix nd = assemble_N(x, lp, retained);
    const double rhs = y.dot(nd * dnu);
    CHECK_MESSAGE((std::abs(lhs - rhs)) <= (1e-10 * (1.0 + std::abs(rhs))), "trial " << trial);

    // Kronecker form built independently: row block 0 is 2 (x^T kron I) [vec dQ + sum l_i vec dA_i].
    Vector top = 2.0 * (dq * x);
    for (Index i = 0; i < m; ++i) top += 2.0 * lp(i) * (da[static_cast<size_t>(i)] * x);
    Vector ndnu(n + r + 1);
    ndnu.head(n) = top;
    for (Index k = 0; k < r; ++k) ndnu(n + k) = x.dot(da[static_cast<size_t>(retained[static_cast<size_t>(k)])] * x);
    ndnu(n + r) = 0.0;
    CHECK_LE((nd * dnu - ndnu).cwiseAbs().maxCoeff(), 1e-10 * (1.0 + ndnu.cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("DiffProperty.MrHasRightInverse") {
  for (const Solved& s : {poly_solved(), stereo_solved(4)}) {
    const Matrix mr = dense_mr(s.ws);
    const Matrix prod = mr * certigrad::testing::pinv(mr);
    CHECK_LE((prod - Matrix::Identity(mr.rows(), mr.rows())).cwiseAbs().maxCoeff(), 1e-8);
    CHECK_GT(certigrad::testing::min_singular(mr.transpose()), 1e-8 * mr.norm());
  }
}

TEST_CASE("DiffProperty.JacobiansAgreeWithFiniteDifferences") {
  Rng rng(55);
  std::normal_distribution<double> nd(0.0, 0.02);
  const Vector th0 = experiments::poly_initial_theta();
  for (int trial = 0; trial < 5; ++trial) {
    Vector th = th0;
    for (Index k = 0; k < 7; ++k) th(k) += nd(rng) * (1.0 + std::abs(th(k)));
    const Solved s = solve(experiments::poly_problem(th));
    const Matrix jis = jacobian_is(s.q, s.ws), jc = jacobian_cift(s.q, s.sol.x);
    const Matrix jfd = fd_jacobian_oracle([](const Vector& t) { return experiments::poly_problem(t); }, th, 1e-5);
    CHECK_LE(certigrad::testing::rel_inf(jis, jfd), 1e-4);
    CHECK_LE(certigrad::testing::rel_inf(jc, jfd), 1e-4);
    CHECK_LE(certigrad::testing::rel_inf(jis, jc), 1e-5);
  }
}

TEST_CASE("DiffProperty.FullyReducedVariantAgrees") {
  const Solved s = poly_solved();
  BackpropOptions red;
  red.fully_reduced_kkt = true;
  const Matrix a = jacobian_is(s.q, s.ws), b = jacobian_is(s.q, s.ws, red);
  CHECK_LE(certigrad::testing::rel_inf(a, b), 1e-6);
}

TEST_CASE("FdOracle.ConstantMapGivesZero") {
  const HomQCQP q = experiments::poly_problem(experiments::poly_initial_theta());
  const Matrix j = fd_jacobian_oracle([&](const Vector&) { return q; }, Vector::Ones(3), 1e-5);
  CHECK_EQ(j.rows(), 4);
  CHECK((j.isZero(0.0)));
}

TEST_CASE("FdOracle.ReportsWhichPerturbationLostTightness") {
  // Three-spin max-cut triangle: the Shor relaxation is not tight.
  Matrix cut = Matrix::Ones(3, 3) - Matrix::Identity(3, 3);
  std::vector<ParamSymMatrix> cons;
  for (Index i = 1; i < 3; ++i) {
    Matrix a = Matrix::Zero(3, 3);
    a(i, i) = 1.0;
    a(0, 0) = -1.0;
    cons.push_back(ParamSymMatrix::from_dense(a));
  }
  const HomQCQP loose = build_hom_qcqp(ParamSymMatrix::from_dense(cut), cons, 0);
  const HomQCQP tight = experiments::poly_problem(experiments::poly_initial_theta());
  const Vector th = Vector::Zero(2);
  try {
    fd_jacobian_oracle([&](const Vector& t) { return t(1) != 0.0 ? loose : tight; }, th, 1e-5);
    FAIL("expected an exception");
  } catch (const Error& e) {
    CHECK_EQ(e.code(), ErrorCode::TightnessLostUnderPerturbation);
    CHECK_NE(std::string(e.what()).find("1"), std::string::npos);
  }
}

TEST_CASE("FdOracle.CalibrationBaselineColumnSmooth") {
  using namespace experiments;
  CalibConfig cfg;
  cfg.poses_per_trial = 2;
  Rng rng(9);
  const CalibScene scene = make_calib_scene(cfg, rng);
  auto loss = [&](double b) { return calib_loss_and_grad(scene, b).loss; };
  const double g = calib_loss_and_grad(scene, 0.243).grad;
  const double fd5 = (loss(0.243 + 1e-5) - loss(0.243 - 1e-5)) / 2e-5;
  const double fd6 = (loss(0.243 + 1e-6) - loss(0.243 - 1e-6)) / 2e-6;
  REQUIRE((std::isfinite(g) && std::isfinite(fd5)));
  CHECK_LE(std::abs(fd5 - fd6), 1e-3 * std::abs(fd5));
  CHECK_LE(std::abs(g - fd5), 1e-4 * std::abs(fd5));
}
