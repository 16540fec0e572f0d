#include "certigrad/certify.hpp"
#include "certigrad/experiments.hpp"
#include "certigrad/qcqp.hpp"
#include "test_util.hpp"

#include <doctest.h>

using namespace certigrad;
using certigrad::testing::Rng;

namespace {

HomQCQP poly() { return experiments::poly_problem(experiments::poly_initial_theta()); }

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL_CHECK("expected an Error");
  return ErrorCode::NumericalFailure;
}

// Dyadic entries k / 8 keep sums and products with small integers exact.
Matrix dyadic_symmetric(Rng& rng, Index n) {
  std::uniform_int_distribution<int> d(-16, 16);
  Matrix a(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = i; j < n; ++j) a(i, j) = a(j, i) = d(rng) / 8.0;
  return a;
}

}  // namespace

TEST_CASE("ParamSymMatrix.SymmetricDedupedAndBounded") {
  ParamSymMatrix s(3, {{0, 1, 1.0}, {1, 0, 2.0}, {2, 2, -1.0}, {2, 0, 0.5}});
  const Matrix d = s.dense();
  CHECK_EQ(d, d.transpose());
  CHECK_EQ(d(0, 1), 3.0);
  CHECK_EQ(s.entries().size(), 3u);
  for (const Triplet& t : s.entries()) CHECK_LE(t.row, t.col);
  CHECK_EQ(code_of([] { ParamSymMatrix(2, {{0, 2, 1.0}}); }), ErrorCode::DimensionMismatch);
}

TEST_CASE("BuildHomQcqp.PolynomialShape") {
  const HomQCQP q = poly();
  CHECK_EQ(q.dim(), 4);
  CHECK_EQ(q.constraint_count(), 3);
  CHECK_EQ(q.param_count(), 7);
  const Matrix a0 = q.homog_dense();
  CHECK_EQ(a0(0, 0), 1.0);
  CHECK_EQ(a0.cwiseAbs().sum(), 1.0);
}

TEST_CASE("BuildHomQcqp.ZeroCostNoConstraints") {
  const HomQCQP q = build_hom_qcqp(ParamSymMatrix::zero(2), {}, 0);
  CHECK_EQ(q.constraint_count(), 0);
  const auto ev = eval_objective_and_residuals(q, Vector::Unit(2, 0));
  CHECK_EQ(ev.residuals.size(), 1);
  CHECK_EQ(ev.residuals(0), 0.0);
}

TEST_CASE("BuildHomQcqp.Errors") {
  CHECK_EQ(code_of([] { build_hom_qcqp(ParamSymMatrix::zero(3), {ParamSymMatrix::zero(4)}, 0); }), ErrorCode::DimensionMismatch);
  CHECK_EQ(code_of([] { build_hom_qcqp(ParamSymMatrix::zero(3), {}, 3); }), ErrorCode::DimensionMismatch);
  CHECK_EQ(code_of([] { build_hom_qcqp(ParamSymMatrix::zero(3), {ParamSymMatrix(3, {{1, 1, 2.0}})}, 1); }), ErrorCode::DuplicateHomogenizing);
}

TEST_CASE("EvalObjective.PolynomialAtOne") {
  const Vector th = experiments::poly_initial_theta();
  const auto ev = eval_objective_and_residuals(poly(), certigrad::testing::monomials(1.0));
  CHECK_LE(std::abs((ev.objective) - (th.sum())), 1e-12);
  CHECK_LE(ev.residuals.cwiseAbs().maxCoeff(), 1e-15);
}

TEST_CASE("EvalObjective.UnitAndScaledHomogeneous") {
  const auto e1 = eval_objective_and_residuals(poly(), Vector::Unit(4, 0));
  CHECK_EQ(e1.residuals, Vector::Zero(4));
  const auto e2 = eval_objective_and_residuals(poly(), 2.0 * Vector::Unit(4, 0));
  CHECK_EQ(e2.residuals(3), 3.0);
  CHECK_EQ(e2.residuals.head(3), Vector::Zero(3));
  CHECK_EQ(code_of([] { eval_objective_and_residuals(poly(), Vector::Zero(3)); }), ErrorCode::DimensionMismatch);
}

TEST_CASE("ConstraintGradients.PolynomialRowsAndIdentity") {
  const HomQCQP q = poly();
  const Vector x = certigrad::testing::monomials(-0.8);
  const Matrix g = constraint_gradients(q, x);
  CHECK_EQ(g.row(3).transpose(), Vector::Unit(4, 0));
  Vector shifted = eval_objective_and_residuals(q, x).residuals;
  shifted(3) += 1.0;
  CHECK_LE((g * x - shifted).cwiseAbs().maxCoeff(), 1e-14);
}

TEST_CASE("ConstraintGradients.StereoRowsAndColumnsRankSeven") {
  const std::vector<Matrix> rot = experiments::rotation_constraints(true);
  std::vector<ParamSymMatrix> cons;
  for (int i = 0; i < 12; ++i) cons.push_back(ParamSymMatrix::from_dense(rot[static_cast<size_t>(i)]));
  const HomQCQP q = build_hom_qcqp(ParamSymMatrix::zero(13), std::move(cons), 0);
  const FeasibleSampler s = experiments::localization_sampler();
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Matrix g = constraint_gradients(q, s.draw(seed));
    CHECK_EQ(g.rows(), 13);
    CHECK_MESSAGE((certigrad::testing::svd_rank(g, 1e-10)) == (7), "seed " << seed);
  }
}

TEST_CASE("CertificateMatrix.ZeroMultipliersGiveCost") {
  const HomQCQP q = poly();
  CHECK_EQ(certificate_matrix(q, Vector::Zero(4)), q.cost_dense());
  CHECK_EQ(code_of([&] { certificate_matrix(q, Vector::Zero(3)); }), ErrorCode::DimensionMismatch);
}

TEST_CASE("CertificateMatrix.PolynomialStationaryAtOptimum") {
  const HomQCQP q = poly();
  const PipelineResult res = solve_and_certify(q);
  const Matrix h = certificate_matrix(q, res.solution.lambda);
  CHECK_LE((h * res.solution.x).norm(), 1e-7);
  // Raw interior-point multipliers, before the polish step, meet the certificate's stationarity tolerance.
  const Matrix h_sdp = certificate_matrix(q, res.sdp.lambda);
  CHECK_LE((h_sdp * res.solution.x).norm(), 1e-6 * (1.0 + h_sdp.norm()));
}

TEST_CASE("CertificateMatrix.ScalarLocalizationZeroNoise") {
  using namespace experiments;
  Rng rng(8);
  CameraModel cam;
  cam.sigma_u = cam.sigma_v = 0.0;
  const Pose pose = sample_pose(rng);
  const LocalizationInstance inst = make_instance(cam, pose, grid_landmarks(), Weighting::Scalar, rng);
  const HomQCQP q = build_localization_qcqp(inst, true);
  const PipelineResult res = solve_and_certify(q);
  const Vector ev = Eigen::SelfAdjointEigenSolver<Matrix>(res.solution.H).eigenvalues();
  CHECK_GE(ev(0), -1e-8 * (1.0 + ev(ev.size() - 1)));
  CHECK_GT(ev(1), 1e-6 * ev(ev.size() - 1));  // corank 1
  CHECK_LE((res.solution.x - pose_to_x(pose)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST_CASE("QcqpProperty.ObjectiveIsFrobeniusWithLift") {
  Rng rng(17);
  std::uniform_real_distribution<double> ud(-2.0, 2.0);
  const HomQCQP q = poly();
  for (int trial = 0; trial < 100; ++trial) {
    const Vector x = certigrad::testing::monomials(ud(rng));
    const auto ev = eval_objective_and_residuals(q, x);
    REQUIRE_LE(ev.residuals.cwiseAbs().maxCoeff(), 1e-9);
    const double frob = (q.cost_dense().array() * (x * x.transpose()).array()).sum();
    CHECK_LE(std::abs(ev.objective - frob), 1e-12 * std::max(1.0, std::abs(frob)));
  }
}

TEST_CASE("QcqpProperty.QuadraticGradientMatchesFiniteDifference") {
  Rng rng(23);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = 2 + trial % 6;
    const Matrix a = certigrad::testing::random_symmetric(rng, n);
    const HomQCQP q = build_hom_qcqp(ParamSymMatrix::zero(n), {ParamSymMatrix::from_dense(a)}, 0);
    const Vector x = certigrad::testing::random_vector(rng, n);
    const Vector grad = 2.0 * constraint_gradients(q, x).row(0).transpose();
    Vector fd(n);
    for (Index k = 0; k < n; ++k) {
      const Vector e = 1e-6 * Vector::Unit(n, k);
      fd(k) = ((x + e).dot(a * (x + e)) - (x - e).dot(a * (x - e))) / 2e-6;
    }
    CHECK_LE((grad - fd).norm() / grad.norm(), 1e-5);
  }
}

TEST_CASE("QcqpProperty.CertificateLinearityExact") {
  Rng rng(31);
  std::uniform_int_distribution<int> d(-8, 8);
  for (int trial = 0; trial < 30; ++trial) {
    const Index n = 2 + trial % 5, m = 1 + trial % 4;
    std::vector<ParamSymMatrix> cons;
    for (Index i = 0; i < m; ++i) {
      Matrix a = dyadic_symmetric(rng, n);
      a(0, 0) = 0.0;
      a(1, 1) = 1.0;  // never zero, never a multiple of A_0
      cons.push_back(ParamSymMatrix::from_dense(a));
    }
    const HomQCQP q = build_hom_qcqp(ParamSymMatrix::from_dense(dyadic_symmetric(rng, n)), std::move(cons), 0);
    Vector l1(m + 1), l2(m + 1);
    for (Index i = 0; i <= m; ++i) {
      l1(i) = d(rng) / 4.0;
      l2(i) = d(rng) / 4.0;
    }
    const double al = d(rng) / 2.0, be = d(rng) / 2.0;
    const Matrix qd = q.cost_dense();
    const Matrix lhs = certificate_matrix(q, al * l1 + be * l2) - qd;
    const Matrix rhs = al * (certificate_matrix(q, l1) - qd) + be * (certificate_matrix(q, l2) - qd);
    CHECK_MESSAGE((lhs) == (rhs), "trial " << trial);
  }
}

TEST_CASE("VectorizedParams.LengthAndRoundTrip") {
  const HomQCQP q = poly();
  const Vector nu = vectorize_params(q);
  CHECK_EQ(nu.size(), (3 + 1) * 16);
  const UnvectorizedParams back = unvectorize_params(nu, 4, 3);
  CHECK_EQ(back.cost, q.cost_dense());
  for (Index i = 0; i < 3; ++i) CHECK_EQ(back.constraints[static_cast<size_t>(i)], q.constraints_dense()[static_cast<size_t>(i)]);
}

TEST_CASE("ChainToParams.MatchesDenseSensitivities") {
  Rng rng(5);
  const HomQCQP q = poly();
  const Matrix gq = certigrad::testing::random_symmetric(rng, 4);
  std::vector<Matrix> ga(3, Matrix::Zero(4, 4));
  const Vector got = q.chain_to_params(gq, ga);
  for (Index k = 0; k < 7; ++k) {
    const Matrix dq = q.cost().sensitivity_dense(k);
    CHECK_LE(std::abs((got(k)) - ((gq.array() * dq.array()).sum())), 1e-13);
  }
}
