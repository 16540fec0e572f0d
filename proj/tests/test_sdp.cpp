#include "certigrad/certify.hpp"
#include "certigrad/experiments.hpp"
#include "certigrad/sdp.hpp"
#include "certigrad/symlin.hpp"
#include "test_util.hpp"

#include <doctest.h>

using namespace certigrad;
using certigrad::testing::Rng;

namespace {

SdpProblem two_by_two(const Matrix& c, std::vector<Matrix> a, std::vector<double> b) {
  return {c, std::move(a), Eigen::Map<const Vector>(b.data(), static_cast<Index>(b.size()))};
}

Matrix e(Index i, Index j) {
  Matrix m = Matrix::Zero(2, 2);
  m(i, j) = m(j, i) = 1.0;
  return m;
}

double frob(const Matrix& a, const Matrix& b) { return (a.array() * b.array()).sum(); }

// Strictly feasible primal and dual by construction: b = A(X0), C = A^*(y0) + S0 with X0, S0 > 0.
SdpProblem random_feasible(Rng& rng, Index n, Index m) {
  SdpProblem p;
  const Matrix fx = certigrad::testing::random_matrix(rng, n, n);
  const Matrix fs = certigrad::testing::random_matrix(rng, n, n);
  const Matrix x0 = fx * fx.transpose() + 0.1 * Matrix::Identity(n, n);
  const Matrix s0 = fs * fs.transpose() + 0.1 * Matrix::Identity(n, n);
  const Vector y0 = certigrad::testing::random_vector(rng, m);
  p.c = s0;
  p.b.resize(m);
  for (Index i = 0; i < m; ++i) {
    p.a.push_back(certigrad::testing::random_symmetric(rng, n));
    p.b(i) = frob(p.a.back(), x0);
    p.c += y0(i) * p.a.back();
  }
  return p;
}

}  // namespace

TEST_CASE("ShorRelaxation.PolynomialShape") {
  const ShorSDP s = build_shor_relaxation(experiments::poly_problem(experiments::poly_initial_theta()));
  CHECK_EQ(s.dim, 4);
  REQUIRE_EQ(s.constraints.size(), 4u);
  CHECK_EQ(s.rhs, (Vector(4) << 0, 0, 0, 1).finished());
}

TEST_CASE("ShorRelaxation.StereoShapeMatchesBuilder") {
  using namespace experiments;
  Rng rng(1);
  const LocalizationInstance inst = make_instance({}, sample_pose(rng), grid_landmarks(), Weighting::Matrix, rng);
  const ShorSDP rows_only = build_shor_relaxation(build_localization_qcqp(inst, false));
  const ShorSDP full = build_shor_relaxation(build_localization_qcqp(inst, true));
  CHECK_EQ(rows_only.dim, 13);
  CHECK_EQ(rows_only.constraints.size(), 6u + 1u);
  CHECK_EQ(full.constraints.size(), 6u + 6u + 9u + 1u);
  CHECK_EQ(full.rhs.sum(), 1.0);
}

TEST_CASE("SolveSdp.TrivialHomogenizingOnly") {
  const ShorSDP s = build_shor_relaxation(build_hom_qcqp(ParamSymMatrix::zero(2), {}, 0));
  const SDPPrimalDual r = solve_sdp(s);
  REQUIRE_EQ(r.status, SdpStatus::Optimal);
  CHECK_LE(std::abs((r.primal_objective) - (0.0)), 1e-10);
  CHECK_LE(std::abs((r.X(0, 0)) - (1.0)), 1e-10);
}

TEST_CASE("SolveSdp.TwoByTwoAnalytic") {
  // min X11 s.t. X22 = 1 -> diag(0, 1), value 0.
  SdpSolution s = solve_standard_sdp(two_by_two(e(0, 0), {e(1, 1)}, {1.0}));
  REQUIRE_EQ(s.status, SdpStatus::Optimal);
  CHECK_LE((s.x - (Matrix(2, 2) << 0, 0, 0, 1).finished()).cwiseAbs().maxCoeff(), 1e-10);
  CHECK_LE(std::abs((s.primal_objective) - (0.0)), 1e-10);

  // min 2 X12 s.t. X11 = X22 = 1 -> [[1, -1], [-1, 1]], value -2.
  s = solve_standard_sdp(two_by_two(0.5 * e(0, 1), {e(0, 0), e(1, 1)}, {1.0, 1.0}));
  REQUIRE_EQ(s.status, SdpStatus::Optimal);
  CHECK_LE(std::abs((s.primal_objective) - (-1.0)), 1e-10);
  CHECK_LE((s.x - (Matrix(2, 2) << 1, -1, -1, 1).finished()).cwiseAbs().maxCoeff(), 1e-10);

  // min <C, X> s.t. tr X = 1 -> lambda_min(C), X = v v^T.
  Matrix c(2, 2);
  c << 2.0, 1.0, 1.0, 3.0;
  s = solve_standard_sdp(two_by_two(c, {Matrix::Identity(2, 2)}, {1.0}));
  REQUIRE_EQ(s.status, SdpStatus::Optimal);
  const double lmin = 2.5 - std::sqrt(1.25);
  Vector v(2);
  v << 1.0, lmin - 2.0;
  v.normalize();
  CHECK_LE(std::abs((s.primal_objective) - (lmin)), 1e-10);
  CHECK_LE(std::abs((s.y(0)) - (lmin)), 1e-10);
  CHECK_LE((s.x - v * v.transpose()).cwiseAbs().maxCoeff(), 1e-10);
}

TEST_CASE("SolveSdp.PolynomialValueMatchesGridOracle") {
  const Vector th = experiments::poly_initial_theta();
  const SDPPrimalDual r = solve_sdp(build_shor_relaxation(experiments::poly_problem(th)));
  REQUIRE_EQ(r.status, SdpStatus::Optimal);
  const auto gm = certigrad::testing::poly_grid_min(th);
  CHECK_LE(std::abs((r.primal_objective) - (gm.value)), 1e-8);
}

TEST_CASE("SolveSdpProperty.RandomFeasibleInstances") {
  Rng rng(20240601);
  int optimal = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Index n = 2 + trial % 14;  // 2..15
    const Index m = std::min<Index>(1 + (trial * 7) % 30, n * (n + 1) / 2);
    const SdpProblem p = random_feasible(rng, n, m);
    const SdpSolution s = solve_standard_sdp(p);
    REQUIRE_MESSAGE((s.status) == (SdpStatus::Optimal), "trial " << trial << " n " << n << " m " << m);
    ++optimal;
    const SdpResiduals r = sdp_residuals(p, s.x, s.y);
    CHECK_LE(r.primal, 1e-9);
    CHECK_LE(r.dual, 1e-9);
    CHECK_LE(r.gap, 1e-9);
    // Independent residuals with the spec's normalization.
    Vector ax(m);
    Matrix slack = p.c;
    for (Index i = 0; i < m; ++i) {
      ax(i) = frob(p.a[static_cast<size_t>(i)], s.x);
      slack -= s.y(i) * p.a[static_cast<size_t>(i)];
    }
    CHECK_LE((ax - p.b).norm(), 1e-9 * (1.0 + p.b.norm()));
    const double smin = Eigen::SelfAdjointEigenSolver<Matrix>(slack).eigenvalues()(0);
    CHECK_GE(smin, -1e-9 * (1.0 + p.c.norm()));
    const double cx = frob(p.c, s.x);
    CHECK_LE(std::abs(cx - p.b.dot(s.y)), 1e-9 * (1.0 + std::abs(cx)));
    const Eigen::SelfAdjointEigenSolver<Matrix> xe(s.x);
    CHECK_GE(xe.eigenvalues()(0), -1e-9 * xe.eigenvalues().cwiseAbs().maxCoeff());
    CHECK_LE(frob(slack, s.x), 1e-7 * (1.0 + s.x.norm() * slack.norm()));
  }
  CHECK_EQ(optimal, 100);
}

TEST_CASE("InjectExternal.OwnOutputIsIdempotent") {
  const ShorSDP s = build_shor_relaxation(experiments::poly_problem(experiments::poly_initial_theta()));
  const SDPPrimalDual r = solve_sdp(s);
  const SDPPrimalDual j = inject_external_solution(s, r.X, r.lambda);
  CHECK_EQ(j.status, SdpStatus::Optimal);
  CHECK_LE(std::abs((j.residuals.primal) - (r.residuals.primal)), 1e-15);
  CHECK_LE(std::abs((j.residuals.dual) - (r.residuals.dual)), 1e-15);
  CHECK_LE(std::abs((j.residuals.gap) - (r.residuals.gap)), 1e-15);
  CHECK_LE((j.H - r.H).cwiseAbs().maxCoeff(), 1e-14);
}

TEST_CASE("InjectExternal.PrimalViolationFlagged") {
  const ShorSDP s = build_shor_relaxation(experiments::poly_problem(experiments::poly_initial_theta()));
  const SDPPrimalDual r = solve_sdp(s);
  Matrix x = r.X;
  x(0, 0) += 1e-3;
  const SDPPrimalDual j = inject_external_solution(s, x, r.lambda);
  CHECK_EQ(j.status, SdpStatus::NumericalFailure);
  CHECK_GT(j.residuals.primal, 1e-4);
  try {
    inject_external_solution(s, Matrix::Zero(3, 3), r.lambda);
    FAIL("expected an exception");
  } catch (const Error& e) {
    CHECK_EQ(e.code(), ErrorCode::DimensionMismatch);
  }
}

TEST_CASE("SolveSdpProperty.WeakDualityOnOptimalReturns") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const SdpProblem p = random_feasible(rng, 3 + trial % 6, 2 + trial % 5);
    const SdpSolution s = solve_standard_sdp(p);
    REQUIRE_EQ(s.status, SdpStatus::Optimal);
    CHECK_GE(s.primal_objective - s.dual_objective, -1e-9 * (1.0 + std::abs(s.primal_objective)));
  }
}

TEST_CASE("SolveSdpProperty.CostScalingEquivariance") {
  // Multipliers of the polynomial instance are unique only modulo null(G^T) (constraint gradients have
  // rank 3 of 4), and the raw interior-point X sits about sqrt(gap) ~ 1e-7 from its limit, so X is
  // compared at 1e-5 and the certified factor at 1e-9.
  const HomQCQP q = experiments::poly_problem(experiments::poly_initial_theta());
  const ShorSDP base = build_shor_relaxation(q);
  const SDPPrimalDual r1 = solve_sdp(base);
  const PipelineResult c1 = solve_and_certify(q);
  const Matrix g = constraint_gradients(q, c1.solution.x);
  for (double alpha : {0.01, 0.5, 3.0, 250.0}) {
    ShorSDP scaled = base;
    scaled.cost *= alpha;
    const SDPPrimalDual r2 = solve_sdp(scaled);
    REQUIRE_EQ(r2.status, SdpStatus::Optimal);
    CHECK_MESSAGE(((r2.X - r1.X).cwiseAbs().maxCoeff()) <= (1e-5), "alpha " << alpha);
    const Index h = r1.lambda.size() - 1;
    CHECK_MESSAGE(std::abs((r2.lambda(h)) - (alpha * r1.lambda(h))) <= (1e-9 * alpha * std::abs(r1.lambda(h))), "alpha " << alpha);
    CHECK_MESSAGE(((g.transpose() * (r2.lambda - alpha * r1.lambda)).norm()) <= (1e-6 * alpha * r1.lambda.norm()), "alpha " << alpha);

    const HomQCQP qs = build_hom_qcqp(ParamSymMatrix::from_dense(alpha * q.cost_dense()), q.constraints(), 0);
    const PipelineResult c2 = solve_and_certify(qs);
    REQUIRE_EQ(c2.solution.verdict, Verdict::TightCertified);
    CHECK_MESSAGE(((c2.solution.x - c1.solution.x).cwiseAbs().maxCoeff()) <= (1e-9), "alpha " << alpha);
  }
}

TEST_CASE("SolveSdpProperty.DuplicatedConstraintDoesNotChangeX") {
  const ShorSDP base = build_shor_relaxation(experiments::poly_problem(experiments::poly_initial_theta()));
  ShorSDP dup = base;
  dup.constraints.insert(dup.constraints.begin() + 1, base.constraints[1]);
  dup.rhs = (Vector(5) << 0, 0, 0, 0, 1).finished();
  const SDPPrimalDual a = solve_sdp(base), b = solve_sdp(dup);
  REQUIRE_EQ(b.status, SdpStatus::Optimal);
  CHECK_LE((a.X - b.X).cwiseAbs().maxCoeff(), 1e-7);
  CHECK_EQ(b.lambda.size(), 5);
}
