#include "certigrad/experiments.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <Eigen/Geometry>

using namespace certigrad;
using namespace certigrad::experiments;
using certigrad::testing::Rng;

namespace {

CameraModel noiseless() {
  CameraModel cam;
  cam.sigma_u = cam.sigma_v = 0.0;
  return cam;
}

double direct_cost(const LocalizationInstance& inst, const Mat3& c, const Vec3& w) {
  double s = 0.0;
  for (size_t k = 0; k < inst.landmarks.size(); ++k) {
    const Vec3 e = inst.measurements[k] - c * inst.landmarks[k] - w;
    s += e.dot(inst.weights[k] * e);
  }
  return s;
}

}  // namespace

TEST_CASE("PolyProblem.TableOneEntries") {
  const HomQCQP q = poly_problem(poly_initial_theta());
  const Matrix& c = q.cost_dense();
  CHECK_EQ(c(0, 0), 10.0);
  CHECK_EQ(c(0, 1), 1.3167);
  CHECK_LE(std::abs((c(1, 1)) - (-1.44810)), 1e-15);
  CHECK_EQ(c, c.transpose());
}

TEST_CASE("PolyProblem.ConstantPolynomial") {
  const HomQCQP q = poly_problem(Vector::Unit(7, 0));
  CHECK_EQ(q.cost_dense(), Vector::Unit(4, 0) * Vector::Unit(4, 0).transpose());
  const SDPPrimalDual r = solve_sdp(build_shor_relaxation(q));
  CHECK_LE(std::abs((r.primal_objective) - (1.0)), 1e-9);
}

TEST_CASE("PolyProblemProperty.QuadraticFormIsPolynomial") {
  Rng rng(12);
  std::uniform_real_distribution<double> ud(-2.0, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    const Vector th = certigrad::testing::random_vector(rng, 7);
    const double t = ud(rng);
    const Vector x = certigrad::testing::monomials(t);
    const double direct = certigrad::testing::poly_direct(th, t);
    CHECK_LE(std::abs((x.dot(poly_problem(th).cost_dense() * x)) - (direct)), 1e-12 * (1.0 + std::abs(direct)));
  }
}

TEST_CASE("PolyBilevel.TargetAtCurrentMinimumStopsImmediately") {
  const Vector th = poly_initial_theta();
  const auto gm = certigrad::testing::poly_grid_min(th);
  PolyBilevelConfig cfg;
  cfg.target_x = gm.t;
  cfg.target_y = gm.value;
  const BilevelTrace tr = poly_bilevel(th, cfg);
  CHECK((tr.converged));
  REQUIRE_FALSE((tr.records.empty()));
  CHECK_LE(tr.records.back().iteration, 2);
  CHECK_LE(tr.records.back().loss, 1e-10);
}

TEST_CASE("PolyBilevel.ConvergesAndSwitchesBasin") {
  const BilevelTrace tr = poly_bilevel(poly_initial_theta());
  REQUIRE_MESSAGE((tr.converged), tr.termination);
  CHECK_LT(tr.records.back().loss, 1e-4);
  const auto gm = certigrad::testing::poly_grid_min(tr.records.back().params);
  CHECK_LE(std::abs(gm.t - 1.7), 1e-2);
  int jumps = 0;
  for (size_t i = 1; i < tr.records.size(); ++i)
    if (std::abs(tr.records[i].x_star - tr.records[i - 1].x_star) > 0.5) ++jumps;
  CHECK_GE(jumps, 1);
}

TEST_CASE("StereoMeasure.ZeroNoiseRoundTrip") {
  Rng rng(1);
  const Pose pose = sample_pose(rng);
  for (const Vec3& m : grid_landmarks()) {
    const StereoMeasurement meas = stereo_measure(noiseless(), pose, m, rng);
    const Vec3 truth = pose.C * (m + pose.t);
    CHECK_LE((meas.m_tilde - truth).norm(), 1e-12 * truth.norm());
  }
}

TEST_CASE("StereoMeasure.OnAxisDisparity") {
  const Pixel px = stereo_project(CameraModel{}, Vec3(0.0, 0.0, 3.0));
  CHECK_LE(std::abs((px.d) - (38.76)), 1e-12);
}

TEST_CASE("StereoMeasure.Errors") {
  Rng rng(0);
  Pose pose;
  for (const auto& [m, code] : {std::pair{Vec3(0, 0, -2), ErrorCode::BehindCamera}}) {
    try {
      stereo_measure(noiseless(), pose, m, rng);
      FAIL("expected an exception");
    } catch (const Error& e) {
      CHECK_EQ(e.code(), code);
    }
  }
  try {
    stereo_backproject(CameraModel{}, Pixel{0.0, 0.0, 0.0});
    FAIL("expected an exception");
  } catch (const Error& e) {
    CHECK_EQ(e.code(), ErrorCode::ZeroDisparity);
  }
}

TEST_CASE("StereoMeasure.WeightLeastCertainAlongDepth") {
  const CameraModel cam;
  const Vec3 p(0.0, 0.0, 3.0);
  const Pixel clean = stereo_project(cam, p);
  const Mat3 w = stereo_weight(cam, clean);
  Eigen::SelfAdjointEigenSolver<Mat3> we(w);
  const Vec3 weak = we.eigenvectors().col(0);
  // Monte-Carlo covariance of the backprojected point.
  Rng rng(2025);
  std::normal_distribution<double> nd(0.0, 1.0);
  const int draws = 100000;
  std::vector<Vec3> pts;
  Vec3 mean = Vec3::Zero();
  for (int i = 0; i < draws; ++i) {
    Pixel px = clean;
    const double ul = nd(rng) * cam.sigma_u, ur = nd(rng) * cam.sigma_u;
    px.u += ul;
    px.v += nd(rng) * cam.sigma_v;
    px.d += ul - ur;
    pts.push_back(stereo_backproject(cam, px));
    mean += pts.back();
  }
  mean /= draws;
  Mat3 cov = Mat3::Zero();
  for (const Vec3& q : pts) cov += (q - mean) * (q - mean).transpose();
  cov /= draws - 1;
  const Vec3 mc = Eigen::SelfAdjointEigenSolver<Mat3>(cov).eigenvectors().col(2);
  const double deg = 180.0 / M_PI;
  CHECK_LE(std::acos(std::min(1.0, std::abs(weak.z()))) * deg, 5.0);
  CHECK_LE(std::acos(std::min(1.0, std::abs(mc.z()))) * deg, 5.0);
}

TEST_CASE("Localization.ZeroNoiseScalarRecoversPose") {
  Rng rng(3);
  const Pose pose = sample_pose(rng);
  const LocalizationInstance inst = make_instance(noiseless(), pose, grid_landmarks(), Weighting::Scalar, rng);
  const PipelineResult res = solve_and_certify(build_localization_qcqp(inst, true));
  REQUIRE_EQ(res.solution.verdict, Verdict::TightCertified);
  const Pose got = x_to_pose(res.solution.x);
  CHECK_LE((got.C - pose.C).cwiseAbs().maxCoeff(), 1e-8);
  CHECK_LE((got.t - pose.t).cwiseAbs().maxCoeff(), 1e-8);
  CHECK_LE(std::abs((res.sdp.primal_objective) - (0.0)), 1e-8);
}

TEST_CASE("LocalizationProperty.QuadraticCostEqualsDirectCost") {
  Rng rng(4);
  const LocalizationInstance inst = make_instance({}, sample_pose(rng), grid_landmarks(), Weighting::Matrix, rng);
  const Matrix q = build_localization_qcqp(inst, true).cost_dense();
  for (int trial = 0; trial < 50; ++trial) {
    const Mat3 c = random_rotation(rng);
    const Vec3 w = certigrad::testing::random_vector(rng, 3);
    Vector x(13);
    x << 1.0, c.reshaped(), w;
    const double direct = direct_cost(inst, c, w);
    CHECK_LE(std::abs(x.dot(q * x) - direct), 1e-12 * direct);
  }
}

TEST_CASE("Localization.GridSetupTightCertified") {
  for (std::uint64_t seed = 10; seed < 13; ++seed) {
    Rng rng(seed);
    const LocalizationInstance inst = make_instance({}, sample_pose(rng), grid_landmarks(), Weighting::Matrix, rng);
    const PipelineResult res = solve_and_certify(build_localization_qcqp(inst, true));
    CHECK_MESSAGE((res.solution.verdict) == (Verdict::TightCertified), "seed " << seed);
    CHECK_GT(res.solution.tightness_ratio, 1e5);
    const Pose p = x_to_pose(res.solution.x);
    CHECK_LE((p.C.transpose() * p.C - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-6);
    CHECK_LE(std::abs((p.C.determinant()) - (1.0)), 1e-6);
  }
}

TEST_CASE("Localization.TooFewLandmarks") {
  Rng rng(0);
  const std::vector<Vec3> two{Vec3(0, 0, 0), Vec3(0.1, 0, 0)};
  try {
    build_localization_qcqp(make_instance({}, sample_pose(rng), two, Weighting::Scalar, rng), true);
    FAIL("expected an exception");
  } catch (const Error& e) {
    CHECK_EQ(e.code(), ErrorCode::TooFewLandmarks);
  }
}

TEST_CASE("Umeyama.ZeroNoiseExactAndAgreesWithPipeline") {
  Rng rng(6);
  const Pose pose = sample_pose(rng);
  const Pose exact = umeyama_solve(make_instance(noiseless(), pose, grid_landmarks(), Weighting::Scalar, rng));
  CHECK_LE((exact.C - pose.C).cwiseAbs().maxCoeff(), 1e-10);
  CHECK_LE((exact.t - pose.t).cwiseAbs().maxCoeff(), 1e-10);

  const LocalizationInstance noisy = make_instance({}, pose, grid_landmarks(), Weighting::Scalar, rng);
  const Pose svd = umeyama_solve(noisy);
  const Pose sdp = x_to_pose(solve_and_certify(build_localization_qcqp(noisy, true)).solution.x);
  CHECK_LE(std::sqrt((svd.t - sdp.t).squaredNorm() / 3.0), 1e-6);
  CHECK_LE(std::sqrt((svd.C - sdp.C).squaredNorm() / 9.0), 1e-6);
}

TEST_CASE("Umeyama.ReflectionTrapKeepsDeterminantPositive") {
  Rng rng(8);
  LocalizationInstance inst;
  Mat3 mirror = Mat3::Identity();
  mirror(0, 0) = -1.0;
  for (const Vec3& m : grid_landmarks()) {
    inst.landmarks.push_back(m);
    inst.measurements.push_back(mirror * (m + Vec3(0, 0, 3)));
    inst.weights.push_back(Mat3::Identity());
  }
  const Pose p = umeyama_solve(inst);
  CHECK_LE(std::abs((p.C.determinant()) - (1.0)), 1e-12);
}

TEST_CASE("UmeyamaProperty.AlwaysSpecialOrthogonal") {
  Rng rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    const LocalizationInstance inst = make_instance({}, sample_pose(rng), grid_landmarks(), Weighting::Scalar, rng);
    const Pose p = umeyama_solve(inst);
    CHECK_LE((p.C.transpose() * p.C - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
    CHECK_LE(std::abs((p.C.determinant()) - (1.0)), 1e-12);
  }
}

TEST_CASE("StereoProperty.ForwardInverseIdentity") {
  Rng rng(10);
  std::uniform_real_distribution<double> lat(-1.0, 1.0), dep(0.5, 10.0);
  const CameraModel cam;
  for (int trial = 0; trial < 500; ++trial) {
    const Vec3 p(lat(rng), lat(rng), dep(rng));
    CHECK_LE((stereo_backproject(cam, stereo_project(cam, p)) - p).norm(), 1e-12 * p.norm());
  }
}

TEST_CASE("Calibration.GradientPointsTowardTruth") {
  CalibConfig cfg;
  cfg.poses_per_trial = 1;
  cfg.noise = false;
  Rng rng(1);
  const CalibScene scene = make_calib_scene(cfg, rng);
  CHECK_GT(calib_loss_and_grad(scene, 0.245).grad, 0.0);
  CHECK_LT(calib_loss_and_grad(scene, 0.235).grad, 0.0);
}

TEST_CASE("Calibration.ZeroNoiseSinglePoseConverges") {
  CalibConfig cfg;
  cfg.trials = 1;
  cfg.poses_per_trial = 1;
  cfg.noise = false;
  cfg.lr = 1e-2;
  cfg.grad_tol = 1e-9;
  cfg.max_outer = 300;
  const std::vector<BilevelTrace> tr = calibrate_baseline(cfg);
  REQUIRE_EQ(tr.size(), 1u);
  const auto& rec = tr[0].records;
  REQUIRE_GT(rec.size(), 10u);
  CHECK_LT(rec.back().x_star, 1e-5);
  for (size_t i = rec.size() - 10; i < rec.size(); ++i) CHECK_LE(rec[i].x_star, rec[i - 1].x_star + 1e-12);
}

TEST_CASE("Calibration.StartAtTruthStopsImmediately") {
  CalibConfig cfg;
  cfg.trials = 1;
  cfg.poses_per_trial = 3;
  cfg.noise = false;
  cfg.b_init_error = 0.0;
  const std::vector<BilevelTrace> tr = calibrate_baseline(cfg);
  CHECK((tr[0].converged));
  CHECK_EQ(tr[0].records.size(), 1u);
}

TEST_CASE("JacobianCompare.DeterministicReplay") {
  JacCompareConfig cfg;
  cfg.trials = 2;
  cfg.seed = 21;
  cfg.run_fd = false;
  const JacCompareSummary a = jacobian_compare(cfg), b = jacobian_compare(cfg);
  REQUIRE_EQ(a.rows.size(), b.rows.size());
  for (size_t i = 0; i < a.rows.size(); ++i) {
    CHECK_EQ(a.rows[i].is_vs_cift, b.rows[i].is_vs_cift);
    CHECK_EQ(a.rows[i].ratio, b.rows[i].ratio);
  }
}
