#pragma once

// Polynomial bilevel problem and matrix-weighted stereo localization.

#include "certigrad/autotight.hpp"
#include "certigrad/certify.hpp"
#include "certigrad/common.hpp"
#include "certigrad/diff.hpp"
#include "certigrad/qcqp.hpp"
#include "certigrad/sdp.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace certigrad::experiments {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Rng = std::mt19937_64;

// ---------------------------------------------------------------- polynomial

/// Coefficients of 10 + 2.6334 t - 4.3443 t^2 + 0.8055 t^4 - 0.1334 t^5 + 0.0389 t^6.
Vector poly_initial_theta();

/// x = (1, t, t^2, t^3); Q(theta) carries d/dtheta sensitivities; h = 0.
HomQCQP poly_problem(const Vector& theta);
/// Only A_1 (t^2 = t * t). Used for constraint discovery and the tightening loop.
HomQCQP poly_problem_stripped(const Vector& theta);
std::vector<Matrix> poly_constraint_matrices();

double poly_eval(const Vector& theta, double t);

/// x = (1, t, t^2, t^3) with t uniform on [-1.5, 1.5].
FeasibleSampler poly_sampler();

struct PolyMinimum {
  double t = 0.0;
  double value = 0.0;
};

/// Dense grid over [lo, hi] followed by Newton polish on p'(t) = 0.
PolyMinimum poly_global_min(const Vector& theta, double lo = -3.0, double hi = 3.0, Index grid = 600001);

struct BilevelRecord {
  Index iteration = 0;
  double loss = 0.0;
  Vector params;
  double tightness_ratio = 0.0;
  double grad_norm = 0.0;
  double x_star = 0.0;  // inner minimizer (polynomial) or baseline error (calibration)
};

struct BilevelTrace {
  std::vector<BilevelRecord> records;
  bool converged = false;
  std::string termination;
};

struct PolyBilevelConfig {
  double target_x = 1.7;
  double target_y = 7.3;
  double lr = 1e-3;
  double loss_tol = 1e-4;
  Index max_outer = 50000;
  BackpropMethod method = BackpropMethod::IS;
};

/// Outer gradient descent on (x* - target_x)^2 + (p(x*) - target_y)^2.
/// Loss of tightness aborts with termination = "TightnessLost".
BilevelTrace poly_bilevel(const Vector& theta0, const PolyBilevelConfig& cfg = {});

// ------------------------------------------------------------------- stereo

struct CameraModel {
  double b = 0.24;
  double fu = 484.5;
  double fv = 484.5;
  double cu = 0.0;
  double cv = 0.0;
  double sigma_u = 0.5;
  double sigma_v = 0.5;
};

/// Camera-frame point p = C (m + t); t is minus the camera position in the world frame.
struct Pose {
  Mat3 C = Mat3::Identity();
  Vec3 t = Vec3::Zero();
};

struct Pixel {
  double u = 0.0;
  double v = 0.0;
  double d = 0.0;  // disparity u_l - u_r
};

Pixel stereo_project(const CameraModel& cam, const Vec3& p_cam);
Vec3 stereo_backproject(const CameraModel& cam, const Pixel& px);
/// d m / d (u, v, d) of the inverse model.
Mat3 stereo_backproject_jacobian(const CameraModel& cam, const Pixel& px);

/// (J Sigma_px J^T)^-1 at the given pixels; zero pixel noise falls back to unit-pixel covariance.
Mat3 stereo_weight(const CameraModel& cam, const Pixel& px);

struct StereoMeasurement {
  Vec3 m_tilde;
  Mat3 W;
  Pixel pixel;  // noisy pixels
};

/// Throws BehindCamera / ZeroDisparity.
StereoMeasurement stereo_measure(const CameraModel& cam, const Pose& pose, const Vec3& landmark, Rng& rng);

enum class Weighting { Scalar, Matrix };

struct LocalizationInstance {
  std::vector<Vec3> landmarks;
  std::vector<Vec3> measurements;
  std::vector<Mat3> weights;
  Pose ground_truth;
};

/// 8 x 8 grid on the z = 0 plane spanning [-0.5, 0.5]^2.
std::vector<Vec3> grid_landmarks(Index per_side = 8, double extent = 1.0);

/// Camera 3 m from the origin within 45 deg of +z, looking at the origin with random
/// roll and a small random tilt; re-drawn until the origin is within 45 deg of the axis.
Pose sample_pose(Rng& rng, double radius = 3.0);

Mat3 random_rotation(Rng& rng);

/// Scalar weighting uses W_k = I; matrix weighting propagates pixel covariance.
/// Weights are normalized to mean trace 3.
LocalizationInstance make_instance(const CameraModel& cam, const Pose& pose, const std::vector<Vec3>& landmarks,
                                   Weighting weighting, Rng& rng);

enum class LocalizationParams { None, Landmarks };

/// x = (1, vec(C), w), w = C t, n = 13, h = 0. Constraints C^T C = I (6), and if
/// redundant also C C^T = I (6) and the 9 handedness quadratics c_i x c_j = c_k.
/// With params = Landmarks, sensitivities are the tangent dQ/dm_k at the given landmarks.
HomQCQP build_localization_qcqp(const LocalizationInstance& inst, bool redundant,
                                LocalizationParams params = LocalizationParams::None);

Matrix localization_cost(const LocalizationInstance& inst);
/// dQ for perturbations (dm_k, dm_tilde_k) of landmarks and measurements.
Matrix localization_cost_tangent(const LocalizationInstance& inst, const std::vector<Vec3>& dlandmarks,
                                 const std::vector<Vec3>& dmeasurements);

std::vector<Matrix> rotation_constraints(bool redundant);

/// x = (1, vec(C), w) with C uniform on SO(3) and w standard normal.
FeasibleSampler localization_sampler();

Vector pose_to_x(const Pose& pose);
Pose x_to_pose(const Vector& x);
/// (vec(C), t) as a 12-vector.
Vector pose_vector(const Pose& pose);
/// d pose_vector / d x at x (12 x 13).
Matrix pose_vector_jacobian(const Vector& x);

/// Weighted closed-form registration using w_k = trace(W_k) / 3. Throws DegenerateConfiguration.
Pose umeyama_solve(const LocalizationInstance& inst);

/// Projects a (possibly non-tight) X onto SO(3) x R^3 via its leading factor.
Vector localization_rounding(const HomQCQP& q, const Matrix& X);

double matrix_inf_norm(const Matrix& a);
/// ||A - B||_inf / ||B||_inf
double relative_inf_diff(const Matrix& a, const Matrix& ref);

struct JacCompareConfig {
  Index trials = 20;
  Weighting weighting = Weighting::Matrix;
  std::uint64_t seed = 0;
  bool redundant = true;
  double fd_step = 1e-5;
  bool run_fd = true;
  CameraModel camera;
};

struct JacCompareRow {
  Index trial = 0;
  bool ok = false;
  std::string error;
  double ratio = 0.0;
  double is_vs_fd = 0.0;
  double cift_vs_fd = 0.0;
  double is_vs_cift = 0.0;
  double is_vs_svd = 0.0;  // scalar weighting only
  double rmse_trans = 0.0;  // SDP vs closed form, scalar weighting only
  double rmse_rot = 0.0;
  double time_is = 0.0;
  double time_cift = 0.0;
};

struct JacCompareSummary {
  std::vector<JacCompareRow> rows;
  double mean_is_vs_fd = 0.0, std_is_vs_fd = 0.0;
  double mean_cift_vs_fd = 0.0, std_cift_vs_fd = 0.0;
  double mean_is_vs_cift = 0.0, std_is_vs_cift = 0.0;
  double mean_is_vs_svd = 0.0, std_is_vs_svd = 0.0;
  double rmse_trans = 0.0, rmse_rot = 0.0;
  Index failures = 0;
};

/// Jacobians of (vec(C*), t*) with respect to all landmark coordinates.
JacCompareSummary jacobian_compare(const JacCompareConfig& cfg, int jobs = 1);

struct CalibConfig {
  Index trials = 10;
  Index poses_per_trial = 20;
  double b_init_error = 0.003;
  double lr = 1e-4;
  double grad_tol = 1e-3;
  Index max_outer = 150;
  std::uint64_t seed = 0;
  bool noise = true;
  CameraModel camera;
};

/// Per-trial gradient descent on the baseline; each record's x_star holds |b - b_true|.
std::vector<BilevelTrace> calibrate_baseline(const CalibConfig& cfg, int jobs = 1);

/// Loss and d loss / d b at baseline b for fixed pixel measurements.
struct CalibEval {
  double loss = 0.0;
  double grad = 0.0;
  double min_ratio = 0.0;
};

struct CalibScene {
  CameraModel camera;
  std::vector<Vec3> landmarks;
  std::vector<Pose> poses;
  std::vector<std::vector<Pixel>> pixels;  // per pose, per landmark
};

CalibScene make_calib_scene(const CalibConfig& cfg, Rng& rng);
CalibEval calib_loss_and_grad(const CalibScene& scene, double b);

}  // namespace certigrad::experiments
