#include "certigrad/experiments.hpp"

#include "certigrad/symlin.hpp"

#include <Eigen/Geometry>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <cmath>
#include <numbers>

namespace certigrad::experiments {

namespace {

constexpr Index kDim = 13;

// Position of C(r, c) inside x = (1, vec(C), w).
constexpr Index cidx(Index c, Index r) { return 1 + 3 * c + r; }

}  // namespace

Pixel stereo_project(const CameraModel& cam, const Vec3& p) {
  if (!(p.z() > 0.0)) throw Error(ErrorCode::BehindCamera, "landmark depth " + std::to_string(p.z()) + " <= 0");
  return {cam.fu * p.x() / p.z() + cam.cu, cam.fv * p.y() / p.z() + cam.cv, cam.fu * cam.b / p.z()};
}

Vec3 stereo_backproject(const CameraModel& cam, const Pixel& px) {
  if (!(px.d > 0.0)) throw Error(ErrorCode::ZeroDisparity, "disparity " + std::to_string(px.d) + " <= 0");
  const double s = cam.b / px.d;
  return {s * (px.u - cam.cu), s * cam.fu / cam.fv * (px.v - cam.cv), s * cam.fu};
}

Mat3 stereo_backproject_jacobian(const CameraModel& cam, const Pixel& px) {
  const double s = cam.b / px.d;
  const double s2 = cam.b / (px.d * px.d);
  const double r = cam.fu / cam.fv;
  Mat3 j;
  j << s, 0.0, -s2 * (px.u - cam.cu),
       0.0, s * r, -s2 * r * (px.v - cam.cv),
       0.0, 0.0, -s2 * cam.fu;
  return j;
}

namespace {

// Covariance of (u_l, v, d) with independent noise on u_l, v and u_r. A camera
// without noise still weights with unit-pixel covariance.
Mat3 pixel_covariance(const CameraModel& cam) {
  const double su2 = cam.sigma_u > 0.0 ? cam.sigma_u * cam.sigma_u : 1.0;
  const double sv2 = cam.sigma_v > 0.0 ? cam.sigma_v * cam.sigma_v : 1.0;
  Mat3 s;
  s << su2, 0.0, su2,
       0.0, sv2, 0.0,
       su2, 0.0, 2.0 * su2;
  return s;
}

}  // namespace

Mat3 stereo_weight(const CameraModel& cam, const Pixel& px) {
  const Mat3 j = stereo_backproject_jacobian(cam, px);
  const Mat3 cov = j * pixel_covariance(cam) * j.transpose();
  const Mat3 w = cov.inverse();
  return 0.5 * (w + w.transpose());
}

StereoMeasurement stereo_measure(const CameraModel& cam, const Pose& pose, const Vec3& landmark, Rng& rng) {
  const Vec3 p = pose.C * (landmark + pose.t);
  const Pixel clean = stereo_project(cam, p);
  std::normal_distribution<double> nd(0.0, 1.0);
  const double nul = nd(rng), nv = nd(rng), nur = nd(rng);
  Pixel px = clean;
  px.u = clean.u + cam.sigma_u * nul;
  px.v = clean.v + cam.sigma_v * nv;
  const double ur = clean.u - clean.d + cam.sigma_u * nur;
  px.d = px.u - ur;
  StereoMeasurement out;
  out.pixel = px;
  out.m_tilde = stereo_backproject(cam, px);
  out.W = stereo_weight(cam, px);
  return out;
}

std::vector<Vec3> grid_landmarks(Index per_side, double extent) {
  std::vector<Vec3> out;
  for (Index i = 0; i < per_side; ++i) {
    for (Index j = 0; j < per_side; ++j) {
      const double a = -0.5 * extent + extent * static_cast<double>(i) / static_cast<double>(per_side - 1);
      const double b = -0.5 * extent + extent * static_cast<double>(j) / static_cast<double>(per_side - 1);
      out.emplace_back(a, b, 0.0);
    }
  }
  return out;
}

Mat3 random_rotation(Rng& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::Quaterniond q(nd(rng), nd(rng), nd(rng), nd(rng));
  q.normalize();
  return q.toRotationMatrix();
}

Pose sample_pose(Rng& rng, double radius) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> ud(0.0, 2.0 * std::numbers::pi);
  const double cone = std::cos(std::numbers::pi / 4.0);
  while (true) {
    Vec3 dir(nd(rng), nd(rng), nd(rng));
    dir.normalize();
    if (dir.z() <= cone) continue;
    const Vec3 pos = radius * dir;
    const Vec3 z = -dir;
    const Vec3 up = std::abs(z.z()) < 0.99 ? Vec3::UnitZ() : Vec3::UnitX();
    const Vec3 x = up.cross(z).normalized();
    const Vec3 y = z.cross(x);
    Mat3 cwc;
    cwc << x, y, z;
    const Mat3 roll = Eigen::AngleAxisd(ud(rng), z).toRotationMatrix();
    const Vec3 tilt_vec(0.2 * nd(rng), 0.2 * nd(rng), 0.2 * nd(rng));
    const Mat3 tilt =
        tilt_vec.norm() > 0.0 ? Mat3(Eigen::AngleAxisd(tilt_vec.norm(), tilt_vec.normalized())) : Mat3::Identity();
    cwc = tilt * roll * cwc;
    // Optical axis must see the grid center within 45 degrees.
    const Vec3 axis = cwc.col(2);
    if (axis.dot(-pos.normalized()) < cone) continue;
    Pose pose;
    pose.C = cwc.transpose();
    pose.t = -pos;
    return pose;
  }
}

LocalizationInstance make_instance(const CameraModel& cam, const Pose& pose, const std::vector<Vec3>& landmarks,
                                   Weighting weighting, Rng& rng) {
  LocalizationInstance inst;
  inst.ground_truth = pose;
  inst.landmarks = landmarks;
  double trace_sum = 0.0;
  for (const Vec3& m : landmarks) {
    const StereoMeasurement s = stereo_measure(cam, pose, m, rng);
    inst.measurements.push_back(s.m_tilde);
    inst.weights.push_back(weighting == Weighting::Scalar ? Mat3::Identity() : s.W);
    trace_sum += inst.weights.back().trace();
  }
  if (weighting == Weighting::Matrix && trace_sum > 0.0) {
    const double scale = 3.0 * static_cast<double>(landmarks.size()) / trace_sum;
    for (Mat3& w : inst.weights) w *= scale;
  }
  return inst;
}

namespace {

Eigen::Matrix<double, 3, kDim> residual_map(const Vec3& m, const Vec3& m_tilde) {
  Eigen::Matrix<double, 3, kDim> b = Eigen::Matrix<double, 3, kDim>::Zero();
  b.col(0) = m_tilde;
  for (Index c = 0; c < 3; ++c) b.block<3, 3>(0, cidx(c, 0)) = -m(c) * Mat3::Identity();
  b.block<3, 3>(0, 10) = -Mat3::Identity();
  return b;
}

Eigen::Matrix<double, 3, kDim> residual_map_tangent(const Vec3& dm, const Vec3& dm_tilde) {
  Eigen::Matrix<double, 3, kDim> b = Eigen::Matrix<double, 3, kDim>::Zero();
  b.col(0) = dm_tilde;
  for (Index c = 0; c < 3; ++c) b.block<3, 3>(0, cidx(c, 0)) = -dm(c) * Mat3::Identity();
  return b;
}

void check_instance(const LocalizationInstance& inst) {
  const size_t k = inst.landmarks.size();
  if (inst.measurements.size() != k || inst.weights.size() != k) {
    throw Error(ErrorCode::DimensionMismatch, "localization instance: landmark/measurement/weight counts differ");
  }
  if (k < 3) throw Error(ErrorCode::TooFewLandmarks, "at least 3 landmarks are required, got " + std::to_string(k));
}

std::vector<Triplet> upper_triplets(const Matrix& s) {
  std::vector<Triplet> out;
  for (Index c = 0; c < s.cols(); ++c) {
    for (Index r = 0; r <= c; ++r) {
      if (s(r, c) != 0.0) out.push_back({r, c, s(r, c)});
    }
  }
  return out;
}

}  // namespace

Matrix localization_cost(const LocalizationInstance& inst) {
  check_instance(inst);
  Matrix q = Matrix::Zero(kDim, kDim);
  for (size_t k = 0; k < inst.landmarks.size(); ++k) {
    const auto b = residual_map(inst.landmarks[k], inst.measurements[k]);
    q += b.transpose() * inst.weights[k] * b;
  }
  return symmetrized(q);
}

Matrix localization_cost_tangent(const LocalizationInstance& inst, const std::vector<Vec3>& dlandmarks,
                                 const std::vector<Vec3>& dmeasurements) {
  check_instance(inst);
  const size_t k_count = inst.landmarks.size();
  require_dims(dlandmarks.empty() || dlandmarks.size() == k_count, "cost tangent: one dm per landmark");
  require_dims(dmeasurements.empty() || dmeasurements.size() == k_count, "cost tangent: one dm~ per landmark");
  Matrix dq = Matrix::Zero(kDim, kDim);
  for (size_t k = 0; k < k_count; ++k) {
    const Vec3 dm = dlandmarks.empty() ? Vec3::Zero() : dlandmarks[k];
    const Vec3 dmt = dmeasurements.empty() ? Vec3::Zero() : dmeasurements[k];
    const auto b = residual_map(inst.landmarks[k], inst.measurements[k]);
    const auto db = residual_map_tangent(dm, dmt);
    const Matrix t = db.transpose() * inst.weights[k] * b;
    dq += t + t.transpose();
  }
  return dq;
}

std::vector<Matrix> rotation_constraints(bool redundant) {
  std::vector<Matrix> out;
  auto sym_pair = [](Matrix& a, Index i, Index j, double v) {
    a(i, j) += 0.5 * v;
    a(j, i) += 0.5 * v;
  };
  // Columns orthonormal: c_i . c_j = delta_ij.
  for (Index i = 0; i < 3; ++i) {
    for (Index j = i; j < 3; ++j) {
      Matrix a = Matrix::Zero(kDim, kDim);
      for (Index r = 0; r < 3; ++r) sym_pair(a, cidx(i, r), cidx(j, r), 1.0);
      if (i == j) a(0, 0) -= 1.0;
      out.push_back(a);
    }
  }
  if (!redundant) return out;
  // Rows orthonormal.
  for (Index i = 0; i < 3; ++i) {
    for (Index j = i; j < 3; ++j) {
      Matrix a = Matrix::Zero(kDim, kDim);
      for (Index c = 0; c < 3; ++c) sym_pair(a, cidx(c, i), cidx(c, j), 1.0);
      if (i == j) a(0, 0) -= 1.0;
      out.push_back(a);
    }
  }
  // Handedness: (c_i x c_j)_l = x_0 (c_k)_l for cyclic (i, j, k).
  const Index cyc[3][3] = {{0, 1, 2}, {1, 2, 0}, {2, 0, 1}};
  for (const auto& ijk : cyc) {
    for (Index l = 0; l < 3; ++l) {
      const Index a1 = (l + 1) % 3, a2 = (l + 2) % 3;
      Matrix a = Matrix::Zero(kDim, kDim);
      sym_pair(a, cidx(ijk[0], a1), cidx(ijk[1], a2), 1.0);
      sym_pair(a, cidx(ijk[0], a2), cidx(ijk[1], a1), -1.0);
      sym_pair(a, 0, cidx(ijk[2], l), -1.0);
      out.push_back(a);
    }
  }
  return out;
}

FeasibleSampler localization_sampler() {
  return {kDim, [](std::uint64_t seed) {
            Rng rng(seed);
            std::normal_distribution<double> nd(0.0, 1.0);
            Pose pose;
            pose.C = random_rotation(rng);
            const Vec3 w(nd(rng), nd(rng), nd(rng));
            pose.t = pose.C.transpose() * w;
            return pose_to_x(pose);
          }};
}

HomQCQP build_localization_qcqp(const LocalizationInstance& inst, bool redundant, LocalizationParams params) {
  const Matrix q = localization_cost(inst);
  std::vector<std::vector<Triplet>> sens;
  if (params == LocalizationParams::Landmarks) {
    const size_t k_count = inst.landmarks.size();
    for (size_t k = 0; k < k_count; ++k) {
      const auto b = residual_map(inst.landmarks[k], inst.measurements[k]);
      for (Index j = 0; j < 3; ++j) {
        const auto db = residual_map_tangent(Vec3::Unit(j), Vec3::Zero());
        const Matrix t = db.transpose() * inst.weights[k] * b;
        sens.push_back(upper_triplets(t + t.transpose()));
      }
    }
  }
  ParamSymMatrix cost(kDim, upper_triplets(q), std::move(sens));
  std::vector<ParamSymMatrix> cons;
  std::vector<bool> flags;
  const std::vector<Matrix> mats = rotation_constraints(redundant);
  for (size_t i = 0; i < mats.size(); ++i) {
    cons.push_back(ParamSymMatrix::from_dense(mats[i]));
    flags.push_back(i >= 6);
  }
  return build_hom_qcqp(std::move(cost), std::move(cons), 0, std::move(flags));
}

Vector pose_to_x(const Pose& pose) {
  Vector x(kDim);
  x(0) = 1.0;
  x.segment(1, 9) = pose.C.reshaped();
  x.segment(10, 3) = pose.C * pose.t;
  return x;
}

Pose x_to_pose(const Vector& x) {
  require_dims(x.size() == kDim, "x_to_pose: expected a 13-vector");
  Pose p;
  p.C = x.segment(1, 9).reshaped(3, 3);
  p.t = p.C.transpose() * Vec3(x.segment(10, 3));
  return p;
}

Vector pose_vector(const Pose& pose) {
  Vector v(12);
  v.head(9) = pose.C.reshaped();
  v.tail(3) = pose.t;
  return v;
}

Matrix pose_vector_jacobian(const Vector& x) {
  require_dims(x.size() == kDim, "pose_vector_jacobian: expected a 13-vector");
  const Mat3 c = x.segment(1, 9).reshaped(3, 3);
  const Vec3 w = x.segment(10, 3);
  Matrix j = Matrix::Zero(12, kDim);
  j.block(0, 1, 9, 9).setIdentity();
  for (Index i = 0; i < 3; ++i) {
    for (Index r = 0; r < 3; ++r) {
      j(9 + i, cidx(i, r)) = w(r);
      j(9 + i, 10 + r) = c(r, i);
    }
  }
  return j;
}

Pose umeyama_solve(const LocalizationInstance& inst) {
  check_instance(inst);
  double wsum = 0.0;
  Vec3 mu = Vec3::Zero(), mu_t = Vec3::Zero();
  std::vector<double> w(inst.landmarks.size());
  for (size_t k = 0; k < w.size(); ++k) {
    w[k] = inst.weights[k].trace() / 3.0;
    wsum += w[k];
    mu += w[k] * inst.landmarks[k];
    mu_t += w[k] * inst.measurements[k];
  }
  if (!(wsum > 0.0)) throw Error(ErrorCode::DegenerateConfiguration, "umeyama_solve: weights sum to zero");
  mu /= wsum;
  mu_t /= wsum;
  Mat3 cross = Mat3::Zero();
  for (size_t k = 0; k < w.size(); ++k) {
    cross += w[k] * (inst.measurements[k] - mu_t) * (inst.landmarks[k] - mu).transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 s = svd.singularValues();
  if (!(s(1) > 1e-12 * std::max(s(0), 1e-300))) {
    throw Error(ErrorCode::DegenerateConfiguration, "umeyama_solve: cross-covariance has rank < 2");
  }
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  Pose p;
  p.C = svd.matrixU() * d * svd.matrixV().transpose();
  const Vec3 wvec = mu_t - p.C * mu;
  p.t = p.C.transpose() * wvec;
  return p;
}

Vector localization_rounding(const HomQCQP& q, const Matrix& X) {
  require_dims(q.dim() == kDim && X.rows() == kDim, "localization_rounding: expected 13 x 13");
  const symlin::EigDecomp eig = symlin::sym_eig(symmetrized(X));
  Vector x = eig.eigenvectors.col(0);
  if (std::abs(x(0)) < 1e-12) throw Error(ErrorCode::HomogeneousEntryZero, "localization_rounding: x_0 ~ 0");
  x /= x(0);
  const Mat3 c = x.segment(1, 9).reshaped(3, 3);
  Eigen::JacobiSVD<Mat3> svd(c, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  Pose p;
  p.C = svd.matrixU() * d * svd.matrixV().transpose();
  p.t = p.C.transpose() * Vec3(x.segment(10, 3));
  return pose_to_x(p);
}

double matrix_inf_norm(const Matrix& a) { return a.size() == 0 ? 0.0 : a.cwiseAbs().rowwise().sum().maxCoeff(); }

double relative_inf_diff(const Matrix& a, const Matrix& ref) {
  require_dims(a.rows() == ref.rows() && a.cols() == ref.cols(), "relative_inf_diff: shape mismatch");
  const double denom = matrix_inf_norm(ref);
  const double num = matrix_inf_norm(a - ref);
  return denom > 0.0 ? num / denom : num;
}

}  // namespace certigrad::experiments
