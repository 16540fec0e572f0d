#include "certigrad/experiments.hpp"

#include <Eigen/Geometry>

#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <thread>

namespace certigrad::experiments {

namespace {

Rng trial_rng(std::uint64_t seed, Index trial, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(trial), static_cast<std::uint32_t>(stream)};
  return Rng(seq);
}

// Runs body(i) for i in [0, count) on up to `jobs` threads; each index owns its output slot.
void parallel_for(Index count, int jobs, const std::function<void(Index)>& body) {
  if (jobs <= 1 || count <= 1) {
    for (Index i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<Index> next{0};
  std::vector<std::thread> pool;
  const int n = static_cast<int>(std::min<Index>(jobs, count));
  for (int t = 0; t < n; ++t) {
    pool.emplace_back([&] {
      for (Index i = next++; i < count; i = next++) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void mean_std(const std::vector<double>& v, double& mean, double& sd) {
  mean = sd = 0.0;
  if (v.empty()) return;
  for (double a : v) mean += a;
  mean /= static_cast<double>(v.size());
  for (double a : v) sd += (a - mean) * (a - mean);
  sd = std::sqrt(sd / static_cast<double>(v.size()));
}

Vector stack_landmarks(const std::vector<Vec3>& ls) {
  Vector th(3 * static_cast<Index>(ls.size()));
  for (size_t k = 0; k < ls.size(); ++k) th.segment(3 * static_cast<Index>(k), 3) = ls[k];
  return th;
}

std::vector<Vec3> unstack_landmarks(const Vector& th) {
  std::vector<Vec3> out;
  for (Index k = 0; k < th.size() / 3; ++k) out.emplace_back(th.segment(3 * k, 3));
  return out;
}

double rotation_angle(const Mat3& a, const Mat3& b) {
  return Eigen::AngleAxisd(a.transpose() * b).angle();
}

JacCompareRow run_jac_trial(const JacCompareConfig& cfg, Index trial) {
  JacCompareRow row;
  row.trial = trial;
  try {
    Rng rng = trial_rng(cfg.seed, trial, 1);
    const Pose pose = sample_pose(rng);
    const LocalizationInstance inst = make_instance(cfg.camera, pose, grid_landmarks(), cfg.weighting, rng);
    const HomQCQP q = build_localization_qcqp(inst, cfg.redundant, LocalizationParams::Landmarks);
    const PipelineResult res = solve_and_certify(q);
    row.ratio = res.solution.tightness_ratio;
    if (res.solution.verdict != Verdict::TightCertified) {
      throw Error(ErrorCode::TightnessLost, std::string("verdict ") + std::string(to_string(res.solution.verdict)));
    }
    const Vector& x = res.solution.x;
    const Matrix pj = pose_vector_jacobian(x);

    auto t0 = std::chrono::steady_clock::now();
    const KKTWorkspace ws = make_kkt_workspace(q, x, res.solution.lambda);
    const Matrix j_is = pj * jacobian_is(q, ws);
    row.time_is = seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    const Matrix j_cift = pj * jacobian_cift(q, x);
    row.time_cift = seconds_since(t0);
    row.is_vs_cift = relative_inf_diff(j_is, j_cift);

    const Vector theta = stack_landmarks(inst.landmarks);
    if (cfg.run_fd) {
      auto f = [&](const Vector& th) {
        LocalizationInstance p = inst;
        p.landmarks = unstack_landmarks(th);
        return pose_vector(x_to_pose(certified_solve(build_localization_qcqp(p, cfg.redundant))));
      };
      const Matrix j_fd = central_difference(f, theta, cfg.fd_step);
      row.is_vs_fd = relative_inf_diff(j_is, j_fd);
      row.cift_vs_fd = relative_inf_diff(j_cift, j_fd);
    }
    if (cfg.weighting == Weighting::Scalar) {
      auto g = [&](const Vector& th) {
        LocalizationInstance p = inst;
        p.landmarks = unstack_landmarks(th);
        return pose_vector(umeyama_solve(p));
      };
      const Matrix j_svd = central_difference(g, theta, cfg.fd_step);
      row.is_vs_svd = relative_inf_diff(j_is, j_svd);
      const Pose sdp_pose = x_to_pose(x);
      const Pose svd_pose = umeyama_solve(inst);
      row.rmse_trans = (sdp_pose.t - svd_pose.t).norm();
      row.rmse_rot = rotation_angle(sdp_pose.C, svd_pose.C);
    }
    row.ok = true;
  } catch (const Error& e) {
    row.ok = false;
    row.error = e.what();
  }
  return row;
}

}  // namespace

JacCompareSummary jacobian_compare(const JacCompareConfig& cfg, int jobs) {
  JacCompareSummary sum;
  sum.rows.resize(static_cast<size_t>(cfg.trials));
  parallel_for(cfg.trials, jobs, [&](Index i) { sum.rows[static_cast<size_t>(i)] = run_jac_trial(cfg, i); });
  std::vector<double> a, b, c, d;
  double st = 0.0, sr = 0.0;
  Index ok = 0;
  for (const auto& r : sum.rows) {
    if (!r.ok) {
      ++sum.failures;
      continue;
    }
    ++ok;
    a.push_back(r.is_vs_fd);
    b.push_back(r.cift_vs_fd);
    c.push_back(r.is_vs_cift);
    d.push_back(r.is_vs_svd);
    st += r.rmse_trans * r.rmse_trans;
    sr += r.rmse_rot * r.rmse_rot;
  }
  mean_std(a, sum.mean_is_vs_fd, sum.std_is_vs_fd);
  mean_std(b, sum.mean_cift_vs_fd, sum.std_cift_vs_fd);
  mean_std(c, sum.mean_is_vs_cift, sum.std_is_vs_cift);
  mean_std(d, sum.mean_is_vs_svd, sum.std_is_vs_svd);
  if (ok > 0) {
    sum.rmse_trans = std::sqrt(st / static_cast<double>(ok));
    sum.rmse_rot = std::sqrt(sr / static_cast<double>(ok));
  }
  return sum;
}

// ------------------------------------------------------------ calibration

CalibScene make_calib_scene(const CalibConfig& cfg, Rng& rng) {
  CalibScene scene;
  scene.camera = cfg.camera;
  scene.landmarks = grid_landmarks();
  std::normal_distribution<double> nd(0.0, 1.0);
  for (Index p = 0; p < cfg.poses_per_trial; ++p) {
    const Pose pose = sample_pose(rng);
    std::vector<Pixel> pixels;
    for (const Vec3& m : scene.landmarks) {
      const Pixel clean = stereo_project(cfg.camera, pose.C * (m + pose.t));
      Pixel px = clean;
      if (cfg.noise) {
        const double nul = nd(rng), nv = nd(rng), nur = nd(rng);
        px.u = clean.u + cfg.camera.sigma_u * nul;
        px.v = clean.v + cfg.camera.sigma_v * nv;
        px.d = px.u - (clean.u - clean.d + cfg.camera.sigma_u * nur);
      }
      pixels.push_back(px);
    }
    scene.poses.push_back(pose);
    scene.pixels.push_back(std::move(pixels));
  }
  return scene;
}

CalibEval calib_loss_and_grad(const CalibScene& scene, double b) {
  CameraModel cam = scene.camera;
  cam.b = b;
  CalibEval out;
  out.min_ratio = std::numeric_limits<double>::infinity();
  for (size_t p = 0; p < scene.poses.size(); ++p) {
    LocalizationInstance inst;
    inst.landmarks = scene.landmarks;
    inst.ground_truth = scene.poses[p];
    double trace_sum = 0.0;
    for (const Pixel& px : scene.pixels[p]) {
      inst.measurements.push_back(stereo_backproject(cam, px));
      inst.weights.push_back(stereo_weight(cam, px));
      trace_sum += inst.weights.back().trace();
    }
    // Normalized weights do not depend on b; measurements scale linearly with b.
    const double scale = 3.0 * static_cast<double>(inst.weights.size()) / trace_sum;
    for (Mat3& w : inst.weights) w *= scale;
    std::vector<Vec3> dmeas;
    for (const Vec3& m : inst.measurements) dmeas.push_back(m / b);
    const Matrix dq = localization_cost_tangent(inst, {}, dmeas);

    HomQCQP base = build_localization_qcqp(inst, true);
    std::vector<Triplet> sens;
    for (Index c = 0; c < dq.cols(); ++c) {
      for (Index r = 0; r <= c; ++r) {
        if (dq(r, c) != 0.0) sens.push_back({r, c, dq(r, c)});
      }
    }
    const HomQCQP q = build_hom_qcqp(ParamSymMatrix(13, base.cost().entries(), {sens}), base.constraints(), 0,
                                     base.redundant_flags());
    const PipelineResult res = solve_and_certify(q);
    out.min_ratio = std::min(out.min_ratio, res.solution.tightness_ratio);
    if (res.solution.verdict != Verdict::TightCertified) {
      const CertificateFlags& fl = res.solution.flags;
      throw Error(ErrorCode::TightnessLost,
                  "calibration pose " + std::to_string(p) + ": verdict " + std::string(to_string(res.solution.verdict)) +
                      ", ratio " + std::to_string(res.solution.tightness_ratio) + ", min eig " +
                      std::to_string(fl.min_eig) + ", ||Hx|| " + std::to_string(fl.stationarity_residual));
    }
    const Vector& x = res.solution.x;
    const Pose est = x_to_pose(x);
    const Pose& gt = inst.ground_truth;
    const Mat3 e = est.C.transpose() * gt.C - Mat3::Identity();
    const Vec3 et = est.t - gt.t;
    out.loss += et.squaredNorm() + e.squaredNorm();
    Vector dpose(12);
    dpose.head(9) = (2.0 * gt.C * e.transpose()).reshaped();
    dpose.tail(3) = 2.0 * et;
    const Vector incoming = pose_vector_jacobian(x).transpose() * dpose;
    const GradientReport rep = backprop_is(make_kkt_workspace(q, x, res.solution.lambda), incoming);
    out.grad += q.chain_to_params(rep.grad_Q, rep.grad_A)(0);
  }
  return out;
}

std::vector<BilevelTrace> calibrate_baseline(const CalibConfig& cfg, int jobs) {
  std::vector<BilevelTrace> traces(static_cast<size_t>(cfg.trials));
  const double b_true = cfg.camera.b;
  parallel_for(cfg.trials, jobs, [&](Index trial) {
    BilevelTrace& tr = traces[static_cast<size_t>(trial)];
    Rng rng = trial_rng(cfg.seed, trial, 2);
    const CalibScene scene = make_calib_scene(cfg, rng);
    double b = b_true + cfg.b_init_error;
    try {
      for (Index it = 0;; ++it) {
        const CalibEval ev = calib_loss_and_grad(scene, b);
        BilevelRecord rec;
        rec.iteration = it;
        rec.loss = ev.loss;
        rec.params = Vector::Constant(1, b);
        rec.tightness_ratio = ev.min_ratio;
        rec.grad_norm = std::abs(ev.grad);
        rec.x_star = std::abs(b - b_true);
        tr.records.push_back(rec);
        if (std::abs(ev.grad) < cfg.grad_tol) {
          tr.converged = true;
          tr.termination = "GradientBelowTolerance";
          break;
        }
        if (it >= cfg.max_outer) {
          tr.termination = "MaxOuter";
          break;
        }
        b -= cfg.lr * ev.grad;
      }
    } catch (const Error& e) {
      tr.termination = e.what();
    }
  });
  return traces;
}

}  // namespace certigrad::experiments
