#include "cli.hpp"

#include "certigrad/autotight.hpp"
#include "certigrad/certify.hpp"
#include "certigrad/diff.hpp"
#include "certigrad/experiments.hpp"
#include "certigrad/sdp.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <set>
#include <sstream>

namespace certigrad::cli {

using io::format_double;
using io::Json;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

[[noreturn]] void config_fail(const std::string& what) { throw Error(ErrorCode::ConfigError, what); }

Json base_report(const std::string& command, const Json& config, std::uint64_t seed) {
  Json r;
  r["schema_version"] = io::kSchemaVersion;
  r["command"] = command;
  r["config"] = config;
  r["seed"] = seed;
  return r;
}

Vector parse_loss_grad(const std::string& src, Index n) {
  if (src.empty()) config_fail("--grad needs --loss-grad (dL/dx, length " + std::to_string(n) + ")");
  Vector v;
  if (src[0] == '@') {
    const std::string path = src.substr(1);
    v = io::json_to_vector(io::parse_json_text(io::read_file(path), path), "loss-grad");
  } else {
    std::vector<double> vals;
    std::stringstream ss(src);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      try {
        size_t used = 0;
        vals.push_back(std::stod(tok, &used));
        if (tok.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        config_fail("--loss-grad: '" + tok + "' is not a number");
      }
    }
    v = Eigen::Map<const Vector>(vals.data(), static_cast<Index>(vals.size()));
  }
  if (v.size() != n) {
    config_fail("--loss-grad has " + std::to_string(v.size()) + " entries, problem has n = " + std::to_string(n));
  }
  return v;
}

// Typed access to an experiment config object; every key read is remembered so leftovers can be rejected.
class Config {
 public:
  Config(Json j, std::string name) : j_(std::move(j)), name_(std::move(name)) {
    if (!j_.is_object()) config_fail(name_ + ": config must be a JSON object");
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return fallback;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw std::invalid_argument("bool");
      } else if constexpr (std::is_arithmetic_v<T>) {
        if (!it->is_number()) throw std::invalid_argument("number");
        if constexpr (std::is_integral_v<T>) {
          if (!it->is_number_integer()) throw std::invalid_argument("integer");
        }
      } else {
        if (!it->is_string()) throw std::invalid_argument("string");
      }
      return it->get<T>();
    } catch (const std::exception&) {
      config_fail(name_ + "." + key + ": wrong type");
    }
  }

  std::optional<Json> raw(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    if (it == j_.end()) return std::nullopt;
    return *it;
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      (void)v;
      if (k != "schema_version" && !seen_.count(k)) config_fail(name_ + ": unknown key '" + k + "'");
    }
  }

 private:
  Json j_;
  std::string name_;
  std::set<std::string> seen_;
};

experiments::CameraModel read_camera(Config& c) {
  experiments::CameraModel cam;
  const auto j = c.raw("camera");
  if (!j) return cam;
  Config cc(*j, "camera");
  cam.b = cc.get("b", cam.b);
  cam.fu = cc.get("fu", cam.fu);
  cam.fv = cc.get("fv", cam.fv);
  cam.cu = cc.get("cu", cam.cu);
  cam.cv = cc.get("cv", cam.cv);
  cam.sigma_u = cc.get("sigma_u", cam.sigma_u);
  cam.sigma_v = cc.get("sigma_v", cam.sigma_v);
  cc.finish();
  return cam;
}

Json camera_json(const experiments::CameraModel& cam) {
  return Json{{"b", cam.b},   {"fu", cam.fu}, {"fv", cam.fv}, {"cu", cam.cu},
              {"cv", cam.cv}, {"sigma_u", cam.sigma_u}, {"sigma_v", cam.sigma_v}};
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double a : v) s += a;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double a : v) s += (a - m) * (a - m);
  return v.empty() ? 0.0 : std::sqrt(s / static_cast<double>(v.size()));
}

// ----------------------------------------------------------------- experiments

CommandResult run_poly_bilevel(Config& c, std::uint64_t seed) {
  using namespace experiments;
  PolyBilevelConfig cfg;
  cfg.target_x = c.get("target_x", cfg.target_x);
  cfg.target_y = c.get("target_y", cfg.target_y);
  cfg.lr = c.get("lr", cfg.lr);
  cfg.loss_tol = c.get("loss_tol", cfg.loss_tol);
  cfg.max_outer = c.get<Index>("max_outer", cfg.max_outer);
  const std::string method = c.get<std::string>("method", "is");
  if (method != "is" && method != "cift") config_fail("poly-bilevel.method must be 'is' or 'cift'");
  cfg.method = method == "is" ? BackpropMethod::IS : BackpropMethod::CIFT;
  Vector theta0 = poly_initial_theta();
  if (const auto t = c.raw("theta0")) theta0 = io::json_to_vector(*t, "theta0");
  if (theta0.size() != 7) config_fail("poly-bilevel.theta0 must have 7 coefficients");
  c.finish();

  const auto t0 = std::chrono::steady_clock::now();
  const BilevelTrace tr = poly_bilevel(theta0, cfg);
  const double elapsed = seconds_since(t0);

  io::CsvWriter csv({"iteration", "loss", "x_star", "tightness_ratio", "grad_norm", "theta0", "theta1", "theta2",
                     "theta3", "theta4", "theta5", "theta6"});
  Index jumps = 0;
  for (size_t i = 0; i < tr.records.size(); ++i) {
    const BilevelRecord& r = tr.records[i];
    std::vector<std::string> row{std::to_string(r.iteration), format_double(r.loss), format_double(r.x_star),
                                 format_double(r.tightness_ratio), format_double(r.grad_norm)};
    for (Index k = 0; k < 7; ++k) row.push_back(format_double(r.params(k)));
    csv.add_row(row);
    if (i > 0 && std::abs(r.x_star - tr.records[i - 1].x_star) > 0.5) ++jumps;
  }

  Json config{{"target_x", cfg.target_x}, {"target_y", cfg.target_y}, {"lr", cfg.lr},
              {"loss_tol", cfg.loss_tol}, {"max_outer", cfg.max_outer}, {"method", method},
              {"theta0", io::vector_to_json(theta0)}};
  CommandResult out;
  out.report = base_report("experiment poly-bilevel", config, seed);
  Json s;
  s["termination"] = tr.termination;
  s["converged"] = tr.converged;
  if (!tr.records.empty()) {
    const BilevelRecord& last = tr.records.back();
    const PolyMinimum gm = poly_global_min(last.params);
    s["iterations"] = last.iteration;
    s["final_loss"] = last.loss;
    s["final_x_star"] = last.x_star;
    s["final_theta"] = io::vector_to_json(last.params);
    s["global_minimizer_oracle"] = gm.t;
    s["global_minimum_oracle"] = gm.value;
  }
  s["basin_jumps"] = jumps;
  out.report["summary"] = s;
  out.report["timings"] = Json{{"total_s", elapsed}};
  out.files.emplace_back("poly_bilevel.csv", csv.str());
  if (tr.converged || tr.termination == "MaxOuter") {
    out.exit_code = kOk;
  } else {
    out.exit_code = tr.termination == "TightnessLost" ? kNotTight : kSolverFailure;
  }
  return out;
}

CommandResult run_stereo_calib(Config& c, std::uint64_t seed, int jobs) {
  using namespace experiments;
  CalibConfig cfg;
  cfg.trials = c.get<Index>("trials", cfg.trials);
  cfg.poses_per_trial = c.get<Index>("poses_per_trial", cfg.poses_per_trial);
  cfg.b_init_error = c.get("b_init_error", cfg.b_init_error);
  cfg.lr = c.get("lr", cfg.lr);
  cfg.grad_tol = c.get("grad_tol", cfg.grad_tol);
  cfg.max_outer = c.get<Index>("max_outer", cfg.max_outer);
  cfg.noise = c.get("noise", cfg.noise);
  cfg.camera = read_camera(c);
  cfg.seed = seed;
  c.finish();
  if (cfg.trials < 1 || cfg.poses_per_trial < 1) config_fail("stereo-calib: trials and poses_per_trial must be >= 1");

  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<BilevelTrace> traces = calibrate_baseline(cfg, jobs);
  const double elapsed = seconds_since(t0);

  io::CsvWriter csv({"trial", "iteration", "baseline", "baseline_error", "loss", "grad", "min_ratio"});
  std::vector<double> errs, iters, losses;
  Json per_trial = Json::array();
  Index failures = 0;
  for (size_t t = 0; t < traces.size(); ++t) {
    const BilevelTrace& tr = traces[t];
    for (const BilevelRecord& r : tr.records) {
      csv.add_row({std::to_string(t), std::to_string(r.iteration), format_double(r.params(0)), format_double(r.x_star),
                   format_double(r.loss), format_double(r.grad_norm), format_double(r.tightness_ratio)});
    }
    const bool ok = tr.converged || tr.termination == "MaxOuter";
    Json e{{"trial", t}, {"termination", tr.termination}, {"ok", ok}};
    if (!tr.records.empty()) {
      e["iterations"] = tr.records.back().iteration;
      e["final_baseline_error"] = tr.records.back().x_star;
      e["final_loss"] = tr.records.back().loss;
    }
    per_trial.push_back(e);
    if (!ok || tr.records.empty()) {
      ++failures;
      continue;
    }
    errs.push_back(tr.records.back().x_star);
    iters.push_back(static_cast<double>(tr.records.back().iteration));
    losses.push_back(tr.records.back().loss);
  }

  Json config{{"trials", cfg.trials},     {"poses_per_trial", cfg.poses_per_trial},
              {"b_init_error", cfg.b_init_error}, {"lr", cfg.lr},
              {"grad_tol", cfg.grad_tol}, {"max_outer", cfg.max_outer},
              {"noise", cfg.noise},       {"camera", camera_json(cfg.camera)}};
  CommandResult out;
  out.report = base_report("experiment stereo-calib", config, seed);
  out.report["trials"] = per_trial;
  out.report["summary"] = Json{{"mean_final_baseline_error", mean_of(errs)},
                               {"std_final_baseline_error", std_of(errs)},
                               {"mean_outer_iterations", mean_of(iters)},
                               {"mean_final_loss", mean_of(losses)},
                               {"failures", failures}};
  out.report["timings"] = Json{{"total_s", elapsed}};
  out.files.emplace_back("stereo_calib.csv", csv.str());
  out.exit_code = failures == cfg.trials ? kSolverFailure : kOk;
  return out;
}

CommandResult run_jac_compare(Config& c, std::uint64_t seed, int jobs) {
  using namespace experiments;
  JacCompareConfig cfg;
  cfg.trials = c.get<Index>("trials", cfg.trials);
  const std::string weighting = c.get<std::string>("weighting", "matrix");
  if (weighting != "matrix" && weighting != "scalar") config_fail("jac-compare.weighting must be 'matrix' or 'scalar'");
  cfg.weighting = weighting == "matrix" ? Weighting::Matrix : Weighting::Scalar;
  cfg.redundant = c.get("redundant", cfg.redundant);
  cfg.fd_step = c.get("fd_step", cfg.fd_step);
  cfg.run_fd = c.get("run_fd", cfg.run_fd);
  cfg.camera = read_camera(c);
  cfg.seed = seed;
  c.finish();
  if (cfg.trials < 1) config_fail("jac-compare.trials must be >= 1");

  const auto t0 = std::chrono::steady_clock::now();
  const JacCompareSummary sum = jacobian_compare(cfg, jobs);
  const double elapsed = seconds_since(t0);

  io::CsvWriter csv({"trial", "ok", "tightness_ratio", "is_vs_fd", "cift_vs_fd", "is_vs_cift", "is_vs_svd",
                     "trans_diff_svd", "rot_diff_svd", "error"});
  std::vector<double> tis, tcift;
  for (const JacCompareRow& r : sum.rows) {
    csv.add_row({std::to_string(r.trial), r.ok ? "1" : "0", format_double(r.ratio), format_double(r.is_vs_fd),
                 format_double(r.cift_vs_fd), format_double(r.is_vs_cift), format_double(r.is_vs_svd),
                 format_double(r.rmse_trans), format_double(r.rmse_rot), r.error});
    if (r.ok) {
      tis.push_back(r.time_is);
      tcift.push_back(r.time_cift);
    }
  }
  Json config{{"trials", cfg.trials}, {"weighting", weighting}, {"redundant", cfg.redundant},
              {"fd_step", cfg.fd_step}, {"run_fd", cfg.run_fd}, {"camera", camera_json(cfg.camera)}};
  CommandResult out;
  out.report = base_report("experiment jac-compare", config, seed);
  Json s{{"mean_is_vs_fd", sum.mean_is_vs_fd},     {"std_is_vs_fd", sum.std_is_vs_fd},
         {"mean_cift_vs_fd", sum.mean_cift_vs_fd}, {"std_cift_vs_fd", sum.std_cift_vs_fd},
         {"mean_is_vs_cift", sum.mean_is_vs_cift}, {"std_is_vs_cift", sum.std_is_vs_cift},
         {"failures", sum.failures}};
  if (cfg.weighting == Weighting::Scalar) {
    s["mean_is_vs_svd"] = sum.mean_is_vs_svd;
    s["std_is_vs_svd"] = sum.std_is_vs_svd;
    s["rmse_trans_vs_svd"] = sum.rmse_trans;
    s["rmse_rot_vs_svd"] = sum.rmse_rot;
  }
  out.report["summary"] = s;
  out.report["timings"] = Json{{"total_s", elapsed}, {"mean_backprop_is_s", mean_of(tis)},
                               {"mean_backprop_cift_s", mean_of(tcift)}};
  out.files.emplace_back("jac_compare.csv", csv.str());
  out.exit_code = sum.failures == cfg.trials ? kSolverFailure : kOk;
  return out;
}

Json constraint_json(const Matrix& a) { return io::triplets_to_json(ParamSymMatrix::from_dense(a, 1e-12).entries()); }

CommandResult run_tightness_audit(Config& c, std::uint64_t seed) {
  using namespace experiments;
  const std::string problem = c.get<std::string>("problem", "poly-stripped");
  TightenOptions opts;
  opts.max_rounds = c.get<Index>("max_rounds", opts.max_rounds);
  opts.sample_count = c.get<Index>("sample_count", opts.sample_count);
  opts.nullspace_tol = c.get("nullspace_tol", opts.nullspace_tol);
  const std::string weighting = c.get<std::string>("weighting", "matrix");
  const CameraModel cam = read_camera(c);
  c.finish();
  opts.seed = seed;

  HomQCQP q;
  FeasibleSampler sampler;
  if (problem == "poly" || problem == "poly-stripped") {
    q = problem == "poly" ? poly_problem(poly_initial_theta()) : poly_problem_stripped(poly_initial_theta());
    sampler = poly_sampler();
  } else if (problem == "stereo" || problem == "stereo-rows") {
    if (weighting != "matrix" && weighting != "scalar") config_fail("tightness-audit.weighting must be 'matrix' or 'scalar'");
    Rng rng(seed);
    const Pose pose = sample_pose(rng);
    const LocalizationInstance inst = make_instance(cam, pose, grid_landmarks(),
                                                    weighting == "matrix" ? Weighting::Matrix : Weighting::Scalar, rng);
    q = build_localization_qcqp(inst, problem == "stereo");
    sampler = localization_sampler();
  } else {
    config_fail("tightness-audit.problem must be one of poly, poly-stripped, stereo, stereo-rows");
  }

  const auto t0 = std::chrono::steady_clock::now();
  const DiscoveredConstraints disc = find_constraints(sampler, opts.sample_count, opts.nullspace_tol, opts.seed);
  const TightenReport rep = tighten_loop(q, sampler, opts);
  const double elapsed = seconds_since(t0);

  io::CsvWriter csv({"round", "constraints_added", "tightness_ratio", "objective", "verdict", "max_violation"});
  for (const TightenRound& r : rep.rounds) {
    csv.add_row({std::to_string(r.round), std::to_string(r.constraints_added), format_double(r.ratio),
                 format_double(r.objective), std::string(to_string(r.verdict)), format_double(r.max_violation)});
  }
  Json discovered = Json::array();
  for (size_t k = 0; k < disc.matrices.size(); ++k) {
    discovered.push_back(Json{{"margin", disc.margins[k]}, {"triplets", constraint_json(disc.matrices[k])}});
  }
  Json added = Json::array();
  for (const Matrix& a : rep.added) added.push_back(constraint_json(a));

  Json config{{"problem", problem},
              {"max_rounds", opts.max_rounds},
              {"sample_count", opts.sample_count},
              {"nullspace_tol", opts.nullspace_tol},
              {"weighting", weighting},
              {"camera", camera_json(cam)}};
  CommandResult out;
  out.report = base_report("experiment tightness-audit", config, seed);
  Json s{{"status", rep.status},
         {"tight", rep.tight},
         {"initial_constraints", q.constraint_count()},
         {"discovered_dimension", disc.matrices.size()},
         {"data_rank", disc.data_rank},
         {"constraints_added", rep.added.size()},
         {"rounds", rep.rounds.size()}};
  s["tight_round"] = rep.tight ? Json(rep.rounds.back().round) : Json(nullptr);
  s["final_ratio"] = rep.rounds.back().ratio;
  out.report["summary"] = s;
  out.report["discovered_constraints"] = discovered;
  out.report["added_constraints"] = added;
  out.report["timings"] = Json{{"total_s", elapsed}};
  out.files.emplace_back("tightness_audit.csv", csv.str());
  out.exit_code = rep.tight ? kOk : kNotTight;
  return out;
}

}  // namespace

// ----------------------------------------------------------------------- solve

CommandResult cmd_solve(const SolveOptions& opts) {
  if (opts.grad != "none" && opts.grad != "is" && opts.grad != "cift") config_fail("--grad must be none, is or cift");
  const io::ProblemFile pf = io::load_problem(opts.problem_path);
  const HomQCQP& q = pf.problem;
  const std::optional<Vector> incoming =
      opts.grad == "none" ? std::nullopt : std::optional<Vector>(parse_loss_grad(opts.loss_grad, q.dim()));

  SdpOptions sdp_opts;
  if (opts.tol) sdp_opts.tol = *opts.tol;
  CertifyOptions cert_opts;
  cert_opts.ratio_threshold = opts.ratio_threshold;

  Json config{{"problem", opts.problem_path}, {"tol", sdp_opts.tol}, {"ratio_threshold", opts.ratio_threshold},
              {"grad", opts.grad}};
  CommandResult out;
  out.report = base_report("solve", config, 0);
  Json inst;
  Json timings;

  auto t0 = std::chrono::steady_clock::now();
  const SDPPrimalDual sdp = solve_sdp(build_shor_relaxation(q), sdp_opts);
  timings["sdp_s"] = seconds_since(t0);
  inst["sdp"] = Json{{"status", std::string(to_string(sdp.status))},
                     {"iterations", sdp.iterations},
                     {"primal_residual", sdp.residuals.primal},
                     {"dual_residual", sdp.residuals.dual},
                     {"gap", sdp.residuals.gap},
                     {"primal_objective", sdp.primal_objective},
                     {"dual_objective", sdp.dual_objective}};
  if (sdp.status != SdpStatus::Optimal) {
    inst["verdict"] = "SolverFailure";
    inst["timings"] = timings;
    out.report["instances"] = Json::array({inst});
    out.exit_code = kSolverFailure;
    return out;
  }

  t0 = std::chrono::steady_clock::now();
  const CertifiedSolution sol = certify_solution(q, sdp, cert_opts);
  timings["certify_s"] = seconds_since(t0);
  inst["objective"] = sdp.primal_objective;
  inst["tightness_ratio"] = sol.tightness_ratio;
  inst["verdict"] = std::string(to_string(sol.verdict));
  inst["certificate_min_eig"] = sol.certificate_min_eig;
  inst["certificate_second_eig"] = sol.certificate_second_eig;
  inst["stationarity_residual"] = sol.stationarity_residual;
  inst["corank1"] = sol.flags.corank1_ok;
  inst["x"] = io::vector_to_json(sol.x);
  inst["lambda"] = io::vector_to_json(sol.lambda);

  if (incoming && sol.verdict == Verdict::TightCertified) {
    t0 = std::chrono::steady_clock::now();
    const GradientReport rep = opts.grad == "is" ? backprop_is(make_kkt_workspace(q, sol.x, sol.lambda), *incoming)
                                                 : backprop_cift(q, sol.x, *incoming);
    timings["backprop_s"] = seconds_since(t0);
    Json g{{"method", std::string(to_string(rep.method))},
           {"loss_grad", io::vector_to_json(*incoming)},
           {"grad_Q", io::matrix_to_json(rep.grad_Q)}};
    Json ga = Json::array();
    for (const Matrix& a : rep.grad_A) ga.push_back(io::matrix_to_json(a));
    g["grad_A"] = ga;
    if (q.param_count() > 0) {
      const Vector gp = q.chain_to_params(rep.grad_Q, rep.grad_A);
      Json named = Json::object();
      for (Index k = 0; k < gp.size(); ++k) {
        const size_t ku = static_cast<size_t>(k);
        named[ku < pf.param_names.size() ? pf.param_names[ku] : "theta" + std::to_string(k)] = gp(k);
      }
      g["grad_params"] = named;
    }
    g["lsqr"] = Json{{"iterations", rep.lsqr_iters},
                     {"residual", rep.lsqr_residual},
                     {"status", std::string(symlin::to_string(rep.lsqr_status))}};
    inst["gradients"] = g;
  } else if (incoming) {
    inst["gradients"] = nullptr;
    inst["gradients_skipped"] = "solution not certified";
  }
  inst["timings"] = timings;
  out.report["instances"] = Json::array({inst});
  out.exit_code = sol.verdict == Verdict::TightCertified ? kOk : kNotTight;
  return out;
}

CommandResult cmd_experiment(const ExperimentOptions& opts) {
  Json cfg_json = Json::object();
  if (!opts.config_path.empty()) {
    cfg_json = io::parse_json_text(io::read_file(opts.config_path), opts.config_path);
    if (cfg_json.is_object() && cfg_json.contains("schema_version")) {
      try {
        io::check_schema_version(cfg_json, opts.config_path);
      } catch (const Error& e) {
        config_fail(e.what());
      }
    }
  }
  Config c(cfg_json, opts.name);
  // Seed precedence: --seed, then the config's "seed", then 0.
  const std::uint64_t cfg_seed = c.get<std::uint64_t>("seed", 0);
  const std::uint64_t seed = opts.seed.value_or(cfg_seed);
  const int jobs = std::max(1, opts.jobs);

  CommandResult out;
  if (opts.name == "poly-bilevel") {
    out = run_poly_bilevel(c, seed);
  } else if (opts.name == "stereo-calib") {
    out = run_stereo_calib(c, seed, jobs);
  } else if (opts.name == "jac-compare") {
    out = run_jac_compare(c, seed, jobs);
  } else if (opts.name == "tightness-audit") {
    out = run_tightness_audit(c, seed);
  } else {
    config_fail("unknown experiment '" + opts.name + "'");
  }
  out.report["environment"] = io::environment_fingerprint();
  return out;
}

std::string csv_columns_help() {
  return R"(CSV outputs (one row per record, header first):
  poly_bilevel.csv     iteration, loss, x_star (inner minimizer), tightness_ratio, grad_norm, theta0..theta6
  stereo_calib.csv     trial, iteration, baseline, baseline_error (|b - b_true|), loss, grad (|dloss/db|),
                       min_ratio (smallest tightness ratio over the trial's poses)
  jac_compare.csv      trial, ok, tightness_ratio, is_vs_fd, cift_vs_fd, is_vs_cift, is_vs_svd (relative inf-norm
                       Jacobian differences), trans_diff_svd, rot_diff_svd (scalar weighting only), error
  tightness_audit.csv  round, constraints_added, tightness_ratio, objective, verdict, max_violation
)";
}

namespace {

void setup_logging() {
  auto logger = spdlog::get("certigrad");
  if (!logger) logger = spdlog::stderr_color_mt("certigrad");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  const char* env = std::getenv("CERTIGRAD_LOG");
  const std::string level = env ? env : "error";
  if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else if (level == "info") {
    spdlog::set_level(spdlog::level::info);
  } else {
    spdlog::set_level(spdlog::level::err);
    if (level != "error") spdlog::error("CERTIGRAD_LOG='{}' is not one of error, info, debug; using error", level);
  }
}

void emit(const CommandResult& res, const std::string& out_path, const std::string& out_dir) {
  const std::string text = res.report.dump(2) + "\n";
  if (!out_dir.empty()) {
    namespace fs = std::filesystem;
    io::write_file_atomic((fs::path(out_dir) / "report.json").string(), text);
    for (const auto& [name, content] : res.files) {
      io::write_file_atomic((fs::path(out_dir) / name).string(), content);
      spdlog::info("wrote {}", (fs::path(out_dir) / name).string());
    }
    spdlog::info("wrote {}", (fs::path(out_dir) / "report.json").string());
  } else if (!out_path.empty()) {
    io::write_file_atomic(out_path, text);
    spdlog::info("wrote {}", out_path);
  } else {
    std::cout << text;
  }
}

}  // namespace

int run(int argc, char** argv) {
  setup_logging();
  CLI::App app{"certigrad: certified solutions and gradients of QCQPs via semidefinite relaxation"};
  app.require_subcommand(1);
  app.footer("Exit codes: 0 certified / success, 1 bad input, 2 not tight (or uncertified), 3 solver failure.\n"
             "Logging: CERTIGRAD_LOG=error|info|debug (stderr).");

  SolveOptions so;
  double tol = 0.0;
  std::string solve_out;
  CLI::App* solve = app.add_subcommand("solve", "Relax, solve, certify and optionally backpropagate one problem file");
  solve->add_option("problem", so.problem_path, "Problem JSON file")->required()->check(CLI::ExistingFile);
  CLI::Option* tol_opt = solve->add_option("--tol", tol, "SDP stopping tolerance (default 1e-12)")->check(CLI::PositiveNumber);
  solve->add_option("--ratio-threshold", so.ratio_threshold, "Tightness ratio threshold")->capture_default_str();
  solve->add_option("--grad", so.grad, "Backpropagation: none, is or cift")
      ->check(CLI::IsMember({"none", "is", "cift"}))
      ->capture_default_str();
  solve->add_option("--loss-grad", so.loss_grad, "dL/dx as comma-separated numbers or @file.json");
  solve->add_option("--out", solve_out, "Write the report here instead of stdout");

  ExperimentOptions eo;
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  CLI::App* exp = app.add_subcommand("experiment", "Run a bundled experiment and write report.json plus a CSV trace");
  exp->add_option("name", eo.name, "poly-bilevel, stereo-calib, jac-compare or tightness-audit")
      ->required()
      ->check(CLI::IsMember({"poly-bilevel", "stereo-calib", "jac-compare", "tightness-audit"}));
  exp->add_option("config", eo.config_path, "Experiment config JSON (defaults when omitted)")->check(CLI::ExistingFile);
  CLI::Option* seed_opt = exp->add_option("--seed", seed, "RNG seed (overrides the config)");
  exp->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();
  exp->add_option("--jobs", eo.jobs, "Trial-level worker threads")->check(CLI::PositiveNumber)->capture_default_str();
  exp->footer(csv_columns_help());

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (solve->parsed()) {
      if (tol_opt->count() > 0) so.tol = tol;
      const CommandResult res = cmd_solve(so);
      emit(res, solve_out, "");
      return res.exit_code;
    }
    if (seed_opt->count() > 0) eo.seed = seed;
    const CommandResult res = cmd_experiment(eo);
    emit(res, "", out_dir);
    const Json& s = res.report["summary"];
    std::cout << eo.name << ": " << s.dump() << "\n";
    return res.exit_code;
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    switch (e.code()) {
      case ErrorCode::ParseError:
      case ErrorCode::ConfigError:
      case ErrorCode::DimensionMismatch:
      case ErrorCode::DuplicateHomogenizing:
        return kUsage;
      default:
        return kSolverFailure;
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kSolverFailure;
  }
}

}  // namespace certigrad::cli
