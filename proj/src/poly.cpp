#include "certigrad/experiments.hpp"

#include <cmath>
#include <limits>

namespace certigrad::experiments {

Vector poly_initial_theta() {
  Vector th(7);
  th << 10.0, 2.6334, -4.3443, 0.0, 0.8055, -0.1334, 0.0389;
  return th;
}

namespace {

// (row, col, theta index, weight): Q_rc = weight * theta_k
struct PolyEntry {
  Index row, col, k;
  double w;
};

constexpr PolyEntry kPolyPattern[] = {
    {0, 0, 0, 1.0},       {0, 1, 1, 1.0 / 2.0}, {0, 2, 2, 1.0 / 3.0}, {1, 1, 2, 1.0 / 3.0},
    {0, 3, 3, 1.0 / 4.0}, {1, 2, 3, 1.0 / 4.0}, {1, 3, 4, 1.0 / 3.0}, {2, 2, 4, 1.0 / 3.0},
    {2, 3, 5, 1.0 / 2.0}, {3, 3, 6, 1.0},
};

ParamSymMatrix poly_cost(const Vector& theta) {
  require_dims(theta.size() == 7, "poly_problem: theta must have 7 coefficients");
  std::vector<Triplet> entries;
  std::vector<std::vector<Triplet>> sens(7);
  for (const PolyEntry& e : kPolyPattern) {
    entries.push_back({e.row, e.col, e.w * theta(e.k)});
    sens[static_cast<size_t>(e.k)].push_back({e.row, e.col, e.w});
  }
  return ParamSymMatrix(4, std::move(entries), std::move(sens));
}

}  // namespace

std::vector<Matrix> poly_constraint_matrices() {
  Matrix a1 = Matrix::Zero(4, 4), a2 = Matrix::Zero(4, 4), a3 = Matrix::Zero(4, 4);
  a1(0, 2) = a1(2, 0) = 0.5;
  a1(1, 1) = -1.0;
  a2(0, 3) = a2(3, 0) = 1.0;
  a2(1, 2) = a2(2, 1) = -1.0;
  a3(1, 3) = a3(3, 1) = 0.5;
  a3(2, 2) = -1.0;
  return {a1, a2, a3};
}

HomQCQP poly_problem(const Vector& theta) {
  std::vector<ParamSymMatrix> cons;
  for (const Matrix& a : poly_constraint_matrices()) cons.push_back(ParamSymMatrix::from_dense(a));
  // The three monomial constraints are dependent on the feasible curve; A_3 is marked redundant.
  return build_hom_qcqp(poly_cost(theta), std::move(cons), 0, {false, false, true});
}

HomQCQP poly_problem_stripped(const Vector& theta) {
  return build_hom_qcqp(poly_cost(theta), {ParamSymMatrix::from_dense(poly_constraint_matrices()[0])}, 0);
}

double poly_eval(const Vector& theta, double t) {
  double v = 0.0;
  for (Index i = theta.size() - 1; i >= 0; --i) v = v * t + theta(i);
  return v;
}

FeasibleSampler poly_sampler() {
  return {4, [](std::uint64_t seed) {
            Rng rng(seed);
            const double t = std::uniform_real_distribution<double>(-1.5, 1.5)(rng);
            Vector x(4);
            x << 1.0, t, t * t, t * t * t;
            return x;
          }};
}

namespace {

double poly_deriv(const Vector& theta, double t, int order) {
  double v = 0.0;
  for (Index i = theta.size() - 1; i >= order; --i) {
    double c = theta(i);
    for (int k = 0; k < order; ++k) c *= static_cast<double>(i - k);
    v = v * t + c;
  }
  return v;
}

}  // namespace

PolyMinimum poly_global_min(const Vector& theta, double lo, double hi, Index grid) {
  PolyMinimum best{lo, std::numeric_limits<double>::infinity()};
  for (Index i = 0; i < grid; ++i) {
    const double t = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(grid - 1);
    const double v = poly_eval(theta, t);
    if (v < best.value) best = {t, v};
  }
  double t = best.t;
  for (int it = 0; it < 50; ++it) {
    const double d2 = poly_deriv(theta, t, 2);
    if (d2 <= 0.0) break;
    const double step = poly_deriv(theta, t, 1) / d2;
    t -= step;
    if (std::abs(step) < 1e-15 * (1.0 + std::abs(t))) break;
  }
  if (poly_eval(theta, t) <= best.value + 1e-12) best = {t, poly_eval(theta, t)};
  return best;
}

BilevelTrace poly_bilevel(const Vector& theta0, const PolyBilevelConfig& cfg) {
  BilevelTrace trace;
  Vector theta = theta0;
  for (Index it = 0; it <= cfg.max_outer; ++it) {
    const HomQCQP q = poly_problem(theta);
    PipelineResult res;
    try {
      res = solve_and_certify(q);
    } catch (const Error& e) {
      trace.termination = std::string("SolverFailure: ") + e.what();
      return trace;
    }
    const CertifiedSolution& sol = res.solution;
    BilevelRecord rec;
    rec.iteration = it;
    rec.params = theta;
    rec.tightness_ratio = sol.tightness_ratio;
    if (sol.verdict != Verdict::TightCertified) {
      rec.loss = std::numeric_limits<double>::quiet_NaN();
      trace.records.push_back(rec);
      trace.termination = "TightnessLost";
      return trace;
    }
    const Vector& x = sol.x;
    const double y = x.dot(q.cost_dense() * x);
    const double ex = x(1) - cfg.target_x;
    const double ey = y - cfg.target_y;
    rec.loss = ex * ex + ey * ey;
    rec.x_star = x(1);
    if (rec.loss < cfg.loss_tol) {
      trace.records.push_back(rec);
      trace.converged = true;
      trace.termination = "LossBelowTolerance";
      return trace;
    }
    if (it == cfg.max_outer) {
      trace.records.push_back(rec);
      break;
    }

    Vector incoming = 4.0 * ey * (q.cost_dense() * x);
    incoming(1) += 2.0 * ex;
    GradientReport rep;
    if (cfg.method == BackpropMethod::IS) {
      rep = backprop_is(make_kkt_workspace(q, x, res.solution.lambda), incoming);
    } else {
      rep = backprop_cift(q, x, incoming);
    }
    // y depends on theta directly through Q as well as through x*.
    const Matrix grad_q = rep.grad_Q + 2.0 * ey * (x * x.transpose());
    const Vector grad = q.chain_to_params(grad_q, rep.grad_A);
    rec.grad_norm = grad.norm();
    trace.records.push_back(rec);
    theta -= cfg.lr * grad;
  }
  trace.termination = "MaxOuter";
  return trace;
}

}  // namespace certigrad::experiments
