#include "certigrad/autotight.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace certigrad {

Vector svec(const Matrix& a) {
  require_dims(a.rows() == a.cols(), "svec: matrix must be square");
  const Index n = a.rows();
  Vector v(n * (n + 1) / 2);
  Index k = 0;
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i <= j; ++i) v(k++) = i == j ? a(i, j) : std::sqrt(2.0) * 0.5 * (a(i, j) + a(j, i));
  }
  return v;
}

Matrix smat(const Vector& v, Index n) {
  require_dims(v.size() == n * (n + 1) / 2, "smat: length must be n (n + 1) / 2");
  Matrix a(n, n);
  Index k = 0;
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i <= j; ++i) {
      const double e = v(k++);
      if (i == j) {
        a(i, i) = e;
      } else {
        a(i, j) = a(j, i) = e / std::sqrt(2.0);
      }
    }
  }
  return a;
}

DiscoveredConstraints find_constraints(const FeasibleSampler& sampler, Index sample_count, double tol,
                                       std::uint64_t seed) {
  const Index n = sampler.dim;
  require_dims(n >= 1 && static_cast<bool>(sampler.draw), "find_constraints: sampler needs dim >= 1 and draw");
  if (!(tol > 0.0)) throw Error(ErrorCode::DegenerateInput, "find_constraints: tol must be positive");
  const Index nv = n * (n + 1) / 2;
  if (sample_count == 0) sample_count = 3 * nv;
  if (sample_count < nv) {
    throw Error(ErrorCode::InsufficientSamples, "find_constraints: " + std::to_string(sample_count) +
                                                    " samples cannot pin a nullspace in dimension " +
                                                    std::to_string(nv));
  }
  Matrix data(sample_count, nv);
  for (Index s = 0; s < sample_count; ++s) {
    const Vector x = sampler.draw(seed + static_cast<std::uint64_t>(s));
    require_dims(x.size() == n, "find_constraints: sampler returned a vector of the wrong length");
    data.row(s) = svec(x * x.transpose()).transpose();
  }
  Eigen::BDCSVD<Matrix> svd(data, Eigen::ComputeFullV);
  const Vector& sv = svd.singularValues();
  DiscoveredConstraints out;
  out.threshold = tol * sv(0);
  std::vector<Index> null;
  for (Index i = 0; i < nv; ++i) {
    if (sv(i) <= out.threshold) {
      null.push_back(i);
    } else {
      ++out.data_rank;
    }
  }
  std::stable_sort(null.begin(), null.end(), [&](Index a, Index b) { return sv(a) < sv(b); });
  for (Index i : null) {
    out.matrices.push_back(smat(svd.matrixV().col(i), n));
    out.margins.push_back(out.threshold - sv(i));
  }
  return out;
}

namespace {

// Residual of `a` after projection onto span(basis), relative to ||a||_F.
double projection_residual(const std::vector<Matrix>& basis, const Matrix& a) {
  if (basis.empty()) return 1.0;
  const Vector target = svec(a);
  Matrix cols(target.size(), static_cast<Index>(basis.size()));
  for (size_t k = 0; k < basis.size(); ++k) cols.col(static_cast<Index>(k)) = svec(basis[k]);
  const Vector coeff = cols.colPivHouseholderQr().solve(target);
  return (cols * coeff - target).norm() / target.norm();
}

}  // namespace

TightenReport tighten_loop(const HomQCQP& q, const FeasibleSampler& sampler, const TightenOptions& opts) {
  require_dims(sampler.dim == q.dim(), "tighten_loop: sampler dimension differs from the problem");
  TightenReport rep;
  rep.problem = q;
  std::vector<Matrix> span = q.constraints_dense();
  std::vector<Matrix> candidates = find_constraints(sampler, opts.sample_count, opts.nullspace_tol, opts.seed).matrices;
  const std::vector<Matrix> discovered = candidates;
  rep.discovered = static_cast<Index>(discovered.size());

  for (Index round = 0;; ++round) {
    const PipelineResult res = solve_and_certify(rep.problem, opts.sdp, opts.certify);
    TightenRound r;
    r.round = round;
    r.constraints_added = static_cast<Index>(rep.added.size());
    r.ratio = res.solution.tightness_ratio;
    r.objective = res.sdp.primal_objective;
    r.verdict = res.solution.verdict;
    const Vector& x = res.solution.x;
    for (const Matrix& a : discovered) r.max_violation = std::max(r.max_violation, std::abs(x.dot(a * x)) / x.squaredNorm());
    rep.rounds.push_back(r);
    if (r.verdict == Verdict::TightCertified && r.max_violation <= opts.feasibility_tol) {
      rep.tight = true;
      rep.status = "tight";
      return rep;
    }
    if (round >= opts.max_rounds) {
      rep.status = "max rounds reached";
      return rep;
    }
    // Next candidate not already spanned by the problem's constraints.
    Matrix next;
    while (!candidates.empty()) {
      Matrix c = candidates.front();
      candidates.erase(candidates.begin());
      if (projection_residual(span, c) > opts.novelty_tol) {
        next = std::move(c);
        break;
      }
    }
    if (next.size() == 0) {
      rep.status = "exhausted, raise lifting manually";
      return rep;
    }
    span.push_back(next);
    rep.added.push_back(next);
    rep.problem = rep.problem.with_constraints({ParamSymMatrix::from_dense(next)}, true);
  }
}

}  // namespace certigrad
