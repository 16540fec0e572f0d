#pragma once

// Constraint discovery from sampled feasible points and the fixed-lifting tightening loop.

#include "certigrad/certify.hpp"
#include "certigrad/common.hpp"
#include "certigrad/qcqp.hpp"
#include "certigrad/sdp.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace certigrad {

struct FeasibleSampler {
  Index dim = 0;
  // Exact feasible point with x_h = 1 for the given seed.
  std::function<Vector(std::uint64_t)> draw;
};

/// Half-vectorization with sqrt(2)-scaled off-diagonals: svec(A) . svec(B) = <A, B>.
Vector svec(const Matrix& a);
Matrix smat(const Vector& v, Index n);

struct DiscoveredConstraints {
  std::vector<Matrix> matrices;  // Frobenius-orthonormal, ordered by descending margin
  std::vector<double> margins;   // threshold - singular value
  Index data_rank = 0;
  double threshold = 0.0;
};

/// Right nullspace of the sample matrix [svec(x_s x_s^T)]_s at singular-value tolerance
/// tol * sigma_max. sample_count = 0 means 3 n (n + 1) / 2. Samples use seeds seed, seed + 1, ...
/// Throws InsufficientSamples when sample_count < n (n + 1) / 2.
DiscoveredConstraints find_constraints(const FeasibleSampler& sampler, Index sample_count = 0, double tol = 1e-8,
                                       std::uint64_t seed = 0);

struct TightenOptions {
  Index max_rounds = 50;
  Index sample_count = 0;
  double nullspace_tol = 1e-8;
  std::uint64_t seed = 0;
  // Discovered matrices whose residual after projection onto the current constraint span is
  // below this (relative to ||A||_F) are treated as already present.
  double novelty_tol = 1e-6;
  // A certified rank-1 point must also satisfy every discovered constraint, |x^T A x| <= feasibility_tol ||x||^2;
  // otherwise the problem's own constraints describe a larger set than the sampler's.
  double feasibility_tol = 1e-6;
  SdpOptions sdp;
  CertifyOptions certify;
};

struct TightenRound {
  Index round = 0;
  Index constraints_added = 0;  // cumulative
  double ratio = 0.0;
  double objective = 0.0;
  Verdict verdict = Verdict::NotTight;
  double max_violation = 0.0;  // of discovered constraints at the extracted x
};

struct TightenReport {
  HomQCQP problem;  // input plus appended constraints (flagged redundant)
  std::vector<TightenRound> rounds;
  std::vector<Matrix> added;
  Index discovered = 0;
  bool tight = false;
  std::string status;  // "tight", "exhausted, raise lifting manually" or "max rounds reached"
};

/// Solves and certifies; while not TightCertified on the sampled feasible set, appends one new
/// discovered constraint per round.
TightenReport tighten_loop(const HomQCQP& q, const FeasibleSampler& sampler, const TightenOptions& opts = {});

}  // namespace certigrad
