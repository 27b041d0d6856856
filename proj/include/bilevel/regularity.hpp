#pragma once

#include <array>
#include <string>
#include <vector>

#include "bilevel/problem.hpp"

namespace bilevel {

/// P_i = { j : X^i_j >= 0 }, Q_i = { j : X^i_j <= 0 } with |X^i_j| <= tol
/// counted as zero. Indices are 0-based.
struct IndexSets {
  std::array<std::vector<Index>, 5> P;
  std::array<std::vector<Index>, 5> Q;
};

IndexSets index_sets(const BilevelProblem& problem, const PenaltyParams& params, const Vector& u,
                     double tol = 1e-9);

struct Hypothesis {
  std::string name;
  bool holds = false;
  std::string detail;
};

struct ProbeResult {
  int elements = 0;       // number of distinct elements factored
  int nonsingular = 0;    // how many of them had full numerical rank
  double worst_rcond = 0.0;
};

struct Certificate {
  std::string theorem;  // "invertible_A" or "fullrank_yy"
  std::vector<Hypothesis> hypotheses;
  ProbeResult probe;

  bool hypotheses_hold() const;
  bool probe_ok() const { return probe.elements > 0 && probe.nonsingular == probe.elements; }
  bool positive() const { return hypotheses_hold() && probe_ok(); }
};

/// Nonsingularity probe: the half element plus extreme 0/1 selections on the
/// tied components, at most `cap` matrices in total.
ProbeResult probe_elements(const BilevelProblem& problem, const PenaltyParams& params,
                           const Vector& u, double tie_tol = 1e-9, int cap = 8);

/// Hypotheses: l = n with A invertible, hess_xx of full column rank, and
/// P1, P3, P5, Q2, Q4 empty.
Certificate check_theorem_invertibleA(const BilevelProblem& problem, const PenaltyParams& params,
                                      const Vector& u);

/// Hypotheses: hess_yy of full column rank, and P1, P2, P5, Q3, Q4 empty.
Certificate check_theorem_fullrank_yy(const BilevelProblem& problem, const PenaltyParams& params,
                                      const Vector& u);

}  // namespace bilevel
