#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bilevel/problem.hpp"
#include "bilevel/regularity.hpp"

namespace bilevel {

enum class StepType { none, newton, gradient };
enum class SolveStatus { converged, max_iter, linesearch_stall, singular_unrecoverable, schedule_exhausted };

const char* to_string(StepType type);
const char* to_string(SolveStatus status);
StepType step_type_from_string(const std::string& name);
SolveStatus solve_status_from_string(const std::string& name);

/// State at iterate k; step_type and tau describe the step that produced it.
struct IterationRecord {
  int k = 0;
  double residual_norm = 0.0;
  double merit = 0.0;
  StepType step_type = StepType::none;
  double tau = 0.0;

  bool operator==(const IterationRecord&) const = default;
};

struct SolveReport {
  std::vector<IterationRecord> iterates;
  Vector final_u;
  SolveStatus status = SolveStatus::max_iter;
  double alpha = 0.0;          // penalty weight of the final solve
  double pi = 0.0;             // pi(y, z) at final_u
  std::vector<Certificate> certificates;  // filled on convergence
  std::vector<double> alpha_tried;        // continuation only

  IterateU final_iterate(const Dimensions& dims) const { return unpack(final_u, dims); }
};

/// Returns the matrix to use as C for a tie rule; the default provider is
/// generalized_element. Tests substitute their own.
using ElementProvider = std::function<Matrix(const Vector& u, TieRule rule)>;

struct Direction {
  Vector d;
  StepType used = StepType::newton;
};

/// Newton direction from C d = -Phi, retried with the other tie rules when C
/// is singular and ties exist; falls back to the negative merit gradient when
/// no element is usable or the descent test fails. Throws
/// Error(singular_unrecoverable) when that gradient vanishes.
Direction newton_direction(const BilevelProblem& problem, const PenaltyParams& params,
                           const Vector& u, const ElementProvider& provider = {});

/// Backtracking step tau = beta^j for the first j in [0, 60] with
/// Psi(u + tau d) <= Psi(u) + sigma tau g'd. Throws Error(linesearch_stall).
double line_search(const BilevelProblem& problem, const PenaltyParams& params, const Vector& u,
                   const Vector& d, const Vector& grad);

/// Line search along d for a caller-supplied merit function.
double line_search(const std::function<double(const Vector&)>& merit_fn, const PenaltyParams& params,
                   const Vector& u, const Vector& d, const Vector& grad);

/// Start point built from (x0, y0) with z = Ay - b = lam2 = lam3,
/// r = lam4 = lam7 = 0, s = e = lam5, lam1 = |Dx - d| and lam6 = 0.
IterateU default_start(const BilevelProblem& problem, const Vector& x0, const Vector& y0);

SolveReport solve(const BilevelProblem& problem, const PenaltyParams& params, const IterateU& u0,
                  const ElementProvider& provider = {});

/// Solves at each alpha in turn, warm-starting from the previous iterate, and
/// stops at the first converged solve with pi <= pi_tol.
SolveReport alpha_continuation(const BilevelProblem& problem, const PenaltyParams& params,
                               const IterateU& u0, const std::vector<double>& schedule,
                               double pi_tol = 1e-8);

}  // namespace bilevel
