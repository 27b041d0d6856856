#include "bilevel/newton.hpp"

#include <cmath>

#include "bilevel/error.hpp"
#include "bilevel/jacobian.hpp"
#include "bilevel/residual.hpp"

namespace bilevel {

namespace {

constexpr int kMaxHalvings = 60;
constexpr double kPivotTol = 1e-12;

bool has_exact_tie(const BilevelProblem& problem, const PenaltyParams& params, const Vector& u) {
  for (const auto& X : complementarity_arguments(problem, params, u)) {
    if ((X.array() == 0.0).any()) return true;
  }
  return false;
}

// Solves C d = rhs; empty optional when a pivot falls below the relative threshold.
std::optional<Vector> solve_dense(const Matrix& C, const Vector& rhs) {
  if (C.rows() != C.cols() || C.rows() != rhs.size()) return std::nullopt;
  const double scale = C.cwiseAbs().rowwise().sum().maxCoeff();
  if (!(scale > 0.0) || !std::isfinite(scale)) return std::nullopt;
  Eigen::PartialPivLU<Matrix> lu(C);
  const double min_pivot = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
  if (min_pivot < kPivotTol * scale) return std::nullopt;
  Vector d = lu.solve(rhs);
  if (!d.allFinite()) return std::nullopt;
  return d;
}

}  // namespace

const char* to_string(StepType type) {
  switch (type) {
    case StepType::none: return "none";
    case StepType::newton: return "newton";
    case StepType::gradient: return "gradient";
  }
  return "none";
}

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::max_iter: return "max_iter";
    case SolveStatus::linesearch_stall: return "linesearch_stall";
    case SolveStatus::singular_unrecoverable: return "singular_unrecoverable";
    case SolveStatus::schedule_exhausted: return "schedule_exhausted";
  }
  return "max_iter";
}

StepType step_type_from_string(const std::string& name) {
  for (StepType t : {StepType::none, StepType::newton, StepType::gradient}) {
    if (name == to_string(t)) return t;
  }
  throw Error(ErrorCode::parse_error, "unknown step type '" + name + "'");
}

SolveStatus solve_status_from_string(const std::string& name) {
  for (SolveStatus s : {SolveStatus::converged, SolveStatus::max_iter, SolveStatus::linesearch_stall,
                        SolveStatus::singular_unrecoverable, SolveStatus::schedule_exhausted}) {
    if (name == to_string(s)) return s;
  }
  throw Error(ErrorCode::parse_error, "unknown solve status '" + name + "'");
}

Direction newton_direction(const BilevelProblem& problem, const PenaltyParams& params,
                           const Vector& u, const ElementProvider& provider) {
  const Vector phi = residual(problem, params, u);
  const Vector grad = merit_gradient(problem, params, u, params.gradient_mode);
  auto element = [&](TieRule rule) -> Matrix {
    if (provider) return provider(u, rule);
    return generalized_element(problem, params, u, rule).matrix;
  };

  std::vector<TieRule> rules{params.tie_rule};
  if (has_exact_tie(problem, params, u)) {
    for (TieRule r : {TieRule::zero, TieRule::one, TieRule::half}) {
      if (r != params.tie_rule) rules.push_back(r);
    }
  }
  for (TieRule rule : rules) {
    auto d = solve_dense(element(rule), -phi);
    if (!d) continue;
    if (grad.dot(*d) <= -params.rho * std::pow(d->norm(), params.p_exp)) {
      return {*d, StepType::newton};
    }
    break;  // a solvable element failed the descent test; use the gradient
  }

  if (!grad.allFinite() || grad.norm() <= 1e-14 * std::max(1.0, phi.norm())) {
    throw Error(ErrorCode::singular_unrecoverable,
                "merit gradient vanishes at a point with residual norm " + std::to_string(phi.norm()));
  }
  return {-grad, StepType::gradient};
}

double line_search(const std::function<double(const Vector&)>& merit_fn, const PenaltyParams& params,
                   const Vector& u, const Vector& d, const Vector& grad) {
  const double psi0 = merit_fn(u);
  const double slope = grad.dot(d);
  double tau = 1.0;
  for (int j = 0; j <= kMaxHalvings; ++j) {
    const double trial = merit_fn(u + tau * d);
    if (std::isfinite(trial) && trial <= psi0 + params.sigma * tau * slope) return tau;
    tau *= params.beta;
  }
  throw Error(ErrorCode::linesearch_stall, "no acceptable step after " +
                                               std::to_string(kMaxHalvings) + " reductions");
}

double line_search(const BilevelProblem& problem, const PenaltyParams& params, const Vector& u,
                   const Vector& d, const Vector& grad) {
  return line_search([&](const Vector& v) { return merit(problem, params, v); }, params, u, d, grad);
}

IterateU default_start(const BilevelProblem& problem, const Vector& x0, const Vector& y0) {
  const Dimensions dims = problem.dims();
  if (x0.size() != dims.n || y0.size() != dims.n) {
    throw Error(ErrorCode::dimension_mismatch, "default_start: x0 and y0 need length n");
  }
  IterateU u = IterateU::zeros(dims);
  u.x = x0;
  u.y = y0;
  u.z = problem.A * y0 - problem.b;
  u.lam2 = u.z;
  u.lam3 = u.z;
  u.s = Vector::Ones(dims.l);
  u.lam5 = u.s;
  if (dims.m > 0) u.lam1 = (problem.D * x0 - problem.d).cwiseAbs();
  return u;
}

SolveReport solve(const BilevelProblem& problem, const PenaltyParams& params, const IterateU& u0,
                  const ElementProvider& provider) {
  params.check();
  const Dimensions dims = problem.dims();
  Vector u = pack(u0, dims);

  SolveReport report;
  report.alpha = params.alpha;
  Vector phi = residual(problem, params, u);
  double psi = 0.5 * phi.squaredNorm();
  report.iterates.push_back({0, phi.norm(), psi, StepType::none, 0.0});

  for (int k = 0;; ++k) {
    if (phi.norm() <= params.delta) {
      report.status = SolveStatus::converged;
      break;
    }
    if (k >= params.max_iter) {
      report.status = SolveStatus::max_iter;
      break;
    }
    try {
      const Direction dir = newton_direction(problem, params, u, provider);
      const Vector grad = merit_gradient(problem, params, u, params.gradient_mode);
      const double tau = line_search(problem, params, u, dir.d, grad);
      u += tau * dir.d;
      phi = residual(problem, params, u);
      psi = 0.5 * phi.squaredNorm();
      report.iterates.push_back({k + 1, phi.norm(), psi, dir.used, tau});
    } catch (const Error& e) {
      if (e.code() == ErrorCode::singular_unrecoverable) {
        report.status = SolveStatus::singular_unrecoverable;
      } else if (e.code() == ErrorCode::linesearch_stall) {
        report.status = SolveStatus::linesearch_stall;
      } else {
        throw;
      }
      break;
    }
  }

  report.final_u = u;
  report.pi = eval_pi(block_of(u, dims, Block::y), block_of(u, dims, Block::z), problem);
  if (report.status == SolveStatus::converged) {
    report.certificates.push_back(check_theorem_invertibleA(problem, params, u));
    report.certificates.push_back(check_theorem_fullrank_yy(problem, params, u));
  }
  return report;
}

SolveReport alpha_continuation(const BilevelProblem& problem, const PenaltyParams& params,
                               const IterateU& u0, const std::vector<double>& schedule,
                               double pi_tol) {
  if (schedule.empty()) throw Error(ErrorCode::invalid_schedule, "alpha schedule is empty");
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (!std::isfinite(schedule[i]) || !(schedule[i] > 0.0)) {
      throw Error(ErrorCode::invalid_schedule, "alpha schedule entries must be positive and finite");
    }
    if (i > 0 && !(schedule[i] > schedule[i - 1])) {
      throw Error(ErrorCode::invalid_schedule, "alpha schedule must be strictly increasing");
    }
  }

  const Dimensions dims = problem.dims();
  IterateU start = u0;
  SolveReport last;
  std::vector<double> tried;
  for (double alpha : schedule) {
    PenaltyParams stage = params;
    stage.alpha = alpha;
    last = solve(problem, stage, start);
    tried.push_back(alpha);
    if (last.status == SolveStatus::converged && last.pi <= pi_tol) {
      last.alpha_tried = tried;
      return last;
    }
    start = unpack(last.final_u, dims);
  }
  last.alpha_tried = tried;
  last.status = SolveStatus::schedule_exhausted;
  return last;
}

}  // namespace bilevel
