#pragma once

#include <array>

#include "bilevel/problem.hpp"

namespace bilevel {

/// One element of the generalized Jacobian of the residual, together with the
/// max-term selections p_i that produced it.
struct JacobianElement {
  Matrix matrix;
  std::array<Vector, 5> p;
};

/// Selection for a single max component with argument X.
double tie_selection(double X, TieRule rule);

/// Element with p chosen by the sign of X^i = lam_i + t_i h_i; exact zeros use
/// the tie rule. TieRule::half gives the element whose tie rows are the average
/// of the two one-sided limits.
JacobianElement generalized_element(const BilevelProblem& problem, const PenaltyParams& params,
                                    const Vector& u, TieRule rule);

/// Element for an explicit selection vector, entries in [0, 1]. The caller is
/// responsible for p being consistent with the signs of X^i.
Matrix element_for_selection(const BilevelProblem& problem, const PenaltyParams& params,
                             const Vector& u, const std::array<Vector, 5>& p);

/// Residual with each max(0, X) replaced by (X + sqrt(X^2 + eps)) / 2.
/// Throws Error(invalid_smoothing) unless params.epsilon > 0.
Vector smoothed_residual(const BilevelProblem& problem, const PenaltyParams& params,
                         const Vector& u);

/// Exact derivative of smoothed_residual.
Matrix smoothed_jacobian(const BilevelProblem& problem, const PenaltyParams& params,
                         const Vector& u);

/// Surrogate gradient of the merit function: C'Phi with the half element, or
/// the exact gradient of the smoothed merit.
Vector merit_gradient(const BilevelProblem& problem, const PenaltyParams& params, const Vector& u,
                      GradientMode mode);

}  // namespace bilevel
