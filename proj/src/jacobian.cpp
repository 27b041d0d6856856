#include "bilevel/jacobian.hpp"

#include <cmath>
#include <exception>

#include "bilevel/error.hpp"
#include "bilevel/residual.hpp"

namespace bilevel {

namespace {

Matrix checked_hessian(const UpperObjective::HessianFn& fn, const char* name, const Vector& x,
                       const Vector& y, Index n) {
  Matrix H;
  try {
    H = fn(x, y);
  } catch (const Error&) {
    throw;
  } catch (const std::exception& e) {
    throw Error(ErrorCode::evaluation_failure, std::string(name) + ": " + e.what());
  }
  if (H.rows() != n || H.cols() != n) {
    throw Error(ErrorCode::evaluation_failure, std::string(name) + " returned a wrongly sized matrix");
  }
  if (!H.allFinite()) {
    throw Error(ErrorCode::evaluation_failure, std::string(name) + " returned non-finite entries");
  }
  return H;
}

// Rows 0 .. 3n+4l-1, which do not involve the max terms.
void fill_smooth_rows(Matrix& J, const BilevelProblem& problem, const PenaltyParams& params,
                      const Vector& u) {
  const Dimensions dims = problem.dims();
  const Index n = dims.n, l = dims.l, m = dims.m;
  const Vector x = block_of(u, dims, Block::x);
  const Vector y = block_of(u, dims, Block::y);
  const double alpha = params.alpha;
  const Matrix& A = problem.A;
  const ResidualRows rows(dims);
  auto col = [&](Block b) { return block_offset(dims, b); };

  J.block(rows.stat_x, col(Block::x), n, n) = checked_hessian(problem.objective.hess_xx, "hess_xx", x, y, n);
  J.block(rows.stat_x, col(Block::y), n, n) = checked_hessian(problem.objective.hess_xy, "hess_xy", x, y, n);
  if (m > 0) J.block(rows.stat_x, col(Block::lam1), n, m) = problem.D.transpose();
  J.block(rows.stat_x, col(Block::lam6), n, n).setIdentity();

  J.block(rows.stat_y, col(Block::x), n, n) = checked_hessian(problem.objective.hess_yx, "hess_yx", x, y, n);
  J.block(rows.stat_y, col(Block::y), n, n) = checked_hessian(problem.objective.hess_yy, "hess_yy", x, y, n);
  J.block(rows.stat_y, col(Block::s), n, l) = -alpha * A.transpose();
  J.block(rows.stat_y, col(Block::lam2), n, l) = A.transpose();

  J.block(rows.stat_r, col(Block::r), l, l) = alpha * Matrix::Identity(l, l);
  J.block(rows.stat_r, col(Block::lam3), l, l) = -Matrix::Identity(l, l);
  J.block(rows.stat_r, col(Block::lam6), l, n) = A;

  J.block(rows.stat_z, col(Block::z), l, l) = alpha * Matrix::Identity(l, l);
  J.block(rows.stat_z, col(Block::lam4), l, l) = -Matrix::Identity(l, l);
  J.block(rows.stat_z, col(Block::lam7), l, l).setIdentity();

  J.block(rows.stat_s, col(Block::y), l, n) = -alpha * A;
  J.block(rows.stat_s, col(Block::lam5), l, l) = -Matrix::Identity(l, l);
  J.block(rows.stat_s, col(Block::lam7), l, l).setIdentity();

  J.block(rows.eq_primal, col(Block::x), n, n).setIdentity();
  J.block(rows.eq_primal, col(Block::z), n, l) = A.transpose();

  J.block(rows.eq_T, col(Block::r), l, l).setIdentity();
  J.block(rows.eq_T, col(Block::s), l, l).setIdentity();
}

// Comp row j of family i differentiates lam_ij - max(0, X_ij) with dmax/dX = p_ij.
void fill_comp_rows(Matrix& J, const BilevelProblem& problem, const PenaltyParams& params,
                    const std::array<Vector, 5>& p) {
  const Dimensions dims = problem.dims();
  const ResidualRows rows(dims);
  static constexpr std::array<Block, 5> kVariable = {Block::x, Block::y, Block::z, Block::r,
                                                     Block::s};
  for (int i = 0; i < 5; ++i) {
    const Index k = block_size(dims, kFamilyMultiplier[i]);
    if (k == 0) continue;
    const Index lam_col = block_offset(dims, kFamilyMultiplier[i]);
    const Index var_col = block_offset(dims, kVariable[i]);
    const double t = params.t[i];
    for (Index j = 0; j < k; ++j) {
      const Index row = rows.comp[i] + j;
      J(row, lam_col + j) = 1.0 - p[i](j);
      if (i == 0) {
        J.block(row, var_col, 1, dims.n) = -t * p[i](j) * problem.D.row(j);
      } else if (i == 1) {
        J.block(row, var_col, 1, dims.n) = -t * p[i](j) * problem.A.row(j);
      } else {
        // h = -z, -r or -s.
        J(row, var_col + j) = t * p[i](j);
      }
    }
  }
}

}  // namespace

double tie_selection(double X, TieRule rule) {
  if (X > 0.0) return 1.0;
  if (X < 0.0) return 0.0;
  switch (rule) {
    case TieRule::zero:
      return 0.0;
    case TieRule::one:
      return 1.0;
    case TieRule::half:
      break;
  }
  return 0.5;
}

Matrix element_for_selection(const BilevelProblem& problem, const PenaltyParams& params,
                             const Vector& u, const std::array<Vector, 5>& p) {
  const Dimensions dims = problem.dims();
  if (u.size() != dims.total()) {
    throw Error(ErrorCode::dimension_mismatch, "element_for_selection: iterate has the wrong length");
  }
  for (int i = 0; i < 5; ++i) {
    if (p[i].size() != block_size(dims, kFamilyMultiplier[i])) {
      throw Error(ErrorCode::dimension_mismatch,
                  std::string("element_for_selection: selection for ") +
                      block_name(kFamilyMultiplier[i]) + " has the wrong length");
    }
  }
  Matrix J = Matrix::Zero(dims.total(), dims.total());
  fill_smooth_rows(J, problem, params, u);
  fill_comp_rows(J, problem, params, p);
  return J;
}

JacobianElement generalized_element(const BilevelProblem& problem, const PenaltyParams& params,
                                    const Vector& u, TieRule rule) {
  const auto X = complementarity_arguments(problem, params, u);
  JacobianElement out;
  for (int i = 0; i < 5; ++i) {
    out.p[i] = X[i].unaryExpr([rule](double v) { return tie_selection(v, rule); });
  }
  out.matrix = element_for_selection(problem, params, u, out.p);
  return out;
}

Vector smoothed_residual(const BilevelProblem& problem, const PenaltyParams& params,
                         const Vector& u) {
  if (!(params.epsilon > 0.0)) {
    throw Error(ErrorCode::invalid_smoothing, "smoothing requires epsilon > 0");
  }
  const Dimensions dims = problem.dims();
  Vector phi = residual(problem, params, u);
  const auto X = complementarity_arguments(problem, params, u);
  const ResidualRows rows(dims);
  const double eps = params.epsilon;
  for (int i = 0; i < 5; ++i) {
    const auto lam = block_of(u, dims, kFamilyMultiplier[i]);
    const Vector smooth_max =
        0.5 * (X[i] + (X[i].array().square() + eps).sqrt().matrix());
    phi.segment(rows.comp[i], lam.size()) = lam - smooth_max;
  }
  return phi;
}

Matrix smoothed_jacobian(const BilevelProblem& problem, const PenaltyParams& params,
                         const Vector& u) {
  if (!(params.epsilon > 0.0)) {
    throw Error(ErrorCode::invalid_smoothing, "smoothing requires epsilon > 0");
  }
  const auto X = complementarity_arguments(problem, params, u);
  std::array<Vector, 5> p;
  for (int i = 0; i < 5; ++i) {
    const auto ratio = X[i].array() / (X[i].array().square() + params.epsilon).sqrt();
    p[i] = (0.5 * (1.0 + ratio)).matrix();
  }
  return element_for_selection(problem, params, u, p);
}

Vector merit_gradient(const BilevelProblem& problem, const PenaltyParams& params, const Vector& u,
                      GradientMode mode) {
  if (mode == GradientMode::smoothed) {
    return smoothed_jacobian(problem, params, u).transpose() * smoothed_residual(problem, params, u);
  }
  const JacobianElement C = generalized_element(problem, params, u, TieRule::half);
  return C.matrix.transpose() * residual(problem, params, u);
}

}  // namespace bilevel
