#pragma once

#include <array>
#include <string>
#include <vector>

#include "bilevel/problem.hpp"

namespace bilevel {

/// Blocks of the stationarity residual, in stacking order.
struct ResidualBlocks {
  Vector stat_x;     // grad_x F + D'lam1 + lam6
  Vector stat_y;     // grad_y F - alpha A's + A'lam2
  Vector stat_r;     // alpha r + A lam6 - lam3
  Vector stat_z;     // alpha z + lam7 - lam4
  Vector stat_s;     // alpha (b - Ay) + lam7 - lam5
  Vector eq_primal;  // A'z + x
  Vector eq_T;       // r + s - e
  std::array<Vector, 5> comp;  // lam_i - max(0, lam_i + t_i h_i)

  Vector packed() const;
};

/// Row offsets of each residual block in the packed residual.
struct ResidualRows {
  Index stat_x, stat_y, stat_r, stat_z, stat_s, eq_primal, eq_T;
  std::array<Index, 5> comp;

  explicit ResidualRows(const Dimensions& d)
      : stat_x(0),
        stat_y(d.n),
        stat_r(2 * d.n),
        stat_z(2 * d.n + d.l),
        stat_s(2 * d.n + 2 * d.l),
        eq_primal(2 * d.n + 3 * d.l),
        eq_T(3 * d.n + 3 * d.l),
        comp{3 * d.n + 4 * d.l, 3 * d.n + 4 * d.l + d.m, 3 * d.n + 5 * d.l + d.m,
             3 * d.n + 6 * d.l + d.m, 3 * d.n + 7 * d.l + d.m} {}
};

/// Multiplier block paired with complementarity family i (0-based).
inline constexpr std::array<Block, 5> kFamilyMultiplier = {Block::lam1, Block::lam2, Block::lam3,
                                                           Block::lam4, Block::lam5};

/// Sum over lower-level rows of min(z_i, (b - Ay)_i).
double eval_pi(const Vector& y, const Vector& z, const BilevelProblem& problem);

/// h_1 = Dx - d, h_2 = Ay - b, h_3 = -z, h_4 = -r, h_5 = -s.
std::array<Vector, 5> constraint_values(const BilevelProblem& problem, const Vector& u);

/// X^i = lam_i + t_i h_i, the arguments of the max terms.
std::array<Vector, 5> complementarity_arguments(const BilevelProblem& problem,
                                                 const PenaltyParams& params, const Vector& u);

ResidualBlocks eval_residual(const IterateU& u, const BilevelProblem& problem,
                             const PenaltyParams& params);

/// Packed residual for a packed iterate; the hot path used by the solver.
Vector residual(const BilevelProblem& problem, const PenaltyParams& params, const Vector& u);

double eval_merit(const IterateU& u, const BilevelProblem& problem, const PenaltyParams& params);
double merit(const BilevelProblem& problem, const PenaltyParams& params, const Vector& u);

struct NocCondition {
  std::string name;
  bool pass = false;
  double violation = 0.0;
};

/// Direct check of the twelve optimality lines (stationarity, feasibility,
/// sign and complementarity), independent of the max reformulation.
struct NocReport {
  std::vector<NocCondition> conditions;

  bool all_pass() const;
  const NocCondition& at(const std::string& name) const;
};

NocReport check_noc(const IterateU& u, const BilevelProblem& problem, const PenaltyParams& params,
                    double tol);

/// Linear system for affine objectives F = k1'x + k2'y + k3:
///
///   B1 X + B2 G = v,      Gc - max(0, Gc + t . (P X - q)) = 0,
///
/// with X = (x, y, z, r, s), G = (lam1, ..., lam7) and Gc = (lam1, ..., lam5).
struct AffineSystem {
  Dimensions dims;
  Matrix B1;          // (3n + 4l) x (2n + 3l)
  Matrix B2;          // (3n + 4l) x (n + m + 5l)
  Vector v;           // 3n + 4l
  Matrix psi_matrix;  // (m + 4l) x (2n + 3l)
  Vector psi_offset;  // m + 4l
  Vector t_weights;   // m + 4l, t_i repeated over family i

  Vector linear_residual(const Vector& X, const Vector& gamma) const;
  Vector complementarity_residual(const Vector& X, const Vector& gamma) const;
  /// Both parts stacked in the same order as the general residual.
  Vector residual(const Vector& X, const Vector& gamma) const;

  static Vector primal_part(const Vector& u, const Dimensions& dims);
  static Vector multiplier_part(const Vector& u, const Dimensions& dims);
};

/// Throws Error(not_affine) unless the objective carries affine coefficients.
AffineSystem assemble_affine_system(const BilevelProblem& problem, const PenaltyParams& params);

}  // namespace bilevel
