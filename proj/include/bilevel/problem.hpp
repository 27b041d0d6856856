#pragma once

// Problem instance, stacked solver unknown and penalty parameters for bilevel
// programs of the form
//
//   min_{x,y} F(x,y)  s.t.  Dx <= d,  y in argmin { x^T y : Ay <= b }.
//
// The solver works on the stacked vector
//   u = (x, y, z, r, s, lam1, ..., lam7),   length 3n + 8l + m,
// where z are lower-level multipliers, (r,s) lie in the set
// { r,s >= 0, r + s = e } and lam1..lam7 are multipliers of the penalized
// single-level problem.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace bilevel {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct Dimensions {
  Index n = 0;  // upper and lower variables
  Index l = 0;  // lower-level constraints
  Index m = 0;  // upper-level constraints

  Index total() const { return 3 * n + 8 * l + m; }
  bool operator==(const Dimensions&) const = default;
};

enum class Block { x, y, z, r, s, lam1, lam2, lam3, lam4, lam5, lam6, lam7 };

inline constexpr std::array<Block, 12> kAllBlocks = {
    Block::x,    Block::y,    Block::z,    Block::r,    Block::s,    Block::lam1,
    Block::lam2, Block::lam3, Block::lam4, Block::lam5, Block::lam6, Block::lam7};

const char* block_name(Block block);
Index block_size(const Dimensions& dims, Block block);
Index block_offset(const Dimensions& dims, Block block);

template <class Derived>
auto block_of(Eigen::MatrixBase<Derived>& u, const Dimensions& dims, Block block) {
  return u.segment(block_offset(dims, block), block_size(dims, block));
}

template <class Derived>
auto block_of(const Eigen::MatrixBase<Derived>& u, const Dimensions& dims, Block block) {
  return u.segment(block_offset(dims, block), block_size(dims, block));
}

/// F(x,y) = 1/2 x'Qxx x + x'Qxy y + 1/2 y'Qyy y + kx'x + ky'y + c.
struct QuadraticForm {
  Matrix Qxx, Qxy, Qyy;
  Vector kx, ky;
  double c = 0.0;
};

/// F(x,y) = k1'x + k2'y + k3.
struct AffineCoefficients {
  Vector k1, k2;
  double k3 = 0.0;
};

/// Twice differentiable upper-level objective.
///
/// hess_xy(x,y) is d(grad_x F)/dy, an n x n matrix with entries
/// d^2F / dx_i dy_j; hess_yx is its transpose.
struct UpperObjective {
  using ValueFn = std::function<double(const Vector&, const Vector&)>;
  using GradientFn = std::function<Vector(const Vector&, const Vector&)>;
  using HessianFn = std::function<Matrix(const Vector&, const Vector&)>;

  ValueFn eval;
  GradientFn grad_x, grad_y;
  HessianFn hess_xx, hess_xy, hess_yx, hess_yy;

  // Set by the factories below; the affine system assembly requires it and
  // the problem file writer uses the quadratic form.
  std::optional<AffineCoefficients> affine;
  std::optional<QuadraticForm> quadratic;

  static UpperObjective from_quadratic(QuadraticForm form);
  static UpperObjective from_affine(Vector k1, Vector k2, double k3);
};

struct BilevelProblem {
  Matrix D;  // m x n
  Vector d;  // m
  Matrix A;  // l x n
  Vector b;  // l
  UpperObjective objective;

  Dimensions dims() const { return {A.cols(), A.rows(), D.rows()}; }

  double upper_value(const Vector& x, const Vector& y) const { return objective.eval(x, y); }
  double lower_value(const Vector& x, const Vector& y) const { return x.dot(y); }
};

struct IterateU {
  Vector x, y, z, r, s;
  Vector lam1, lam2, lam3, lam4, lam5, lam6, lam7;

  static IterateU zeros(const Dimensions& dims);

  Vector& block(Block b);
  const Vector& block(Block b) const;
};

/// Lays the blocks out as (x, y, z, r, s, lam1, ..., lam7).
Vector pack(const IterateU& u, const Dimensions& dims);
IterateU unpack(const Vector& packed, const Dimensions& dims);

enum class TieRule { zero, half, one };
enum class GradientMode { element, smoothed };

const char* to_string(TieRule rule);
const char* to_string(GradientMode mode);
TieRule tie_rule_from_string(const std::string& name);
GradientMode gradient_mode_from_string(const std::string& name);

struct PenaltyParams {
  double alpha = 1.0;
  std::array<double, 5> t = {0.045, 0.049, 0.025, 0.005, 0.0025};
  double epsilon = 0.01;
  double delta = 1e-6;
  double rho = 1e-8;
  double p_exp = 2.1;
  double beta = 0.5;
  double sigma = 1e-4;
  int max_iter = 50;
  TieRule tie_rule = TieRule::half;
  GradientMode gradient_mode = GradientMode::element;

  std::vector<std::string> violations() const;
  /// Throws Error(invalid_parameters) listing every violated constraint.
  void check() const;
};

struct Diagnostics {
  std::vector<std::string> issues;
  bool ok() const { return issues.empty(); }
};

/// Dimension checks plus a central-difference spot check of the objective's
/// derivatives at a pseudo-random point drawn from `seed`.
Diagnostics validate(const BilevelProblem& problem, std::uint64_t seed = 20211);

}  // namespace bilevel
