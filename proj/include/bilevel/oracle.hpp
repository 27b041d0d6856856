#pragma once

#include <vector>

#include "bilevel/problem.hpp"

namespace bilevel {

/// { v : G v <= h, E v = f }.
struct Polyhedron {
  Matrix G;
  Vector h;
  Matrix E;
  Vector f;

  Index dim() const { return G.cols() > 0 ? G.cols() : E.cols(); }
  bool contains(const Vector& v, double tol = 1e-9) const;
};

inline constexpr int kDefaultDimCap = 12;

/// All vertices by active-set enumeration. Inequality pairs g'v <= c and
/// -g'v <= -c are folded into equalities first. Throws
/// Error(dimension_cap_exceeded) above the cap and Error(not_pointed) when
/// the constraint normals do not span the space. Output is sorted
/// lexicographically with duplicates (1e-9) merged.
std::vector<Vector> enumerate_vertices(const Polyhedron& poly, int dim_cap = kDefaultDimCap);

/// Z1 = { (x, y, z) : Dx <= d, Ay <= b, A'z + x = 0, z >= 0 }.
Polyhedron z1_polyhedron(const BilevelProblem& problem);

struct PenalizedOptimum {
  Vector x, y, z;
  double value = 0.0;  // F(x, y) + alpha pi(y, z)
  double pi = 0.0;
};

/// Minimum of F + alpha pi over the vertices of Z1; exact for concave F.
/// Throws Error(infeasible) when Z1 has no vertex.
PenalizedOptimum global_penalized(const BilevelProblem& problem, double alpha,
                                  int dim_cap = kDefaultDimCap);

struct LowerArgmin {
  std::vector<Vector> vertices;  // minimizing vertices of { Ay <= b }
  double value = 0.0;
};

/// Throws Error(infeasible) or Error(unbounded).
LowerArgmin lower_level_argmin(const Vector& x, const BilevelProblem& problem,
                               int dim_cap = kDefaultDimCap);

struct BilevelOptimum {
  Vector x, y;
  double value = 0.0;
};

/// Optimistic optimum. For every vertex y of the lower feasible set with
/// active rows I, F(., y) is minimized over the vertices of
/// { (x, w) : Dx <= d, x + A_I'w = 0, w >= 0 }, the prices for which y is
/// lower-level optimal. Exact when F is concave.
BilevelOptimum bilevel_bruteforce(const BilevelProblem& problem, int dim_cap = kDefaultDimCap);

}  // namespace bilevel
