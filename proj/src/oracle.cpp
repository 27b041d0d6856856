#include "bilevel/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "bilevel/error.hpp"
#include "bilevel/residual.hpp"

namespace bilevel {

namespace {

constexpr double kFeasTol = 1e-9;
constexpr double kMergeTol = 1e-9;
constexpr double kValueTol = 1e-8;
constexpr double kRankTol = 1e-10;

Index numeric_rank(const Matrix& M) {
  if (M.rows() == 0 || M.cols() == 0) return 0;
  Eigen::FullPivLU<Matrix> lu(M);
  lu.setThreshold(kRankTol);
  return lu.rank();
}

Matrix stack(const Matrix& top, const Matrix& bottom, Index cols) {
  Matrix out(top.rows() + bottom.rows(), cols);
  if (top.rows() > 0) out.topRows(top.rows()) = top;
  if (bottom.rows() > 0) out.bottomRows(bottom.rows()) = bottom;
  return out;
}

Vector stack(const Vector& top, const Vector& bottom) {
  Vector out(top.size() + bottom.size());
  out << top, bottom;
  return out;
}

bool lex_less(const Vector& a, const Vector& b) {
  return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

// Moves opposing inequality pairs into the equality block and drops exact
// duplicate inequalities.
Polyhedron fold_pairs(const Polyhedron& poly) {
  const Index d = poly.dim();
  const Index rows = poly.G.rows();
  std::vector<int> role(rows, 0);  // 0 keep, 1 becomes equality, 2 dropped
  for (Index i = 0; i < rows; ++i) {
    if (role[i] != 0) continue;
    const double scale = std::max(1.0, poly.G.row(i).cwiseAbs().maxCoeff());
    for (Index j = i + 1; j < rows; ++j) {
      if (role[j] != 0) continue;
      const double hs = std::max(1.0, std::abs(poly.h(i)));
      if ((poly.G.row(i) + poly.G.row(j)).cwiseAbs().maxCoeff() <= 1e-12 * scale &&
          std::abs(poly.h(i) + poly.h(j)) <= 1e-12 * hs) {
        role[i] = 1;
        role[j] = 2;
        break;
      }
      if ((poly.G.row(i) - poly.G.row(j)).cwiseAbs().maxCoeff() <= 1e-12 * scale &&
          std::abs(poly.h(i) - poly.h(j)) <= 1e-12 * hs) {
        role[j] = 2;
      }
    }
  }
  Polyhedron out;
  const Index keep = std::count(role.begin(), role.end(), 0);
  const Index eq = std::count(role.begin(), role.end(), 1);
  out.G = Matrix(keep, d);
  out.h = Vector(keep);
  out.E = Matrix(poly.E.rows() + eq, d);
  out.f = Vector(poly.E.rows() + eq);
  if (poly.E.rows() > 0) {
    out.E.topRows(poly.E.rows()) = poly.E;
    out.f.head(poly.E.rows()) = poly.f;
  }
  Index gk = 0, ek = poly.E.rows();
  for (Index i = 0; i < rows; ++i) {
    if (role[i] == 0) {
      out.G.row(gk) = poly.G.row(i);
      out.h(gk++) = poly.h(i);
    } else if (role[i] == 1) {
      out.E.row(ek) = poly.G.row(i);
      out.f(ek++) = poly.h(i);
    }
  }
  return out;
}

// Calls visit(indices) for every k-subset of {0, ..., n-1} in lexicographic order.
template <class Visit>
void for_each_subset(Index n, Index k, Visit&& visit) {
  if (k > n || k < 0) return;
  std::vector<Index> idx(k);
  std::iota(idx.begin(), idx.end(), Index{0});
  while (true) {
    visit(idx);
    Index i = k - 1;
    while (i >= 0 && idx[i] == n - k + i) --i;
    if (i < 0) return;
    ++idx[i];
    for (Index j = i + 1; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

void merge_into(std::vector<Vector>& out, const Vector& v) {
  for (const Vector& w : out) {
    if ((w - v).cwiseAbs().maxCoeff() <= kMergeTol) return;
  }
  out.push_back(v);
}

void check_cap(Index dim, int dim_cap) {
  if (dim > dim_cap) {
    throw Error(ErrorCode::dimension_cap_exceeded,
                "ambient dimension " + std::to_string(dim) + " exceeds the oracle cap of " +
                    std::to_string(dim_cap));
  }
}

Index oracle_dimension(const BilevelProblem& p) {
  const Dimensions dims = p.dims();
  return 2 * dims.n + dims.l;
}

}  // namespace

bool Polyhedron::contains(const Vector& v, double tol) const {
  for (Index i = 0; i < G.rows(); ++i) {
    if (G.row(i).dot(v) > h(i) + tol * std::max(1.0, std::abs(h(i)))) return false;
  }
  for (Index i = 0; i < E.rows(); ++i) {
    if (std::abs(E.row(i).dot(v) - f(i)) > tol * std::max(1.0, std::abs(f(i)))) return false;
  }
  return true;
}

std::vector<Vector> enumerate_vertices(const Polyhedron& input, int dim_cap) {
  const Index d = input.dim();
  check_cap(d, dim_cap);
  const Polyhedron poly = fold_pairs(input);
  if (numeric_rank(stack(poly.G, poly.E, d)) < d) {
    throw Error(ErrorCode::not_pointed, "polyhedron contains a line: constraint normals have rank below " +
                                            std::to_string(d));
  }
  const Index rank_e = numeric_rank(poly.E);
  std::vector<Vector> found;
  for_each_subset(poly.G.rows(), d - rank_e, [&](const std::vector<Index>& rows) {
    Matrix M(poly.E.rows() + static_cast<Index>(rows.size()), d);
    Vector rhs(M.rows());
    if (poly.E.rows() > 0) {
      M.topRows(poly.E.rows()) = poly.E;
      rhs.head(poly.E.rows()) = poly.f;
    }
    for (std::size_t k = 0; k < rows.size(); ++k) {
      M.row(poly.E.rows() + static_cast<Index>(k)) = poly.G.row(rows[k]);
      rhs(poly.E.rows() + static_cast<Index>(k)) = poly.h(rows[k]);
    }
    Eigen::FullPivLU<Matrix> lu(M);
    lu.setThreshold(kRankTol);
    if (lu.rank() < d) return;
    const Vector v = M.colPivHouseholderQr().solve(rhs);
    if (!v.allFinite()) return;
    const double scale = std::max(1.0, rhs.cwiseAbs().maxCoeff());
    if ((M * v - rhs).cwiseAbs().maxCoeff() > kFeasTol * scale) return;
    if (!poly.contains(v, kFeasTol)) return;
    merge_into(found, v);
  });
  std::sort(found.begin(), found.end(), lex_less);
  return found;
}

Polyhedron z1_polyhedron(const BilevelProblem& problem) {
  const Dimensions dims = problem.dims();
  const Index n = dims.n, l = dims.l, m = dims.m;
  const Index d = 2 * n + l;
  Polyhedron poly;
  poly.G = Matrix::Zero(m + 2 * l, d);
  poly.h = Vector::Zero(m + 2 * l);
  if (m > 0) {
    poly.G.block(0, 0, m, n) = problem.D;
    poly.h.head(m) = problem.d;
  }
  poly.G.block(m, n, l, n) = problem.A;
  poly.h.segment(m, l) = problem.b;
  poly.G.block(m + l, 2 * n, l, l) = -Matrix::Identity(l, l);
  poly.E = Matrix::Zero(n, d);
  poly.E.block(0, 0, n, n).setIdentity();
  poly.E.block(0, 2 * n, n, l) = problem.A.transpose();
  poly.f = Vector::Zero(n);
  return poly;
}

PenalizedOptimum global_penalized(const BilevelProblem& problem, double alpha, int dim_cap) {
  const Dimensions dims = problem.dims();
  check_cap(oracle_dimension(problem), dim_cap);
  const auto vertices = enumerate_vertices(z1_polyhedron(problem), dim_cap);
  if (vertices.empty()) throw Error(ErrorCode::infeasible, "Z1 has no vertex");

  std::vector<double> values;
  std::vector<double> pis;
  for (const Vector& v : vertices) {
    const Vector x = v.head(dims.n), y = v.segment(dims.n, dims.n), z = v.tail(dims.l);
    const double pi = eval_pi(y, z, problem);
    pis.push_back(pi);
    values.push_back(problem.upper_value(x, y) + alpha * pi);
  }
  const double best = *std::min_element(values.begin(), values.end());
  std::size_t pick = 0;
  while (values[pick] > best + kValueTol * std::max(1.0, std::abs(best))) ++pick;

  const Vector& v = vertices[pick];
  PenalizedOptimum out;
  out.x = v.head(dims.n);
  out.y = v.segment(dims.n, dims.n);
  out.z = v.tail(dims.l);
  out.value = values[pick];
  out.pi = pis[pick];
  return out;
}

LowerArgmin lower_level_argmin(const Vector& x, const BilevelProblem& problem, int dim_cap) {
  const Dimensions dims = problem.dims();
  if (x.size() != dims.n) throw Error(ErrorCode::dimension_mismatch, "lower_level_argmin: x has the wrong length");
  Polyhedron feasible{problem.A, problem.b, Matrix(0, dims.n), Vector(0)};
  const auto vertices = enumerate_vertices(feasible, dim_cap);
  if (vertices.empty()) throw Error(ErrorCode::infeasible, "lower-level feasible set is empty");

  // A recession direction with x'r < 0 exists iff { Ar <= 0, x'r = -1 } has a vertex.
  Polyhedron rays{problem.A, Vector::Zero(dims.l), x.transpose(), Vector::Constant(1, -1.0)};
  if (!enumerate_vertices(rays, dim_cap).empty()) {
    throw Error(ErrorCode::unbounded, "lower-level objective is unbounded below");
  }

  LowerArgmin out;
  out.value = std::numeric_limits<double>::infinity();
  for (const Vector& y : vertices) out.value = std::min(out.value, x.dot(y));
  for (const Vector& y : vertices) {
    if (x.dot(y) <= out.value + kValueTol * std::max(1.0, std::abs(out.value))) out.vertices.push_back(y);
  }
  return out;
}

BilevelOptimum bilevel_bruteforce(const BilevelProblem& problem, int dim_cap) {
  const Dimensions dims = problem.dims();
  const Index n = dims.n, m = dims.m;
  check_cap(oracle_dimension(problem), dim_cap);
  Polyhedron feasible{problem.A, problem.b, Matrix(0, n), Vector(0)};
  const auto lower_vertices = enumerate_vertices(feasible, dim_cap);
  if (lower_vertices.empty()) throw Error(ErrorCode::infeasible, "lower-level feasible set is empty");

  bool have = false;
  BilevelOptimum best;
  for (const Vector& y : lower_vertices) {
    std::vector<Index> active;
    for (Index i = 0; i < dims.l; ++i) {
      if (std::abs(problem.A.row(i).dot(y) - problem.b(i)) <= kFeasTol * std::max(1.0, std::abs(problem.b(i)))) {
        active.push_back(i);
      }
    }
    const Index k = static_cast<Index>(active.size());
    Matrix AI(k, n);
    for (Index j = 0; j < k; ++j) AI.row(j) = problem.A.row(active[j]);

    Polyhedron region;
    region.G = Matrix::Zero(m + k, n + k);
    region.h = Vector::Zero(m + k);
    if (m > 0) {
      region.G.block(0, 0, m, n) = problem.D;
      region.h.head(m) = problem.d;
    }
    region.G.block(m, n, k, k) = -Matrix::Identity(k, k);
    region.E = Matrix::Zero(n, n + k);
    region.E.block(0, 0, n, n).setIdentity();
    region.E.block(0, n, n, k) = AI.transpose();
    region.f = Vector::Zero(n);

    for (const Vector& v : enumerate_vertices(region, dim_cap)) {
      const Vector x = v.head(n);
      const double value = problem.upper_value(x, y);
      const double tol = kValueTol * std::max(1.0, std::abs(best.value));
      bool better = !have || value < best.value - tol;
      if (have && !better && std::abs(value - best.value) <= tol) {
        better = lex_less(stack(x, y), stack(best.x, best.y));
      }
      if (better) {
        best = {x, y, value};
        have = true;
      }
    }
  }
  if (!have) throw Error(ErrorCode::infeasible, "no upper-feasible price admits a lower-level optimum");
  return best;
}

}  // namespace bilevel
