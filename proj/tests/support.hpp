#pragma once

// Fixtures and independent oracles shared by the test binaries.

#include <functional>
#include <limits>
#include <map>
#include <queue>
#include <random>
#include <vector>

#include "bilevel/problem.hpp"
#include "bilevel/toll.hpp"

namespace bilevel::testing {

inline Matrix mat(Index rows, Index cols, std::initializer_list<double> values) {
  Matrix M(rows, cols);
  auto it = values.begin();
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) M(i, j) = *it++;
  return M;
}

inline Vector vec(std::initializer_list<double> values) {
  Vector v(static_cast<Index>(values.size()));
  Index i = 0;
  for (double x : values) v(i++) = x;
  return v;
}

inline UpperObjective quadratic(const Matrix& Qxx, const Matrix& Qxy, const Matrix& Qyy, const Vector& kx,
                                const Vector& ky, double c = 0.0) {
  return UpperObjective::from_quadratic({Qxx, Qxy, Qyy, kx, ky, c});
}

// min 10x - 3x^2 + 10xy - 3y^2  s.t. 1 <= x <= 5/3, y in argmin { xy : y >= 0 }.
inline BilevelProblem interval_example() {
  BilevelProblem p;
  p.D = mat(2, 1, {-1, 1});
  p.d = vec({-1, 5.0 / 3});
  p.A = mat(1, 1, {-1});
  p.b = vec({0});
  p.objective = quadratic(mat(1, 1, {-6}), mat(1, 1, {10}), mat(1, 1, {-6}), vec({10}), vec({0}));
  return p;
}

// KKT root of the interval example at (x, y) = (5/3, 0).
inline IterateU interval_root(double alpha) {
  IterateU u = IterateU::zeros({1, 1, 2});
  u.x << 5.0 / 3;
  u.y << 0;
  u.z << 5.0 / 3;
  u.r << 0;
  u.s << 1;
  u.lam1 << 0, 0;
  u.lam2 << 50.0 / 3 + alpha;
  u.lam3 << 0;
  u.lam4 << 5.0 * alpha / 3;
  u.lam5 << 0;
  u.lam6 << 0;
  u.lam7 << 0;
  return u;
}

// min -3x^2 + 10xy - 3y^2  s.t. 1 <= x <= 2, y in argmin { xy : 0 <= y <= 2 }.
inline BilevelProblem box_example() {
  BilevelProblem p;
  p.D = mat(2, 1, {-1, 1});
  p.d = vec({-1, 2});
  p.A = mat(2, 1, {-1, 1});
  p.b = vec({0, 2});
  p.objective = quadratic(mat(1, 1, {-6}), mat(1, 1, {10}), mat(1, 1, {-6}), vec({0}), vec({0}));
  return p;
}

// Multipliers as published for the box example; not a root of the residual.
inline IterateU box_published_point(double alpha) {
  IterateU u = IterateU::zeros({1, 2, 2});
  u.x << 2;
  u.y << 0;
  u.z << 2, 0;
  u.r << 0.5, 2.0 / 3;
  u.s << 0.5, 1.0 / 3;
  u.lam1 << 0, 0;
  u.lam2 << alpha / 2 - 20, 0;
  u.lam3 << alpha / 2 + 12, 2 * alpha / 3 - 12;
  u.lam4 << 2 * alpha, 2.0 / 3;
  u.lam5 << 2 * alpha, 2.0 / 3;
  u.lam6 << 12;
  u.lam7 << 0, 2.0 / 3;
  return u;
}

// A root of the residual for the box example at (x, y) = (2, 0), solved by
// hand from the stationarity rows with the upper bound x <= 2 active.
inline IterateU box_root(double alpha) {
  IterateU u = IterateU::zeros({1, 2, 2});
  u.x << 2;
  u.y << 0;
  u.z << 2, 0;
  u.r << 0, 1;
  u.s << 1, 0;
  u.lam1 << 0, 12;
  u.lam2 << 20 + alpha, 0;
  u.lam3 << 0, alpha;
  u.lam4 << 2 * alpha, 0;
  u.lam5 << 0, 2 * alpha;
  u.lam6 << 0;
  u.lam7 << 0, 0;
  return u;
}

inline Vector random_vector(std::mt19937_64& rng, Index size, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Vector v(size);
  for (Index i = 0; i < size; ++i) v(i) = normal(rng);
  return v;
}

inline Vector random_positive_t(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(0.001, 1.0);
  Vector t(5);
  for (Index i = 0; i < 5; ++i) t(i) = unif(rng);
  return t;
}

inline void set_t(PenaltyParams& params, const Vector& t) {
  for (int i = 0; i < 5; ++i) params.t[static_cast<std::size_t>(i)] = t(i);
}

// Central differences of a vector function, one column per coordinate.
inline Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& u, double h = 1e-6) {
  const Vector f0 = f(u);
  Matrix J(f0.size(), u.size());
  for (Index j = 0; j < u.size(); ++j) {
    Vector up = u, um = u;
    up(j) += h;
    um(j) -= h;
    J.col(j) = (f(up) - f(um)) / (2 * h);
  }
  return J;
}

inline double max_rel_error(const Matrix& A, const Matrix& B) {
  return (A - B).cwiseAbs().maxCoeff() / std::max(1.0, B.cwiseAbs().maxCoeff());
}

// Shortest path cost by Dijkstra over nonnegative arc prices.
inline double shortest_path(const TollNetwork& net, const std::vector<double>& price, int origin, int destination,
                            const std::vector<Index>& allowed = {}) {
  std::map<int, double> dist;
  for (int v : net.nodes) dist[v] = std::numeric_limits<double>::infinity();
  dist[origin] = 0.0;
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  queue.push({0.0, origin});
  std::vector<bool> usable(net.arcs.size(), allowed.empty());
  for (Index a : allowed) usable[static_cast<std::size_t>(a)] = true;
  while (!queue.empty()) {
    auto [d, v] = queue.top();
    queue.pop();
    if (d > dist[v]) continue;
    for (std::size_t a = 0; a < net.arcs.size(); ++a) {
      if (!usable[a] || net.arcs[a].tail != v) continue;
      const double nd = d + price[a];
      if (nd < dist[net.arcs[a].head]) {
        dist[net.arcs[a].head] = nd;
        queue.push({nd, net.arcs[a].head});
      }
    }
  }
  return dist[destination];
}

// Random instance with bounded upper and lower feasible sets and a concave
// quadratic objective: n in {1, 2}, l = m = n + 1.
inline BilevelProblem random_concave_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick_n(1, 2);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  const Index n = pick_n(rng);
  auto simplex_rows = [&](Matrix& G, Vector& h, double lo, double width) {
    G = Matrix::Zero(n + 1, n);
    h = Vector::Zero(n + 1);
    for (Index i = 0; i < n; ++i) {
      G(i, i) = -1.0;
      h(i) = -lo;
    }
    G.row(n).setOnes();
    h(n) = static_cast<double>(n) * lo + width;
  };
  BilevelProblem p;
  simplex_rows(p.D, p.d, -0.5 * (unif(rng) + 1.0), 1.0 + (unif(rng) + 1.0));
  // Lower level: a simplex shifted by a random offset.
  const double lo = unif(rng);
  simplex_rows(p.A, p.b, lo, 1.0 + (unif(rng) + 1.0));

  Matrix B(2 * n, 2 * n);
  for (Index i = 0; i < B.size(); ++i) B.data()[i] = unif(rng);
  const Matrix H = -B * B.transpose();
  Vector kx(n), ky(n);
  for (Index i = 0; i < n; ++i) {
    kx(i) = 2.0 * unif(rng);
    ky(i) = 2.0 * unif(rng);
  }
  p.objective = quadratic(H.topLeftCorner(n, n), H.topRightCorner(n, n), H.bottomRightCorner(n, n), kx, ky);
  return p;
}

}  // namespace bilevel::testing
