#include "bilevel/residual.hpp"

#include <cmath>

#include "bilevel/error.hpp"

namespace bilevel {

namespace {

void require_length(const Vector& u, const Dimensions& dims) {
  if (u.size() != dims.total()) {
    throw Error(ErrorCode::dimension_mismatch,
                "iterate: expected length " + std::to_string(dims.total()) + ", found " +
                    std::to_string(u.size()));
  }
}

// D'lam1 that tolerates an m = 0 instance stored as a 0 x 0 matrix.
Vector upper_transpose_times(const BilevelProblem& p, const Vector& lam1, Index n) {
  if (p.D.rows() == 0) return Vector::Zero(n);
  return p.D.transpose() * lam1;
}

Vector upper_times(const BilevelProblem& p, const Vector& x) {
  if (p.D.rows() == 0) return Vector::Zero(0);
  return p.D * x;
}

}  // namespace

Vector ResidualBlocks::packed() const {
  Index total = stat_x.size() + stat_y.size() + stat_r.size() + stat_z.size() + stat_s.size() +
                eq_primal.size() + eq_T.size();
  for (const auto& c : comp) total += c.size();
  Vector out(total);
  Index at = 0;
  auto put = [&](const Vector& v) {
    out.segment(at, v.size()) = v;
    at += v.size();
  };
  put(stat_x);
  put(stat_y);
  put(stat_r);
  put(stat_z);
  put(stat_s);
  put(eq_primal);
  put(eq_T);
  for (const auto& c : comp) put(c);
  return out;
}

double eval_pi(const Vector& y, const Vector& z, const BilevelProblem& problem) {
  if (y.size() != problem.A.cols() || z.size() != problem.A.rows()) {
    throw Error(ErrorCode::dimension_mismatch, "eval_pi: y or z has the wrong length");
  }
  const Vector slack = problem.b - problem.A * y;
  return z.cwiseMin(slack).sum();
}

std::array<Vector, 5> constraint_values(const BilevelProblem& problem, const Vector& u) {
  const Dimensions dims = problem.dims();
  require_length(u, dims);
  return {upper_times(problem, block_of(u, dims, Block::x)) - problem.d,
          problem.A * block_of(u, dims, Block::y) - problem.b, -block_of(u, dims, Block::z),
          -block_of(u, dims, Block::r), -block_of(u, dims, Block::s)};
}

std::array<Vector, 5> complementarity_arguments(const BilevelProblem& problem,
                                                 const PenaltyParams& params, const Vector& u) {
  const Dimensions dims = problem.dims();
  auto h = constraint_values(problem, u);
  std::array<Vector, 5> X;
  for (int i = 0; i < 5; ++i) {
    X[i] = block_of(u, dims, kFamilyMultiplier[i]) + params.t[i] * h[i];
  }
  return X;
}

ResidualBlocks eval_residual(const IterateU& u, const BilevelProblem& problem,
                             const PenaltyParams& params) {
  const Dimensions dims = problem.dims();
  const Vector packed_u = pack(u, dims);
  const Vector phi = residual(problem, params, packed_u);
  const ResidualRows rows(dims);
  ResidualBlocks out;
  out.stat_x = phi.segment(rows.stat_x, dims.n);
  out.stat_y = phi.segment(rows.stat_y, dims.n);
  out.stat_r = phi.segment(rows.stat_r, dims.l);
  out.stat_z = phi.segment(rows.stat_z, dims.l);
  out.stat_s = phi.segment(rows.stat_s, dims.l);
  out.eq_primal = phi.segment(rows.eq_primal, dims.n);
  out.eq_T = phi.segment(rows.eq_T, dims.l);
  for (int i = 0; i < 5; ++i) {
    out.comp[i] = phi.segment(rows.comp[i], block_size(dims, kFamilyMultiplier[i]));
  }
  return out;
}

Vector residual(const BilevelProblem& problem, const PenaltyParams& params, const Vector& u) {
  const Dimensions dims = problem.dims();
  require_length(u, dims);
  const double alpha = params.alpha;
  const Vector x = block_of(u, dims, Block::x);
  const Vector y = block_of(u, dims, Block::y);
  const auto z = block_of(u, dims, Block::z);
  const auto r = block_of(u, dims, Block::r);
  const auto s = block_of(u, dims, Block::s);
  const auto lam1 = block_of(u, dims, Block::lam1);
  const auto lam2 = block_of(u, dims, Block::lam2);
  const auto lam3 = block_of(u, dims, Block::lam3);
  const auto lam4 = block_of(u, dims, Block::lam4);
  const auto lam5 = block_of(u, dims, Block::lam5);
  const auto lam6 = block_of(u, dims, Block::lam6);
  const auto lam7 = block_of(u, dims, Block::lam7);
  const Matrix& A = problem.A;

  const ResidualRows rows(dims);
  Vector phi(dims.total());
  phi.segment(rows.stat_x, dims.n) =
      problem.objective.grad_x(x, y) + upper_transpose_times(problem, lam1, dims.n) + lam6;
  phi.segment(rows.stat_y, dims.n) =
      problem.objective.grad_y(x, y) - alpha * (A.transpose() * s) + A.transpose() * lam2;
  phi.segment(rows.stat_r, dims.l) = alpha * r + A * lam6 - lam3;
  phi.segment(rows.stat_z, dims.l) = alpha * z + lam7 - lam4;
  phi.segment(rows.stat_s, dims.l) = alpha * (problem.b - A * y) + lam7 - lam5;
  phi.segment(rows.eq_primal, dims.n) = A.transpose() * z + x;
  phi.segment(rows.eq_T, dims.l) = r + s - Vector::Ones(dims.l);

  const auto X = complementarity_arguments(problem, params, u);
  for (int i = 0; i < 5; ++i) {
    const auto lam = block_of(u, dims, kFamilyMultiplier[i]);
    phi.segment(rows.comp[i], lam.size()) = lam - X[i].cwiseMax(0.0);
  }
  return phi;
}

double eval_merit(const IterateU& u, const BilevelProblem& problem, const PenaltyParams& params) {
  return merit(problem, params, pack(u, problem.dims()));
}

double merit(const BilevelProblem& problem, const PenaltyParams& params, const Vector& u) {
  return 0.5 * residual(problem, params, u).squaredNorm();
}

bool NocReport::all_pass() const {
  for (const auto& c : conditions) {
    if (!c.pass) return false;
  }
  return true;
}

const NocCondition& NocReport::at(const std::string& name) const {
  for (const auto& c : conditions) {
    if (c.name == name) return c;
  }
  throw std::out_of_range("no optimality condition named " + name);
}

NocReport check_noc(const IterateU& u, const BilevelProblem& problem, const PenaltyParams& params,
                    double tol) {
  const Dimensions dims = problem.dims();
  const Vector packed_u = pack(u, dims);
  const double alpha = params.alpha;
  const Matrix& A = problem.A;
  const Vector& x = u.x;
  const Vector& y = u.y;

  NocReport report;
  auto equality = [&](const char* name, const Vector& v) {
    const double viol = v.size() ? v.cwiseAbs().maxCoeff() : 0.0;
    report.conditions.push_back({name, viol <= tol, viol});
  };
  // lam >= 0, h <= 0 and lam_j h_j = 0 for every component.
  auto complementarity = [&](const char* name, const Vector& lam, const Vector& h) {
    double viol = 0.0;
    for (Index j = 0; j < lam.size(); ++j) {
      viol = std::max({viol, -lam(j), h(j), std::abs(lam(j) * h(j))});
    }
    report.conditions.push_back({name, viol <= tol, viol});
  };

  equality("stationarity_x", problem.objective.grad_x(x, y) +
                                 upper_transpose_times(problem, u.lam1, dims.n) + u.lam6);
  equality("stationarity_y",
           problem.objective.grad_y(x, y) - alpha * (A.transpose() * u.s) + A.transpose() * u.lam2);
  equality("stationarity_r", alpha * u.r + A * u.lam6 - u.lam3);
  equality("stationarity_z", alpha * u.z + u.lam7 - u.lam4);
  equality("stationarity_s", alpha * (problem.b - A * y) + u.lam7 - u.lam5);
  equality("lower_dual_feasibility", A.transpose() * u.z + x);
  equality("simplex", u.r + u.s - Vector::Ones(dims.l));

  const auto h = constraint_values(problem, packed_u);
  complementarity("upper_complementarity", u.lam1, h[0]);
  complementarity("lower_complementarity", u.lam2, h[1]);
  complementarity("z_complementarity", u.lam3, h[2]);
  complementarity("r_complementarity", u.lam4, h[3]);
  complementarity("s_complementarity", u.lam5, h[4]);
  return report;
}

Vector AffineSystem::primal_part(const Vector& u, const Dimensions& dims) {
  return u.head(2 * dims.n + 3 * dims.l);
}

Vector AffineSystem::multiplier_part(const Vector& u, const Dimensions& dims) {
  return u.tail(dims.total() - (2 * dims.n + 3 * dims.l));
}

Vector AffineSystem::linear_residual(const Vector& X, const Vector& gamma) const {
  return B1 * X + B2 * gamma - v;
}

Vector AffineSystem::complementarity_residual(const Vector& X, const Vector& gamma) const {
  const Vector gc = gamma.head(psi_offset.size());
  const Vector psi = psi_matrix * X - psi_offset;
  return gc - (gc + t_weights.cwiseProduct(psi)).cwiseMax(0.0);
}

Vector AffineSystem::residual(const Vector& X, const Vector& gamma) const {
  Vector out(dims.total());
  const Vector lin = linear_residual(X, gamma);
  out.head(lin.size()) = lin;
  out.tail(dims.total() - lin.size()) = complementarity_residual(X, gamma);
  return out;
}

AffineSystem assemble_affine_system(const BilevelProblem& problem, const PenaltyParams& params) {
  if (!problem.objective.affine) {
    throw Error(ErrorCode::not_affine, "assemble_affine_system: objective is not affine");
  }
  const auto& k = *problem.objective.affine;
  const Dimensions dims = problem.dims();
  const Index n = dims.n, l = dims.l, m = dims.m;
  const double alpha = params.alpha;
  const Matrix& A = problem.A;
  const Matrix I_n = Matrix::Identity(n, n);
  const Matrix I_l = Matrix::Identity(l, l);

  // Column offsets in X = (x, y, z, r, s).
  const Index cx = 0, cy = n, cz = 2 * n, cr = 2 * n + l, cs = 2 * n + 2 * l;
  // Column offsets in G = (lam1, ..., lam7).
  const Index g1 = 0, g2 = m, g3 = m + l, g4 = m + 2 * l, g5 = m + 3 * l, g6 = m + 4 * l,
              g7 = m + 4 * l + n;
  const ResidualRows rows(dims);

  AffineSystem sys;
  sys.dims = dims;
  const Index lin_rows = 3 * n + 4 * l;
  sys.B1 = Matrix::Zero(lin_rows, 2 * n + 3 * l);
  sys.B2 = Matrix::Zero(lin_rows, n + m + 5 * l);
  sys.v = Vector::Zero(lin_rows);

  // grad_x F = k1 moves to the right-hand side.
  if (m > 0) sys.B2.block(rows.stat_x, g1, n, m) = problem.D.transpose();
  sys.B2.block(rows.stat_x, g6, n, n) = I_n;
  sys.v.segment(rows.stat_x, n) = -k.k1;

  sys.B1.block(rows.stat_y, cs, n, l) = -alpha * A.transpose();
  sys.B2.block(rows.stat_y, g2, n, l) = A.transpose();
  sys.v.segment(rows.stat_y, n) = -k.k2;

  sys.B1.block(rows.stat_r, cr, l, l) = alpha * I_l;
  sys.B2.block(rows.stat_r, g3, l, l) = -I_l;
  sys.B2.block(rows.stat_r, g6, l, n) = A;

  sys.B1.block(rows.stat_z, cz, l, l) = alpha * I_l;
  sys.B2.block(rows.stat_z, g4, l, l) = -I_l;
  sys.B2.block(rows.stat_z, g7, l, l) = I_l;

  sys.B1.block(rows.stat_s, cy, l, n) = -alpha * A;
  sys.B2.block(rows.stat_s, g5, l, l) = -I_l;
  sys.B2.block(rows.stat_s, g7, l, l) = I_l;
  sys.v.segment(rows.stat_s, l) = -alpha * problem.b;

  sys.B1.block(rows.eq_primal, cx, n, n) = I_n;
  sys.B1.block(rows.eq_primal, cz, n, l) = A.transpose();

  sys.B1.block(rows.eq_T, cr, l, l) = I_l;
  sys.B1.block(rows.eq_T, cs, l, l) = I_l;
  sys.v.segment(rows.eq_T, l) = Vector::Ones(l);

  // Psi(X) = (Dx - d, Ay - b, -z, -r, -s).
  sys.psi_matrix = Matrix::Zero(m + 4 * l, 2 * n + 3 * l);
  sys.psi_offset = Vector::Zero(m + 4 * l);
  sys.t_weights = Vector::Zero(m + 4 * l);
  if (m > 0) {
    sys.psi_matrix.block(0, cx, m, n) = problem.D;
    sys.psi_offset.head(m) = problem.d;
  }
  sys.psi_matrix.block(m, cy, l, n) = A;
  sys.psi_offset.segment(m, l) = problem.b;
  sys.psi_matrix.block(m + l, cz, l, l) = -I_l;
  sys.psi_matrix.block(m + 2 * l, cr, l, l) = -I_l;
  sys.psi_matrix.block(m + 3 * l, cs, l, l) = -I_l;
  sys.t_weights.head(m).setConstant(params.t[0]);
  for (int i = 1; i < 5; ++i) sys.t_weights.segment(m + (i - 1) * l, l).setConstant(params.t[i]);
  return sys;
}

}  // namespace bilevel
