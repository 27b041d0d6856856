#include "bilevel/problem.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "bilevel/error.hpp"

namespace bilevel {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::invalid_parameters: return "invalid_parameters";
    case ErrorCode::not_affine: return "not_affine";
    case ErrorCode::invalid_smoothing: return "invalid_smoothing";
    case ErrorCode::evaluation_failure: return "evaluation_failure";
    case ErrorCode::dimension_cap_exceeded: return "dimension_cap_exceeded";
    case ErrorCode::not_pointed: return "not_pointed";
    case ErrorCode::infeasible: return "infeasible";
    case ErrorCode::unbounded: return "unbounded";
    case ErrorCode::no_path: return "no_path";
    case ErrorCode::inconsistent_pin: return "inconsistent_pin";
    case ErrorCode::unknown_preset: return "unknown_preset";
    case ErrorCode::invalid_schedule: return "invalid_schedule";
    case ErrorCode::parse_error: return "parse_error";
    case ErrorCode::singular_unrecoverable: return "singular_unrecoverable";
    case ErrorCode::linesearch_stall: return "linesearch_stall";
  }
  return "unknown";
}

const char* block_name(Block block) {
  switch (block) {
    case Block::x: return "x";
    case Block::y: return "y";
    case Block::z: return "z";
    case Block::r: return "r";
    case Block::s: return "s";
    case Block::lam1: return "lam1";
    case Block::lam2: return "lam2";
    case Block::lam3: return "lam3";
    case Block::lam4: return "lam4";
    case Block::lam5: return "lam5";
    case Block::lam6: return "lam6";
    case Block::lam7: return "lam7";
  }
  return "?";
}

Index block_size(const Dimensions& dims, Block block) {
  switch (block) {
    case Block::x:
    case Block::y:
    case Block::lam6: return dims.n;
    case Block::lam1: return dims.m;
    default: return dims.l;
  }
}

Index block_offset(const Dimensions& dims, Block block) {
  Index offset = 0;
  for (Block b : kAllBlocks) {
    if (b == block) return offset;
    offset += block_size(dims, b);
  }
  return offset;
}

UpperObjective UpperObjective::from_quadratic(QuadraticForm form) {
  const Matrix hxx = 0.5 * (form.Qxx + form.Qxx.transpose());
  const Matrix hyy = 0.5 * (form.Qyy + form.Qyy.transpose());
  const Matrix hxy = form.Qxy;

  UpperObjective obj;
  obj.eval = [hxx, hxy, hyy, kx = form.kx, ky = form.ky, c = form.c](const Vector& x,
                                                                        const Vector& y) {
    return 0.5 * x.dot(hxx * x) + x.dot(hxy * y) + 0.5 * y.dot(hyy * y) + kx.dot(x) +
           ky.dot(y) + c;
  };
  obj.grad_x = [hxx, hxy, kx = form.kx](const Vector& x, const Vector& y) -> Vector {
    return hxx * x + hxy * y + kx;
  };
  obj.grad_y = [hxy, hyy, ky = form.ky](const Vector& x, const Vector& y) -> Vector {
    return hxy.transpose() * x + hyy * y + ky;
  };
  obj.hess_xx = [hxx](const Vector&, const Vector&) -> Matrix { return hxx; };
  obj.hess_xy = [hxy](const Vector&, const Vector&) -> Matrix { return hxy; };
  obj.hess_yx = [hxy](const Vector&, const Vector&) -> Matrix { return hxy.transpose(); };
  obj.hess_yy = [hyy](const Vector&, const Vector&) -> Matrix { return hyy; };

  if (hxx.isZero(0.0) && hxy.isZero(0.0) && hyy.isZero(0.0)) {
    obj.affine = AffineCoefficients{form.kx, form.ky, form.c};
  }
  obj.quadratic = std::move(form);
  return obj;
}

UpperObjective UpperObjective::from_affine(Vector k1, Vector k2, double k3) {
  const Index n = k1.size();
  QuadraticForm form{Matrix::Zero(n, n), Matrix::Zero(n, n), Matrix::Zero(n, n),
                     std::move(k1), std::move(k2), k3};
  return from_quadratic(std::move(form));
}

IterateU IterateU::zeros(const Dimensions& dims) {
  IterateU u;
  for (Block b : kAllBlocks) u.block(b) = Vector::Zero(block_size(dims, b));
  return u;
}

Vector& IterateU::block(Block b) {
  switch (b) {
    case Block::x: return x;
    case Block::y: return y;
    case Block::z: return z;
    case Block::r: return r;
    case Block::s: return s;
    case Block::lam1: return lam1;
    case Block::lam2: return lam2;
    case Block::lam3: return lam3;
    case Block::lam4: return lam4;
    case Block::lam5: return lam5;
    case Block::lam6: return lam6;
    case Block::lam7: return lam7;
  }
  return x;
}

const Vector& IterateU::block(Block b) const { return const_cast<IterateU&>(*this).block(b); }

Vector pack(const IterateU& u, const Dimensions& dims) {
  Vector packed(dims.total());
  for (Block b : kAllBlocks) {
    const Vector& v = u.block(b);
    if (v.size() != block_size(dims, b)) {
      std::ostringstream msg;
      msg << "block " << block_name(b) << ": expected length " << block_size(dims, b)
          << ", found " << v.size();
      throw Error(ErrorCode::dimension_mismatch, msg.str());
    }
    block_of(packed, dims, b) = v;
  }
  return packed;
}

IterateU unpack(const Vector& packed, const Dimensions& dims) {
  if (packed.size() != dims.total()) {
    std::ostringstream msg;
    msg << "packed iterate: expected length " << dims.total() << ", found " << packed.size();
    throw Error(ErrorCode::dimension_mismatch, msg.str());
  }
  IterateU u;
  for (Block b : kAllBlocks) u.block(b) = block_of(packed, dims, b);
  return u;
}

const char* to_string(TieRule rule) {
  switch (rule) {
    case TieRule::zero: return "zero";
    case TieRule::half: return "half";
    case TieRule::one: return "one";
  }
  return "?";
}

const char* to_string(GradientMode mode) {
  return mode == GradientMode::element ? "element" : "smoothed";
}

TieRule tie_rule_from_string(const std::string& name) {
  if (name == "zero") return TieRule::zero;
  if (name == "half") return TieRule::half;
  if (name == "one") return TieRule::one;
  throw Error(ErrorCode::invalid_parameters, "unknown tie rule '" + name + "'");
}

GradientMode gradient_mode_from_string(const std::string& name) {
  if (name == "element") return GradientMode::element;
  if (name == "smoothed") return GradientMode::smoothed;
  throw Error(ErrorCode::invalid_parameters, "unknown gradient mode '" + name + "'");
}

std::vector<std::string> PenaltyParams::violations() const {
  std::vector<std::string> out;
  auto finite = [](double v) { return std::isfinite(v); };
  if (!(alpha > 0.0) || !finite(alpha)) out.push_back("alpha must be positive");
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!(t[i] > 0.0) || !finite(t[i])) out.push_back("t" + std::to_string(i + 1) + " must be positive");
  }
  if (!(epsilon >= 0.0) || !finite(epsilon)) out.push_back("epsilon must be nonnegative");
  if (!(delta > 0.0)) out.push_back("delta must be positive");
  if (!(rho > 0.0)) out.push_back("rho must be positive");
  if (!(p_exp > 2.0)) out.push_back("p must exceed 2");
  if (!(beta > 0.0 && beta < 1.0)) out.push_back("beta must lie in (0,1)");
  if (!(sigma > 0.0 && sigma < 0.5)) out.push_back("sigma must lie in (0,1/2)");
  if (max_iter <= 0) out.push_back("max_iter must be positive");
  return out;
}

void PenaltyParams::check() const {
  const auto issues = violations();
  if (issues.empty()) return;
  std::string msg = "invalid penalty parameters:";
  for (const auto& s : issues) msg += " " + s + ";";
  throw Error(ErrorCode::invalid_parameters, msg);
}

namespace {

double rel_gap(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({1.0, std::abs(analytic), std::abs(numeric)});
}

template <class Fn>
Vector central_difference(Fn&& fn, const Vector& at, Index i) {
  const double h = 1e-6 * std::max(1.0, std::abs(at(i)));
  Vector plus = at, minus = at;
  plus(i) += h;
  minus(i) -= h;
  return (fn(plus) - fn(minus)) / (2.0 * h);
}

void check_derivatives(const BilevelProblem& problem, std::uint64_t seed,
                       std::vector<std::string>& issues) {
  const auto& obj = problem.objective;
  if (!obj.eval || !obj.grad_x || !obj.grad_y || !obj.hess_xx || !obj.hess_xy ||
      !obj.hess_yx || !obj.hess_yy) {
    issues.push_back("objective: missing evaluator callback");
    return;
  }
  const Index n = problem.A.cols();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  Vector x(n), y(n);
  for (Index i = 0; i < n; ++i) x(i) = unit(rng);
  for (Index i = 0; i < n; ++i) y(i) = unit(rng);

  constexpr double kTol = 1e-4;
  try {
    const Vector gx = obj.grad_x(x, y);
    const Vector gy = obj.grad_y(x, y);
    const Matrix hxx = obj.hess_xx(x, y), hxy = obj.hess_xy(x, y);
    const Matrix hyx = obj.hess_yx(x, y), hyy = obj.hess_yy(x, y);
    if (gx.size() != n || gy.size() != n || hxx.rows() != n || hxx.cols() != n ||
        hxy.rows() != n || hxy.cols() != n || hyx.rows() != n || hyx.cols() != n ||
        hyy.rows() != n || hyy.cols() != n) {
      issues.push_back("objective: derivative evaluators return wrong dimensions");
      return;
    }

    double err_gx = 0, err_gy = 0, err_hxx = 0, err_hxy = 0, err_hyx = 0, err_hyy = 0;
    auto scalar_x = [&](const Vector& v) { return Vector::Constant(1, obj.eval(v, y)); };
    auto scalar_y = [&](const Vector& v) { return Vector::Constant(1, obj.eval(x, v)); };
    for (Index i = 0; i < n; ++i) {
      err_gx = std::max(err_gx, rel_gap(gx(i), central_difference(scalar_x, x, i)(0)));
      err_gy = std::max(err_gy, rel_gap(gy(i), central_difference(scalar_y, y, i)(0)));
      const Vector dgx_dx = central_difference([&](const Vector& v) { return obj.grad_x(v, y); }, x, i);
      const Vector dgx_dy = central_difference([&](const Vector& v) { return obj.grad_x(x, v); }, y, i);
      const Vector dgy_dx = central_difference([&](const Vector& v) { return obj.grad_y(v, y); }, x, i);
      const Vector dgy_dy = central_difference([&](const Vector& v) { return obj.grad_y(x, v); }, y, i);
      for (Index j = 0; j < n; ++j) {
        err_hxx = std::max(err_hxx, rel_gap(hxx(j, i), dgx_dx(j)));
        err_hxy = std::max(err_hxy, rel_gap(hxy(j, i), dgx_dy(j)));
        err_hyx = std::max(err_hyx, rel_gap(hyx(j, i), dgy_dx(j)));
        err_hyy = std::max(err_hyy, rel_gap(hyy(j, i), dgy_dy(j)));
      }
    }
    auto report = [&](const char* name, double err) {
      if (err > kTol) {
        std::ostringstream msg;
        msg << "objective: " << name << " inconsistent with finite differences (relative error "
            << err << ")";
        issues.push_back(msg.str());
      }
    };
    report("grad_x", err_gx);
    report("grad_y", err_gy);
    report("hess_xx", err_hxx);
    report("hess_xy", err_hxy);
    report("hess_yx", err_hyx);
    report("hess_yy", err_hyy);
    if ((hxy - hyx.transpose()).cwiseAbs().maxCoeff() > kTol * std::max(1.0, hxy.cwiseAbs().maxCoeff())) {
      issues.push_back("objective: hess_xy is not the transpose of hess_yx");
    }
  } catch (const std::exception& e) {
    issues.push_back(std::string("objective: evaluation failed: ") + e.what());
  }
}

}  // namespace

Diagnostics validate(const BilevelProblem& problem, std::uint64_t seed) {
  Diagnostics diag;
  auto& issues = diag.issues;
  const Index n = problem.A.cols();
  const Index l = problem.A.rows();
  const Index m = problem.D.rows();
  if (n < 1) issues.push_back("A: needs at least one column (n >= 1)");
  if (l < 1) issues.push_back("A: needs at least one row (l >= 1)");
  if (problem.D.cols() != n && !(m == 0 && problem.D.cols() == 0)) {
    issues.push_back("D: expected " + std::to_string(n) + " columns, found " +
                     std::to_string(problem.D.cols()));
  }
  if (problem.d.size() != m) {
    issues.push_back("d: expected length " + std::to_string(m) + ", found " +
                     std::to_string(problem.d.size()));
  }
  if (problem.b.size() != l) {
    issues.push_back("b: expected length " + std::to_string(l) + ", found " +
                     std::to_string(problem.b.size()));
  }
  auto all_finite = [](const auto& mtx) { return mtx.allFinite(); };
  if (!all_finite(problem.D) || !all_finite(problem.d) || !all_finite(problem.A) ||
      !all_finite(problem.b)) {
    issues.push_back("data: non-finite entries");
  }
  if (!issues.empty()) return diag;
  check_derivatives(problem, seed, issues);
  return diag;
}

}  // namespace bilevel
