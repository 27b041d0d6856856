#include "bilevel/regularity.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "bilevel/jacobian.hpp"
#include "bilevel/residual.hpp"

namespace bilevel {

namespace {

constexpr double kRankTol = 1e-12;
constexpr double kConditionCap = 1e12;

bool full_column_rank(const Matrix& M) {
  if (M.cols() == 0) return true;
  Eigen::FullPivLU<Matrix> lu(M);
  lu.setThreshold(kRankTol);
  return lu.rank() == M.cols();
}

Hypothesis empty_sets(const IndexSets& sets, const std::vector<std::pair<char, int>>& wanted) {
  Hypothesis h;
  std::ostringstream name, detail;
  bool ok = true;
  for (std::size_t k = 0; k < wanted.size(); ++k) {
    const auto [kind, family] = wanted[k];
    name << (k ? "," : "") << kind << family + 1;
    const auto& set = kind == 'P' ? sets.P[family] : sets.Q[family];
    if (!set.empty()) {
      ok = false;
      detail << kind << family + 1 << " = {";
      for (std::size_t j = 0; j < set.size(); ++j) detail << (j ? "," : "") << set[j] + 1;
      detail << "} ";
    }
  }
  h.name = "empty " + name.str();
  h.holds = ok;
  h.detail = ok ? "all empty" : detail.str();
  if (!h.detail.empty() && h.detail.back() == ' ') h.detail.pop_back();
  return h;
}

Hypothesis rank_hypothesis(const std::string& name, const Matrix& H) {
  Hypothesis h;
  h.name = name;
  h.holds = full_column_rank(H);
  h.detail = h.holds ? "full column rank" : "rank deficient";
  return h;
}

}  // namespace

IndexSets index_sets(const BilevelProblem& problem, const PenaltyParams& params, const Vector& u,
                     double tol) {
  const auto X = complementarity_arguments(problem, params, u);
  IndexSets sets;
  for (int i = 0; i < 5; ++i) {
    for (Index j = 0; j < X[i].size(); ++j) {
      const double v = std::abs(X[i](j)) <= tol ? 0.0 : X[i](j);
      if (v >= 0.0) sets.P[i].push_back(j);
      if (v <= 0.0) sets.Q[i].push_back(j);
    }
  }
  return sets;
}

bool Certificate::hypotheses_hold() const {
  return std::all_of(hypotheses.begin(), hypotheses.end(), [](const Hypothesis& h) { return h.holds; });
}

ProbeResult probe_elements(const BilevelProblem& problem, const PenaltyParams& params,
                           const Vector& u, double tie_tol, int cap) {
  const auto X = complementarity_arguments(problem, params, u);
  std::array<Vector, 5> base;
  std::vector<std::pair<int, Index>> ties;
  for (int i = 0; i < 5; ++i) {
    base[i] = Vector(X[i].size());
    for (Index j = 0; j < X[i].size(); ++j) {
      if (std::abs(X[i](j)) <= tie_tol) {
        base[i](j) = 0.5;
        ties.emplace_back(i, j);
      } else {
        base[i](j) = X[i](j) > 0.0 ? 1.0 : 0.0;
      }
    }
  }

  std::vector<std::array<Vector, 5>> selections{base};
  if (!ties.empty()) {
    // Extreme selections: all zero, all one, then binary patterns in order.
    const std::size_t k = ties.size();
    const std::uint64_t total = k >= 63 ? ~std::uint64_t{0} : (std::uint64_t{1} << k);
    std::vector<std::uint64_t> masks{0};
    if (total > 1) masks.push_back(total - 1);
    for (std::uint64_t mask = 1; mask + 1 < total && masks.size() + 1 < static_cast<std::size_t>(cap); ++mask) {
      masks.push_back(mask);
    }
    for (std::uint64_t mask : masks) {
      if (selections.size() >= static_cast<std::size_t>(cap)) break;
      auto sel = base;
      for (std::size_t b = 0; b < k; ++b) {
        const bool one = b < 64 && ((mask >> b) & 1u);
        sel[ties[b].first](ties[b].second) = one ? 1.0 : 0.0;
      }
      selections.push_back(sel);
    }
  }

  ProbeResult out;
  out.worst_rcond = 1.0;
  for (const auto& sel : selections) {
    const Matrix C = element_for_selection(problem, params, u, sel);
    Eigen::FullPivLU<Matrix> lu(C);
    lu.setThreshold(kRankTol);
    const double rcond = Eigen::PartialPivLU<Matrix>(C).rcond();
    ++out.elements;
    if (lu.isInvertible() && rcond > 1.0 / kConditionCap) ++out.nonsingular;
    out.worst_rcond = std::min(out.worst_rcond, lu.isInvertible() ? rcond : 0.0);
  }
  return out;
}

Certificate check_theorem_invertibleA(const BilevelProblem& problem, const PenaltyParams& params,
                                      const Vector& u) {
  const Dimensions dims = problem.dims();
  Certificate cert;
  cert.theorem = "invertible_A";

  Hypothesis a;
  a.name = "A square and invertible";
  if (dims.l != dims.n) {
    a.holds = false;
    a.detail = "A is " + std::to_string(dims.l) + "x" + std::to_string(dims.n);
  } else {
    Eigen::JacobiSVD<Matrix> svd(problem.A);
    const auto& sv = svd.singularValues();
    const double cond = sv(sv.size() - 1) > 0.0 ? sv(0) / sv(sv.size() - 1) : INFINITY;
    a.holds = cond < kConditionCap;
    std::ostringstream os;
    os << "condition " << cond;
    a.detail = os.str();
  }
  cert.hypotheses.push_back(a);

  const Vector x = block_of(u, dims, Block::x);
  const Vector y = block_of(u, dims, Block::y);
  cert.hypotheses.push_back(rank_hypothesis("hess_xx full column rank", problem.objective.hess_xx(x, y)));

  const IndexSets sets = index_sets(problem, params, u);
  cert.hypotheses.push_back(empty_sets(sets, {{'P', 0}, {'P', 2}, {'P', 4}, {'Q', 1}, {'Q', 3}}));
  cert.probe = probe_elements(problem, params, u);
  return cert;
}

Certificate check_theorem_fullrank_yy(const BilevelProblem& problem, const PenaltyParams& params,
                                      const Vector& u) {
  const Dimensions dims = problem.dims();
  Certificate cert;
  cert.theorem = "fullrank_yy";
  const Vector x = block_of(u, dims, Block::x);
  const Vector y = block_of(u, dims, Block::y);
  cert.hypotheses.push_back(rank_hypothesis("hess_yy full column rank", problem.objective.hess_yy(x, y)));
  const IndexSets sets = index_sets(problem, params, u);
  cert.hypotheses.push_back(empty_sets(sets, {{'P', 0}, {'P', 1}, {'P', 4}, {'Q', 2}, {'Q', 3}}));
  cert.probe = probe_elements(problem, params, u);
  return cert;
}

}  // namespace bilevel
