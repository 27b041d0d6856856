#include "bilevel/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "bilevel/error.hpp"
#include "bilevel/io.hpp"
#include "bilevel/jacobian.hpp"
#include "bilevel/newton.hpp"
#include "bilevel/oracle.hpp"
#include "bilevel/residual.hpp"
#include "bilevel/toll.hpp"

namespace bilevel {
namespace {

constexpr int kExitOk = 0;
constexpr int kExitFail = 1;
constexpr int kExitParse = 2;
constexpr int kExitCap = 3;

struct CommonOptions {
  std::string file;
  std::string preset;
  std::optional<double> alpha, eps, delta;
  std::array<std::optional<double>, 5> t;
  std::optional<int> max_iter;
  std::optional<std::string> tie_rule;
  std::string schedule;
  std::string out_path;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("file", o.file, "Problem file (JSON)");
  cmd->add_option("--preset", o.preset, "Built-in instance: network1 or network2");
  cmd->add_option("--alpha", o.alpha, "Penalty weight");
  for (int i = 0; i < 5; ++i) {
    cmd->add_option("--t" + std::to_string(i + 1), o.t[static_cast<std::size_t>(i)],
                    "Complementarity weight t" + std::to_string(i + 1));
  }
  cmd->add_option("--eps", o.eps, "Smoothing parameter");
  cmd->add_option("--delta", o.delta, "Stopping tolerance on the residual norm");
  cmd->add_option("--max-iter", o.max_iter, "Iteration limit");
  cmd->add_option("--tie-rule", o.tie_rule, "Selection at ties: zero, half or one");
  cmd->add_option("--alpha-schedule", o.schedule, "Comma-separated increasing alpha values");
  cmd->add_option("--out", o.out_path, "Write the JSON report here");
}

ProblemFile load_input(const CommonOptions& o) {
  if (!o.preset.empty() && !o.file.empty()) {
    throw Error(ErrorCode::parse_error, "give either a file or --preset, not both");
  }
  ProblemFile f;
  if (!o.preset.empty()) {
    Preset p = preset(o.preset);
    f.kind = "toll";
    f.problem = p.instance.problem;
    f.toll = p.instance;
    f.params = p.params;
    f.start = p.start;
  } else if (!o.file.empty()) {
    f = load_problem_file(o.file);
  } else {
    throw Error(ErrorCode::parse_error, "no problem given; pass a file or --preset");
  }
  if (o.alpha) f.params.alpha = *o.alpha;
  for (std::size_t i = 0; i < 5; ++i) {
    if (o.t[i]) f.params.t[i] = *o.t[i];
  }
  if (o.eps) f.params.epsilon = *o.eps;
  if (o.delta) f.params.delta = *o.delta;
  if (o.max_iter) f.params.max_iter = *o.max_iter;
  if (o.tie_rule) f.params.tie_rule = tie_rule_from_string(*o.tie_rule);
  const auto issues = f.params.violations();
  if (!issues.empty()) throw Error(ErrorCode::invalid_parameters, issues.front());
  return f;
}

std::vector<double> parse_schedule(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) {
      throw Error(ErrorCode::invalid_schedule, "bad alpha schedule entry '" + item + "'");
    }
    values.push_back(v);
  }
  if (values.empty()) throw Error(ErrorCode::invalid_schedule, "alpha schedule is empty");
  return values;
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

void print_table(const SolveReport& report, std::ostream& out) {
  out << "   k       |Phi|        merit  step          tau\n";
  for (const auto& it : report.iterates) {
    char line[128];
    std::snprintf(line, sizeof line, "%4d  %11.4e  %11.4e  %-8s  %11.4e\n", it.k, it.residual_norm,
                  it.merit, to_string(it.step_type), it.tau);
    out << line;
  }
}

void write_report(const std::string& path, const nlohmann::json& j) {
  if (path.empty()) return;
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::parse_error, "cannot write " + path);
  f << j.dump(2) << '\n';
}

int cmd_solve(const CommonOptions& o, std::ostream& out) {
  const ProblemFile f = load_input(o);
  const SolveReport report = o.schedule.empty()
                                 ? solve(f.problem, f.params, f.start)
                                 : alpha_continuation(f.problem, f.params, f.start, parse_schedule(o.schedule));
  print_table(report, out);

  const Dimensions dims = f.problem.dims();
  const IterateU fin = report.final_iterate(dims);
  out << "status: " << to_string(report.status) << '\n';
  out << "alpha: " << fmt("%.6g", report.alpha) << '\n';
  out << "pi: " << fmt("%.6e", report.pi) << '\n';
  out << "upper objective: " << fmt("%.6f", f.problem.upper_value(fin.x, fin.y)) << '\n';
  out << "lower objective: " << fmt("%.6f", f.problem.lower_value(fin.x, fin.y)) << '\n';
  if (f.toll) {
    try {
      const auto tolls = recover_tolls(fin.x, *f.toll);
      out << "tolls:";
      for (std::size_t i = 0; i < tolls.size(); ++i) {
        out << " arc " << f.toll->network.tolled[i] + 1 << " = " << fmt("%.6f", tolls[i]) << ';';
      }
      out << '\n';
    } catch (const Error& e) {
      out << "tolls: " << e.what() << '\n';
    }
    out << "revenue: " << fmt("%.6f", revenue(*f.toll, fin.x, fin.y)) << '\n';
  }
  for (const auto& c : report.certificates) {
    out << "certificate " << c.theorem << ": " << (c.positive() ? "positive" : "not established") << '\n';
  }
  write_report(o.out_path, report_to_json(report, f.problem, f.toll ? &*f.toll : nullptr));
  return report.status == SolveStatus::converged ? kExitOk : kExitFail;
}

constexpr double kPointTol = 1e-6;
constexpr double kValueTol = 1e-8;
constexpr double kPiTol = 1e-8;

int cmd_verify(const CommonOptions& o, int dim_cap, std::ostream& out) {
  const ProblemFile f = load_input(o);
  const std::vector<double> schedule =
      o.schedule.empty() ? std::vector<double>{1, 10, 100, 1000} : parse_schedule(o.schedule);
  const BilevelOptimum best = bilevel_bruteforce(f.problem, dim_cap);
  out << "bilevel optimum: value " << fmt("%.10g", best.value) << " at x =";
  for (Index i = 0; i < best.x.size(); ++i) out << ' ' << fmt("%.6g", best.x(i));
  out << ", y =";
  for (Index i = 0; i < best.y.size(); ++i) out << ' ' << fmt("%.6g", best.y(i));
  out << '\n';

  bool oracle_agree = false;
  for (double a : schedule) {
    const PenalizedOptimum pen = global_penalized(f.problem, a, dim_cap);
    const double f_value = f.problem.upper_value(pen.x, pen.y);
    const bool match = pen.pi <= kPiTol && std::abs(f_value - best.value) <= kValueTol;
    out << "alpha " << fmt("%.6g", a) << ": penalized value " << fmt("%.10g", pen.value) << ", pi = "
        << fmt("%.3e", pen.pi) << (match ? ", matches" : "") << '\n';
    if (match) {
      oracle_agree = true;
      break;
    }
  }

  const SolveReport report = solve(f.problem, f.params, f.start);
  const IterateU fin = report.final_iterate(f.problem.dims());
  const double gap = std::max((fin.x - best.x).cwiseAbs().maxCoeff(), (fin.y - best.y).cwiseAbs().maxCoeff());
  const bool solve_agree = report.status == SolveStatus::converged && gap <= kPointTol;
  out << "solve: " << to_string(report.status) << ", pi = " << fmt("%.3e", report.pi) << ", distance to optimum "
      << fmt("%.3e", gap) << '\n';
  out << "verdict: " << (oracle_agree && solve_agree ? "agree" : "disagree") << '\n';
  write_report(o.out_path, report_to_json(report, f.problem, f.toll ? &*f.toll : nullptr));
  return oracle_agree && solve_agree ? kExitOk : kExitFail;
}

Vector random_iterate(const Dimensions& dims, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector u(dims.total());
  for (Index i = 0; i < u.size(); ++i) u(i) = normal(rng);
  return u;
}

double relative_error(const Matrix& A, const Matrix& B) {
  const double scale = std::max(1.0, B.cwiseAbs().maxCoeff());
  return (A - B).cwiseAbs().maxCoeff() / scale;
}

int cmd_check_jacobian(const CommonOptions& o, int points, double tol, std::uint64_t seed, std::ostream& out) {
  const ProblemFile f = load_input(o);
  const Dimensions dims = f.problem.dims();
  std::mt19937_64 rng(seed);
  constexpr double h = 1e-6;
  constexpr double kLimitEps = 1e-14;
  PenaltyParams limit = f.params;
  limit.epsilon = kLimitEps;

  double fd_err = 0.0, limit_err = 0.0;
  for (int k = 0; k < points; ++k) {
    const Vector u = random_iterate(dims, rng);
    const Matrix J = smoothed_jacobian(f.problem, f.params, u);
    Matrix fd(J.rows(), J.cols());
    for (Index j = 0; j < u.size(); ++j) {
      Vector up = u, um = u;
      up(j) += h;
      um(j) -= h;
      fd.col(j) = (smoothed_residual(f.problem, f.params, up) - smoothed_residual(f.problem, f.params, um)) / (2 * h);
    }
    fd_err = std::max(fd_err, relative_error(J, fd));
    const Matrix G = generalized_element(f.problem, f.params, u, TieRule::half).matrix;
    limit_err = std::max(limit_err, relative_error(G, smoothed_jacobian(f.problem, limit, u)));
  }
  out << "points: " << points << '\n';
  out << "smoothed jacobian vs finite differences: max relative error " << fmt("%.3e", fd_err) << '\n';
  out << "generalized element vs smoothed limit: max relative error " << fmt("%.3e", limit_err) << '\n';
  const bool ok = fd_err <= tol && limit_err <= tol;
  out << (ok ? "ok" : "tolerance exceeded") << " (tol " << fmt("%.1e", tol) << ")\n";
  return ok ? kExitOk : kExitFail;
}

int report_error(const Error& e, std::ostream& err) {
  err << "error (" << to_string(e.code()) << "): " << e.what() << '\n';
  return e.code() == ErrorCode::dimension_cap_exceeded ? kExitCap : kExitParse;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Semismooth Newton solver for bilevel programs with linear lower levels", "bilevel"};
  app.require_subcommand(1);

  CommonOptions solve_opts, verify_opts, jac_opts;
  int dim_cap = kDefaultDimCap;
  int points = 20;
  double tol = 1e-5;
  std::uint64_t seed = 7;

  CLI::App* solve_cmd = app.add_subcommand("solve", "Run the Newton solver");
  add_common(solve_cmd, solve_opts);
  CLI::App* verify_cmd = app.add_subcommand("verify", "Cross-check a solve against the vertex oracles");
  add_common(verify_cmd, verify_opts);
  verify_cmd->add_option("--dim-cap", dim_cap, "Largest oracle dimension 2n + l");
  CLI::App* jac_cmd = app.add_subcommand("check-jacobian", "Compare Jacobians with finite differences");
  add_common(jac_cmd, jac_opts);
  jac_cmd->add_option("--points", points, "Number of random iterates")->check(CLI::PositiveNumber);
  jac_cmd->add_option("--tol", tol, "Relative error tolerance");
  jac_cmd->add_option("--seed", seed, "Seed for the random iterates");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitParse;
  }

  try {
    if (*solve_cmd) return cmd_solve(solve_opts, out);
    if (*verify_cmd) return cmd_verify(verify_opts, dim_cap, out);
    return cmd_check_jacobian(jac_opts, points, tol, seed, out);
  } catch (const Error& e) {
    return report_error(e, err);
  }
}

}  // namespace bilevel
