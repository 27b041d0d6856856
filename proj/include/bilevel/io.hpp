#pragma once

// JSON problem files and solve reports.
//
// Generic file:
//   {"kind": "generic", "D": [[...]], "d": [...], "A": [[...]], "b": [...],
//    "objective": {"Qxx": [[...]], "Qxy": [[...]], "Qyy": [[...]],
//                  "kx": [...], "ky": [...], "const": c},
//    "params": {...}, "start": {...}}
// Toll file:
//   {"kind": "toll", "nodes": [...],
//    "arcs": [{"tail", "head", "cost", "tolled", "toll_lb"}],
//    "od": [{"origin", "destination", "demand", "useful_arcs"}],
//    "linked_tolls": [[a, b]], "params": {...}, "start": {...}}
// params keys: alpha, t (5 numbers), epsilon, delta, rho, p, beta, sigma,
// max_iter, tie_rule, gradient_mode. start keys: any iterate block name; x
// and y seed the default recipe and the other blocks override it.

#include <optional>
#include <string>

#include <json.hpp>

#include "bilevel/newton.hpp"
#include "bilevel/problem.hpp"
#include "bilevel/toll.hpp"

namespace bilevel {

struct ProblemFile {
  std::string kind;  // "generic" or "toll"
  BilevelProblem problem;
  std::optional<TollInstance> toll;
  PenaltyParams params;
  IterateU start;
};

/// Throws Error(parse_error); JSON syntax errors name the byte offset and
/// unknown keys are rejected with their path.
ProblemFile parse_problem_file(const std::string& text);
ProblemFile load_problem_file(const std::string& path);

/// Problem file for a generic instance with a quadratic objective.
nlohmann::json problem_to_json(const BilevelProblem& problem, const PenaltyParams& params,
                               const IterateU& start);

nlohmann::json report_to_json(const SolveReport& report, const BilevelProblem& problem,
                              const TollInstance* toll = nullptr);
SolveReport report_from_json(const nlohmann::json& j);

}  // namespace bilevel
