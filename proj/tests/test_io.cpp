#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "bilevel/error.hpp"
#include "bilevel/io.hpp"
#include "bilevel/newton.hpp"
#include "support.hpp"

using namespace bilevel;
using namespace bilevel::testing;
using nlohmann::json;

namespace {

std::string data_path(const std::string& name) { return std::string(BILEVEL_TEST_DATA) + "/" + name; }

std::string parse_message(const std::string& text) {
  try {
    parse_problem_file(text);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::parse_error);
    return e.what();
  }
  FAIL("expected a parse error");
  return {};
}

const char* kSmall = R"({"kind": "generic", "D": [[1]], "d": [2], "A": [[-1], [1]], "b": [0, 1],
  "objective": {"ky": [-1]}})";

json small_doc() { return json::parse(kSmall); }

}  // namespace

TEST_CASE("malformed JSON names the byte offset") {
  const std::string msg = parse_message(R"({"kind": "generic", "D": [[1]],, })");
  CHECK(msg.find("malformed JSON at byte 32") != std::string::npos);
}

TEST_CASE("unknown keys are rejected with their path") {
  json doc = small_doc();
  doc["objectve"] = json::object();
  CHECK(parse_message(doc.dump()).find("$: unknown key 'objectve'") != std::string::npos);
  doc = small_doc();
  doc["objective"]["kz"] = json::array({1});
  CHECK(parse_message(doc.dump()).find("objective: unknown key 'kz'") != std::string::npos);
  doc = small_doc();
  doc["params"] = {{"alpah", 2}};
  CHECK(parse_message(doc.dump()).find("params: unknown key 'alpah'") != std::string::npos);
}

TEST_CASE("structural errors") {
  json doc = small_doc();
  doc["kind"] = "other";
  CHECK(parse_message(doc.dump()).find("kind") != std::string::npos);
  doc = small_doc();
  doc["A"] = json::array({json::array({1}), json::array({1, 2})});
  CHECK(parse_message(doc.dump()).find("rows have unequal lengths") != std::string::npos);
  doc = small_doc();
  doc["b"] = json::array({0});
  CHECK(!parse_message(doc.dump()).empty());
  doc = small_doc();
  doc.erase("A");
  CHECK(parse_message(doc.dump()).find("missing key 'A'") != std::string::npos);
  doc = small_doc();
  doc["params"] = {{"t", {1, 1, 1}}};
  CHECK(parse_message(doc.dump()).find("params.t: expected 5 entries") != std::string::npos);
  doc = small_doc();
  doc["params"] = {{"max_iter", 2.5}};
  CHECK(parse_message(doc.dump()).find("params.max_iter: expected an integer") != std::string::npos);
  doc = small_doc();
  doc["params"] = {{"epsilon", -1}};
  CHECK(parse_message(doc.dump()).find("epsilon") != std::string::npos);
  doc = small_doc();
  doc["start"] = {{"x", {1, 2}}};
  CHECK(parse_message(doc.dump()).find("start.x: expected length 1") != std::string::npos);
  CHECK_THROWS_AS(load_problem_file(data_path("missing.json")), Error);
}

TEST_CASE("generic file fields") {
  json doc = small_doc();
  doc["params"] = {{"alpha", 3},        {"t", {1, 2, 3, 4, 5}}, {"epsilon", 0.5}, {"max_iter", 7},
                   {"tie_rule", "one"}, {"gradient_mode", "smoothed"}};
  doc["start"] = {{"x", {0.5}}, {"y", {0.25}}, {"lam6", {4}}};
  const ProblemFile f = parse_problem_file(doc.dump());
  CHECK(f.kind == "generic");
  CHECK(!f.toll);
  CHECK(f.problem.dims() == Dimensions{1, 2, 1});
  CHECK(f.problem.upper_value(vec({3}), vec({2})) == -2.0);
  CHECK(f.params.alpha == 3.0);
  CHECK(f.params.t == std::array<double, 5>{1, 2, 3, 4, 5});
  CHECK(f.params.epsilon == 0.5);
  CHECK(f.params.max_iter == 7);
  CHECK(f.params.tie_rule == TieRule::one);
  CHECK(f.params.gradient_mode == GradientMode::smoothed);
  const IterateU expected_seed = default_start(f.problem, vec({0.5}), vec({0.25}));
  CHECK(f.start.z == expected_seed.z);
  CHECK(f.start.lam1 == expected_seed.lam1);
  CHECK(f.start.lam6 == vec({4}));
}

TEST_CASE("generic problem round trip") {
  const ProblemFile f = load_problem_file(data_path("box.json"));
  const json out = problem_to_json(f.problem, f.params, f.start);
  const ProblemFile g = parse_problem_file(out.dump());
  CHECK(g.problem.D == f.problem.D);
  CHECK(g.problem.d == f.problem.d);
  CHECK(g.problem.A == f.problem.A);
  CHECK(g.problem.b == f.problem.b);
  const Dimensions dims = f.problem.dims();
  CHECK(pack(g.start, dims) == pack(f.start, dims));
  CHECK(g.params.alpha == f.params.alpha);
  CHECK(problem_to_json(g.problem, g.params, g.start) == out);
  BilevelProblem general = f.problem;
  general.objective.quadratic.reset();
  CHECK_THROWS_AS(problem_to_json(general, {}, IterateU::zeros(general.dims())), Error);
}

TEST_CASE("toll file matches the equivalent preset") {
  const json doc = json::parse(R"({
    "kind": "toll", "nodes": [1, 2, 3, 4, 5],
    "arcs": [{"tail": 1, "head": 2, "cost": 2}, {"tail": 1, "head": 3, "cost": 6},
             {"tail": 1, "head": 5, "cost": 5, "tolled": true, "toll_lb": 0},
             {"tail": 2, "head": 3, "cost": 0, "tolled": true},
             {"tail": 2, "head": 4, "cost": 4}, {"tail": 3, "head": 4, "cost": 2},
             {"tail": 3, "head": 5, "cost": 6}, {"tail": 4, "head": 5, "cost": 0, "tolled": true}],
    "od": [{"origin": 1, "destination": 5}],
    "params": {"alpha": 0.45}})");
  const ProblemFile f = parse_problem_file(doc.dump());
  CHECK(f.kind == "toll");
  REQUIRE(f.toll);
  const Preset pr = preset("network1");
  CHECK(f.toll->network.tolled == pr.instance.network.tolled);
  // The generic builder keeps a per-pair copy of every arc ahead of the aggregates.
  CHECK(f.problem.dims().n == 16);
  // Default prices sit at the arc costs with zero tolls.
  for (std::size_t a = 0; a < 8; ++a) {
    CHECK(f.start.x(f.toll->layout.arc_var[a]) == pr.instance.network.arcs[a].cost);
  }
  CHECK(f.start.y.isZero(0.0));
  CHECK(f.params.alpha == 0.45);

  json bad = doc;
  bad["arcs"][0]["colour"] = "red";
  CHECK(parse_message(bad.dump()).find("arcs[0]: unknown key 'colour'") != std::string::npos);
  bad = doc;
  bad["od"][0]["destination"] = 9;
  CHECK(!parse_message(bad.dump()).empty());
}

TEST_CASE("report round trip is exact") {
  const ProblemFile f = load_problem_file(data_path("interval_concave.json"));
  const SolveReport report = solve(f.problem, f.params, f.start);
  REQUIRE(report.status == SolveStatus::converged);
  const json j = report_to_json(report, f.problem);
  CHECK(j["status"] == "converged");
  CHECK(j.contains("upper_objective"));
  const SolveReport back = report_from_json(j);
  CHECK(back.iterates == report.iterates);
  CHECK(back.final_u == report.final_u);
  CHECK(back.status == report.status);
  CHECK(back.alpha == report.alpha);
  CHECK(back.pi == report.pi);
  REQUIRE(back.certificates.size() == report.certificates.size());
  for (std::size_t i = 0; i < back.certificates.size(); ++i) {
    CHECK(back.certificates[i].theorem == report.certificates[i].theorem);
    CHECK(back.certificates[i].positive() == report.certificates[i].positive());
    CHECK(back.certificates[i].probe.worst_rcond == report.certificates[i].probe.worst_rcond);
  }
  CHECK(report_to_json(back, f.problem).dump() == j.dump());
}

TEST_CASE("non-finite report values survive") {
  SolveReport r;
  r.final_u = vec({1.0, std::numeric_limits<double>::quiet_NaN(), -std::numeric_limits<double>::infinity()});
  r.iterates = {{0, std::numeric_limits<double>::infinity(), 1.0, StepType::none, 0.0}};
  r.alpha = 2.0;
  r.status = SolveStatus::linesearch_stall;
  const BilevelProblem p{Matrix(0, 0), Vector(0), Matrix(0, 0), Vector(0),
                         UpperObjective::from_affine(Vector(0), Vector(0), 0)};
  const json j = report_to_json(r, p);
  const SolveReport back = report_from_json(json::parse(j.dump()));
  CHECK(std::isnan(back.final_u(1)));
  CHECK(back.final_u(2) == -std::numeric_limits<double>::infinity());
  CHECK(back.iterates[0].residual_norm == std::numeric_limits<double>::infinity());
  CHECK(back.status == SolveStatus::linesearch_stall);
  CHECK_THROWS_AS(report_from_json(json::parse(R"({"status": 3})")), Error);
}

TEST_CASE("toll reports carry revenue and tolls") {
  const Preset pr = preset("network1");
  PenaltyParams params = pr.params;
  params.max_iter = 2;
  const SolveReport r = solve(pr.instance.problem, params, pr.start);
  const json j = report_to_json(r, pr.instance.problem, &pr.instance);
  CHECK(j.contains("revenue"));
  CHECK((j.contains("tolls") || j.contains("tolls_error")));
  CHECK(report_to_json(r, pr.instance.problem, &pr.instance).dump() == j.dump());
}
