#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bilevel/cli.hpp"

using namespace bilevel;

namespace {

std::string data_path(const std::string& name) { return std::string(BILEVEL_TEST_DATA) + "/" + name; }

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

bool contains(const std::string& s, const std::string& what) { return s.find(what) != std::string::npos; }

}  // namespace

TEST_CASE("solve converges on the interval example") {
  const Run r = run({"solve", data_path("interval_concave.json")});
  CHECK(r.code == 0);
  CHECK(contains(r.out, "status: converged"));
  CHECK(contains(r.out, "invertible_A"));
}

TEST_CASE("solve writes a report") {
  const std::string path = "cli_report.json";
  const Run r = run({"solve", data_path("box.json"), "--out", path});
  CHECK(r.code == 0);
  std::ifstream in(path);
  const nlohmann::json j = nlohmann::json::parse(in);
  CHECK(j["status"] == "converged");
  CHECK(j["final_u"].size() == 21);
  std::remove(path.c_str());
}

TEST_CASE("solve on a preset reports tolls and fails without convergence") {
  const Run r = run({"solve", "--preset", "network1", "--max-iter", "3"});
  CHECK(r.code == 1);
  CHECK(contains(r.out, "status: max_iter"));
  CHECK(contains(r.out, "revenue"));
}

TEST_CASE("parameter flags reach the solver") {
  const Run r = run({"solve", data_path("interval_concave.json"), "--alpha", "10", "--max-iter", "1"});
  CHECK(contains(r.out, "alpha: 10"));
  CHECK(r.code == 1);
  CHECK(run({"solve", data_path("interval_concave.json"), "--eps", "-1"}).code == 2);
  CHECK(run({"solve", data_path("interval_concave.json"), "--tie-rule", "third"}).code == 2);
  CHECK(run({"solve", data_path("interval_concave.json"), "--alpha-schedule", "1,0.5"}).code == 2);
}

TEST_CASE("verify agrees on the small examples") {
  for (const char* name : {"interval_concave.json", "box.json"}) {
    const Run r = run({"verify", data_path(name)});
    CHECK(r.code == 0);
    CHECK(contains(r.out, "verdict: agree"));
  }
}

TEST_CASE("verify refuses instances past the dimension cap") {
  const Run r = run({"verify", data_path("wide20.json")});
  CHECK(r.code == 3);
  CHECK(contains(r.err, "dimension_cap_exceeded"));
}

TEST_CASE("check-jacobian") {
  CHECK(run({"check-jacobian", data_path("interval.json")}).code == 0);
  CHECK(run({"check-jacobian", "--preset", "network1", "--points", "5"}).code == 0);
  const Run tight = run({"check-jacobian", data_path("interval.json"), "--tol", "1e-16"});
  CHECK(tight.code == 1);
  CHECK(contains(tight.out, "tolerance exceeded"));
}

TEST_CASE("input errors") {
  const std::string path = "cli_bad.json";
  {
    std::ofstream out(path);
    out << "{\"kind\": \"generic\",";
  }
  const Run bad = run({"solve", path});
  CHECK(bad.code == 2);
  CHECK(contains(bad.err, "malformed JSON at byte"));
  std::remove(path.c_str());
  CHECK(run({"solve", data_path("missing.json")}).code == 2);
  CHECK(run({"solve", "--preset", "network9"}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({}).code == 2);
}
