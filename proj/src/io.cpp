#include "bilevel/io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "bilevel/error.hpp"
#include "bilevel/residual.hpp"

namespace bilevel {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::parse_error, path + ": " + what);
}

void reject_unknown(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
  if (!obj.is_object()) fail(path, "expected an object");
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!allowed.count(key)) fail(path, "unknown key '" + key + "'");
  }
}

const json& require(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.contains(key)) fail(path, "missing key '" + key + "'");
  return obj.at(key);
}

double read_number(const json& j, const std::string& path) {
  if (!j.is_number()) fail(path, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(path, "number is not finite");
  return v;
}

Vector read_vector(const json& j, const std::string& path) {
  if (!j.is_array()) fail(path, "expected an array of numbers");
  Vector v(static_cast<Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v(static_cast<Index>(i)) = read_number(j[i], path + "[" + std::to_string(i) + "]");
  }
  return v;
}

// Row-major array of arrays; an empty array gives a 0 x cols_if_empty matrix.
Matrix read_matrix(const json& j, const std::string& path, Index cols_if_empty = 0) {
  if (!j.is_array()) fail(path, "expected an array of rows");
  if (j.empty()) return Matrix(0, cols_if_empty);
  const Index rows = static_cast<Index>(j.size());
  if (!j[0].is_array()) fail(path + "[0]", "expected an array of numbers");
  const Index cols = static_cast<Index>(j[0].size());
  Matrix M(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    const std::string row_path = path + "[" + std::to_string(i) + "]";
    const Vector r = read_vector(j[static_cast<std::size_t>(i)], row_path);
    if (r.size() != cols) fail(row_path, "rows have unequal lengths");
    M.row(i) = r.transpose();
  }
  return M;
}

json write_vector(const Vector& v) {
  json j = json::array();
  for (Index i = 0; i < v.size(); ++i) j.push_back(v(i));
  return j;
}

json write_matrix(const Matrix& M) {
  json j = json::array();
  for (Index i = 0; i < M.rows(); ++i) j.push_back(write_vector(M.row(i).transpose()));
  return j;
}

// Non-finite values are stored as strings so the document stays valid JSON.
json write_double(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double read_double(const json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
  }
  throw Error(ErrorCode::parse_error, "expected a number in report");
}

void read_params(const json& j, PenaltyParams& p) {
  const std::string path = "params";
  reject_unknown(j, path, {"alpha", "t", "epsilon", "delta", "rho", "p", "beta", "sigma", "max_iter",
                           "tie_rule", "gradient_mode"});
  if (j.contains("alpha")) p.alpha = read_number(j["alpha"], path + ".alpha");
  if (j.contains("t")) {
    const Vector t = read_vector(j["t"], path + ".t");
    if (t.size() != 5) fail(path + ".t", "expected 5 entries");
    for (int i = 0; i < 5; ++i) p.t[i] = t(i);
  }
  if (j.contains("epsilon")) p.epsilon = read_number(j["epsilon"], path + ".epsilon");
  if (j.contains("delta")) p.delta = read_number(j["delta"], path + ".delta");
  if (j.contains("rho")) p.rho = read_number(j["rho"], path + ".rho");
  if (j.contains("p")) p.p_exp = read_number(j["p"], path + ".p");
  if (j.contains("beta")) p.beta = read_number(j["beta"], path + ".beta");
  if (j.contains("sigma")) p.sigma = read_number(j["sigma"], path + ".sigma");
  if (j.contains("max_iter")) {
    if (!j["max_iter"].is_number_integer()) fail(path + ".max_iter", "expected an integer");
    p.max_iter = j["max_iter"].get<int>();
  }
  try {
    if (j.contains("tie_rule")) p.tie_rule = tie_rule_from_string(j["tie_rule"].get<std::string>());
    if (j.contains("gradient_mode")) {
      p.gradient_mode = gradient_mode_from_string(j["gradient_mode"].get<std::string>());
    }
  } catch (const json::exception&) {
    fail(path, "tie_rule and gradient_mode must be strings");
  } catch (const Error& e) {
    fail(path, e.what());
  }
  const auto issues = p.violations();
  if (!issues.empty()) fail(path, issues.front());
}

IterateU read_start(const json* j, const BilevelProblem& problem, Vector x0, Vector y0) {
  const Dimensions dims = problem.dims();
  std::set<std::string> allowed;
  for (Block b : kAllBlocks) allowed.insert(block_name(b));
  if (j) {
    reject_unknown(*j, "start", allowed);
    if (j->contains("x")) x0 = read_vector((*j)["x"], "start.x");
    if (j->contains("y")) y0 = read_vector((*j)["y"], "start.y");
  }
  if (x0.size() != dims.n) fail("start.x", "expected length " + std::to_string(dims.n));
  if (y0.size() != dims.n) fail("start.y", "expected length " + std::to_string(dims.n));
  IterateU u = default_start(problem, x0, y0);
  if (j) {
    for (Block b : kAllBlocks) {
      const std::string name = block_name(b);
      if (name == "x" || name == "y" || !j->contains(name)) continue;
      const Vector v = read_vector((*j)[name], "start." + name);
      if (v.size() != block_size(dims, b)) {
        fail("start." + name, "expected length " + std::to_string(block_size(dims, b)));
      }
      u.block(b) = v;
    }
  }
  return u;
}

ProblemFile read_generic(const json& doc) {
  reject_unknown(doc, "$", {"kind", "D", "d", "A", "b", "objective", "params", "start"});
  ProblemFile file;
  file.kind = "generic";
  BilevelProblem& p = file.problem;
  p.A = read_matrix(require(doc, "A", "$"), "A");
  p.b = read_vector(require(doc, "b", "$"), "b");
  const Index n = p.A.cols();
  p.D = read_matrix(require(doc, "D", "$"), "D", n);
  p.d = read_vector(require(doc, "d", "$"), "d");

  const json& obj = require(doc, "objective", "$");
  reject_unknown(obj, "objective", {"Qxx", "Qxy", "Qyy", "kx", "ky", "const"});
  QuadraticForm q;
  auto square = [&](const char* key) {
    if (!obj.contains(key)) return Matrix(Matrix::Zero(n, n));
    return read_matrix(obj[key], std::string("objective.") + key, n);
  };
  auto linear = [&](const char* key) {
    if (!obj.contains(key)) return Vector(Vector::Zero(n));
    return read_vector(obj[key], std::string("objective.") + key);
  };
  q.Qxx = square("Qxx");
  q.Qxy = square("Qxy");
  q.Qyy = square("Qyy");
  q.kx = linear("kx");
  q.ky = linear("ky");
  q.c = obj.contains("const") ? read_number(obj["const"], "objective.const") : 0.0;
  for (const auto& [name, M] : {std::pair<const char*, const Matrix*>{"Qxx", &q.Qxx}, {"Qxy", &q.Qxy}, {"Qyy", &q.Qyy}}) {
    if (M->rows() != n || M->cols() != n) fail(std::string("objective.") + name, "expected an n x n matrix");
  }
  if (q.kx.size() != n) fail("objective.kx", "expected length n");
  if (q.ky.size() != n) fail("objective.ky", "expected length n");
  p.objective = UpperObjective::from_quadratic(std::move(q));

  const Diagnostics diag = validate(p);
  if (!diag.ok()) fail("$", diag.issues.front());
  if (doc.contains("params")) read_params(doc["params"], file.params);
  file.start = read_start(doc.contains("start") ? &doc["start"] : nullptr, p, Vector::Zero(n),
                          Vector::Zero(n));
  return file;
}

ProblemFile read_toll(const json& doc) {
  reject_unknown(doc, "$", {"kind", "nodes", "arcs", "od", "linked_tolls", "params", "start"});
  TollNetwork net;
  const json& nodes = require(doc, "nodes", "$");
  if (!nodes.is_array()) fail("nodes", "expected an array of integers");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (!nodes[i].is_number_integer()) fail("nodes[" + std::to_string(i) + "]", "expected an integer");
    net.nodes.push_back(nodes[i].get<int>());
  }
  const json& arcs = require(doc, "arcs", "$");
  if (!arcs.is_array()) fail("arcs", "expected an array");
  for (std::size_t a = 0; a < arcs.size(); ++a) {
    const std::string path = "arcs[" + std::to_string(a) + "]";
    reject_unknown(arcs[a], path, {"tail", "head", "cost", "tolled", "toll_lb"});
    const json& tail = require(arcs[a], "tail", path);
    const json& head = require(arcs[a], "head", path);
    if (!tail.is_number_integer() || !head.is_number_integer()) fail(path, "tail and head must be integers");
    net.arcs.push_back({tail.get<int>(), head.get<int>(), read_number(require(arcs[a], "cost", path), path + ".cost")});
    const bool tolled = arcs[a].value("tolled", false);
    if (tolled) {
      net.tolled.push_back(static_cast<Index>(a));
      net.toll_lb.push_back(arcs[a].contains("toll_lb") ? read_number(arcs[a]["toll_lb"], path + ".toll_lb") : 0.0);
    }
  }
  const json& od = require(doc, "od", "$");
  if (!od.is_array()) fail("od", "expected an array");
  for (std::size_t k = 0; k < od.size(); ++k) {
    const std::string path = "od[" + std::to_string(k) + "]";
    reject_unknown(od[k], path, {"origin", "destination", "demand", "useful_arcs"});
    OdPair pair;
    pair.origin = require(od[k], "origin", path).get<int>();
    pair.destination = require(od[k], "destination", path).get<int>();
    pair.demand = od[k].contains("demand") ? read_number(od[k]["demand"], path + ".demand") : 1.0;
    if (od[k].contains("useful_arcs")) {
      for (const auto& a : od[k]["useful_arcs"]) pair.useful_arcs.push_back(a.get<Index>());
    }
    net.od_pairs.push_back(pair);
  }
  if (doc.contains("linked_tolls")) {
    for (const auto& pair : doc["linked_tolls"]) {
      if (!pair.is_array() || pair.size() != 2) fail("linked_tolls", "expected pairs of arc indices");
      net.linked_tolls.emplace_back(pair[0].get<Index>(), pair[1].get<Index>());
    }
  }

  ProblemFile file;
  file.kind = "toll";
  try {
    file.toll = build_toll_instance(net);
  } catch (const Error& e) {
    fail("$", e.what());
  }
  file.problem = file.toll->problem;
  if (doc.contains("params")) read_params(doc["params"], file.params);

  // Default prices: costs on arcs, toll floors on tolled arcs, zero elsewhere.
  const Index n = file.problem.dims().n;
  Vector x0 = Vector::Zero(n);
  for (std::size_t a = 0; a < net.arcs.size(); ++a) {
    x0(file.toll->layout.arc_var[a]) = net.arcs[a].cost + net.lower_bound(static_cast<Index>(a));
  }
  file.start = read_start(doc.contains("start") ? &doc["start"] : nullptr, file.problem, x0, Vector::Zero(n));
  return file;
}

}  // namespace

ProblemFile parse_problem_file(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::parse_error, "malformed JSON at byte " + std::to_string(e.byte) + ": " + e.what());
  }
  try {
    const json& kind = require(doc, "kind", "$");
    if (!kind.is_string()) fail("kind", "expected a string");
    if (kind == "generic") return read_generic(doc);
    if (kind == "toll") return read_toll(doc);
    fail("kind", "expected 'generic' or 'toll'");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("invalid problem file: ") + e.what());
  }
}

ProblemFile load_problem_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::parse_error, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_problem_file(buf.str());
}

json problem_to_json(const BilevelProblem& problem, const PenaltyParams& params, const IterateU& start) {
  if (!problem.objective.quadratic) {
    throw Error(ErrorCode::invalid_parameters, "only quadratic objectives can be written to a file");
  }
  const QuadraticForm& q = *problem.objective.quadratic;
  json j;
  j["kind"] = "generic";
  j["D"] = write_matrix(problem.D);
  j["d"] = write_vector(problem.d);
  j["A"] = write_matrix(problem.A);
  j["b"] = write_vector(problem.b);
  j["objective"] = {{"Qxx", write_matrix(q.Qxx)}, {"Qxy", write_matrix(q.Qxy)}, {"Qyy", write_matrix(q.Qyy)},
                    {"kx", write_vector(q.kx)},   {"ky", write_vector(q.ky)},   {"const", q.c}};
  j["params"] = {{"alpha", params.alpha},
                 {"t", std::vector<double>(params.t.begin(), params.t.end())},
                 {"epsilon", params.epsilon},
                 {"delta", params.delta},
                 {"rho", params.rho},
                 {"p", params.p_exp},
                 {"beta", params.beta},
                 {"sigma", params.sigma},
                 {"max_iter", params.max_iter},
                 {"tie_rule", to_string(params.tie_rule)},
                 {"gradient_mode", to_string(params.gradient_mode)}};
  json s;
  for (Block b : kAllBlocks) s[block_name(b)] = write_vector(start.block(b));
  j["start"] = s;
  return j;
}

json report_to_json(const SolveReport& report, const BilevelProblem& problem, const TollInstance* toll) {
  const Dimensions dims = problem.dims();
  json j;
  j["status"] = to_string(report.status);
  j["alpha"] = write_double(report.alpha);
  j["pi"] = write_double(report.pi);
  json its = json::array();
  for (const auto& it : report.iterates) {
    its.push_back({{"k", it.k},
                   {"residual_norm", write_double(it.residual_norm)},
                   {"merit", write_double(it.merit)},
                   {"step_type", to_string(it.step_type)},
                   {"tau", write_double(it.tau)}});
  }
  j["iterates"] = its;
  json u = json::array();
  for (Index i = 0; i < report.final_u.size(); ++i) u.push_back(write_double(report.final_u(i)));
  j["final_u"] = u;
  json certs = json::array();
  for (const auto& c : report.certificates) {
    json hyps = json::array();
    for (const auto& h : c.hypotheses) hyps.push_back({{"name", h.name}, {"holds", h.holds}, {"detail", h.detail}});
    certs.push_back({{"theorem", c.theorem},
                     {"positive", c.positive()},
                     {"hypotheses", hyps},
                     {"probe", {{"elements", c.probe.elements},
                                {"nonsingular", c.probe.nonsingular},
                                {"worst_rcond", write_double(c.probe.worst_rcond)}}}});
  }
  j["certificates"] = certs;
  json tried = json::array();
  for (double a : report.alpha_tried) tried.push_back(write_double(a));
  j["alpha_tried"] = tried;

  // Derived quantities for readers; ignored when a report is read back.
  if (report.final_u.size() == dims.total()) {
    const IterateU fin = unpack(report.final_u, dims);
    j["upper_objective"] = write_double(problem.upper_value(fin.x, fin.y));
    j["lower_objective"] = write_double(problem.lower_value(fin.x, fin.y));
    if (toll) {
      j["revenue"] = write_double(revenue(*toll, fin.x, fin.y));
      try {
        const auto tolls = recover_tolls(fin.x, *toll);
        json t = json::array();
        for (double v : tolls) t.push_back(write_double(v));
        j["tolls"] = t;
      } catch (const Error& e) {
        j["tolls_error"] = e.what();
      }
    }
  }
  return j;
}

SolveReport report_from_json(const json& j) {
  try {
    SolveReport r;
    r.status = solve_status_from_string(j.at("status").get<std::string>());
    r.alpha = read_double(j.at("alpha"));
    r.pi = read_double(j.at("pi"));
    for (const auto& it : j.at("iterates")) {
      r.iterates.push_back({it.at("k").get<int>(), read_double(it.at("residual_norm")), read_double(it.at("merit")),
                            step_type_from_string(it.at("step_type").get<std::string>()), read_double(it.at("tau"))});
    }
    const auto& u = j.at("final_u");
    r.final_u = Vector(static_cast<Index>(u.size()));
    for (std::size_t i = 0; i < u.size(); ++i) r.final_u(static_cast<Index>(i)) = read_double(u[i]);
    for (const auto& c : j.at("certificates")) {
      Certificate cert;
      cert.theorem = c.at("theorem").get<std::string>();
      for (const auto& h : c.at("hypotheses")) {
        cert.hypotheses.push_back({h.at("name").get<std::string>(), h.at("holds").get<bool>(),
                                   h.at("detail").get<std::string>()});
      }
      const auto& probe = c.at("probe");
      cert.probe.elements = probe.at("elements").get<int>();
      cert.probe.nonsingular = probe.at("nonsingular").get<int>();
      cert.probe.worst_rcond = read_double(probe.at("worst_rcond"));
      r.certificates.push_back(cert);
    }
    for (const auto& a : j.at("alpha_tried")) r.alpha_tried.push_back(read_double(a));
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("invalid report: ") + e.what());
  }
}

}  // namespace bilevel
