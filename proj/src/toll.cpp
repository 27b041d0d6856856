#include "bilevel/toll.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <set>

#include "bilevel/error.hpp"
#include "bilevel/newton.hpp"

namespace bilevel {

namespace {

std::vector<Index> usable_arcs(const TollNetwork& network, const OdPair& od) {
  if (!od.useful_arcs.empty()) return od.useful_arcs;
  std::vector<Index> all(network.arcs.size());
  for (std::size_t a = 0; a < all.size(); ++a) all[a] = static_cast<Index>(a);
  return all;
}

bool reachable(const TollNetwork& network, const std::vector<Index>& arcs, int from, int to) {
  std::set<int> seen{from};
  std::queue<int> frontier;
  frontier.push(from);
  while (!frontier.empty()) {
    const int node = frontier.front();
    frontier.pop();
    if (node == to) return true;
    for (Index a : arcs) {
      const Arc& arc = network.arcs[a];
      if (arc.tail == node && seen.insert(arc.head).second) frontier.push(arc.head);
    }
  }
  return false;
}

std::string arc_label(Index a) { return "arc " + std::to_string(a + 1); }

// Rows x_a = c_a for untolled arcs and, optionally, x_a >= l_a + c_a for tolled
// ones, in arc order.
void append_arc_rows(const TollNetwork& network, const std::vector<Index>& arc_var, Index n,
                     std::vector<Eigen::RowVectorXd>& rows, std::vector<double>& rhs,
                     std::vector<Pin>& pins, bool toll_floor_rows = true) {
  for (std::size_t a = 0; a < network.arcs.size(); ++a) {
    const Index var = arc_var[a];
    const double c = network.arcs[a].cost;
    Eigen::RowVectorXd e = Eigen::RowVectorXd::Zero(n);
    e(var) = 1.0;
    if (network.is_tolled(static_cast<Index>(a))) {
      if (!toll_floor_rows) continue;
      rows.push_back(-e);
      rhs.push_back(-(network.lower_bound(static_cast<Index>(a)) + c));
    } else {
      rows.push_back(e);
      rhs.push_back(c);
      rows.push_back(-e);
      rhs.push_back(-c);
      pins.push_back({var, c, static_cast<Index>(a)});
    }
  }
}

void append_link_rows(Index a, Index b, Index n, std::vector<Eigen::RowVectorXd>& rows,
                      std::vector<double>& rhs) {
  Eigen::RowVectorXd e = Eigen::RowVectorXd::Zero(n);
  e(a) = 1.0;
  e(b) = -1.0;
  rows.push_back(e);
  rhs.push_back(0.0);
  rows.push_back(-e);
  rhs.push_back(0.0);
}

UpperConstraints stack_rows(const std::vector<Eigen::RowVectorXd>& rows,
                            const std::vector<double>& rhs, std::vector<Pin> pins, Index n) {
  UpperConstraints out;
  out.D = Matrix::Zero(static_cast<Index>(rows.size()), n);
  out.d = Vector::Zero(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.D.row(static_cast<Index>(i)) = rows[i];
    out.d(static_cast<Index>(i)) = rhs[i];
  }
  out.pins = std::move(pins);
  return out;
}

}  // namespace

bool TollNetwork::is_tolled(Index arc) const {
  return std::find(tolled.begin(), tolled.end(), arc) != tolled.end();
}

double TollNetwork::lower_bound(Index arc) const {
  for (std::size_t i = 0; i < tolled.size(); ++i) {
    if (tolled[i] == arc) return i < toll_lb.size() ? toll_lb[i] : 0.0;
  }
  return 0.0;
}

void TollNetwork::check() const {
  const std::set<int> known(nodes.begin(), nodes.end());
  for (std::size_t a = 0; a < arcs.size(); ++a) {
    const Arc& arc = arcs[a];
    if (arc.tail == arc.head) {
      throw Error(ErrorCode::invalid_parameters, arc_label(static_cast<Index>(a)) + " is a self-loop");
    }
    if (!known.count(arc.tail) || !known.count(arc.head)) {
      throw Error(ErrorCode::invalid_parameters,
                  arc_label(static_cast<Index>(a)) + " references an unknown node");
    }
    if (!(arc.cost >= 0.0) || !std::isfinite(arc.cost)) {
      throw Error(ErrorCode::invalid_parameters,
                  arc_label(static_cast<Index>(a)) + " needs a finite nonnegative cost");
    }
  }
  for (Index a : tolled) {
    if (a < 0 || a >= static_cast<Index>(arcs.size())) {
      throw Error(ErrorCode::invalid_parameters, "tolled set references a missing arc");
    }
  }
  if (toll_lb.size() != tolled.size()) {
    throw Error(ErrorCode::invalid_parameters, "toll_lb must have one entry per tolled arc");
  }
  for (const auto& [a, b] : linked_tolls) {
    if (!is_tolled(a) || !is_tolled(b)) {
      throw Error(ErrorCode::invalid_parameters, "linked tolls must both be tolled arcs");
    }
  }
  if (od_pairs.empty()) throw Error(ErrorCode::invalid_parameters, "network has no OD pairs");
  for (const OdPair& od : od_pairs) {
    if (!known.count(od.origin) || !known.count(od.destination) || od.origin == od.destination) {
      throw Error(ErrorCode::invalid_parameters, "OD pair references invalid nodes");
    }
    if (!(od.demand > 0.0)) throw Error(ErrorCode::invalid_parameters, "OD demand must be positive");
    for (Index a : od.useful_arcs) {
      if (a < 0 || a >= static_cast<Index>(arcs.size())) {
        throw Error(ErrorCode::invalid_parameters, "useful arc list references a missing arc");
      }
    }
    if (!reachable(*this, usable_arcs(*this, od), od.origin, od.destination)) {
      throw Error(ErrorCode::no_path, "no directed path from node " + std::to_string(od.origin) +
                                          " to node " + std::to_string(od.destination));
    }
  }
}

IncidenceBlock build_incidence(const TollNetwork& network, std::size_t od_index) {
  if (od_index >= network.od_pairs.size()) {
    throw Error(ErrorCode::invalid_parameters, "OD index out of range");
  }
  const OdPair& od = network.od_pairs[od_index];
  IncidenceBlock block;
  block.column_arcs = usable_arcs(network, od);
  if (!reachable(network, block.column_arcs, od.origin, od.destination)) {
    throw Error(ErrorCode::no_path, "no directed path from node " + std::to_string(od.origin) +
                                        " to node " + std::to_string(od.destination));
  }
  for (int node : network.nodes) {
    if (node != od.destination) block.row_nodes.push_back(node);
  }
  const Index rows = static_cast<Index>(block.row_nodes.size());
  const Index cols = static_cast<Index>(block.column_arcs.size());
  block.A = Matrix::Zero(rows, cols);
  block.b = Vector::Zero(rows);
  for (Index i = 0; i < rows; ++i) {
    const int node = block.row_nodes[i];
    if (node == od.origin) block.b(i) = 1.0;
    for (Index j = 0; j < cols; ++j) {
      const Arc& arc = network.arcs[block.column_arcs[j]];
      if (arc.tail == node) block.A(i, j) += 1.0;
      if (arc.head == node) block.A(i, j) -= 1.0;
    }
  }
  return block;
}

LowerSystem assemble_lower_level(const TollNetwork& network) {
  if (network.od_pairs.empty()) throw Error(ErrorCode::invalid_parameters, "network has no OD pairs");
  std::vector<IncidenceBlock> blocks;
  LowerSystem sys;
  Index cols = 0, rows = 0;
  for (std::size_t k = 0; k < network.od_pairs.size(); ++k) {
    blocks.push_back(build_incidence(network, k));
    sys.layout.od_arcs.push_back(blocks.back().column_arcs);
    sys.layout.od_offset.push_back(cols);
    cols += blocks.back().A.cols();
    rows += blocks.back().A.rows();
  }
  const Index num_arcs = static_cast<Index>(network.arcs.size());
  sys.layout.aggregate_offset = cols;
  sys.layout.num_vars = cols + num_arcs;

  sys.A_eq = Matrix::Zero(rows + num_arcs, sys.layout.num_vars);
  sys.b_eq = Vector::Zero(rows + num_arcs);
  Index row = 0;
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const auto& blk = blocks[k];
    sys.A_eq.block(row, sys.layout.od_offset[k], blk.A.rows(), blk.A.cols()) = blk.A;
    sys.b_eq.segment(row, blk.b.size()) = blk.b;
    row += blk.A.rows();
  }
  // Coupling rows: sum_k d^k y^k_a - y_a = 0.
  for (Index a = 0; a < num_arcs; ++a) {
    for (std::size_t k = 0; k < blocks.size(); ++k) {
      const auto& arcs = sys.layout.od_arcs[k];
      const auto it = std::find(arcs.begin(), arcs.end(), a);
      if (it != arcs.end()) {
        sys.A_eq(row + a, sys.layout.od_offset[k] + (it - arcs.begin())) = network.od_pairs[k].demand;
      }
    }
    sys.A_eq(row + a, sys.layout.aggregate(a)) = -1.0;
  }
  return sys;
}

std::pair<Matrix, Vector> to_inequality_form(const Matrix& A_eq, const Vector& b_eq,
                                             const std::vector<bool>& nonneg) {
  const Index vars = A_eq.rows() > 0 ? A_eq.cols() : static_cast<Index>(nonneg.size());
  if (static_cast<Index>(nonneg.size()) != vars || A_eq.rows() != b_eq.size()) {
    throw Error(ErrorCode::dimension_mismatch, "to_inequality_form: inconsistent sizes");
  }
  const Index signs = std::count(nonneg.begin(), nonneg.end(), true);
  Matrix A = Matrix::Zero(2 * A_eq.rows() + signs, vars);
  Vector b = Vector::Zero(A.rows());
  for (Index i = 0; i < A_eq.rows(); ++i) {
    A.row(2 * i) = A_eq.row(i);
    b(2 * i) = b_eq(i);
    A.row(2 * i + 1) = -A_eq.row(i);
    b(2 * i + 1) = -b_eq(i);
  }
  Index row = 2 * A_eq.rows();
  for (Index j = 0; j < vars; ++j) {
    if (nonneg[j]) A(row++, j) = -1.0;
  }
  return {A, b};
}

UpperConstraints build_upper_constraints(const TollNetwork& network, const LowerLayout& layout) {
  const Index n = layout.num_vars;
  std::vector<Index> arc_var(network.arcs.size());
  for (std::size_t a = 0; a < arc_var.size(); ++a) arc_var[a] = layout.aggregate(static_cast<Index>(a));

  std::vector<Eigen::RowVectorXd> rows;
  std::vector<double> rhs;
  std::vector<Pin> pins;
  append_arc_rows(network, arc_var, n, rows, rhs, pins);
  // Per-pair components of x carry no price.
  for (Index j = 0; j < layout.aggregate_offset; ++j) {
    Eigen::RowVectorXd e = Eigen::RowVectorXd::Zero(n);
    e(j) = 1.0;
    rows.push_back(e);
    rhs.push_back(0.0);
    rows.push_back(-e);
    rhs.push_back(0.0);
    pins.push_back({j, 0.0, std::nullopt});
  }
  for (const auto& [a, b] : network.linked_tolls) {
    append_link_rows(arc_var[a], arc_var[b], n, rows, rhs);
  }
  return stack_rows(rows, rhs, std::move(pins), n);
}

UpperObjective make_objective(const TollNetwork& network, const LowerLayout& layout) {
  const Index n = layout.num_vars;
  QuadraticForm q;
  q.Qxx = Matrix::Zero(n, n);
  q.Qxy = Matrix::Zero(n, n);
  q.Qyy = Matrix::Zero(n, n);
  q.kx = Vector::Zero(n);
  q.ky = Vector::Zero(n);
  for (Index a : network.tolled) {
    const Index v = layout.aggregate(a);
    q.Qxy(v, v) = -1.0;
    q.ky(v) = network.arcs[a].cost;
  }
  return UpperObjective::from_quadratic(std::move(q));
}

TollInstance build_toll_instance(const TollNetwork& network) {
  network.check();
  const LowerSystem lower = assemble_lower_level(network);
  const auto [A, b] =
      to_inequality_form(lower.A_eq, lower.b_eq, std::vector<bool>(lower.layout.num_vars, true));
  UpperConstraints upper = build_upper_constraints(network, lower.layout);

  TollInstance inst;
  inst.network = network;
  inst.problem.A = A;
  inst.problem.b = b;
  inst.problem.D = upper.D;
  inst.problem.d = upper.d;
  inst.problem.objective = make_objective(network, lower.layout);
  inst.layout.n = lower.layout.num_vars;
  inst.layout.pins = std::move(upper.pins);
  for (std::size_t a = 0; a < network.arcs.size(); ++a) {
    inst.layout.arc_var.push_back(lower.layout.aggregate(static_cast<Index>(a)));
  }
  return inst;
}

std::vector<double> recover_tolls(const Vector& x, const TollInstance& instance, double tol) {
  if (x.size() != instance.layout.n) {
    throw Error(ErrorCode::dimension_mismatch, "recover_tolls: x has the wrong length");
  }
  for (const Pin& pin : instance.layout.pins) {
    if (std::abs(x(pin.var) - pin.value) > tol) {
      const std::string where =
          pin.arc ? arc_label(*pin.arc) : "component " + std::to_string(pin.var + 1);
      throw Error(ErrorCode::inconsistent_pin, "pinned price violated at " + where + ": expected " +
                                                   std::to_string(pin.value) + ", found " +
                                                   std::to_string(x(pin.var)));
    }
  }
  std::vector<double> tolls;
  for (Index a : instance.network.tolled) {
    tolls.push_back(x(instance.layout.arc_var[a]) - instance.network.arcs[a].cost);
  }
  return tolls;
}

double revenue(const TollInstance& instance, const Vector& x, const Vector& y) {
  return -instance.problem.upper_value(x, y);
}

namespace {

TollNetwork network1() {
  TollNetwork net;
  net.nodes = {1, 2, 3, 4, 5};
  net.arcs = {{1, 2, 2}, {1, 3, 6}, {1, 5, 5}, {2, 3, 0},
              {2, 4, 4}, {3, 4, 2}, {3, 5, 6}, {4, 5, 0}};
  net.tolled = {2, 3, 7};
  net.toll_lb = {0, 0, 0};
  net.od_pairs = {{1, 5, 1.0, {}}};
  return net;
}

// Arc 3 runs 4 -> 2 so that the pair (1,2) can use the route 1-3-4-2 that
// its printed constraints chain together.
TollNetwork network2() {
  TollNetwork net;
  net.nodes = {1, 2, 3, 4, 5, 6};
  net.arcs = {{1, 2, 8}, {1, 3, 2}, {4, 2, 1}, {3, 4, 0}, {5, 3, 3}, {4, 6, 1}, {5, 6, 6}};
  net.tolled = {3};
  net.toll_lb = {0};
  net.od_pairs = {{1, 2, 1.0, {0, 1, 2, 3}}, {5, 6, 1.0, {4, 3, 5, 6}}};
  return net;
}

// Reduced program with one flow variable per column of A_eq and nonnegativity
// on all of them.
TollInstance reduced_instance(const TollNetwork& network, const Matrix& A_eq, const Vector& b_eq,
                              const std::vector<Index>& arc_var, QuadraticForm objective,
                              const std::vector<std::pair<Index, Index>>& linked_vars,
                              bool tolled_lower_rows) {
  const Index n = A_eq.cols();
  const auto [A, b] = to_inequality_form(A_eq, b_eq, std::vector<bool>(n, true));
  std::vector<Eigen::RowVectorXd> rows;
  std::vector<double> rhs;
  std::vector<Pin> pins;
  append_arc_rows(network, arc_var, n, rows, rhs, pins, tolled_lower_rows);
  for (const auto& [a, b2] : linked_vars) append_link_rows(a, b2, n, rows, rhs);
  UpperConstraints upper = stack_rows(rows, rhs, std::move(pins), n);

  TollInstance inst;
  inst.network = network;
  inst.problem.A = A;
  inst.problem.b = b;
  inst.problem.D = upper.D;
  inst.problem.d = upper.d;
  inst.problem.objective = UpperObjective::from_quadratic(std::move(objective));
  inst.layout.n = n;
  inst.layout.arc_var = arc_var;
  inst.layout.pins = std::move(upper.pins);
  return inst;
}

QuadraticForm zero_form(Index n) {
  return {Matrix::Zero(n, n), Matrix::Zero(n, n), Matrix::Zero(n, n), Vector::Zero(n),
          Vector::Zero(n), 0.0};
}

Preset make_network1() {
  const TollNetwork net = network1();
  // Conservation at nodes 1-4; the destination row is dropped.
  Matrix A_eq(4, 8);
  A_eq << 1, 1, 1, 0, 0, 0, 0, 0,
         -1, 0, 0, 1, 1, 0, 0, 0,
          0, -1, 0, -1, 0, 1, 1, 0,
          0, 0, 0, 0, -1, -1, 0, 1;
  Vector b_eq(4);
  b_eq << 1, 0, 0, 0;
  std::vector<Index> arc_var{0, 1, 2, 3, 4, 5, 6, 7};

  // Revenue (x3 - 5) y3 + x4 y4 + x8 y8.
  QuadraticForm q = zero_form(8);
  for (Index a : net.tolled) {
    q.Qxy(a, a) = -1.0;
    q.ky(a) = net.arcs[a].cost;
  }

  Preset p;
  p.name = "network1";
  p.instance = reduced_instance(net, A_eq, b_eq, arc_var, std::move(q), {}, true);
  p.params.alpha = 0.45;
  Vector x0(8), y0(8);
  x0 << 2, 6, 5, 5, 4, 2, 6, 5;
  y0 << 0, 1, 0, 0, 0, 1, 0, 0;
  p.start = default_start(p.instance.problem, x0, y0);
  return p;
}

Preset make_network2() {
  const TollNetwork net = network2();
  // y1 + y2 = 1, y5 + y7 = 1, y2 = y3 = y4, y5 = y6 = y8.
  Matrix A_eq = Matrix::Zero(6, 8);
  A_eq(0, 0) = 1; A_eq(0, 1) = 1;
  A_eq(1, 4) = 1; A_eq(1, 6) = 1;
  A_eq(2, 1) = 1; A_eq(2, 2) = -1;
  A_eq(3, 2) = 1; A_eq(3, 3) = -1;
  A_eq(4, 4) = 1; A_eq(4, 5) = -1;
  A_eq(5, 5) = 1; A_eq(5, 7) = -1;
  Vector b_eq(6);
  b_eq << 1, 1, 0, 0, 0, 0;
  std::vector<Index> arc_var{0, 1, 2, 3, 4, 5, 6};

  // Revenue x4 y4 / 2; x8 prices the second flow on the shared arc and is tied to x4.
  QuadraticForm q = zero_form(8);
  q.Qxy(3, 3) = -0.5;

  Preset p;
  p.name = "network2";
  p.instance = reduced_instance(net, A_eq, b_eq, arc_var, std::move(q), {{3, 7}}, false);
  p.params.alpha = 4.791;
  Vector x0(8);
  x0 << 8, 2, 1, 0, 3, 1, 6, 0;
  p.start = default_start(p.instance.problem, x0, Vector::Zero(8));
  return p;
}

}  // namespace

std::vector<std::string> preset_names() { return {"network1", "network2"}; }

Preset preset(const std::string& name) {
  if (name == "network1") return make_network1();
  if (name == "network2") return make_network2();
  throw Error(ErrorCode::unknown_preset, "unknown preset '" + name + "'");
}

}  // namespace bilevel
