#pragma once

// Toll-setting instances. The leader picks x_a = c_a + T_a on tolled arcs
// (x_a = c_a elsewhere), followers route unit demands at minimum cost x'y.
// Node ids are arbitrary integers; arc indices are 0-based positions in
// TollNetwork::arcs.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bilevel/problem.hpp"

namespace bilevel {

struct Arc {
  int tail = 0;
  int head = 0;
  double cost = 0.0;
};

struct OdPair {
  int origin = 0;
  int destination = 0;
  double demand = 1.0;
  // Arcs this pair may use; empty means all arcs.
  std::vector<Index> useful_arcs;
};

struct TollNetwork {
  std::vector<int> nodes;
  std::vector<Arc> arcs;
  std::vector<Index> tolled;
  std::vector<double> toll_lb;  // parallel to tolled
  std::vector<OdPair> od_pairs;
  std::vector<std::pair<Index, Index>> linked_tolls;  // x_a = x_b for tolled a, b

  bool is_tolled(Index arc) const;
  double lower_bound(Index arc) const;
  /// Throws on self-loops, unknown nodes, bad demands or unreachable pairs.
  void check() const;
};

/// Flow conservation for one OD pair: rows are the nodes except the
/// destination, columns the usable arcs, +1 leaving and -1 entering.
struct IncidenceBlock {
  Matrix A;
  Vector b;
  std::vector<int> row_nodes;
  std::vector<Index> column_arcs;
};

IncidenceBlock build_incidence(const TollNetwork& network, std::size_t od_index);

/// Variable layout of the lower level: per-pair flows first, then the
/// aggregate flows y_a for every arc.
struct LowerLayout {
  std::vector<std::vector<Index>> od_arcs;  // arcs of each pair's block
  std::vector<Index> od_offset;             // first column of each block
  Index aggregate_offset = 0;
  Index num_vars = 0;

  Index aggregate(Index arc) const { return aggregate_offset + arc; }
};

struct LowerSystem {
  Matrix A_eq;
  Vector b_eq;
  LowerLayout layout;
};

LowerSystem assemble_lower_level(const TollNetwork& network);

/// Equalities become opposing pairs; masked variables get -y <= 0 rows.
std::pair<Matrix, Vector> to_inequality_form(const Matrix& A_eq, const Vector& b_eq,
                                             const std::vector<bool>& nonneg);

/// A component of x fixed by two opposing upper rows.
struct Pin {
  Index var = 0;
  double value = 0.0;
  std::optional<Index> arc;  // set when the pin is an untolled arc cost
};

/// Maps network arcs to x components and records the pinned ones.
struct TollLayout {
  Index n = 0;
  std::vector<Index> arc_var;
  std::vector<Pin> pins;
};

struct UpperConstraints {
  Matrix D;
  Vector d;
  std::vector<Pin> pins;
};

UpperConstraints build_upper_constraints(const TollNetwork& network, const LowerLayout& layout);

/// F = -sum over tolled arcs of (x_a - c_a) y_a, as a quadratic form.
UpperObjective make_objective(const TollNetwork& network, const LowerLayout& layout);

struct TollInstance {
  TollNetwork network;
  BilevelProblem problem;
  TollLayout layout;
};

/// Generic assembly from a network description.
TollInstance build_toll_instance(const TollNetwork& network);

/// T_a = x_a - c_a per tolled arc, in the order of network.tolled. Throws
/// Error(inconsistent_pin) naming the arc when a pin is off by more than tol.
std::vector<double> recover_tolls(const Vector& x, const TollInstance& instance, double tol = 1e-6);

/// Toll revenue -F(x, y).
double revenue(const TollInstance& instance, const Vector& x, const Vector& y);

struct Preset {
  std::string name;
  TollInstance instance;
  PenaltyParams params;
  IterateU start;
};

/// "network1" or "network2". Both are the reduced programs with one flow
/// variable per arc (plus the shared-arc flow of network2).
Preset preset(const std::string& name);
std::vector<std::string> preset_names();

}  // namespace bilevel
