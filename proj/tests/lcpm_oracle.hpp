#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "curbx/lcpm.hpp"

namespace curbx::testing {

// Independent cost model: linear ramps clamped at the ends.
inline double lerp_clamped(double rho, double r0, double r1, double v0, double v1) {
  if (rho <= r0) return v0;
  if (rho >= r1) return v1;
  return v0 + (v1 - v0) * (rho - r0) / (r1 - r0);
}

inline double oracle_data(NodeKind kind, const PenaltySchedule& s, double rho) {
  switch (kind) {
    case NodeKind::candidate: return 0.0;
    case NodeKind::non_candidate: return lerp_clamped(rho, s.rho_low, s.rho_high, s.penalty_d_low, s.penalty_d_high);
    case NodeKind::virtual_node: return s.penalty_v;
  }
  return 0.0;
}

inline double lattice_distance(const VoxelIndex& a, const VoxelIndex& b) {
  return std::sqrt(double(a.i - b.i) * (a.i - b.i) + double(a.j - b.j) * (a.j - b.j) + double(a.k - b.k) * (a.k - b.k));
}

inline bool oracle_step_ok(const PathGraph& g, const VoxelIndex& a, const VoxelIndex& b) {
  const double d[3] = {double(b.i - a.i), double(b.j - a.j), double(b.k - a.k)};
  const double t = d[0] * g.v1[0] + d[1] * g.v1[1] + d[2] * g.v1[2];
  const int lim[3] = {g.bounds.dx, g.bounds.dy, g.bounds.dz};
  for (int c = 0; c < 3; ++c)
    if (std::abs(d[c] - t * g.v1[c]) > lim[c] + 0.5) return false;
  return true;
}

struct OracleBest {
  double cost = std::numeric_limits<double>::infinity();
  double length = 0.0;  // sum of step distances of the optimum found first
  std::vector<std::size_t> choice;
};

// Every slice-monotone path, one node per slice. Absent when none is feasible.
inline std::optional<OracleBest> exhaustive_best(const PathGraph& g, const PenaltySchedule& s, double rho) {
  const double ps = lerp_clamped(rho, s.rho_low, s.rho_high, s.penalty_s_low, s.penalty_s_high);
  OracleBest best;
  std::vector<std::size_t> pick(g.slices.size(), 0);
  bool found = false;
  while (true) {
    double cost = 0.0, len = 0.0;
    bool ok = true;
    for (std::size_t s_i = 0; s_i < g.slices.size() && ok; ++s_i) {
      const auto& n = g.slices[s_i][pick[s_i]];
      cost += oracle_data(n.kind, s, rho);
      if (s_i > 0) {
        const auto& prev = g.slices[s_i - 1][pick[s_i - 1]];
        ok = oracle_step_ok(g, prev.position, n.position);
        const double d = lattice_distance(prev.position, n.position);
        cost += ps * d;
        len += d;
      }
    }
    if (ok && cost < best.cost) {
      best.cost = cost;
      best.length = len;
      best.choice = pick;
      found = true;
    }
    std::size_t s_i = 0;
    while (s_i < pick.size() && ++pick[s_i] == g.slices[s_i].size()) pick[s_i++] = 0;
    if (s_i == pick.size()) break;
  }
  if (!found) return std::nullopt;
  return best;
}

// Slices along +x (one per i), random lateral positions and kinds.
inline PathGraph random_graph(std::mt19937_64& rng, int max_slices = 7, int max_nodes = 5) {
  std::uniform_int_distribution<int> ns(1, max_slices), nn(1, max_nodes), lat(-3, 3), kind(0, 9), bnd(1, 3);
  PathGraph g;
  g.v1 = {1.0, 0.0, 0.0};
  g.bounds = {bnd(rng), bnd(rng), bnd(rng)};
  const int n_slices = ns(rng);
  for (int s = 0; s < n_slices; ++s) {
    std::vector<PathNode> slice;
    const int n = nn(rng);
    for (int q = 0; q < n; ++q) {
      const int kr = kind(rng);
      const NodeKind k = kr < 6 ? NodeKind::candidate : kr < 9 ? NodeKind::non_candidate : NodeKind::virtual_node;
      slice.push_back({{s, lat(rng), lat(rng)}, k, s});
    }
    g.slices.push_back(std::move(slice));
  }
  return g;
}

}  // namespace curbx::testing
