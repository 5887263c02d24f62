#include "curbx/lcpm.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <thread>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include "curbx/error.hpp"

namespace curbx {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Vec3 as_vec(const VoxelIndex& v) { return {double(v.i), double(v.j), double(v.k)}; }
double vdot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
Vec3 vsub(const Vec3& a, const Vec3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
double vnorm(const Vec3& a) { return std::sqrt(vdot(a, a)); }

double lattice_distance(const VoxelIndex& a, const VoxelIndex& b) { return vnorm(vsub(as_vec(a), as_vec(b))); }

double ramp(double rho, double lo, double hi, double at_lo, double at_hi) {
  if (rho <= lo) return at_lo;
  if (rho >= hi) return at_hi;
  return at_lo + (at_hi - at_lo) * (rho - lo) / (hi - lo);
}

double angle_deg(const Point3& a, const Point3& b) {
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::acos(std::clamp(dot(a, b) / (na * nb), -1.0, 1.0)) * 180.0 / std::numbers::pi;
}

// ---- components and hypotheses ---------------------------------------------

std::vector<std::vector<VoxelIndex>> components_26(std::vector<VoxelIndex> voxels) {
  std::unordered_set<VoxelIndex, VoxelIndexHash> left(voxels.begin(), voxels.end());
  std::sort(voxels.begin(), voxels.end());
  std::vector<std::vector<VoxelIndex>> out;
  for (const auto& seed : voxels) {
    if (!left.erase(seed)) continue;
    std::vector<VoxelIndex> comp{seed};
    for (std::size_t head = 0; head < comp.size(); ++head) {
      const auto v = comp[head];
      for (int di = -1; di <= 1; ++di)
        for (int dj = -1; dj <= 1; ++dj)
          for (int dk = -1; dk <= 1; ++dk) {
            const VoxelIndex w{v.i + di, v.j + dj, v.k + dk};
            if (left.erase(w)) comp.push_back(w);
          }
    }
    std::sort(comp.begin(), comp.end());
    out.push_back(std::move(comp));
  }
  return out;
}

double squared_gap(const VoxelIndex& a, const VoxelIndex& b) {
  const double di = a.i - b.i, dj = a.j - b.j, dk = a.k - b.k;
  return di * di + dj * dj + dk * dk;
}

// Single linkage: components whose closest voxels are within `link_gap`
// end up in one hypothesis.
std::vector<std::vector<VoxelIndex>> hypotheses(const std::vector<std::vector<VoxelIndex>>& comps, double link_gap) {
  struct Bounds {
    VoxelIndex lo, hi;
  };
  std::vector<Bounds> bounds;
  for (const auto& c : comps) {
    Bounds bb{c.front(), c.front()};
    for (const auto& v : c) {
      bb.lo = {std::min(bb.lo.i, v.i), std::min(bb.lo.j, v.j), std::min(bb.lo.k, v.k)};
      bb.hi = {std::max(bb.hi.i, v.i), std::max(bb.hi.j, v.j), std::max(bb.hi.k, v.k)};
    }
    bounds.push_back(bb);
  }
  const auto near = [&](std::size_t x, std::size_t y) {
    const auto& p = bounds[x];
    const auto& q = bounds[y];
    const auto sep = [](int lo1, int hi1, int lo2, int hi2) { return std::max({0, lo2 - hi1, lo1 - hi2}); };
    const double gi = sep(p.lo.i, p.hi.i, q.lo.i, q.hi.i), gj = sep(p.lo.j, p.hi.j, q.lo.j, q.hi.j),
                 gk = sep(p.lo.k, p.hi.k, q.lo.k, q.hi.k);
    const double limit = link_gap * link_gap;
    if (gi * gi + gj * gj + gk * gk > limit) return false;
    for (const auto& u : comps[x])
      for (const auto& v : comps[y])
        if (squared_gap(u, v) <= limit) return true;
    return false;
  };
  std::vector<std::size_t> parent(comps.size());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  const auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t a = 0; a < comps.size(); ++a)
    for (std::size_t b = a + 1; b < comps.size(); ++b)
      if (find(a) != find(b) && near(a, b)) parent[find(b)] = find(a);
  std::map<std::size_t, std::vector<VoxelIndex>> groups;
  for (std::size_t a = 0; a < comps.size(); ++a) {
    auto& g = groups[find(a)];
    g.insert(g.end(), comps[a].begin(), comps[a].end());
  }
  std::vector<std::vector<VoxelIndex>> out;
  for (auto& [root, g] : groups) {
    std::sort(g.begin(), g.end());
    out.push_back(std::move(g));
  }
  return out;
}

struct Box {
  VoxelIndex lo, hi;  // inclusive
};

Box grown_box(std::span<const VoxelIndex> voxels, int margin, const SearchRegion& region) {
  Box b{voxels.front(), voxels.front()};
  for (const auto& v : voxels) {
    b.lo = {std::min(b.lo.i, v.i), std::min(b.lo.j, v.j), std::min(b.lo.k, v.k)};
    b.hi = {std::max(b.hi.i, v.i), std::max(b.hi.j, v.j), std::max(b.hi.k, v.k)};
  }
  const auto& o = region.offset;
  const auto& e = region.extents;
  b.lo = {std::max(b.lo.i - margin, o.i), std::max(b.lo.j - margin, o.j), std::max(b.lo.k - margin, o.k)};
  b.hi = {std::min(b.hi.i + margin, o.i + e[0] - 1), std::min(b.hi.j + margin, o.j + e[1] - 1),
          std::min(b.hi.k + margin, o.k + e[2] - 1)};
  return b;
}

template <class F>
void for_each_occupied(const VoxelGrid& grid, const Box& box, F&& f) {
  const auto volume = static_cast<double>(box.hi.i - box.lo.i + 1) * (box.hi.j - box.lo.j + 1) *
                      (box.hi.k - box.lo.k + 1);
  if (volume <= static_cast<double>(grid.occupied())) {
    for (int i = box.lo.i; i <= box.hi.i; ++i)
      for (int j = box.lo.j; j <= box.hi.j; ++j)
        for (int k = box.lo.k; k <= box.hi.k; ++k)
          if (grid.contains({i, j, k})) f(VoxelIndex{i, j, k});
    return;
  }
  std::vector<VoxelIndex> hits;
  for (const auto& [v, n] : grid.cells())
    if (v.i >= box.lo.i && v.i <= box.hi.i && v.j >= box.lo.j && v.j <= box.hi.j && v.k >= box.lo.k &&
        v.k <= box.hi.k)
      hits.push_back(v);
  std::sort(hits.begin(), hits.end());
  for (const auto& v : hits) f(v);
}

// RMS distance of the occupied voxels around a hypothesis from their best
// plane: ~0 on flat or tilted surfaces, clearly positive across a step.
double surface_relief(const VoxelGrid& grid, const SearchRegion& region, std::span<const VoxelIndex> hypothesis,
                      int margin) {
  std::vector<VoxelIndex> around;
  for_each_occupied(grid, grown_box(hypothesis, margin, region), [&](const VoxelIndex& v) { around.push_back(v); });
  if (around.size() < 3) return 0.0;
  const auto pd = principal_direction(around);
  return pd.s3 / std::sqrt(static_cast<double>(around.size()));
}

// ---- assembly ---------------------------------------------------------------

// Direction leaving the line at one end, measured over about `reach` meters.
Point3 tangent_out(const std::vector<Point3>& v, bool at_end, double reach = 1.0) {
  const std::size_t n = v.size();
  const auto at = [&](std::size_t m) { return at_end ? v[n - 1 - m] : v[m]; };
  std::size_t m = 1;
  while (m + 1 < n && distance(at(0), at(m)) < reach) ++m;
  return at(0) - at(m);
}

// End `end_a` of a and end `end_b` of b, oriented so that a runs into b.
std::vector<Point3> joined(std::vector<Point3> a, bool end_a, std::vector<Point3> b, bool end_b,
                           const std::vector<Point3>& bridge = {}) {
  if (!end_a) std::reverse(a.begin(), a.end());
  if (end_b) std::reverse(b.begin(), b.end());
  a.insert(a.end(), bridge.begin(), bridge.end());
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

struct EndPair {
  std::size_t a, b;
  bool end_a, end_b;
  double dist;
};

// Repeatedly joins the closest admissible endpoint pair of two distinct lines.
template <class Admit, class Bridge>
void join_lines(std::vector<std::vector<Point3>>& lines, double max_dist, Admit admit, Bridge bridge) {
  for (;;) {
    std::optional<EndPair> best;
    for (std::size_t a = 0; a < lines.size(); ++a)
      for (std::size_t b = a + 1; b < lines.size(); ++b)
        for (const bool ea : {false, true})
          for (const bool eb : {false, true}) {
            const auto& pa = ea ? lines[a].back() : lines[a].front();
            const auto& pb = eb ? lines[b].back() : lines[b].front();
            const double d = distance(pa, pb);
            if (d > max_dist || (best && d >= best->dist)) continue;
            if (!admit(lines[a], ea, lines[b], eb)) continue;
            best = EndPair{a, b, ea, eb, d};
          }
    if (!best) return;
    auto merged = joined(lines[best->a], best->end_a, lines[best->b], best->end_b,
                         bridge(lines[best->a], best->end_a, lines[best->b], best->end_b));
    lines.erase(lines.begin() + static_cast<std::ptrdiff_t>(best->b));
    lines[best->a] = std::move(merged);
  }
}

double polyline_length(const std::vector<Point3>& v) {
  double len = 0.0;
  for (std::size_t n = 1; n < v.size(); ++n) len += distance(v[n - 1], v[n]);
  return len;
}

double point_segment_distance(const Point3& p, const Point3& a, const Point3& b) {
  const auto ab = b - a;
  const double l2 = dot(ab, ab);
  const double t = l2 > 0.0 ? std::clamp(dot(p - a, ab) / l2, 0.0, 1.0) : 0.0;
  return distance(p, a + t * ab);
}

double point_line_distance(const Point3& p, const std::vector<Point3>& line) {
  if (line.size() == 1) return distance(p, line[0]);
  double best = kInf;
  for (std::size_t n = 1; n < line.size(); ++n) best = std::min(best, point_segment_distance(p, line[n - 1], line[n]));
  return best;
}

std::vector<Point3> without_repeats(const std::vector<Point3>& v) {
  std::vector<Point3> out;
  for (const auto& p : v)
    if (out.empty() || !(out.back() == p)) out.push_back(p);
  return out;
}

std::vector<std::vector<Point3>> assemble(std::vector<std::vector<Point3>> lines, double voxel_size,
                                          const RefineOptions& opt) {
  const auto always = [](auto&&...) { return true; };
  const auto no_bridge = [](auto&&...) { return std::vector<Point3>{}; };
  join_lines(lines, 2.0 * voxel_size * (1.0 + 1e-9), always, no_bridge);

  const auto aligned = [&](const std::vector<Point3>& a, bool ea, const std::vector<Point3>& b, bool eb) {
    if (a.size() < 2 || b.size() < 2) return false;
    const auto pa = ea ? a.back() : a.front();
    const auto pb = eb ? b.back() : b.front();
    const auto ta = tangent_out(a, ea);
    const auto tb = -1.0 * tangent_out(b, eb);
    if (angle_deg(ta, tb) > opt.bridge_angle_deg) return false;
    // b must continue roughly on a's line, not beside it.
    const auto gap = pb - pa;
    const auto u = (1.0 / norm(ta)) * ta;
    const double along = dot(gap, u);
    const double lateral = norm(gap - along * u);
    return along > -2.0 * voxel_size &&
           lateral <= 4.0 * voxel_size + std::max(0.0, along) * std::tan(opt.bridge_angle_deg * std::numbers::pi / 180.0);
  };
  join_lines(lines, opt.bridge_gap, aligned, no_bridge);

  // Drop lines that mostly run alongside a longer one.
  std::vector<std::size_t> order(lines.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](auto x, auto y) { return polyline_length(lines[x]) > polyline_length(lines[y]); });
  std::vector<std::vector<Point3>> kept;
  for (auto idx : order) {
    const auto& line = lines[idx];
    bool duplicate = false;
    for (const auto& other : kept) {
      std::size_t near = 0;
      for (const auto& p : line) near += point_line_distance(p, other) <= opt.duplicate_distance;
      if (near >= 0.8 * static_cast<double>(line.size())) {
        duplicate = true;
        break;
      }
    }
    if (!duplicate) kept.push_back(line);
  }

  std::vector<std::vector<Point3>> out;
  for (auto& line : kept)
    if (polyline_length(line) >= opt.min_curb_length) out.push_back(std::move(line));

  if (opt.intersection_gap > 0.0) {
    for (;;) {
      std::optional<EndPair> best;
      std::optional<Polyline3> best_link;
      for (std::size_t a = 0; a < out.size(); ++a)
        for (std::size_t b = 0; b < out.size(); ++b) {
          if (a == b) continue;
          for (const bool ea : {false, true})
            for (const bool eb : {false, true}) {
              Polyline3 pa, pb;
              pa.vertices = out[a];
              pb.vertices = out[b];
              if (!ea) std::reverse(pa.vertices.begin(), pa.vertices.end());
              if (eb) std::reverse(pb.vertices.begin(), pb.vertices.end());
              const double d = distance(pa.vertices.back(), pb.vertices.front());
              if (best && d >= best->dist) continue;
              auto link = link_intersection(pa, pb, opt.intersection_gap, voxel_size);
              if (!link) continue;
              best = EndPair{a, b, ea, eb, d};
              best_link = std::move(link);
            }
        }
      if (!best) break;
      auto& bridge = best_link->vertices;
      std::vector<Point3> inner(bridge.begin() + 1, bridge.end() - 1);
      auto merged = joined(out[best->a], best->end_a, out[best->b], best->end_b, inner);
      const auto hi = std::max(best->a, best->b), lo = std::min(best->a, best->b);
      out.erase(out.begin() + static_cast<std::ptrdiff_t>(hi));
      out.erase(out.begin() + static_cast<std::ptrdiff_t>(lo));
      out.push_back(std::move(merged));
    }
  }
  for (auto& line : out) line = without_repeats(line);
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
    return std::tie(x.front().x, x.front().y, x.front().z) < std::tie(y.front().x, y.front().y, y.front().z);
  });
  return out;
}

// ---- per-region work ----------------------------------------------------------

// A tilted axis cuts the region box obliquely, so the end slices can hold only
// one side of the band and force the path off the curb. Drop ends with fewer
// than half the median slice population.
void trim_thin_ends(PathGraph& graph) {
  std::vector<std::size_t> sizes;
  for (const auto& sl : graph.slices) sizes.push_back(sl.size());
  if (sizes.size() < 4) return;
  std::nth_element(sizes.begin(), sizes.begin() + static_cast<std::ptrdiff_t>(sizes.size() / 2), sizes.end());
  const std::size_t thin = sizes[sizes.size() / 2] / 2;
  std::size_t lo = 0, hi = graph.slices.size();
  while (hi - lo > 1 && graph.slices[hi - 1].size() <= thin) --hi;
  while (hi - lo > 1 && graph.slices[lo].size() <= thin) ++lo;
  if (lo == 0 && hi == graph.slices.size()) return;
  std::vector<std::vector<PathNode>> kept(graph.slices.begin() + static_cast<std::ptrdiff_t>(lo),
                                          graph.slices.begin() + static_cast<std::ptrdiff_t>(hi));
  for (auto& sl : kept)
    for (auto& node : sl) node.slice -= static_cast<int>(lo);
  graph.slices = std::move(kept);
}

struct RegionOutput {
  std::vector<CurbPath> paths;
  std::vector<RegionReport> reports;
};

RegionOutput process_region(const SearchRegion& region, std::size_t region_id, double rho,
                            std::vector<VoxelIndex> region_candidates, const VoxelGrid& grid,
                            const CandidateSet& candidates, const RefineOptions& opt) {
  RegionOutput out;
  if (rho < opt.schedule.rho_min) return out;
  auto comps = components_26(std::move(region_candidates));
  constexpr int kMargin = 2;
  // Flat-surface blobs (plane noise, scanner-gap edges) carry no relief.
  // Voxels coarser than relief_max_voxel cannot resolve a curb step.
  const bool gate = grid.voxel_size() <= opt.relief_max_voxel;
  std::erase_if(comps, [&](const auto& c) {
    return c.size() < opt.min_component ||
           (gate && surface_relief(grid, region, c, kMargin) * grid.voxel_size() < opt.min_relief);
  });
  if (comps.empty()) return out;
  for (const auto& hyp : hypotheses(comps, opt.link_gap)) {
    if (hyp.size() < opt.min_hypothesis) continue;
    const auto pd = principal_direction(hyp);
    const auto step = step_size(pd, region.extents);
    auto graph =
        build_path_graph(region, grid, candidates, hyp, pd, step, opt.schedule.rho_min, kMargin, opt.lateral_band);
    if (graph.slices.empty()) continue;
    trim_thin_ends(graph);
    std::optional<CurbPath> path;
    for (;;) {
      try {
        path = solve_lcpm(graph, opt.schedule, rho);
        break;
      } catch (const InfeasiblePathError&) {
        auto& b = graph.bounds;
        if (b.dx >= region.extents[0] && b.dy >= region.extents[1] && b.dz >= region.extents[2]) break;
        b = {std::min(2 * b.dx, region.extents[0]), std::min(2 * b.dy, region.extents[1]),
             std::min(2 * b.dz, region.extents[2])};
      }
    }
    if (!path) continue;
    out.reports.push_back({region_id, region, rho, hyp.size(), pd, step, path->cost});
    out.paths.push_back(std::move(*path));
  }
  return out;
}

}  // namespace

// ---- public API -----------------------------------------------------------------

PrincipalDirection principal_direction(std::span<const VoxelIndex> voxels) {
  if (voxels.size() < 2) throw ValidationError("principal_direction needs at least 2 voxels");
  Eigen::MatrixXd D(static_cast<Eigen::Index>(voxels.size()), 3);
  for (std::size_t n = 0; n < voxels.size(); ++n) {
    D(static_cast<Eigen::Index>(n), 0) = voxels[n].i;
    D(static_cast<Eigen::Index>(n), 1) = voxels[n].j;
    D(static_cast<Eigen::Index>(n), 2) = voxels[n].k;
  }
  const Eigen::RowVector3d mean = D.colwise().mean();
  D.rowwise() -= mean;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(D, Eigen::ComputeThinV);
  const auto& s = svd.singularValues();
  if (!(s(0) > 0.0)) throw ValidationError("principal_direction: all voxels coincide");
  Eigen::Vector3d v = svd.matrixV().col(0);
  Eigen::Index big = 0;
  v.cwiseAbs().maxCoeff(&big);
  if (v(big) < 0.0) v = -v;
  PrincipalDirection pd;
  pd.v1 = {v(0), v(1), v(2)};
  pd.s1 = s(0);
  pd.s2 = s(1);
  pd.s3 = s(2);
  pd.mean = {mean(0), mean(1), mean(2)};
  return pd;
}

StepSize step_size(const PrincipalDirection& pd, const Extents3& extents) {
  if (!(pd.s1 > 0.0)) throw ValidationError("step_size: degenerate principal direction (s1 = 0)");
  for (int e : extents)
    if (e < 1) throw ValidationError("step_size: region extents must be positive");
  const double factor = 1.0 - pd.s1 / std::sqrt(pd.s1 * pd.s1 + pd.s2 * pd.s2 + pd.s3 * pd.s3);
  const auto axis = [&](int e) { return std::max(1, static_cast<int>(std::floor(factor * e))); };
  return {axis(extents[0]), axis(extents[1]), axis(extents[2])};
}

bool transition_allowed(const PathGraph& graph, const VoxelIndex& from, const VoxelIndex& to) {
  const auto d = vsub(as_vec(to), as_vec(from));
  const double t = vdot(d, graph.v1);
  const double rx = d[0] - t * graph.v1[0], ry = d[1] - t * graph.v1[1], rz = d[2] - t * graph.v1[2];
  return std::abs(rx) <= graph.bounds.dx + 0.5 && std::abs(ry) <= graph.bounds.dy + 0.5 &&
         std::abs(rz) <= graph.bounds.dz + 0.5;
}

double PenaltySchedule::penalty_d(double rho) const {
  return ramp(rho, rho_low, rho_high, penalty_d_low, penalty_d_high);
}

double PenaltySchedule::penalty_s(double rho) const {
  return ramp(rho, rho_low, rho_high, penalty_s_low, penalty_s_high);
}

double PenaltySchedule::data_cost(NodeKind kind, double rho) const {
  switch (kind) {
    case NodeKind::candidate:
      return 0.0;
    case NodeKind::non_candidate:
      return penalty_d(rho);
    case NodeKind::virtual_node:
      return penalty_v;
  }
  return penalty_v;
}

void PenaltySchedule::validate() const {
  for (double v : {penalty_d_low, penalty_d_high, penalty_s_low, penalty_s_high, penalty_v, rho_min}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ValidationError("penalty values must be finite and non-negative");
  }
  if (!(rho_low < rho_high)) throw ValidationError("penalty ramp needs rho_low < rho_high");
  if (penalty_d_high < penalty_d_low) throw ValidationError("penaltyD must be non-decreasing in rho");
  if (penalty_s_high > penalty_s_low) throw ValidationError("penaltyS must be non-increasing in rho");
  if (penalty_v < std::max(penalty_d_low, penalty_d_high)) {
    throw ValidationError("penaltyV must be at least the largest penaltyD");
  }
  if (rho_min > 1.0) throw ValidationError("rho_min must lie in [0, 1]");
}

double path_cost(std::span<const PathNode> nodes, const PenaltySchedule& schedule, double rho) {
  double cost = 0.0;
  for (std::size_t n = 0; n < nodes.size(); ++n) {
    cost += schedule.data_cost(nodes[n].kind, rho);
    if (n > 0) cost += schedule.penalty_s(rho) * lattice_distance(nodes[n - 1].position, nodes[n].position);
  }
  return cost;
}

double candidate_fraction(const SearchRegion& region, const VoxelGrid& grid, const CandidateSet& candidates) {
  std::size_t occupied = 0, hits = 0;
  for (const auto& [v, n] : grid.cells()) occupied += region.contains(v);
  for (const auto& v : candidates.candidates) hits += region.contains(v) && grid.contains(v);
  return occupied == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(occupied);
}

PathGraph build_path_graph(const SearchRegion& region, const VoxelGrid& grid, const CandidateSet& candidates,
                           std::span<const VoxelIndex> hypothesis, const PrincipalDirection& pd, const StepSize& step,
                           double rho_min, int margin, double lateral_band) {
  if (hypothesis.empty()) throw ValidationError("build_path_graph: empty hypothesis");
  const double rho = candidate_fraction(region, grid, candidates);
  if (rho < rho_min) {
    throw ValidationError("build_path_graph: candidate fraction " + std::to_string(rho) +
                          " below rho_min; region treated as curb-free");
  }
  PathGraph graph;
  graph.v1 = pd.v1;
  graph.bounds = step;
  const double width = std::max(1e-9, std::abs(step.dx * pd.v1[0]) + std::abs(step.dy * pd.v1[1]) +
                                          std::abs(step.dz * pd.v1[2]));
  const auto along = [&](const VoxelIndex& v) { return vdot(vsub(as_vec(v), pd.mean), pd.v1); };
  double t0 = kInf, t1 = -kInf;
  for (const auto& v : hypothesis) {
    t0 = std::min(t0, along(v));
    t1 = std::max(t1, along(v));
  }
  const auto rank = [&](double t) { return static_cast<int>(std::floor((t - t0) / width + 1e-9)); };
  const int n_slices = rank(t1) + 1;
  graph.slices.assign(static_cast<std::size_t>(n_slices), {});

  const auto offset = [&](const VoxelIndex& v) {
    const auto d = vsub(as_vec(v), pd.mean);
    const double t = vdot(d, pd.v1);
    return Vec3{d[0] - t * pd.v1[0], d[1] - t * pd.v1[1], d[2] - t * pd.v1[2]};
  };
  // Band centre: per-axis median offset, so side branches of a component do
  // not drag it off the curb.
  Vec3 centre{0, 0, 0};
  for (int a = 0; a < 3; ++a) {
    std::vector<double> w;
    for (const auto& v : hypothesis) w.push_back(offset(v)[static_cast<std::size_t>(a)]);
    std::nth_element(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(w.size() / 2), w.end());
    centre[static_cast<std::size_t>(a)] = w[w.size() / 2];
  }
  const auto in_band = [&](const VoxelIndex& v) { return vnorm(vsub(offset(v), centre)) <= lateral_band; };

  for_each_occupied(grid, grown_box(hypothesis, margin, region), [&](const VoxelIndex& v) {
    const double t = along(v);
    if (t < t0 - 1e-9 || t > t1 + 1e-9 || !in_band(v)) return;
    const int s = std::clamp(rank(t), 0, n_slices - 1);
    const auto kind = candidates.contains(v) ? NodeKind::candidate : NodeKind::non_candidate;
    graph.slices[static_cast<std::size_t>(s)].push_back({v, kind, s});
  });
  // Hypothesis voxels lie in their own box, but keep them even if a caller
  // passes voxels outside the grid.
  for (const auto& v : hypothesis) {
    if (grid.contains(v)) continue;
    const int s = std::clamp(rank(along(v)), 0, n_slices - 1);
    graph.slices[static_cast<std::size_t>(s)].push_back({v, NodeKind::candidate, s});
  }

  // Hole ends anchor on the node nearest the band centreline, candidates
  // first; a slice mean is dragged off the curb by flat neighbours.
  const auto anchor = [&](const std::vector<PathNode>& slice) {
    const PathNode* best = nullptr;
    double best_d = kInf;
    for (const bool only_candidates : {true, false}) {
      for (const auto& node : slice) {
        if (only_candidates && node.kind != NodeKind::candidate) continue;
        const double d = vnorm(vsub(offset(node.position), centre));
        if (d < best_d) best_d = d, best = &node;
      }
      if (best) break;
    }
    return as_vec(best->position);
  };
  // The band may empty the end slices; the path starts and ends on real nodes.
  while (!graph.slices.empty() && graph.slices.back().empty()) graph.slices.pop_back();
  const auto first = std::find_if(graph.slices.begin(), graph.slices.end(), [](const auto& sl) { return !sl.empty(); });
  const auto shift = static_cast<int>(first - graph.slices.begin());
  graph.slices.erase(graph.slices.begin(), first);
  for (auto& slice : graph.slices)
    for (auto& node : slice) node.slice -= shift;
  const int kept = static_cast<int>(graph.slices.size());

  int prev = -1;
  for (int s = 0; s < kept; ++s) {
    if (graph.slices[static_cast<std::size_t>(s)].empty()) continue;
    if (prev >= 0 && s - prev > 1) {
      const auto a = anchor(graph.slices[static_cast<std::size_t>(prev)]);
      const auto b = anchor(graph.slices[static_cast<std::size_t>(s)]);
      for (int e = prev + 1; e < s; ++e) {
        const double f = static_cast<double>(e - prev) / (s - prev);
        const VoxelIndex v{static_cast<int>(std::lround(a[0] + f * (b[0] - a[0]))),
                           static_cast<int>(std::lround(a[1] + f * (b[1] - a[1]))),
                           static_cast<int>(std::lround(a[2] + f * (b[2] - a[2])))};
        NodeKind kind = NodeKind::virtual_node;
        if (grid.contains(v)) kind = candidates.contains(v) ? NodeKind::candidate : NodeKind::non_candidate;
        graph.slices[static_cast<std::size_t>(e)].push_back({v, kind, e});
      }
    }
    prev = s;
  }
  for (auto& slice : graph.slices)
    std::sort(slice.begin(), slice.end(), [](const auto& x, const auto& y) { return x.position < y.position; });
  return graph;
}

CurbPath solve_lcpm(const PathGraph& graph, const PenaltySchedule& schedule, double rho) {
  if (graph.slices.empty()) throw ValidationError("solve_lcpm: no slices");
  for (const auto& slice : graph.slices)
    if (slice.empty()) throw ValidationError("solve_lcpm: empty slice");
  const double ps = schedule.penalty_s(rho);

  std::vector<std::vector<double>> cost(graph.slices.size());
  std::vector<std::vector<int>> pred(graph.slices.size());
  for (std::size_t s = 0; s < graph.slices.size(); ++s) {
    const auto& nodes = graph.slices[s];
    cost[s].assign(nodes.size(), kInf);
    pred[s].assign(nodes.size(), -1);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const double data = schedule.data_cost(nodes[i].kind, rho);
      if (s == 0) {
        cost[s][i] = data;
        continue;
      }
      const auto& prev = graph.slices[s - 1];
      for (std::size_t j = 0; j < prev.size(); ++j) {
        if (cost[s - 1][j] == kInf || !transition_allowed(graph, prev[j].position, nodes[i].position)) continue;
        const double c = cost[s - 1][j] + data + ps * lattice_distance(prev[j].position, nodes[i].position);
        if (c < cost[s][i]) {
          cost[s][i] = c;
          pred[s][i] = static_cast<int>(j);
        }
      }
    }
    if (std::all_of(cost[s].begin(), cost[s].end(), [](double c) { return c == kInf; })) {
      throw InfeasiblePathError("solve_lcpm: slice " + std::to_string(s) +
                                " unreachable within the shift bounds");
    }
  }
  const auto& last = cost.back();
  auto i = static_cast<int>(std::min_element(last.begin(), last.end()) - last.begin());
  CurbPath path;
  path.cost = last[static_cast<std::size_t>(i)];
  path.nodes.resize(graph.slices.size());
  for (std::size_t s = graph.slices.size(); s-- > 0;) {
    path.nodes[s] = graph.slices[s][static_cast<std::size_t>(i)];
    i = pred[s][static_cast<std::size_t>(i)];
  }
  return path;
}

RefineResult refine_scene(const VoxelGrid& grid, const CandidateSet& candidates, const RefineOptions& options) {
  options.schedule.validate();
  for (int e : options.region_extents)
    if (e < 1) throw ValidationError("region extents must be positive");
  RefineResult result;
  if (grid.occupied() == 0 || candidates.size() == 0) return result;

  VoxelIndex lo = grid.cells().begin()->first;
  for (const auto& [v, n] : grid.cells()) lo = {std::min(lo.i, v.i), std::min(lo.j, v.j), std::min(lo.k, v.k)};
  const auto& ext = options.region_extents;
  const auto tile = [&](const VoxelIndex& v) {
    const auto f = [](int x, int e) { return static_cast<int>(std::floor(static_cast<double>(x) / e)); };
    return VoxelIndex{f(v.i - lo.i, ext[0]), f(v.j - lo.j, ext[1]), f(v.k - lo.k, ext[2])};
  };
  std::map<VoxelIndex, std::pair<std::size_t, std::vector<VoxelIndex>>> tiles;
  for (const auto& [v, n] : grid.cells()) tiles[tile(v)].first++;
  for (const auto& v : candidates.candidates)
    if (grid.contains(v)) tiles[tile(v)].second.push_back(v);

  struct Job {
    SearchRegion region;
    std::size_t id;
    double rho;
    std::vector<VoxelIndex> cands;
  };
  std::vector<Job> jobs;
  std::size_t id = 0;
  for (auto& [t, entry] : tiles) {
    auto& [occupied, cands] = entry;
    SearchRegion region{{lo.i + t.i * ext[0], lo.j + t.j * ext[1], lo.k + t.k * ext[2]}, ext};
    const double rho = static_cast<double>(cands.size()) / static_cast<double>(occupied);
    jobs.push_back({region, id++, rho, std::move(cands)});
  }

  std::vector<RegionOutput> outputs(jobs.size());
  const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(jobs.size())));
  const auto work = [&](unsigned t) {
    for (std::size_t j = t; j < jobs.size(); j += threads) {
      outputs[j] = process_region(jobs[j].region, jobs[j].id, jobs[j].rho, std::move(jobs[j].cands), grid,
                                  candidates, options);
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
  }

  std::vector<std::vector<Point3>> lines;
  for (auto& out : outputs) {
    for (auto& path : out.paths) {
      std::vector<Point3> line;
      for (const auto& node : path.nodes) line.push_back(grid.center(node.position));
      lines.push_back(std::move(line));
      result.paths.push_back(std::move(path));
    }
    result.reports.insert(result.reports.end(), out.reports.begin(), out.reports.end());
  }
  auto assembled = assemble(std::move(lines), grid.voxel_size(), options);
  for (std::size_t n = 0; n < assembled.size(); ++n) {
    if (assembled[n].size() < 2) continue;
    result.curbs.push_back({"curb_" + std::to_string(result.curbs.size()), std::move(assembled[n]), false});
  }
  return result;
}

void write_region_csv(std::span<const RegionReport> reports, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(10);
  out << "region_id,rho,q,s1,s2,s3,step,cost\n";
  for (const auto& r : reports) {
    out << r.region_id << ',' << r.rho << ',' << r.q << ',' << r.pd.s1 << ',' << r.pd.s2 << ',' << r.pd.s3 << ','
        << r.step.dx << 'x' << r.step.dy << 'x' << r.step.dz << ',' << r.cost << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::optional<Polyline3> link_intersection(const Polyline3& a, const Polyline3& b, double max_gap, double spacing) {
  if (a.vertices.size() < 2 || b.vertices.size() < 2 || !(spacing > 0.0)) return std::nullopt;
  const Point3 p0 = a.vertices.back();
  const Point3 p2 = b.vertices.front();
  const double gap = distance(p0, p2);
  if (!(gap <= max_gap) || gap == 0.0) return std::nullopt;
  const Point3 ta = tangent_out(a.vertices, true);
  const Point3 tb = -1.0 * tangent_out(b.vertices, false);  // direction of travel into b
  if (angle_deg(ta, tb) <= 45.0) return std::nullopt;

  // Closest points of the two tangent lines p0 + s ta and p2 + u tb. A corner
  // needs them to meet ahead of a and before b; U-turns across a road don't.
  const double aa = dot(ta, ta), bb = dot(tb, tb), ab = dot(ta, tb);
  const double denom = aa * bb - ab * ab;
  if (!(denom > 1e-9 * aa * bb)) return std::nullopt;
  const auto w = p0 - p2;
  const double s = (ab * dot(tb, w) - bb * dot(ta, w)) / denom;
  const double u = (aa * dot(tb, w) - ab * dot(ta, w)) / denom;
  if (!(s > 0.0 && u < 0.0)) return std::nullopt;
  const Point3 control = 0.5 * ((p0 + s * ta) + (p2 + u * tb));
  const double approx = distance(p0, control) + distance(control, p2);
  const int n = std::max(1, static_cast<int>(std::ceil(approx / spacing)));
  Polyline3 link;
  link.id = a.id + "+" + b.id;
  for (int i = 0; i <= n; ++i) {
    const double t = static_cast<double>(i) / n;
    const double w0 = (1 - t) * (1 - t), w1 = 2 * (1 - t) * t, w2 = t * t;
    link.vertices.push_back(w0 * p0 + w1 * control + w2 * p2);
  }
  link.vertices.front() = p0;
  link.vertices.back() = p2;
  return link;
}

}  // namespace curbx
