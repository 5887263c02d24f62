#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "curbx/error.hpp"
#include "curbx/lcpm.hpp"
#include "doctest.h"
#include "lcpm_oracle.hpp"

using namespace curbx;
using curbx::testing::exhaustive_best;
using curbx::testing::random_graph;

namespace {

CandidateSet make_set(std::vector<VoxelIndex> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return {std::move(v)};
}

// largest eigenvector of the scatter matrix by power iteration
Vec3 power_iteration(std::span<const VoxelIndex> pts) {
  double m[3] = {0, 0, 0};
  for (const auto& p : pts) m[0] += p.i, m[1] += p.j, m[2] += p.k;
  for (auto& x : m) x /= double(pts.size());
  double c[3][3] = {};
  for (const auto& p : pts) {
    const double d[3] = {p.i - m[0], p.j - m[1], p.k - m[2]};
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) c[a][b] += d[a] * d[b];
  }
  Vec3 v{0.3, 0.5, 0.7};
  for (int it = 0; it < 5000; ++it) {
    Vec3 w{0, 0, 0};
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) w[a] += c[a][b] * v[b];
    const double n = std::sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]);
    for (int a = 0; a < 3; ++a) v[a] = w[a] / n;
  }
  return v;
}

// Road plane at k=0, sidewalks at k=4 beyond j=left and j=right, vertical
// faces between. Candidates hug the faces.
struct CurbGrid {
  VoxelGrid grid{{0, 0, 0}, 0.04};
  CandidateSet candidates;
};

CurbGrid two_curb_grid(int length, int left = 20, int right = 60, bool with_right = true) {
  CurbGrid g;
  std::vector<VoxelIndex> cand;
  for (int i = 0; i < length; ++i) {
    for (int j = left - 10; j < left; ++j) g.grid.add({i, j, 4});
    for (int j = left; j < right; ++j) g.grid.add({i, j, 0});
    for (int k = 1; k < 4; ++k) g.grid.add({i, left - 1, k});
    for (int k = 1; k <= 4; ++k) cand.push_back({i, left - 1, k});
    cand.push_back({i, left, 0});
    if (with_right) {
      for (int j = right; j < right + 10; ++j) g.grid.add({i, j, 4});
      for (int k = 1; k < 4; ++k) g.grid.add({i, right, k});
      for (int k = 1; k <= 4; ++k) cand.push_back({i, right, k});
      cand.push_back({i, right - 1, 0});
    } else {
      for (int j = right; j < right + 10; ++j) g.grid.add({i, j, 0});
    }
  }
  g.candidates = make_set(cand);
  return g;
}

bool has_virtual(const CurbPath& p) {
  return std::any_of(p.nodes.begin(), p.nodes.end(), [](const auto& n) { return n.kind == NodeKind::virtual_node; });
}

}  // namespace

TEST_CASE("principal direction of collinear and diagonal rows") {
  std::vector<VoxelIndex> row;
  for (int i = 0; i < 10; ++i) row.push_back({i, 3, 2});
  const auto pd = principal_direction(row);
  CHECK(pd.v1[0] == doctest::Approx(1.0));
  CHECK(pd.s2 == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(pd.s3 == doctest::Approx(0.0).epsilon(1e-12));

  std::vector<VoxelIndex> diag;
  for (int i = 0; i < 10; ++i) diag.push_back({i, i, 0});
  const auto pdd = principal_direction(diag);
  CHECK(pdd.v1[0] == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(pdd.v1[1] == doctest::Approx(1.0 / std::sqrt(2.0)));

  CHECK_THROWS_AS(principal_direction(std::vector<VoxelIndex>{{1, 1, 1}}), ValidationError);
  CHECK_THROWS_AS(principal_direction(std::vector<VoxelIndex>(4, {1, 1, 1})), ValidationError);
}

TEST_CASE("principal direction matches power iteration on random clusters") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const double sx = 2.0 + 8.0 * std::abs(n(rng)), sy = 1.0, sz = 0.5;
    std::vector<VoxelIndex> pts;
    for (int q = 0; q < 200; ++q)
      pts.push_back({int(std::lround(sx * n(rng))), int(std::lround(sy * n(rng) + 0.3 * sx * n(rng))),
                     int(std::lround(sz * n(rng)))});
    const auto pd = principal_direction(pts);
    const auto ref = power_iteration(pts);
    const double c = std::abs(pd.v1[0] * ref[0] + pd.v1[1] * ref[1] + pd.v1[2] * ref[2]);
    CHECK(std::acos(std::min(1.0, c)) < 1e-6);
    CHECK(std::hypot(pd.v1[0], pd.v1[1], pd.v1[2]) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pd.s1 >= pd.s2);
    CHECK(pd.s2 >= pd.s3);
    CHECK(pd.s3 >= 0.0);
    const auto big = std::max_element(pd.v1.begin(), pd.v1.end(), [](double a, double b) { return std::abs(a) < std::abs(b); });
    CHECK(*big > 0.0);
  }
}

TEST_CASE("step size examples") {
  PrincipalDirection linear;
  linear.s1 = 5.0;
  CHECK(step_size(linear, {100, 100, 100}) == StepSize{1, 1, 1});
  PrincipalDirection iso;
  iso.s1 = iso.s2 = iso.s3 = 2.0;
  CHECK(step_size(iso, {100, 100, 100}) == StepSize{42, 42, 42});
  CHECK(step_size(iso, {10, 10, 10}) == StepSize{4, 4, 4});
  CHECK_THROWS_AS(step_size(PrincipalDirection{}, {100, 100, 100}), ValidationError);
}

TEST_CASE("penalty schedule ramps and validation") {
  const PenaltySchedule s;
  CHECK(s.penalty_d(0.0) == 50.0);
  CHECK(s.penalty_d(0.17) == doctest::Approx(275.0));
  CHECK(s.penalty_d(0.9) == 500.0);
  CHECK(s.penalty_s(0.0) == 500.0);
  CHECK(s.penalty_s(0.9) == 50.0);
  for (double r = 0.0; r < 1.0; r += 0.01) {
    CHECK(s.penalty_d(r + 0.01) >= s.penalty_d(r));
    CHECK(s.penalty_s(r + 0.01) <= s.penalty_s(r));
    CHECK(s.penalty_v >= s.penalty_d(r));
  }
  CHECK(s.data_cost(NodeKind::candidate, 0.2) == 0.0);
  CHECK(s.data_cost(NodeKind::virtual_node, 0.2) == 1000.0);
  s.validate();
  auto bad = s;
  bad.penalty_v = 400.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = s;
  bad.penalty_d_high = 10.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("single node path costs nothing") {
  PathGraph g;
  g.slices = {{{{0, 0, 0}, NodeKind::candidate, 0}}};
  const auto p = solve_lcpm(g, {}, 0.2);
  CHECK(p.nodes.size() == 1);
  CHECK(p.cost == 0.0);
  CHECK_THROWS_AS(solve_lcpm(PathGraph{}, {}, 0.2), ValidationError);
}

TEST_CASE("3x3 hand graph equals the 27-path enumeration") {
  PathGraph g;
  g.bounds = {2, 2, 2};
  const NodeKind C = NodeKind::candidate, N = NodeKind::non_candidate, V = NodeKind::virtual_node;
  g.slices = {{{{0, -1, 0}, C, 0}, {{0, 0, 0}, N, 0}, {{0, 1, 0}, C, 0}},
              {{{1, -1, 0}, V, 1}, {{1, 0, 0}, N, 1}, {{1, 2, 0}, C, 1}},
              {{{2, -1, 1}, C, 2}, {{2, 0, 0}, C, 2}, {{2, 1, 0}, N, 2}}};
  const PenaltySchedule s;
  for (const double rho : {0.05, 0.2, 0.5}) {
    const auto best = exhaustive_best(g, s, rho);
    REQUIRE(best);
    const auto p = solve_lcpm(g, s, rho);
    CHECK(p.cost == doctest::Approx(best->cost).epsilon(1e-12));
    CHECK(path_cost(p.nodes, s, rho) == doctest::Approx(p.cost).epsilon(1e-12));
  }
}

TEST_CASE("DP equals exhaustive enumeration on random graphs") {
  std::mt19937_64 rng(99);
  const PenaltySchedule s;
  std::uniform_real_distribution<double> ur(0.0, 0.5);
  int feasible = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const auto g = random_graph(rng);
    const double rho = ur(rng);
    const auto best = exhaustive_best(g, s, rho);
    if (!best) {
      CHECK_THROWS_AS(solve_lcpm(g, s, rho), InfeasiblePathError);
      continue;
    }
    ++feasible;
    const auto p = solve_lcpm(g, s, rho);
    CHECK(std::abs(p.cost - best->cost) <= 1e-9);
    REQUIRE(p.nodes.size() == g.slices.size());
    for (std::size_t i = 0; i < p.nodes.size(); ++i) {
      CHECK(p.nodes[i].slice == int(i));
      if (i > 0) CHECK(transition_allowed(g, p.nodes[i - 1].position, p.nodes[i].position));
    }
    CHECK(std::abs(path_cost(p.nodes, s, rho) - p.cost) <= 1e-9);
  }
  CHECK(feasible > 100);
}

TEST_CASE("straight candidate row is the optimal path") {
  PathGraph g;
  g.bounds = {3, 3, 3};
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> lat(-3, 3);
  for (int s = 0; s < 12; ++s) {
    std::vector<PathNode> slice{{{s, 0, 0}, NodeKind::candidate, s}};
    for (int q = 0; q < 3; ++q) slice.push_back({{s, lat(rng), lat(rng)}, NodeKind::candidate, s});
    g.slices.push_back(slice);
  }
  const auto p = solve_lcpm(g, {}, 0.2);
  for (const auto& n : p.nodes) CHECK((n.position.j == 0 && n.position.k == 0));
}

TEST_CASE("virtual nodes are avoided when a candidate row exists") {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> lat(-3, 3), coin(0, 1);
  for (int trial = 0; trial < 100; ++trial) {
    PathGraph g;
    g.bounds = {3, 3, 3};
    for (int s = 0; s < 6; ++s) {
      std::vector<PathNode> slice{{{s, 0, 0}, NodeKind::candidate, s}};
      for (int q = 0; q < 3; ++q)
        slice.push_back({{s, lat(rng), lat(rng)}, coin(rng) ? NodeKind::virtual_node : NodeKind::non_candidate, s});
      g.slices.push_back(slice);
    }
    CHECK_FALSE(has_virtual(solve_lcpm(g, {}, 0.1)));
  }
}

TEST_CASE("raising penaltyS never lengthens the optimal path") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 150; ++trial) {
    const auto g = random_graph(rng, 6, 4);
    double prev_len = std::numeric_limits<double>::infinity();
    for (const double ps : {0.0, 1.0, 10.0, 100.0, 1000.0}) {
      PenaltySchedule s;
      s.penalty_s_low = s.penalty_s_high = ps;
      const auto best = exhaustive_best(g, s, 0.2);
      if (!best) break;
      const auto p = solve_lcpm(g, s, 0.2);
      double len = 0.0;
      for (std::size_t i = 1; i < p.nodes.size(); ++i)
        len += curbx::testing::lattice_distance(p.nodes[i - 1].position, p.nodes[i].position);
      CHECK(len <= prev_len + 1e-9);
      prev_len = len;
    }
  }
}

TEST_CASE("unreachable slice is reported") {
  PathGraph g;
  g.bounds = {1, 1, 1};
  g.slices = {{{{0, 0, 0}, NodeKind::candidate, 0}}, {{{1, 9, 0}, NodeKind::candidate, 1}}};
  CHECK_THROWS_AS(solve_lcpm(g, {}, 0.2), InfeasiblePathError);
}

TEST_CASE("path graph over an unbroken row has one candidate per slice") {
  VoxelGrid grid({0, 0, 0}, 0.04);
  std::vector<VoxelIndex> row;
  for (int i = 0; i < 40; ++i) {
    grid.add({i, 10, 5});
    row.push_back({i, 10, 5});
  }
  const auto cands = make_set(row);
  const auto pd = principal_direction(row);
  const auto step = step_size(pd, {100, 100, 100});
  const auto g = build_path_graph({}, grid, cands, row, pd, step, 0.04);
  CHECK(g.slices.size() == 40);
  for (const auto& s : g.slices) {
    REQUIRE(s.size() == 1);
    CHECK(s[0].kind == NodeKind::candidate);
  }
}

TEST_CASE("holes are filled with interpolated virtual nodes") {
  for (const int hole : {5, 25}) {
    VoxelGrid grid({0, 0, 0}, 0.04);
    std::vector<VoxelIndex> row;
    for (int i = 0; i < 100; ++i) {
      if (i >= 40 && i < 40 + hole) continue;
      grid.add({i, 10, 5});
      row.push_back({i, 10, 5});
    }
    const auto cands = make_set(row);
    const auto pd = principal_direction(row);
    const auto g = build_path_graph({}, grid, cands, row, pd, step_size(pd, {100, 100, 100}), 0.04);
    REQUIRE(g.slices.size() == 100);
    int virt = 0;
    for (const auto& s : g.slices)
      for (const auto& n : s) virt += n.kind == NodeKind::virtual_node;
    CHECK(virt == hole);
    const auto p = solve_lcpm(g, {}, 1.0);
    REQUIRE(p.nodes.size() == 100);
    for (const auto& n : p.nodes) {
      CHECK(std::abs(n.position.j - 10) <= 1);
      CHECK(std::abs(n.position.k - 5) <= 1);
    }
  }
}

TEST_CASE("slices partition the nodes and hold every hypothesis voxel once") {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> ui(0, 49), uj(0, 6), uk(0, 3), coin(0, 2);
  for (int trial = 0; trial < 20; ++trial) {
    VoxelGrid grid({0, 0, 0}, 0.04);
    std::vector<VoxelIndex> cand;
    for (int q = 0; q < 400; ++q) {
      const VoxelIndex v{ui(rng), uj(rng) + ui(rng) / 5, uk(rng)};
      grid.add(v);
      if (coin(rng) == 0) cand.push_back(v);
    }
    const auto set = make_set(cand);
    const auto pd = principal_direction(set.candidates);
    const auto step = step_size(pd, {100, 100, 100});
    const auto g = build_path_graph({}, grid, set, set.candidates, pd, step, 0.04);
    std::map<VoxelIndex, int> seen;
    for (std::size_t s = 0; s < g.slices.size(); ++s) {
      CHECK_FALSE(g.slices[s].empty());
      for (const auto& n : g.slices[s]) {
        CHECK(n.slice == int(s));
        ++seen[n.position];
        if (n.kind == NodeKind::candidate) CHECK(set.contains(n.position));
        if (n.kind == NodeKind::non_candidate) CHECK((grid.contains(n.position) && !set.contains(n.position)));
        if (n.kind == NodeKind::virtual_node) CHECK_FALSE(grid.contains(n.position));
      }
    }
    for (const auto& [v, n] : seen) CHECK(n == 1);
    for (const auto& v : set.candidates) CHECK(seen.count(v) == 1);
  }
}

TEST_CASE("lateral band trims far nodes and empty end slices") {
  VoxelGrid grid({0, 0, 0}, 0.04);
  std::vector<VoxelIndex> row;
  for (int i = 0; i < 30; ++i) {
    grid.add({i, 10, 5});
    row.push_back({i, 10, 5});
    grid.add({i, 11, 5});  // within band
  }
  grid.add({31, 16, 5});  // beyond the row's end and off axis: not a node
  grid.add({15, 16, 5});
  const auto cands = make_set(row);
  const auto pd = principal_direction(row);
  const auto g = build_path_graph({}, grid, cands, row, pd, step_size(pd, {100, 100, 100}), 0.0, 8, 3.0);
  CHECK(g.slices.size() == 30);
  for (const auto& s : g.slices)
    for (const auto& n : s) CHECK(std::abs(n.position.j - 10) <= 1);
}

TEST_CASE("graph below rho_min is rejected") {
  VoxelGrid grid({0, 0, 0}, 0.04);
  std::vector<VoxelIndex> row;
  for (int i = 0; i < 100; ++i)
    for (int j = 0; j < 30; ++j) grid.add({i, j, 0});
  for (int i = 0; i < 100; i += 10) row.push_back({i, 3, 0});
  const auto cands = make_set(row);
  const auto pd = principal_direction(row);
  CHECK(candidate_fraction({}, grid, cands) == doctest::Approx(10.0 / 3000.0));
  CHECK_THROWS_AS(build_path_graph({}, grid, cands, row, pd, step_size(pd, {100, 100, 100}), 0.04), ValidationError);
}

TEST_CASE("refine: one curb over three regions becomes one polyline") {
  const auto g = two_curb_grid(300, 20, 60, false);
  const auto r = refine_scene(g.grid, g.candidates);
  REQUIRE(r.curbs.size() == 1);
  CHECK(r.curbs[0].length() > 11.0);
  for (const auto& v : r.curbs[0].vertices) CHECK(std::abs(v.y - 19.5 * 0.04) < 0.1);
}

TEST_CASE("refine: two parallel curbs stay separate") {
  const auto g = two_curb_grid(150);
  const auto r = refine_scene(g.grid, g.candidates);
  REQUIRE(r.curbs.size() == 2);
  std::set<int> sides;
  for (const auto& c : r.curbs) {
    const double y = c.vertices.front().y;
    sides.insert(y < 1.6 ? 0 : 1);
    for (const auto& v : c.vertices) CHECK(std::abs(v.y - y) < 0.1);
    CHECK(c.length() > 5.0);
  }
  CHECK(sides.size() == 2);
}

TEST_CASE("refine: sparse candidates everywhere give no curbs") {
  auto g = two_curb_grid(300);
  std::vector<VoxelIndex> few;
  for (int i = 0; i < 300; i += 50) few.push_back({i, 19, 2});
  const auto r = refine_scene(g.grid, make_set(few));
  CHECK(r.curbs.empty());
  CHECK(r.paths.empty());
}

TEST_CASE("refine output is deterministic across thread counts") {
  const auto g = two_curb_grid(250);
  RefineOptions one, four;
  four.threads = 4;
  const auto a = refine_scene(g.grid, g.candidates, one);
  const auto b = refine_scene(g.grid, g.candidates, four);
  REQUIRE(a.curbs.size() == b.curbs.size());
  for (std::size_t i = 0; i < a.curbs.size(); ++i) CHECK(a.curbs[i].vertices == b.curbs[i].vertices);
}

TEST_CASE("intersection link: perpendicular curbs get a quadratic arc") {
  const Polyline3 a{"a", {{0, 0, 0}, {5, 0, 0}, {10, 0, 0}}, false};
  const Polyline3 b{"b", {{12, 2, 0}, {12, 7, 0}, {12, 12, 0}}, false};
  const auto link = link_intersection(a, b, 4.0, 0.04);
  REQUIRE(link);
  CHECK(link->vertices.front() == a.vertices.back());
  CHECK(link->vertices.back() == b.vertices.front());
  // control point (12,0): x(t) = 10 + 4t - 2t^2, y(t) = 2t^2
  for (const auto& v : link->vertices) {
    const double t = std::sqrt(v.y / 2.0);
    CHECK(v.x == doctest::Approx(10.0 + 4.0 * t - 2.0 * t * t).epsilon(1e-9));
  }
  for (std::size_t i = 1; i < link->vertices.size(); ++i)
    CHECK(distance(link->vertices[i - 1], link->vertices[i]) < 0.05);
}

TEST_CASE("intersection link: straight, U-turn and distant ends are rejected") {
  const Polyline3 a{"a", {{0, 0, 0}, {10, 0, 0}}, false};
  const Polyline3 ahead{"b", {{12, 0, 0}, {20, 0, 0}}, false};
  const Polyline3 u_turn{"b", {{10, 2, 0}, {0, 2, 0}}, false};
  const Polyline3 far{"b", {{20, 8, 0}, {20, 20, 0}}, false};
  const Polyline3 behind{"b", {{8, 2, 0}, {8, 10, 0}}, false};  // corner would sit behind a's end
  CHECK_FALSE(link_intersection(a, ahead, 4.0, 0.1));
  CHECK_FALSE(link_intersection(a, u_turn, 4.0, 0.1));
  CHECK_FALSE(link_intersection(a, far, 4.0, 0.1));
  CHECK_FALSE(link_intersection(a, behind, 4.0, 0.1));
}
