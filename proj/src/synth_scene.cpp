#include "curbx/synth_scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <iterator>
#include <numeric>
#include <random>
#include <tuple>
#include <unordered_map>

#include "curbx/error.hpp"

namespace curbx {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kArcStep = 0.02;  // max arc length between truth vertices, meters

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

// One piece of curb-top edge in the xy plane. normal points towards the road.
struct EdgePiece {
  bool is_arc = false;
  bool along_x = false;
  Vec2 a, b, normal;                                // segment
  Vec2 center;                                      // arc
  double radius = 0.0, theta0 = 0.0, theta1 = 0.0;  // arc, road outside the circle
  std::string id;

  double length() const {
    return is_arc ? radius * std::abs(theta1 - theta0) : std::hypot(b.x - a.x, b.y - a.y);
  }
  // Position and road-facing normal at arc-length fraction t in [0, 1].
  std::pair<Vec2, Vec2> at(double t) const {
    if (!is_arc) return {{a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)}, normal};
    const double th = theta0 + t * (theta1 - theta0);
    const Vec2 n{std::cos(th), std::sin(th)};
    return {{center.x + radius * n.x, center.y + radius * n.y}, n};
  }
};

class SceneGeometry {
 public:
  explicit SceneGeometry(const SceneSpec& s)
      : spec_(s),
        half_road_(s.road_width / 2.0),
        half_scene_(s.road_width / 2.0 + s.sidewalk_width),
        corner_x_(s.road_length / 2.0 - s.road_width / 2.0),
        bevel_(s.curb_profile == CurbProfile::beveled ? s.curb_height * std::tan(kBevelDeg * kDeg) : 0.0) {}

  double half_scene() const { return half_scene_; }
  double bevel() const { return bevel_; }

  // Signed distance to the curb-top edge, positive on the sidewalk side.
  double depth(double x, double y) const {
    const double yy = std::abs(y);
    if (!spec_.intersection) return yy - half_road_;
    const double xx = x < spec_.road_length / 2.0 ? x : spec_.road_length - x;
    const double r = kFilletRadius;
    if (xx > corner_x_ - r && yy < half_road_ + r) {
      return r - std::hypot(xx - (corner_x_ - r), yy - (half_road_ + r));
    }
    return std::min(yy - half_road_, corner_x_ - xx);
  }

  bool in_ramp(double x) const {
    return std::any_of(spec_.ramps.begin(), spec_.ramps.end(),
                       [&](const RoadInterval& r) { return x >= r.start && x <= r.start + r.length; });
  }

  bool in_occlusion(double x, double y) const {
    if (std::abs(depth(x, y)) > kOcclusionMargin) return false;
    return std::any_of(spec_.occlusions.begin(), spec_.occlusions.end(),
                       [&](const RoadInterval& r) { return x >= r.start && x <= r.start + r.length; });
  }

  double density_multiplier(double y) const {
    if (!spec_.density_gradient) return 1.0;
    const auto& g = *spec_.density_gradient;
    return g.left + (g.right - g.left) * (y + half_scene_) / (2.0 * half_scene_);
  }

  double max_multiplier() const {
    if (!spec_.density_gradient) return 1.0;
    return std::max(spec_.density_gradient->left, spec_.density_gradient->right);
  }

  std::vector<EdgePiece> edges() const {
    std::vector<EdgePiece> out;
    const double L = spec_.road_length;
    for (const double side : {-1.0, 1.0}) {
      const std::string tag = side > 0 ? "R" : "L";
      std::vector<EdgePiece> local;
      if (!spec_.intersection) {
        EdgePiece p;
        p.along_x = true;
        p.a = {0.0, half_road_};
        p.b = {L, half_road_};
        p.normal = {0.0, -1.0};
        local.push_back(p);
      } else {
        const double r = kFilletRadius;
        for (const bool mirror : {false, true}) {
          const auto mx = [&](Vec2 v) { return mirror ? Vec2{L - v.x, v.y} : v; };
          const auto mn = [&](Vec2 v) { return mirror ? Vec2{-v.x, v.y} : v; };
          EdgePiece straight;
          straight.along_x = true;
          straight.a = mx({0.0, half_road_});
          straight.b = mx({corner_x_ - r, half_road_});
          straight.normal = {0.0, -1.0};
          EdgePiece arc;
          arc.is_arc = true;
          arc.center = mx({corner_x_ - r, half_road_ + r});
          arc.radius = r;
          arc.theta0 = -std::numbers::pi / 2.0;
          arc.theta1 = mirror ? -std::numbers::pi : 0.0;
          EdgePiece leg;
          leg.a = mx({corner_x_, half_road_ + r});
          leg.b = mx({corner_x_, half_scene_});
          leg.normal = mn({1.0, 0.0});
          arc.id = "INT_";
          leg.id = "INT_";
          local.push_back(straight);
          local.push_back(arc);
          local.push_back(leg);
        }
      }
      for (auto& p : local) {
        if (side < 0) {
          p.a.y = -p.a.y;
          p.b.y = -p.b.y;
          p.normal.y = -p.normal.y;
          p.center.y = -p.center.y;
          p.theta0 = -p.theta0;
          p.theta1 = -p.theta1;
        }
        if (p.id.empty()) p.id = "SL_";
        p.id += tag;
      }
      for (auto& p : split_by_ramps(local)) out.push_back(std::move(p));
    }
    std::unordered_map<std::string, int> counter;
    for (auto& p : out) p.id += std::to_string(counter[p.id]++);
    return out;
  }

 private:
  std::vector<EdgePiece> split_by_ramps(const std::vector<EdgePiece>& pieces) const {
    std::vector<EdgePiece> out;
    for (const auto& p : pieces) {
      if (!p.along_x || spec_.ramps.empty()) {
        out.push_back(p);
        continue;
      }
      double lo = std::min(p.a.x, p.b.x);
      const double hi = std::max(p.a.x, p.b.x);
      auto ramps = spec_.ramps;
      std::sort(ramps.begin(), ramps.end(), [](const auto& u, const auto& v) { return u.start < v.start; });
      for (const auto& r : ramps) {
        const double r0 = r.start, r1 = r.start + r.length;
        if (r1 <= lo || r0 >= hi) continue;
        if (r0 > lo) {
          EdgePiece q = p;
          q.a.x = lo;
          q.b.x = r0;
          out.push_back(q);
        }
        lo = std::max(lo, r1);
      }
      if (hi > lo) {
        EdgePiece q = p;
        q.a.x = lo;
        q.b.x = hi;
        out.push_back(q);
      }
    }
    return out;
  }

  const SceneSpec& spec_;
  double half_road_;
  double half_scene_;
  double corner_x_;
  double bevel_;
};

Polyline3 truth_line(const EdgePiece& piece, double z) {
  Polyline3 line;
  line.id = piece.id;
  const int n = piece.is_arc ? std::max(2, static_cast<int>(std::ceil(piece.length() / kArcStep))) : 1;
  for (int s = 0; s <= n; ++s) {
    const auto [p, nrm] = piece.at(static_cast<double>(s) / n);
    line.vertices.push_back({p.x, p.y, z});
  }
  return line;
}

void rotate_right_side(Point3& p, double cos_t, double sin_t) {
  const double y = p.y * cos_t - p.z * sin_t;
  const double z = p.y * sin_t + p.z * cos_t;
  p.y = y;
  p.z = z;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

SyntheticScene subset(const SyntheticScene& scene, const std::vector<std::size_t>& keep) {
  std::vector<Point3> pts;
  std::vector<SurfaceKind> labels;
  pts.reserve(keep.size());
  labels.reserve(keep.size());
  for (auto i : keep) {
    pts.push_back(scene.cloud[i]);
    labels.push_back(scene.labels[i]);
  }
  return {PointCloud(std::move(pts)), std::move(labels), scene.truth, scene.spec};
}

}  // namespace

void SceneSpec::validate() const {
  const auto fail = [](const std::string& field, const std::string& what) {
    throw ValidationError("scene." + field + ": " + what);
  };
  if (!(road_length > 0.0)) fail("road_length", "must be positive");
  if (!(road_width > 0.0)) fail("road_width", "must be positive");
  if (!(sidewalk_width > 0.0)) fail("sidewalk_width", "must be positive");
  if (!(curb_height > 0.0 && curb_height <= 0.25)) fail("curb_height", "must lie in (0, 0.25]");
  if (!(density_road > 0.0)) fail("density_road", "must be positive");
  if (!(density_sidewalk > 0.0)) fail("density_sidewalk", "must be positive");
  if (density_gradient && !(density_gradient->left > 0.0 && density_gradient->right > 0.0)) {
    fail("density_gradient", "multipliers must be positive");
  }
  if (!(slope_deg >= 0.0 && slope_deg <= 30.0)) fail("slope_deg", "must lie in [0, 30]");
  for (const auto* list : {&occlusions, &ramps}) {
    const std::string field = list == &occlusions ? "occlusions" : "ramps";
    for (const auto& r : *list) {
      if (!(r.length > 0.0)) fail(field, "interval length must be positive");
      if (r.start < 0.0 || r.start + r.length > road_length) fail(field, "interval lies beyond road_length");
    }
  }
  if (intersection) {
    const double corner = road_length / 2.0 - road_width / 2.0 - kFilletRadius;
    if (corner <= 0.0) fail("intersection", "road_length too short for a crossroad");
    if (sidewalk_width <= kFilletRadius) fail("intersection", "sidewalk_width must exceed the fillet radius");
    for (const auto& r : ramps) {
      if (r.start + r.length > corner && r.start < road_length - corner) {
        fail("ramps", "interval overlaps the intersection");
      }
    }
  }
}

SyntheticScene generate(const SceneSpec& spec) {
  spec.validate();
  const SceneGeometry geo(spec);
  const double L = spec.road_length;
  const double Y = geo.half_scene();
  const double h = spec.curb_height;
  const double mmax = geo.max_multiplier();
  const double cos_t = std::cos(spec.slope_deg * kDeg);
  const double sin_t = std::sin(spec.slope_deg * kDeg);

  std::vector<Point3> pts;
  std::vector<SurfaceKind> labels;
  const auto emit = [&](Point3 p, SurfaceKind kind) {
    if (geo.in_occlusion(p.x, p.y)) return;
    if (p.y > 0.0 && spec.slope_deg > 0.0) rotate_right_side(p, cos_t, sin_t);
    pts.push_back(p);
    labels.push_back(kind);
  };

  std::mt19937_64 rng(derive_seed(spec.seed, "surface"));
  std::uniform_real_distribution<double> ux(0.0, L), uy(-Y, Y), u01(0.0, 1.0);
  const double area = L * 2.0 * Y;

  const auto road_draws = static_cast<std::size_t>(std::llround(area * spec.density_road * mmax));
  for (std::size_t n = 0; n < road_draws; ++n) {
    const double x = ux(rng), y = uy(rng), keep = u01(rng);
    const double d = geo.depth(x, y);
    const bool ramp = geo.in_ramp(x);
    if (d >= (ramp ? 0.0 : -geo.bevel())) continue;
    if (keep * mmax >= geo.density_multiplier(y)) continue;
    emit({x, y, 0.0}, SurfaceKind::road);
  }

  const auto walk_draws = static_cast<std::size_t>(std::llround(area * spec.density_sidewalk * mmax));
  for (std::size_t n = 0; n < walk_draws; ++n) {
    const double x = ux(rng), y = uy(rng), keep = u01(rng);
    if (geo.depth(x, y) < 0.0) continue;
    if (keep * mmax >= geo.density_multiplier(y)) continue;
    emit({x, y, geo.in_ramp(x) ? 0.0 : h}, SurfaceKind::sidewalk);
  }

  const auto edges = geo.edges();
  const double slant = std::hypot(h, geo.bevel());
  for (const auto& piece : edges) {
    const auto draws = static_cast<std::size_t>(std::llround(piece.length() * slant * spec.density_road * mmax));
    for (std::size_t n = 0; n < draws; ++n) {
      const double t = u01(rng), z = h * u01(rng), keep = u01(rng);
      const auto [q, nrm] = piece.at(t);
      const double out = (h - z) / h * geo.bevel();
      const Point3 p{q.x + out * nrm.x, q.y + out * nrm.y, z};
      if (keep * mmax >= geo.density_multiplier(p.y)) continue;
      emit(p, SurfaceKind::curb_face);
    }
  }

  SyntheticScene scene;
  for (const auto& piece : edges) {
    auto line = truth_line(piece, h);
    if (spec.slope_deg > 0.0) {
      for (auto& v : line.vertices)
        if (v.y > 0.0) rotate_right_side(v, cos_t, sin_t);
    }
    scene.truth.push_back(std::move(line));
  }
  if (pts.empty()) throw ValidationError("scene: specification produced no points");
  scene.cloud = PointCloud(std::move(pts));
  scene.labels = std::move(labels);
  scene.spec = spec;
  return scene;
}

double min_point_distance(const PointCloud& cloud) {
  if (cloud.size() < 2) throw ValidationError("min_point_distance needs at least 2 points");
  const auto& b = cloud.bounds();
  const double extent = std::max({b.max.x - b.min.x, b.max.y - b.min.y, b.max.z - b.min.z, 1e-12});
  // Start near the mean spacing of a planar sample; grow until the answer is
  // provably within one cell.
  double cell = 0.25 * extent / std::sqrt(static_cast<double>(cloud.size()));
  using Key = std::tuple<std::int64_t, std::int64_t, std::int64_t>;
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      return std::hash<std::int64_t>()(std::get<0>(k) * 73856093 ^ std::get<1>(k) * 19349663 ^
                                       std::get<2>(k) * 83492791);
    }
  };
  for (;;) {
    std::unordered_map<Key, std::vector<std::uint32_t>, KeyHash> cells;
    const auto key = [&](const Point3& p) {
      return Key{static_cast<std::int64_t>(std::floor((p.x - b.min.x) / cell)),
                 static_cast<std::int64_t>(std::floor((p.y - b.min.y) / cell)),
                 static_cast<std::int64_t>(std::floor((p.z - b.min.z) / cell))};
    };
    for (std::uint32_t i = 0; i < cloud.size(); ++i) cells[key(cloud[i])].push_back(i);
    double best = std::numeric_limits<double>::infinity();
    for (std::uint32_t i = 0; i < cloud.size(); ++i) {
      const auto [ki, kj, kk] = key(cloud[i]);
      for (int di = -1; di <= 1; ++di)
        for (int dj = -1; dj <= 1; ++dj)
          for (int dk = -1; dk <= 1; ++dk) {
            const auto it = cells.find({ki + di, kj + dj, kk + dk});
            if (it == cells.end()) continue;
            for (auto j : it->second)
              if (j > i) best = std::min(best, distance(cloud[i], cloud[j]));
          }
    }
    if (best <= cell) return best;
    cell *= 4.0;
  }
}

SyntheticScene add_noise(const SyntheticScene& scene, double T, std::uint64_t seed) {
  if (!(T >= 0.0)) throw ValidationError("noise level T must be non-negative");
  if (T == 0.0) return scene;
  const double amp = T * min_point_distance(scene.cloud);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-amp, amp);
  std::vector<Point3> pts(scene.cloud.begin(), scene.cloud.end());
  for (auto& p : pts) {
    p.x += u(rng);
    p.y += u(rng);
    p.z += u(rng);
  }
  return {PointCloud(std::move(pts)), scene.labels, scene.truth, scene.spec};
}

SyntheticScene downsample(const SyntheticScene& scene, double keep_fraction, std::uint64_t seed) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) throw ValidationError("keep_fraction must lie in (0, 1]");
  const auto n = scene.cloud.size();
  const auto k = static_cast<std::size_t>(std::floor(keep_fraction * static_cast<double>(n)));
  if (k < 100) throw ValidationError("downsampling leaves fewer than 100 points");
  if (k == n) return scene;
  std::vector<std::size_t> all(n), keep;
  std::iota(all.begin(), all.end(), std::size_t{0});
  keep.reserve(k);
  std::mt19937_64 rng(seed);
  std::sample(all.begin(), all.end(), std::back_inserter(keep), k, rng);
  return subset(scene, keep);
}

SyntheticScene add_scanner_gap(const SyntheticScene& scene, double offset, double width) {
  if (!(width >= 0.0)) throw ValidationError("scanner gap width must be non-negative");
  if (width == 0.0) return scene;
  const auto& s = scene.spec;
  const double bevel = s.curb_profile == CurbProfile::beveled ? s.curb_height * std::tan(kBevelDeg * kDeg) : 0.0;
  if (std::abs(offset) + width / 2.0 >= s.road_width / 2.0 - bevel) {
    throw ValidationError("scanner gap strip overlaps a curb");
  }
  const double cos_t = std::cos(s.slope_deg * kDeg);
  const double sin_t = std::sin(s.slope_deg * kDeg);
  std::vector<std::size_t> keep;
  keep.reserve(scene.cloud.size());
  for (std::size_t i = 0; i < scene.cloud.size(); ++i) {
    const auto& p = scene.cloud[i];
    // Undo the side rotation to get the lateral position on the road plane.
    const double y = p.y > 0.0 ? p.y * cos_t + p.z * sin_t : p.y;
    if (scene.labels[i] == SurfaceKind::road && std::abs(y - offset) < width / 2.0) continue;
    keep.push_back(i);
  }
  return subset(scene, keep);
}

std::string zone_of(const Polyline3& truth_line) { return truth_line.id.rfind("INT", 0) == 0 ? "Int" : "SL"; }

std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return splitmix64(seed ^ splitmix64(h));
}

}  // namespace curbx
