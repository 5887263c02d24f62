#include "curbx/evaluation.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "curbx/error.hpp"
#include "curbx/synth_scene.hpp"

namespace curbx {

namespace {

double segment_distance(const Point3& p, const Point3& a, const Point3& b) {
  const auto ab = b - a;
  const double l2 = dot(ab, ab);
  const double t = l2 > 0.0 ? std::clamp(dot(p - a, ab) / l2, 0.0, 1.0) : 0.0;
  return distance(p, a + t * ab);
}

std::string ratio_field(const std::optional<double>& r) {
  if (!r) return "";
  std::ostringstream out;
  out << std::setprecision(6) << *r;
  return out.str();
}

std::optional<double> ratio(std::uint64_t num, std::uint64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

Point3 canonical_sign(Point3 d) {
  const double ax = std::abs(d.x), ay = std::abs(d.y), az = std::abs(d.z);
  const double big = ax >= ay && ax >= az ? d.x : (ay >= az ? d.y : d.z);
  return big < 0.0 ? -1.0 * d : d;
}

}  // namespace

double point_to_polyline_distance(const Point3& p, std::span<const Polyline3> lines) {
  if (lines.empty()) throw ValidationError("point_to_polyline_distance: no lines");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& line : lines) {
    const auto& v = line.vertices;
    if (v.size() == 1) best = std::min(best, distance(p, v[0]));
    for (std::size_t n = 1; n < v.size(); ++n) best = std::min(best, segment_distance(p, v[n - 1], v[n]));
    if (line.closed && v.size() > 2) best = std::min(best, segment_distance(p, v.back(), v.front()));
  }
  return best;
}

std::size_t SegmentIndex::KeyHash::operator()(const std::array<std::int64_t, 3>& k) const {
  return std::hash<std::int64_t>()(k[0] * 73856093 ^ k[1] * 19349663 ^ k[2] * 83492791);
}

std::array<std::int64_t, 3> SegmentIndex::key(const Point3& p) const {
  return {static_cast<std::int64_t>(std::floor(p.x / cell_)), static_cast<std::int64_t>(std::floor(p.y / cell_)),
          static_cast<std::int64_t>(std::floor(p.z / cell_))};
}

SegmentIndex::SegmentIndex(std::span<const Polyline3> lines, double cell) : cell_(cell) {
  if (!(cell > 0.0)) throw ValidationError("SegmentIndex cell must be positive");
  for (std::uint32_t l = 0; l < lines.size(); ++l) {
    auto v = lines[l].vertices;
    if (lines[l].closed && v.size() > 2) v.push_back(v.front());
    if (v.size() == 1) v.push_back(v.front());
    for (std::size_t n = 1; n < v.size(); ++n) {
      const auto a = v[n - 1], b = v[n];
      const int parts = std::max(1, static_cast<int>(std::ceil(distance(a, b) / cell)));
      for (int s = 0; s < parts; ++s) {
        const Point3 pa = a + (static_cast<double>(s) / parts) * (b - a);
        const Point3 pb = s + 1 == parts ? b : a + (static_cast<double>(s + 1) / parts) * (b - a);
        const auto id = static_cast<std::uint32_t>(pieces_.size());
        pieces_.push_back({pa, pb, l});
        const auto ka = key(pa), kb = key(pb);
        for (auto i = std::min(ka[0], kb[0]); i <= std::max(ka[0], kb[0]); ++i)
          for (auto j = std::min(ka[1], kb[1]); j <= std::max(ka[1], kb[1]); ++j)
            for (auto k = std::min(ka[2], kb[2]); k <= std::max(ka[2], kb[2]); ++k) cells_[{i, j, k}].push_back(id);
      }
    }
  }
}

std::optional<double> SegmentIndex::near_distance(const Point3& p, std::size_t* line_of) const {
  const auto k = key(p);
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_line = 0;
  for (std::int64_t di = -1; di <= 1; ++di)
    for (std::int64_t dj = -1; dj <= 1; ++dj)
      for (std::int64_t dk = -1; dk <= 1; ++dk) {
        const auto it = cells_.find({k[0] + di, k[1] + dj, k[2] + dk});
        if (it == cells_.end()) continue;
        for (auto id : it->second) {
          const auto& piece = pieces_[id];
          const double d = segment_distance(p, piece.a, piece.b);
          if (d < best || (d == best && piece.line < best_line)) {
            best = d;
            best_line = piece.line;
          }
        }
      }
  if (!(best < cell_)) return std::nullopt;
  if (line_of) *line_of = best_line;
  return best;
}

ClassCounts classify_points(const PointCloud& cloud, std::span<const Polyline3> result,
                            std::span<const Polyline3> truth, double D) {
  if (!(D > 0.0)) throw ValidationError("D must be positive");
  ClassCounts c;
  c.D = D;
  std::optional<SegmentIndex> ri, ti;
  if (!result.empty()) ri.emplace(result, D);
  if (!truth.empty()) ti.emplace(truth, D);
  for (const auto& p : cloud) {
    const auto dr = ri ? ri->near_distance(p) : std::nullopt;
    const auto dt = ti ? ti->near_distance(p) : std::nullopt;
    const bool in_l = dr && *dr < D;
    const bool in_t = dt && *dt < D;
    if (in_l && in_t) {
      ++c.tp;
    } else if (in_l) {
      ++c.fp;
    } else if (in_t) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

Metrics metrics(const ClassCounts& c) {
  return {ratio(c.tp, c.tp + c.fn), ratio(c.tn, c.fp + c.tn), ratio(c.tp, c.tp + c.fp), ratio(c.tn, c.tn + c.fn)};
}

MetricsReport evaluate(const PointCloud& cloud, std::span<const Polyline3> result, std::span<const Polyline3> truth,
                       std::span<const double> d_grid, double zone_radius) {
  if (d_grid.empty()) throw ValidationError("evaluation needs at least one D");
  for (double D : d_grid)
    if (!(D > 0.0)) throw ValidationError("every D must be positive");
  const double d_max = *std::max_element(d_grid.begin(), d_grid.end());

  std::vector<std::string> zones;
  std::vector<std::string> line_zone;
  for (const auto& t : truth) {
    line_zone.push_back(zone_of(t));
    if (std::find(zones.begin(), zones.end(), line_zone.back()) == zones.end()) zones.push_back(line_zone.back());
  }
  std::sort(zones.begin(), zones.end(), [](const auto& a, const auto& b) { return a == "SL" && b != "SL"; });
  if (zones.empty()) zones.push_back("SL");
  const auto zone_slot = [&](const std::string& z) {
    return static_cast<std::size_t>(std::find(zones.begin(), zones.end(), z) - zones.begin());
  };

  // counts[d][zone]
  std::vector<std::vector<ClassCounts>> counts(d_grid.size(), std::vector<ClassCounts>(zones.size()));
  std::optional<SegmentIndex> ri, ti;
  if (!result.empty()) ri.emplace(result, d_max);
  if (!truth.empty()) ti.emplace(truth, std::max(d_max, zone_radius));
  for (const auto& p : cloud) {
    const auto dr = ri ? ri->near_distance(p) : std::nullopt;
    std::size_t line = 0;
    const auto dt = ti ? ti->near_distance(p, &line) : std::nullopt;
    const std::size_t z = dt && *dt < zone_radius ? zone_slot(line_zone[line]) : zone_slot("SL");
    for (std::size_t d = 0; d < d_grid.size(); ++d) {
      const double D = d_grid[d];
      const bool in_l = dr && *dr < D;
      const bool in_t = dt && *dt < D;
      auto& c = counts[d][z];
      if (in_l && in_t) {
        ++c.tp;
      } else if (in_l) {
        ++c.fp;
      } else if (in_t) {
        ++c.fn;
      } else {
        ++c.tn;
      }
    }
  }

  MetricsReport report;
  for (std::size_t d = 0; d < d_grid.size(); ++d) {
    ClassCounts all;
    all.D = d_grid[d];
    for (std::size_t z = 0; z < zones.size(); ++z) {
      counts[d][z].D = d_grid[d];
      report.rows.push_back({zones[z], counts[d][z]});
      all.tp += counts[d][z].tp;
      all.tn += counts[d][z].tn;
      all.fp += counts[d][z].fp;
      all.fn += counts[d][z].fn;
    }
    report.rows.push_back({"All", all});
  }
  return report;
}

std::string format_metrics_csv(const MetricsReport& report) {
  std::ostringstream out;
  out << "zone,D,TP,TN,FP,FN,TPR,TNR,PPV,NPV\n";
  for (const auto& row : report.rows) {
    const auto& c = row.counts;
    const auto m = metrics(c);
    out << row.zone << ',' << c.D << ',' << c.tp << ',' << c.tn << ',' << c.fp << ',' << c.fn << ','
        << ratio_field(m.tpr) << ',' << ratio_field(m.tnr) << ',' << ratio_field(m.ppv) << ',' << ratio_field(m.npv)
        << '\n';
  }
  return out.str();
}

void write_metrics_csv(const MetricsReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << format_metrics_csv(report);
  if (!out) throw IoError("write failed: " + path.string());
}

std::string format_metrics_table(const MetricsReport& report) {
  std::vector<double> ds;
  std::vector<std::string> zones;
  for (const auto& row : report.rows) {
    if (std::find(ds.begin(), ds.end(), row.counts.D) == ds.end()) ds.push_back(row.counts.D);
    if (std::find(zones.begin(), zones.end(), row.zone) == zones.end()) zones.push_back(row.zone);
  }
  std::ostringstream out;
  out << std::left << std::setw(5) << "Zone" << std::setw(6) << "Rate";
  for (double D : ds) {
    std::ostringstream h;
    h << "D=" << D;
    out << std::right << std::setw(10) << h.str();
  }
  out << '\n';
  for (const auto& zone : zones) {
    for (const char* name : {"TPR", "TNR", "PPV", "NPV"}) {
      out << std::left << std::setw(5) << zone << std::setw(6) << name;
      for (double D : ds) {
        const auto it = std::find_if(report.rows.begin(), report.rows.end(),
                                     [&](const auto& r) { return r.zone == zone && r.counts.D == D; });
        const auto m = metrics(it->counts);
        const std::string n = name;
        const auto& v = n == "TPR" ? m.tpr : n == "TNR" ? m.tnr : n == "PPV" ? m.ppv : m.npv;
        std::ostringstream cell;
        if (v) {
          cell << std::fixed << std::setprecision(2) << 100.0 * *v;
        } else {
          cell << "-";
        }
        out << std::right << std::setw(10) << cell.str();
      }
      out << '\n';
    }
  }
  return out.str();
}

Line3 fit_line_ls(std::span<const Point3> points) {
  if (points.size() < 2) throw ValidationError("fit_line_ls needs at least 2 points");
  Point3 c{};
  for (const auto& p : points) c = c + p;
  c = (1.0 / static_cast<double>(points.size())) * c;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : points) {
    const Eigen::Vector3d d(p.x - c.x, p.y - c.y, p.z - c.z);
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
  if (!(solver.eigenvalues()(2) > 0.0)) throw ValidationError("fit_line_ls: points are coincident");
  const Eigen::Vector3d v = solver.eigenvectors().col(2);
  return {c, canonical_sign({v(0), v(1), v(2)})};
}

double point_line_distance(const Point3& p, const Line3& line) {
  const auto d = p - line.point;
  const double t = dot(d, line.direction);
  return norm(d - t * line.direction);
}

RansacFit fit_line_ransac(std::span<const Point3> points, int iters, double inlier_tol, std::uint64_t seed) {
  if (points.size() < 2) throw ValidationError("fit_line_ransac needs at least 2 points");
  if (iters < 1) throw ValidationError("fit_line_ransac needs iters >= 1");
  if (!(inlier_tol > 0.0)) throw ValidationError("fit_line_ransac needs a positive inlier tolerance");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, points.size() - 1);
  std::vector<std::size_t> best;
  for (int it = 0; it < iters; ++it) {
    const auto i = pick(rng);
    auto j = pick(rng);
    if (j == i) j = (i + 1) % points.size();
    const auto dir = points[j] - points[i];
    if (norm(dir) == 0.0) continue;
    const Line3 h{points[i], (1.0 / norm(dir)) * dir};
    std::vector<std::size_t> inliers;
    for (std::size_t n = 0; n < points.size(); ++n)
      if (point_line_distance(points[n], h) <= inlier_tol) inliers.push_back(n);
    if (inliers.size() > best.size()) best = std::move(inliers);
  }
  if (best.size() < 2) throw ValidationError("fit_line_ransac: no valid hypothesis");
  std::vector<Point3> in;
  for (auto n : best) in.push_back(points[n]);
  return {fit_line_ls(in), best};
}

}  // namespace curbx
