#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "curbx/cloud_io.hpp"

namespace curbx {

// Table I distance thresholds, meters.
inline const std::vector<double> kDefaultDGrid{0.4, 0.2, 0.12, 0.08, 0.04};

// Minimum distance from p to any segment of any line. Throws ValidationError
// when lines is empty.
double point_to_polyline_distance(const Point3& p, std::span<const Polyline3> lines);

// Segments bucketed into cubic cells; answers exact distances up to the cell
// size.
class SegmentIndex {
 public:
  SegmentIndex(std::span<const Polyline3> lines, double cell);

  // Exact distance to the nearest segment when it is below the cell size,
  // otherwise absent. `line_of` receives the index of the nearest line.
  std::optional<double> near_distance(const Point3& p, std::size_t* line_of = nullptr) const;
  double cell() const { return cell_; }

 private:
  struct Piece {
    Point3 a, b;
    std::uint32_t line;
  };
  struct KeyHash {
    std::size_t operator()(const std::array<std::int64_t, 3>& k) const;
  };
  std::array<std::int64_t, 3> key(const Point3& p) const;

  double cell_;
  std::vector<Piece> pieces_;
  std::unordered_map<std::array<std::int64_t, 3>, std::vector<std::uint32_t>, KeyHash> cells_;
};

struct ClassCounts {
  double D = 0.0;
  std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::uint64_t total() const { return tp + tn + fp + fn; }
};

// Strict "< D" on both sides: TP in both bands, FP result only, FN truth
// only, TN neither.
ClassCounts classify_points(const PointCloud& cloud, std::span<const Polyline3> result,
                            std::span<const Polyline3> truth, double D);

struct Metrics {
  std::optional<double> tpr, tnr, ppv, npv;
};

// Ratios with a zero denominator are absent.
Metrics metrics(const ClassCounts& counts);

struct ZoneCounts {
  std::string zone;  // "SL", "Int" or "All"
  ClassCounts counts;
};

struct MetricsReport {
  std::vector<ZoneCounts> rows;  // grouped by D, zones in SL, Int, All order
};

// Points are assigned to the zone of their nearest truth line within
// zone_radius (by its zone_of tag); points farther from every truth line
// count as SL.
MetricsReport evaluate(const PointCloud& cloud, std::span<const Polyline3> result, std::span<const Polyline3> truth,
                       std::span<const double> d_grid, double zone_radius = 1.0);

// "zone,D,TP,TN,FP,FN,TPR,TNR,PPV,NPV"; absent ratios are empty fields.
void write_metrics_csv(const MetricsReport& report, const std::filesystem::path& path);
std::string format_metrics_csv(const MetricsReport& report);
// Zone x metric rows, one column per D, percentages.
std::string format_metrics_table(const MetricsReport& report);

struct Line3 {
  Point3 point;
  Point3 direction;  // unit
};

// Total least squares line through the centroid along the principal axis.
// Throws ValidationError when fewer than 2 distinct points.
Line3 fit_line_ls(std::span<const Point3> points);

double point_line_distance(const Point3& p, const Line3& line);

struct RansacFit {
  Line3 line;
  std::vector<std::size_t> inliers;  // ascending
};

// Best two-point hypothesis by inlier count (earlier hypothesis wins ties),
// refitted by least squares on its inliers.
RansacFit fit_line_ransac(std::span<const Point3> points, int iters, double inlier_tol, std::uint64_t seed);

}  // namespace curbx
