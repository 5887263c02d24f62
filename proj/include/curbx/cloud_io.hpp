#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace curbx {

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const Point3&, const Point3&) = default;
};

inline Point3 operator+(const Point3& a, const Point3& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Point3 operator-(const Point3& a, const Point3& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
inline Point3 operator*(double s, const Point3& p) { return {s * p.x, s * p.y, s * p.z}; }
inline double dot(const Point3& a, const Point3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
double norm(const Point3& p);
double distance(const Point3& a, const Point3& b);

struct Bounds {
  Point3 min;
  Point3 max;
};

// An ordered, non-empty list of finite points with cached bounds.
class PointCloud {
 public:
  PointCloud() = default;
  // Throws ValidationError on non-finite coordinates.
  explicit PointCloud(std::vector<Point3> points);

  std::span<const Point3> points() const { return points_; }
  const Point3& operator[](std::size_t i) const { return points_[i]; }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  // Undefined for an empty cloud.
  const Bounds& bounds() const { return bounds_; }

  auto begin() const { return points_.begin(); }
  auto end() const { return points_.end(); }

 private:
  std::vector<Point3> points_;
  Bounds bounds_;
};

struct Polyline3 {
  std::string id;
  std::vector<Point3> vertices;
  bool closed = false;

  double length() const;
};

// Throws ValidationError if fewer than 2 vertices, coincident consecutive
// vertices or non-finite coordinates.
void validate_polyline(const Polyline3& line);

// ASCII XYZ: one point per line "x y z [extra...]", '#' comments, LF or CRLF.
PointCloud read_xyz(const std::filesystem::path& path);
void write_xyz(const PointCloud& cloud, const std::filesystem::path& path);

// Records separated by blank lines:
//   POLYLINE <id> <n_vertices>
//   x y z        (n lines)
std::vector<Polyline3> read_polylines(const std::filesystem::path& path);
void write_polylines(std::span<const Polyline3> lines, const std::filesystem::path& path);

}  // namespace curbx
