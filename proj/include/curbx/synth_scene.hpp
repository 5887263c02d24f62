#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "curbx/cloud_io.hpp"

namespace curbx {

enum class CurbProfile { vertical, beveled };

enum class SurfaceKind : std::uint8_t { road, curb_face, sidewalk };

// Multiplier on both densities, linear in y from the left scene edge to the
// right one.
struct DensityGradient {
  double left = 1.0;
  double right = 1.0;
};

// A stretch [start, start + length] along the road axis, meters.
struct RoadInterval {
  double start = 0.0;
  double length = 0.0;
};

// Road along +x over [0, road_length], centred on y = 0, curbs at
// y = +-road_width/2, sidewalks beyond them.
struct SceneSpec {
  double road_length = 50.0;
  double road_width = 7.0;
  double sidewalk_width = 2.0;
  double curb_height = 0.15;
  CurbProfile curb_profile = CurbProfile::vertical;
  double density_road = 2000.0;
  double density_sidewalk = 1250.0;
  std::optional<DensityGradient> density_gradient;
  double slope_deg = 0.0;  // rotation of the y > 0 side about the road axis
  std::vector<RoadInterval> occlusions;
  std::vector<RoadInterval> ramps;
  bool intersection = false;  // cross road of the same width at road_length / 2
  std::uint64_t seed = 1;

  // Throws ValidationError naming the offending field.
  void validate() const;
};

inline constexpr double kBevelDeg = 15.0;
inline constexpr double kFilletRadius = 1.0;
inline constexpr double kOcclusionMargin = 0.5;

struct SyntheticScene {
  PointCloud cloud;
  std::vector<SurfaceKind> labels;  // one per cloud point
  std::vector<Polyline3> truth;     // curb-top edges; id prefix "SL_" or "INT_"
  SceneSpec spec;
};

SyntheticScene generate(const SceneSpec& spec);

// Every coordinate moved by an independent uniform offset in [-T d, T d],
// d = min_point_distance(cloud).
SyntheticScene add_noise(const SyntheticScene& scene, double T, std::uint64_t seed);

// Seeded subset of exactly floor(keep_fraction * n) points, input order kept.
// Throws ValidationError when fewer than 100 points would remain.
SyntheticScene downsample(const SyntheticScene& scene, double keep_fraction, std::uint64_t seed);

// Removes road points with |y - offset| < width / 2. Throws ValidationError
// when the strip reaches a curb.
SyntheticScene add_scanner_gap(const SyntheticScene& scene, double offset, double width);

// Smallest distance between two distinct points of the cloud.
double min_point_distance(const PointCloud& cloud);

// "SL" or "Int", from the truth id prefix.
std::string zone_of(const Polyline3& truth_line);

// Seed for a named sub-stream of one master seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);

}  // namespace curbx
