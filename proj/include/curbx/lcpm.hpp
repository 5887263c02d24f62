#pragma once

#include <array>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "curbx/cloud_io.hpp"
#include "curbx/curb_energy.hpp"
#include "curbx/voxel_grid.hpp"

namespace curbx {

using Vec3 = std::array<double, 3>;
using Extents3 = std::array<int, 3>;

inline constexpr int kDefaultRegionExtent = 100;

// Thrown by solve_lcpm when some slice cannot be reached from the previous
// one within the shift bounds.
class InfeasiblePathError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SearchRegion {
  VoxelIndex offset;
  Extents3 extents{kDefaultRegionExtent, kDefaultRegionExtent, kDefaultRegionExtent};

  bool contains(const VoxelIndex& v) const {
    return v.i >= offset.i && v.i < offset.i + extents[0] && v.j >= offset.j && v.j < offset.j + extents[1] &&
           v.k >= offset.k && v.k < offset.k + extents[2];
  }
};

struct PrincipalDirection {
  Vec3 v1{};
  double s1 = 0.0, s2 = 0.0, s3 = 0.0;
  Vec3 mean{};
};

// SVD of the mean-centred q x 3 index matrix. v1 is signed so that its
// largest-magnitude component is positive. Throws ValidationError for q < 2
// or coincident points.
PrincipalDirection principal_direction(std::span<const VoxelIndex> voxels);

struct StepSize {
  int dx = 1, dy = 1, dz = 1;

  friend bool operator==(const StepSize&, const StepSize&) = default;
};

// max(1, floor((1 - s1 / |s|) * extent)) per axis, |s| the root-sum-square
// of the singular values.
StepSize step_size(const PrincipalDirection& pd, const Extents3& extents);

enum class NodeKind { candidate, non_candidate, virtual_node };

struct PathNode {
  VoxelIndex position;
  NodeKind kind = NodeKind::candidate;
  int slice = 0;
};

// Nodes bucketed by slice along v1; transitions only between consecutive
// slices, with the part of the displacement orthogonal to v1 bounded per axis
// by `bounds` (+0.5 voxel slack).
struct PathGraph {
  std::vector<std::vector<PathNode>> slices;
  Vec3 v1{1.0, 0.0, 0.0};
  StepSize bounds;
};

bool transition_allowed(const PathGraph& graph, const VoxelIndex& from, const VoxelIndex& to);

// penaltyD rises and penaltyS falls linearly between rho_low and rho_high,
// constant outside.
struct PenaltySchedule {
  double penalty_d_low = 50.0;
  double penalty_d_high = 500.0;
  double penalty_s_low = 500.0;
  double penalty_s_high = 50.0;
  double rho_low = 0.04;
  double rho_high = 0.30;
  double penalty_v = 1000.0;
  double rho_min = 0.04;

  double penalty_d(double rho) const;
  double penalty_s(double rho) const;
  double data_cost(NodeKind kind, double rho) const;
  // Throws ValidationError when a ramp has the wrong direction, penaltyV is
  // below the largest penaltyD or a value is negative.
  void validate() const;
};

struct CurbPath {
  std::vector<PathNode> nodes;  // one per slice, slice ranks increasing
  double cost = 0.0;
};

// Sum of data costs of all nodes plus penaltyS times the Euclidean distance
// (voxel units) between consecutive nodes.
double path_cost(std::span<const PathNode> nodes, const PenaltySchedule& schedule, double rho);

// Nodes for one curb hypothesis: its candidates plus the occupied
// non-candidate voxels of the region inside its bounding box grown by
// `margin` and within `lateral_band` voxels of its axis, sliced by
// floor(projection on v1 / slice width). A slice with no
// node gets one virtual node interpolated between the candidate centroids of
// the nearest non-empty slices. Throws ValidationError when the region's
// candidate fraction is below schedule.rho_min.
PathGraph build_path_graph(const SearchRegion& region, const VoxelGrid& grid, const CandidateSet& candidates,
                           std::span<const VoxelIndex> hypothesis, const PrincipalDirection& pd, const StepSize& step,
                           double rho_min, int margin = 2,
                           double lateral_band = std::numeric_limits<double>::infinity());

// Slice-by-slice dynamic program: L_i = min_j (L_j + Data_i + penaltyS Dis_ij)
// over feasible j in the previous slice; the first slice starts at Data_i.
// Throws ValidationError for an empty graph and InfeasiblePathError when a
// slice is unreachable.
CurbPath solve_lcpm(const PathGraph& graph, const PenaltySchedule& schedule, double rho);

// |candidates in region| / |occupied voxels in region|.
double candidate_fraction(const SearchRegion& region, const VoxelGrid& grid, const CandidateSet& candidates);

struct RefineOptions {
  Extents3 region_extents{kDefaultRegionExtent, kDefaultRegionExtent, kDefaultRegionExtent};
  PenaltySchedule schedule;
  std::size_t min_component = 10;  // voxels
  double link_gap = 30.0;           // voxels; components this close form one hypothesis
  std::size_t min_hypothesis = 20;  // voxels
  double lateral_band = 10.0;      // voxels around the hypothesis axis kept as path nodes
  double min_relief = 0.018;        // meters, RMS off-plane spread of the surface around a component
  double relief_max_voxel = 0.1;    // meters; coarser grids skip the relief test
  double bridge_gap = 2.0;          // meters, straight joins between aligned curbs
  double bridge_angle_deg = 20.0;
  double duplicate_distance = 0.25;  // meters
  double min_curb_length = 1.5;      // meters
  double intersection_gap = 4.0;     // meters, 0 disables curved links
  unsigned threads = 1;
};

struct RegionReport {
  std::size_t region_id = 0;
  SearchRegion region;
  double rho = 0.0;
  std::size_t q = 0;  // candidates of the hypothesis
  PrincipalDirection pd;
  StepSize step;
  double cost = 0.0;
};

struct RefineResult {
  std::vector<Polyline3> curbs;
  std::vector<CurbPath> paths;  // per accepted hypothesis, before assembly
  std::vector<RegionReport> reports;
};

// Region tiling, per-hypothesis LCPM, then assembly of region paths into
// world polylines.
RefineResult refine_scene(const VoxelGrid& grid, const CandidateSet& candidates, const RefineOptions& options = {});

// "region_id,rho,q,s1,s2,s3,step,cost"
void write_region_csv(std::span<const RegionReport> reports, const std::filesystem::path& path);

// Quadratic Bezier from the end of a to the start of b with its control
// point where the end tangents meet, sampled every `spacing` meters. Absent
// unless the endpoints are within max_gap, the tangents turn by more than
// 45 degrees and their lines cross ahead of a and before b (no U-turns).
std::optional<Polyline3> link_intersection(const Polyline3& a, const Polyline3& b, double max_gap, double spacing);

}  // namespace curbx
