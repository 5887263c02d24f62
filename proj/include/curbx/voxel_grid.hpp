#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "curbx/cloud_io.hpp"

namespace curbx {

inline constexpr double kDefaultVoxelSize = 0.04;

struct VoxelIndex {
  std::int32_t i = 0;
  std::int32_t j = 0;
  std::int32_t k = 0;

  friend auto operator<=>(const VoxelIndex&, const VoxelIndex&) = default;
};

inline VoxelIndex operator+(const VoxelIndex& a, const VoxelIndex& b) { return {a.i + b.i, a.j + b.j, a.k + b.k}; }
inline VoxelIndex operator-(const VoxelIndex& a, const VoxelIndex& b) { return {a.i - b.i, a.j - b.j, a.k - b.k}; }

struct VoxelIndexHash {
  std::size_t operator()(const VoxelIndex& v) const noexcept {
    std::uint64_t h = static_cast<std::uint32_t>(v.i);
    h = h * 0x9E3779B97F4A7C15ull ^ static_cast<std::uint32_t>(v.j);
    h = h * 0x9E3779B97F4A7C15ull ^ static_cast<std::uint32_t>(v.k);
    return static_cast<std::size_t>(h ^ (h >> 29));
  }
};

// 3x3x3 block addressed as block[di+1][dj+1][dk+1].
using Block27 = std::array<std::array<std::array<std::uint32_t, 3>, 3>, 3>;

// Sparse voxelization of a cloud. The stored value of a voxel is its point
// count (the intensity); absent voxels have intensity 0.
class VoxelGrid {
 public:
  using CellMap = std::unordered_map<VoxelIndex, std::uint32_t, VoxelIndexHash>;

  VoxelGrid(Point3 origin, double voxel_size);

  const Point3& origin() const { return origin_; }
  double voxel_size() const { return voxel_size_; }
  const CellMap& cells() const { return cells_; }
  std::size_t occupied() const { return cells_.size(); }
  std::uint64_t total_count() const;

  // floor((p - origin) / voxel_size) per axis.
  VoxelIndex index_of(const Point3& p) const;
  Point3 center(const VoxelIndex& idx) const;
  std::uint32_t intensity(const VoxelIndex& idx) const;
  bool contains(const VoxelIndex& idx) const { return cells_.count(idx) != 0; }

  void add(const VoxelIndex& idx, std::uint32_t count = 1);
  void add_point(const Point3& p) { add(index_of(p)); }

  // Occupied indices in lexicographic order.
  std::vector<VoxelIndex> sorted_indices() const;

 private:
  Point3 origin_;
  double voxel_size_;
  CellMap cells_;
};

// Origin is the cloud's minimum corner floored to a multiple of voxel_size.
VoxelGrid build_grid(const PointCloud& cloud, double voxel_size = kDefaultVoxelSize);
// Same, with an explicit origin (re-voxelizing onto an existing lattice).
VoxelGrid build_grid(const PointCloud& cloud, double voxel_size, const Point3& origin);

inline std::uint32_t intensity(const VoxelGrid& grid, const VoxelIndex& idx) { return grid.intensity(idx); }
inline Point3 voxel_center(const VoxelGrid& grid, const VoxelIndex& idx) { return grid.center(idx); }
Block27 neighborhood_27(const VoxelGrid& grid, const VoxelIndex& idx);

}  // namespace curbx
