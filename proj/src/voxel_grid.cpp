#include "curbx/voxel_grid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "curbx/error.hpp"

namespace curbx {

namespace {

std::int32_t to_index(double v) {
  const double f = std::floor(v);
  if (f < std::numeric_limits<std::int32_t>::min() || f > std::numeric_limits<std::int32_t>::max()) {
    throw ValidationError("voxel index overflow; voxel size too small for the cloud extent");
  }
  return static_cast<std::int32_t>(f);
}

}  // namespace

VoxelGrid::VoxelGrid(Point3 origin, double voxel_size) : origin_(origin), voxel_size_(voxel_size) {
  if (!(voxel_size > 0.0) || !std::isfinite(voxel_size)) {
    throw ValidationError("voxel_size must be positive, got " + std::to_string(voxel_size));
  }
}

std::uint64_t VoxelGrid::total_count() const {
  std::uint64_t total = 0;
  for (const auto& [idx, n] : cells_) total += n;
  return total;
}

VoxelIndex VoxelGrid::index_of(const Point3& p) const {
  return {to_index((p.x - origin_.x) / voxel_size_), to_index((p.y - origin_.y) / voxel_size_),
          to_index((p.z - origin_.z) / voxel_size_)};
}

Point3 VoxelGrid::center(const VoxelIndex& idx) const {
  return {origin_.x + (idx.i + 0.5) * voxel_size_, origin_.y + (idx.j + 0.5) * voxel_size_,
          origin_.z + (idx.k + 0.5) * voxel_size_};
}

std::uint32_t VoxelGrid::intensity(const VoxelIndex& idx) const {
  const auto it = cells_.find(idx);
  return it == cells_.end() ? 0u : it->second;
}

void VoxelGrid::add(const VoxelIndex& idx, std::uint32_t count) {
  if (count == 0) return;
  cells_[idx] += count;
}

std::vector<VoxelIndex> VoxelGrid::sorted_indices() const {
  std::vector<VoxelIndex> out;
  out.reserve(cells_.size());
  for (const auto& [idx, n] : cells_) out.push_back(idx);
  std::sort(out.begin(), out.end());
  return out;
}

VoxelGrid build_grid(const PointCloud& cloud, double voxel_size) {
  if (!(voxel_size > 0.0)) throw ValidationError("voxel_size must be positive, got " + std::to_string(voxel_size));
  if (cloud.empty()) throw ValidationError("cannot voxelize an empty cloud");
  const auto& lo = cloud.bounds().min;
  const Point3 origin{std::floor(lo.x / voxel_size) * voxel_size, std::floor(lo.y / voxel_size) * voxel_size,
                      std::floor(lo.z / voxel_size) * voxel_size};
  return build_grid(cloud, voxel_size, origin);
}

VoxelGrid build_grid(const PointCloud& cloud, double voxel_size, const Point3& origin) {
  if (cloud.empty()) throw ValidationError("cannot voxelize an empty cloud");
  VoxelGrid grid(origin, voxel_size);
  for (const auto& p : cloud) grid.add_point(p);
  return grid;
}

Block27 neighborhood_27(const VoxelGrid& grid, const VoxelIndex& idx) {
  Block27 block{};
  for (int di = -1; di <= 1; ++di)
    for (int dj = -1; dj <= 1; ++dj)
      for (int dk = -1; dk <= 1; ++dk)
        block[di + 1][dj + 1][dk + 1] = grid.intensity({idx.i + di, idx.j + dj, idx.k + dk});
  return block;
}

}  // namespace curbx
