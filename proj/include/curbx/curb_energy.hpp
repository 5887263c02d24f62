#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <unordered_map>
#include <vector>

#include "curbx/voxel_grid.hpp"

namespace curbx {

inline constexpr double kDefaultSigma = 0.8;
inline constexpr double kDefaultCandidateFraction = 0.20;

// 3x3x3 weights addressed as s[di+1][dj+1][dk+1]; applied as a correlation:
// out(v) = sum_d s[d] * in(v + d).
using Stencil27 = std::array<std::array<std::array<double, 3>, 3>, 3>;

struct SobelCubes {
  Stencil27 x;
  Stencil27 y;
  Stencil27 z;
};

// Derivative [-1 0 1] along the cube's own axis, smoothing [1 2 1] along the
// other two.
const SobelCubes& sobel_cubes();

class GaussianKernel3 {
 public:
  explicit GaussianKernel3(double sigma = kDefaultSigma);

  double sigma() const { return sigma_; }
  const Stencil27& weights() const { return weights_; }
  // Normalized 1D factor; weights() is its outer product with itself.
  const std::array<double, 3>& taps() const { return taps_; }

 private:
  double sigma_;
  std::array<double, 3> taps_;
  Stencil27 weights_;
};

using SparseField = std::unordered_map<VoxelIndex, double, VoxelIndexHash>;

// Stencil-weighted neighbourhood sum at every voxel whose 27-neighbourhood
// touches a stored input voxel; absent voxels read as 0.
SparseField convolve_3x3x3(const VoxelGrid& grid, const Stencil27& stencil);
SparseField convolve_3x3x3(const SparseField& field, const Stencil27& stencil);

inline double field_at(const SparseField& f, const VoxelIndex& v) {
  const auto it = f.find(v);
  return it == f.end() ? 0.0 : it->second;
}

struct GradientField {
  SparseField gx;
  SparseField gy;
  SparseField gz;
};

// Symmetric 3x3 matrix stored by its six unique entries.
struct SymmetricTensor3 {
  double xx = 0.0, yy = 0.0, zz = 0.0;
  double xy = 0.0, xz = 0.0, yz = 0.0;

  double trace() const { return xx + yy + zz; }
};

struct StructureTensorField {
  SparseField xx, yy, zz, xy, xz, yz;

  SymmetricTensor3 at(const VoxelIndex& v) const;
};

// Sobel cubes applied to the Gaussian-smoothed intensity.
GradientField gradients(const VoxelGrid& grid, const GaussianKernel3& kernel);

// The six gradient products, each Gaussian-window averaged.
StructureTensorField structure_tensor(const GradientField& gf, const GaussianKernel3& kernel);

// Sum over the xy, xz and yz principal 2x2 blocks of det/trace, times
// trace(M)^2. Blocks with trace below 1e-12 contribute 0.
double energy_fast(const SymmetricTensor3& m);

// (ab/(a+b) + ag/(a+g) + gb/(g+b)) * (a+b+g)^2 from the eigenvalues; pairs
// summing to 0 contribute 0.
double energy_oracle(double alpha, double beta, double gamma);

// Closed-form eigenvalues of a symmetric 3x3 matrix, descending.
std::array<double, 3> symmetric_eigenvalues(const SymmetricTensor3& m);

struct VoxelEnergy {
  VoxelIndex index;
  double gx = 0.0, gy = 0.0, gz = 0.0;
  SymmetricTensor3 tensor;
  double energy = 0.0;
  double scaled = 0.0;
};

// One entry per occupied voxel, in lexicographic index order.
struct EnergyField {
  std::vector<VoxelEnergy> voxels;

  std::size_t positive_count() const;
};

struct EnergyOptions {
  double sigma = kDefaultSigma;
  unsigned threads = 1;
};

// Production path: per 8^3 brick, dense separable smoothing, Sobel,
// products and product smoothing, then energy_fast at occupied voxels.
// Numerically equal (to rounding) to structure_tensor(gradients(...)).
EnergyField compute_energy(const VoxelGrid& grid, const EnergyOptions& options = {});

// Min-max map of E over voxels with E > 0 onto [0, 255]; zero-energy voxels
// and constant fields map to 0.
void scale_energy(EnergyField& field);

struct CandidateSet {
  std::vector<VoxelIndex> candidates;  // lexicographic order

  bool contains(const VoxelIndex& v) const;
  std::size_t size() const { return candidates.size(); }
};

// The ceil(fraction * n) highest-energy voxels among the n with E > 0; ties
// go to the lexicographically smaller index.
CandidateSet select_candidates(const EnergyField& field, double fraction = kDefaultCandidateFraction);

// Selection by an arbitrary per-voxel score (same tie rule).
CandidateSet select_top(std::span<const VoxelIndex> voxels, std::span<const double> scores, double fraction);

// "i,j,k,Gx,Gy,Gz,E,E_scaled"
void write_energy_csv(const EnergyField& field, const std::filesystem::path& path);

}  // namespace curbx
