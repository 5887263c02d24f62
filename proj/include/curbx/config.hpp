#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "curbx/evaluation.hpp"
#include "curbx/ground_filter.hpp"
#include "curbx/lcpm.hpp"
#include "curbx/synth_scene.hpp"
#include "curbx/voxel_grid.hpp"

namespace curbx {

// Scene geometry plus the perturbations applied after generation.
struct SceneConfig {
  SceneSpec spec;
  double keep_fraction = 1.0;
  double noise_t = 0.0;
  double gap_offset = 0.0;  // y of the scanner-gap centreline
  double gap_width = 0.0;   // 0 = no gap
};

struct VoxelConfig {
  double voxel_size = kDefaultVoxelSize;
  // Sparse clouds get max(voxel_size, spacing_factor * mean point spacing).
  bool adaptive = true;
  double spacing_factor = 1.2;
};

struct EvalConfig {
  std::vector<double> d_grid = kDefaultDGrid;
  double zone_radius = 1.0;
};

struct PipelineConfig {
  SceneConfig scene;
  GroundFilterOptions ground{kDefaultBinWidth, 0.3, false, 20.0};
  VoxelConfig voxel;
  double sigma = kDefaultSigma;
  double candidate_fraction = kDefaultCandidateFraction;
  RefineOptions refine;
  EvalConfig eval;
  std::uint64_t seed = 1;
  unsigned threads = 1;

  // Throws ValidationError naming "section.key".
  void validate() const;
};

// INI text: [section] headers, key = value, '#' or ';' comments. Unknown
// sections or keys, keys outside a section and malformed values throw
// ValidationError. Missing keys keep their defaults.
PipelineConfig parse_config(std::string_view text);
PipelineConfig load_config(const std::filesystem::path& path);

// Every key with its effective value; parse_config(format_config(c)) == c.
std::string format_config(const PipelineConfig& config);
void save_config(const PipelineConfig& config, const std::filesystem::path& path);

}  // namespace curbx
