#pragma once

#include <optional>
#include <span>
#include <vector>

#include "curbx/config.hpp"
#include "curbx/curb_energy.hpp"
#include "curbx/evaluation.hpp"
#include "curbx/lcpm.hpp"
#include "curbx/synth_scene.hpp"
#include "curbx/voxel_grid.hpp"

namespace curbx {

// generate, then downsample, noise and scanner gap as configured. Seeds are
// derived from config.seed by fixed labels.
SyntheticScene make_scene(const PipelineConfig& config);

// sqrt(area / n), the area being the XY footprint covered by cells of
// `cell` meters holding at least one point.
double mean_point_spacing(const PointCloud& cloud, double cell = 0.5);

double effective_voxel_size(const PointCloud& ground, const VoxelConfig& voxel);

struct GroundGrid {
  PointCloud ground;
  VoxelGrid grid;
};

// Ground filter and voxelization. Throws ValidationError below 100 points.
GroundGrid prepare_grid(const PointCloud& cloud, const PipelineConfig& config);

struct Extraction {
  PointCloud ground;
  VoxelGrid grid;
  EnergyField energy;
  CandidateSet candidates;
};

// prepare_grid, energy and candidate selection. Throws std::runtime_error
// when no candidate survives.
Extraction extract(const PointCloud& cloud, const PipelineConfig& config);

// Candidate voxels as their centres, and back.
PointCloud candidate_points(const VoxelGrid& grid, const CandidateSet& candidates);
// Throws ValidationError for a point outside every occupied voxel.
CandidateSet candidates_from_points(const VoxelGrid& grid, const PointCloud& points);

RefineResult refine(const VoxelGrid& grid, const CandidateSet& candidates, const PipelineConfig& config);

MetricsReport evaluate_run(const PointCloud& ground, std::span<const Polyline3> result, std::span<const Polyline3> truth,
                           const PipelineConfig& config);

struct Timings {
  double extract = 0.0, refine = 0.0, evaluate = 0.0;  // seconds
};

struct PipelineRun {
  Extraction extraction;
  RefineResult refined;
  std::optional<MetricsReport> metrics;  // present when truth was given
  Timings timings;
};

PipelineRun run_pipeline(const PointCloud& cloud, const std::vector<Polyline3>* truth, const PipelineConfig& config);

}  // namespace curbx
