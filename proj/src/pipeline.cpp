#include "curbx/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

#include "curbx/error.hpp"
#include "curbx/ground_filter.hpp"

namespace curbx {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct CellHash {
  std::size_t operator()(const std::pair<std::int64_t, std::int64_t>& c) const {
    return std::hash<std::int64_t>()(c.first * 73856093 ^ c.second * 19349663);
  }
};

}  // namespace

SyntheticScene make_scene(const PipelineConfig& config) {
  auto spec = config.scene.spec;
  spec.seed = derive_seed(config.seed, "scene");
  auto scene = generate(spec);
  if (config.scene.keep_fraction < 1.0)
    scene = downsample(scene, config.scene.keep_fraction, derive_seed(config.seed, "downsample"));
  if (config.scene.noise_t > 0.0) scene = add_noise(scene, config.scene.noise_t, derive_seed(config.seed, "noise"));
  if (config.scene.gap_width > 0.0) scene = add_scanner_gap(scene, config.scene.gap_offset, config.scene.gap_width);
  return scene;
}

double mean_point_spacing(const PointCloud& cloud, double cell) {
  if (cloud.size() == 0) throw ValidationError("mean_point_spacing: empty cloud");
  if (!(cell > 0.0)) throw ValidationError("mean_point_spacing: cell must be positive");
  std::unordered_set<std::pair<std::int64_t, std::int64_t>, CellHash> cells;
  for (const auto& p : cloud)
    cells.insert({static_cast<std::int64_t>(std::floor(p.x / cell)), static_cast<std::int64_t>(std::floor(p.y / cell))});
  const double area = static_cast<double>(cells.size()) * cell * cell;
  return std::sqrt(area / static_cast<double>(cloud.size()));
}

double effective_voxel_size(const PointCloud& ground, const VoxelConfig& voxel) {
  if (!voxel.adaptive) return voxel.voxel_size;
  return std::max(voxel.voxel_size, voxel.spacing_factor * mean_point_spacing(ground));
}

GroundGrid prepare_grid(const PointCloud& cloud, const PipelineConfig& config) {
  if (cloud.size() < 100) throw ValidationError("cloud has " + std::to_string(cloud.size()) + " points, need at least 100");
  auto ground = extract_ground(cloud, config.ground);
  const double vs = effective_voxel_size(ground, config.voxel);
  auto grid = build_grid(ground, vs);
  return {std::move(ground), std::move(grid)};
}

Extraction extract(const PointCloud& cloud, const PipelineConfig& config) {
  auto [ground, grid] = prepare_grid(cloud, config);
  auto energy = compute_energy(grid, {config.sigma, config.threads});
  scale_energy(energy);
  auto candidates = select_candidates(energy, config.candidate_fraction);
  if (candidates.size() == 0) throw std::runtime_error("no curb candidates: every voxel has zero energy");
  return {std::move(ground), std::move(grid), std::move(energy), std::move(candidates)};
}

PointCloud candidate_points(const VoxelGrid& grid, const CandidateSet& candidates) {
  std::vector<Point3> pts;
  pts.reserve(candidates.size());
  for (const auto& v : candidates.candidates) pts.push_back(grid.center(v));
  return PointCloud(std::move(pts));
}

CandidateSet candidates_from_points(const VoxelGrid& grid, const PointCloud& points) {
  CandidateSet set;
  for (const auto& p : points) {
    const auto v = grid.index_of(p);
    if (!grid.contains(v)) {
      throw ValidationError("candidate (" + std::to_string(p.x) + ", " + std::to_string(p.y) + ", " +
                            std::to_string(p.z) + ") is not in an occupied voxel of this cloud");
    }
    set.candidates.push_back(v);
  }
  std::sort(set.candidates.begin(), set.candidates.end());
  set.candidates.erase(std::unique(set.candidates.begin(), set.candidates.end()), set.candidates.end());
  return set;
}

RefineResult refine(const VoxelGrid& grid, const CandidateSet& candidates, const PipelineConfig& config) {
  auto options = config.refine;
  options.threads = config.threads;
  // Regions keep their metric size when sparse clouds coarsen the voxels.
  const double coarsen = config.voxel.voxel_size / grid.voxel_size();
  if (coarsen < 1.0)
    for (auto& e : options.region_extents) e = std::max(8, static_cast<int>(std::lround(e * coarsen)));
  return refine_scene(grid, candidates, options);
}

MetricsReport evaluate_run(const PointCloud& ground, std::span<const Polyline3> result, std::span<const Polyline3> truth,
                           const PipelineConfig& config) {
  return evaluate(ground, result, truth, config.eval.d_grid, config.eval.zone_radius);
}

PipelineRun run_pipeline(const PointCloud& cloud, const std::vector<Polyline3>* truth, const PipelineConfig& config) {
  Timings timings;
  auto t0 = std::chrono::steady_clock::now();
  auto extraction = extract(cloud, config);
  timings.extract = seconds_since(t0);
  t0 = std::chrono::steady_clock::now();
  auto refined = refine(extraction.grid, extraction.candidates, config);
  timings.refine = seconds_since(t0);
  std::optional<MetricsReport> metrics;
  if (truth) {
    t0 = std::chrono::steady_clock::now();
    metrics = evaluate_run(extraction.ground, refined.curbs, *truth, config);
    timings.evaluate = seconds_since(t0);
  }
  return {std::move(extraction), std::move(refined), std::move(metrics), timings};
}

}  // namespace curbx
