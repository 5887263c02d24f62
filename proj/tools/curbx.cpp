#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "curbx/cloud_io.hpp"
#include "curbx/config.hpp"
#include "curbx/error.hpp"
#include "curbx/ground_filter.hpp"
#include "curbx/pipeline.hpp"

namespace fs = std::filesystem;
using namespace curbx;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string out = ".";
  bool dump_energy = false;
};

PipelineConfig effective_config(const Globals& g) {
  auto config = g.config_path.empty() ? PipelineConfig{} : load_config(g.config_path);
  if (g.seed) config.seed = *g.seed;
  if (g.threads) config.threads = *g.threads;
  config.validate();
  return config;
}

fs::path prepare_out(const Globals& g, const PipelineConfig& config) {
  fs::path out(g.out);
  fs::create_directories(out);
  save_config(config, out / "config.ini");
  return out;
}

int cmd_synth(const Globals& g) {
  const auto config = effective_config(g);
  const auto out = prepare_out(g, config);
  const auto scene = make_scene(config);
  write_xyz(scene.cloud, out / "cloud.xyz");
  write_polylines(scene.truth, out / "truth.poly");
  std::printf("%zu points, %zu truth polylines -> %s\n", scene.cloud.size(), scene.truth.size(), out.c_str());
  return 0;
}

int cmd_extract(const Globals& g, const std::string& cloud_path) {
  const auto config = effective_config(g);
  const auto cloud = read_xyz(cloud_path);
  const auto out = prepare_out(g, config);
  const auto ex = extract(cloud, config);
  write_xyz(candidate_points(ex.grid, ex.candidates), out / "candidates.xyz");
  if (g.dump_energy) write_energy_csv(ex.energy, out / "energy.csv");
  std::printf("voxel %.4g m, %zu occupied, %zu candidates -> %s\n", ex.grid.voxel_size(), ex.grid.occupied(),
              ex.candidates.size(), (out / "candidates.xyz").c_str());
  return 0;
}

int cmd_refine(const Globals& g, const std::string& cloud_path, const std::string& cand_path) {
  const auto config = effective_config(g);
  const auto cloud = read_xyz(cloud_path);
  const auto points = read_xyz(cand_path);
  const auto out = prepare_out(g, config);
  const auto gg = prepare_grid(cloud, config);
  const auto candidates = candidates_from_points(gg.grid, points);
  const auto result = refine(gg.grid, candidates, config);
  write_polylines(result.curbs, out / "curbs.poly");
  write_region_csv(result.reports, out / "regions.csv");
  std::printf("%zu curb polylines -> %s\n", result.curbs.size(), (out / "curbs.poly").c_str());
  return 0;
}

int cmd_eval(const Globals& g, const std::string& result_path, const std::string& truth_path,
             const std::string& cloud_path) {
  const auto config = effective_config(g);
  const auto result = read_polylines(result_path);
  const auto truth = read_polylines(truth_path);
  const auto cloud = read_xyz(cloud_path);
  const auto out = prepare_out(g, config);
  const auto ground = extract_ground(cloud, config.ground);
  const auto report = evaluate_run(ground, result, truth, config);
  write_metrics_csv(report, out / "metrics.csv");
  std::cout << format_metrics_table(report);
  return 0;
}

int cmd_pipeline(const Globals& g, const std::string& cloud_path, const std::string& truth_path) {
  const auto config = effective_config(g);
  const auto out = prepare_out(g, config);
  PointCloud cloud;
  std::vector<Polyline3> truth;
  bool have_truth = false;
  if (cloud_path.empty()) {
    auto scene = make_scene(config);
    write_xyz(scene.cloud, out / "cloud.xyz");
    write_polylines(scene.truth, out / "truth.poly");
    cloud = std::move(scene.cloud);
    truth = std::move(scene.truth);
    have_truth = true;
  } else {
    cloud = read_xyz(cloud_path);
    if (!truth_path.empty()) {
      truth = read_polylines(truth_path);
      have_truth = true;
    }
  }
  const auto run = run_pipeline(cloud, have_truth ? &truth : nullptr, config);
  write_xyz(candidate_points(run.extraction.grid, run.extraction.candidates), out / "candidates.xyz");
  if (g.dump_energy) write_energy_csv(run.extraction.energy, out / "energy.csv");
  write_polylines(run.refined.curbs, out / "curbs.poly");
  write_region_csv(run.refined.reports, out / "regions.csv");
  std::printf("%zu points, voxel %.4g m, %zu candidates, %zu curbs\n", cloud.size(), run.extraction.grid.voxel_size(),
              run.extraction.candidates.size(), run.refined.curbs.size());
  std::printf("extract %.2f s, refine %.2f s, eval %.2f s\n", run.timings.extract, run.timings.refine,
              run.timings.evaluate);
  if (run.metrics) {
    write_metrics_csv(*run.metrics, out / "metrics.csv");
    std::cout << format_metrics_table(*run.metrics);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"curb extraction from LiDAR point clouds"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "INI config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "random seed (overrides [run] seed)");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--threads", g.threads, "worker threads")->check(CLI::PositiveNumber);
  app.add_flag("--dump-energy", g.dump_energy, "write per-voxel energy.csv");
  app.fallthrough();

  std::string cloud, cands, result, truth;
  auto* synth = app.add_subcommand("synth", "generate a synthetic scene (cloud.xyz, truth.poly)");
  auto* ext = app.add_subcommand("extract", "curb candidate voxels (candidates.xyz)");
  ext->add_option("cloud", cloud, "XYZ point cloud")->required()->check(CLI::ExistingFile);
  auto* ref = app.add_subcommand("refine", "link candidates into curb polylines (curbs.poly)");
  ref->add_option("cloud", cloud, "XYZ point cloud")->required()->check(CLI::ExistingFile);
  ref->add_option("candidates", cands, "candidate XYZ from extract")->required()->check(CLI::ExistingFile);
  auto* ev = app.add_subcommand("eval", "point-wise metrics (metrics.csv)");
  ev->add_option("result", result, "result polylines")->required()->check(CLI::ExistingFile);
  ev->add_option("truth", truth, "truth polylines")->required()->check(CLI::ExistingFile);
  ev->add_option("cloud", cloud, "XYZ point cloud")->required()->check(CLI::ExistingFile);
  auto* pipe = app.add_subcommand("pipeline", "synthesize (or read) a cloud and run every stage");
  pipe->add_option("cloud", cloud, "XYZ point cloud; omitted = synthesize from [scene]")->check(CLI::ExistingFile);
  pipe->add_option("--truth", truth, "truth polylines for the given cloud")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*synth) return cmd_synth(g);
    if (*ext) return cmd_extract(g, cloud);
    if (*ref) return cmd_refine(g, cloud, cands);
    if (*ev) return cmd_eval(g, result, truth, cloud);
    return cmd_pipeline(g, cloud, truth);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failed: " << e.what() << "\n";
    return 2;
  }
}
