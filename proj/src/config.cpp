#include "curbx/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <type_traits>

#include "curbx/error.hpp"

namespace curbx {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) return out;
    start = pos + 1;
  }
}

double to_double(const std::string& s, const std::string& name) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) throw ValidationError(name + ": not a number: '" + s + "'");
  return v;
}

std::uint64_t to_uint(const std::string& s, const std::string& name) {
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw ValidationError(name + ": not a non-negative integer: '" + s + "'");
  }
  return v;
}

bool to_bool(const std::string& s, const std::string& name) {
  if (s == "true") return true;
  if (s == "false") return false;
  throw ValidationError(name + ": expected true or false, got '" + s + "'");
}

std::string fmt(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string fmt_list(const std::vector<double>& v) {
  std::string out;
  for (std::size_t n = 0; n < v.size(); ++n) out += (n ? "," : "") + fmt(v[n]);
  return out;
}

std::vector<RoadInterval> to_intervals(const std::string& s, const std::string& name) {
  std::vector<RoadInterval> out;
  for (const auto& item : split(s, ',')) {
    const auto parts = split(item, ':');
    if (parts.size() != 2) throw ValidationError(name + ": expected start:length items, got '" + item + "'");
    out.push_back({to_double(parts[0], name), to_double(parts[1], name)});
  }
  return out;
}

std::string fmt_intervals(const std::vector<RoadInterval>& v) {
  std::string out;
  for (std::size_t n = 0; n < v.size(); ++n) out += (n ? "," : "") + fmt(v[n].start) + ":" + fmt(v[n].length);
  return out;
}

struct Field {
  std::string section, key;
  std::function<void(PipelineConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

template <class Ref>
Field real(std::string section, std::string key, Ref ref) {
  return {std::move(section), std::move(key),
          [ref](PipelineConfig& c, const std::string& v, const std::string& n) { ref(c) = to_double(v, n); },
          [ref](const PipelineConfig& c) { return fmt(ref(c)); }};
}

template <class Ref>
Field integer(std::string section, std::string key, Ref ref) {
  return {std::move(section), std::move(key),
          [ref](PipelineConfig& c, const std::string& v, const std::string& n) {
            using T = std::remove_reference_t<decltype(ref(c))>;
            const auto u = to_uint(v, n);
            if (u > static_cast<std::uint64_t>(std::numeric_limits<T>::max())) throw ValidationError(n + ": too large");
            ref(c) = static_cast<T>(u);
          },
          [ref](const PipelineConfig& c) { return std::to_string(ref(c)); }};
}

template <class Ref>
Field flag(std::string section, std::string key, Ref ref) {
  return {std::move(section), std::move(key),
          [ref](PipelineConfig& c, const std::string& v, const std::string& n) { ref(c) = to_bool(v, n); },
          [ref](const PipelineConfig& c) { return ref(c) ? "true" : "false"; }};
}

const std::vector<Field>& fields() {
  using C = PipelineConfig;
  static const std::vector<Field> table = {
      real("scene", "road_length", [](auto& c) -> auto& { return c.scene.spec.road_length; }),
      real("scene", "road_width", [](auto& c) -> auto& { return c.scene.spec.road_width; }),
      real("scene", "sidewalk_width", [](auto& c) -> auto& { return c.scene.spec.sidewalk_width; }),
      real("scene", "curb_height", [](auto& c) -> auto& { return c.scene.spec.curb_height; }),
      {"scene", "curb_profile",
       [](C& c, const std::string& v, const std::string& n) {
         if (v == "vertical") {
           c.scene.spec.curb_profile = CurbProfile::vertical;
         } else if (v == "beveled") {
           c.scene.spec.curb_profile = CurbProfile::beveled;
         } else {
           throw ValidationError(n + ": expected vertical or beveled, got '" + v + "'");
         }
       },
       [](const C& c) { return c.scene.spec.curb_profile == CurbProfile::vertical ? "vertical" : "beveled"; }},
      real("scene", "density_road", [](auto& c) -> auto& { return c.scene.spec.density_road; }),
      real("scene", "density_sidewalk", [](auto& c) -> auto& { return c.scene.spec.density_sidewalk; }),
      {"scene", "density_gradient",
       [](C& c, const std::string& v, const std::string& n) {
         if (v == "none") {
           c.scene.spec.density_gradient.reset();
           return;
         }
         const auto parts = split(v, ',');
         if (parts.size() != 2) throw ValidationError(n + ": expected none or left,right");
         c.scene.spec.density_gradient = DensityGradient{to_double(parts[0], n), to_double(parts[1], n)};
       },
       [](const C& c) {
         const auto& g = c.scene.spec.density_gradient;
         return g ? fmt(g->left) + "," + fmt(g->right) : std::string("none");
       }},
      real("scene", "slope_deg", [](auto& c) -> auto& { return c.scene.spec.slope_deg; }),
      {"scene", "occlusions",
       [](C& c, const std::string& v, const std::string& n) { c.scene.spec.occlusions = to_intervals(v, n); },
       [](const C& c) { return fmt_intervals(c.scene.spec.occlusions); }},
      {"scene", "ramps", [](C& c, const std::string& v, const std::string& n) { c.scene.spec.ramps = to_intervals(v, n); },
       [](const C& c) { return fmt_intervals(c.scene.spec.ramps); }},
      flag("scene", "intersection", [](auto& c) -> auto& { return c.scene.spec.intersection; }),
      real("scene", "keep_fraction", [](auto& c) -> auto& { return c.scene.keep_fraction; }),
      real("scene", "noise_t", [](auto& c) -> auto& { return c.scene.noise_t; }),
      real("scene", "gap_offset", [](auto& c) -> auto& { return c.scene.gap_offset; }),
      real("scene", "gap_width", [](auto& c) -> auto& { return c.scene.gap_width; }),

      real("ground", "bin_width", [](auto& c) -> auto& { return c.ground.bin_width; }),
      real("ground", "min_half_width", [](auto& c) -> auto& { return c.ground.min_half_width; }),
      flag("ground", "tile_banding", [](auto& c) -> auto& { return c.ground.tile_banding; }),
      real("ground", "tile_size", [](auto& c) -> auto& { return c.ground.tile_size; }),

      real("voxel", "voxel_size", [](auto& c) -> auto& { return c.voxel.voxel_size; }),
      flag("voxel", "adaptive", [](auto& c) -> auto& { return c.voxel.adaptive; }),
      real("voxel", "spacing_factor", [](auto& c) -> auto& { return c.voxel.spacing_factor; }),

      real("energy", "sigma", [](auto& c) -> auto& { return c.sigma; }),
      real("energy", "candidate_fraction", [](auto& c) -> auto& { return c.candidate_fraction; }),

      {"lcpm", "region_extents",
       [](C& c, const std::string& v, const std::string& n) {
         const auto parts = split(v, ',');
         if (parts.size() != 3) throw ValidationError(n + ": expected three integers");
         for (int a = 0; a < 3; ++a) {
           const auto e = to_uint(parts[static_cast<std::size_t>(a)], n);
           if (e < 1 || e > 100000) throw ValidationError(n + ": extents must lie in [1, 100000]");
           c.refine.region_extents[static_cast<std::size_t>(a)] = static_cast<int>(e);
         }
       },
       [](const C& c) {
         const auto& e = c.refine.region_extents;
         return std::to_string(e[0]) + "," + std::to_string(e[1]) + "," + std::to_string(e[2]);
       }},
      real("lcpm", "penalty_d_low", [](auto& c) -> auto& { return c.refine.schedule.penalty_d_low; }),
      real("lcpm", "penalty_d_high", [](auto& c) -> auto& { return c.refine.schedule.penalty_d_high; }),
      real("lcpm", "penalty_s_low", [](auto& c) -> auto& { return c.refine.schedule.penalty_s_low; }),
      real("lcpm", "penalty_s_high", [](auto& c) -> auto& { return c.refine.schedule.penalty_s_high; }),
      real("lcpm", "rho_low", [](auto& c) -> auto& { return c.refine.schedule.rho_low; }),
      real("lcpm", "rho_high", [](auto& c) -> auto& { return c.refine.schedule.rho_high; }),
      real("lcpm", "penalty_v", [](auto& c) -> auto& { return c.refine.schedule.penalty_v; }),
      real("lcpm", "rho_min", [](auto& c) -> auto& { return c.refine.schedule.rho_min; }),
      integer("lcpm", "min_component", [](auto& c) -> auto& { return c.refine.min_component; }),
      real("lcpm", "link_gap", [](auto& c) -> auto& { return c.refine.link_gap; }),
      integer("lcpm", "min_hypothesis", [](auto& c) -> auto& { return c.refine.min_hypothesis; }),
      real("lcpm", "lateral_band", [](auto& c) -> auto& { return c.refine.lateral_band; }),
      real("lcpm", "min_relief", [](auto& c) -> auto& { return c.refine.min_relief; }),
      real("lcpm", "relief_max_voxel", [](auto& c) -> auto& { return c.refine.relief_max_voxel; }),
      real("lcpm", "bridge_gap", [](auto& c) -> auto& { return c.refine.bridge_gap; }),
      real("lcpm", "bridge_angle_deg", [](auto& c) -> auto& { return c.refine.bridge_angle_deg; }),
      real("lcpm", "duplicate_distance", [](auto& c) -> auto& { return c.refine.duplicate_distance; }),
      real("lcpm", "min_curb_length", [](auto& c) -> auto& { return c.refine.min_curb_length; }),
      real("lcpm", "intersection_gap", [](auto& c) -> auto& { return c.refine.intersection_gap; }),

      {"eval", "d_grid",
       [](C& c, const std::string& v, const std::string& n) {
         c.eval.d_grid.clear();
         for (const auto& item : split(v, ',')) c.eval.d_grid.push_back(to_double(item, n));
       },
       [](const C& c) { return fmt_list(c.eval.d_grid); }},
      real("eval", "zone_radius", [](auto& c) -> auto& { return c.eval.zone_radius; }),

      integer("run", "seed", [](auto& c) -> auto& { return c.seed; }),
      integer("run", "threads", [](auto& c) -> auto& { return c.threads; }),
  };
  return table;
}

void require(bool ok, const std::string& name, const std::string& what) {
  if (!ok) throw ValidationError(name + ": " + what);
}

}  // namespace

void PipelineConfig::validate() const {
  scene.spec.validate();
  require(scene.keep_fraction > 0.0 && scene.keep_fraction <= 1.0, "scene.keep_fraction", "must lie in (0, 1]");
  require(scene.noise_t >= 0.0, "scene.noise_t", "must be non-negative");
  require(scene.gap_width >= 0.0, "scene.gap_width", "must be non-negative");
  require(std::isfinite(scene.gap_offset), "scene.gap_offset", "must be finite");

  require(ground.bin_width > 0.0, "ground.bin_width", "must be positive");
  require(ground.min_half_width >= 0.0, "ground.min_half_width", "must be non-negative");
  require(ground.tile_size > 0.0, "ground.tile_size", "must be positive");

  require(voxel.voxel_size > 0.0, "voxel.voxel_size", "must be positive");
  require(voxel.spacing_factor > 0.0, "voxel.spacing_factor", "must be positive");

  require(sigma > 0.0, "energy.sigma", "must be positive");
  require(candidate_fraction > 0.0 && candidate_fraction <= 1.0, "energy.candidate_fraction", "must lie in (0, 1]");

  try {
    refine.schedule.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("lcpm: ") + e.what());
  }
  require(refine.min_component >= 1, "lcpm.min_component", "must be at least 1");
  require(refine.link_gap >= 0.0, "lcpm.link_gap", "must be non-negative");
  require(refine.min_hypothesis >= 2, "lcpm.min_hypothesis", "must be at least 2");
  require(refine.lateral_band > 0.0, "lcpm.lateral_band", "must be positive");
  require(refine.min_relief >= 0.0, "lcpm.min_relief", "must be non-negative");
  require(refine.relief_max_voxel > 0.0, "lcpm.relief_max_voxel", "must be positive");
  require(refine.bridge_gap >= 0.0, "lcpm.bridge_gap", "must be non-negative");
  require(refine.bridge_angle_deg >= 0.0 && refine.bridge_angle_deg <= 90.0, "lcpm.bridge_angle_deg",
          "must lie in [0, 90]");
  require(refine.duplicate_distance >= 0.0, "lcpm.duplicate_distance", "must be non-negative");
  require(refine.min_curb_length >= 0.0, "lcpm.min_curb_length", "must be non-negative");
  require(refine.intersection_gap >= 0.0, "lcpm.intersection_gap", "must be non-negative");

  require(!eval.d_grid.empty(), "eval.d_grid", "needs at least one value");
  for (double d : eval.d_grid) require(d > 0.0, "eval.d_grid", "values must be positive");
  require(eval.zone_radius > 0.0, "eval.zone_radius", "must be positive");

  require(threads >= 1, "run.threads", "must be at least 1");
}

PipelineConfig parse_config(std::string_view text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in{std::string(text)};
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ValidationError("config: " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  std::map<std::pair<std::string, std::string>, const Field*> index;
  for (const auto& f : fields()) index[{f.section, f.key}] = &f;

  PipelineConfig config;
  for (const auto& [section, body] : tree) {
    const bool known = std::any_of(fields().begin(), fields().end(), [&](const Field& f) { return f.section == section; });
    if (!body.data().empty() || (body.empty() && !known)) {
      throw ValidationError("config: key '" + section + "' outside a section");
    }
    if (!known) throw ValidationError("config: unknown section [" + section + "]");
    for (const auto& [key, value] : body) {
      const auto name = section + "." + key;
      const auto it = index.find({section, key});
      if (it == index.end()) throw ValidationError("config: unknown key " + name);
      it->second->set(config, trim(value.data()), name);
    }
  }
  config.validate();
  return config;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string format_config(const PipelineConfig& config) {
  std::ostringstream out;
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) out << '\n';
      section = f.section;
      out << '[' << section << "]\n";
    }
    out << f.key << " = " << f.get(config) << '\n';
  }
  return out.str();
}

void save_config(const PipelineConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << format_config(config);
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace curbx
