#include "curbx/ground_filter.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <utility>

#include "curbx/error.hpp"

namespace curbx {

namespace {

// Zero bins added on each side so that a spike still has flanks in f'.
constexpr std::ptrdiff_t kPad = 4;
constexpr double kFallbackBins = 3.0;
constexpr std::size_t kMinTilePoints = 200;

// Counts indexed with padding: counts[b + kPad] is bin b.
std::vector<double> padded_counts(const ElevationHistogram& hist) {
  std::vector<double> f(hist.bins.size() + 2 * kPad, 0.0);
  for (std::size_t b = 0; b < hist.bins.size(); ++b) f[b + kPad] = static_cast<double>(hist.bins[b].count);
  return f;
}

std::vector<double> moving_average(const std::vector<double>& f) {
  std::vector<double> s(f.size(), 0.0);
  for (std::size_t b = 0; b < f.size(); ++b) {
    const double left = b > 0 ? f[b - 1] : 0.0;
    const double right = b + 1 < f.size() ? f[b + 1] : 0.0;
    s[b] = (left + f[b] + right) / 3.0;
  }
  return s;
}

std::vector<double> central_difference(const std::vector<double>& s, double step) {
  std::vector<double> d(s.size(), 0.0);
  for (std::size_t b = 0; b < s.size(); ++b) {
    const double left = b > 0 ? s[b - 1] : 0.0;
    const double right = b + 1 < s.size() ? s[b + 1] : 0.0;
    d[b] = (right - left) / (2.0 * step);
  }
  return d;
}

struct Run {
  std::ptrdiff_t first;
  std::ptrdiff_t last;
};

// Maximal runs of equal values; a run is an extremum when both neighbouring
// runs lie strictly on the same side of it.
std::vector<Run> extremal_runs(const std::vector<double>& d) {
  std::vector<Run> runs;
  for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(d.size()); ++b) {
    if (!runs.empty() && d[b] == d[runs.back().last]) {
      runs.back().last = b;
    } else {
      runs.push_back({b, b});
    }
  }
  std::vector<Run> extrema;
  for (std::size_t r = 1; r + 1 < runs.size(); ++r) {
    const double here = d[runs[r].first];
    const double before = d[runs[r - 1].first];
    const double after = d[runs[r + 1].first];
    if ((here > before && here > after) || (here < before && here < after)) extrema.push_back(runs[r]);
  }
  return extrema;
}

double padded_center(const ElevationHistogram& hist, std::ptrdiff_t padded) {
  return hist.bins.front().elevation_low + (static_cast<double>(padded - kPad) + 0.5) * hist.bin_width;
}

}  // namespace

std::uint64_t ElevationHistogram::total() const {
  std::uint64_t n = 0;
  for (const auto& b : bins) n += b.count;
  return n;
}

std::vector<double> ElevationHistogram::smoothed() const {
  auto s = moving_average(padded_counts(*this));
  return {s.begin() + kPad, s.end() - kPad};
}

std::vector<double> ElevationHistogram::derivative() const {
  auto d = central_difference(moving_average(padded_counts(*this)), bin_width);
  return {d.begin() + kPad, d.end() - kPad};
}

GroundBand make_band(double peak, double lower_flank, double upper_flank) {
  GroundBand band;
  band.peak = peak;
  band.lower_flank = lower_flank;
  band.upper_flank = upper_flank;
  band.z_low = peak - 2.0 * (peak - lower_flank);
  band.z_high = peak - 2.0 * (peak - upper_flank);
  return band;
}

ElevationHistogram build_histogram(const PointCloud& cloud, double bin_width) {
  if (!(bin_width > 0.0)) throw ValidationError("bin_width must be positive, got " + std::to_string(bin_width));
  if (cloud.empty()) throw ValidationError("cannot build a histogram of an empty cloud");
  const double lo = cloud.bounds().min.z;
  const double hi = cloud.bounds().max.z;
  const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil((hi - lo) / bin_width)));

  ElevationHistogram hist;
  hist.bin_width = bin_width;
  hist.bins.resize(n);
  for (std::size_t b = 0; b < n; ++b) hist.bins[b].elevation_low = lo + static_cast<double>(b) * bin_width;
  for (const auto& p : cloud) {
    auto b = static_cast<std::size_t>(std::floor((p.z - lo) / bin_width));
    hist.bins[std::min(b, n - 1)].count++;
  }
  return hist;
}

GroundBand find_ground_band(const ElevationHistogram& hist) {
  if (hist.bins.empty()) throw ValidationError("empty elevation histogram");
  const auto f = padded_counts(hist);
  const auto peak_it = std::max_element(f.begin(), f.end());
  if (*peak_it <= 0.0 || std::count(f.begin(), f.end(), *peak_it) != 1) {
    throw ValidationError("elevation histogram has no unique peak");
  }
  const auto m = static_cast<std::ptrdiff_t>(peak_it - f.begin());
  const auto d = central_difference(moving_average(f), hist.bin_width);

  std::optional<std::ptrdiff_t> below;
  std::optional<std::ptrdiff_t> above;
  for (const auto& run : extremal_runs(d)) {
    if (run.first < m) {
      const auto nearest = std::min(run.last, m - 1);
      if (!below || nearest > *below) below = nearest;
    }
    if (run.last > m) {
      const auto nearest = std::max(run.first, m + 1);
      if (!above || nearest < *above) above = nearest;
    }
  }

  const double peak = padded_center(hist, m);
  return make_band(peak, below ? padded_center(hist, *below) : peak - kFallbackBins * hist.bin_width,
                   above ? padded_center(hist, *above) : peak + kFallbackBins * hist.bin_width);
}

GroundBand widen_band(const GroundBand& band, double min_half_width) {
  GroundBand out = band;
  out.z_low = std::min(band.z_low, band.peak - min_half_width);
  out.z_high = std::max(band.z_high, band.peak + min_half_width);
  return out;
}

PointCloud filter_ground(const PointCloud& cloud, const GroundBand& band) {
  if (!band.valid()) throw ValidationError("ground band is not valid (need z_low < peak < z_high)");
  std::vector<Point3> kept;
  kept.reserve(cloud.size());
  for (const auto& p : cloud)
    if (band.contains(p.z)) kept.push_back(p);
  if (kept.empty()) throw ValidationError("ground band removed every point");
  return PointCloud(std::move(kept));
}

PointCloud extract_ground(const PointCloud& cloud, const GroundFilterOptions& options) {
  const auto global = widen_band(find_ground_band(build_histogram(cloud, options.bin_width)), options.min_half_width);
  if (!options.tile_banding) return filter_ground(cloud, global);
  if (!(options.tile_size > 0.0)) throw ValidationError("tile_size must be positive");

  using Tile = std::pair<std::int64_t, std::int64_t>;
  const auto tile_of = [&](const Point3& p) {
    return Tile{static_cast<std::int64_t>(std::floor(p.x / options.tile_size)),
                static_cast<std::int64_t>(std::floor(p.y / options.tile_size))};
  };
  std::map<Tile, std::vector<Point3>> tiles;
  for (const auto& p : cloud) tiles[tile_of(p)].push_back(p);

  std::map<Tile, GroundBand> bands;
  for (auto& [tile, pts] : tiles) {
    GroundBand band = global;
    if (pts.size() >= kMinTilePoints) {
      try {
        band = widen_band(find_ground_band(build_histogram(PointCloud(std::move(pts)), options.bin_width)),
                          options.min_half_width);
      } catch (const ValidationError&) {
        band = global;
      }
    }
    bands.emplace(tile, band);
  }

  std::vector<Point3> kept;
  kept.reserve(cloud.size());
  for (const auto& p : cloud)
    if (bands.at(tile_of(p)).contains(p.z)) kept.push_back(p);
  if (kept.empty()) throw ValidationError("ground band removed every point");
  return PointCloud(std::move(kept));
}

}  // namespace curbx
