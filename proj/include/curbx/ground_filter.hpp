#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "curbx/cloud_io.hpp"

namespace curbx {

inline constexpr double kDefaultBinWidth = 0.05;

struct ElevationBin {
  double elevation_low = 0.0;
  std::uint64_t count = 0;
};

// Histogram of point elevations. Bins are contiguous and ascending; the
// first bin starts at the cloud's min z and the last one contains max z.
struct ElevationHistogram {
  double bin_width = kDefaultBinWidth;
  std::vector<ElevationBin> bins;

  double bin_center(std::size_t b) const { return bins[b].elevation_low + 0.5 * bin_width; }
  std::uint64_t total() const;
  // f smoothed by a 3-bin moving average (zero outside the histogram).
  std::vector<double> smoothed() const;
  // Central differences of the smoothed counts, per unit elevation.
  std::vector<double> derivative() const;
};

// Elevation interval kept as ground. peak is m, lower_flank/upper_flank are
// the f' extrema A and B around it.
struct GroundBand {
  double z_low = 0.0;
  double z_high = 0.0;
  double peak = 0.0;
  double lower_flank = 0.0;
  double upper_flank = 0.0;

  bool valid() const { return z_low < peak && peak < z_high; }
  bool contains(double z) const { return z_low <= z && z <= z_high; }
};

// z_low = m - 2(m - A), z_high = m - 2(m - B).
GroundBand make_band(double peak, double lower_flank, double upper_flank);

ElevationHistogram build_histogram(const PointCloud& cloud, double bin_width = kDefaultBinWidth);

// Band [m - 2(m - A), m - 2(m - B)] from the histogram peak m and the
// nearest f' extrema A < m < B. A missing flank falls back to m -/+ 3 bins.
// Throws ValidationError when the peak is not unique.
GroundBand find_ground_band(const ElevationHistogram& hist);

// Band with the same formula terms, widened so that it reaches at least
// min_half_width on each side of the peak.
GroundBand widen_band(const GroundBand& band, double min_half_width);

// Points with z_low <= z <= z_high in input order. Throws ValidationError
// when nothing survives.
PointCloud filter_ground(const PointCloud& cloud, const GroundBand& band);

struct GroundFilterOptions {
  double bin_width = kDefaultBinWidth;
  double min_half_width = 0.0;
  bool tile_banding = false;
  double tile_size = 20.0;
};

// Histogram + band + filter. With tile_banding the band is computed per
// tile_size x tile_size cell in XY; tiles whose band cannot be determined
// use the global band.
PointCloud extract_ground(const PointCloud& cloud, const GroundFilterOptions& options);

}  // namespace curbx
