#include "curbx/curb_energy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <thread>
#include <unordered_set>

#include "curbx/error.hpp"

namespace curbx {

namespace {

constexpr double kTraceGuard = 1e-12;
constexpr int kBrick = 8;
constexpr int kHalo = 3;  // Gaussian, Sobel, product window: one voxel each

constexpr std::array<double, 3> kDeriv{-1.0, 0.0, 1.0};
constexpr std::array<double, 3> kSmooth{1.0, 2.0, 1.0};

Stencil27 outer(const std::array<double, 3>& a, const std::array<double, 3>& b, const std::array<double, 3>& c) {
  Stencil27 s{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) s[i][j][k] = a[i] * b[j] * c[k];
  return s;
}

template <typename Lookup, typename Keys>
SparseField correlate(const Keys& keys, Lookup&& lookup, const Stencil27& stencil) {
  std::unordered_set<VoxelIndex, VoxelIndexHash> support;
  support.reserve(keys.size() * 4);
  for (const auto& [v, value] : keys)
    for (int di = -1; di <= 1; ++di)
      for (int dj = -1; dj <= 1; ++dj)
        for (int dk = -1; dk <= 1; ++dk) support.insert({v.i + di, v.j + dj, v.k + dk});

  SparseField out;
  out.reserve(support.size());
  for (const auto& v : support) {
    double sum = 0.0;
    for (int di = -1; di <= 1; ++di)
      for (int dj = -1; dj <= 1; ++dj)
        for (int dk = -1; dk <= 1; ++dk) {
          const double w = stencil[di + 1][dj + 1][dk + 1];
          if (w != 0.0) sum += w * lookup(VoxelIndex{v.i + di, v.j + dj, v.k + dk});
        }
    out.emplace(v, sum);
  }
  return out;
}

// Dense x-major block of doubles.
struct Dense3 {
  int n0 = 0, n1 = 0, n2 = 0;
  std::vector<double> data;

  Dense3() = default;
  Dense3(int a, int b, int c) : n0(a), n1(b), n2(c), data(static_cast<std::size_t>(a) * b * c, 0.0) {}
  double& operator()(int a, int b, int c) { return data[(static_cast<std::size_t>(a) * n1 + b) * n2 + c]; }
  double operator()(int a, int b, int c) const { return data[(static_cast<std::size_t>(a) * n1 + b) * n2 + c]; }
};

// 3-tap correlation along one axis; the output loses one voxel at each end
// of that axis.
Dense3 correlate_axis(const Dense3& in, int axis, const std::array<double, 3>& taps) {
  Dense3 out(in.n0 - (axis == 0 ? 2 : 0), in.n1 - (axis == 1 ? 2 : 0), in.n2 - (axis == 2 ? 2 : 0));
  const int da = axis == 0, db = axis == 1, dc = axis == 2;
  for (int a = 0; a < out.n0; ++a)
    for (int b = 0; b < out.n1; ++b)
      for (int c = 0; c < out.n2; ++c) {
        out(a, b, c) = taps[0] * in(a, b, c) + taps[1] * in(a + da, b + db, c + dc) +
                       taps[2] * in(a + 2 * da, b + 2 * db, c + 2 * dc);
      }
  return out;
}

Dense3 smooth3(const Dense3& in, const std::array<double, 3>& taps) {
  return correlate_axis(correlate_axis(correlate_axis(in, 0, taps), 1, taps), 2, taps);
}

Dense3 sobel(const Dense3& in, int axis) {
  Dense3 f = in;
  for (int ax = 0; ax < 3; ++ax) f = correlate_axis(f, ax, ax == axis ? kDeriv : kSmooth);
  return f;
}

struct CountBrick {
  std::array<std::uint32_t, kBrick * kBrick * kBrick> counts{};
};

using BrickMap = std::unordered_map<VoxelIndex, CountBrick, VoxelIndexHash>;

VoxelIndex brick_of(const VoxelIndex& v) { return {v.i >> 3, v.j >> 3, v.k >> 3}; }
int local_of(const VoxelIndex& v) { return ((v.i & 7) * kBrick + (v.j & 7)) * kBrick + (v.k & 7); }

// Intensity over brick `key` grown by the halo on every side.
Dense3 gather(const BrickMap& bricks, const VoxelIndex& key) {
  constexpr int n = kBrick + 2 * kHalo;
  Dense3 out(n, n, n);
  const VoxelIndex lo{key.i * kBrick - kHalo, key.j * kBrick - kHalo, key.k * kBrick - kHalo};
  for (int bi = -1; bi <= 1; ++bi)
    for (int bj = -1; bj <= 1; ++bj)
      for (int bk = -1; bk <= 1; ++bk) {
        const VoxelIndex nb{key.i + bi, key.j + bj, key.k + bk};
        const auto it = bricks.find(nb);
        if (it == bricks.end()) continue;
        const auto range = [&](int lo_axis, int base) {
          const int first = std::max(0, lo_axis - base);
          const int last = std::min(kBrick, lo_axis + n - base);
          return std::pair{first, last};
        };
        const auto [i0, i1] = range(lo.i, nb.i * kBrick);
        const auto [j0, j1] = range(lo.j, nb.j * kBrick);
        const auto [k0, k1] = range(lo.k, nb.k * kBrick);
        for (int i = i0; i < i1; ++i)
          for (int j = j0; j < j1; ++j)
            for (int k = k0; k < k1; ++k) {
              const auto c = it->second.counts[(i * kBrick + j) * kBrick + k];
              out(nb.i * kBrick + i - lo.i, nb.j * kBrick + j - lo.j, nb.k * kBrick + k - lo.k) = c;
            }
      }
  return out;
}

std::vector<VoxelEnergy> brick_energy(const BrickMap& bricks, const VoxelIndex& key, const GaussianKernel3& kernel) {
  const Dense3 intensity = gather(bricks, key);               // 14^3
  const Dense3 smoothed = smooth3(intensity, kernel.taps());  // 12^3
  const Dense3 gx = sobel(smoothed, 0);                       // 10^3
  const Dense3 gy = sobel(smoothed, 1);
  const Dense3 gz = sobel(smoothed, 2);

  Dense3 pxx(gx.n0, gx.n1, gx.n2), pyy = pxx, pzz = pxx, pxy = pxx, pxz = pxx, pyz = pxx;
  for (std::size_t n = 0; n < gx.data.size(); ++n) {
    const double x = gx.data[n], y = gy.data[n], z = gz.data[n];
    pxx.data[n] = x * x;
    pyy.data[n] = y * y;
    pzz.data[n] = z * z;
    pxy.data[n] = x * y;
    pxz.data[n] = x * z;
    pyz.data[n] = y * z;
  }
  const auto& taps = kernel.taps();
  const Dense3 mxx = smooth3(pxx, taps), myy = smooth3(pyy, taps), mzz = smooth3(pzz, taps);  // 8^3
  const Dense3 mxy = smooth3(pxy, taps), mxz = smooth3(pxz, taps), myz = smooth3(pyz, taps);

  const auto& counts = bricks.at(key).counts;
  std::vector<VoxelEnergy> out;
  for (int i = 0; i < kBrick; ++i)
    for (int j = 0; j < kBrick; ++j)
      for (int k = 0; k < kBrick; ++k) {
        if (counts[(i * kBrick + j) * kBrick + k] == 0) continue;
        VoxelEnergy e;
        e.index = {key.i * kBrick + i, key.j * kBrick + j, key.k * kBrick + k};
        e.gx = gx(i + 1, j + 1, k + 1);
        e.gy = gy(i + 1, j + 1, k + 1);
        e.gz = gz(i + 1, j + 1, k + 1);
        e.tensor = {mxx(i, j, k), myy(i, j, k), mzz(i, j, k), mxy(i, j, k), mxz(i, j, k), myz(i, j, k)};
        e.energy = energy_fast(e.tensor);
        out.push_back(e);
      }
  return out;
}

double pair_ratio(double a, double b, double ab) {
  const double tr = a + b;
  if (tr < kTraceGuard) return 0.0;
  // PSD blocks have non-negative determinants; clamp rounding below zero.
  return std::max(0.0, a * b - ab * ab) / tr;
}

}  // namespace

const SobelCubes& sobel_cubes() {
  static const SobelCubes cubes{outer(kDeriv, kSmooth, kSmooth), outer(kSmooth, kDeriv, kSmooth),
                                outer(kSmooth, kSmooth, kDeriv)};
  return cubes;
}

GaussianKernel3::GaussianKernel3(double sigma) : sigma_(sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ValidationError("sigma must be positive");
  const double edge = std::exp(-1.0 / (2.0 * sigma * sigma));
  const double total = 1.0 + 2.0 * edge;
  taps_ = {edge / total, 1.0 / total, edge / total};
  weights_ = outer(taps_, taps_, taps_);
}

SparseField convolve_3x3x3(const VoxelGrid& grid, const Stencil27& stencil) {
  return correlate(grid.cells(), [&](const VoxelIndex& v) { return static_cast<double>(grid.intensity(v)); }, stencil);
}

SparseField convolve_3x3x3(const SparseField& field, const Stencil27& stencil) {
  return correlate(field, [&](const VoxelIndex& v) { return field_at(field, v); }, stencil);
}

SymmetricTensor3 StructureTensorField::at(const VoxelIndex& v) const {
  return {field_at(xx, v), field_at(yy, v), field_at(zz, v), field_at(xy, v), field_at(xz, v), field_at(yz, v)};
}

GradientField gradients(const VoxelGrid& grid, const GaussianKernel3& kernel) {
  const SparseField smoothed = convolve_3x3x3(grid, kernel.weights());
  const auto& cubes = sobel_cubes();
  return {convolve_3x3x3(smoothed, cubes.x), convolve_3x3x3(smoothed, cubes.y), convolve_3x3x3(smoothed, cubes.z)};
}

StructureTensorField structure_tensor(const GradientField& gf, const GaussianKernel3& kernel) {
  SparseField pxx, pyy, pzz, pxy, pxz, pyz;
  std::unordered_set<VoxelIndex, VoxelIndexHash> support;
  for (const auto* f : {&gf.gx, &gf.gy, &gf.gz})
    for (const auto& [v, g] : *f) support.insert(v);
  for (const auto& v : support) {
    const double x = field_at(gf.gx, v), y = field_at(gf.gy, v), z = field_at(gf.gz, v);
    pxx[v] = x * x;
    pyy[v] = y * y;
    pzz[v] = z * z;
    pxy[v] = x * y;
    pxz[v] = x * z;
    pyz[v] = y * z;
  }
  const auto& w = kernel.weights();
  return {convolve_3x3x3(pxx, w), convolve_3x3x3(pyy, w), convolve_3x3x3(pzz, w),
          convolve_3x3x3(pxy, w), convolve_3x3x3(pxz, w), convolve_3x3x3(pyz, w)};
}

double energy_fast(const SymmetricTensor3& m) {
  const double tr = m.trace();
  const double blocks = pair_ratio(m.xx, m.yy, m.xy) + pair_ratio(m.xx, m.zz, m.xz) + pair_ratio(m.yy, m.zz, m.yz);
  return blocks * tr * tr;
}

double energy_oracle(double alpha, double beta, double gamma) {
  const auto term = [](double a, double b) { return a + b > 0.0 ? a * b / (a + b) : 0.0; };
  const double s = alpha + beta + gamma;
  return (term(alpha, beta) + term(alpha, gamma) + term(gamma, beta)) * s * s;
}

std::array<double, 3> symmetric_eigenvalues(const SymmetricTensor3& m) {
  const double off = m.xy * m.xy + m.xz * m.xz + m.yz * m.yz;
  std::array<double, 3> e{};
  if (off == 0.0) {
    e = {m.xx, m.yy, m.zz};
  } else {
    const double q = m.trace() / 3.0;
    const double dx = m.xx - q, dy = m.yy - q, dz = m.zz - q;
    const double p = std::sqrt((dx * dx + dy * dy + dz * dz + 2.0 * off) / 6.0);
    // det((M - qI) / p) / 2
    const double det = dx * (dy * dz - m.yz * m.yz) - m.xy * (m.xy * dz - m.yz * m.xz) + m.xz * (m.xy * m.yz - dy * m.xz);
    const double r = std::clamp(det / (2.0 * p * p * p), -1.0, 1.0);
    const double phi = std::acos(r) / 3.0;
    e[0] = q + 2.0 * p * std::cos(phi);
    e[2] = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
    e[1] = 3.0 * q - e[0] - e[2];
  }
  std::sort(e.begin(), e.end(), std::greater<>());
  return e;
}

std::size_t EnergyField::positive_count() const {
  return static_cast<std::size_t>(
      std::count_if(voxels.begin(), voxels.end(), [](const VoxelEnergy& v) { return v.energy > 0.0; }));
}

EnergyField compute_energy(const VoxelGrid& grid, const EnergyOptions& options) {
  const GaussianKernel3 kernel(options.sigma);
  BrickMap bricks;
  for (const auto& [v, n] : grid.cells()) bricks[brick_of(v)].counts[local_of(v)] = n;

  std::vector<VoxelIndex> keys;
  keys.reserve(bricks.size());
  for (const auto& [key, b] : bricks) keys.push_back(key);
  std::sort(keys.begin(), keys.end());

  std::vector<std::vector<VoxelEnergy>> per_brick(keys.size());
  const unsigned threads = std::max(1u, std::min<unsigned>(options.threads, static_cast<unsigned>(keys.size())));
  const auto work = [&](unsigned t) {
    for (std::size_t b = t; b < keys.size(); b += threads) per_brick[b] = brick_energy(bricks, keys[b], kernel);
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
  }

  EnergyField field;
  field.voxels.reserve(grid.occupied());
  for (auto& chunk : per_brick) field.voxels.insert(field.voxels.end(), chunk.begin(), chunk.end());
  std::sort(field.voxels.begin(), field.voxels.end(),
            [](const VoxelEnergy& a, const VoxelEnergy& b) { return a.index < b.index; });
  return field;
}

void scale_energy(EnergyField& field) {
  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (const auto& v : field.voxels) {
    if (v.energy <= 0.0) continue;
    lo = any ? std::min(lo, v.energy) : v.energy;
    hi = any ? std::max(hi, v.energy) : v.energy;
    any = true;
  }
  for (auto& v : field.voxels) {
    v.scaled = (v.energy > 0.0 && hi > lo) ? 255.0 * (v.energy - lo) / (hi - lo) : 0.0;
  }
}

bool CandidateSet::contains(const VoxelIndex& v) const {
  return std::binary_search(candidates.begin(), candidates.end(), v);
}

CandidateSet select_top(std::span<const VoxelIndex> voxels, std::span<const double> scores, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ValidationError("candidate fraction must lie in (0, 1]");
  if (voxels.size() != scores.size()) throw ValidationError("voxel and score counts differ");
  std::vector<std::size_t> order;
  for (std::size_t n = 0; n < scores.size(); ++n)
    if (scores[n] > 0.0) order.push_back(n);
  if (order.empty()) throw ValidationError("no voxel has positive energy");

  const auto keep = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(order.size()) - 1e-9));
  const auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return voxels[a] < voxels[b];
  };
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep - 1), order.end(), better);
  CandidateSet out;
  out.candidates.reserve(keep);
  for (std::size_t n = 0; n < keep; ++n) out.candidates.push_back(voxels[order[n]]);
  std::sort(out.candidates.begin(), out.candidates.end());
  return out;
}

CandidateSet select_candidates(const EnergyField& field, double fraction) {
  std::vector<VoxelIndex> voxels;
  std::vector<double> scores;
  voxels.reserve(field.voxels.size());
  scores.reserve(field.voxels.size());
  for (const auto& v : field.voxels) {
    voxels.push_back(v.index);
    scores.push_back(v.energy);
  }
  return select_top(voxels, scores, fraction);
}

void write_energy_csv(const EnergyField& field, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(17);
  out << "i,j,k,Gx,Gy,Gz,E,E_scaled\n";
  for (const auto& v : field.voxels) {
    out << v.index.i << ',' << v.index.j << ',' << v.index.k << ',' << v.gx << ',' << v.gy << ',' << v.gz << ','
        << v.energy << ',' << v.scaled << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace curbx
