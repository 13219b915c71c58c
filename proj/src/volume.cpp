#include <opticenter/volume.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>

#include <nlohmann/json.hpp>

#include <opticenter/detail/volume_kernels.hpp>

namespace opticenter {

VolumeStack VolumeStack::filled(int nx, int ny, int nz, float value,
                                double value_min, double value_max) {
  if (nx < 1 || ny < 1 || nz < 1) {
    throw Error("stack dimensions must be positive");
  }
  VolumeStack stack;
  stack.nx = nx;
  stack.ny = ny;
  stack.nz = nz;
  stack.value_min = value_min;
  stack.value_max = value_max;
  stack.voxels.assign(static_cast<std::size_t>(stack.size()), value);
  return stack;
}

namespace {

std::string strip_raw_suffix(const std::string& base) {
  if (base.size() > 4 && base.ends_with(".raw")) {
    return base.substr(0, base.size() - 4);
  }
  return base;
}

}  // namespace

VolumeStack load_stack(const std::string& base_in) {
  const std::string base = strip_raw_suffix(base_in);
  std::ifstream sidecar(base + ".json");
  if (!sidecar) {
    throw ParseError("cannot open stack sidecar '" + base + ".json'");
  }
  nlohmann::json meta;
  try {
    sidecar >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("invalid stack sidecar '" + base + ".json': " + e.what());
  }
  VolumeStack stack;
  try {
    stack.nx = meta.at("nx").get<int>();
    stack.ny = meta.at("ny").get<int>();
    stack.nz = meta.at("nz").get<int>();
    stack.value_min = meta.at("value_min").get<double>();
    stack.value_max = meta.at("value_max").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("stack sidecar '" + base + ".json' misses fields: " +
                     e.what());
  }
  if (stack.nx < 1 || stack.ny < 1 || stack.nz < 1) {
    throw ParseError("stack sidecar declares non-positive dimensions");
  }

  std::ifstream raw(base + ".raw", std::ios::binary);
  if (!raw) {
    throw ParseError("cannot open stack data '" + base + ".raw'");
  }
  const std::int64_t count = stack.size();
  std::vector<std::uint16_t> data(static_cast<std::size_t>(count));
  raw.read(reinterpret_cast<char*>(data.data()),
           static_cast<std::streamsize>(count * 2));
  if (raw.gcount() != count * 2) {
    throw ParseError("stack data '" + base + ".raw' is shorter than " +
                     std::to_string(count) + " voxels");
  }
  stack.voxels.resize(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    const double v = static_cast<double>(data[static_cast<std::size_t>(i)]);
    stack.voxels[static_cast<std::size_t>(i)] = static_cast<float>(
        std::clamp(v, stack.value_min, stack.value_max));
  }
  return stack;
}

void save_stack(const VolumeStack& stack, const std::string& base_in) {
  const std::string base = strip_raw_suffix(base_in);
  if (stack.value_min < 0.0 || stack.value_max > 65535.0) {
    throw Error("stack value range does not fit 16-bit storage");
  }
  nlohmann::json meta;
  meta["nx"] = stack.nx;
  meta["ny"] = stack.ny;
  meta["nz"] = stack.nz;
  meta["value_min"] = stack.value_min;
  meta["value_max"] = stack.value_max;
  std::ofstream sidecar(base + ".json");
  if (!sidecar) throw Error("cannot write '" + base + ".json'");
  sidecar << meta.dump(2) << '\n';

  std::ofstream raw(base + ".raw", std::ios::binary);
  if (!raw) throw Error("cannot write '" + base + ".raw'");
  const std::int64_t count = stack.size();
  std::vector<std::uint16_t> data(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    const double v = std::clamp(
        static_cast<double>(stack.voxels[static_cast<std::size_t>(i)]),
        stack.value_min, stack.value_max);
    data[static_cast<std::size_t>(i)] =
        static_cast<std::uint16_t>(std::lrint(v));
  }
  raw.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(count * 2));
}

namespace detail {

int reflect_index(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (sigma <= 0.0) return {1.0};
  const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    const double w = std::exp(-0.5 * k * k / (sigma * sigma));
    kernel[k + radius] = w;
    total += w;
  }
  for (double& w : kernel) w /= total;
  return kernel;
}

// The per-line computations below are shared by the parallel kernels and
// the serial reference so both produce identical bits.

float blur_tap_x(const VolumeStack& in, const std::vector<double>& kernel,
                 int x, int y, int z) {
  const int radius = static_cast<int>(kernel.size() / 2);
  double acc = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    acc += kernel[k + radius] * in.at(reflect_index(x + k, in.nx), y, z);
  }
  return static_cast<float>(acc);
}

float blur_tap_y(const VolumeStack& in, const std::vector<double>& kernel,
                 int x, int y, int z) {
  const int radius = static_cast<int>(kernel.size() / 2);
  double acc = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    acc += kernel[k + radius] * in.at(x, reflect_index(y + k, in.ny), z);
  }
  return static_cast<float>(acc);
}

float blur_tap_z(const VolumeStack& in, const std::vector<double>& kernel,
                 int x, int y, int z) {
  const int radius = static_cast<int>(kernel.size() / 2);
  double acc = 0.0;
  for (int k = -radius; k <= radius; ++k) {
    acc += kernel[k + radius] * in.at(x, y, reflect_index(z + k, in.nz));
  }
  return static_cast<float>(acc);
}

}  // namespace detail

namespace {

enum class Axis { X, Y, Z };

VolumeStack blur_axis(const VolumeStack& in, double sigma, Axis axis) {
  if (sigma < 0.0) throw Error("blur sigma must be >= 0");
  if (sigma == 0.0) return in;
  const std::vector<double> kernel = detail::gaussian_kernel(sigma);
  VolumeStack out = in;
#pragma omp parallel for collapse(2) schedule(static)
  for (int z = 0; z < in.nz; ++z) {
    for (int y = 0; y < in.ny; ++y) {
      for (int x = 0; x < in.nx; ++x) {
        float v = 0.0f;
        switch (axis) {
          case Axis::X:
            v = detail::blur_tap_x(in, kernel, x, y, z);
            break;
          case Axis::Y:
            v = detail::blur_tap_y(in, kernel, x, y, z);
            break;
          case Axis::Z:
            v = detail::blur_tap_z(in, kernel, x, y, z);
            break;
        }
        out.at(x, y, z) = v;
      }
    }
  }
  return out;
}

template <typename Select>
VolumeStack minmax_axis(const VolumeStack& in, int half, Axis axis,
                        Select select) {
  if (half < 0) throw Error("window half-size must be >= 0");
  if (half == 0) return in;
  VolumeStack out = in;
#pragma omp parallel for collapse(2) schedule(static)
  for (int z = 0; z < in.nz; ++z) {
    for (int y = 0; y < in.ny; ++y) {
      for (int x = 0; x < in.nx; ++x) {
        float best;
        switch (axis) {
          case Axis::X: {
            const int lo = std::max(0, x - half);
            const int hi = std::min(in.nx - 1, x + half);
            best = in.at(lo, y, z);
            for (int i = lo + 1; i <= hi; ++i) best = select(best, in.at(i, y, z));
            break;
          }
          case Axis::Y: {
            const int lo = std::max(0, y - half);
            const int hi = std::min(in.ny - 1, y + half);
            best = in.at(x, lo, z);
            for (int i = lo + 1; i <= hi; ++i) best = select(best, in.at(x, i, z));
            break;
          }
          case Axis::Z:
          default: {
            const int lo = std::max(0, z - half);
            const int hi = std::min(in.nz - 1, z + half);
            best = in.at(x, y, lo);
            for (int i = lo + 1; i <= hi; ++i) best = select(best, in.at(x, y, i));
            break;
          }
        }
        out.at(x, y, z) = best;
      }
    }
  }
  return out;
}

const auto take_min = [](float a, float b) { return a < b ? a : b; };
const auto take_max = [](float a, float b) { return a > b ? a : b; };

}  // namespace

VolumeStack gaussian_blur(const VolumeStack& stack, double sx, double sy,
                          double sz) {
  VolumeStack out = blur_axis(stack, sx, Axis::X);
  out = blur_axis(out, sy, Axis::Y);
  out = blur_axis(out, sz, Axis::Z);
  return out;
}

VolumeStack erode_box(const VolumeStack& stack, int wx, int wy, int wz) {
  VolumeStack out = minmax_axis(stack, wx, Axis::X, take_min);
  out = minmax_axis(out, wy, Axis::Y, take_min);
  out = minmax_axis(out, wz, Axis::Z, take_min);
  return out;
}

VolumeStack dilate_box(const VolumeStack& stack, int wx, int wy, int wz) {
  VolumeStack out = minmax_axis(stack, wx, Axis::X, take_max);
  out = minmax_axis(out, wy, Axis::Y, take_max);
  out = minmax_axis(out, wz, Axis::Z, take_max);
  return out;
}

VolumeStack tophat(const VolumeStack& stack, int wx, int wy, int wz) {
  if (wx < 1 || wy < 1 || wz < 1) {
    throw Error("top-hat window half-sizes must be >= 1");
  }
  const VolumeStack opened = dilate_box(erode_box(stack, wx, wy, wz), wx, wy, wz);
  VolumeStack out = stack;
  const std::int64_t count = stack.size();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < count; ++i) {
    // Opening is anti-extensive, so the difference is >= 0 exactly.
    out.voxels[static_cast<std::size_t>(i)] =
        stack.voxels[static_cast<std::size_t>(i)] -
        opened.voxels[static_cast<std::size_t>(i)];
  }
  return out;
}

double otsu_threshold(const VolumeStack& stack) {
  constexpr int kBins = 4096;
  const double lo = stack.value_min;
  const double hi = stack.value_max;
  const double width = (hi - lo) / kBins;
  if (!(width > 0.0)) throw Error("degenerate value range for Otsu");

  std::vector<std::int64_t> hist(kBins, 0);
  for (float v : stack.voxels) {
    int bin = static_cast<int>((static_cast<double>(v) - lo) / width);
    bin = std::clamp(bin, 0, kBins - 1);
    hist[static_cast<std::size_t>(bin)] += 1;
  }

  const double total = static_cast<double>(stack.size());
  double sum_all = 0.0;
  for (int b = 0; b < kBins; ++b) sum_all += b * static_cast<double>(hist[b]);

  double best_between = -1.0;
  int best_bin = 0;
  double w0 = 0.0;
  double sum0 = 0.0;
  for (int b = 0; b < kBins - 1; ++b) {
    w0 += static_cast<double>(hist[b]);
    if (w0 == 0.0) continue;
    const double w1 = total - w0;
    if (w1 == 0.0) break;
    sum0 += b * static_cast<double>(hist[b]);
    const double mu0 = sum0 / w0;
    const double mu1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    if (between > best_between) {
      best_between = between;
      best_bin = b;
    }
  }
  return lo + (best_bin + 1) * width;
}

ComponentSet threshold_and_label(const VolumeStack& stack, double threshold) {
  const std::int64_t count = stack.size();
  std::vector<char> mask(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i) {
    mask[static_cast<std::size_t>(i)] =
        static_cast<double>(stack.voxels[static_cast<std::size_t>(i)]) >=
        threshold;
  }

  ComponentSet set;
  set.nx = stack.nx;
  set.ny = stack.ny;
  set.nz = stack.nz;

  std::vector<std::int64_t> pending;
  for (std::int64_t start = 0; start < count; ++start) {
    if (!mask[static_cast<std::size_t>(start)]) continue;
    Component comp;
    mask[static_cast<std::size_t>(start)] = 0;
    pending.assign(1, start);
    while (!pending.empty()) {
      const std::int64_t idx = pending.back();
      pending.pop_back();
      comp.voxels.push_back(idx);
      const int x = static_cast<int>(idx % stack.nx);
      const int y = static_cast<int>((idx / stack.nx) % stack.ny);
      const int z = static_cast<int>(idx / (static_cast<std::int64_t>(stack.nx) *
                                            stack.ny));
      for (int dz = -1; dz <= 1; ++dz) {
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0 && dz == 0) continue;
            const int xx = x + dx;
            const int yy = y + dy;
            const int zz = z + dz;
            if (xx < 0 || xx >= stack.nx || yy < 0 || yy >= stack.ny ||
                zz < 0 || zz >= stack.nz) {
              continue;
            }
            const std::int64_t nidx = stack.index(xx, yy, zz);
            if (mask[static_cast<std::size_t>(nidx)]) {
              mask[static_cast<std::size_t>(nidx)] = 0;
              pending.push_back(nidx);
            }
          }
        }
      }
    }
    std::sort(comp.voxels.begin(), comp.voxels.end());
    set.components.push_back(std::move(comp));
  }
  return set;
}

ComponentSet volume_filter(const VolumeStack& stack, const ComponentSet& comps,
                           int min_volume,
                           const std::array<int, 3>& max_extent) {
  if (min_volume < 1) throw Error("min_volume must be >= 1");
  for (int e : max_extent) {
    if (e < 1) throw Error("max_extent must be >= 1 per axis");
  }

  ComponentSet out;
  out.nx = comps.nx;
  out.ny = comps.ny;
  out.nz = comps.nz;
  for (const Component& comp : comps.components) {
    if (static_cast<int>(comp.voxels.size()) < min_volume) continue;

    double total = 0.0;
    double cx = 0.0, cy = 0.0, cz = 0.0;
    for (std::int64_t idx : comp.voxels) {
      const double v = stack.voxels[static_cast<std::size_t>(idx)];
      const int x = static_cast<int>(idx % stack.nx);
      const int y = static_cast<int>((idx / stack.nx) % stack.ny);
      const int z = static_cast<int>(idx / (static_cast<std::int64_t>(stack.nx) *
                                            stack.ny));
      total += v;
      cx += v * x;
      cy += v * y;
      cz += v * z;
    }
    if (!(total > 0.0)) continue;
    cx /= total;
    cy /= total;
    cz /= total;

    // Keep voxels inside the max_extent box centered on the centroid, so a
    // surviving component spans at most max_extent voxels per axis.
    const double hx = (max_extent[0] - 1) / 2.0;
    const double hy = (max_extent[1] - 1) / 2.0;
    const double hz = (max_extent[2] - 1) / 2.0;
    Component cropped;
    for (std::int64_t idx : comp.voxels) {
      const int x = static_cast<int>(idx % stack.nx);
      const int y = static_cast<int>((idx / stack.nx) % stack.ny);
      const int z = static_cast<int>(idx / (static_cast<std::int64_t>(stack.nx) *
                                            stack.ny));
      if (std::abs(x - cx) <= hx && std::abs(y - cy) <= hy &&
          std::abs(z - cz) <= hz) {
        cropped.voxels.push_back(idx);
      }
    }
    if (!cropped.voxels.empty()) out.components.push_back(std::move(cropped));
  }
  return out;
}

}  // namespace opticenter
