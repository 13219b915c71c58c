// Serial reference implementations of the parallel volume kernels. These
// are deliberately written as plain loops (and, for the morphology, as a
// direct 3D window scan instead of separable passes) so the test suite can
// cross-check the OpenMP versions against independent code paths. Min/max
// and the shared convolution taps are exact, so the comparison is bitwise.

#include <algorithm>

#include <opticenter/detail/volume_kernels.hpp>
#include <opticenter/volume.hpp>

namespace opticenter::reference {

VolumeStack gaussian_blur(const VolumeStack& stack, double sx, double sy,
                          double sz) {
  VolumeStack current = stack;
  if (sx > 0.0) {
    const std::vector<double> kernel = detail::gaussian_kernel(sx);
    VolumeStack next = current;
    for (int z = 0; z < current.nz; ++z)
      for (int y = 0; y < current.ny; ++y)
        for (int x = 0; x < current.nx; ++x)
          next.at(x, y, z) = detail::blur_tap_x(current, kernel, x, y, z);
    current = next;
  }
  if (sy > 0.0) {
    const std::vector<double> kernel = detail::gaussian_kernel(sy);
    VolumeStack next = current;
    for (int z = 0; z < current.nz; ++z)
      for (int y = 0; y < current.ny; ++y)
        for (int x = 0; x < current.nx; ++x)
          next.at(x, y, z) = detail::blur_tap_y(current, kernel, x, y, z);
    current = next;
  }
  if (sz > 0.0) {
    const std::vector<double> kernel = detail::gaussian_kernel(sz);
    VolumeStack next = current;
    for (int z = 0; z < current.nz; ++z)
      for (int y = 0; y < current.ny; ++y)
        for (int x = 0; x < current.nx; ++x)
          next.at(x, y, z) = detail::blur_tap_z(current, kernel, x, y, z);
    current = next;
  }
  return current;
}

namespace {

template <typename Select>
VolumeStack window_scan(const VolumeStack& in, int wx, int wy, int wz,
                        Select select) {
  VolumeStack out = in;
  for (int z = 0; z < in.nz; ++z) {
    for (int y = 0; y < in.ny; ++y) {
      for (int x = 0; x < in.nx; ++x) {
        float best = in.at(x, y, z);
        for (int dz = -wz; dz <= wz; ++dz) {
          const int zz = z + dz;
          if (zz < 0 || zz >= in.nz) continue;
          for (int dy = -wy; dy <= wy; ++dy) {
            const int yy = y + dy;
            if (yy < 0 || yy >= in.ny) continue;
            for (int dx = -wx; dx <= wx; ++dx) {
              const int xx = x + dx;
              if (xx < 0 || xx >= in.nx) continue;
              best = select(best, in.at(xx, yy, zz));
            }
          }
        }
        out.at(x, y, z) = best;
      }
    }
  }
  return out;
}

}  // namespace

VolumeStack tophat(const VolumeStack& stack, int wx, int wy, int wz) {
  const auto take_min = [](float a, float b) { return a < b ? a : b; };
  const auto take_max = [](float a, float b) { return a > b ? a : b; };
  const VolumeStack eroded = window_scan(stack, wx, wy, wz, take_min);
  const VolumeStack opened = window_scan(eroded, wx, wy, wz, take_max);
  VolumeStack out = stack;
  for (std::size_t i = 0; i < out.voxels.size(); ++i) {
    out.voxels[i] = stack.voxels[i] - opened.voxels[i];
  }
  return out;
}

}  // namespace opticenter::reference
