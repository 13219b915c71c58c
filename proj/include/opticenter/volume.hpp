#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <opticenter/errors.hpp>

namespace opticenter {

/// 3D scalar image, x-fastest voxel order. Intensities live in
/// [value_min, value_max] (e.g. [0, 4095] for 12-bit stacks); processing is
/// done in float.
struct VolumeStack {
  int nx = 0;
  int ny = 0;
  int nz = 0;
  double value_min = 0.0;
  double value_max = 4095.0;
  std::vector<float> voxels;

  static VolumeStack filled(int nx, int ny, int nz, float value,
                            double value_min = 0.0, double value_max = 4095.0);

  std::int64_t size() const {
    return static_cast<std::int64_t>(nx) * ny * nz;
  }
  std::int64_t index(int x, int y, int z) const {
    return (static_cast<std::int64_t>(z) * ny + y) * nx + x;
  }
  float at(int x, int y, int z) const { return voxels[index(x, y, z)]; }
  float& at(int x, int y, int z) { return voxels[index(x, y, z)]; }
};

/// Raw little-endian uint16 voxels at <base>.raw plus a JSON sidecar
/// <base>.json with {nx, ny, nz, value_min, value_max}. `base` may also be
/// given with the .raw extension.
VolumeStack load_stack(const std::string& base);
void save_stack(const VolumeStack& stack, const std::string& base);

/// Separable Gaussian blur, kernels truncated at 4 sigma, reflective
/// boundary (mirror without edge repeat). sigma = 0 on an axis leaves that
/// axis untouched.
VolumeStack gaussian_blur(const VolumeStack& stack, double sx, double sy,
                          double sz);

/// Grayscale erosion/dilation with a box structuring element of half-sizes
/// (wx, wy, wz); windows are clipped at the boundary.
VolumeStack erode_box(const VolumeStack& stack, int wx, int wy, int wz);
VolumeStack dilate_box(const VolumeStack& stack, int wx, int wy, int wz);

/// White top-hat: stack minus its opening. Nonnegative by construction.
VolumeStack tophat(const VolumeStack& stack, int wx, int wy, int wz);

/// Between-class variance maximizer over a 4096-bin histogram of the value
/// range.
double otsu_threshold(const VolumeStack& stack);

/// One 26-connected component: flat voxel indices into the source stack.
struct Component {
  std::vector<std::int64_t> voxels;
};

struct ComponentSet {
  int nx = 0;
  int ny = 0;
  int nz = 0;
  std::vector<Component> components;
};

/// Binary mask (>= threshold) followed by 26-connected labeling. Component
/// order follows the first voxel in scan order (x fastest).
ComponentSet threshold_and_label(const VolumeStack& stack, double threshold);

/// Drops components smaller than min_volume voxels and crops the survivors
/// to a max_extent box around their intensity-weighted centroid.
ComponentSet volume_filter(const VolumeStack& stack, const ComponentSet& comps,
                           int min_volume, const std::array<int, 3>& max_extent);

namespace reference {

/// Serial twins of the parallel kernels above. Kept for testing: outputs
/// must match the OpenMP versions bit for bit.
VolumeStack gaussian_blur(const VolumeStack& stack, double sx, double sy,
                          double sz);
VolumeStack tophat(const VolumeStack& stack, int wx, int wy, int wz);

}  // namespace reference

}  // namespace opticenter
