#pragma once

#include <vector>

#include <opticenter/volume.hpp>

namespace opticenter::detail {

/// Half-sample symmetric reflection of an out-of-range index.
int reflect_index(int i, int n);

/// Normalized sampled Gaussian, radius ceil(4 sigma), at least one tap.
std::vector<double> gaussian_kernel(double sigma);

// Single-output-voxel convolution taps. Shared by the OpenMP kernels and
// the serial reference so both produce identical bits.
float blur_tap_x(const VolumeStack& in, const std::vector<double>& kernel,
                 int x, int y, int z);
float blur_tap_y(const VolumeStack& in, const std::vector<double>& kernel,
                 int x, int y, int z);
float blur_tap_z(const VolumeStack& in, const std::vector<double>& kernel,
                 int x, int y, int z);

}  // namespace opticenter::detail
