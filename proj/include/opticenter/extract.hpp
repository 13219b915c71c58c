#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include <opticenter/geometry.hpp>
#include <opticenter/rng.hpp>
#include <opticenter/volume.hpp>

namespace opticenter {

/// One segmented ellipsoid with its intensity-weighted statistics.
struct DetectedPSF {
  Point3 centroid = Point3::Zero();
  UnitVec3 principal_axis;
  /// Eigenvalues of the intensity-weighted covariance, descending.
  Vec3 eigenvalues = Vec3::Zero();
  std::int64_t voxel_volume = 0;
  double total_intensity = 0.0;

  DetectedPSF(const Point3& centroid_, const UnitVec3& axis_,
              const Vec3& eigenvalues_, std::int64_t volume_, double intensity_)
      : centroid(centroid_),
        principal_axis(axis_),
        eigenvalues(eigenvalues_),
        voxel_volume(volume_),
        total_intensity(intensity_) {}
};

/// Detection pipeline parameters. Blur and top-hat sizes are in voxels;
/// threshold may be fixed or Otsu.
struct ExtractionParams {
  // Isotropic by default: adding equal variance per axis leaves the PCA
  // eigenvectors of each bead untouched; anisotropic smoothing tilts the
  // recovered axes toward the heavier-blurred axis.
  std::array<double, 3> blur_sigma = {1.0, 1.0, 1.0};
  std::array<int, 3> tophat_halfwin = {8, 8, 16};
  /// Unset: Otsu's method on the preprocessed stack.
  std::optional<double> threshold;
  int min_volume = 30;
  std::array<int, 3> max_extent = {48, 48, 64};
  /// Keep components with lambda1/lambda2 strictly above this value.
  double eigenvalue_ratio_filter = 2.2;

  void validate() const;
};

/// Anisotropic Gaussian bead rendering parameters, in intensity units of
/// the target stack.
struct SynthesisParams {
  double sigma_parallel = 6.0;   // along the line direction
  double sigma_perp = 2.0;       // across it
  double peak_intensity = 3000.0;
  double background_level = 100.0;
  double noise_sigma = 20.0;
};

/// Bead layout generator for rendered stacks: beads on the given layers,
/// aimed at `center`, at least `min_separation` voxels apart and
/// `margin` voxels away from the lateral faces.
struct StackSceneConfig {
  int n_beads = 50;
  int nx = 256;
  int ny = 256;
  int nz = 128;
  Point3 center = Point3(128.0, 128.0, 640.0);
  std::vector<double> layer_depths = {20.0, 60.0};
  double margin = 24.0;
  double min_separation = 30.0;
  std::uint64_t seed = 0;
};

/// Renders each observation as an anisotropic Gaussian ellipsoid (long axis
/// along its direction), adds constant background plus i.i.d. Gaussian
/// noise, clamps and quantizes to the value range. Noise is drawn from
/// per-slice child generators so the result is thread-count independent.
VolumeStack synthesize_stack(const ObservationSet& scene,
                             const SynthesisParams& params, int nx, int ny,
                             int nz, Rng& rng, double value_min = 0.0,
                             double value_max = 4095.0);

/// Intensity-weighted PCA of one component. Requires >= 4 voxels spanning
/// >= 2 distinct positions per axis. The principal axis sign is fixed to
/// positive z (ties to positive y, then x).
DetectedPSF component_pca(const VolumeStack& stack, const Component& component);

struct ExtractionResult {
  ObservationSet observations;
  int components_found = 0;      // after volume filtering
  int skipped_degenerate = 0;    // PCA failures, skipped and counted
  int rejected_by_ratio = 0;     // below the eigenvalue-ratio filter
  double threshold_used = 0.0;
};

/// Full detection chain: blur, top-hat, threshold, label, volume filter,
/// per-component PCA. Emits one observation per surviving component with
/// weight lambda1/lambda2.
ExtractionResult extract_observations(const VolumeStack& stack,
                                      const ExtractionParams& params);

struct OrientationRow {
  double distance = 0.0;  // lateral distance of the anchor to the center
  double angle = 0.0;     // arccos of the direction's z-component, radians
};

struct OrientationTable {
  std::vector<OrientationRow> rows;
  // Least-squares fit of angle against distance; NaN when under two rows.
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
};

OrientationTable orientation_vs_distance(const ObservationSet& obs,
                                         const Point3& center);

ObservationSet generate_bead_scene(const StackSceneConfig& config, Rng& rng);

namespace reference {

/// Serial twin of synthesize_stack; bitwise identical output.
VolumeStack synthesize_stack(const ObservationSet& scene,
                             const SynthesisParams& params, int nx, int ny,
                             int nz, Rng& rng, double value_min = 0.0,
                             double value_max = 4095.0);

}  // namespace reference

}  // namespace opticenter
