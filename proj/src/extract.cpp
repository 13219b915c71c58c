#include <opticenter/extract.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <opticenter/format.hpp>

namespace opticenter {

void ExtractionParams::validate() const {
  for (double s : blur_sigma) {
    if (!(s >= 0.0)) throw Error("blur sigmas must be >= 0");
  }
  for (int w : tophat_halfwin) {
    if (w < 1) throw Error("top-hat half-sizes must be >= 1");
  }
  if (min_volume < 1) throw Error("min_volume must be >= 1");
  for (int e : max_extent) {
    if (e < 1) throw Error("max_extent must be >= 1 per axis");
  }
  if (!(eigenvalue_ratio_filter >= 0.0)) {
    throw Error("eigenvalue ratio filter must be >= 0");
  }
  if (threshold && !std::isfinite(*threshold)) {
    throw Error("threshold must be finite");
  }
}

namespace detail_synth {

struct BeadGeometry {
  Point3 anchor;
  Vec3 direction;
  int z_lo = 0;
  int z_hi = -1;
};

/// Accumulates every bead's Gaussian contribution for one z slice, in bead
/// index order, then adds the slice's noise stream. Shared by the parallel
/// and serial synthesis paths so both produce identical bits.
void render_slice(std::vector<double>& values, int nx, int ny, int z,
                  const std::vector<BeadGeometry>& beads,
                  const SynthesisParams& params, int box_radius,
                  std::uint64_t noise_seed) {
  const double inv_two_par =
      1.0 / (2.0 * params.sigma_parallel * params.sigma_parallel);
  const double inv_two_perp =
      1.0 / (2.0 * params.sigma_perp * params.sigma_perp);
  const std::int64_t slice_offset = static_cast<std::int64_t>(z) * nx * ny;

  for (const BeadGeometry& bead : beads) {
    if (z < bead.z_lo || z > bead.z_hi) continue;
    const int x_lo = std::max(0, static_cast<int>(std::floor(bead.anchor.x())) -
                                     box_radius);
    const int x_hi = std::min(nx - 1, static_cast<int>(std::ceil(
                                          bead.anchor.x())) + box_radius);
    const int y_lo = std::max(0, static_cast<int>(std::floor(bead.anchor.y())) -
                                     box_radius);
    const int y_hi = std::min(ny - 1, static_cast<int>(std::ceil(
                                          bead.anchor.y())) + box_radius);
    for (int y = y_lo; y <= y_hi; ++y) {
      for (int x = x_lo; x <= x_hi; ++x) {
        const Vec3 u(x - bead.anchor.x(), y - bead.anchor.y(),
                     z - bead.anchor.z());
        const double along = u.dot(bead.direction);
        const double across_sq = u.squaredNorm() - along * along;
        const double value =
            params.peak_intensity *
            std::exp(-along * along * inv_two_par - across_sq * inv_two_perp);
        values[static_cast<std::size_t>(slice_offset + y * nx + x)] += value;
      }
    }
  }

  if (params.noise_sigma > 0.0) {
    Rng noise(mix_seed(noise_seed, static_cast<std::uint64_t>(z)));
    for (int i = 0; i < nx * ny; ++i) {
      values[static_cast<std::size_t>(slice_offset + i)] +=
          noise.normal(params.noise_sigma);
    }
  }
}

std::vector<BeadGeometry> prepare_beads(const ObservationSet& scene,
                                        const SynthesisParams& params, int nx,
                                        int ny, int nz, int box_radius) {
  if (!(params.sigma_parallel > params.sigma_perp &&
        params.sigma_perp > 0.0)) {
    throw Error("bead sigmas must satisfy sigma_parallel > sigma_perp > 0");
  }
  if (!(params.peak_intensity >= 0.0) || !(params.noise_sigma >= 0.0)) {
    throw Error("peak intensity and noise sigma must be >= 0");
  }
  const double fit_margin = 3.0 * params.sigma_parallel;
  std::vector<BeadGeometry> beads;
  beads.reserve(scene.items.size());
  for (const LineObservation& item : scene.items) {
    const Point3& a = item.anchor;
    if (a.x() < fit_margin || a.x() > nx - 1 - fit_margin ||
        a.y() < fit_margin || a.y() > ny - 1 - fit_margin ||
        a.z() < fit_margin || a.z() > nz - 1 - fit_margin) {
      throw BeadOutOfBounds("bead at (" + format_double(a.x()) + ", " +
                            format_double(a.y()) + ", " + format_double(a.z()) +
                            ") does not fit with a 3 sigma margin");
    }
    BeadGeometry bead;
    bead.anchor = a;
    bead.direction = item.direction.vec();
    bead.z_lo = std::max(0, static_cast<int>(std::floor(a.z())) - box_radius);
    bead.z_hi = std::min(nz - 1,
                         static_cast<int>(std::ceil(a.z())) + box_radius);
    beads.push_back(bead);
  }
  return beads;
}

VolumeStack finalize(std::vector<double>&& values, int nx, int ny, int nz,
                     double value_min, double value_max) {
  VolumeStack stack = VolumeStack::filled(nx, ny, nz, 0.0f, value_min,
                                          value_max);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double quantized = std::nearbyint(values[i]);
    stack.voxels[i] = static_cast<float>(
        std::clamp(quantized, value_min, value_max));
  }
  return stack;
}

}  // namespace detail_synth

VolumeStack synthesize_stack(const ObservationSet& scene,
                             const SynthesisParams& params, int nx, int ny,
                             int nz, Rng& rng, double value_min,
                             double value_max) {
  if (nx < 1 || ny < 1 || nz < 1) throw Error("stack dimensions must be >= 1");
  const int box_radius =
      std::max(1, static_cast<int>(std::ceil(4.0 * params.sigma_parallel)));
  const auto beads =
      detail_synth::prepare_beads(scene, params, nx, ny, nz, box_radius);
  const std::uint64_t noise_seed = rng.next_u64();

  std::vector<double> values(static_cast<std::size_t>(nx) * ny * nz,
                             params.background_level);
#pragma omp parallel for schedule(dynamic)
  for (int z = 0; z < nz; ++z) {
    detail_synth::render_slice(values, nx, ny, z, beads, params, box_radius,
                               noise_seed);
  }
  return detail_synth::finalize(std::move(values), nx, ny, nz, value_min,
                                value_max);
}

namespace reference {

VolumeStack synthesize_stack(const ObservationSet& scene,
                             const SynthesisParams& params, int nx, int ny,
                             int nz, Rng& rng, double value_min,
                             double value_max) {
  if (nx < 1 || ny < 1 || nz < 1) throw Error("stack dimensions must be >= 1");
  const int box_radius =
      std::max(1, static_cast<int>(std::ceil(4.0 * params.sigma_parallel)));
  const auto beads =
      detail_synth::prepare_beads(scene, params, nx, ny, nz, box_radius);
  const std::uint64_t noise_seed = rng.next_u64();

  std::vector<double> values(static_cast<std::size_t>(nx) * ny * nz,
                             params.background_level);
  for (int z = 0; z < nz; ++z) {
    detail_synth::render_slice(values, nx, ny, z, beads, params, box_radius,
                               noise_seed);
  }
  return detail_synth::finalize(std::move(values), nx, ny, nz, value_min,
                                value_max);
}

}  // namespace reference

DetectedPSF component_pca(const VolumeStack& stack, const Component& component) {
  if (component.voxels.size() < 4) {
    throw DegenerateComponent("component has fewer than 4 voxels");
  }

  int min_c[3] = {stack.nx, stack.ny, stack.nz};
  int max_c[3] = {-1, -1, -1};
  double total = 0.0;
  Vec3 centroid = Vec3::Zero();
  for (std::int64_t idx : component.voxels) {
    const int x = static_cast<int>(idx % stack.nx);
    const int y = static_cast<int>((idx / stack.nx) % stack.ny);
    const int z = static_cast<int>(idx / (static_cast<std::int64_t>(stack.nx) *
                                          stack.ny));
    const double v = stack.voxels[static_cast<std::size_t>(idx)];
    total += v;
    centroid += v * Vec3(x, y, z);
    min_c[0] = std::min(min_c[0], x);
    min_c[1] = std::min(min_c[1], y);
    min_c[2] = std::min(min_c[2], z);
    max_c[0] = std::max(max_c[0], x);
    max_c[1] = std::max(max_c[1], y);
    max_c[2] = std::max(max_c[2], z);
  }
  for (int axis = 0; axis < 3; ++axis) {
    if (min_c[axis] >= max_c[axis]) {
      throw DegenerateComponent(
          "component does not span 2 distinct positions on every axis");
    }
  }
  if (!(total > 0.0)) {
    throw DegenerateComponent("component has zero total intensity");
  }
  centroid /= total;

  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (std::int64_t idx : component.voxels) {
    const int x = static_cast<int>(idx % stack.nx);
    const int y = static_cast<int>((idx / stack.nx) % stack.ny);
    const int z = static_cast<int>(idx / (static_cast<std::int64_t>(stack.nx) *
                                          stack.ny));
    const double v = stack.voxels[static_cast<std::size_t>(idx)];
    const Vec3 d = Vec3(x, y, z) - centroid;
    cov += v * (d * d.transpose());
  }
  cov /= total;

  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  // Eigen sorts ascending; report descending and clamp round-off negatives.
  const Vec3 lambdas(std::max(es.eigenvalues()(2), 0.0),
                     std::max(es.eigenvalues()(1), 0.0),
                     std::max(es.eigenvalues()(0), 0.0));
  Vec3 axis = es.eigenvectors().col(2);
  if (axis.z() < 0.0 || (axis.z() == 0.0 && axis.y() < 0.0) ||
      (axis.z() == 0.0 && axis.y() == 0.0 && axis.x() < 0.0)) {
    axis = -axis;
  }

  return DetectedPSF(centroid, normalize_direction(axis), lambdas,
                     static_cast<std::int64_t>(component.voxels.size()), total);
}

ExtractionResult extract_observations(const VolumeStack& stack,
                                      const ExtractionParams& params) {
  params.validate();
  const VolumeStack blurred = gaussian_blur(stack, params.blur_sigma[0],
                                            params.blur_sigma[1],
                                            params.blur_sigma[2]);
  const VolumeStack flattened =
      tophat(blurred, params.tophat_halfwin[0], params.tophat_halfwin[1],
             params.tophat_halfwin[2]);
  const double threshold =
      params.threshold ? *params.threshold : otsu_threshold(flattened);
  const ComponentSet labeled = threshold_and_label(flattened, threshold);
  const ComponentSet kept = volume_filter(flattened, labeled, params.min_volume,
                                          params.max_extent);

  ExtractionResult result;
  result.components_found = static_cast<int>(kept.components.size());
  result.threshold_used = threshold;
  for (const Component& comp : kept.components) {
    try {
      const DetectedPSF psf = component_pca(flattened, comp);
      if (psf.eigenvalues(1) <= 1e-12) {
        ++result.skipped_degenerate;
        continue;
      }
      const double ratio = psf.eigenvalues(0) / psf.eigenvalues(1);
      if (ratio > params.eigenvalue_ratio_filter) {
        result.observations.items.emplace_back(psf.centroid,
                                               psf.principal_axis, ratio);
      } else {
        ++result.rejected_by_ratio;
      }
    } catch (const DegenerateComponent&) {
      ++result.skipped_degenerate;
    }
  }
  return result;
}

OrientationTable orientation_vs_distance(const ObservationSet& obs,
                                         const Point3& center) {
  OrientationTable table;
  table.rows.reserve(obs.items.size());
  for (const LineObservation& item : obs.items) {
    OrientationRow row;
    row.distance = std::hypot(item.anchor.x() - center.x(),
                              item.anchor.y() - center.y());
    row.angle = std::acos(std::clamp(item.direction.z(), -1.0, 1.0));
    table.rows.push_back(row);
  }

  const std::size_t n = table.rows.size();
  if (n < 2) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    table.slope = nan;
    table.intercept = nan;
    table.r_squared = nan;
    return table;
  }
  double mean_d = 0.0, mean_a = 0.0;
  for (const OrientationRow& row : table.rows) {
    mean_d += row.distance;
    mean_a += row.angle;
  }
  mean_d /= static_cast<double>(n);
  mean_a /= static_cast<double>(n);
  double var_d = 0.0, cov = 0.0;
  for (const OrientationRow& row : table.rows) {
    var_d += (row.distance - mean_d) * (row.distance - mean_d);
    cov += (row.distance - mean_d) * (row.angle - mean_a);
  }
  table.slope = var_d > 0.0 ? cov / var_d
                            : std::numeric_limits<double>::quiet_NaN();
  table.intercept = mean_a - table.slope * mean_d;

  double ss_res = 0.0, ss_tot = 0.0;
  for (const OrientationRow& row : table.rows) {
    const double fit = table.intercept + table.slope * row.distance;
    ss_res += (row.angle - fit) * (row.angle - fit);
    ss_tot += (row.angle - mean_a) * (row.angle - mean_a);
  }
  table.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot
                                 : (ss_res == 0.0 ? 1.0 : 0.0);
  return table;
}

ObservationSet generate_bead_scene(const StackSceneConfig& config, Rng& rng) {
  if (config.n_beads < 1) throw Error("need at least one bead");
  if (config.layer_depths.empty()) throw Error("need at least one layer");
  const double lo_x = config.margin;
  const double hi_x = config.nx - 1 - config.margin;
  const double lo_y = config.margin;
  const double hi_y = config.ny - 1 - config.margin;
  if (!(hi_x > lo_x) || !(hi_y > lo_y)) {
    throw Error("margin leaves no lateral room for beads");
  }

  ObservationSet scene;
  scene.items.reserve(config.n_beads);
  std::vector<Point3> placed;
  placed.reserve(config.n_beads);
  const int layers = static_cast<int>(config.layer_depths.size());
  const double min_sep_sq = config.min_separation * config.min_separation;

  for (int i = 0; i < config.n_beads; ++i) {
    const double depth = config.layer_depths[i % layers];
    bool accepted = false;
    for (int attempt = 0; attempt < 20000 && !accepted; ++attempt) {
      const Point3 candidate(rng.uniform(lo_x, hi_x), rng.uniform(lo_y, hi_y),
                             depth);
      accepted = true;
      for (const Point3& other : placed) {
        if ((candidate - other).squaredNorm() < min_sep_sq) {
          accepted = false;
          break;
        }
      }
      if (accepted) {
        placed.push_back(candidate);
        const Vec3 to_center = config.center - candidate;
        scene.items.emplace_back(candidate, normalize_direction(to_center),
                                 1.0);
      }
    }
    if (!accepted) {
      throw Error("could not place bead " + std::to_string(i) +
                  " with the requested separation; relax min_separation or "
                  "reduce the bead count");
    }
  }
  return scene;
}

}  // namespace opticenter
