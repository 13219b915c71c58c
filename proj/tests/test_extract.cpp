#include <doctest.h>

#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include <opticenter/extract.hpp>
#include <opticenter/formulations.hpp>
#include <opticenter/solvers.hpp>

#include "test_util.hpp"

using namespace opticenter;

namespace {

ObservationSet single_bead(const Point3& anchor, const Vec3& dir) {
  ObservationSet obs;
  obs.items.emplace_back(anchor, normalize_direction(dir), 1.0);
  return obs;
}

SynthesisParams quiet_params() {
  SynthesisParams p;
  p.noise_sigma = 0.0;
  return p;
}

}  // namespace

TEST_CASE("synthesize_stack peaks at the planted anchor") {
  Rng rng(3);
  const VolumeStack stack = synthesize_stack(
      single_bead(Point3(32, 30, 28), Vec3(0, 0, 1)), quiet_params(), 64, 64,
      64, rng);
  std::int64_t argmax = 0;
  for (std::int64_t i = 0; i < stack.size(); ++i) {
    if (stack.voxels[i] > stack.voxels[argmax]) argmax = i;
  }
  const int x = static_cast<int>(argmax % 64);
  const int y = static_cast<int>((argmax / 64) % 64);
  const int z = static_cast<int>(argmax / (64 * 64));
  CHECK(std::abs(x - 32) <= 0);
  CHECK(std::abs(y - 30) <= 0);
  CHECK(std::abs(z - 28) <= 0);
}

TEST_CASE("synthesized covariance aligns with the planted direction") {
  Rng rng(5);
  const Vec3 planted = Vec3(0.25, -0.1, 0.96).normalized();
  const VolumeStack stack = synthesize_stack(
      single_bead(Point3(32, 32, 32), planted), quiet_params(), 64, 64, 64,
      rng);
  // Oracle: intensity-weighted covariance of the rendered volume.
  double total = 0.0;
  Vec3 mean = Vec3::Zero();
  for (int z = 0; z < 64; ++z)
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        const double v = stack.at(x, y, z) - 100.0;  // remove background
        if (v <= 0) continue;
        total += v;
        mean += v * Vec3(x, y, z);
      }
  mean /= total;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (int z = 0; z < 64; ++z)
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) {
        const double v = stack.at(x, y, z) - 100.0;
        if (v <= 0) continue;
        const Vec3 d = Vec3(x, y, z) - mean;
        cov += v * (d * d.transpose());
      }
  cov /= total;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);
  Vec3 axis = es.eigenvectors().col(2);
  if (axis.z() < 0) axis = -axis;
  const double angle = std::acos(std::clamp(axis.dot(planted), -1.0, 1.0));
  CHECK(angle <= 2.0 * std::numbers::pi / 180.0);
}

TEST_CASE("zero peak intensity renders a flat background") {
  Rng rng(7);
  SynthesisParams p = quiet_params();
  p.peak_intensity = 0.0;
  const VolumeStack stack = synthesize_stack(
      single_bead(Point3(24, 24, 24), Vec3(0, 0, 1)), p, 48, 48, 48, rng);
  for (float v : stack.voxels) CHECK(v == 100.0f);
}

TEST_CASE("beads violating the 3-sigma margin are rejected") {
  Rng rng(9);
  CHECK_THROWS_AS(
      synthesize_stack(single_bead(Point3(5, 24, 24), Vec3(0, 0, 1)),
                       quiet_params(), 48, 48, 48, rng),
      BeadOutOfBounds);
}

TEST_CASE("synthesis validates the sigma ordering") {
  Rng rng(11);
  SynthesisParams p = quiet_params();
  p.sigma_parallel = 1.0;
  p.sigma_perp = 2.0;
  CHECK_THROWS_AS(synthesize_stack(single_bead(Point3(24, 24, 24),
                                               Vec3(0, 0, 1)),
                                   p, 48, 48, 48, rng),
                  Error);
}

TEST_CASE("component_pca recovers planted centroid and axis") {
  Rng rng(13);
  const Point3 anchor(30, 28, 26);
  const Vec3 planted = Vec3(0.2, 0.1, 0.97).normalized();
  const VolumeStack stack = synthesize_stack(single_bead(anchor, planted),
                                             quiet_params(), 60, 60, 60, rng);
  // Background-free view for PCA: subtract the constant pedestal.
  VolumeStack flat = stack;
  for (auto& v : flat.voxels) v = std::max(0.0f, v - 100.0f);
  const ComponentSet comps = threshold_and_label(flat, 20.0);
  REQUIRE(comps.components.size() == 1);
  const DetectedPSF psf = component_pca(flat, comps.components[0]);
  CHECK((psf.centroid - anchor).norm() <= 0.25);
  const double angle = std::acos(
      std::clamp(psf.principal_axis.vec().dot(planted), -1.0, 1.0));
  CHECK(angle <= 2.0 * std::numbers::pi / 180.0);
  CHECK(psf.eigenvalues(0) >= psf.eigenvalues(1));
  CHECK(psf.eigenvalues(1) >= psf.eigenvalues(2));
  CHECK(psf.eigenvalues(2) >= 0.0);
  CHECK(psf.voxel_volume ==
        static_cast<std::int64_t>(comps.components[0].voxels.size()));
}

TEST_CASE("spherical bead has eigenvalue ratio near one") {
  Rng rng(17);
  SynthesisParams p = quiet_params();
  p.sigma_parallel = 3.0;
  p.sigma_perp = 2.9999;  // isotropic within rounding
  const VolumeStack stack = synthesize_stack(
      single_bead(Point3(24, 24, 24), Vec3(0, 0, 1)), p, 48, 48, 48, rng);
  VolumeStack flat = stack;
  for (auto& v : flat.voxels) v = std::max(0.0f, v - 100.0f);
  const ComponentSet comps = threshold_and_label(flat, 20.0);
  REQUIRE(comps.components.size() == 1);
  const DetectedPSF psf = component_pca(flat, comps.components[0]);
  CHECK(psf.eigenvalues(0) / psf.eigenvalues(1) ==
        doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("component_pca degenerate cases") {
  VolumeStack stack = VolumeStack::filled(12, 12, 12, 0.0f);

  Component tiny;
  tiny.voxels = {stack.index(1, 1, 1), stack.index(2, 1, 1),
                 stack.index(1, 2, 1)};
  CHECK_THROWS_AS(component_pca(stack, tiny), DegenerateComponent);

  // One-voxel-thick plane: no spread along z.
  Component plane;
  for (int y = 2; y < 6; ++y)
    for (int x = 2; x < 6; ++x) {
      stack.at(x, y, 3) = 10.0f;
      plane.voxels.push_back(stack.index(x, y, 3));
    }
  CHECK_THROWS_AS(component_pca(stack, plane), DegenerateComponent);

  // Two voxels thick: fine, with the smallest eigenvalue near zero.
  Component slab = plane;
  for (int y = 2; y < 6; ++y)
    for (int x = 2; x < 6; ++x) {
      stack.at(x, y, 4) = 10.0f;
      slab.voxels.push_back(stack.index(x, y, 4));
    }
  const DetectedPSF psf = component_pca(stack, slab);
  CHECK(psf.eigenvalues(2) == doctest::Approx(0.25).epsilon(1e-9));

  Component zero_intensity;
  zero_intensity.voxels = {stack.index(8, 8, 8), stack.index(9, 8, 8),
                           stack.index(8, 9, 8), stack.index(8, 8, 9)};
  CHECK_THROWS_AS(component_pca(stack, zero_intensity), DegenerateComponent);
}

TEST_CASE("principal axis sign convention is deterministic") {
  Rng rng(19);
  const Vec3 planted = Vec3(0.3, 0.2, -0.93).normalized();  // points down
  const VolumeStack stack = synthesize_stack(
      single_bead(Point3(24, 24, 24), planted), quiet_params(), 48, 48, 48,
      rng);
  VolumeStack flat = stack;
  for (auto& v : flat.voxels) v = std::max(0.0f, v - 100.0f);
  const ComponentSet comps = threshold_and_label(flat, 20.0);
  const DetectedPSF psf = component_pca(flat, comps.components[0]);
  CHECK(psf.principal_axis.z() > 0.0);  // flipped to positive z
}

TEST_CASE("extract_observations end to end on planted beads") {
  StackSceneConfig layout;
  layout.n_beads = 12;
  layout.nx = 128;
  layout.ny = 128;
  layout.nz = 96;
  layout.center = Point3(64, 64, 500);
  layout.layer_depths = {24, 48};
  layout.margin = 26.0;
  layout.min_separation = 26.0;
  Rng rng(23);
  const ObservationSet scene = generate_bead_scene(layout, rng);
  REQUIRE(scene.count() == 12);

  SynthesisParams synth;  // default noise
  Rng render_rng(29);
  const VolumeStack stack =
      synthesize_stack(scene, synth, layout.nx, layout.ny, layout.nz,
                       render_rng);
  ExtractionParams params;
  const ExtractionResult result = extract_observations(stack, params);
  CHECK(result.observations.count() == 12);

  // Anchor recovery: RMS under half a voxel against the planting.
  double sq = 0.0;
  for (const auto& item : result.observations.items) {
    double best = 1e18;
    for (const auto& planted : scene.items) {
      best = std::min(best, (item.anchor - planted.anchor).squaredNorm());
    }
    sq += best;
  }
  CHECK(std::sqrt(sq / result.observations.count()) <= 0.5);

  // Weights are the eigenvalue ratios, all above the filter.
  for (const auto& item : result.observations.items) {
    CHECK(item.weight > params.eigenvalue_ratio_filter);
  }
}

TEST_CASE("eigenvalue ratio filter separates elongated from spherical") {
  ObservationSet scene;
  scene.items.emplace_back(Point3(32, 32, 32),
                           normalize_direction(Vec3(0, 0, 1)), 1.0);
  Rng rng(31);
  SynthesisParams elongated = quiet_params();
  const VolumeStack stack_e =
      synthesize_stack(scene, elongated, 96, 96, 64, rng);
  SynthesisParams round = quiet_params();
  round.sigma_parallel = 2.2;
  round.sigma_perp = 2.0;
  Rng rng2(37);
  const VolumeStack stack_r = synthesize_stack(scene, round, 96, 96, 64, rng2);

  ExtractionParams params;  // ratio filter 2.2
  params.tophat_halfwin = {10, 10, 14};
  params.threshold = 150.0;
  params.min_volume = 10;
  const ExtractionResult res_e = extract_observations(stack_e, params);
  const ExtractionResult res_r = extract_observations(stack_r, params);
  CHECK(res_e.observations.count() == 1);
  CHECK(res_r.observations.count() == 0);
  CHECK(res_r.rejected_by_ratio == 1);
}

TEST_CASE("extracting an empty stack yields an empty set") {
  const VolumeStack stack = VolumeStack::filled(48, 48, 48, 0.0f);
  ExtractionParams params;
  params.threshold = 100.0;
  const ExtractionResult result = extract_observations(stack, params);
  CHECK(result.observations.empty());
  CHECK(result.components_found == 0);
}

TEST_CASE("orientation_vs_distance basics and cone oracle") {
  // Bead directly under the center pointing straight up.
  ObservationSet trivial;
  trivial.items.emplace_back(Point3(100, 100, 20),
                             normalize_direction(Vec3(0, 0, 1)), 1.0);
  const OrientationTable t0 =
      orientation_vs_distance(trivial, Point3(100, 100, 600));
  REQUIRE(t0.rows.size() == 1);
  CHECK(t0.rows[0].distance == doctest::Approx(0.0));
  CHECK(t0.rows[0].angle == doctest::Approx(0.0));

  // Synthetic cone: angle must equal arctan(dist / height) pointwise and
  // be near-linear in distance for dist << height.
  const Point3 center(0, 0, 1000);
  ObservationSet cone;
  Rng rng(41);
  for (int i = 0; i < 60; ++i) {
    const double radius = rng.uniform(5.0, 150.0);
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const Point3 anchor(radius * std::cos(theta), radius * std::sin(theta),
                        0.0);
    cone.items.emplace_back(anchor, normalize_direction(center - anchor), 1.0);
  }
  const OrientationTable table = orientation_vs_distance(cone, center);
  for (const auto& row : table.rows) {
    CHECK(row.angle ==
          doctest::Approx(std::atan(row.distance / 1000.0)).epsilon(1e-9));
    CHECK(row.angle >= 0.0);
    CHECK(row.angle <= std::numbers::pi / 2.0);
  }
  CHECK(table.r_squared > 0.99);
  CHECK(table.slope == doctest::Approx(1.0 / 1000.0).epsilon(0.02));
}

TEST_CASE("orientation fit is NaN below two rows") {
  ObservationSet empty;
  const OrientationTable table =
      orientation_vs_distance(empty, Point3(0, 0, 0));
  CHECK(table.rows.empty());
  CHECK(std::isnan(table.slope));
}

TEST_CASE("generate_bead_scene honors margins and separation") {
  StackSceneConfig layout;
  layout.n_beads = 30;
  layout.min_separation = 18.0;
  Rng rng(43);
  const ObservationSet scene = generate_bead_scene(layout, rng);
  for (int i = 0; i < scene.count(); ++i) {
    const Point3& a = scene.items[i].anchor;
    CHECK(a.x() >= layout.margin);
    CHECK(a.x() <= layout.nx - 1 - layout.margin);
    CHECK(a.y() >= layout.margin);
    CHECK(a.y() <= layout.ny - 1 - layout.margin);
    for (int j = i + 1; j < scene.count(); ++j) {
      CHECK((a - scene.items[j].anchor).norm() >= layout.min_separation);
    }
  }
}

TEST_CASE("pipeline roundtrip feeds solvers back to the planted center") {
  StackSceneConfig layout;
  layout.n_beads = 16;
  layout.nx = 160;
  layout.ny = 160;
  layout.nz = 96;
  layout.center = Point3(80, 80, 420);
  layout.layer_depths = {24, 52};
  layout.margin = 26.0;
  layout.min_separation = 24.0;
  Rng rng(47);
  const ObservationSet scene = generate_bead_scene(layout, rng);
  SynthesisParams synth;
  Rng render_rng(53);
  const VolumeStack stack = synthesize_stack(scene, synth, layout.nx,
                                             layout.ny, layout.nz, render_rng);
  const ExtractionResult extraction =
      extract_observations(stack, ExtractionParams{});
  REQUIRE(extraction.observations.count() == 16);
  const Solution sol = solve_tls(build_model2(extraction.observations));
  for (int axis = 0; axis < 3; ++axis) {
    const double rel = std::abs(sol.center(axis) - layout.center(axis)) /
                       layout.center(axis);
    CHECK(rel <= 0.02);
  }
}
