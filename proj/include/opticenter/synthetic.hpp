#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <opticenter/formulations.hpp>
#include <opticenter/geometry.hpp>
#include <opticenter/prox.hpp>
#include <opticenter/rng.hpp>
#include <opticenter/solvers.hpp>

namespace opticenter {

/// Two-layer bead scene with Bernoulli-Gaussian corruption. Defaults follow
/// the reference experiment: 200 beads on layers {50, 250}, lateral
/// coordinates uniform on [0, 2048], true center (1000, 1000, 5000),
/// outlier probability 0.25, direction noise 0.015/0.030, anchor noise
/// 30/60 voxels.
struct ScenarioConfig {
  int n_beads = 200;
  double lateral_min = 0.0;
  double lateral_max = 2048.0;
  std::vector<double> layer_depths = {50.0, 250.0};
  /// Relative layer occupancies; empty means an even split.
  std::vector<double> layer_weights;
  Point3 true_center = Point3(1000.0, 1000.0, 5000.0);
  double outlier_probability = 0.25;  // epsilon
  double sigma1 = 0.015;              // direction noise, inliers
  double sigma2 = 0.030;              // direction noise, outliers
  double sigma3 = 30.0;               // anchor noise, inliers
  double sigma4 = 60.0;               // anchor noise, outliers
  std::uint64_t seed = 0;
  /// Redraw the bead layout per replicate instead of fixing one scene.
  bool redraw_scene = false;

  void validate() const;
};

/// Estimator descriptor for the Monte Carlo harness. String forms:
/// "wls:1", "tls:<model>", "pd:<model>:<loss>".
struct MethodSpec {
  enum class Solver { Wls, PrimalDual, Tls };

  Solver solver = Solver::Tls;
  ModelLayout model = ModelLayout::Model2;
  LossSpec loss;  // primal-dual only

  static MethodSpec parse(const std::string& text);
  std::string describe() const;
};

struct MonteCarloReport {
  std::string method;
  int replications = 0;
  int failures = 0;
  /// False when more than 5% of replicates failed.
  bool valid = true;
  /// mean(c_hat_j - c_j) / c_j * 100 per axis.
  Vec3 bias_pct = Vec3::Zero();
  /// std(c_hat_j) / c_j * 100 per axis (unbiased, n-1).
  Vec3 sigma_pct = Vec3::Zero();
  /// sqrt(mean ||c_hat - c||^2) over realizations.
  double aggregate_error = 0.0;
  /// mean ||c_hat - c||^2, without the root.
  double mean_squared_error = 0.0;
  /// Successful estimates in replicate order (failed slots skipped).
  std::vector<Point3> estimates;
  /// Replicate index of each entry in `estimates`.
  std::vector<int> replicate_indices;
};

/// Extra knobs for the harness's primal-dual solves.
struct BenchSolverOptions {
  std::optional<double> gamma;
  int max_iterations = 20000;
  double relative_tolerance = 1e-8;
};

/// Noiseless truth: anchors on the configured layers, directions aimed
/// exactly at the true center, unit weights.
ObservationSet generate_scene(const ScenarioConfig& config, Rng& rng);

/// Bernoulli-Gaussian corruption: each observation is an outlier with
/// probability epsilon; the same draw gates both its direction and anchor
/// noise. Corrupted directions are renormalized.
ObservationSet corrupt(const ObservationSet& obs, const ScenarioConfig& config,
                       Rng& rng);

/// Bias / sigma / aggregate error of a set of center estimates. Needs at
/// least two estimates.
MonteCarloReport compute_metrics(const std::vector<Point3>& estimates,
                                 const Point3& true_center);

/// Runs every method over `replications` corrupted realizations and
/// aggregates the per-method statistics. Replicates run in parallel; all
/// randomness derives from per-replicate child seeds, so reports are
/// byte-identical for any thread count.
std::vector<MonteCarloReport> run_monte_carlo(
    const ScenarioConfig& config, const std::vector<MethodSpec>& methods,
    int replications, const BenchSolverOptions& options = {});

}  // namespace opticenter
