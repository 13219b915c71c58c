#include <opticenter/synthetic.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <opticenter/format.hpp>

namespace opticenter {

namespace {

// Stream index reserved for drawing the fixed scene; replicates use their
// own replicate index as the stream.
constexpr std::uint64_t kSceneStream = 0x5CE4E5EEDull;

std::vector<int> layer_counts(const ScenarioConfig& config) {
  const int layers = static_cast<int>(config.layer_depths.size());
  std::vector<double> weights = config.layer_weights;
  if (weights.empty()) weights.assign(layers, 1.0);
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);

  // Largest-remainder apportionment keeps counts deterministic.
  std::vector<int> counts(layers, 0);
  std::vector<std::pair<double, int>> remainders;
  int assigned = 0;
  for (int l = 0; l < layers; ++l) {
    const double exact = config.n_beads * weights[l] / total;
    counts[l] = static_cast<int>(std::floor(exact));
    assigned += counts[l];
    remainders.emplace_back(exact - counts[l], l);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int k = 0; k < config.n_beads - assigned; ++k) {
    counts[remainders[k % layers].second] += 1;
  }
  return counts;
}

}  // namespace

void ScenarioConfig::validate() const {
  if (n_beads < 1) throw Error("scenario needs at least one bead");
  if (!(lateral_max > lateral_min)) {
    throw Error("lateral range is empty");
  }
  if (layer_depths.empty()) throw Error("at least one layer depth required");
  if (!layer_weights.empty() &&
      layer_weights.size() != layer_depths.size()) {
    throw Error("layer weights must match the number of layers");
  }
  for (double w : layer_weights) {
    if (!(w >= 0.0)) throw Error("layer weights must be nonnegative");
  }
  if (!layer_weights.empty() &&
      std::accumulate(layer_weights.begin(), layer_weights.end(), 0.0) <= 0.0) {
    throw Error("layer weights must not all be zero");
  }
  if (!(outlier_probability >= 0.0 && outlier_probability <= 1.0)) {
    throw Error("outlier probability must lie in [0, 1]");
  }
  // sigma2 > sigma1 and sigma4 > sigma3 in the noise model proper; equal or
  // zero values are accepted so noise-free checks stay expressible.
  if (!(sigma1 >= 0.0 && sigma3 >= 0.0)) throw Error("sigmas must be >= 0");
  if (sigma2 < sigma1 || sigma4 < sigma3) {
    throw Error("outlier sigmas must be at least the inlier sigmas");
  }
}

ObservationSet generate_scene(const ScenarioConfig& config, Rng& rng) {
  config.validate();
  const std::vector<int> counts = layer_counts(config);

  ObservationSet obs;
  obs.items.reserve(config.n_beads);
  for (std::size_t layer = 0; layer < config.layer_depths.size(); ++layer) {
    for (int k = 0; k < counts[layer]; ++k) {
      const Point3 anchor(rng.uniform(config.lateral_min, config.lateral_max),
                          rng.uniform(config.lateral_min, config.lateral_max),
                          config.layer_depths[layer]);
      const Vec3 to_center = config.true_center - anchor;
      obs.items.emplace_back(anchor, normalize_direction(to_center), 1.0);
    }
  }
  return obs;
}

ObservationSet corrupt(const ObservationSet& obs, const ScenarioConfig& config,
                       Rng& rng) {
  config.validate();
  ObservationSet out;
  out.items.reserve(obs.items.size());
  for (const LineObservation& item : obs.items) {
    // rho <= epsilon marks an outlier; one draw gates direction and anchor.
    const bool outlier = rng.uniform() <= config.outlier_probability;
    const double sigma_dir = outlier ? config.sigma2 : config.sigma1;
    const double sigma_anchor = outlier ? config.sigma4 : config.sigma3;
    Vec3 dir = item.direction.vec();
    for (int j = 0; j < 3; ++j) dir[j] += rng.normal(sigma_dir);
    Point3 anchor = item.anchor;
    for (int j = 0; j < 3; ++j) anchor[j] += rng.normal(sigma_anchor);
    out.items.emplace_back(anchor, normalize_direction(dir), item.weight);
  }
  return out;
}

MonteCarloReport compute_metrics(const std::vector<Point3>& estimates,
                                 const Point3& true_center) {
  const int n = static_cast<int>(estimates.size());
  if (n < 2) {
    throw InsufficientReplicates("metrics need at least 2 estimates, got " +
                                 std::to_string(n));
  }
  MonteCarloReport report;
  report.replications = n;
  report.estimates = estimates;

  Vec3 mean = Vec3::Zero();
  double sq_error = 0.0;
  for (const Point3& c : estimates) {
    mean += c;
    sq_error += (c - true_center).squaredNorm();
  }
  mean /= n;
  sq_error /= n;

  Vec3 var = Vec3::Zero();
  for (const Point3& c : estimates) {
    var += (c - mean).cwiseAbs2();
  }
  var /= (n - 1);

  report.bias_pct =
      100.0 * (mean - true_center).cwiseQuotient(true_center);
  report.sigma_pct = 100.0 * var.cwiseSqrt().cwiseQuotient(true_center);
  report.mean_squared_error = sq_error;
  report.aggregate_error = std::sqrt(sq_error);
  return report;
}

namespace {

Point3 run_method(const MethodSpec& method, const ObservationSet& obs,
                  const BenchSolverOptions& options) {
  switch (method.solver) {
    case MethodSpec::Solver::Wls:
      return solve_wls_closed_form(build_model1(obs)).center;
    case MethodSpec::Solver::Tls: {
      const LinearSystem sys = method.model == ModelLayout::Model1
                                   ? build_model1(obs)
                                   : build_model2(obs);
      return solve_tls(sys).center;
    }
    case MethodSpec::Solver::PrimalDual: {
      const LinearSystem sys = method.model == ModelLayout::Model1
                                   ? build_model1(obs)
                                   : build_model2(obs);
      PrimalDualConfig config;
      config.gamma = options.gamma;
      config.max_iterations = options.max_iterations;
      config.relative_tolerance = options.relative_tolerance;
      return solve_primal_dual(sys, method.loss, config).center;
    }
  }
  throw Error("unhandled solver kind");
}

}  // namespace

std::vector<MonteCarloReport> run_monte_carlo(
    const ScenarioConfig& config, const std::vector<MethodSpec>& methods,
    int replications, const BenchSolverOptions& options) {
  config.validate();
  if (replications < 2) {
    throw InsufficientReplicates("need at least 2 replications, got " +
                                 std::to_string(replications));
  }
  if (methods.empty()) throw Error("no methods selected");

  ObservationSet fixed_scene;
  if (!config.redraw_scene) {
    Rng scene_rng = Rng::child(config.seed, kSceneStream);
    fixed_scene = generate_scene(config, scene_rng);
  }

  const int m = static_cast<int>(methods.size());
  // estimate slot (method, replicate); ok marks successes.
  std::vector<std::vector<Point3>> estimates(m,
                                             std::vector<Point3>(replications));
  std::vector<std::vector<char>> ok(m, std::vector<char>(replications, 0));

#pragma omp parallel for schedule(dynamic)
  for (int r = 0; r < replications; ++r) {
    Rng rng = Rng::child(config.seed, static_cast<std::uint64_t>(r));
    const ObservationSet scene =
        config.redraw_scene ? generate_scene(config, rng) : fixed_scene;
    const ObservationSet noisy = corrupt(scene, config, rng);
    for (int j = 0; j < m; ++j) {
      try {
        estimates[j][r] = run_method(methods[j], noisy, options);
        ok[j][r] = 1;
      } catch (const Error&) {
        // Recorded as a failed replicate below.
      }
    }
  }

  std::vector<MonteCarloReport> reports;
  reports.reserve(m);
  for (int j = 0; j < m; ++j) {
    std::vector<Point3> good;
    std::vector<int> indices;
    good.reserve(replications);
    for (int r = 0; r < replications; ++r) {
      if (ok[j][r]) {
        good.push_back(estimates[j][r]);
        indices.push_back(r);
      }
    }
    MonteCarloReport report;
    if (good.size() >= 2) {
      report = compute_metrics(good, config.true_center);
    }
    report.method = methods[j].describe();
    report.failures = replications - static_cast<int>(good.size());
    report.replications = replications;
    report.valid = report.failures <= replications / 20;
    report.replicate_indices = std::move(indices);
    reports.push_back(std::move(report));
  }
  return reports;
}

MethodSpec MethodSpec::parse(const std::string& text) {
  const auto split = [](const std::string& s) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
      const std::size_t colon = s.find(':', start);
      if (colon == std::string::npos) {
        parts.push_back(s.substr(start));
        break;
      }
      parts.push_back(s.substr(start, colon - start));
      start = colon + 1;
    }
    return parts;
  };
  const auto parse_model = [&text](const std::string& token) {
    if (token == "1") return ModelLayout::Model1;
    if (token == "2") return ModelLayout::Model2;
    throw UsageError("invalid model '" + token + "' in method '" + text +
                     "'; expected 1 or 2");
  };

  const std::vector<std::string> parts = split(text);
  MethodSpec spec;
  if (parts[0] == "wls") {
    if (parts.size() != 2 || parts[1] != "1") {
      throw UsageError("closed-form WLS is 'wls:1' (Model 1 only)");
    }
    spec.solver = Solver::Wls;
    spec.model = ModelLayout::Model1;
    return spec;
  }
  if (parts[0] == "tls") {
    if (parts.size() != 2) {
      throw UsageError("TLS method is 'tls:<model>', got '" + text + "'");
    }
    spec.solver = Solver::Tls;
    spec.model = parse_model(parts[1]);
    return spec;
  }
  if (parts[0] == "pd") {
    if (parts.size() < 3) {
      throw UsageError("primal-dual method is 'pd:<model>:<loss>', got '" +
                       text + "'");
    }
    spec.solver = Solver::PrimalDual;
    spec.model = parse_model(parts[1]);
    // The loss may itself contain a colon (huber:t=...).
    std::string loss_text = parts[2];
    for (std::size_t i = 3; i < parts.size(); ++i) loss_text += ":" + parts[i];
    spec.loss = LossSpec::parse(loss_text);
    return spec;
  }
  throw UsageError("unknown method '" + text +
                   "'; expected wls:1, tls:<model> or pd:<model>:<loss>");
}

std::string MethodSpec::describe() const {
  const std::string model_token = model == ModelLayout::Model1 ? "1" : "2";
  switch (solver) {
    case Solver::Wls:
      return "wls:1";
    case Solver::Tls:
      return "tls:" + model_token;
    case Solver::PrimalDual:
      return "pd:" + model_token + ":" + loss.describe();
  }
  return "?";
}

}  // namespace opticenter
