// Command-line front end: simulate / corrupt / estimate / bench /
// synth-stack / extract / analyze / replay. Every command resolves its
// parameters, runs, and writes a manifest next to its primary output;
// reruns with the same seed are byte-identical regardless of --threads.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <opticenter/errors.hpp>
#include <opticenter/extract.hpp>
#include <opticenter/format.hpp>
#include <opticenter/formulations.hpp>
#include <opticenter/geometry.hpp>
#include <opticenter/manifest.hpp>
#include <opticenter/prox.hpp>
#include <opticenter/rng.hpp>
#include <opticenter/solvers.hpp>
#include <opticenter/synthetic.hpp>
#include <opticenter/volume.hpp>

namespace opticenter::cli {

using nlohmann::json;

namespace {

std::string error_name(const std::exception& e) {
  if (dynamic_cast<const DegenerateDirection*>(&e)) return "DegenerateDirection";
  if (dynamic_cast<const DimensionMismatch*>(&e)) return "DimensionMismatch";
  if (dynamic_cast<const SingularNormalMatrix*>(&e)) return "SingularNormalMatrix";
  if (dynamic_cast<const NongenericTLS*>(&e)) return "NongenericTLS";
  if (dynamic_cast<const RankDeficient*>(&e)) return "RankDeficient";
  if (dynamic_cast<const StepSizeNotPositive*>(&e)) return "StepSizeNotPositive";
  if (dynamic_cast<const NonFiniteIterate*>(&e)) return "NonFiniteIterate";
  if (dynamic_cast<const InsufficientReplicates*>(&e)) return "InsufficientReplicates";
  if (dynamic_cast<const BeadOutOfBounds*>(&e)) return "BeadOutOfBounds";
  if (dynamic_cast<const DegenerateComponent*>(&e)) return "DegenerateComponent";
  if (dynamic_cast<const ParseError*>(&e)) return "ParseError";
  if (dynamic_cast<const Error*>(&e)) return "Error";
  return "InternalError";
}

Point3 to_point(const std::vector<double>& v, const std::string& what) {
  if (v.size() != 3) {
    throw UsageError(what + " needs exactly 3 comma-separated values");
  }
  return Point3(v[0], v[1], v[2]);
}

std::optional<double> parse_gamma(const std::string& text) {
  if (text == "auto") return std::nullopt;
  try {
    return parse_double(text, "--gamma");
  } catch (const ParseError&) {
    throw UsageError("--gamma expects 'auto' or a number, got '" + text + "'");
  }
}

class Timer {
 public:
  Timer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

void finish(RunManifest manifest, const Timer& timer,
            const std::string& primary_out) {
  manifest.duration_seconds = timer.seconds();
  write_manifest(manifest, primary_out + ".manifest.json");
}

json solution_to_json(const Solution& sol) {
  json doc;
  doc["center"] = {sol.center.x(), sol.center.y(), sol.center.z()};
  if (sol.aux_distances) {
    doc["aux_distances"] =
        std::vector<double>(sol.aux_distances->data(),
                            sol.aux_distances->data() + sol.aux_distances->size());
  } else {
    doc["aux_distances"] = nullptr;
  }
  json diag;
  diag["iterations"] = sol.diagnostics.iterations;
  diag["objective"] = sol.diagnostics.objective;
  diag["residual_norm"] = sol.diagnostics.residual_norm;
  diag["termination"] =
      SolveDiagnostics::termination_name(sol.diagnostics.termination);
  if (sol.diagnostics.gamma > 0.0) diag["gamma"] = sol.diagnostics.gamma;
  if (sol.diagnostics.huber_t > 0.0) diag["huber_t"] = sol.diagnostics.huber_t;
  doc["diagnostics"] = diag;
  return doc;
}

}  // namespace

// ---------------------------------------------------------------------------
// simulate

struct SimulateParams {
  int n = 200;
  std::vector<double> center;
  std::vector<double> layers = {50.0, 250.0};
  std::vector<double> layer_weights;
  std::vector<double> lateral = {0.0, 2048.0};
  std::uint64_t seed = 0;
  std::string out = "scene.csv";
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SimulateParams, n, center, layers,
                                   layer_weights, lateral, seed, out)

ScenarioConfig scenario_from(const SimulateParams& p) {
  ScenarioConfig config;
  config.n_beads = p.n;
  config.true_center = to_point(p.center, "--center");
  config.layer_depths = p.layers;
  config.layer_weights = p.layer_weights;
  if (p.lateral.size() != 2) {
    throw UsageError("--lateral needs exactly 2 values lo,hi");
  }
  config.lateral_min = p.lateral[0];
  config.lateral_max = p.lateral[1];
  config.seed = p.seed;
  return config;
}

void run_simulate(const SimulateParams& p) {
  const Timer timer;
  const ScenarioConfig config = scenario_from(p);
  Rng rng(config.seed);
  const ObservationSet scene = generate_scene(config, rng);
  save_observations_csv(scene, p.out);
  std::cout << "wrote " << scene.count() << " observations to " << p.out
            << "\n";

  RunManifest manifest;
  manifest.command = "simulate";
  manifest.parameters = p;
  manifest.seed = p.seed;
  manifest.outputs = {p.out};
  finish(std::move(manifest), timer, p.out);
}

// ---------------------------------------------------------------------------
// corrupt

struct CorruptParams {
  std::string in;
  double epsilon = 0.25;
  double sigma1 = 0.015;
  double sigma2 = 0.030;
  double sigma3 = 30.0;
  double sigma4 = 60.0;
  std::uint64_t seed = 0;
  std::string out = "corrupted.csv";
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(CorruptParams, in, epsilon, sigma1, sigma2,
                                   sigma3, sigma4, seed, out)

void run_corrupt(const CorruptParams& p) {
  const Timer timer;
  ScenarioConfig config;
  config.outlier_probability = p.epsilon;
  config.sigma1 = p.sigma1;
  config.sigma2 = p.sigma2;
  config.sigma3 = p.sigma3;
  config.sigma4 = p.sigma4;
  config.seed = p.seed;
  const ObservationSet scene = load_observations_csv(p.in);
  Rng rng(p.seed);
  const ObservationSet noisy = corrupt(scene, config, rng);
  save_observations_csv(noisy, p.out);
  std::cout << "corrupted " << noisy.count() << " observations to " << p.out
            << "\n";

  RunManifest manifest;
  manifest.command = "corrupt";
  manifest.parameters = p;
  manifest.seed = p.seed;
  manifest.inputs = {p.in};
  manifest.outputs = {p.out};
  finish(std::move(manifest), timer, p.out);
}

// ---------------------------------------------------------------------------
// estimate

struct EstimateParams {
  std::string in;
  std::string solver;
  int model = 2;
  std::string loss = "sq";
  std::string gamma = "auto";
  double tol = 1e-8;
  int max_iter = 20000;
  std::string box = "none";
  std::string dump_system;
  std::string out = "solution.json";
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(EstimateParams, in, solver, model, loss,
                                   gamma, tol, max_iter, box, dump_system, out)

BoxConstraint parse_box(const std::string& text) {
  std::vector<double> values;
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string token = text.substr(
        start, comma == std::string::npos ? std::string::npos : comma - start);
    if (token == "inf") {
      values.push_back(std::numeric_limits<double>::infinity());
    } else if (token == "-inf") {
      values.push_back(-std::numeric_limits<double>::infinity());
    } else {
      try {
        values.push_back(parse_double(token, "--box"));
      } catch (const ParseError&) {
        throw UsageError("--box expects 'none' or 6 values "
                         "lox,hix,loy,hiy,loz,hiz (inf allowed)");
      }
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (values.size() != 6) {
    throw UsageError("--box expects 'none' or exactly 6 values");
  }
  BoxConstraint box;
  box.lower = Vec3(values[0], values[2], values[4]);
  box.upper = Vec3(values[1], values[3], values[5]);
  if (!box.valid()) throw UsageError("--box has lower > upper");
  return box;
}

void run_estimate(const EstimateParams& p) {
  const Timer timer;
  if (p.solver != "wls" && p.solver != "pd" && p.solver != "tls") {
    throw UsageError("--solver must be wls, pd or tls");
  }
  if (p.model != 1 && p.model != 2) {
    throw UsageError("--model must be 1 or 2");
  }
  if (p.solver == "wls" && p.model != 1) {
    throw UsageError("closed-form WLS supports --model 1 only");
  }
  const LossSpec loss = LossSpec::parse(p.loss);  // validates the grammar

  const ObservationSet obs = load_observations_csv(p.in);
  const LinearSystem system =
      p.model == 1 ? build_model1(obs) : build_model2(obs);
  if (!p.dump_system.empty()) system.dump_matrix_market(p.dump_system);

  Solution sol;
  if (p.solver == "wls") {
    sol = solve_wls_closed_form(system);
  } else if (p.solver == "tls") {
    sol = solve_tls(system);
  } else {
    PrimalDualConfig config;
    config.gamma = parse_gamma(p.gamma);
    config.relative_tolerance = p.tol;
    config.max_iterations = p.max_iter;
    if (p.box != "none") config.constraint = parse_box(p.box);
    sol = solve_primal_dual(system, loss, config);
  }

  json doc = solution_to_json(sol);
  doc["method"] = {{"solver", p.solver},
                   {"model", p.model},
                   {"loss", p.solver == "pd" ? loss.describe() : ""}};
  std::ofstream out(p.out);
  if (!out) throw Error("cannot write '" + p.out + "'");
  out << doc.dump(2) << '\n';
  std::cout << doc.dump(2) << '\n';

  RunManifest manifest;
  manifest.command = "estimate";
  manifest.parameters = p;
  manifest.seed = 0;
  manifest.inputs = {p.in};
  manifest.outputs = {p.out};
  if (!p.dump_system.empty()) {
    manifest.outputs.push_back(p.dump_system + "_H.mtx");
    manifest.outputs.push_back(p.dump_system + "_y.mtx");
  }
  finish(std::move(manifest), timer, p.out);
}

// ---------------------------------------------------------------------------
// bench

struct BenchParams {
  std::uint64_t seed = 0;
  int reps = 100;
  std::string methods = "paper";
  int n = 200;
  std::vector<double> center = {1000.0, 1000.0, 5000.0};
  std::vector<double> layers = {50.0, 250.0};
  std::vector<double> layer_weights;
  std::vector<double> lateral = {0.0, 2048.0};
  double epsilon = 0.25;
  double sigma1 = 0.015;
  double sigma2 = 0.030;
  double sigma3 = 30.0;
  double sigma4 = 60.0;
  bool redraw_scene = false;
  double huber_t = 0.0;  // 0 = resolve per solve
  std::string gamma = "auto";
  double tol = 1e-8;
  int max_iter = 20000;
  std::string out = "report";
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(BenchParams, seed, reps, methods, n, center,
                                   layers, layer_weights, lateral, epsilon,
                                   sigma1, sigma2, sigma3, sigma4, redraw_scene,
                                   huber_t, gamma, tol, max_iter, out)

std::vector<MethodSpec> parse_methods(const std::string& text, double huber_t) {
  std::string expanded = text;
  if (text == "paper" || text == "all") {
    expanded =
        "pd:1:l1,pd:1:block-l2,pd:1:block-huber,"
        "pd:2:l1,pd:2:block-l2,pd:2:block-huber,tls:1,tls:2";
  }
  std::vector<MethodSpec> methods;
  std::size_t start = 0;
  while (start <= expanded.size()) {
    const std::size_t comma = expanded.find(',', start);
    const std::string token = expanded.substr(
        start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!token.empty()) methods.push_back(MethodSpec::parse(token));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (methods.empty()) throw UsageError("no methods given");
  if (huber_t > 0.0) {
    for (MethodSpec& m : methods) {
      if (m.loss.needs_threshold() && m.loss.huber_threshold <= 0.0) {
        m.loss.huber_threshold = huber_t;
      }
    }
  }
  return methods;
}

json report_to_json(const MonteCarloReport& r) {
  json doc;
  doc["method"] = r.method;
  doc["replications"] = r.replications;
  doc["failures"] = r.failures;
  doc["valid"] = r.valid;
  doc["bias_pct"] = {r.bias_pct.x(), r.bias_pct.y(), r.bias_pct.z()};
  doc["sigma_pct"] = {r.sigma_pct.x(), r.sigma_pct.y(), r.sigma_pct.z()};
  doc["aggregate_error_rmse"] = r.aggregate_error;
  doc["mean_squared_error"] = r.mean_squared_error;
  return doc;
}

/// Text table shaped like the reference results: one column per method,
/// Bias/Sigma rows per axis, aggregate error at the bottom.
std::string render_table(const std::vector<MonteCarloReport>& reports) {
  constexpr int kLabel = 12;
  constexpr int kCol = 19;
  std::string text;
  const auto pad = [](std::string s, int width) {
    if (static_cast<int>(s.size()) < width) {
      s.insert(0, width - s.size(), ' ');
    }
    return s;
  };
  const auto row_label = [&](const std::string& s) {
    std::string out = s;
    if (static_cast<int>(out.size()) < kLabel) {
      out.append(kLabel - out.size(), ' ');
    }
    return out;
  };

  text += row_label("method");
  for (const auto& r : reports) text += pad(r.method, kCol);
  text += '\n';
  for (int axis = 0; axis < 3; ++axis) {
    text += row_label("bias% j=" + std::to_string(axis + 1));
    for (const auto& r : reports) {
      text += pad(format_fixed(r.bias_pct(axis), 2), kCol);
    }
    text += '\n';
  }
  for (int axis = 0; axis < 3; ++axis) {
    text += row_label("sigma% j=" + std::to_string(axis + 1));
    for (const auto& r : reports) {
      text += pad(format_fixed(r.sigma_pct(axis), 2), kCol);
    }
    text += '\n';
  }
  text += row_label("rmse");
  for (const auto& r : reports) {
    text += pad(format_fixed(r.aggregate_error, 1), kCol);
  }
  text += '\n';
  text += row_label("failures");
  for (const auto& r : reports) {
    text += pad(std::to_string(r.failures), kCol);
  }
  text += '\n';
  return text;
}

void run_bench(const BenchParams& p) {
  const Timer timer;
  ScenarioConfig config;
  config.n_beads = p.n;
  config.true_center = to_point(p.center, "--center");
  config.layer_depths = p.layers;
  config.layer_weights = p.layer_weights;
  if (p.lateral.size() != 2) {
    throw UsageError("--lateral needs exactly 2 values lo,hi");
  }
  config.lateral_min = p.lateral[0];
  config.lateral_max = p.lateral[1];
  config.outlier_probability = p.epsilon;
  config.sigma1 = p.sigma1;
  config.sigma2 = p.sigma2;
  config.sigma3 = p.sigma3;
  config.sigma4 = p.sigma4;
  config.seed = p.seed;
  config.redraw_scene = p.redraw_scene;

  const std::vector<MethodSpec> methods = parse_methods(p.methods, p.huber_t);
  BenchSolverOptions options;
  options.gamma = parse_gamma(p.gamma);
  options.relative_tolerance = p.tol;
  options.max_iterations = p.max_iter;

  const std::vector<MonteCarloReport> reports =
      run_monte_carlo(config, methods, p.reps, options);

  json doc;
  doc["config"] = p;
  doc["reports"] = json::array();
  for (const auto& r : reports) doc["reports"].push_back(report_to_json(r));
  std::ofstream json_out(p.out + ".json");
  if (!json_out) throw Error("cannot write '" + p.out + ".json'");
  json_out << doc.dump(2) << '\n';

  const std::string table = render_table(reports);
  std::ofstream table_out(p.out + ".txt");
  table_out << table;
  std::cout << table;

  std::ofstream csv(p.out + ".csv");
  csv << "method,replicate,cx,cy,cz\n";
  for (const auto& r : reports) {
    for (std::size_t k = 0; k < r.estimates.size(); ++k) {
      csv << r.method << ',' << r.replicate_indices[k] << ','
          << format_double(r.estimates[k].x()) << ','
          << format_double(r.estimates[k].y()) << ','
          << format_double(r.estimates[k].z()) << '\n';
    }
  }

  RunManifest manifest;
  manifest.command = "bench";
  manifest.parameters = p;
  manifest.seed = p.seed;
  manifest.outputs = {p.out + ".json", p.out + ".txt", p.out + ".csv"};
  finish(std::move(manifest), timer, p.out);
}

// ---------------------------------------------------------------------------
// synth-stack

struct SynthStackParams {
  std::string scene;  // optional observation CSV; empty = generate
  int beads = 50;
  std::vector<double> center = {128.0, 128.0, 640.0};
  std::vector<double> layers = {20.0, 60.0};
  double margin = 24.0;
  double min_sep = 30.0;
  std::vector<int> dims = {256, 256, 128};
  double sigma_par = 6.0;
  double sigma_perp = 2.0;
  double peak = 3000.0;
  double background = 100.0;
  double noise = 20.0;
  std::vector<double> range = {0.0, 4095.0};
  std::uint64_t seed = 0;
  std::string out = "stack";
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SynthStackParams, scene, beads, center,
                                   layers, margin, min_sep, dims, sigma_par,
                                   sigma_perp, peak, background, noise, range,
                                   seed, out)

void run_synth_stack(const SynthStackParams& p) {
  const Timer timer;
  if (p.dims.size() != 3) throw UsageError("--dims needs nx,ny,nz");
  if (p.range.size() != 2) throw UsageError("--range needs min,max");

  RunManifest manifest;
  manifest.command = "synth-stack";
  manifest.parameters = p;
  manifest.seed = p.seed;

  ObservationSet scene;
  if (!p.scene.empty()) {
    scene = load_observations_csv(p.scene);
    manifest.inputs.push_back(p.scene);
  } else {
    StackSceneConfig layout;
    layout.n_beads = p.beads;
    layout.nx = p.dims[0];
    layout.ny = p.dims[1];
    layout.nz = p.dims[2];
    layout.center = to_point(p.center, "--center");
    layout.layer_depths = p.layers;
    layout.margin = p.margin;
    layout.min_separation = p.min_sep;
    layout.seed = p.seed;
    Rng layout_rng = Rng::child(p.seed, 0xBEAD5ull);
    scene = generate_bead_scene(layout, layout_rng);
    save_observations_csv(scene, p.out + ".scene.csv");
    manifest.outputs.push_back(p.out + ".scene.csv");
  }

  SynthesisParams synth;
  synth.sigma_parallel = p.sigma_par;
  synth.sigma_perp = p.sigma_perp;
  synth.peak_intensity = p.peak;
  synth.background_level = p.background;
  synth.noise_sigma = p.noise;

  Rng rng = Rng::child(p.seed, 0x57ACull);
  const VolumeStack stack = synthesize_stack(
      scene, synth, p.dims[0], p.dims[1], p.dims[2], rng, p.range[0],
      p.range[1]);
  save_stack(stack, p.out);
  std::cout << "rendered " << scene.count() << " beads into " << p.out
            << ".raw (" << p.dims[0] << "x" << p.dims[1] << "x" << p.dims[2]
            << ")\n";

  manifest.outputs.push_back(p.out + ".raw");
  manifest.outputs.push_back(p.out + ".json");
  finish(std::move(manifest), timer, p.out);
}

// ---------------------------------------------------------------------------
// extract

struct ExtractCliParams {
  std::string stack;
  std::vector<double> blur = {1.0, 1.0, 1.0};
  std::vector<int> tophat = {8, 8, 16};
  std::string threshold = "otsu";
  int min_volume = 30;
  std::vector<int> max_extent = {48, 48, 64};
  double ratio_filter = 2.2;
  std::string out = "observations.csv";
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ExtractCliParams, stack, blur, tophat,
                                   threshold, min_volume, max_extent,
                                   ratio_filter, out)

void run_extract(const ExtractCliParams& p) {
  const Timer timer;
  if (p.blur.size() != 3) throw UsageError("--blur needs sx,sy,sz");
  if (p.tophat.size() != 3) throw UsageError("--tophat needs wx,wy,wz");
  if (p.max_extent.size() != 3) throw UsageError("--max-extent needs lx,ly,lz");

  ExtractionParams params;
  params.blur_sigma = {p.blur[0], p.blur[1], p.blur[2]};
  params.tophat_halfwin = {p.tophat[0], p.tophat[1], p.tophat[2]};
  if (p.threshold != "otsu") {
    try {
      params.threshold = parse_double(p.threshold, "--threshold");
    } catch (const ParseError&) {
      throw UsageError("--threshold expects 'otsu' or a number, got '" +
                       p.threshold + "'");
    }
  }
  params.min_volume = p.min_volume;
  params.max_extent = {p.max_extent[0], p.max_extent[1], p.max_extent[2]};
  params.eigenvalue_ratio_filter = p.ratio_filter;

  const VolumeStack stack = load_stack(p.stack);
  const ExtractionResult result = extract_observations(stack, params);
  save_observations_csv(result.observations, p.out);

  json summary;
  summary["observations"] = result.observations.count();
  summary["components_found"] = result.components_found;
  summary["skipped_degenerate"] = result.skipped_degenerate;
  summary["rejected_by_ratio"] = result.rejected_by_ratio;
  summary["threshold_used"] = result.threshold_used;
  std::ofstream summary_out(p.out + ".summary.json");
  summary_out << summary.dump(2) << '\n';
  std::cout << summary.dump(2) << '\n';

  RunManifest manifest;
  manifest.command = "extract";
  manifest.parameters = p;
  manifest.seed = 0;
  manifest.inputs = {p.stack + ".raw", p.stack + ".json"};
  manifest.outputs = {p.out, p.out + ".summary.json"};
  finish(std::move(manifest), timer, p.out);
}

// ---------------------------------------------------------------------------
// analyze

struct AnalyzeParams {
  std::string in;
  std::vector<double> center;
  std::string solution;
  double ratio_filter = 0.0;
  std::string out = "orientation.csv";
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(AnalyzeParams, in, center, solution,
                                   ratio_filter, out)

void run_analyze(const AnalyzeParams& p) {
  const Timer timer;
  if (p.center.empty() == p.solution.empty()) {
    throw UsageError("analyze needs exactly one of --center or --solution");
  }
  Point3 center;
  if (!p.center.empty()) {
    center = to_point(p.center, "--center");
  } else {
    std::ifstream in(p.solution);
    if (!in) throw ParseError("cannot open solution '" + p.solution + "'");
    json doc;
    try {
      in >> doc;
      const auto c = doc.at("center").get<std::vector<double>>();
      center = to_point(c, "solution center");
    } catch (const json::exception& e) {
      throw ParseError("invalid solution '" + p.solution + "': " + e.what());
    }
  }

  const ObservationSet all = load_observations_csv(p.in);
  ObservationSet obs;
  for (const LineObservation& item : all.items) {
    if (item.weight > p.ratio_filter) obs.items.push_back(item);
  }

  const OrientationTable table = orientation_vs_distance(obs, center);
  std::ofstream csv(p.out);
  if (!csv) throw Error("cannot write '" + p.out + "'");
  csv << "dist,angle\n";
  double max_angle = 0.0;
  for (const OrientationRow& row : table.rows) {
    csv << format_double(row.distance) << ',' << format_double(row.angle)
        << '\n';
    max_angle = std::max(max_angle, row.angle);
  }

  json fit;
  fit["n"] = static_cast<int>(table.rows.size());
  fit["slope"] = std::isfinite(table.slope) ? json(table.slope) : json();
  fit["intercept"] =
      std::isfinite(table.intercept) ? json(table.intercept) : json();
  fit["r_squared"] =
      std::isfinite(table.r_squared) ? json(table.r_squared) : json();
  fit["max_angle"] = table.rows.empty() ? json() : json(max_angle);
  std::ofstream fit_out(p.out + ".fit.json");
  fit_out << fit.dump(2) << '\n';
  std::cout << fit.dump(2) << '\n';

  RunManifest manifest;
  manifest.command = "analyze";
  manifest.parameters = p;
  manifest.seed = 0;
  manifest.inputs = {p.in};
  if (!p.solution.empty()) manifest.inputs.push_back(p.solution);
  manifest.outputs = {p.out, p.out + ".fit.json"};
  finish(std::move(manifest), timer, p.out);
}

// ---------------------------------------------------------------------------
// replay

void dispatch(const std::string& command, const json& parameters) {
  if (command == "simulate") {
    run_simulate(parameters.get<SimulateParams>());
  } else if (command == "corrupt") {
    run_corrupt(parameters.get<CorruptParams>());
  } else if (command == "estimate") {
    run_estimate(parameters.get<EstimateParams>());
  } else if (command == "bench") {
    run_bench(parameters.get<BenchParams>());
  } else if (command == "synth-stack") {
    run_synth_stack(parameters.get<SynthStackParams>());
  } else if (command == "extract") {
    run_extract(parameters.get<ExtractCliParams>());
  } else if (command == "analyze") {
    run_analyze(parameters.get<AnalyzeParams>());
  } else {
    throw UsageError("manifest names unknown command '" + command + "'");
  }
}

void run_replay(const std::string& manifest_path) {
  const RunManifest manifest = read_manifest(manifest_path);
  dispatch(manifest.command, manifest.parameters);
}

}  // namespace opticenter::cli

int main(int argc, char** argv) {
  using namespace opticenter;
  using namespace opticenter::cli;

  CLI::App app{"robust optical-center estimation from 3D line bundles"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));
  int threads = 0;
  app.add_option("--threads", threads,
                 "cap OpenMP parallelism; 0 = all cores. Results do not "
                 "depend on this value");

  SimulateParams sim;
  CLI::App* sim_cmd =
      app.add_subcommand("simulate", "generate a noiseless bead scene CSV");
  sim_cmd->add_option("--n", sim.n, "bead count")->capture_default_str();
  sim_cmd->add_option("--center", sim.center, "true optical center x,y,z")
      ->required()
      ->delimiter(',');
  sim_cmd->add_option("--layers", sim.layers, "layer depths z1,z2,...")
      ->delimiter(',')
      ->capture_default_str();
  sim_cmd->add_option("--layer-weights", sim.layer_weights,
                      "relative layer occupancies (default: even split)")
      ->delimiter(',');
  sim_cmd->add_option("--lateral", sim.lateral, "lateral range lo,hi")
      ->delimiter(',')
      ->capture_default_str();
  sim_cmd->add_option("--seed", sim.seed, "rng seed")
      ->envname("OPTICENTER_SEED");
  sim_cmd->add_option("--out", sim.out, "output CSV path")
      ->capture_default_str();

  CorruptParams cor;
  CLI::App* cor_cmd = app.add_subcommand(
      "corrupt", "apply Bernoulli-Gaussian noise to a scene CSV");
  cor_cmd->add_option("--in", cor.in, "input observation CSV")->required();
  cor_cmd->add_option("--epsilon", cor.epsilon, "outlier probability")
      ->capture_default_str();
  cor_cmd->add_option("--sigma1", cor.sigma1, "inlier direction noise")
      ->capture_default_str();
  cor_cmd->add_option("--sigma2", cor.sigma2, "outlier direction noise")
      ->capture_default_str();
  cor_cmd->add_option("--sigma3", cor.sigma3, "inlier anchor noise (voxels)")
      ->capture_default_str();
  cor_cmd->add_option("--sigma4", cor.sigma4, "outlier anchor noise (voxels)")
      ->capture_default_str();
  cor_cmd->add_option("--seed", cor.seed, "rng seed")
      ->envname("OPTICENTER_SEED");
  cor_cmd->add_option("--out", cor.out, "output CSV path")
      ->capture_default_str();

  EstimateParams est;
  CLI::App* est_cmd = app.add_subcommand(
      "estimate", "estimate the optical center from an observation CSV");
  est_cmd->add_option("--in", est.in, "input observation CSV")->required();
  est_cmd->add_option("--solver", est.solver, "wls | pd | tls")->required();
  est_cmd->add_option("--model", est.model, "observation model 1 | 2")
      ->capture_default_str();
  est_cmd
      ->add_option("--loss", est.loss,
                   "pd loss: l1 | l2 | block-l2 | huber[:t=v] | "
                   "huber-norm[:t=v] | block-huber[:t=v] | sq")
      ->capture_default_str();
  est_cmd->add_option("--gamma", est.gamma, "pd step size or 'auto'")
      ->capture_default_str();
  est_cmd->add_option("--tol", est.tol, "pd relative stopping tolerance")
      ->capture_default_str();
  est_cmd->add_option("--max-iter", est.max_iter, "pd iteration cap")
      ->capture_default_str();
  est_cmd
      ->add_option("--box", est.box,
                   "center constraint: 'none' or lox,hix,loy,hiy,loz,hiz")
      ->capture_default_str();
  est_cmd->add_option("--dump-system", est.dump_system,
                      "write H and y as MatrixMarket files with this prefix");
  est_cmd->add_option("--out", est.out, "output solution JSON")
      ->capture_default_str();

  BenchParams ben;
  CLI::App* ben_cmd = app.add_subcommand(
      "bench", "Monte Carlo benchmark of the estimator menu");
  ben_cmd->add_option("--seed", ben.seed, "rng seed")
      ->envname("OPTICENTER_SEED");
  ben_cmd->add_option("--reps", ben.reps, "noise realizations per method")
      ->capture_default_str();
  ben_cmd
      ->add_option("--methods", ben.methods,
                   "'paper' or comma list of wls:1 | tls:<m> | pd:<m>:<loss>")
      ->capture_default_str();
  ben_cmd->add_option("--n", ben.n, "bead count")->capture_default_str();
  ben_cmd->add_option("--center", ben.center, "true center x,y,z")
      ->delimiter(',')
      ->capture_default_str();
  ben_cmd->add_option("--layers", ben.layers, "layer depths")
      ->delimiter(',')
      ->capture_default_str();
  ben_cmd->add_option("--layer-weights", ben.layer_weights,
                      "relative layer occupancies")
      ->delimiter(',');
  ben_cmd->add_option("--lateral", ben.lateral, "lateral range lo,hi")
      ->delimiter(',')
      ->capture_default_str();
  ben_cmd->add_option("--epsilon", ben.epsilon, "outlier probability")
      ->capture_default_str();
  ben_cmd->add_option("--sigma1", ben.sigma1, "inlier direction noise")
      ->capture_default_str();
  ben_cmd->add_option("--sigma2", ben.sigma2, "outlier direction noise")
      ->capture_default_str();
  ben_cmd->add_option("--sigma3", ben.sigma3, "inlier anchor noise")
      ->capture_default_str();
  ben_cmd->add_option("--sigma4", ben.sigma4, "outlier anchor noise")
      ->capture_default_str();
  ben_cmd->add_flag("--redraw-scene", ben.redraw_scene,
                    "redraw the bead layout per replicate");
  ben_cmd->add_option("--huber-t", ben.huber_t,
                      "Huber threshold for losses without an explicit t "
                      "(0 = scale-aware default)")
      ->capture_default_str();
  ben_cmd->add_option("--gamma", ben.gamma, "pd step size or 'auto'")
      ->capture_default_str();
  ben_cmd->add_option("--tol", ben.tol, "pd stopping tolerance")
      ->capture_default_str();
  ben_cmd->add_option("--max-iter", ben.max_iter, "pd iteration cap")
      ->capture_default_str();
  ben_cmd->add_option("--out", ben.out, "output base path")
      ->capture_default_str();

  SynthStackParams swp;
  CLI::App* swp_cmd = app.add_subcommand(
      "synth-stack", "render a synthetic bead stack (raw + JSON sidecar)");
  swp_cmd->add_option("--scene", swp.scene,
                      "observation CSV to render; omit to generate a layout");
  swp_cmd->add_option("--beads", swp.beads, "bead count when generating")
      ->capture_default_str();
  swp_cmd->add_option("--center", swp.center, "planted optical center x,y,z")
      ->delimiter(',')
      ->capture_default_str();
  swp_cmd->add_option("--layers", swp.layers, "bead layer depths")
      ->delimiter(',')
      ->capture_default_str();
  swp_cmd->add_option("--margin", swp.margin, "lateral margin (voxels)")
      ->capture_default_str();
  swp_cmd->add_option("--min-sep", swp.min_sep, "minimum bead separation")
      ->capture_default_str();
  swp_cmd->add_option("--dims", swp.dims, "stack dimensions nx,ny,nz")
      ->delimiter(',')
      ->capture_default_str();
  swp_cmd->add_option("--sigma-par", swp.sigma_par, "bead sigma along axis")
      ->capture_default_str();
  swp_cmd->add_option("--sigma-perp", swp.sigma_perp, "bead sigma across axis")
      ->capture_default_str();
  swp_cmd->add_option("--peak", swp.peak, "bead peak intensity")
      ->capture_default_str();
  swp_cmd->add_option("--background", swp.background, "background level")
      ->capture_default_str();
  swp_cmd->add_option("--noise", swp.noise, "additive noise sigma")
      ->capture_default_str();
  swp_cmd->add_option("--range", swp.range, "intensity range min,max")
      ->delimiter(',')
      ->capture_default_str();
  swp_cmd->add_option("--seed", swp.seed, "rng seed")
      ->envname("OPTICENTER_SEED");
  swp_cmd->add_option("--out", swp.out, "output base path")
      ->capture_default_str();

  ExtractCliParams ext;
  CLI::App* ext_cmd = app.add_subcommand(
      "extract", "detect PSFs in a stack and emit line observations");
  ext_cmd->add_option("--stack", ext.stack, "stack base path (raw + sidecar)")
      ->required();
  ext_cmd->add_option("--blur", ext.blur, "gaussian blur sigmas sx,sy,sz")
      ->delimiter(',')
      ->capture_default_str();
  ext_cmd->add_option("--tophat", ext.tophat, "top-hat half-sizes wx,wy,wz")
      ->delimiter(',')
      ->capture_default_str();
  ext_cmd->add_option("--threshold", ext.threshold, "'otsu' or a value")
      ->capture_default_str();
  ext_cmd->add_option("--min-volume", ext.min_volume, "minimum voxel count")
      ->capture_default_str();
  ext_cmd
      ->add_option("--max-extent", ext.max_extent, "component crop lx,ly,lz")
      ->delimiter(',')
      ->capture_default_str();
  ext_cmd->add_option("--ratio-filter", ext.ratio_filter,
                      "keep components with lambda1/lambda2 above this")
      ->capture_default_str();
  ext_cmd->add_option("--out", ext.out, "output observation CSV")
      ->capture_default_str();

  AnalyzeParams ana;
  CLI::App* ana_cmd = app.add_subcommand(
      "analyze", "orientation-versus-distance table and linear fit");
  ana_cmd->add_option("--in", ana.in, "input observation CSV")->required();
  ana_cmd->add_option("--center", ana.center, "center x,y,z")->delimiter(',');
  ana_cmd->add_option("--solution", ana.solution,
                      "solution JSON to take the center from");
  ana_cmd->add_option("--ratio-filter", ana.ratio_filter,
                      "keep observations with weight above this")
      ->capture_default_str();
  ana_cmd->add_option("--out", ana.out, "output CSV path")
      ->capture_default_str();

  std::string replay_path;
  CLI::App* rep_cmd =
      app.add_subcommand("replay", "re-execute a recorded manifest");
  rep_cmd->add_option("manifest", replay_path, "manifest JSON path")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::CallForVersion& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#endif

  try {
    if (*sim_cmd) {
      run_simulate(sim);
    } else if (*cor_cmd) {
      run_corrupt(cor);
    } else if (*est_cmd) {
      run_estimate(est);
    } else if (*ben_cmd) {
      run_bench(ben);
    } else if (*swp_cmd) {
      run_synth_stack(swp);
    } else if (*ext_cmd) {
      run_extract(ext);
    } else if (*ana_cmd) {
      run_analyze(ana);
    } else if (*rep_cmd) {
      run_replay(replay_path);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    nlohmann::json err;
    err["error"] = {{"type", error_name(e)}, {"message", e.what()}};
    std::cout << err.dump(2) << '\n';
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
