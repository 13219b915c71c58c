// Subprocess tests of the command-line front end: exit codes, file
// contracts, seeded determinism, manifest replay.

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#ifndef OPTICENTER_CLI_PATH
#error "OPTICENTER_CLI_PATH must be defined by the build"
#endif

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("opticenter_cli_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

int run_cli(const TempDir& dir, const std::string& args) {
  const std::string command = "cd '" + dir.path.string() + "' && '" +
                              OPTICENTER_CLI_PATH + "' " + args +
                              " > cli_stdout.txt 2> cli_stderr.txt";
  const int status = std::system(command.c_str());
  if (status == -1) return -1;
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

json load_json(const fs::path& p) { return json::parse(slurp(p)); }

/// Manifest with the wall-clock field removed; everything else must be
/// byte-stable across reruns.
json manifest_without_duration(const fs::path& p) {
  json doc = load_json(p);
  doc.erase("duration_seconds");
  return doc;
}

}  // namespace

TEST_CASE("simulate: determinism, manifest, usage errors") {
  TempDir dir;
  const std::string flags =
      "simulate --n 24 --center 100,100,600 --layers 20,60 --lateral 0,200 "
      "--seed 9 --out scene.csv";
  REQUIRE(run_cli(dir, flags) == 0);
  const std::string first = slurp(dir.path / "scene.csv");
  CHECK(first.rfind("ax,ay,az,nx,ny,nz,w\n", 0) == 0);
  REQUIRE(fs::exists(dir.path / "scene.csv.manifest.json"));
  const json manifest1 =
      manifest_without_duration(dir.path / "scene.csv.manifest.json");

  REQUIRE(run_cli(dir, flags) == 0);
  CHECK(slurp(dir.path / "scene.csv") == first);
  CHECK(manifest_without_duration(dir.path / "scene.csv.manifest.json") ==
        manifest1);

  // Missing --center is a usage error (exit 1).
  CHECK(run_cli(dir, "simulate --n 5 --out x.csv") == 1);
  // Unknown subcommand too.
  CHECK(run_cli(dir, "conjure") == 1);
}

TEST_CASE("estimate: wls on a noiseless bundle returns the center") {
  TempDir dir;
  REQUIRE(run_cli(dir,
                  "simulate --n 30 --center 100,110,580 --layers 15,45 "
                  "--lateral 20,180 --seed 3 --out scene.csv") == 0);
  REQUIRE(run_cli(dir,
                  "estimate --in scene.csv --solver wls --model 1 "
                  "--out sol.json") == 0);
  const json sol = load_json(dir.path / "sol.json");
  CHECK(std::abs(sol["center"][0].get<double>() - 100.0) <= 1e-6);
  CHECK(std::abs(sol["center"][1].get<double>() - 110.0) <= 1e-6);
  CHECK(std::abs(sol["center"][2].get<double>() - 580.0) <= 1e-6);
  CHECK(sol["diagnostics"]["termination"] == "closed_form");

  // wls is Model 1 only.
  CHECK(run_cli(dir, "estimate --in scene.csv --solver wls --model 2 "
                     "--out bad.json") == 1);
  // Invalid loss string lists the grammar on stderr, exit 1.
  CHECK(run_cli(dir, "estimate --in scene.csv --solver pd --loss l3 "
                     "--out bad.json") == 1);
}

TEST_CASE("estimate: malformed CSV row exits 2 and names the line") {
  TempDir dir;
  {
    std::ofstream out(dir.path / "broken.csv");
    out << "ax,ay,az,nx,ny,nz,w\n";
    out << "1,2,3,0,0,1,1\n";
    out << "4,5,6,0,0,1,not_a_number\n";
  }
  CHECK(run_cli(dir, "estimate --in broken.csv --solver wls --model 1 "
                     "--out sol.json") == 2);
  const json err = load_json(dir.path / "cli_stdout.txt");
  CHECK(err["error"]["type"] == "ParseError");
  const std::string message = err["error"]["message"].get<std::string>();
  CHECK(message.find(":3") != std::string::npos);
}

TEST_CASE("estimate: solver failure exits 2 with a machine-readable field") {
  TempDir dir;
  {
    std::ofstream out(dir.path / "parallel.csv");
    out << "ax,ay,az,nx,ny,nz,w\n";
    for (int i = 0; i < 5; ++i) {
      out << i << "," << 2 * i << ",0,0,0,1,1\n";
    }
  }
  CHECK(run_cli(dir, "estimate --in parallel.csv --solver wls --model 1 "
                     "--out sol.json") == 2);
  const json err = load_json(dir.path / "cli_stdout.txt");
  CHECK(err["error"]["type"] == "SingularNormalMatrix");
}

TEST_CASE("estimate: dump-system writes MatrixMarket files") {
  TempDir dir;
  REQUIRE(run_cli(dir,
                  "simulate --n 8 --center 90,90,420 --layers 25 "
                  "--lateral 30,150 --seed 5 --out scene.csv") == 0);
  REQUIRE(run_cli(dir,
                  "estimate --in scene.csv --solver tls --model 2 "
                  "--dump-system sys --out sol.json") == 0);
  const std::string header = slurp(dir.path / "sys_H.mtx");
  CHECK(header.rfind("%%MatrixMarket matrix array real general\n", 0) == 0);
  CHECK(fs::exists(dir.path / "sys_y.mtx"));
}

TEST_CASE("corrupt then estimate round trip") {
  TempDir dir;
  REQUIRE(run_cli(dir,
                  "simulate --n 60 --center 1000,1000,5000 --layers 50,250 "
                  "--seed 11 --out scene.csv") == 0);
  REQUIRE(run_cli(dir,
                  "corrupt --in scene.csv --seed 13 --out noisy.csv") == 0);
  CHECK(slurp(dir.path / "noisy.csv") != slurp(dir.path / "scene.csv"));
  REQUIRE(run_cli(dir,
                  "estimate --in noisy.csv --solver tls --model 2 "
                  "--out sol.json") == 0);
  const json sol = load_json(dir.path / "sol.json");
  // Noisy recovery lands within a generous band of the truth.
  CHECK(std::abs(sol["center"][2].get<double>() - 5000.0) <= 400.0);
  REQUIRE(sol["aux_distances"].is_array());
  CHECK(sol["aux_distances"].size() == 60);
}

TEST_CASE("bench: deterministic outputs and table shape") {
  TempDir dir;
  const std::string flags =
      "bench --seed 7 --reps 6 --methods tls:2,pd:1:block-l2 --n 40 "
      "--out report";
  REQUIRE(run_cli(dir, flags) == 0);
  const std::string json_text = slurp(dir.path / "report.json");
  const std::string table = slurp(dir.path / "report.txt");
  const std::string csv = slurp(dir.path / "report.csv");
  CHECK(table.find("bias% j=1") != std::string::npos);
  CHECK(table.find("sigma% j=3") != std::string::npos);
  CHECK(table.find("rmse") != std::string::npos);
  CHECK(csv.rfind("method,replicate,cx,cy,cz\n", 0) == 0);

  const json report = load_json(dir.path / "report.json");
  REQUIRE(report["reports"].size() == 2);
  CHECK(report["reports"][0]["replications"] == 6);

  REQUIRE(run_cli(dir, flags) == 0);
  CHECK(slurp(dir.path / "report.json") == json_text);
  CHECK(slurp(dir.path / "report.txt") == table);
  CHECK(slurp(dir.path / "report.csv") == csv);

  CHECK(run_cli(dir, "bench --reps 6 --methods nonsense --out r2") == 1);
  CHECK(run_cli(dir, "bench --reps 1 --methods tls:2 --out r3") == 2);
}

TEST_CASE("bench outputs are independent of --threads") {
  // Same output name in two directories: the report JSON embeds the
  // resolved parameters, so the file names themselves must match.
  TempDir dir;
  fs::create_directories(dir.path / "one");
  fs::create_directories(dir.path / "four");
  REQUIRE(run_cli(dir,
                  "--threads 1 bench --seed 21 --reps 5 --methods tls:2 "
                  "--n 30 --out one/report") == 0);
  REQUIRE(run_cli(dir,
                  "--threads 4 bench --seed 21 --reps 5 --methods tls:2 "
                  "--n 30 --out four/report") == 0);
  const std::string a = slurp(dir.path / "one/report.json");
  const std::string b = slurp(dir.path / "four/report.json");
  CHECK(a.size() > 0);
  // The embedded out path is the single allowed difference.
  std::string a_norm = a, b_norm = b;
  const auto scrub = [](std::string& s, const std::string& from) {
    std::size_t pos;
    while ((pos = s.find(from)) != std::string::npos) {
      s.replace(pos, from.size(), "OUT");
    }
  };
  scrub(a_norm, "one/report");
  scrub(b_norm, "four/report");
  CHECK(a_norm == b_norm);
  CHECK(slurp(dir.path / "one/report.csv") ==
        slurp(dir.path / "four/report.csv"));
  CHECK(slurp(dir.path / "one/report.txt") ==
        slurp(dir.path / "four/report.txt"));
}

TEST_CASE("synth-stack + extract + analyze round trip") {
  TempDir dir;
  REQUIRE(run_cli(dir,
                  "synth-stack --beads 8 --center 64,64,320 --layers 20,42 "
                  "--dims 128,128,64 --margin 22 --min-sep 24 --seed 3 "
                  "--out stack") == 0);
  REQUIRE(fs::exists(dir.path / "stack.raw"));
  REQUIRE(fs::exists(dir.path / "stack.json"));
  REQUIRE(fs::exists(dir.path / "stack.scene.csv"));

  REQUIRE(run_cli(dir, "extract --stack stack --out obs.csv") == 0);
  const json summary = load_json(dir.path / "obs.csv.summary.json");
  CHECK(summary["observations"] == 8);

  REQUIRE(run_cli(dir,
                  "estimate --in obs.csv --solver tls --model 2 "
                  "--out sol.json") == 0);
  REQUIRE(run_cli(dir,
                  "analyze --in obs.csv --solution sol.json "
                  "--ratio-filter 2.2 --out orient.csv") == 0);
  const std::string table = slurp(dir.path / "orient.csv");
  CHECK(table.rfind("dist,angle\n", 0) == 0);
  const json fit = load_json(dir.path / "orient.csv.fit.json");
  CHECK(fit["n"] == 8);

  // Analyze with an explicit center and an empty observation file.
  {
    std::ofstream out(dir.path / "empty.csv");
    out << "ax,ay,az,nx,ny,nz,w\n";
  }
  CHECK(run_cli(dir, "analyze --in empty.csv --center 1,2,3 "
                     "--out empty_table.csv") == 0);
  CHECK(slurp(dir.path / "empty_table.csv") == "dist,angle\n");

  // Exactly one of --center / --solution.
  CHECK(run_cli(dir, "analyze --in obs.csv --out bad.csv") == 1);
  CHECK(run_cli(dir, "analyze --in obs.csv --center 1,2,3 --solution "
                     "sol.json --out bad.csv") == 1);
}

TEST_CASE("synth-stack determinism across thread counts") {
  TempDir dir;
  const std::string base =
      "synth-stack --beads 6 --center 48,48,300 --layers 20,40 "
      "--dims 96,96,64 --margin 20 --min-sep 20 --seed 17 --out ";
  REQUIRE(run_cli(dir, "--threads 1 " + base + "s1") == 0);
  REQUIRE(run_cli(dir, "--threads 4 " + base + "s4") == 0);
  CHECK(slurp(dir.path / "s1.raw") == slurp(dir.path / "s4.raw"));
  CHECK(slurp(dir.path / "s1.scene.csv") == slurp(dir.path / "s4.scene.csv"));
}

TEST_CASE("replay re-executes a manifest and reproduces its outputs") {
  TempDir dir;
  REQUIRE(run_cli(dir,
                  "simulate --n 12 --center 80,80,400 --layers 20,40 "
                  "--lateral 10,150 --seed 23 --out scene.csv") == 0);
  const std::string original = slurp(dir.path / "scene.csv");
  REQUIRE(run_cli(dir, "corrupt --in scene.csv --seed 29 --out noisy.csv") ==
          0);
  const std::string noisy = slurp(dir.path / "noisy.csv");

  fs::remove(dir.path / "scene.csv");
  fs::remove(dir.path / "noisy.csv");
  REQUIRE(run_cli(dir, "replay scene.csv.manifest.json") == 0);
  CHECK(slurp(dir.path / "scene.csv") == original);
  REQUIRE(run_cli(dir, "replay noisy.csv.manifest.json") == 0);
  CHECK(slurp(dir.path / "noisy.csv") == noisy);

  CHECK(run_cli(dir, "replay missing.manifest.json") == 2);
}

TEST_CASE("estimate honors the box constraint flag") {
  TempDir dir;
  REQUIRE(run_cli(dir,
                  "simulate --n 20 --center 100,100,500 --layers 20,50 "
                  "--lateral 20,180 --seed 31 --out scene.csv") == 0);
  REQUIRE(run_cli(dir,
                  "estimate --in scene.csv --solver pd --model 1 "
                  "--loss block-l2 --box 0,90,0,2048,0,inf "
                  "--out sol.json") == 0);
  const json sol = load_json(dir.path / "sol.json");
  CHECK(sol["center"][0].get<double>() <= 90.0 + 1e-9);
  CHECK(run_cli(dir, "estimate --in scene.csv --solver pd --box 1,2,3 "
                     "--out bad.json") == 1);
}

TEST_CASE("environment variable supplies the default seed") {
  TempDir dir;
  const std::string with_env =
      "OPTICENTER_SEED=41 '" + std::string(OPTICENTER_CLI_PATH) +
      "' simulate --n 10 --center 90,90,450 --layers 25 --lateral 20,160 "
      "--out env_scene.csv > /dev/null 2>&1";
  const std::string command = "cd '" + dir.path.string() + "' && " + with_env;
  REQUIRE(WEXITSTATUS(std::system(command.c_str())) == 0);
  REQUIRE(run_cli(dir,
                  "simulate --n 10 --center 90,90,450 --layers 25 "
                  "--lateral 20,160 --seed 41 --out flag_scene.csv") == 0);
  CHECK(slurp(dir.path / "env_scene.csv") == slurp(dir.path / "flag_scene.csv"));
}
