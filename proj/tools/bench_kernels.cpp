// Timing harness for the parallel volume kernels against their serial
// reference implementations. Also verifies that both produce identical
// bytes, which is the contract the test suite relies on.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <opticenter/extract.hpp>
#include <opticenter/rng.hpp>
#include <opticenter/synthetic.hpp>
#include <opticenter/volume.hpp>

namespace {

using opticenter::ObservationSet;
using opticenter::Rng;
using opticenter::VolumeStack;

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

bool identical(const VolumeStack& a, const VolumeStack& b) {
  return a.voxels.size() == b.voxels.size() &&
         std::memcmp(a.voxels.data(), b.voxels.data(),
                     a.voxels.size() * sizeof(float)) == 0;
}

void report(const char* name, double serial_ms, double parallel_ms,
            bool match) {
  std::printf("%-18s serial %9.1f ms   parallel %9.1f ms   speedup %5.2fx   %s\n",
              name, serial_ms, parallel_ms, serial_ms / parallel_ms,
              match ? "bitwise-equal" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  int size = 160;
  if (argc > 1) size = std::atoi(argv[1]);
  if (size < 32) size = 32;

#ifdef _OPENMP
  std::printf("threads: %d, stack: %dx%dx%d\n", omp_get_max_threads(), size,
              size, size / 2);
#else
  std::printf("threads: 1 (OpenMP disabled), stack: %dx%dx%d\n", size, size,
              size / 2);
#endif

  opticenter::StackSceneConfig layout;
  layout.n_beads = 40;
  layout.nx = size;
  layout.ny = size;
  layout.nz = size / 2;
  layout.center = opticenter::Point3(size / 2.0, size / 2.0, size * 2.5);
  layout.layer_depths = {size / 8.0, size / 4.0};
  layout.margin = 20.0;
  layout.min_separation = 12.0;
  Rng layout_rng(42);
  const ObservationSet scene = opticenter::generate_bead_scene(layout, layout_rng);

  opticenter::SynthesisParams synth;

  double t0 = now_ms();
  Rng rng_serial(7);
  const VolumeStack synth_serial = opticenter::reference::synthesize_stack(
      scene, synth, layout.nx, layout.ny, layout.nz, rng_serial);
  double t1 = now_ms();
  Rng rng_parallel(7);
  const VolumeStack synth_parallel = opticenter::synthesize_stack(
      scene, synth, layout.nx, layout.ny, layout.nz, rng_parallel);
  double t2 = now_ms();
  report("synthesize", t1 - t0, t2 - t1, identical(synth_serial, synth_parallel));

  t0 = now_ms();
  const VolumeStack blur_serial =
      opticenter::reference::gaussian_blur(synth_parallel, 1.0, 1.0, 2.0);
  t1 = now_ms();
  const VolumeStack blur_parallel =
      opticenter::gaussian_blur(synth_parallel, 1.0, 1.0, 2.0);
  t2 = now_ms();
  report("gaussian_blur", t1 - t0, t2 - t1, identical(blur_serial, blur_parallel));

  t0 = now_ms();
  const VolumeStack tophat_serial =
      opticenter::reference::tophat(blur_parallel, 6, 6, 10);
  t1 = now_ms();
  const VolumeStack tophat_parallel = opticenter::tophat(blur_parallel, 6, 6, 10);
  t2 = now_ms();
  report("tophat", t1 - t0, t2 - t1, identical(tophat_serial, tophat_parallel));

  // Monte Carlo layer: one thread versus all threads, same seeds.
  opticenter::ScenarioConfig config;
  config.n_beads = 100;
  config.seed = 11;
  const std::vector<opticenter::MethodSpec> methods = {
      opticenter::MethodSpec::parse("tls:2")};
#ifdef _OPENMP
  const int max_threads = omp_get_max_threads();
  omp_set_num_threads(1);
#endif
  t0 = now_ms();
  const auto serial_reports = opticenter::run_monte_carlo(config, methods, 40);
  t1 = now_ms();
#ifdef _OPENMP
  omp_set_num_threads(max_threads);
#endif
  const auto parallel_reports = opticenter::run_monte_carlo(config, methods, 40);
  t2 = now_ms();
  const bool mc_match =
      serial_reports[0].estimates.size() == parallel_reports[0].estimates.size() &&
      std::memcmp(serial_reports[0].estimates.data(),
                  parallel_reports[0].estimates.data(),
                  serial_reports[0].estimates.size() * sizeof(opticenter::Point3)) == 0;
  report("monte_carlo", t1 - t0, t2 - t1, mc_match);

  return 0;
}
