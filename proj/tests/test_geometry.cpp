#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include <opticenter/geometry.hpp>

#include "test_util.hpp"

using namespace opticenter;

namespace {

LineObservation make_line(const Point3& anchor, const Vec3& dir,
                          double weight = 1.0) {
  return LineObservation(anchor, normalize_direction(dir), weight);
}

/// Independent oracle: minimize ||c - (anchor + t d)|| over a fine grid of t.
double brute_force_distance(const Point3& c, const LineObservation& line) {
  double best = std::numeric_limits<double>::infinity();
  const double reach = (c - line.anchor).norm() + 1.0;
  for (int k = -200000; k <= 200000; ++k) {
    const double t = reach * k / 200000.0;
    best = std::min(best,
                    (c - (line.anchor + t * line.direction.vec())).norm());
  }
  return best;
}

}  // namespace

TEST_CASE("point_line_residual on the stated examples") {
  CHECK(point_line_residual(Point3(0, 0, 0),
                            make_line(Point3(0, 0, 0), Vec3(0, 1, 0)))
            .norm() == doctest::Approx(0.0));

  const Vec3 r = point_line_residual(Point3(1, 0, 0),
                                     make_line(Point3(0, 0, 0), Vec3(0, 0, 1)));
  CHECK(r.x() == doctest::Approx(1.0));
  CHECK(r.y() == doctest::Approx(0.0));
  CHECK(r.z() == doctest::Approx(0.0));

  CHECK(point_line_residual(Point3(1, 1, 0),
                            make_line(Point3(0, 0, 0), Vec3(1, 1, 0)))
            .norm() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("point_line_distance examples incl. the 3-4-5 oracle") {
  CHECK(point_line_distance(Point3(1, 0, 0),
                            make_line(Point3(0, 0, 0), Vec3(0, 0, 1))) ==
        doctest::Approx(1.0));

  const auto on_line = make_line(Point3(2, 2, 2), Vec3(1, 0, 0));
  CHECK(point_line_distance(Point3(5, 2, 2), on_line) ==
        doctest::Approx(0.0).epsilon(1e-12));

  const auto line = make_line(Point3(0, 0, 7), Vec3(0, 0, 1));
  const Point3 c(3, 4, 7);
  CHECK(point_line_distance(c, line) == doctest::Approx(5.0));
  CHECK(brute_force_distance(c, line) == doctest::Approx(5.0).epsilon(1e-6));
}

TEST_CASE("normalize_direction") {
  const UnitVec3 z = normalize_direction(Vec3(0, 0, 2));
  CHECK(z.z() == doctest::Approx(1.0));

  const UnitVec3 diag = normalize_direction(Vec3(1, 1, 1));
  const double inv_sqrt3 = 1.0 / std::sqrt(3.0);
  CHECK(diag.x() == doctest::Approx(inv_sqrt3));
  CHECK(diag.y() == doctest::Approx(inv_sqrt3));
  CHECK(diag.z() == doctest::Approx(inv_sqrt3));

  CHECK_THROWS_AS(normalize_direction(Vec3(0, 0, 0)), DegenerateDirection);
  CHECK_THROWS_AS(normalize_direction(Vec3(1e-13, 0, 0)), DegenerateDirection);
}

TEST_CASE("renormalization is idempotent bit for bit") {
  Rng rng(21);
  for (int i = 0; i < 200; ++i) {
    const UnitVec3 d = testutil::random_direction(rng);
    const UnitVec3 again = normalize_direction(d.vec());
    CHECK(again.x() == d.x());
    CHECK(again.y() == d.y());
    CHECK(again.z() == d.z());
  }
}

TEST_CASE("residual properties over random inputs") {
  Rng rng(7);
  for (int i = 0; i < 300; ++i) {
    const Point3 c(rng.normal(100.0), rng.normal(100.0), rng.normal(100.0));
    const Point3 anchor(rng.normal(100.0), rng.normal(100.0),
                        rng.normal(100.0));
    const UnitVec3 dir = testutil::random_direction(rng);
    const LineObservation line(anchor, dir, 1.0);
    const Vec3 r = point_line_residual(c, line);

    // Orthogonality to the direction.
    CHECK(std::abs(r.dot(dir.vec())) <= 1e-9 * std::max(r.norm(), 1.0));

    // Projection idempotence: the residual of (anchor + r) is r again.
    const Vec3 r2 = point_line_residual(anchor + r, line);
    CHECK((r2 - r).norm() <= 1e-9 * std::max(r.norm(), 1.0));

    // Translation equivariance.
    const Vec3 t(rng.normal(50.0), rng.normal(50.0), rng.normal(50.0));
    const LineObservation shifted(anchor + t, dir, 1.0);
    const Vec3 rt = point_line_residual(c + t, shifted);
    CHECK((rt - r).norm() <= 1e-9 * std::max(r.norm(), 1.0));

    // Distance invariant under direction flip.
    const LineObservation flipped(anchor, dir.flipped(), 1.0);
    CHECK(point_line_distance(c, flipped) ==
          doctest::Approx(point_line_distance(c, line)).epsilon(1e-12));
  }
}

TEST_CASE("observation invariants enforced") {
  CHECK_THROWS_AS(
      LineObservation(Point3(0, 0, 0), normalize_direction(Vec3(1, 0, 0)), 0.0),
      Error);
  CHECK_THROWS_AS(LineObservation(Point3(0, 0, 0),
                                  normalize_direction(Vec3(1, 0, 0)), -1.0),
                  Error);
}

TEST_CASE("CSV round trip is exact") {
  Rng rng(13);
  ObservationSet obs = testutil::exact_bundle(rng, Point3(10, 20, 400), 17);
  const std::string path = "geometry_roundtrip.csv";
  save_observations_csv(obs, path);
  const ObservationSet back = load_observations_csv(path);
  REQUIRE(back.count() == obs.count());
  for (int i = 0; i < obs.count(); ++i) {
    CHECK(testutil::bits_equal(back.items[i].anchor, obs.items[i].anchor));
    CHECK(testutil::bits_equal(back.items[i].direction.vec(),
                               obs.items[i].direction.vec()));
    CHECK(back.items[i].weight == obs.items[i].weight);
  }
  std::remove(path.c_str());
}

TEST_CASE("CSV loader names the malformed line") {
  const std::string path = "geometry_bad.csv";
  {
    std::ofstream out(path);
    out << "ax,ay,az,nx,ny,nz,w\n";
    out << "1,2,3,0,0,1,1\n";
    out << "1,2,3,0,0,oops,1\n";
  }
  try {
    load_observations_csv(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":3") != std::string::npos);
  }
  std::remove(path.c_str());

  {
    std::ofstream out(path);
    out << "wrong,header\n";
  }
  CHECK_THROWS_AS(load_observations_csv(path), ParseError);
  std::remove(path.c_str());
}

TEST_CASE("CSV loader renormalizes directions and rejects zero ones") {
  const std::string path = "geometry_renorm.csv";
  {
    std::ofstream out(path);
    out << "ax,ay,az,nx,ny,nz,w\n";
    out << "0,0,0,0,0,5,1\n";
  }
  const ObservationSet obs = load_observations_csv(path);
  CHECK(obs.items[0].direction.z() == doctest::Approx(1.0));
  std::remove(path.c_str());

  {
    std::ofstream out(path);
    out << "ax,ay,az,nx,ny,nz,w\n";
    out << "0,0,0,0,0,0,1\n";
  }
  CHECK_THROWS_AS(load_observations_csv(path), ParseError);
  std::remove(path.c_str());
}
