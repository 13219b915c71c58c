#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include <opticenter/errors.hpp>

namespace opticenter {

using Vec3 = Eigen::Vector3d;

/// A location in voxel units.
using Point3 = Eigen::Vector3d;

/// Unit-norm direction. Construction renormalizes, so n n^T is always a
/// projection; vectors with norm below 1e-12 are rejected.
class UnitVec3 {
 public:
  static UnitVec3 normalized(const Vec3& v);

  const Vec3& vec() const noexcept { return v_; }
  double x() const noexcept { return v_.x(); }
  double y() const noexcept { return v_.y(); }
  double z() const noexcept { return v_.z(); }

  UnitVec3 flipped() const { return UnitVec3(-v_); }

 private:
  explicit UnitVec3(const Vec3& v) : v_(v) {}
  Vec3 v_;
};

/// One measured PSF line: center of mass, principal axis, positive weight.
struct LineObservation {
  LineObservation(const Point3& anchor_, const UnitVec3& direction_,
                  double weight_ = 1.0);

  Point3 anchor;
  UnitVec3 direction;
  double weight;
};

/// Ordered bundle of line observations. Index order is stable; the matrix
/// row blocks of the assembled systems depend on it. May be empty in I/O
/// contexts; the system builders require at least one entry.
struct ObservationSet {
  std::vector<LineObservation> items;

  int count() const noexcept { return static_cast<int>(items.size()); }
  bool empty() const noexcept { return items.empty(); }
};

/// Renormalizes v; throws DegenerateDirection when the norm is <= 1e-12.
/// Vectors already unit within 1e-12 of squared norm are returned bit-exact,
/// which makes renormalization idempotent.
UnitVec3 normalize_direction(const Vec3& v);

/// Residual (I - n n^T)(c - a): the component of c - anchor orthogonal to
/// the line direction.
Vec3 point_line_residual(const Point3& c, const LineObservation& line);

/// Euclidean distance from c to the observed line.
double point_line_distance(const Point3& c, const LineObservation& line);

/// CSV with header "ax,ay,az,nx,ny,nz,w", one observation per row.
/// Directions are renormalized on load; malformed rows raise ParseError
/// naming the line number.
ObservationSet load_observations_csv(const std::string& path);
void save_observations_csv(const ObservationSet& obs, const std::string& path);

}  // namespace opticenter
