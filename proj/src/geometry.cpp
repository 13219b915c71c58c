#include <opticenter/geometry.hpp>

#include <cmath>
#include <fstream>
#include <sstream>

#include <opticenter/format.hpp>

namespace opticenter {

UnitVec3 UnitVec3::normalized(const Vec3& v) {
  const double sq = v.squaredNorm();
  if (sq <= 1e-24) {
    throw DegenerateDirection("direction vector norm below 1e-12");
  }
  // Already unit: keep the exact bits so renormalization is idempotent.
  if (std::abs(sq - 1.0) < 1e-12) {
    return UnitVec3(v);
  }
  return UnitVec3(v / std::sqrt(sq));
}

UnitVec3 normalize_direction(const Vec3& v) { return UnitVec3::normalized(v); }

LineObservation::LineObservation(const Point3& anchor_,
                                 const UnitVec3& direction_, double weight_)
    : anchor(anchor_), direction(direction_), weight(weight_) {
  if (!(weight > 0.0)) {
    throw Error("observation weight must be positive, got " +
                format_double(weight));
  }
  if (!anchor.allFinite()) {
    throw Error("observation anchor must be finite");
  }
}

Vec3 point_line_residual(const Point3& c, const LineObservation& line) {
  const Vec3 r = c - line.anchor;
  const Vec3& n = line.direction.vec();
  return r - r.dot(n) * n;
}

double point_line_distance(const Point3& c, const LineObservation& line) {
  return point_line_residual(c, line).norm();
}

namespace {

constexpr const char* kCsvHeader = "ax,ay,az,nx,ny,nz,w";

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream stream(line);
  while (std::getline(stream, field, ',')) {
    fields.push_back(field);
  }
  if (!line.empty() && line.back() == ',') {
    fields.emplace_back();
  }
  return fields;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

}  // namespace

ObservationSet load_observations_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw ParseError("cannot open observation file '" + path + "'");
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw ParseError(path + ":1: missing CSV header '" + kCsvHeader + "'");
  }
  if (strip_cr(line) != kCsvHeader) {
    throw ParseError(path + ":1: expected header '" + kCsvHeader + "', got '" +
                     strip_cr(line) + "'");
  }

  ObservationSet obs;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string row = strip_cr(line);
    if (row.empty()) continue;
    const auto fields = split_csv_row(row);
    const std::string where = path + ":" + std::to_string(line_no);
    if (fields.size() != 7) {
      throw ParseError(where + ": expected 7 fields, got " +
                       std::to_string(fields.size()));
    }
    try {
      const Point3 anchor(parse_double(fields[0], "ax"),
                          parse_double(fields[1], "ay"),
                          parse_double(fields[2], "az"));
      const Vec3 raw_dir(parse_double(fields[3], "nx"),
                         parse_double(fields[4], "ny"),
                         parse_double(fields[5], "nz"));
      const double weight = parse_double(fields[6], "w");
      obs.items.emplace_back(anchor, normalize_direction(raw_dir), weight);
    } catch (const Error& e) {
      throw ParseError(where + ": " + e.what());
    }
  }
  return obs;
}

void save_observations_csv(const ObservationSet& obs, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw Error("cannot write observation file '" + path + "'");
  }
  out << kCsvHeader << '\n';
  for (const LineObservation& item : obs.items) {
    const Vec3& n = item.direction.vec();
    out << format_double(item.anchor.x()) << ',' << format_double(item.anchor.y())
        << ',' << format_double(item.anchor.z()) << ',' << format_double(n.x())
        << ',' << format_double(n.y()) << ',' << format_double(n.z()) << ','
        << format_double(item.weight) << '\n';
  }
}

}  // namespace opticenter
