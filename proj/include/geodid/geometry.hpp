#pragma once

// Coordinate geometry over WGS84 longitude/latitude pairs: minimum
// distances from points to polylines and node sets, in raw angular
// degrees or kilometres, plus the uniform-disc jitter model used to
// perturb survey coordinates.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace geodid {

// Surface length of one angular degree, km.
inline constexpr double kKmPerDegree = 111.32;
inline constexpr double kDegToRad = 3.14159265358979323846 / 180.0;

struct GeoPoint {
  double lon = 0.0;  // decimal degrees, [-180, 180]
  double lat = 0.0;  // decimal degrees, [-90, 90]
};

inline bool operator==(const GeoPoint& a, const GeoPoint& b) {
  return a.lon == b.lon && a.lat == b.lat;
}
inline bool operator!=(const GeoPoint& a, const GeoPoint& b) { return !(a == b); }

inline bool valid_coordinates(const GeoPoint& p) {
  return p.lon >= -180.0 && p.lon <= 180.0 && p.lat >= -90.0 && p.lat <= 90.0;
}

// Ordered vertex chain; consecutive vertices must be distinct.
struct Polyline {
  std::vector<GeoPoint> vertices;
};

// Point infrastructure (network nodes) with a vintage label.
struct NodeSet {
  std::vector<GeoPoint> nodes;
  int year = 0;
};

enum class DistanceMetric {
  PlanarDegrees,  // (lon, lat) treated as Cartesian, no latitude correction
  GreatCircleKm,  // local equirectangular projection about the query point
};

namespace detail {

// Places p at the origin of a plane whose axes are degrees (PlanarDegrees)
// or kilometres via an equirectangular projection centred on p.
struct LocalFrame {
  double sx = 1.0, sy = 1.0;
  GeoPoint origin;

  LocalFrame(const GeoPoint& p, DistanceMetric m) : origin(p) {
    if (m == DistanceMetric::GreatCircleKm) {
      sx = kKmPerDegree * std::cos(p.lat * kDegToRad);
      sy = kKmPerDegree;
    }
  }
  double x(const GeoPoint& q) const { return (q.lon - origin.lon) * sx; }
  double y(const GeoPoint& q) const { return (q.lat - origin.lat) * sy; }
};

}  // namespace detail

// Minimum distance from p to the closed segment ab.
inline double dist_point_segment(const GeoPoint& p, const GeoPoint& a, const GeoPoint& b,
                                 DistanceMetric metric) {
  if (a == b) throw std::invalid_argument("dist_point_segment: degenerate segment (a == b)");
  const detail::LocalFrame frame(p, metric);
  const double ax = frame.x(a), ay = frame.y(a);
  const double bx = frame.x(b), by = frame.y(b);
  const double dx = bx - ax, dy = by - ay;
  const double len2 = dx * dx + dy * dy;
  double t = 0.0;
  if (len2 > 0.0) {
    t = -(ax * dx + ay * dy) / len2;
    t = t < 0.0 ? 0.0 : (t > 1.0 ? 1.0 : t);
  }
  return std::hypot(ax + t * dx, ay + t * dy);
}

// Minimum distance from p over every segment of every polyline.
inline double dist_to_polylines(const GeoPoint& p, const std::vector<Polyline>& lines,
                                DistanceMetric metric) {
  if (lines.empty()) throw std::invalid_argument("dist_to_polylines: empty line set");
  double best = std::numeric_limits<double>::infinity();
  for (const Polyline& line : lines) {
    if (line.vertices.size() < 2)
      throw std::invalid_argument("dist_to_polylines: polyline with fewer than 2 vertices");
    for (std::size_t i = 1; i < line.vertices.size(); ++i) {
      const double d = dist_point_segment(p, line.vertices[i - 1], line.vertices[i], metric);
      if (d < best) best = d;
    }
  }
  return best;
}

// Minimum point-to-point distance from p to any node.
inline double dist_to_nodes(const GeoPoint& p, const NodeSet& ns, DistanceMetric metric) {
  if (ns.nodes.empty()) throw std::invalid_argument("dist_to_nodes: empty node set");
  const detail::LocalFrame frame(p, metric);
  double best = std::numeric_limits<double>::infinity();
  for (const GeoPoint& q : ns.nodes) {
    const double d = std::hypot(frame.x(q), frame.y(q));
    if (d < best) best = d;
  }
  return best;
}

// Uniform-disc perturbation: displacement rho ~ U[0, R] km at angle
// theta ~ U[0, 2pi). Mean absolute displacement along either axis is R/pi.
struct JitterSpec {
  double max_radius_km = 0.0;
  std::uint64_t seed = 0;
};

class JitterSampler {
 public:
  explicit JitterSampler(const JitterSpec& spec)
      : radius_(spec.max_radius_km), engine_(spec.seed) {
    if (!(radius_ >= 0.0))
      throw std::invalid_argument("jitter: max radius must be nonnegative");
  }

  GeoPoint operator()(const GeoPoint& p) {
    const double rho = radius_ * unit_(engine_);
    const double theta = two_pi_ * unit_(engine_);
    const double dx_km = rho * std::cos(theta);
    const double dy_km = rho * std::sin(theta);
    const double cos_lat = std::cos(p.lat * kDegToRad);
    GeoPoint out = p;
    out.lat += dy_km / kKmPerDegree;
    if (cos_lat > 1e-12) out.lon += dx_km / (kKmPerDegree * cos_lat);
    return out;
  }

 private:
  static constexpr double two_pi_ = 2.0 * 3.14159265358979323846;
  double radius_;
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> unit_{0.0, 1.0};
};

// One-shot form; deterministic for a given spec.
inline GeoPoint jitter(const GeoPoint& p, const JitterSpec& spec) {
  JitterSampler sampler(spec);
  return sampler(p);
}

}  // namespace geodid
