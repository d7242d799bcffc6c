#pragma once

// Distance-band treatment assignment: Treated strictly inside the treat
// radius, Control from the treat radius up to (not including) the control
// radius, Excluded beyond. Also grid-cell bucketing and confusion-matrix
// comparison of two classifications of the same points.

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "geodid/geometry.hpp"

namespace geodid {

enum class ZoneStatus : int { Treated = 0, Control = 1, Excluded = 2 };

inline const char* to_string(ZoneStatus s) {
  switch (s) {
    case ZoneStatus::Treated: return "treated";
    case ZoneStatus::Control: return "control";
    case ZoneStatus::Excluded: return "excluded";
  }
  return "?";
}

enum class Referent { Lines, Nodes };

struct ZoneSpec {
  double treat_radius = 0.0;    // same unit as metric (degrees or km)
  double control_radius = 0.0;  // must exceed treat_radius
  Referent referent = Referent::Lines;
  DistanceMetric metric = DistanceMetric::PlanarDegrees;
};

inline void validate(const ZoneSpec& z) {
  if (!(z.treat_radius > 0.0) || !(z.control_radius > z.treat_radius))
    throw std::invalid_argument("zone spec: need 0 < treat_radius < control_radius");
}

// Either line infrastructure or point infrastructure.
using Infrastructure = std::variant<std::vector<Polyline>, NodeSet>;

inline double infrastructure_distance(const GeoPoint& p, const Infrastructure& infra,
                                      DistanceMetric metric) {
  if (std::holds_alternative<NodeSet>(infra))
    return dist_to_nodes(p, std::get<NodeSet>(infra), metric);
  return dist_to_polylines(p, std::get<std::vector<Polyline>>(infra), metric);
}

struct Assignment {
  ZoneStatus status = ZoneStatus::Excluded;
  double distance = 0.0;
};

inline ZoneStatus status_for_distance(double d, const ZoneSpec& z) {
  if (d < z.treat_radius) return ZoneStatus::Treated;
  if (d < z.control_radius) return ZoneStatus::Control;
  return ZoneStatus::Excluded;
}

inline std::vector<Assignment> classify(const std::vector<GeoPoint>& points,
                                        const Infrastructure& infra, const ZoneSpec& z) {
  validate(z);
  const bool have_nodes = std::holds_alternative<NodeSet>(infra);
  if (have_nodes != (z.referent == Referent::Nodes))
    throw std::invalid_argument("classify: zone referent does not match infrastructure kind");
  std::vector<Assignment> out;
  out.reserve(points.size());
  for (const GeoPoint& p : points) {
    const double d = infrastructure_distance(p, infra, z.metric);
    out.push_back({status_for_distance(d, z), d});
  }
  return out;
}

// Cell indices under a fixed graticule anchored at (0, 0).
struct GridSpec {
  double cell_size = 0.1;  // degrees
};

struct GridCell {
  std::int64_t ix = 0;
  std::int64_t iy = 0;
};

inline bool operator==(const GridCell& a, const GridCell& b) {
  return a.ix == b.ix && a.iy == b.iy;
}

inline GridCell grid_cell(const GeoPoint& p, const GridSpec& g) {
  if (!(g.cell_size > 0.0)) throw std::invalid_argument("grid spec: cell_size must be positive");
  return {static_cast<std::int64_t>(std::floor(p.lon / g.cell_size)),
          static_cast<std::int64_t>(std::floor(p.lat / g.cell_size))};
}

inline std::string grid_cell_label(const GridCell& c) {
  return std::to_string(c.ix) + "," + std::to_string(c.iy);
}

// counts[i][j] = points with status i under a, status j under b
// (index order treated, control, excluded).
struct ClassificationComparison {
  std::array<std::array<std::int64_t, 3>, 3> counts{};
  std::int64_t n = 0;
  double agreement_rate = 0.0;
};

inline ClassificationComparison compare_classifications(const std::vector<Assignment>& a,
                                                        const std::vector<Assignment>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("compare_classifications: length mismatch");
  if (a.empty()) throw std::invalid_argument("compare_classifications: empty input");
  ClassificationComparison cmp;
  cmp.n = static_cast<std::int64_t>(a.size());
  std::int64_t agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const int ia = static_cast<int>(a[i].status);
    const int ib = static_cast<int>(b[i].status);
    ++cmp.counts[ia][ib];
    if (ia == ib) ++agree;
  }
  cmp.agreement_rate = static_cast<double>(agree) / static_cast<double>(cmp.n);
  return cmp;
}

}  // namespace geodid
