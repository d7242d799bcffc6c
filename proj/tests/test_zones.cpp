#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "geodid/zones.hpp"

using namespace geodid;

namespace {

Infrastructure vertical_line() {
  return Infrastructure{std::vector<Polyline>{Polyline{{{0.0, -1.0}, {0.0, 1.0}}}}};
}

ZoneSpec lines_zone(double treat, double control) {
  ZoneSpec z;
  z.referent = Referent::Lines;
  z.treat_radius = treat;
  z.control_radius = control;
  z.metric = DistanceMetric::PlanarDegrees;
  return z;
}

// independent re-derivation of point-to-segment distance
double scan_distance(const GeoPoint& p, const std::vector<Polyline>& lines) {
  double best = std::numeric_limits<double>::infinity();
  for (const Polyline& line : lines) {
    for (std::size_t i = 1; i < line.vertices.size(); ++i) {
      const GeoPoint& a = line.vertices[i - 1];
      const GeoPoint& b = line.vertices[i];
      const double vx = b.lon - a.lon, vy = b.lat - a.lat;
      const double wx = p.lon - a.lon, wy = p.lat - a.lat;
      const double c1 = vx * wx + vy * wy;
      const double c2 = vx * vx + vy * vy;
      double d;
      if (c1 <= 0.0) {
        d = std::hypot(wx, wy);
      } else if (c1 >= c2) {
        d = std::hypot(p.lon - b.lon, p.lat - b.lat);
      } else {
        const double t = c1 / c2;
        d = std::hypot(wx - t * vx, wy - t * vy);
      }
      best = std::min(best, d);
    }
  }
  return best;
}

}  // namespace

TEST_CASE("band assignment around a line referent") {
  const Infrastructure infra = vertical_line();
  const std::vector<GeoPoint> pts = {{0.003, 0.2}, {0.05, 0.2}, {0.15, 0.2}};

  const auto narrow = classify(pts, infra, lines_zone(0.005, 0.1));
  CHECK(narrow[0].status == ZoneStatus::Treated);
  CHECK(narrow[0].distance == Catch::Approx(0.003).margin(1e-15));
  CHECK(narrow[1].status == ZoneStatus::Control);
  CHECK(narrow[2].status == ZoneStatus::Excluded);

  const auto wide = classify(pts, infra, lines_zone(0.1, 0.2));
  CHECK(wide[0].status == ZoneStatus::Treated);
  CHECK(wide[1].status == ZoneStatus::Treated);
  CHECK(wide[2].status == ZoneStatus::Control);
}

TEST_CASE("band edges are exclusive on the outside") {
  const Infrastructure infra = vertical_line();
  const auto asg = classify({{0.005, 0.0}, {0.1, 0.0}}, infra, lines_zone(0.005, 0.1));
  CHECK(asg[0].status == ZoneStatus::Control);   // exactly the treat radius
  CHECK(asg[1].status == ZoneStatus::Excluded);  // exactly the control radius
}

TEST_CASE("zone spec validation") {
  CHECK_THROWS_AS(validate(lines_zone(0.0, 0.1)), std::invalid_argument);
  CHECK_THROWS_AS(validate(lines_zone(0.1, 0.1)), std::invalid_argument);
  CHECK_THROWS_AS(validate(lines_zone(0.2, 0.1)), std::invalid_argument);
  CHECK_NOTHROW(validate(lines_zone(0.05, 0.1)));
}

TEST_CASE("referent must match the infrastructure kind") {
  ZoneSpec z = lines_zone(0.05, 0.1);
  z.referent = Referent::Nodes;
  CHECK_THROWS_AS(classify({{0.0, 0.0}}, vertical_line(), z), std::invalid_argument);
  const Infrastructure nodes{NodeSet{{{0.0, 0.0}}, 2012}};
  CHECK_THROWS_AS(classify({{0.0, 0.0}}, nodes, lines_zone(0.05, 0.1)), std::invalid_argument);
}

TEST_CASE("classification matches an exhaustive distance scan") {
  std::vector<Polyline> lines = {Polyline{{{-0.5, -0.5}, {0.0, 0.2}, {0.6, -0.1}}},
                                 Polyline{{{0.2, 0.5}, {0.4, 0.9}}}};
  const Infrastructure infra{lines};
  const ZoneSpec z = lines_zone(0.05, 0.15);
  std::mt19937_64 eng(91);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<GeoPoint> pts;
  for (int i = 0; i < 500; ++i) pts.push_back({u(eng), u(eng)});
  const auto asg = classify(pts, infra, z);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double d = scan_distance(pts[i], lines);
    CHECK(std::fabs(asg[i].distance - d) <= 1e-12);
    const ZoneStatus expect = d < z.treat_radius    ? ZoneStatus::Treated
                              : d < z.control_radius ? ZoneStatus::Control
                                                     : ZoneStatus::Excluded;
    CHECK(asg[i].status == expect);
  }
}

TEST_CASE("growing radii only grow the bands") {
  const Infrastructure infra = vertical_line();
  std::mt19937_64 eng(92);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<GeoPoint> pts;
  for (int i = 0; i < 2000; ++i) pts.push_back({u(eng), u(eng)});

  const auto narrow = classify(pts, infra, lines_zone(0.005, 0.1));
  const auto mid = classify(pts, infra, lines_zone(0.05, 0.1));
  const auto wide = classify(pts, infra, lines_zone(0.1, 0.2));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (narrow[i].status == ZoneStatus::Treated) CHECK(mid[i].status == ZoneStatus::Treated);
    if (mid[i].status == ZoneStatus::Treated) CHECK(wide[i].status == ZoneStatus::Treated);
    const bool mid_in = mid[i].status != ZoneStatus::Excluded;
    const bool wide_in = wide[i].status != ZoneStatus::Excluded;
    if (mid_in) CHECK(wide_in);
    // distances are zone-independent
    CHECK(narrow[i].distance == mid[i].distance);
    CHECK(mid[i].distance == wide[i].distance);
  }
}

TEST_CASE("node referent equals degenerate stub lines") {
  NodeSet ns;
  std::mt19937_64 eng(93);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int i = 0; i < 15; ++i) ns.nodes.push_back({u(eng), u(eng)});
  std::vector<Polyline> stubs;
  for (const GeoPoint& q : ns.nodes)
    stubs.push_back(Polyline{{q, {q.lon + 1e-13, q.lat}}});

  std::vector<GeoPoint> pts;
  for (int i = 0; i < 400; ++i) pts.push_back({u(eng), u(eng)});

  ZoneSpec zn = lines_zone(0.1, 0.2);
  zn.referent = Referent::Nodes;
  const auto via_nodes = classify(pts, Infrastructure{ns}, zn);
  const auto via_stubs = classify(pts, Infrastructure{stubs}, lines_zone(0.1, 0.2));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    CHECK(std::fabs(via_nodes[i].distance - via_stubs[i].distance) <= 1e-12);
    CHECK(via_nodes[i].status == via_stubs[i].status);
  }
}

TEST_CASE("grid cells bucket by floor division") {
  const GridSpec g{0.1};
  CHECK(grid_cell({0.05, 0.05}, g) == GridCell{0, 0});
  CHECK(grid_cell({-0.05, 0.05}, g) == GridCell{-1, 0});
  CHECK(grid_cell({0.15, 0.25}, GridSpec{0.2}) == GridCell{0, 1});
  CHECK(grid_cell_label({-3, 12}) == "-3,12");
  CHECK_THROWS_AS(grid_cell({0.0, 0.0}, GridSpec{0.0}), std::invalid_argument);
}

TEST_CASE("comparing a classification with itself is full agreement") {
  const Infrastructure infra = vertical_line();
  std::vector<GeoPoint> pts;
  for (int i = 0; i < 30; ++i) pts.push_back({0.01 * i, 0.0});
  const auto asg = classify(pts, infra, lines_zone(0.05, 0.15));
  const ClassificationComparison cmp = compare_classifications(asg, asg);
  CHECK(cmp.agreement_rate == 1.0);
  CHECK(cmp.n == 30);
  std::int64_t diag = 0;
  for (int i = 0; i < 3; ++i) diag += cmp.counts[i][i];
  CHECK(diag == 30);
}

TEST_CASE("confusion matrix counts disagreements") {
  std::vector<Assignment> a(10), b(10);
  for (int i = 0; i < 10; ++i) {
    a[i] = {ZoneStatus::Treated, 0.01};
    b[i] = {i < 3 ? ZoneStatus::Control : ZoneStatus::Treated, 0.01};
  }
  const ClassificationComparison cmp = compare_classifications(a, b);
  CHECK(cmp.agreement_rate == Catch::Approx(0.7));
  CHECK(cmp.counts[0][1] == 3);
  CHECK(cmp.counts[0][0] == 7);
  std::int64_t total = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) total += cmp.counts[i][j];
  CHECK(total == cmp.n);
}

TEST_CASE("comparison input validation") {
  std::vector<Assignment> a(3), b(2);
  CHECK_THROWS_AS(compare_classifications(a, b), std::invalid_argument);
  CHECK_THROWS_AS(compare_classifications({}, {}), std::invalid_argument);
}
