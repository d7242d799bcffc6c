#pragma once

// Test-only reference implementations, kept independent of the library's
// own computation paths: haversine distances, brute-force nearest-segment
// scans, dense dummy-variable OLS with a cluster sandwich (Eigen), and a
// random panel generator for equivalence testing.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "geodid/femodel.hpp"
#include "geodid/geometry.hpp"
#include "geodid/zones.hpp"

namespace oracle {

inline constexpr double kPi = 3.14159265358979323846;

// Great-circle distance on the sphere whose radius makes one degree of arc
// equal 111.32 km.
inline double haversine_km(const geodid::GeoPoint& a, const geodid::GeoPoint& b) {
  const double R = 111.32 * 180.0 / kPi;
  const double p1 = a.lat * kPi / 180.0, p2 = b.lat * kPi / 180.0;
  const double dp = p2 - p1, dl = (b.lon - a.lon) * kPi / 180.0;
  const double sp = std::sin(dp / 2.0), sl = std::sin(dl / 2.0);
  const double h = sp * sp + std::cos(p1) * std::cos(p2) * sl * sl;
  return 2.0 * R * std::asin(std::min(1.0, std::sqrt(h)));
}

// Planar point-to-segment distance via dense sampling along the segment.
inline double sampled_segment_distance(const geodid::GeoPoint& p, const geodid::GeoPoint& a,
                                       const geodid::GeoPoint& b, int steps = 20000) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i <= steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    const double x = a.lon + t * (b.lon - a.lon) - p.lon;
    const double y = a.lat + t * (b.lat - a.lat) - p.lat;
    best = std::min(best, std::hypot(x, y));
  }
  return best;
}

struct DummyOls {
  std::vector<double> coef;  // regressor block only
  std::vector<double> se;    // CR1-scaled cluster sandwich
  bool full_rank = true;
};

// Explicit dummy-variable OLS: X = [regressors | intercept | per-dimension
// level dummies (first level dropped)]. The CR1 factor uses the same K
// convention as the library: regressors + (total FE levels - FE dims).
inline DummyOls dummy_ols_cr(const geodid::PanelFrame& f, const geodid::RegressionSpec& spec) {
  using Eigen::MatrixXd;
  using Eigen::VectorXd;
  const std::size_t n = f.n_rows();
  const std::size_t nreg = spec.regressors.size();

  std::vector<geodid::FactorCodes> dims;
  std::size_t total_levels = 0;
  for (const std::string& d : spec.fixed_effects) {
    dims.push_back(geodid::encode_factor(f.factor(d)));
    total_levels += dims.back().levels.size();
  }

  std::size_t p = nreg + 1;
  for (const geodid::FactorCodes& fc : dims) p += fc.levels.size() - 1;

  MatrixXd x = MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  VectorXd y(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    y(static_cast<Eigen::Index>(i)) = f.numeric(spec.outcome)[i];
  for (std::size_t j = 0; j < nreg; ++j) {
    const std::vector<double>& col = f.numeric(spec.regressors[j]);
    for (std::size_t i = 0; i < n; ++i)
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = col[i];
  }
  for (std::size_t i = 0; i < n; ++i)
    x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(nreg)) = 1.0;
  std::size_t off = nreg + 1;
  for (const geodid::FactorCodes& fc : dims) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto lvl = static_cast<std::size_t>(fc.codes[i]);
      if (lvl > 0)
        x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(off + lvl - 1)) = 1.0;
    }
    off += fc.levels.size() - 1;
  }

  DummyOls out;
  Eigen::ColPivHouseholderQR<MatrixXd> qr(x);
  if (qr.rank() < static_cast<Eigen::Index>(p)) {
    out.full_rank = false;
    return out;
  }
  const VectorXd beta = qr.solve(y);
  const VectorXd resid = y - x * beta;

  const geodid::FactorCodes cl = geodid::encode_factor(f.factor(spec.cluster));
  const std::size_t m = cl.levels.size();
  MatrixXd scores = MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < n; ++i)
    scores.row(cl.codes[i]) += resid(static_cast<Eigen::Index>(i)) * x.row(static_cast<Eigen::Index>(i));
  const MatrixXd meat = scores.transpose() * scores;
  const MatrixXd bread = (x.transpose() * x).inverse();

  const double dn = static_cast<double>(n);
  const double dm = static_cast<double>(m);
  const double kk = static_cast<double>(nreg + total_levels - spec.fixed_effects.size());
  const double cr1 = (dm / (dm - 1.0)) * ((dn - 1.0) / (dn - kk));
  const MatrixXd v = cr1 * bread * meat * bread;

  for (std::size_t j = 0; j < nreg; ++j) {
    out.coef.push_back(beta(static_cast<Eigen::Index>(j)));
    out.se.push_back(std::sqrt(v(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j))));
  }
  return out;
}

// Random panel with every fixed-effect group holding at least two rows (so
// singleton dropping is a no-op and both estimation routes see identical
// samples). Returns false when the dummy design is rank-deficient.
inline bool random_frame(std::mt19937_64& eng, geodid::PanelFrame& frame,
                         geodid::RegressionSpec& spec, std::size_t max_rows = 200,
                         std::size_t max_regs = 3, std::size_t max_dims = 3,
                         std::size_t max_clusters = 10) {
  std::uniform_int_distribution<std::size_t> rown(40, max_rows);
  std::uniform_int_distribution<std::size_t> regn(1, max_regs);
  std::uniform_int_distribution<std::size_t> dimn(1, max_dims);
  std::uniform_int_distribution<std::size_t> clun(2, max_clusters);
  std::normal_distribution<double> normal(0.0, 1.0);

  const std::size_t n = rown(eng);
  const std::size_t nreg = regn(eng);
  const std::size_t ndim = dimn(eng);
  const std::size_t nclu = clun(eng);

  std::vector<std::vector<int>> assign(ndim, std::vector<int>(n));
  for (std::size_t d = 0; d < ndim; ++d) {
    std::uniform_int_distribution<int> lev(0, static_cast<int>(2 + eng() % 5));
    for (std::size_t i = 0; i < n; ++i) assign[d][i] = lev(eng);
    // merge singleton levels into level 0 so no row is alone in its group
    std::vector<int> count(16, 0);
    for (std::size_t i = 0; i < n; ++i) ++count[static_cast<std::size_t>(assign[d][i])];
    for (std::size_t i = 0; i < n; ++i)
      if (count[static_cast<std::size_t>(assign[d][i])] < 2) assign[d][i] = 0;
  }

  std::vector<int> cluster(n);
  for (std::size_t i = 0; i < n; ++i) cluster[i] = static_cast<int>(eng() % nclu);

  std::vector<std::vector<double>> xs(nreg, std::vector<double>(n));
  std::vector<double> y(n);
  std::vector<double> fe_effects(ndim * 8);
  for (double& e : fe_effects) e = normal(eng);
  for (std::size_t i = 0; i < n; ++i) {
    double yi = normal(eng) * 0.7;
    for (std::size_t d = 0; d < ndim; ++d)
      yi += fe_effects[d * 8 + static_cast<std::size_t>(assign[d][i])];
    for (std::size_t j = 0; j < nreg; ++j) {
      const double xv = normal(eng) + 0.4 * assign[0][i];
      xs[j][i] = xv;
      yi += (0.5 + 0.3 * static_cast<double>(j)) * xv;
    }
    yi += 0.3 * cluster[i];
    y[i] = yi;
  }

  frame = geodid::PanelFrame{};
  frame.add_numeric("y", y);
  spec = geodid::RegressionSpec{};
  spec.outcome = "y";
  for (std::size_t j = 0; j < nreg; ++j) {
    const std::string name = "x" + std::to_string(j + 1);
    frame.add_numeric(name, xs[j]);
    spec.regressors.push_back(name);
  }
  for (std::size_t d = 0; d < ndim; ++d) {
    std::vector<std::string> labels(n);
    for (std::size_t i = 0; i < n; ++i)
      labels[i] = "g" + std::to_string(assign[d][i]);
    const std::string name = "f" + std::to_string(d + 1);
    frame.add_factor(name, labels);
    spec.fixed_effects.push_back(name);
  }
  {
    std::vector<std::string> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = "c" + std::to_string(cluster[i]);
    frame.add_factor("cl", labels);
    spec.cluster = "cl";
  }

  // reject rank-deficient dummy designs up front
  return dummy_ols_cr(frame, spec).full_rank;
}

}  // namespace oracle
