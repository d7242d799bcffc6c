#pragma once

// Classification-fidelity check: among points assigned Treated or Control,
// regress an observed coverage indicator on the treated dummy (plus
// intercept) and report the gap with standard errors clustered on a
// locality id. Group rates and the gap are formed from integer counts, so
// flipping every coverage bit negates the estimate and t statistic exactly.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "geodid/femodel.hpp"
#include "geodid/zones.hpp"

namespace geodid {

struct FidelityResult {
  double treated_rate = 0.0;
  double control_rate = 0.0;
  std::int64_t treated_n = 0;
  std::int64_t control_n = 0;
  double estimate = 0.0;   // treated_rate - control_rate
  double std_error = 0.0;  // CR1, clustered on locality
  double t_stat = 0.0;
  std::size_t n_clusters = 0;
};

inline FidelityResult fidelity_test(const std::vector<int>& covered,
                                    const std::vector<Assignment>& assignments,
                                    const std::vector<std::string>& locality) {
  const std::size_t n_all = covered.size();
  if (assignments.size() != n_all || locality.size() != n_all)
    throw std::invalid_argument("fidelity_test: input length mismatch");
  for (int c : covered)
    if (c != 0 && c != 1) throw std::invalid_argument("fidelity_test: covered must be 0/1");

  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < n_all; ++i)
    if (assignments[i].status != ZoneStatus::Excluded) rows.push_back(i);

  std::int64_t nt = 0, nc = 0, st = 0, sc = 0;
  for (std::size_t i : rows) {
    if (assignments[i].status == ZoneStatus::Treated) {
      ++nt;
      st += covered[i];
    } else {
      ++nc;
      sc += covered[i];
    }
  }
  if (nt == 0) throw std::runtime_error("fidelity_test: treated group is empty");
  if (nc == 0) throw std::runtime_error("fidelity_test: control group is empty");

  const std::int64_t n = nt + nc;
  if (n <= 2) throw std::runtime_error("fidelity_test: too few observations");

  FidelityResult out;
  out.treated_n = nt;
  out.control_n = nc;
  out.treated_rate = static_cast<double>(st) / static_cast<double>(nt);
  out.control_rate = static_cast<double>(sc) / static_cast<double>(nc);
  // single rounding, so the estimate negates exactly under a coverage flip
  out.estimate =
      static_cast<double>(st * nc - sc * nt) / (static_cast<double>(nt) * static_cast<double>(nc));

  std::vector<std::string> loc;
  loc.reserve(rows.size());
  for (std::size_t i : rows) loc.push_back(locality[i]);
  const FactorCodes cl = encode_factor(loc);
  const std::size_t m = cl.levels.size();
  out.n_clusters = m;
  if (m < 2) throw std::runtime_error("fidelity_test: all points share a single locality cluster");

  // X = [1, treated]; bread inverse has the closed form below
  const double dnt = static_cast<double>(nt), dnc = static_cast<double>(nc);
  const double dn = static_cast<double>(n);
  const double inv01 = -1.0 / dnc;
  const double inv11 = dn / (dnt * dnc);

  std::vector<double> s0(m, 0.0), s1(m, 0.0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const std::size_t i = rows[r];
    const bool tr = assignments[i].status == ZoneStatus::Treated;
    const double u =
        tr ? static_cast<double>(covered[i] * nt - st) / dnt
           : static_cast<double>(covered[i] * nc - sc) / dnc;
    const auto g = static_cast<std::size_t>(cl.codes[r]);
    s0[g] += u;
    if (tr) s1[g] += u;
  }
  double m00 = 0.0, m01 = 0.0, m11 = 0.0;
  for (std::size_t g = 0; g < m; ++g) {
    m00 += s0[g] * s0[g];
    m01 += s0[g] * s1[g];
    m11 += s1[g] * s1[g];
  }

  const double dm = static_cast<double>(m);
  const double cr1 = (dm / (dm - 1.0)) * ((dn - 1.0) / (dn - 2.0));
  // V[1][1] of Ainv meat Ainv
  const double row0 = inv01 * m00 + inv11 * m01;
  const double row1 = inv01 * m01 + inv11 * m11;
  const double v11 = cr1 * (row0 * inv01 + row1 * inv11);
  out.std_error = std::sqrt(v11 > 0.0 ? v11 : 0.0);

  if (out.estimate == 0.0)
    out.t_stat = 0.0;
  else if (out.std_error == 0.0)
    out.t_stat = out.estimate > 0.0 ? std::numeric_limits<double>::infinity()
                                    : -std::numeric_limits<double>::infinity();
  else
    out.t_stat = out.estimate / out.std_error;
  return out;
}

// One-line summary in the style of a coverage-audit table row.
inline std::string describe(const FidelityResult& r) {
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "covered|treated = %.2f (N = %lld); covered|control = %.2f (N = %lld); t = %.2f",
                r.treated_rate, static_cast<long long>(r.treated_n), r.control_rate,
                static_cast<long long>(r.control_n), r.t_stat);
  return std::string(buf);
}

}  // namespace geodid
