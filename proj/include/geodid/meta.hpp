#pragma once

// DerSimonian-Laird random-effects meta-analysis of independent estimates.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace geodid {

struct StudyEstimate {
  std::string label;
  double estimate = 0.0;
  double se = 0.0;
};

struct MetaResult {
  double pooled = 0.0;
  double pooled_se = 0.0;
  double tau_sq = 0.0;        // between-study variance
  double q = 0.0;             // Cochran heterogeneity statistic
  std::vector<double> weights;  // normalized random-effects weights
};

inline MetaResult dersimonian_laird(const std::vector<StudyEstimate>& studies) {
  const std::size_t k = studies.size();
  if (k < 2) throw std::invalid_argument("dersimonian_laird: need at least 2 studies");
  for (const StudyEstimate& s : studies)
    if (!(s.se > 0.0))
      throw std::invalid_argument("dersimonian_laird: nonpositive standard error for study " +
                                  (s.label.empty() ? std::string("(unnamed)") : s.label));

  double sw = 0.0, swe = 0.0, sw2 = 0.0;
  for (const StudyEstimate& s : studies) {
    const double w = 1.0 / (s.se * s.se);
    sw += w;
    swe += w * s.estimate;
    sw2 += w * w;
  }
  const double theta_fe = swe / sw;

  double q = 0.0;
  for (const StudyEstimate& s : studies) {
    const double w = 1.0 / (s.se * s.se);
    const double d = s.estimate - theta_fe;
    q += w * d * d;
  }

  const double denom = sw - sw2 / sw;
  const double tau_sq = std::max(0.0, (q - static_cast<double>(k - 1)) / denom);

  MetaResult out;
  out.q = q;
  out.tau_sq = tau_sq;
  double swr = 0.0, swre = 0.0;
  out.weights.reserve(k);
  for (const StudyEstimate& s : studies) {
    const double w = 1.0 / (s.se * s.se + tau_sq);
    out.weights.push_back(w);
    swr += w;
    swre += w * s.estimate;
  }
  for (double& w : out.weights) w /= swr;
  out.pooled = swre / swr;
  out.pooled_se = std::sqrt(1.0 / swr);
  return out;
}

}  // namespace geodid
