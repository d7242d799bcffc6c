#pragma once

// Panel regression with absorbed (high-dimensional) fixed effects.
// Fixed effects are removed by cyclic group-demeaning, singleton groups
// are dropped to a fixpoint first, and standard errors are cluster-robust
// with the small-sample factor (M/(M-1)) * ((N-1)/(N-K)), where K counts
// the kept regressors plus absorbed fixed-effect levels minus the number
// of absorbed dimensions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "geodid/format.hpp"

namespace geodid {

inline double asinh_transform(double x) { return std::asinh(x); }

// Column-oriented data frame: numeric columns plus string-valued factor
// columns (fixed-effect dimensions, cluster labels).
class PanelFrame {
 public:
  std::size_t n_rows() const { return n_; }

  void add_numeric(std::string name, std::vector<double> values) {
    check_size(name, values.size());
    if (has_numeric(name) || has_factor(name))
      throw std::invalid_argument("panel frame: duplicate column " + name);
    numeric_.emplace_back(std::move(name), std::move(values));
  }

  void add_factor(std::string name, std::vector<std::string> values) {
    check_size(name, values.size());
    if (has_numeric(name) || has_factor(name))
      throw std::invalid_argument("panel frame: duplicate column " + name);
    factor_.emplace_back(std::move(name), std::move(values));
  }

  bool has_numeric(const std::string& name) const { return find(numeric_, name) >= 0; }
  bool has_factor(const std::string& name) const { return find(factor_, name) >= 0; }

  const std::vector<double>& numeric(const std::string& name) const {
    const int i = find(numeric_, name);
    if (i < 0) throw std::invalid_argument("panel frame: no numeric column " + name);
    return numeric_[static_cast<std::size_t>(i)].second;
  }

  const std::vector<std::string>& factor(const std::string& name) const {
    const int i = find(factor_, name);
    if (i < 0) throw std::invalid_argument("panel frame: no factor column " + name);
    return factor_[static_cast<std::size_t>(i)].second;
  }

  PanelFrame select_rows(const std::vector<std::size_t>& rows) const {
    PanelFrame out;
    for (const auto& [name, col] : numeric_) {
      std::vector<double> v;
      v.reserve(rows.size());
      for (std::size_t r : rows) v.push_back(col[r]);
      out.add_numeric(name, std::move(v));
    }
    for (const auto& [name, col] : factor_) {
      std::vector<std::string> v;
      v.reserve(rows.size());
      for (std::size_t r : rows) v.push_back(col[r]);
      out.add_factor(name, std::move(v));
    }
    if (numeric_.empty() && factor_.empty()) out.n_ = 0;
    return out;
  }

 private:
  template <class T>
  static int find(const std::vector<std::pair<std::string, T>>& cols, const std::string& name) {
    for (std::size_t i = 0; i < cols.size(); ++i)
      if (cols[i].first == name) return static_cast<int>(i);
    return -1;
  }

  void check_size(const std::string& name, std::size_t size) {
    if (numeric_.empty() && factor_.empty()) {
      n_ = size;
      return;
    }
    if (size != n_)
      throw std::invalid_argument("panel frame: column " + name + " has mismatched length");
  }

  std::size_t n_ = 0;
  std::vector<std::pair<std::string, std::vector<double>>> numeric_;
  std::vector<std::pair<std::string, std::vector<std::string>>> factor_;
};

struct FactorCodes {
  std::vector<std::int32_t> codes;   // per row
  std::vector<std::string> levels;   // code -> label, first-occurrence order
};

inline FactorCodes encode_factor(const std::vector<std::string>& values) {
  FactorCodes fc;
  fc.codes.reserve(values.size());
  std::unordered_map<std::string, std::int32_t> index;
  for (const std::string& v : values) {
    auto [it, inserted] = index.emplace(v, static_cast<std::int32_t>(fc.levels.size()));
    if (inserted) fc.levels.push_back(v);
    fc.codes.push_back(it->second);
  }
  return fc;
}

struct DropResult {
  PanelFrame frame;
  std::size_t dropped = 0;
};

// Removes rows that are alone in any fixed-effect group, repeating until
// no group of any dimension is a singleton (dropping a row can create new
// singletons in other dimensions).
inline DropResult drop_singletons(const PanelFrame& frame,
                                  const std::vector<std::string>& fe_dims) {
  const std::size_t n = frame.n_rows();
  std::vector<FactorCodes> codes;
  codes.reserve(fe_dims.size());
  for (const std::string& dim : fe_dims) codes.push_back(encode_factor(frame.factor(dim)));

  std::vector<char> alive(n, 1);
  bool changed = true;
  while (changed) {
    changed = false;
    for (const FactorCodes& fc : codes) {
      std::vector<std::int64_t> count(fc.levels.size(), 0);
      for (std::size_t i = 0; i < n; ++i)
        if (alive[i]) ++count[static_cast<std::size_t>(fc.codes[i])];
      for (std::size_t i = 0; i < n; ++i) {
        if (alive[i] && count[static_cast<std::size_t>(fc.codes[i])] == 1) {
          alive[i] = 0;
          changed = true;
        }
      }
    }
  }

  std::vector<std::size_t> keep;
  keep.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    if (alive[i]) keep.push_back(i);
  if (keep.empty())
    throw std::runtime_error("drop_singletons: every row removed; no identifying groups remain");
  DropResult out{frame.select_rows(keep), n - keep.size()};
  return out;
}

struct AbsorbResult {
  std::vector<std::vector<double>> columns;  // demeaned, input order
  int iterations = 0;
  double final_delta = 0.0;
};

// Cyclic group-demeaning. One dimension finishes in a single exact pass;
// several dimensions iterate until every group mean subtracted in a full
// cycle is below an internal threshold chosen so that all group means of
// the result stay below tol.
inline AbsorbResult absorb(const PanelFrame& frame, const std::vector<std::string>& fe_dims,
                           const std::vector<std::string>& columns, double tol = 1e-8,
                           int max_iterations = 10000) {
  const std::size_t n = frame.n_rows();
  if (n == 0) throw std::invalid_argument("absorb: empty frame");
  if (!(tol > 0.0)) throw std::invalid_argument("absorb: tolerance must be positive");
  if (max_iterations < 1) throw std::invalid_argument("absorb: max_iterations must be >= 1");

  std::vector<FactorCodes> codes;
  codes.reserve(fe_dims.size());
  for (const std::string& dim : fe_dims) codes.push_back(encode_factor(frame.factor(dim)));

  AbsorbResult out;
  out.columns.reserve(columns.size());
  for (const std::string& c : columns) out.columns.push_back(frame.numeric(c));
  if (fe_dims.empty()) return out;

  const std::size_t ndims = fe_dims.size();
  std::vector<double> sum;
  std::vector<std::int64_t> cnt;

  auto demean_pass = [&](const FactorCodes& fc) {
    double pass_delta = 0.0;
    const std::size_t levels = fc.levels.size();
    for (std::vector<double>& col : out.columns) {
      sum.assign(levels, 0.0);
      cnt.assign(levels, 0);
      for (std::size_t i = 0; i < n; ++i) {
        const auto g = static_cast<std::size_t>(fc.codes[i]);
        sum[g] += col[i];
        ++cnt[g];
      }
      for (std::size_t g = 0; g < levels; ++g) {
        sum[g] /= static_cast<double>(cnt[g]);
        const double m = std::fabs(sum[g]);
        if (m > pass_delta) pass_delta = m;
      }
      for (std::size_t i = 0; i < n; ++i) col[i] -= sum[static_cast<std::size_t>(fc.codes[i])];
    }
    return pass_delta;
  };

  if (ndims == 1) {
    demean_pass(codes[0]);
    out.iterations = 1;
    out.final_delta = 0.0;
    return out;
  }

  const double stop = tol / (2.0 * static_cast<double>(ndims));
  for (int cycle = 1; cycle <= max_iterations; ++cycle) {
    double cycle_delta = 0.0;
    for (const FactorCodes& fc : codes) cycle_delta = std::max(cycle_delta, demean_pass(fc));
    if (cycle_delta < stop) {
      out.iterations = cycle;
      out.final_delta = cycle_delta;
      return out;
    }
    out.final_delta = cycle_delta;
  }
  throw std::runtime_error("absorb: not converged after " + std::to_string(max_iterations) +
                           " cycles, last max group-mean delta " +
                           std::to_string(out.final_delta));
}

struct RegressionSpec {
  std::string outcome;
  std::vector<std::string> regressors;
  std::vector<std::string> fixed_effects;
  std::string cluster;
  double tolerance = 1e-8;
  int max_iterations = 10000;
};

struct CoefficientEstimate {
  std::string name;
  double estimate = std::numeric_limits<double>::quiet_NaN();
  double std_error = std::numeric_limits<double>::quiet_NaN();
  bool collinear = false;
};

struct FitResult {
  std::vector<CoefficientEstimate> coefficients;  // aligned with spec.regressors
  std::size_t n_used = 0;
  std::size_t singletons_dropped = 0;
  int iterations = 0;
  std::size_t n_clusters = 0;
  std::size_t dof_k = 0;  // kept regressors + (FE levels - FE dimensions)
};

namespace detail {

// Gauss-Jordan inversion of a symmetric PSD matrix with diagonal pivoting.
// Columns whose remaining pivot falls below pivot_rel times the largest
// original diagonal are flagged out (mutually collinear regressors).
struct GuardedInverse {
  std::vector<double> inv;   // k x k row-major; zeroed on dropped rows/cols
  std::vector<char> kept;
};

inline GuardedInverse invert_psd_guarded(std::vector<double> a, std::size_t k,
                                         double pivot_rel = 1e-12) {
  GuardedInverse out;
  out.kept.assign(k, 1);
  std::vector<double>& w = a;  // augment in place: w becomes inverse
  std::vector<double> inv(k * k, 0.0);
  for (std::size_t i = 0; i < k; ++i) inv[i * k + i] = 1.0;

  double max_diag = 0.0;
  for (std::size_t i = 0; i < k; ++i) max_diag = std::max(max_diag, std::fabs(w[i * k + i]));
  const double floor_pivot = (max_diag > 0.0 ? max_diag : 1.0) * pivot_rel;

  std::vector<char> done(k, 0);
  for (std::size_t step = 0; step < k; ++step) {
    std::size_t p = k;
    double best = floor_pivot;
    for (std::size_t i = 0; i < k; ++i)
      if (!done[i] && out.kept[i] && w[i * k + i] > best) {
        best = w[i * k + i];
        p = i;
      }
    if (p == k) {
      for (std::size_t i = 0; i < k; ++i)
        if (!done[i]) out.kept[i] = 0;
      break;
    }
    done[p] = 1;
    const double piv = w[p * k + p];
    for (std::size_t j = 0; j < k; ++j) {
      w[p * k + j] /= piv;
      inv[p * k + j] /= piv;
    }
    for (std::size_t i = 0; i < k; ++i) {
      if (i == p) continue;
      const double f = w[i * k + p];
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < k; ++j) {
        w[i * k + j] -= f * w[p * k + j];
        inv[i * k + j] -= f * inv[p * k + j];
      }
    }
  }
  for (std::size_t i = 0; i < k; ++i)
    if (!out.kept[i])
      for (std::size_t j = 0; j < k; ++j) inv[i * k + j] = inv[j * k + i] = 0.0;
  out.inv = std::move(inv);
  return out;
}

inline double column_variance(const std::vector<double>& v) {
  const std::size_t n = v.size();
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return ss / static_cast<double>(n);
}

inline void require_finite(const std::vector<double>& v, const std::string& name) {
  for (double x : v)
    if (!std::isfinite(x))
      throw std::invalid_argument("fit: non-finite value in column " + name);
}

}  // namespace detail

// Absorbed-FE least squares with CR1 cluster-robust standard errors.
// Regressors whose within-group variation vanishes (absorbed variance below
// 1e-10 of raw variance), or whose normal-equation pivot collapses, are
// reported with collinear = true and NaN estimates.
inline FitResult fit(const PanelFrame& frame, const RegressionSpec& spec) {
  if (spec.regressors.empty()) throw std::invalid_argument("fit: no regressors");
  if (spec.fixed_effects.empty())
    throw std::invalid_argument("fit: at least one fixed-effect dimension required");
  if (spec.cluster.empty()) throw std::invalid_argument("fit: cluster dimension required");
  if (frame.n_rows() == 0) throw std::invalid_argument("fit: empty frame");
  frame.factor(spec.cluster);  // existence checks up front
  for (const std::string& d : spec.fixed_effects) frame.factor(d);
  detail::require_finite(frame.numeric(spec.outcome), spec.outcome);
  for (const std::string& r : spec.regressors) detail::require_finite(frame.numeric(r), r);

  DropResult ds = drop_singletons(frame, spec.fixed_effects);
  const PanelFrame& f = ds.frame;
  const std::size_t n = f.n_rows();

  std::vector<std::string> cols;
  cols.push_back(spec.outcome);
  for (const std::string& r : spec.regressors) cols.push_back(r);
  AbsorbResult ab = absorb(f, spec.fixed_effects, cols, spec.tolerance, spec.max_iterations);

  const std::size_t nreg = spec.regressors.size();
  std::vector<char> collinear(nreg, 0);
  for (std::size_t j = 0; j < nreg; ++j) {
    const double raw_var = detail::column_variance(f.numeric(spec.regressors[j]));
    const double abs_var = detail::column_variance(ab.columns[j + 1]);
    if (!(raw_var > 0.0) || abs_var < 1e-10 * raw_var) collinear[j] = 1;
  }

  FitResult res;
  res.n_used = n;
  res.singletons_dropped = ds.dropped;
  res.iterations = ab.iterations;

  std::vector<std::size_t> kept;
  for (std::size_t j = 0; j < nreg; ++j)
    if (!collinear[j]) kept.push_back(j);

  std::vector<double> beta;
  detail::GuardedInverse gi;
  while (true) {
    if (kept.empty())
      throw std::runtime_error(
          "fit: no identifying variation (all regressors collinear with fixed effects)");
    const std::size_t k = kept.size();
    std::vector<double> a(k * k, 0.0), b(k, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t r = 0; r < k; ++r) {
        const double xr = ab.columns[kept[r] + 1][i];
        b[r] += xr * ab.columns[0][i];
        for (std::size_t c = r; c < k; ++c) a[r * k + c] += xr * ab.columns[kept[c] + 1][i];
      }
    }
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t c = 0; c < r; ++c) a[r * k + c] = a[c * k + r];

    gi = detail::invert_psd_guarded(std::move(a), k);
    bool all_kept = true;
    std::vector<std::size_t> survivors;
    for (std::size_t r = 0; r < k; ++r) {
      if (gi.kept[r]) {
        survivors.push_back(kept[r]);
      } else {
        collinear[kept[r]] = 1;
        all_kept = false;
      }
    }
    if (!all_kept) {
      kept = std::move(survivors);
      continue;
    }
    beta.assign(k, 0.0);
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t c = 0; c < k; ++c) beta[r] += gi.inv[r * k + c] * b[c];
    break;
  }

  const std::size_t k = kept.size();
  std::vector<double> resid(n);
  for (std::size_t i = 0; i < n; ++i) {
    double fitv = 0.0;
    for (std::size_t r = 0; r < k; ++r) fitv += beta[r] * ab.columns[kept[r] + 1][i];
    resid[i] = ab.columns[0][i] - fitv;
  }

  std::size_t fe_levels = 0;
  for (const std::string& d : spec.fixed_effects) fe_levels += encode_factor(f.factor(d)).levels.size();
  const std::size_t dof_k = k + fe_levels - spec.fixed_effects.size();
  res.dof_k = dof_k;
  if (n <= dof_k)
    throw std::runtime_error("fit: nonpositive residual degrees of freedom (n = " +
                             std::to_string(n) + ", k = " + std::to_string(dof_k) + ")");

  const FactorCodes cl = encode_factor(f.factor(spec.cluster));
  const std::size_t m = cl.levels.size();
  res.n_clusters = m;
  if (m < 2) throw std::runtime_error("fit: cluster-robust errors need at least 2 clusters");

  // meat = sum_g (X_g' u_g)(X_g' u_g)'
  std::vector<double> scores(m * k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto g = static_cast<std::size_t>(cl.codes[i]);
    for (std::size_t r = 0; r < k; ++r) scores[g * k + r] += ab.columns[kept[r] + 1][i] * resid[i];
  }
  std::vector<double> meat(k * k, 0.0);
  for (std::size_t g = 0; g < m; ++g)
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t c = 0; c < k; ++c) meat[r * k + c] += scores[g * k + r] * scores[g * k + c];

  const double nn = static_cast<double>(n);
  const double mm = static_cast<double>(m);
  const double cr1 = (mm / (mm - 1.0)) * ((nn - 1.0) / (nn - static_cast<double>(dof_k)));

  // V = cr1 * Ainv meat Ainv
  std::vector<double> tmp(k * k, 0.0);
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t c = 0; c < k; ++c) {
      double s = 0.0;
      for (std::size_t q = 0; q < k; ++q) s += gi.inv[r * k + q] * meat[q * k + c];
      tmp[r * k + c] = s;
    }
  std::vector<double> vdiag(k, 0.0);
  for (std::size_t r = 0; r < k; ++r) {
    double s = 0.0;
    for (std::size_t q = 0; q < k; ++q) s += tmp[r * k + q] * gi.inv[q * k + r];
    vdiag[r] = cr1 * s;
  }

  res.coefficients.resize(nreg);
  for (std::size_t j = 0; j < nreg; ++j) {
    res.coefficients[j].name = spec.regressors[j];
    res.coefficients[j].collinear = collinear[j] != 0;
  }
  for (std::size_t r = 0; r < k; ++r) {
    res.coefficients[kept[r]].estimate = beta[r];
    res.coefficients[kept[r]].std_error = std::sqrt(std::max(0.0, vdiag[r]));
  }
  return res;
}

struct EventTimePoint {
  std::string time;
  double effect = 0.0;
  double std_error = 0.0;
  bool reference = false;
  bool collinear = false;
};

struct EventTimeResult {
  std::vector<EventTimePoint> points;  // ordered by time level
  FitResult fit;
};

namespace detail {

inline std::vector<std::string> sorted_levels(const std::vector<std::string>& levels) {
  bool all_numeric = true;
  std::vector<std::pair<double, std::string>> keyed;
  keyed.reserve(levels.size());
  for (const std::string& s : levels) {
    double v = 0.0;
    if (!parse_number(s, v)) {
      all_numeric = false;
      break;
    }
    keyed.emplace_back(v, s);
  }
  std::vector<std::string> out = levels;
  if (all_numeric) {
    std::sort(keyed.begin(), keyed.end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = keyed[i].second;
  } else {
    std::sort(out.begin(), out.end());
  }
  return out;
}

}  // namespace detail

// Event study around spec.regressors[0] (a 0/1 treated indicator): adds a
// treated x time dummy for every level of time_dim except reference_time,
// which is pinned at zero, and reports the dummy coefficients by time.
inline EventTimeResult event_time_effects(const PanelFrame& frame, const RegressionSpec& spec,
                                          const std::string& time_dim,
                                          const std::string& reference_time) {
  if (spec.regressors.empty())
    throw std::invalid_argument("event_time_effects: spec needs a treated indicator regressor");
  const std::string& treated_name = spec.regressors.front();
  const std::vector<double>& treated = frame.numeric(treated_name);
  for (double v : treated)
    if (v != 0.0 && v != 1.0)
      throw std::invalid_argument("event_time_effects: " + treated_name + " must be 0/1");
  const std::vector<std::string>& times = frame.factor(time_dim);

  const FactorCodes tc = encode_factor(times);
  const std::vector<std::string> levels = detail::sorted_levels(tc.levels);
  if (std::find(levels.begin(), levels.end(), reference_time) == levels.end())
    throw std::invalid_argument("event_time_effects: reference time " + reference_time +
                                " not present in " + time_dim);

  PanelFrame aug = frame;
  RegressionSpec aspec = spec;
  for (const std::string& lv : levels) {
    if (lv == reference_time) continue;
    std::vector<double> col(frame.n_rows(), 0.0);
    for (std::size_t i = 0; i < col.size(); ++i)
      if (times[i] == lv) col[i] = treated[i];
    const std::string name = treated_name + "::" + lv;
    aug.add_numeric(name, std::move(col));
    aspec.regressors.push_back(name);
  }

  EventTimeResult out;
  out.fit = fit(aug, aspec);

  std::size_t di = 0;
  for (const std::string& lv : levels) {
    EventTimePoint pt;
    pt.time = lv;
    if (lv == reference_time) {
      pt.reference = true;
    } else {
      const CoefficientEstimate& ce =
          out.fit.coefficients[spec.regressors.size() + di];
      pt.effect = ce.estimate;
      pt.std_error = ce.std_error;
      pt.collinear = ce.collinear;
      ++di;
    }
    out.points.push_back(std::move(pt));
  }
  return out;
}

}  // namespace geodid
