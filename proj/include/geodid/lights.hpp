#pragma once

// Nighttime-light rasters: validation of 6-bit digital numbers, block-mean
// downsampling, quadratic intercalibration of satellite vintages against a
// reference year, ESRI ASCII grid import/export, and assembly of the
// cell-by-year estimation panel.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "geodid/femodel.hpp"
#include "geodid/format.hpp"
#include "geodid/zones.hpp"

namespace geodid {

// Row-major raster; row 0 is the northernmost (file order). (xll, yll) is
// the lower-left corner of the extent.
struct LightGrid {
  int ncols = 0;
  int nrows = 0;
  double xll = 0.0;
  double yll = 0.0;
  double cell_size = 0.0;
  double nodata = -9999.0;
  std::vector<double> values;
  int year = 0;
  std::string satellite;

  double value(int row, int col) const {
    return values[static_cast<std::size_t>(row) * static_cast<std::size_t>(ncols) +
                  static_cast<std::size_t>(col)];
  }
  double& at(int row, int col) {
    return values[static_cast<std::size_t>(row) * static_cast<std::size_t>(ncols) +
                  static_cast<std::size_t>(col)];
  }
  GeoPoint center(int row, int col) const {
    return {xll + (static_cast<double>(col) + 0.5) * cell_size,
            yll + (static_cast<double>(nrows - 1 - row) + 0.5) * cell_size};
  }
  bool is_nodata(double v) const { return v == nodata; }
};

inline void check_grid(const LightGrid& g) {
  if (g.ncols <= 0 || g.nrows <= 0) throw std::invalid_argument("light grid: empty dimensions");
  if (!(g.cell_size > 0.0)) throw std::invalid_argument("light grid: cell size must be positive");
  if (g.values.size() != static_cast<std::size_t>(g.ncols) * static_cast<std::size_t>(g.nrows))
    throw std::invalid_argument("light grid: value count does not match dimensions");
}

inline bool same_extent(const LightGrid& a, const LightGrid& b) {
  return a.ncols == b.ncols && a.nrows == b.nrows && a.xll == b.xll && a.yll == b.yll &&
         a.cell_size == b.cell_size;
}

struct ValidatedGrid {
  LightGrid grid;
  bool value_one_occurs = false;  // DN 1 is unused in some products; flagged for audit
};

// Digital numbers must be integers in [0, 63]. Optionally recodes 0 to 1
// (for products where unlit and dark-but-observed are conflated).
inline ValidatedGrid validate_grid(const LightGrid& g, bool recode_zero_to_one = false) {
  check_grid(g);
  ValidatedGrid out{g, false};
  for (int r = 0; r < g.nrows; ++r) {
    for (int c = 0; c < g.ncols; ++c) {
      const double v = g.value(r, c);
      if (g.is_nodata(v)) continue;
      if (!(v >= 0.0 && v <= 63.0) || v != std::floor(v))
        throw std::invalid_argument("validate_grid: value " + format_number(v) + " at row " +
                                    std::to_string(r) + " col " + std::to_string(c) +
                                    " outside digital-number range [0, 63]");
      if (v == 1.0) out.value_one_occurs = true;
      if (recode_zero_to_one && v == 0.0) out.grid.at(r, c) = 1.0;
    }
  }
  return out;
}

// Block mean over factor x factor windows; any missing value in a block
// makes the output cell missing.
inline LightGrid downsample(const LightGrid& g, int factor) {
  check_grid(g);
  if (factor < 1) throw std::invalid_argument("downsample: factor must be >= 1");
  if (g.ncols % factor != 0 || g.nrows % factor != 0)
    throw std::invalid_argument("downsample: dimensions not divisible by factor " +
                                std::to_string(factor));
  LightGrid out = g;
  out.ncols = g.ncols / factor;
  out.nrows = g.nrows / factor;
  out.cell_size = g.cell_size * factor;
  out.values.assign(static_cast<std::size_t>(out.ncols) * static_cast<std::size_t>(out.nrows),
                    g.nodata);
  for (int r = 0; r < out.nrows; ++r) {
    for (int c = 0; c < out.ncols; ++c) {
      double sum = 0.0;
      bool missing = false;
      for (int dr = 0; dr < factor && !missing; ++dr)
        for (int dc = 0; dc < factor; ++dc) {
          const double v = g.value(r * factor + dr, c * factor + dc);
          if (g.is_nodata(v)) {
            missing = true;
            break;
          }
          sum += v;
        }
      if (!missing) out.at(r, c) = sum / (static_cast<double>(factor) * factor);
    }
  }
  return out;
}

struct CalibrationFit {
  double c0 = 0.0, c1 = 1.0, c2 = 0.0;
  double rmse = 0.0;
  int target_year = 0;
  int reference_year = 0;
  std::string satellite;
};

struct IntercalibrationResult {
  CalibrationFit fit;
  LightGrid calibrated;
};

// Least-squares quadratic mapping of target digital numbers onto the
// reference grid over a stable region, applied to the whole target grid.
// Calibrated values are clamped below at zero; there is no upper clamp.
inline IntercalibrationResult intercalibrate(const LightGrid& target, const LightGrid& reference,
                                             const std::vector<std::uint8_t>& region) {
  check_grid(target);
  check_grid(reference);
  if (!same_extent(target, reference))
    throw std::invalid_argument("intercalibrate: target and reference extents differ");
  if (region.size() != target.values.size())
    throw std::invalid_argument("intercalibrate: region mask size does not match grid");

  double s[5] = {0, 0, 0, 0, 0};
  double t[3] = {0, 0, 0};
  std::vector<double> seen;
  std::size_t npairs = 0;
  for (std::size_t i = 0; i < region.size(); ++i) {
    if (!region[i]) continue;
    const double x = target.values[i];
    const double y = reference.values[i];
    if (target.is_nodata(x) || reference.is_nodata(y)) continue;
    double p = 1.0;
    for (double& sk : s) {
      sk += p;
      p *= x;
    }
    t[0] += y;
    t[1] += y * x;
    t[2] += y * x * x;
    ++npairs;
    bool found = false;
    for (double v : seen)
      if (v == x) {
        found = true;
        break;
      }
    if (!found) seen.push_back(x);
  }
  if (seen.size() < 3)
    throw std::runtime_error(
        "intercalibrate: fewer than 3 distinct digital numbers in calibration region (" +
        std::to_string(seen.size()) + " found); quadratic fit is underdetermined");

  // normal equations for [1, x, x^2], solved by Gaussian elimination with
  // partial pivoting
  double a[3][4] = {{s[0], s[1], s[2], t[0]}, {s[1], s[2], s[3], t[1]}, {s[2], s[3], s[4], t[2]}};
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int r = col + 1; r < 3; ++r)
      if (std::fabs(a[r][col]) > std::fabs(a[piv][col])) piv = r;
    if (a[piv][col] == 0.0) throw std::runtime_error("intercalibrate: singular normal equations");
    if (piv != col)
      for (int j = 0; j < 4; ++j) std::swap(a[piv][j], a[col][j]);
    for (int r = 0; r < 3; ++r) {
      if (r == col) continue;
      const double f = a[r][col] / a[col][col];
      for (int j = col; j < 4; ++j) a[r][j] -= f * a[col][j];
    }
  }

  IntercalibrationResult out;
  out.fit.c0 = a[0][3] / a[0][0];
  out.fit.c1 = a[1][3] / a[1][1];
  out.fit.c2 = a[2][3] / a[2][2];
  out.fit.target_year = target.year;
  out.fit.reference_year = reference.year;
  out.fit.satellite = target.satellite;

  double sse = 0.0;
  for (std::size_t i = 0; i < region.size(); ++i) {
    if (!region[i]) continue;
    const double x = target.values[i];
    const double y = reference.values[i];
    if (target.is_nodata(x) || reference.is_nodata(y)) continue;
    const double pred = out.fit.c0 + out.fit.c1 * x + out.fit.c2 * x * x;
    sse += (y - pred) * (y - pred);
  }
  out.fit.rmse = std::sqrt(sse / static_cast<double>(npairs));

  out.calibrated = target;
  for (double& v : out.calibrated.values) {
    if (target.is_nodata(v)) continue;
    const double w = out.fit.c0 + out.fit.c1 * v + out.fit.c2 * v * v;
    v = w < 0.0 ? 0.0 : w;
  }
  return out;
}

// --- ESRI ASCII grid import/export ---------------------------------------

inline LightGrid read_esri_grid(std::istream& in) {
  LightGrid g;
  bool saw_ncols = false, saw_nrows = false, saw_xll = false, saw_yll = false, saw_cell = false;
  std::string tok;
  double first_value = 0.0;
  bool have_first = false;
  while (in >> tok) {
    if (!tok.empty() && (std::isalpha(static_cast<unsigned char>(tok[0])) || tok[0] == '_')) {
      std::string key;
      for (char ch : tok) key += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
      double v = 0.0;
      if (!(in >> v)) throw std::runtime_error("esri grid: header key " + tok + " has no value");
      if (key == "ncols") {
        g.ncols = static_cast<int>(v);
        saw_ncols = true;
      } else if (key == "nrows") {
        g.nrows = static_cast<int>(v);
        saw_nrows = true;
      } else if (key == "xllcorner") {
        g.xll = v;
        saw_xll = true;
      } else if (key == "yllcorner") {
        g.yll = v;
        saw_yll = true;
      } else if (key == "cellsize") {
        g.cell_size = v;
        saw_cell = true;
      } else if (key == "nodata_value") {
        g.nodata = v;
      } else {
        throw std::runtime_error("esri grid: unknown header key " + tok);
      }
    } else {
      std::istringstream num(tok);
      if (!(num >> first_value) || !(num >> std::ws).eof())
        throw std::runtime_error("esri grid: unparseable token " + tok);
      have_first = true;
      break;
    }
  }
  if (!saw_ncols || !saw_nrows || !saw_xll || !saw_yll || !saw_cell)
    throw std::runtime_error("esri grid: incomplete header (need ncols, nrows, xllcorner, "
                             "yllcorner, cellsize)");
  if (g.ncols <= 0 || g.nrows <= 0 || !(g.cell_size > 0.0))
    throw std::runtime_error("esri grid: nonpositive dimensions or cell size");

  const std::size_t want = static_cast<std::size_t>(g.ncols) * static_cast<std::size_t>(g.nrows);
  g.values.reserve(want);
  if (have_first) g.values.push_back(first_value);
  while (g.values.size() < want && (in >> tok)) {
    std::istringstream num(tok);
    double v = 0.0;
    if (!(num >> v) || !(num >> std::ws).eof())
      throw std::runtime_error("esri grid: unparseable token " + tok);
    g.values.push_back(v);
  }
  if (g.values.size() != want)
    throw std::runtime_error("esri grid: expected " + std::to_string(want) + " values, got " +
                             std::to_string(g.values.size()));
  if (in >> tok) throw std::runtime_error("esri grid: trailing data after " + std::to_string(want) +
                                          " values");
  return g;
}

inline LightGrid read_esri_grid_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("esri grid: cannot open " + path);
  return read_esri_grid(in);
}

inline void write_esri_grid(const LightGrid& g, std::ostream& out) {
  check_grid(g);
  out << "ncols " << g.ncols << "\n";
  out << "nrows " << g.nrows << "\n";
  out << "xllcorner " << format_number(g.xll) << "\n";
  out << "yllcorner " << format_number(g.yll) << "\n";
  out << "cellsize " << format_number(g.cell_size) << "\n";
  out << "NODATA_value " << format_number(g.nodata) << "\n";
  for (int r = 0; r < g.nrows; ++r) {
    for (int c = 0; c < g.ncols; ++c) {
      if (c) out << ' ';
      out << format_number(g.value(r, c));
    }
    out << '\n';
  }
}

inline void write_esri_grid_file(const LightGrid& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("esri grid: cannot write " + path);
  write_esri_grid(g, out);
}

// --- estimation panel ------------------------------------------------------

namespace light_panel {
inline constexpr const char* kOutcome = "asinh_light";
inline constexpr const char* kTreated = "treated";
inline constexpr const char* kPost = "post";
inline constexpr const char* kTreatedPost = "treated_post";
inline constexpr const char* kCountryYear = "country_year";
inline constexpr const char* kCellTreated = "cell_treated";
inline constexpr const char* kCell = "cell";
inline constexpr const char* kYear = "year";
inline constexpr const char* kCountry = "country";
}  // namespace light_panel

struct LightPanelSpec {
  ZoneSpec zone;
  GridSpec cells;
  // country -> electrification years; post = 1{year >= any of them}, capped at 1
  std::map<std::string, std::vector<int>> connection_years;
};

// One row per lit cell and year: outcome asinh(DN), treated x post regressor,
// country-by-year and cell-by-treated fixed effects, clustered on cell.
inline PanelFrame build_light_panel(const std::vector<LightGrid>& grids,
                                    const Infrastructure& infra, const LightPanelSpec& spec,
                                    const std::vector<std::string>& country_by_cell) {
  if (grids.empty()) throw std::invalid_argument("light panel: no grids");
  for (const LightGrid& g : grids) check_grid(g);
  for (std::size_t i = 1; i < grids.size(); ++i)
    if (!same_extent(grids[i], grids[0]))
      throw std::invalid_argument("light panel: grid extents differ across years");
  const LightGrid& g0 = grids[0];
  const std::size_t ncells =
      static_cast<std::size_t>(g0.ncols) * static_cast<std::size_t>(g0.nrows);
  if (country_by_cell.size() != ncells)
    throw std::invalid_argument("light panel: country map size does not match grid");
  validate(spec.zone);

  struct CellInfo {
    bool used = false;
    double treated = 0.0;
    std::string label;
  };
  std::vector<CellInfo> info(ncells);
  for (int r = 0; r < g0.nrows; ++r) {
    for (int c = 0; c < g0.ncols; ++c) {
      const std::size_t i =
          static_cast<std::size_t>(r) * static_cast<std::size_t>(g0.ncols) + c;
      if (country_by_cell[i].empty()) continue;
      const GeoPoint p = g0.center(r, c);
      const double d = infrastructure_distance(p, infra, spec.zone.metric);
      const ZoneStatus st = status_for_distance(d, spec.zone);
      if (st == ZoneStatus::Excluded) continue;
      info[i].used = true;
      info[i].treated = st == ZoneStatus::Treated ? 1.0 : 0.0;
      info[i].label = grid_cell_label(grid_cell(p, spec.cells));
    }
  }

  std::vector<double> v_out, v_treated, v_post, v_tp;
  std::vector<std::string> f_cy, f_ct, f_cell, f_year, f_country;
  for (const LightGrid& g : grids) {
    const std::string year_s = std::to_string(g.year);
    for (std::size_t i = 0; i < ncells; ++i) {
      if (!info[i].used) continue;
      const double dn = g.values[i];
      if (g.is_nodata(dn)) continue;
      const std::string& country = country_by_cell[i];
      auto it = spec.connection_years.find(country);
      if (it == spec.connection_years.end())
        throw std::runtime_error("light panel: no connection year for country " + country);
      int hits = 0;
      for (int cy : it->second)
        if (g.year >= cy) ++hits;
      const double post = hits > 0 ? 1.0 : 0.0;
      v_out.push_back(asinh_transform(dn));
      v_treated.push_back(info[i].treated);
      v_post.push_back(post);
      v_tp.push_back(info[i].treated * post);
      f_cy.push_back(country + "|" + year_s);
      f_ct.push_back(info[i].label + "|" + (info[i].treated > 0.0 ? "1" : "0"));
      f_cell.push_back(info[i].label);
      f_year.push_back(year_s);
      f_country.push_back(country);
    }
  }
  if (v_out.empty()) throw std::runtime_error("light panel: no usable cell-year rows");

  PanelFrame frame;
  frame.add_numeric(light_panel::kOutcome, std::move(v_out));
  frame.add_numeric(light_panel::kTreated, std::move(v_treated));
  frame.add_numeric(light_panel::kPost, std::move(v_post));
  frame.add_numeric(light_panel::kTreatedPost, std::move(v_tp));
  frame.add_factor(light_panel::kCountryYear, std::move(f_cy));
  frame.add_factor(light_panel::kCellTreated, std::move(f_ct));
  frame.add_factor(light_panel::kCell, std::move(f_cell));
  frame.add_factor(light_panel::kYear, std::move(f_year));
  frame.add_factor(light_panel::kCountry, std::move(f_country));
  return frame;
}

}  // namespace geodid
