#pragma once

// Survey-point CSV ingestion and canonical CSV emission. Input wants a
// header with id, lon, lat plus optional covered, locality, outcome,
// country, year columns; unknown columns are ignored. Output is
// comma-separated, LF-terminated, '.' decimal, via format_number, so
// reruns are byte-identical.

#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "geodid/format.hpp"
#include "geodid/geometry.hpp"

namespace geodid {

// RFC-4180-style parse: quoted fields, doubled quotes, LF or CRLF rows.
inline std::vector<std::vector<std::string>> parse_csv(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool any = false;
  int ch = 0;
  auto end_field = [&] {
    row.push_back(field);
    field.clear();
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(row);
    row.clear();
  };
  while ((ch = in.get()) != std::char_traits<char>::eof()) {
    const char c = static_cast<char>(ch);
    any = true;
    if (quoted) {
      if (c == '"') {
        if (in.peek() == '"') {
          field += '"';
          in.get();
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      if (!field.empty() && field.back() == '\r') field.pop_back();
      end_row();
      any = false;
    } else {
      field += c;
    }
  }
  if (quoted) throw std::runtime_error("csv: unterminated quoted field");
  if (any || !field.empty() || !row.empty()) end_row();
  return rows;
}

inline std::string csv_escape(const std::string& s) {
  bool need = false;
  for (char c : s)
    if (c == ',' || c == '"' || c == '\n' || c == '\r') {
      need = true;
      break;
    }
  if (!need) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline void write_csv_row(std::ostream& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out << ',';
    out << csv_escape(cells[i]);
  }
  out << '\n';
}

struct PointRecord {
  std::string id;
  GeoPoint p;
  std::optional<int> covered;           // 0/1
  std::optional<std::string> locality;  // survey cluster id
  std::optional<double> outcome;
  std::optional<std::string> country;
  std::optional<int> year;
};

struct PointTable {
  std::vector<PointRecord> rows;
  bool has_covered = false;
  bool has_locality = false;
  bool has_outcome = false;
  bool has_country = false;
  bool has_year = false;
};

namespace detail {

inline double parse_double_field(const std::string& s, const char* col, std::size_t line) {
  double v = 0.0;
  if (!parse_number(s, v))
    throw std::runtime_error("points csv: line " + std::to_string(line) +
                             ": cannot parse column " + col + " value '" + s + "'");
  return v;
}

inline int parse_int_field(const std::string& s, const char* col, std::size_t line) {
  const double v = parse_double_field(s, col, line);
  const int i = static_cast<int>(v);
  if (static_cast<double>(i) != v)
    throw std::runtime_error("points csv: line " + std::to_string(line) + ": column " + col +
                             " value '" + s + "' is not an integer");
  return i;
}

}  // namespace detail

inline PointTable read_points(std::istream& in) {
  const std::vector<std::vector<std::string>> rows = parse_csv(in);
  if (rows.empty()) throw std::runtime_error("points csv: empty file");
  const std::vector<std::string>& header = rows[0];
  int c_id = -1, c_lon = -1, c_lat = -1, c_cov = -1, c_loc = -1, c_out = -1, c_cty = -1,
      c_year = -1;
  for (std::size_t j = 0; j < header.size(); ++j) {
    const std::string& h = header[j];
    if (h == "id") c_id = static_cast<int>(j);
    else if (h == "lon") c_lon = static_cast<int>(j);
    else if (h == "lat") c_lat = static_cast<int>(j);
    else if (h == "covered") c_cov = static_cast<int>(j);
    else if (h == "locality") c_loc = static_cast<int>(j);
    else if (h == "outcome") c_out = static_cast<int>(j);
    else if (h == "country") c_cty = static_cast<int>(j);
    else if (h == "year") c_year = static_cast<int>(j);
  }
  if (c_id < 0) throw std::runtime_error("points csv: missing required column id");
  if (c_lon < 0) throw std::runtime_error("points csv: missing required column lon");
  if (c_lat < 0) throw std::runtime_error("points csv: missing required column lat");

  PointTable table;
  table.has_covered = c_cov >= 0;
  table.has_locality = c_loc >= 0;
  table.has_outcome = c_out >= 0;
  table.has_country = c_cty >= 0;
  table.has_year = c_year >= 0;

  for (std::size_t i = 1; i < rows.size(); ++i) {
    const std::vector<std::string>& r = rows[i];
    const std::size_t line = i + 1;
    if (r.size() == 1 && r[0].empty()) continue;  // trailing blank line
    if (r.size() != header.size())
      throw std::runtime_error("points csv: line " + std::to_string(line) + ": expected " +
                               std::to_string(header.size()) + " fields, got " +
                               std::to_string(r.size()));
    PointRecord rec;
    rec.id = r[static_cast<std::size_t>(c_id)];
    if (rec.id.empty())
      throw std::runtime_error("points csv: line " + std::to_string(line) + ": empty id");
    rec.p.lon = detail::parse_double_field(r[static_cast<std::size_t>(c_lon)], "lon", line);
    rec.p.lat = detail::parse_double_field(r[static_cast<std::size_t>(c_lat)], "lat", line);
    if (!valid_coordinates(rec.p))
      throw std::runtime_error("points csv: line " + std::to_string(line) +
                               ": coordinates out of range (lon " + r[static_cast<std::size_t>(c_lon)] +
                               ", lat " + r[static_cast<std::size_t>(c_lat)] + ")");
    if (c_cov >= 0 && !r[static_cast<std::size_t>(c_cov)].empty()) {
      const int cov = detail::parse_int_field(r[static_cast<std::size_t>(c_cov)], "covered", line);
      if (cov != 0 && cov != 1)
        throw std::runtime_error("points csv: line " + std::to_string(line) +
                                 ": covered must be 0 or 1");
      rec.covered = cov;
    }
    if (c_loc >= 0 && !r[static_cast<std::size_t>(c_loc)].empty())
      rec.locality = r[static_cast<std::size_t>(c_loc)];
    if (c_out >= 0 && !r[static_cast<std::size_t>(c_out)].empty())
      rec.outcome = detail::parse_double_field(r[static_cast<std::size_t>(c_out)], "outcome", line);
    if (c_cty >= 0 && !r[static_cast<std::size_t>(c_cty)].empty())
      rec.country = r[static_cast<std::size_t>(c_cty)];
    if (c_year >= 0 && !r[static_cast<std::size_t>(c_year)].empty())
      rec.year = detail::parse_int_field(r[static_cast<std::size_t>(c_year)], "year", line);
    table.rows.push_back(std::move(rec));
  }
  if (table.rows.empty()) throw std::runtime_error("points csv: no data rows");
  return table;
}

inline PointTable read_points_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("points csv: cannot open " + path);
  return read_points(in);
}

}  // namespace geodid
