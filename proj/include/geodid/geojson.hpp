#pragma once

// GeoJSON ingestion of infrastructure referents. A FeatureCollection of
// LineString/MultiLineString features becomes a polyline set; Point or
// MultiPoint features become a node set; mixing the two kinds is rejected.
// Exact consecutive duplicate vertices are collapsed.

#include <fstream>
#include <istream>
#include <stdexcept>
#include <string>
#include <vector>

#include "geodid/zones.hpp"
#include "json.hpp"

namespace geodid {

namespace detail {

inline GeoPoint json_position(const nlohmann::json& pos, std::size_t feature) {
  if (!pos.is_array() || pos.size() < 2 || !pos[0].is_number() || !pos[1].is_number())
    throw std::runtime_error("geojson: feature " + std::to_string(feature) +
                             ": malformed coordinate position");
  GeoPoint p{pos[0].get<double>(), pos[1].get<double>()};
  if (!valid_coordinates(p))
    throw std::runtime_error("geojson: feature " + std::to_string(feature) +
                             ": coordinates out of range");
  return p;
}

inline Polyline json_linestring(const nlohmann::json& coords, std::size_t feature) {
  if (!coords.is_array() || coords.size() < 2)
    throw std::runtime_error("geojson: feature " + std::to_string(feature) +
                             ": line needs at least 2 positions");
  Polyline line;
  for (const auto& pos : coords) {
    const GeoPoint p = json_position(pos, feature);
    if (!line.vertices.empty() && line.vertices.back() == p) continue;  // collapse duplicates
    line.vertices.push_back(p);
  }
  if (line.vertices.size() < 2)
    throw std::runtime_error("geojson: feature " + std::to_string(feature) +
                             ": line collapses to a single point");
  return line;
}

}  // namespace detail

inline Infrastructure read_geojson_infrastructure(std::istream& in) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("geojson: ") + e.what());
  }
  if (!root.is_object() || root.value("type", "") != "FeatureCollection" ||
      !root.contains("features") || !root["features"].is_array())
    throw std::runtime_error("geojson: expected a FeatureCollection with a features array");

  std::vector<Polyline> lines;
  NodeSet nodes;
  bool year_set = false;
  if (root.contains("year") && root["year"].is_number_integer()) {
    nodes.year = root["year"].get<int>();
    year_set = true;
  }

  const auto& features = root["features"];
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& feat = features[i];
    if (!feat.is_object() || !feat.contains("geometry") || feat["geometry"].is_null())
      throw std::runtime_error("geojson: feature " + std::to_string(i) + " has no geometry");
    const auto& geom = feat["geometry"];
    const std::string type = geom.value("type", "");
    if (!geom.contains("coordinates"))
      throw std::runtime_error("geojson: feature " + std::to_string(i) + " has no coordinates");
    const auto& coords = geom["coordinates"];

    if (type == "LineString") {
      lines.push_back(detail::json_linestring(coords, i));
    } else if (type == "MultiLineString") {
      if (!coords.is_array() || coords.empty())
        throw std::runtime_error("geojson: feature " + std::to_string(i) +
                                 ": empty MultiLineString");
      for (const auto& part : coords) lines.push_back(detail::json_linestring(part, i));
    } else if (type == "Point") {
      nodes.nodes.push_back(detail::json_position(coords, i));
    } else if (type == "MultiPoint") {
      if (!coords.is_array() || coords.empty())
        throw std::runtime_error("geojson: feature " + std::to_string(i) + ": empty MultiPoint");
      for (const auto& pos : coords) nodes.nodes.push_back(detail::json_position(pos, i));
    } else {
      throw std::runtime_error("geojson: feature " + std::to_string(i) +
                               ": unsupported geometry type '" + type + "'");
    }
    if (!year_set && feat.contains("properties") && feat["properties"].is_object() &&
        feat["properties"].contains("year") && feat["properties"]["year"].is_number_integer()) {
      nodes.year = feat["properties"]["year"].get<int>();
      year_set = true;
    }
  }

  if (!lines.empty() && !nodes.nodes.empty())
    throw std::runtime_error("geojson: mixed line and point features are not supported");
  if (lines.empty() && nodes.nodes.empty())
    throw std::runtime_error("geojson: no usable features");
  if (!lines.empty()) return Infrastructure{std::move(lines)};
  return Infrastructure{std::move(nodes)};
}

inline Infrastructure read_geojson_infrastructure_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("geojson: cannot open " + path);
  return read_geojson_infrastructure(in);
}

}  // namespace geodid
