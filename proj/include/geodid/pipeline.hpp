#pragma once

// Config-driven pipeline: one JSON file names the inputs (points CSV,
// GeoJSON infrastructure, light rasters) and the tasks to run; each task
// writes CSV tables under the output directory and a summary.txt records
// provenance (config hash, seed) plus per-task status. A failing task is
// recorded and does not stop the others. Outputs carry no timestamps, so
// a rerun with the same config and inputs is byte-identical.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "geodid/csv.hpp"
#include "geodid/femodel.hpp"
#include "geodid/fidelity.hpp"
#include "geodid/format.hpp"
#include "geodid/geojson.hpp"
#include "geodid/geometry.hpp"
#include "geodid/lights.hpp"
#include "geodid/mesim.hpp"
#include "geodid/meta.hpp"
#include "geodid/zones.hpp"
#include "json.hpp"

namespace geodid {

// Errors in the config file itself (as opposed to task execution).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

inline std::string fnv1a64_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

struct GridInput {
  std::string path;
  int year = 0;
  std::string satellite;
};

struct NamedZone {
  std::string name;
  ZoneSpec zone;
};

struct ClassifyTask {
  std::vector<NamedZone> zones;
  double jitter_km = 0.0;  // optional coordinate perturbation before classifying
};

struct CompareTask {
  NamedZone a;
  NamedZone b;
};

struct FidelityTask {
  ZoneSpec zone;
};

struct PanelTask {
  ZoneSpec zone;
  double cell_size = 0.1;
  std::map<std::string, std::vector<int>> events;  // country -> connection years
};

struct EventTask {
  PanelTask panel;
  std::string reference_time;
};

struct MetaTask {
  std::vector<StudyEstimate> studies;
};

struct LightsTask {
  int reference_year = 0;
  int downsample_factor = 1;
  bool recode_zero = false;
  bool write_calibrated = false;
  std::optional<PanelTask> did;
};

struct MesimTask {
  MeSimConfig base;
  bool seed_from_task = false;
  std::vector<double> radii;  // empty: single run at base.radius
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::string points_path;
  std::string infra_path;
  std::string region_mask_path;
  std::string countries_path;
  std::vector<GridInput> grids;
  std::optional<ClassifyTask> classify_task;
  std::optional<CompareTask> compare_task;
  std::optional<FidelityTask> fidelity_task;
  std::optional<PanelTask> did_task;
  std::optional<EventTask> event_task;
  std::optional<MetaTask> meta_task;
  std::optional<LightsTask> lights_task;
  std::optional<MesimTask> mesim_task;
  std::string raw;  // config file bytes, hashed for provenance
};

namespace cfgdetail {

using nlohmann::json;

inline const json& require(const json& j, const char* key, const std::string& ctx) {
  if (!j.is_object() || !j.contains(key))
    throw ConfigError("config: " + ctx + ": missing key '" + key + "'");
  return j.at(key);
}

inline double number(const json& j, const char* key, const std::string& ctx) {
  const json& v = require(j, key, ctx);
  if (!v.is_number()) throw ConfigError("config: " + ctx + ": '" + key + "' must be a number");
  return v.get<double>();
}

inline std::string text(const json& j, const char* key, const std::string& ctx) {
  const json& v = require(j, key, ctx);
  if (!v.is_string()) throw ConfigError("config: " + ctx + ": '" + key + "' must be a string");
  return v.get<std::string>();
}

inline ZoneSpec parse_zone(const json& j, const std::string& ctx) {
  ZoneSpec z;
  z.treat_radius = number(j, "treat_radius", ctx);
  z.control_radius = number(j, "control_radius", ctx);
  if (j.contains("referent")) {
    const std::string r = j.at("referent").get<std::string>();
    if (r == "lines") z.referent = Referent::Lines;
    else if (r == "nodes") z.referent = Referent::Nodes;
    else throw ConfigError("config: " + ctx + ": unknown referent '" + r + "'");
  }
  if (j.contains("metric")) {
    const std::string m = j.at("metric").get<std::string>();
    if (m == "planar_degrees") z.metric = DistanceMetric::PlanarDegrees;
    else if (m == "great_circle_km") z.metric = DistanceMetric::GreatCircleKm;
    else throw ConfigError("config: " + ctx + ": unknown metric '" + m + "'");
  }
  try {
    validate(z);
  } catch (const std::exception& e) {
    throw ConfigError("config: " + ctx + ": " + e.what());
  }
  return z;
}

inline std::map<std::string, std::vector<int>> parse_events(const json& j,
                                                            const std::string& ctx) {
  const json& ev = require(j, "events", ctx);
  if (!ev.is_object()) throw ConfigError("config: " + ctx + ": 'events' must be an object");
  std::map<std::string, std::vector<int>> out;
  for (auto it = ev.begin(); it != ev.end(); ++it) {
    std::vector<int> years;
    if (it.value().is_number_integer()) {
      years.push_back(it.value().get<int>());
    } else if (it.value().is_array()) {
      for (const auto& y : it.value()) {
        if (!y.is_number_integer())
          throw ConfigError("config: " + ctx + ": event years must be integers");
        years.push_back(y.get<int>());
      }
    } else {
      throw ConfigError("config: " + ctx + ": events values must be year or year array");
    }
    if (years.empty())
      throw ConfigError("config: " + ctx + ": country " + it.key() + " has no event years");
    out[it.key()] = std::move(years);
  }
  if (out.empty()) throw ConfigError("config: " + ctx + ": events is empty");
  return out;
}

inline PanelTask parse_panel(const json& j, const std::string& ctx) {
  PanelTask t;
  t.zone = parse_zone(require(j, "zone", ctx), ctx + ".zone");
  if (j.contains("cell_size")) t.cell_size = number(j, "cell_size", ctx);
  if (!(t.cell_size > 0.0)) throw ConfigError("config: " + ctx + ": cell_size must be positive");
  t.events = parse_events(j, ctx);
  return t;
}

inline DistributionSpec parse_distribution(const json& j, const std::string& ctx) {
  const std::string kind = text(j, "kind", ctx);
  DistributionSpec d;
  if (kind == "normal") {
    d = DistributionSpec::normal(number(j, "mean", ctx), number(j, "sd", ctx));
  } else if (kind == "uniform") {
    d = DistributionSpec::uniform(number(j, "lo", ctx), number(j, "hi", ctx));
  } else if (kind == "point_mass") {
    d = DistributionSpec::point_mass(number(j, "value", ctx));
  } else {
    throw ConfigError("config: " + ctx + ": unknown distribution kind '" + kind + "'");
  }
  try {
    validate(d);
  } catch (const std::exception& e) {
    throw ConfigError("config: " + ctx + ": " + e.what());
  }
  return d;
}

inline OutcomeFunction parse_trend(const json& j, const std::string& ctx) {
  OutcomeFunction f;
  const std::string kind = text(j, "kind", ctx);
  if (kind == "gaussian") f.kind = OutcomeFunction::Kind::Gaussian;
  else if (kind == "quadratic") f.kind = OutcomeFunction::Kind::Quadratic;
  else if (kind == "cosine") f.kind = OutcomeFunction::Kind::Cosine;
  else throw ConfigError("config: " + ctx + ": unknown trend kind '" + kind + "'");
  if (j.contains("amplitude")) f.amplitude = number(j, "amplitude", ctx);
  if (j.contains("scale")) f.scale = number(j, "scale", ctx);
  try {
    validate(f);
  } catch (const std::exception& e) {
    throw ConfigError("config: " + ctx + ": " + e.what());
  }
  return f;
}

inline std::string time_label(const json& v, const std::string& ctx) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  throw ConfigError("config: " + ctx + ": reference_time must be a string or integer");
}

}  // namespace cfgdetail

inline PipelineConfig parse_config_text(const std::string& text) {
  using nlohmann::json;
  PipelineConfig cfg;
  cfg.raw = text;
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config: top level must be an object");

  if (root.contains("seed")) {
    if (!root["seed"].is_number_integer() || root["seed"].get<long long>() < 0)
      throw ConfigError("config: seed must be a nonnegative integer");
    cfg.seed = root["seed"].get<std::uint64_t>();
  }
  if (root.contains("output_dir")) cfg.output_dir = root["output_dir"].get<std::string>();

  if (root.contains("inputs")) {
    const json& in = root["inputs"];
    if (!in.is_object()) throw ConfigError("config: inputs must be an object");
    if (in.contains("points")) cfg.points_path = in["points"].get<std::string>();
    if (in.contains("infrastructure")) cfg.infra_path = in["infrastructure"].get<std::string>();
    if (in.contains("region_mask")) cfg.region_mask_path = in["region_mask"].get<std::string>();
    if (in.contains("countries")) cfg.countries_path = in["countries"].get<std::string>();
    if (in.contains("grids")) {
      if (!in["grids"].is_array()) throw ConfigError("config: inputs.grids must be an array");
      for (const auto& g : in["grids"]) {
        GridInput gi;
        gi.path = cfgdetail::text(g, "path", "inputs.grids");
        gi.year = static_cast<int>(cfgdetail::number(g, "year", "inputs.grids"));
        if (g.contains("satellite")) gi.satellite = g["satellite"].get<std::string>();
        cfg.grids.push_back(std::move(gi));
      }
    }
  }

  if (!root.contains("tasks")) throw ConfigError("config: no tasks configured");
  const json& tasks = root["tasks"];
  if (!tasks.is_object() || tasks.empty()) throw ConfigError("config: no tasks configured");

  for (auto it = tasks.begin(); it != tasks.end(); ++it) {
    const std::string& name = it.key();
    const json& t = it.value();
    if (name == "classify") {
      ClassifyTask task;
      const json& zones = cfgdetail::require(t, "zones", "tasks.classify");
      if (!zones.is_array() || zones.empty())
        throw ConfigError("config: tasks.classify.zones must be a nonempty array");
      for (std::size_t i = 0; i < zones.size(); ++i) {
        NamedZone nz;
        nz.name = zones[i].contains("name") ? zones[i]["name"].get<std::string>()
                                            : "zone" + std::to_string(i);
        nz.zone = cfgdetail::parse_zone(zones[i], "tasks.classify.zones[" + std::to_string(i) + "]");
        task.zones.push_back(std::move(nz));
      }
      if (t.contains("jitter_km")) {
        task.jitter_km = t["jitter_km"].get<double>();
        if (!(task.jitter_km >= 0.0))
          throw ConfigError("config: tasks.classify.jitter_km must be nonnegative");
      }
      cfg.classify_task = std::move(task);
    } else if (name == "compare") {
      CompareTask task;
      task.a.zone = cfgdetail::parse_zone(cfgdetail::require(t, "zone_a", "tasks.compare"),
                                          "tasks.compare.zone_a");
      task.b.zone = cfgdetail::parse_zone(cfgdetail::require(t, "zone_b", "tasks.compare"),
                                          "tasks.compare.zone_b");
      task.a.name = t.contains("name_a") ? t["name_a"].get<std::string>() : "a";
      task.b.name = t.contains("name_b") ? t["name_b"].get<std::string>() : "b";
      cfg.compare_task = std::move(task);
    } else if (name == "fidelity") {
      FidelityTask task;
      task.zone = cfgdetail::parse_zone(cfgdetail::require(t, "zone", "tasks.fidelity"),
                                        "tasks.fidelity.zone");
      cfg.fidelity_task = std::move(task);
    } else if (name == "did") {
      cfg.did_task = cfgdetail::parse_panel(t, "tasks.did");
    } else if (name == "event") {
      EventTask task;
      task.panel = cfgdetail::parse_panel(t, "tasks.event");
      task.reference_time =
          cfgdetail::time_label(cfgdetail::require(t, "reference_time", "tasks.event"),
                                "tasks.event");
      cfg.event_task = std::move(task);
    } else if (name == "meta") {
      MetaTask task;
      const json& studies = cfgdetail::require(t, "studies", "tasks.meta");
      if (!studies.is_array() || studies.empty())
        throw ConfigError("config: tasks.meta.studies must be a nonempty array");
      for (std::size_t i = 0; i < studies.size(); ++i) {
        const std::string ctx = "tasks.meta.studies[" + std::to_string(i) + "]";
        StudyEstimate s;
        s.label = studies[i].contains("label") ? studies[i]["label"].get<std::string>()
                                               : "study" + std::to_string(i);
        s.estimate = cfgdetail::number(studies[i], "estimate", ctx);
        s.se = cfgdetail::number(studies[i], "se", ctx);
        task.studies.push_back(std::move(s));
      }
      cfg.meta_task = std::move(task);
    } else if (name == "lights") {
      LightsTask task;
      task.reference_year =
          static_cast<int>(cfgdetail::number(t, "reference_year", "tasks.lights"));
      if (t.contains("downsample")) {
        task.downsample_factor = t["downsample"].get<int>();
        if (task.downsample_factor < 1)
          throw ConfigError("config: tasks.lights.downsample must be >= 1");
      }
      if (t.contains("recode_zero")) task.recode_zero = t["recode_zero"].get<bool>();
      if (t.contains("write_calibrated"))
        task.write_calibrated = t["write_calibrated"].get<bool>();
      if (t.contains("did")) task.did = cfgdetail::parse_panel(t["did"], "tasks.lights.did");
      cfg.lights_task = std::move(task);
    } else if (name == "mesim") {
      MesimTask task;
      MeSimConfig& m = task.base;
      if (t.contains("n")) {
        if (!t["n"].is_number_integer() || t["n"].get<long long>() < 2)
          throw ConfigError("config: tasks.mesim.n must be an integer >= 2");
        m.n = t["n"].get<std::size_t>();
      }
      if (t.contains("seed")) {
        if (!t["seed"].is_number_integer() || t["seed"].get<long long>() < 0)
          throw ConfigError("config: tasks.mesim.seed must be a nonnegative integer");
        m.seed = t["seed"].get<std::uint64_t>();
        task.seed_from_task = true;
      }
      if (t.contains("radius")) m.radius = cfgdetail::number(t, "radius", "tasks.mesim");
      if (t.contains("radii")) {
        if (!t["radii"].is_array()) throw ConfigError("config: tasks.mesim.radii must be an array");
        for (const auto& r : t["radii"]) {
          if (!r.is_number()) throw ConfigError("config: tasks.mesim.radii must hold numbers");
          task.radii.push_back(r.get<double>());
        }
      }
      if (t.contains("true_distance"))
        m.true_distance = cfgdetail::parse_distribution(t["true_distance"],
                                                        "tasks.mesim.true_distance");
      if (t.contains("location_noise"))
        m.location_noise = cfgdetail::parse_distribution(t["location_noise"],
                                                         "tasks.mesim.location_noise");
      if (t.contains("outcome_noise"))
        m.outcome_noise = cfgdetail::parse_distribution(t["outcome_noise"],
                                                        "tasks.mesim.outcome_noise");
      if (t.contains("trend")) m.trend = cfgdetail::parse_trend(t["trend"], "tasks.mesim.trend");
      if (t.contains("endogeneity")) m.endogeneity = t["endogeneity"].get<double>();
      if (t.contains("endogeneity_width"))
        m.endogeneity_width = t["endogeneity_width"].get<double>();
      cfg.mesim_task = std::move(task);
    } else {
      throw ConfigError("config: unknown task '" + name + "'");
    }
  }
  return cfg;
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

struct TaskOutcome {
  std::string task;
  bool ok = false;
  std::string message;
  std::vector<std::string> outputs;  // file names under the output directory
};

struct RunReport {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<TaskOutcome> tasks;
  bool all_ok() const {
    for (const TaskOutcome& t : tasks)
      if (!t.ok) return false;
    return !tasks.empty();
  }
};

inline std::string summary_text(const RunReport& r) {
  std::ostringstream out;
  out << "config_hash " << r.config_hash << "\n";
  out << "seed " << r.seed << "\n";
  for (const TaskOutcome& t : r.tasks) {
    out << (t.ok ? "[ok] " : "[failed] ") << t.task << ": " << t.message;
    if (!t.outputs.empty()) {
      out << " ->";
      for (const std::string& f : t.outputs) out << ' ' << f;
    }
    out << "\n";
  }
  return out.str();
}

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)) {}

  // which: task names to run; empty means every configured task, in the
  // fixed order classify, compare, fidelity, did, event, meta, lights, mesim.
  RunReport run(const std::vector<std::string>& which = {}) {
    out_dir_ = cfg_.output_dir.empty() ? "." : cfg_.output_dir;
    std::error_code ec;
    std::filesystem::create_directories(out_dir_, ec);
    if (ec) throw ConfigError("config: cannot create output directory " + out_dir_.string());

    RunReport report;
    report.config_hash = fnv1a64_hex(cfg_.raw);
    report.seed = cfg_.seed;

    std::vector<std::string> order =
        which.empty() ? configured_tasks() : which;
    if (order.empty()) throw ConfigError("config: no tasks configured");
    for (const std::string& name : order) {
      if (!is_configured(name))
        throw ConfigError("config: task '" + name + "' is not configured");
      TaskOutcome outcome;
      outcome.task = name;
      try {
        run_task(name, outcome);
        outcome.ok = true;
      } catch (const std::exception& e) {
        outcome.ok = false;
        outcome.message = e.what();
        outcome.outputs.clear();
      }
      report.tasks.push_back(std::move(outcome));
    }

    std::ofstream sum(out_dir_ / "summary.txt", std::ios::binary);
    if (!sum) throw ConfigError("config: cannot write summary under " + out_dir_.string());
    sum << summary_text(report);
    return report;
  }

  static const std::vector<std::string>& task_names() {
    static const std::vector<std::string> names = {"classify", "compare", "fidelity", "did",
                                                   "event",    "meta",    "lights",   "mesim"};
    return names;
  }

 private:
  std::vector<std::string> configured_tasks() const {
    std::vector<std::string> out;
    for (const std::string& n : task_names())
      if (is_configured(n)) out.push_back(n);
    return out;
  }

  bool is_configured(const std::string& name) const {
    if (name == "classify") return cfg_.classify_task.has_value();
    if (name == "compare") return cfg_.compare_task.has_value();
    if (name == "fidelity") return cfg_.fidelity_task.has_value();
    if (name == "did") return cfg_.did_task.has_value();
    if (name == "event") return cfg_.event_task.has_value();
    if (name == "meta") return cfg_.meta_task.has_value();
    if (name == "lights") return cfg_.lights_task.has_value();
    if (name == "mesim") return cfg_.mesim_task.has_value();
    return false;
  }

  void run_task(const std::string& name, TaskOutcome& outcome) {
    if (name == "classify") run_classify(outcome);
    else if (name == "compare") run_compare(outcome);
    else if (name == "fidelity") run_fidelity(outcome);
    else if (name == "did") run_did(outcome);
    else if (name == "event") run_event(outcome);
    else if (name == "meta") run_meta(outcome);
    else if (name == "lights") run_lights(outcome);
    else if (name == "mesim") run_mesim(outcome);
  }

  // --- lazy inputs ---------------------------------------------------------

  const PointTable& points() {
    if (!points_) {
      if (cfg_.points_path.empty())
        throw std::runtime_error("no points input configured (inputs.points)");
      points_ = read_points_file(cfg_.points_path);
    }
    return *points_;
  }

  const Infrastructure& infra() {
    if (!infra_) {
      if (cfg_.infra_path.empty())
        throw std::runtime_error("no infrastructure input configured (inputs.infrastructure)");
      infra_ = read_geojson_infrastructure_file(cfg_.infra_path);
    }
    return *infra_;
  }

  std::vector<GeoPoint> point_coords() {
    std::vector<GeoPoint> out;
    out.reserve(points().rows.size());
    for (const PointRecord& r : points().rows) out.push_back(r.p);
    return out;
  }

  std::ofstream open_output(const std::string& file, TaskOutcome& outcome) {
    std::ofstream out(out_dir_ / file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write output file " + file);
    outcome.outputs.push_back(file);
    return out;
  }

  // --- tasks ---------------------------------------------------------------

  void run_classify(TaskOutcome& outcome) {
    const ClassifyTask& task = *cfg_.classify_task;
    std::vector<GeoPoint> pts = point_coords();
    if (task.jitter_km > 0.0) {
      JitterSampler sampler({task.jitter_km, cfg_.seed});
      for (GeoPoint& p : pts) p = sampler(p);
    }
    std::ofstream out = open_output("classify.csv", outcome);
    write_csv_row(out, {"zone", "id", "lon", "lat", "distance", "status"});
    for (const NamedZone& nz : task.zones) {
      const std::vector<Assignment> asg = classify(pts, infra(), nz.zone);
      for (std::size_t i = 0; i < pts.size(); ++i)
        write_csv_row(out, {nz.name, points().rows[i].id, format_number(pts[i].lon),
                            format_number(pts[i].lat), format_number(asg[i].distance),
                            to_string(asg[i].status)});
    }
    outcome.message = std::to_string(task.zones.size()) + " zone spec(s) over " +
                      std::to_string(pts.size()) + " points" +
                      (task.jitter_km > 0.0
                           ? " (jittered up to " + format_number(task.jitter_km) + " km)"
                           : "");
  }

  void run_compare(TaskOutcome& outcome) {
    const CompareTask& task = *cfg_.compare_task;
    const std::vector<GeoPoint> pts = point_coords();
    const std::vector<Assignment> asg_a = classify(pts, infra(), task.a.zone);
    const std::vector<Assignment> asg_b = classify(pts, infra(), task.b.zone);
    const ClassificationComparison cmp = compare_classifications(asg_a, asg_b);
    std::ofstream out = open_output("compare.csv", outcome);
    write_csv_row(out, {"status_" + task.a.name, "status_" + task.b.name, "count", "share"});
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        write_csv_row(out, {to_string(static_cast<ZoneStatus>(i)),
                            to_string(static_cast<ZoneStatus>(j)),
                            std::to_string(cmp.counts[static_cast<std::size_t>(i)]
                                                     [static_cast<std::size_t>(j)]),
                            format_number(static_cast<double>(
                                              cmp.counts[static_cast<std::size_t>(i)]
                                                        [static_cast<std::size_t>(j)]) /
                                          static_cast<double>(cmp.n))});
    std::ostringstream msg;
    msg << "agreement rate " << format_number(cmp.agreement_rate) << " over " << cmp.n
        << " points";
    outcome.message = msg.str();
  }

  void run_fidelity(TaskOutcome& outcome) {
    const FidelityTask& task = *cfg_.fidelity_task;
    const PointTable& tbl = points();
    if (!tbl.has_covered)
      throw std::runtime_error("fidelity needs a covered column in the points input");
    if (!tbl.has_locality)
      throw std::runtime_error("fidelity needs a locality column in the points input");
    std::vector<int> covered;
    std::vector<std::string> locality;
    covered.reserve(tbl.rows.size());
    for (const PointRecord& r : tbl.rows) {
      if (!r.covered) throw std::runtime_error("point " + r.id + " is missing covered");
      if (!r.locality) throw std::runtime_error("point " + r.id + " is missing locality");
      covered.push_back(*r.covered);
      locality.push_back(*r.locality);
    }
    const std::vector<Assignment> asg = classify(point_coords(), infra(), task.zone);
    const FidelityResult res = fidelity_test(covered, asg, locality);
    std::ofstream out = open_output("fidelity.csv", outcome);
    write_csv_row(out, {"treated_rate", "control_rate", "treated_n", "control_n", "estimate",
                        "std_error", "t_stat", "n_clusters"});
    write_csv_row(out, {format_number(res.treated_rate), format_number(res.control_rate),
                        std::to_string(res.treated_n), std::to_string(res.control_n),
                        format_number(res.estimate), format_number(res.std_error),
                        format_number(res.t_stat), std::to_string(res.n_clusters)});
    outcome.message = describe(res);
  }

  PanelFrame survey_panel(const PanelTask& task) {
    const PointTable& tbl = points();
    if (!tbl.has_outcome || !tbl.has_country || !tbl.has_year)
      throw std::runtime_error("panel needs outcome, country and year columns in the points input");
    const std::vector<Assignment> asg = classify(point_coords(), infra(), task.zone);
    const GridSpec cells{task.cell_size};

    std::vector<double> v_out, v_treated, v_post, v_tp;
    std::vector<std::string> f_cy, f_ct, f_cell, f_year, f_country;
    for (std::size_t i = 0; i < tbl.rows.size(); ++i) {
      const PointRecord& r = tbl.rows[i];
      if (asg[i].status == ZoneStatus::Excluded) continue;
      if (!r.outcome) throw std::runtime_error("point " + r.id + " is missing outcome");
      if (!r.country) throw std::runtime_error("point " + r.id + " is missing country");
      if (!r.year) throw std::runtime_error("point " + r.id + " is missing year");
      auto it = task.events.find(*r.country);
      if (it == task.events.end())
        throw std::runtime_error("no connection year configured for country " + *r.country);
      int hits = 0;
      for (int cy : it->second)
        if (*r.year >= cy) ++hits;
      const double treated = asg[i].status == ZoneStatus::Treated ? 1.0 : 0.0;
      const double post = hits > 0 ? 1.0 : 0.0;
      const std::string cell = grid_cell_label(grid_cell(r.p, cells));
      const std::string year_s = std::to_string(*r.year);
      v_out.push_back(*r.outcome);
      v_treated.push_back(treated);
      v_post.push_back(post);
      v_tp.push_back(treated * post);
      f_cy.push_back(*r.country + "|" + year_s);
      f_ct.push_back(cell + "|" + (treated > 0.0 ? "1" : "0"));
      f_cell.push_back(cell);
      f_year.push_back(year_s);
      f_country.push_back(*r.country);
    }
    if (v_out.empty()) throw std::runtime_error("panel: no points inside the control radius");

    PanelFrame frame;
    frame.add_numeric("outcome", std::move(v_out));
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

  static RegressionSpec did_spec(const std::string& outcome) {
    RegressionSpec spec;
    spec.outcome = outcome;
    spec.regressors = {light_panel::kTreatedPost};
    spec.fixed_effects = {light_panel::kCountryYear, light_panel::kCellTreated};
    spec.cluster = light_panel::kCell;
    return spec;
  }

  void write_fit_csv(std::ofstream& out, const FitResult& res) {
    write_csv_row(out, {"term", "estimate", "std_error", "collinear", "n_used",
                        "singletons_dropped", "n_clusters", "iterations"});
    for (const CoefficientEstimate& ce : res.coefficients)
      write_csv_row(out, {ce.name, format_number(ce.estimate), format_number(ce.std_error),
                          ce.collinear ? "1" : "0", std::to_string(res.n_used),
                          std::to_string(res.singletons_dropped), std::to_string(res.n_clusters),
                          std::to_string(res.iterations)});
  }

  static std::string fit_message(const FitResult& res) {
    std::ostringstream msg;
    bool first = true;
    for (const CoefficientEstimate& ce : res.coefficients) {
      if (!first) msg << "; ";
      first = false;
      if (ce.collinear) {
        msg << ce.name << " collinear";
      } else {
        msg << ce.name << " = " << format_number(ce.estimate) << " (se "
            << format_number(ce.std_error) << ")";
      }
    }
    msg << "; n = " << res.n_used << ", clusters = " << res.n_clusters;
    return msg.str();
  }

  void run_did(TaskOutcome& outcome) {
    const PanelTask& task = *cfg_.did_task;
    const PanelFrame frame = survey_panel(task);
    const FitResult res = fit(frame, did_spec("outcome"));
    std::ofstream out = open_output("did.csv", outcome);
    write_fit_csv(out, res);
    outcome.message = fit_message(res);
  }

  void run_event(TaskOutcome& outcome) {
    const EventTask& task = *cfg_.event_task;
    const PanelFrame frame = survey_panel(task.panel);
    RegressionSpec spec = did_spec("outcome");
    spec.regressors = {light_panel::kTreated};
    const EventTimeResult res =
        event_time_effects(frame, spec, light_panel::kYear, task.reference_time);
    std::ofstream out = open_output("event.csv", outcome);
    write_csv_row(out, {"time", "effect", "std_error", "reference", "collinear"});
    for (const EventTimePoint& pt : res.points)
      write_csv_row(out, {pt.time, format_number(pt.effect), format_number(pt.std_error),
                          pt.reference ? "1" : "0", pt.collinear ? "1" : "0"});
    outcome.message = std::to_string(res.points.size()) + " time levels, reference " +
                      task.reference_time + ", n = " + std::to_string(res.fit.n_used);
  }

  void run_meta(TaskOutcome& outcome) {
    const MetaTask& task = *cfg_.meta_task;
    const MetaResult res = dersimonian_laird(task.studies);
    std::ofstream out = open_output("meta.csv", outcome);
    write_csv_row(out, {"label", "estimate", "se", "weight", "tau_sq", "q"});
    for (std::size_t i = 0; i < task.studies.size(); ++i)
      write_csv_row(out, {task.studies[i].label, format_number(task.studies[i].estimate),
                          format_number(task.studies[i].se), format_number(res.weights[i]), "",
                          ""});
    write_csv_row(out, {"pooled", format_number(res.pooled), format_number(res.pooled_se), "1",
                        format_number(res.tau_sq), format_number(res.q)});
    std::ostringstream msg;
    msg << "pooled " << format_number(res.pooled) << " (se " << format_number(res.pooled_se)
        << ") across " << task.studies.size() << " studies";
    outcome.message = msg.str();
  }

  std::vector<std::string> countries_by_cell(const LightGrid& g0) {
    if (cfg_.countries_path.empty())
      throw std::runtime_error("lights did needs a countries input (inputs.countries)");
    std::ifstream in(cfg_.countries_path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open countries file " + cfg_.countries_path);
    const auto rows = parse_csv(in);
    if (rows.empty() || rows[0] != std::vector<std::string>{"row", "col", "country"})
      throw std::runtime_error("countries file needs header row,col,country");
    std::vector<std::string> out(
        static_cast<std::size_t>(g0.ncols) * static_cast<std::size_t>(g0.nrows));
    for (std::size_t i = 1; i < rows.size(); ++i) {
      if (rows[i].size() == 1 && rows[i][0].empty()) continue;
      if (rows[i].size() != 3)
        throw std::runtime_error("countries file: line " + std::to_string(i + 1) +
                                 ": expected 3 fields");
      const int r = detail::parse_int_field(rows[i][0], "row", i + 1);
      const int c = detail::parse_int_field(rows[i][1], "col", i + 1);
      if (r < 0 || r >= g0.nrows || c < 0 || c >= g0.ncols)
        throw std::runtime_error("countries file: line " + std::to_string(i + 1) +
                                 ": cell out of range");
      out[static_cast<std::size_t>(r) * static_cast<std::size_t>(g0.ncols) +
          static_cast<std::size_t>(c)] = rows[i][2];
    }
    return out;
  }

  void run_lights(TaskOutcome& outcome) {
    const LightsTask& task = *cfg_.lights_task;
    if (cfg_.grids.empty())
      throw std::runtime_error("lights needs raster inputs (inputs.grids)");

    std::vector<LightGrid> grids;
    std::vector<bool> one_occurs;
    for (const GridInput& gi : cfg_.grids) {
      LightGrid g = read_esri_grid_file(gi.path);
      g.year = gi.year;
      g.satellite = gi.satellite;
      ValidatedGrid vg = validate_grid(g, task.recode_zero);
      one_occurs.push_back(vg.value_one_occurs);
      grids.push_back(std::move(vg.grid));
    }
    if (task.downsample_factor > 1)
      for (LightGrid& g : grids) g = downsample(g, task.downsample_factor);

    std::vector<std::uint8_t> region(grids[0].values.size(), 1);
    if (!cfg_.region_mask_path.empty()) {
      const LightGrid mask = read_esri_grid_file(cfg_.region_mask_path);
      if (!same_extent(mask, grids[0]))
        throw std::runtime_error("region mask extent does not match the analysis grids");
      for (std::size_t i = 0; i < region.size(); ++i)
        region[i] = !mask.is_nodata(mask.values[i]) && mask.values[i] != 0.0 ? 1 : 0;
    }

    const LightGrid* reference = nullptr;
    for (const LightGrid& g : grids)
      if (g.year == task.reference_year) {
        reference = &g;
        break;
      }
    if (!reference)
      throw std::runtime_error("reference year " + std::to_string(task.reference_year) +
                               " is not among the input grids");

    std::vector<LightGrid> calibrated;
    std::ofstream out = open_output("lights.csv", outcome);
    write_csv_row(out, {"year", "satellite", "value_one_occurs", "c0", "c1", "c2", "rmse",
                        "reference_year"});
    for (std::size_t i = 0; i < grids.size(); ++i) {
      CalibrationFit fitrow;
      if (grids[i].year == task.reference_year) {
        fitrow.c0 = 0.0;
        fitrow.c1 = 1.0;
        fitrow.c2 = 0.0;
        fitrow.rmse = 0.0;
        fitrow.target_year = grids[i].year;
        fitrow.reference_year = task.reference_year;
        fitrow.satellite = grids[i].satellite;
        calibrated.push_back(grids[i]);
      } else {
        IntercalibrationResult res = intercalibrate(grids[i], *reference, region);
        fitrow = res.fit;
        calibrated.push_back(std::move(res.calibrated));
      }
      write_csv_row(out, {std::to_string(fitrow.target_year), fitrow.satellite,
                          one_occurs[i] ? "1" : "0", format_number(fitrow.c0),
                          format_number(fitrow.c1), format_number(fitrow.c2),
                          format_number(fitrow.rmse), std::to_string(fitrow.reference_year)});
    }

    if (task.write_calibrated) {
      for (const LightGrid& g : calibrated) {
        const std::string name = "calibrated_" + std::to_string(g.year) + ".asc";
        std::ofstream gout = open_output(name, outcome);
        write_esri_grid(g, gout);
      }
    }

    std::ostringstream msg;
    msg << grids.size() << " grid(s) calibrated to " << task.reference_year;

    if (task.did) {
      LightPanelSpec pspec;
      pspec.zone = task.did->zone;
      pspec.cells = GridSpec{task.did->cell_size};
      pspec.connection_years = task.did->events;
      const PanelFrame frame =
          build_light_panel(calibrated, infra(), pspec, countries_by_cell(calibrated[0]));
      const FitResult res = fit(frame, did_spec(light_panel::kOutcome));
      std::ofstream dout = open_output("lights_did.csv", outcome);
      write_fit_csv(dout, res);
      msg << "; " << fit_message(res);
    }
    outcome.message = msg.str();
  }

  void run_mesim(TaskOutcome& outcome) {
    const MesimTask& task = *cfg_.mesim_task;
    MeSimConfig base = task.base;
    if (!task.seed_from_task) base.seed = cfg_.seed;

    std::ofstream out = open_output("mesim.csv", outcome);
    write_csv_row(out, {"r", "cov_tt", "var_t", "exog", "endog", "beta_hat"});
    auto emit = [&](const MeSimResult& r) {
      write_csv_row(out, {format_number(r.r), format_number(r.cov_t_tstar),
                          format_number(r.var_t), format_number(r.exog_component),
                          format_number(r.endog_component), format_number(r.beta_hat)});
    };

    if (task.radii.empty()) {
      const MeSimResult res = simulate(base);
      emit(res);
      std::ostringstream msg;
      msg << "r = " << format_number(res.r) << ": beta_hat " << format_number(res.beta_hat)
          << " (exog " << format_number(res.exog_component) << ", endog "
          << format_number(res.endog_component) << ")";
      outcome.message = msg.str();
      return;
    }

    const SweepResult sweep = scaling_sweep(base, task.radii);
    for (const MeSimResult& r : sweep.rows) emit(r);
    std::ofstream sout = open_output("mesim_slopes.csv", outcome);
    write_csv_row(sout, {"cov_slope", "var_slope", "exog_slope"});
    write_csv_row(sout, {format_number(sweep.cov_slope), format_number(sweep.var_slope),
                         format_number(sweep.exog_slope)});
    std::ostringstream msg;
    msg << task.radii.size() << " radii; log-log slopes: cov " << format_number(sweep.cov_slope)
        << ", var " << format_number(sweep.var_slope) << ", exog "
        << format_number(sweep.exog_slope);
    outcome.message = msg.str();
  }

  PipelineConfig cfg_;
  std::filesystem::path out_dir_;
  std::optional<PointTable> points_;
  std::optional<Infrastructure> infra_;
};

}  // namespace geodid
