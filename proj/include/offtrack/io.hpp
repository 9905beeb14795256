#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "offtrack/dreaming.hpp"
#include "offtrack/eval.hpp"
#include "offtrack/sim.hpp"
#include "offtrack/tracker.hpp"
#include "offtrack/types.hpp"

namespace offtrack::io {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

inline constexpr int kSchemaVersion = 1;

/// Malformed or inconsistent input content.
class ValidationError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

/// File system failure.
class IoError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Files

inline std::string read_file(const fs::path & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Writes to a sibling temporary file and renames it over `path`, so readers
/// never observe a partially written file.
inline void atomic_write(const fs::path & path, const std::string & content)
{
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

/// `path` itself when it is a file, otherwise its *.jsonl files sorted by name.
inline std::vector<fs::path> jsonl_inputs(const fs::path & path)
{
  if (fs::is_regular_file(path)) return {path};
  if (!fs::is_directory(path)) throw IoError("no such file or directory: " + path.string());
  std::vector<fs::path> out;
  for (const auto & e : fs::directory_iterator(path)) {
    if (e.is_regular_file() && e.path().extension() == ".jsonl") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Shared records

namespace detail {

inline double number(const Json & j, const char * key)
{
  const auto it = j.find(key);
  if (it == j.end() || !it->is_number()) throw ValidationError(std::string("missing numeric field '") + key + "'");
  return it->get<double>();
}

inline Json detection_json(const Detection & d)
{
  return Json{{"cx", d.box.cx}, {"cy", d.box.cy}, {"cz", d.cz}, {"yaw", d.box.yaw},
              {"l", d.box.length}, {"w", d.box.width}, {"h", d.h}, {"score", d.score}};
}

inline BevBox checked_box(double cx, double cy, double yaw, double l, double w)
{
  if (!std::isfinite(cx) || !std::isfinite(cy) || !std::isfinite(yaw)) throw ValidationError("non-finite box pose");
  if (!(l > 0.0) || !(w > 0.0)) throw ValidationError("box length and width must be > 0");
  return BevBox(cx, cy, yaw, l, w);
}

inline Detection detection_from(const Json & j)
{
  Detection d;
  d.box = checked_box(number(j, "cx"), number(j, "cy"), number(j, "yaw"), number(j, "l"), number(j, "w"));
  d.cz = number(j, "cz");
  d.h = number(j, "h");
  if (!(d.h > 0.0)) throw ValidationError("box height must be > 0");
  d.score = number(j, "score");
  return d;
}

inline Json detections_json(const std::vector<Detection> & ds)
{
  Json arr = Json::array();
  for (const Detection & d : ds) arr.push_back(detection_json(d));
  return arr;
}

inline std::vector<Detection> detections_from(const Json & j, const char * key)
{
  const auto it = j.find(key);
  if (it == j.end() || !it->is_array()) throw ValidationError(std::string("missing array field '") + key + "'");
  std::vector<Detection> out;
  for (const Json & d : *it) out.push_back(detection_from(d));
  return out;
}

inline Json header_json(const char * kind, const std::string & sequence_id)
{
  return Json{{"schema_version", kSchemaVersion}, {"kind", kind}, {"sequence_id", sequence_id}};
}

inline std::string read_header(const Json & j, const char * kind)
{
  if (!j.is_object() || j.value("kind", "") != kind) throw ValidationError(std::string("line 1: expected a '") + kind + "' header");
  if (j.value("schema_version", -1) != kSchemaVersion) throw ValidationError("line 1: unsupported schema_version");
  const auto it = j.find("sequence_id");
  if (it == j.end() || !it->is_string()) throw ValidationError("line 1: missing sequence_id");
  return it->get<std::string>();
}

/// Parses non-empty lines; errors name the 1-based line number.
template <class Fn>
void for_each_jsonl(const std::string & text, Fn && fn)
{
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::parse_error & e) {
      throw ValidationError("line " + std::to_string(lineno) + ": malformed JSON: " + e.what());
    }
    try {
      fn(lineno, j);
    } catch (const ValidationError & e) {
      const std::string msg = e.what();
      if (msg.rfind("line ", 0) == 0) throw;
      throw ValidationError("line " + std::to_string(lineno) + ": " + msg);
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// SequenceLog JSONL: a header line, then one line per frame.

inline std::string sequence_to_jsonl(const SequenceLog & log)
{
  std::string out = detail::header_json("sequence", log.sequence_id).dump() + "\n";
  for (const Frame & f : log.frames) {
    Json j{{"frame_index", f.frame_index},
           {"timestamp", f.timestamp},
           {"ego_pose", Json{{"x", f.ego_pose.x}, {"y", f.ego_pose.y}, {"yaw", f.ego_pose.yaw}}},
           {"detections", detail::detections_json(f.detections)}};
    if (f.pool_detections) j["pool_detections"] = detail::detections_json(*f.pool_detections);
    out += j.dump() + "\n";
  }
  return out;
}

inline SequenceLog parse_sequence(const std::string & text)
{
  SequenceLog log;
  bool have_header = false;
  detail::for_each_jsonl(text, [&](int, const Json & j) {
    if (!have_header) {
      log.sequence_id = detail::read_header(j, "sequence");
      have_header = true;
      return;
    }
    Frame f;
    const auto fi = j.find("frame_index");
    if (fi == j.end() || !fi->is_number_integer()) throw ValidationError("missing integer field 'frame_index'");
    f.frame_index = fi->get<int>();
    f.timestamp = detail::number(j, "timestamp");
    const auto pose = j.find("ego_pose");
    if (pose == j.end() || !pose->is_object()) throw ValidationError("missing object field 'ego_pose'");
    f.ego_pose = {detail::number(*pose, "x"), detail::number(*pose, "y"), detail::number(*pose, "yaw")};
    if (std::abs(f.ego_pose.yaw) > std::numbers::pi + 1e-9) throw ValidationError("ego yaw not wrapped into (-pi, pi]");
    f.detections = detail::detections_from(j, "detections");
    if (j.contains("pool_detections")) f.pool_detections = detail::detections_from(j, "pool_detections");
    if (!log.frames.empty()) {
      if (!(f.timestamp > log.frames.back().timestamp)) {
        throw ValidationError("frame " + std::to_string(f.frame_index) + ": timestamp does not increase");
      }
      if (!(f.frame_index > log.frames.back().frame_index)) {
        throw ValidationError("frame " + std::to_string(f.frame_index) + ": frame_index does not increase");
      }
    }
    log.frames.push_back(std::move(f));
  });
  if (!have_header) throw ValidationError("empty sequence file");
  return log;
}

inline SequenceLog load_sequence(const fs::path & path)
{
  try {
    return parse_sequence(read_file(path));
  } catch (const ValidationError & e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

inline void save_sequence(const fs::path & path, const SequenceLog & log) { atomic_write(path, sequence_to_jsonl(log)); }

// ---------------------------------------------------------------------------
// Label files: a header line, then one line per frame with its labels.

inline Json label_json(const PseudoLabel & l)
{
  return Json{{"frame_index", l.frame_index}, {"track_id", l.track_id}, {"cx", l.box.cx},  {"cy", l.box.cy},
              {"cz", l.cz},                   {"yaw", l.box.yaw},       {"l", l.box.length}, {"w", l.box.width},
              {"h", l.h},                     {"score", l.confidence},  {"source", std::string(to_string(l.source))}};
}

inline std::string labels_to_jsonl(const LabelSequence & seq)
{
  std::string out = detail::header_json("labels", seq.sequence_id).dump() + "\n";
  for (const LabelFrame & f : seq.frames) {
    Json arr = Json::array();
    for (const PseudoLabel & l : f.labels) arr.push_back(label_json(l));
    out += Json{{"frame_index", f.frame_index}, {"labels", std::move(arr)}}.dump() + "\n";
  }
  return out;
}

inline LabelSequence parse_labels(const std::string & text)
{
  LabelSequence seq;
  bool have_header = false;
  detail::for_each_jsonl(text, [&](int, const Json & j) {
    if (!have_header) {
      seq.sequence_id = detail::read_header(j, "labels");
      have_header = true;
      return;
    }
    LabelFrame f;
    f.frame_index = static_cast<int>(detail::number(j, "frame_index"));
    const auto arr = j.find("labels");
    if (arr == j.end() || !arr->is_array()) throw ValidationError("missing array field 'labels'");
    for (const Json & lj : *arr) {
      PseudoLabel l;
      l.frame_index = f.frame_index;
      l.track_id = static_cast<int>(detail::number(lj, "track_id"));
      l.box = detail::checked_box(detail::number(lj, "cx"), detail::number(lj, "cy"), detail::number(lj, "yaw"),
                                  detail::number(lj, "l"), detail::number(lj, "w"));
      l.cz = detail::number(lj, "cz");
      l.h = detail::number(lj, "h");
      l.confidence = detail::number(lj, "score");
      try {
        l.source = source_from_string(lj.value("source", ""));
      } catch (const std::invalid_argument & e) {
        throw ValidationError(e.what());
      }
      f.labels.push_back(l);
    }
    seq.frames.push_back(std::move(f));
  });
  if (!have_header) throw ValidationError("empty label file");
  return seq;
}

inline LabelSequence load_labels(const fs::path & path)
{
  try {
    return parse_labels(read_file(path));
  } catch (const ValidationError & e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

inline void save_labels(const fs::path & path, const LabelSequence & seq) { atomic_write(path, labels_to_jsonl(seq)); }

// ---------------------------------------------------------------------------
// Pipeline configuration

namespace detail {

template <std::size_t N>
Json array_json(const std::array<double, N> & a)
{
  Json j = Json::array();
  for (const double v : a) j.push_back(v);
  return j;
}

template <std::size_t N>
void read_array(const Json & j, const char * key, std::array<double, N> & out)
{
  const auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_array() || it->size() != N) {
    throw ValidationError(std::string("config field '") + key + "' must be an array of " + std::to_string(N) + " numbers");
  }
  for (std::size_t i = 0; i < N; ++i) {
    if (!(*it)[i].is_number()) throw ValidationError(std::string("config field '") + key + "' must hold numbers");
    out[i] = (*it)[i].get<double>();
  }
}

template <class T>
void read_scalar(const Json & j, const char * key, T & out)
{
  const auto it = j.find(key);
  if (it == j.end()) return;
  if (!it->is_number()) throw ValidationError(std::string("config field '") + key + "' must be a number");
  if constexpr (std::is_integral_v<T>) {
    if (!it->is_number_integer()) throw ValidationError(std::string("config field '") + key + "' must be an integer");
  }
  out = it->get<T>();
}

}  // namespace detail

inline Json config_to_json(const PipelineConfig & c, bool with_notes = false)
{
  Json j;
  j["schema_version"] = kSchemaVersion;
  if (with_notes) {
    j["_notes"] = Json{
        {"r_track", "measurement noise diag (x m^2, y m^2, theta rad^2, l m^2, w m^2) for tracking"},
        {"r_extrap", "larger measurement noise used when extrapolating against far-range candidates"},
        {"q", "process noise intensities (theta, speed, ego vx, ego vy, ego yaw rate, l, w), scaled by dt"},
        {"p0", "initial state covariance diag (x, y, theta, s, l, w)"},
        {"assoc_gate", "minimum BEV IoU for a detection-track pair"},
        {"c_min_hits", "measurement updates needed to confirm a track"},
        {"c_max_age", "consecutive misses tolerated before a track ends"},
        {"back_axle_fraction", "back axle sits this fraction of the length behind the box center"},
        {"extrap_score_min", "lowest candidate score accepted while extrapolating; detector specific"},
        {"extrap_search_area_m2", "area of the square searched around each extrapolated prediction"},
        {"st_score_threshold", "self-training baseline keeps detections strictly above this score"},
    };
  }
  j["r_track"] = detail::array_json(c.r_track.r);
  j["r_extrap"] = detail::array_json(c.r_extrap.r);
  j["q"] = detail::array_json(c.q.q);
  j["p0"] = detail::array_json(c.p0);
  j["assoc_gate"] = c.assoc_gate;
  j["c_min_hits"] = c.c_min_hits;
  j["c_max_age"] = c.c_max_age;
  j["back_axle_fraction"] = c.back_axle_fraction;
  j["track_input_score_min"] = c.track_input_score_min;
  j["extrap_score_min"] = c.extrap_score_min;
  j["extrap_search_area_m2"] = c.extrap_search_area_m2;
  j["extrap_max_consecutive_misses"] = c.extrap_max_consecutive_misses;
  j["extrap_iou_min"] = c.extrap_iou_min;
  j["nms_iou"] = c.nms_iou;
  j["st_score_threshold"] = c.st_score_threshold;
  j["fov"] = Json{{"max_range_m", c.fov.max_range_m}, {"half_angle_rad", c.fov.half_angle_rad}};
  return j;
}

/// Missing keys keep their defaults; keys starting with '_' are ignored.
inline PipelineConfig config_from_json(const Json & j)
{
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  if (j.contains("schema_version") && j.value("schema_version", -1) != kSchemaVersion) {
    throw ValidationError("config: unsupported schema_version");
  }
  PipelineConfig c;
  detail::read_array(j, "r_track", c.r_track.r);
  detail::read_array(j, "r_extrap", c.r_extrap.r);
  detail::read_array(j, "q", c.q.q);
  detail::read_array(j, "p0", c.p0);
  detail::read_scalar(j, "assoc_gate", c.assoc_gate);
  detail::read_scalar(j, "c_min_hits", c.c_min_hits);
  detail::read_scalar(j, "c_max_age", c.c_max_age);
  detail::read_scalar(j, "back_axle_fraction", c.back_axle_fraction);
  detail::read_scalar(j, "track_input_score_min", c.track_input_score_min);
  detail::read_scalar(j, "extrap_score_min", c.extrap_score_min);
  detail::read_scalar(j, "extrap_search_area_m2", c.extrap_search_area_m2);
  detail::read_scalar(j, "extrap_max_consecutive_misses", c.extrap_max_consecutive_misses);
  detail::read_scalar(j, "extrap_iou_min", c.extrap_iou_min);
  detail::read_scalar(j, "nms_iou", c.nms_iou);
  detail::read_scalar(j, "st_score_threshold", c.st_score_threshold);
  if (const auto fov = j.find("fov"); fov != j.end()) {
    if (!fov->is_object()) throw ValidationError("config field 'fov' must be an object");
    detail::read_scalar(*fov, "max_range_m", c.fov.max_range_m);
    detail::read_scalar(*fov, "half_angle_rad", c.fov.half_angle_rad);
  }
  for (const auto & [key, value] : j.items()) {
    static const std::vector<std::string> known{
        "schema_version", "r_track", "r_extrap", "q", "p0", "assoc_gate", "c_min_hits", "c_max_age",
        "back_axle_fraction", "track_input_score_min", "extrap_score_min", "extrap_search_area_m2",
        "extrap_max_consecutive_misses", "extrap_iou_min", "nms_iou", "st_score_threshold", "fov"};
    if (!key.empty() && key[0] == '_') continue;
    if (std::find(known.begin(), known.end(), key) == known.end()) throw ValidationError("config: unknown field '" + key + "'");
  }
  try {
    c.validate();
  } catch (const std::invalid_argument & e) {
    throw ValidationError(e.what());
  }
  return c;
}

inline PipelineConfig load_config(const fs::path & path)
{
  try {
    return config_from_json(Json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error & e) {
    throw ValidationError(path.string() + ": malformed JSON: " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Scenario specs

inline Json scenario_to_json(const sim::ScenarioSpec & s)
{
  Json vehicles = Json::array();
  for (const sim::VehicleSpec & v : s.vehicles) {
    vehicles.push_back(Json{{"x", v.x}, {"y", v.y}, {"heading", v.heading}, {"speed", v.speed}, {"length", v.length},
                            {"width", v.width}, {"cz", v.cz}, {"height", v.height}, {"dropout", v.dropout}});
  }
  const sim::SensorSpec & n = s.sensor;
  return Json{
      {"schema_version", kSchemaVersion},
      {"seed", s.seed},
      {"sequence_id", s.sequence_id},
      {"num_frames", s.num_frames},
      {"frame_rate", s.frame_rate},
      {"ego", Json{{"x", s.ego.x}, {"y", s.ego.y}, {"yaw", s.ego.yaw}, {"speed", s.ego.speed}, {"yaw_rate", s.ego.yaw_rate}}},
      {"vehicles", vehicles},
      {"sensor",
       Json{{"half_angle", n.half_angle},
            {"gt_max_range", n.gt_max_range},
            {"detect_p_max", n.detect_p_max},
            {"detect_r50", n.detect_r50},
            {"detect_slope", n.detect_slope},
            {"pool_p_max", n.pool_p_max},
            {"pool_r50", n.pool_r50},
            {"pool_slope", n.pool_slope},
            {"sigma_near", detail::array_json(n.sigma_near)},
            {"sigma_per_m", detail::array_json(n.sigma_per_m)},
            {"size_bias_start_m", n.size_bias_start_m},
            {"size_bias_per_m", n.size_bias_per_m},
            {"score_near", n.score_near},
            {"score_per_m", n.score_per_m},
            {"score_sigma", n.score_sigma},
            {"pool_score_lo", n.pool_score_lo},
            {"fp_rate", n.fp_rate},
            {"fp_high_score_prob", n.fp_high_score_prob},
            {"clutter_rate", n.clutter_rate}}},
  };
}

/// Either a full scenario, or {"highway": {"seed", "num_vehicles",
/// "num_frames", "frame_rate"}} to use the built-in highway generator.
/// Missing keys keep their defaults.
inline sim::ScenarioSpec scenario_from_json(const Json & j)
{
  if (!j.is_object()) throw ValidationError("scenario must be a JSON object");
  sim::ScenarioSpec s;
  if (const auto hw = j.find("highway"); hw != j.end()) {
    std::uint64_t seed = 0;
    int nv = 8, nf = 200;
    double rate = 10.0;
    detail::read_scalar(*hw, "seed", seed);
    detail::read_scalar(*hw, "num_vehicles", nv);
    detail::read_scalar(*hw, "num_frames", nf);
    detail::read_scalar(*hw, "frame_rate", rate);
    s = sim::highway_scenario(seed, nv, nf, rate);
  }
  detail::read_scalar(j, "seed", s.seed);
  if (const auto id = j.find("sequence_id"); id != j.end() && id->is_string()) s.sequence_id = id->get<std::string>();
  detail::read_scalar(j, "num_frames", s.num_frames);
  detail::read_scalar(j, "frame_rate", s.frame_rate);
  if (const auto e = j.find("ego"); e != j.end()) {
    detail::read_scalar(*e, "x", s.ego.x);
    detail::read_scalar(*e, "y", s.ego.y);
    detail::read_scalar(*e, "yaw", s.ego.yaw);
    detail::read_scalar(*e, "speed", s.ego.speed);
    detail::read_scalar(*e, "yaw_rate", s.ego.yaw_rate);
  }
  if (const auto vs = j.find("vehicles"); vs != j.end()) {
    if (!vs->is_array()) throw ValidationError("scenario field 'vehicles' must be an array");
    s.vehicles.clear();
    for (const Json & vj : *vs) {
      sim::VehicleSpec v;
      detail::read_scalar(vj, "x", v.x);
      detail::read_scalar(vj, "y", v.y);
      detail::read_scalar(vj, "heading", v.heading);
      detail::read_scalar(vj, "speed", v.speed);
      detail::read_scalar(vj, "length", v.length);
      detail::read_scalar(vj, "width", v.width);
      detail::read_scalar(vj, "cz", v.cz);
      detail::read_scalar(vj, "height", v.height);
      detail::read_scalar(vj, "dropout", v.dropout);
      s.vehicles.push_back(v);
    }
  }
  if (const auto nj = j.find("sensor"); nj != j.end()) {
    sim::SensorSpec & n = s.sensor;
    detail::read_scalar(*nj, "half_angle", n.half_angle);
    detail::read_scalar(*nj, "gt_max_range", n.gt_max_range);
    detail::read_scalar(*nj, "detect_p_max", n.detect_p_max);
    detail::read_scalar(*nj, "detect_r50", n.detect_r50);
    detail::read_scalar(*nj, "detect_slope", n.detect_slope);
    detail::read_scalar(*nj, "pool_p_max", n.pool_p_max);
    detail::read_scalar(*nj, "pool_r50", n.pool_r50);
    detail::read_scalar(*nj, "pool_slope", n.pool_slope);
    detail::read_array(*nj, "sigma_near", n.sigma_near);
    detail::read_array(*nj, "sigma_per_m", n.sigma_per_m);
    detail::read_scalar(*nj, "size_bias_start_m", n.size_bias_start_m);
    detail::read_scalar(*nj, "size_bias_per_m", n.size_bias_per_m);
    detail::read_scalar(*nj, "score_near", n.score_near);
    detail::read_scalar(*nj, "score_per_m", n.score_per_m);
    detail::read_scalar(*nj, "score_sigma", n.score_sigma);
    detail::read_scalar(*nj, "pool_score_lo", n.pool_score_lo);
    detail::read_scalar(*nj, "fp_rate", n.fp_rate);
    detail::read_scalar(*nj, "fp_high_score_prob", n.fp_high_score_prob);
    detail::read_scalar(*nj, "clutter_rate", n.clutter_rate);
  }
  try {
    s.validate();
  } catch (const std::invalid_argument & e) {
    throw ValidationError(e.what());
  }
  return s;
}

// ---------------------------------------------------------------------------
// AP reports

inline Json report_to_json(const ApReport & r)
{
  Json cells = Json::array();
  for (const ApCell & c : r.cells) {
    Json curve = Json::array();
    for (const PrPoint & p : c.curve) curve.push_back(Json::array({p.score, p.precision, p.recall}));
    cells.push_back(Json{{"iou_threshold", c.iou_threshold},
                         {"range", c.range},
                         {"ap", c.ap ? Json(*c.ap) : Json(nullptr)},
                         {"tp", c.tp},
                         {"fp", c.fp},
                         {"fn", c.fn},
                         {"num_gt", c.num_gt},
                         {"pr_curve", std::move(curve)}});
  }
  return Json{{"schema_version", kSchemaVersion}, {"metric", "AP_BEV"}, {"cells", std::move(cells)}};
}

/// Rows per IoU threshold, columns per range bin, AP in percent.
inline std::string report_table(const ApReport & r)
{
  std::ostringstream os;
  os << std::left << std::setw(12) << "AP_BEV";
  for (const char * name : kRangeNames) os << std::right << std::setw(9) << name;
  os << "\n";
  for (const double thr : kIouThresholds) {
    std::ostringstream label;
    label << "IoU " << std::fixed << std::setprecision(1) << thr;
    os << std::left << std::setw(12) << label.str();
    for (const char * name : kRangeNames) {
      const ApCell & c = r.cell(thr, name);
      os << std::right << std::setw(9);
      if (c.ap) {
        std::ostringstream v;
        v << std::fixed << std::setprecision(1) << 100.0 * *c.ap;
        os << v.str();
      } else {
        os << "-";
      }
    }
    os << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// KITTI object labels

struct KittiConversion
{
  LabelFrame frame;
  int skipped_rows{0};
};

/// Converts one KITTI object label text (camera frame: x right, y down,
/// z forward) into BEV ground truth in the ego frame (x forward, y left):
///   cx = z, cy = -x, yaw = -rotation_y - pi/2,
///   cz = -y + h / 2 (KITTI locations are bottom centers).
/// Only "Car" rows are kept. Rows that do not parse are skipped and counted.
inline KittiConversion convert_kitti_text(const std::string & text, int frame_index)
{
  KittiConversion out;
  out.frame.frame_index = frame_index;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    std::string type;
    std::vector<double> v;
    ls >> type;
    std::string tok;
    bool ok = true;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(tok, &used));
        if (used != tok.size()) ok = false;
      } catch (const std::exception &) {
        ok = false;
      }
    }
    if (!ok || (v.size() != 14 && v.size() != 15)) {
      ++out.skipped_rows;
      continue;
    }
    if (type != "Car") continue;
    const double h = v[7], w = v[8], l = v[9];
    const double x = v[10], y = v[11], z = v[12], ry = v[13];
    if (!(h > 0.0) || !(w > 0.0) || !(l > 0.0)) {
      ++out.skipped_rows;
      continue;
    }
    PseudoLabel lab;
    lab.frame_index = frame_index;
    lab.box = BevBox(z, -x, -ry - 0.5 * std::numbers::pi, l, w);
    lab.cz = -y + 0.5 * h;
    lab.h = h;
    lab.source = Source::kGroundTruth;
    lab.confidence = v.size() == 15 ? v[14] : 1.0;
    out.frame.labels.push_back(lab);
  }
  return out;
}

/// Converts a directory of KITTI label files (<frame>.txt) into one label
/// sequence. Frame indices come from the file stems.
inline LabelSequence convert_kitti_labels(const fs::path & dir, int * skipped_rows = nullptr)
{
  if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::pair<int, fs::path>> files;
  for (const auto & e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().extension() != ".txt") continue;
    try {
      files.emplace_back(std::stoi(e.path().stem().string()), e.path());
    } catch (const std::exception &) {
      throw ValidationError("KITTI label file name is not a frame number: " + e.path().string());
    }
  }
  std::sort(files.begin(), files.end());
  LabelSequence seq;
  seq.sequence_id = dir.filename().string();
  if (seq.sequence_id.empty()) seq.sequence_id = dir.parent_path().filename().string();
  int skipped = 0;
  for (const auto & [idx, path] : files) {
    KittiConversion c = convert_kitti_text(read_file(path), idx);
    skipped += c.skipped_rows;
    seq.frames.push_back(std::move(c.frame));
  }
  if (skipped_rows) *skipped_rows = skipped;
  return seq;
}

// ---------------------------------------------------------------------------
// Plot data

inline Json polygon_json(const BevBox & b)
{
  Json poly = Json::array();
  for (const Point2 & p : corners(b)) poly.push_back(Json::array({p.x, p.y}));
  return poly;
}

/// Per-frame BEV polygons of detections and labels, plus one polyline of
/// label centers per track, for external plotting.
inline Json plot_data(const SequenceLog & log, const LabelSequence * labels)
{
  std::map<int, const LabelFrame *> by_frame;
  if (labels) {
    for (const LabelFrame & f : labels->frames) by_frame[f.frame_index] = &f;
  }
  std::map<int, Json> tracks;
  Json frames = Json::array();
  for (const Frame & f : log.frames) {
    Json dets = Json::array();
    for (const Detection & d : f.detections) dets.push_back(Json{{"score", d.score}, {"polygon", polygon_json(d.box)}});
    Json labs = Json::array();
    if (const auto it = by_frame.find(f.frame_index); it != by_frame.end()) {
      for (const PseudoLabel & l : it->second->labels) {
        labs.push_back(Json{{"track_id", l.track_id}, {"source", std::string(to_string(l.source))}, {"polygon", polygon_json(l.box)}});
        if (l.track_id >= 0) {
          auto & pts = tracks[l.track_id];
          if (pts.is_null()) pts = Json::array();
          pts.push_back(Json::array({f.frame_index, l.box.cx, l.box.cy}));
        }
      }
    }
    frames.push_back(Json{{"frame_index", f.frame_index}, {"detections", std::move(dets)}, {"labels", std::move(labs)}});
  }
  Json track_arr = Json::array();
  for (auto & [id, pts] : tracks) track_arr.push_back(Json{{"track_id", id}, {"points", std::move(pts)}});
  return Json{{"schema_version", kSchemaVersion}, {"sequence_id", log.sequence_id}, {"frames", std::move(frames)},
              {"tracks", std::move(track_arr)}};
}

}  // namespace offtrack::io
