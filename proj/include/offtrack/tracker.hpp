#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "offtrack/association.hpp"
#include "offtrack/dynamics.hpp"
#include "offtrack/filtering.hpp"
#include "offtrack/geometry.hpp"
#include "offtrack/types.hpp"

namespace offtrack {

struct FieldOfView
{
  double max_range_m{80.0};
  double half_angle_rad{std::numbers::pi / 4.0};
};

/// Every tunable of the tracking and refinement pipeline. Defaults are the
/// published hyper-parameters where they exist.
struct PipelineConfig
{
  MeasurementNoise r_track = MeasurementNoise::tracking();
  MeasurementNoise r_extrap = MeasurementNoise::extrapolation();
  ProcessNoise q{};
  std::array<double, 6> p0{2.0, 2.0, 0.1, 5.0, 0.5, 0.32};
  double assoc_gate{0.3};
  int c_min_hits{3};
  int c_max_age{3};
  double back_axle_fraction{kDefaultBackAxleFraction};
  double track_input_score_min{0.8};
  double extrap_score_min{-3.0};
  double extrap_search_area_m2{3.0};
  int extrap_max_consecutive_misses{3};
  double extrap_iou_min{0.0};  ///< candidates need IoU strictly above this
  double nms_iou{0.1};
  double st_score_threshold{0.8};
  FieldOfView fov{};

  Covariance6 initial_covariance() const
  {
    return Eigen::Map<const Eigen::Matrix<double, 6, 1>>(p0.data()).asDiagonal();
  }

  void validate() const
  {
    r_track.validate();
    r_extrap.validate();
    q.validate();
    for (const double v : p0) {
      if (!(v > 0.0)) throw std::invalid_argument("config: p0 diagonal must be positive");
    }
    auto unit = [](double v, const char * name) {
      if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument(std::string("config: ") + name + " must lie in [0, 1]");
    };
    unit(assoc_gate, "assoc_gate");
    unit(nms_iou, "nms_iou");
    unit(extrap_iou_min, "extrap_iou_min");
    if (c_min_hits < 1) throw std::invalid_argument("config: c_min_hits must be >= 1");
    if (c_max_age < 0) throw std::invalid_argument("config: c_max_age must be >= 0");
    if (!(back_axle_fraction >= 0.0 && back_axle_fraction < 0.5)) {
      throw std::invalid_argument("config: back_axle_fraction must lie in [0, 0.5)");
    }
    if (!(extrap_search_area_m2 > 0.0)) throw std::invalid_argument("config: extrap_search_area_m2 must be > 0");
    if (extrap_max_consecutive_misses < 1) {
      throw std::invalid_argument("config: extrap_max_consecutive_misses must be >= 1");
    }
    if (!(fov.max_range_m > 0.0) || !(fov.half_angle_rad > 0.0 && fov.half_angle_rad <= std::numbers::pi)) {
      throw std::invalid_argument("config: invalid field of view");
    }
  }
};

/// Ego motion over [prev, curr]: translation rate and yaw rate, expressed
/// in the earlier ego frame.
inline EgoMotion ego_motion_between(const EgoPose & prev, const EgoPose & curr, double dt)
{
  if (!(dt > 0.0)) throw std::invalid_argument("ego_motion_between: dt must be > 0");
  const double dx = curr.x - prev.x;
  const double dy = curr.y - prev.y;
  const double c = std::cos(prev.yaw);
  const double s = std::sin(prev.yaw);
  return {(c * dx + s * dy) / dt, (-s * dx + c * dy) / dt, wrap_angle(curr.yaw - prev.yaw) / dt, dt};
}

inline bool in_fov(const TrackState & st, const FieldOfView & fov)
{
  const double range = std::hypot(st.x, st.y);
  return range <= fov.max_range_m && std::abs(std::atan2(st.y, st.x)) <= fov.half_angle_rad;
}

inline bool in_fov(const TrackState & st, const PipelineConfig & cfg) { return in_fov(st, cfg.fov); }

/// Per-frame bookkeeping of a track; parallel to the filter history steps.
struct FrameRecord
{
  int frame_index{};
  Source tag{Source::kMissed};
  std::optional<Detection> detection;  ///< the matched detection, if any
};

struct Track
{
  int id{};
  FilterHistory history;
  std::vector<FrameRecord> records;
  int hit_count{0};
  int miss_streak{0};
  bool confirmed{false};
  bool degenerate{false};

  TrackState state() const { return TrackState::from_vec(history.back().post_state); }
  int first_frame() const { return records.front().frame_index; }
  int last_frame() const { return records.back().frame_index; }

  /// Removes trailing prediction-only frames.
  void trim_trailing_misses()
  {
    std::size_t n = records.size();
    while (n > 1 && records[n - 1].tag == Source::kMissed) --n;
    if (n != records.size()) {
      records.resize(n);
      history.truncate(n);
    }
  }
};

/// Input of one tracker step.
struct FrameInput
{
  int frame_index{};
  double timestamp{};
  EgoPose ego_pose;
  std::vector<Detection> detections;
};

/// Online tracking-by-detection: predict, associate, update, and manage the
/// track lifecycle.
///
/// Tracks are born tentative from unmatched detections, confirmed once they
/// collect c_min_hits measurement updates, and terminated when they miss
/// more than c_max_age consecutive frames or leave the field of view.
class Tracker
{
public:
  explicit Tracker(PipelineConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

  const PipelineConfig & config() const { return cfg_; }
  const std::vector<Track> & live_tracks() const { return live_; }
  const std::vector<Track> & finished_tracks() const { return finished_; }

  /// Processes one frame and returns the confirmed tracks updated in it.
  std::vector<PseudoLabel> step(const FrameInput & in)
  {
    if (last_time_ && !(in.timestamp > *last_time_)) {
      throw std::invalid_argument("tracker: non-monotonic timestamp at frame " + std::to_string(in.frame_index));
    }

    if (last_time_) {
      const EgoMotion ego = ego_motion_between(last_pose_, in.ego_pose, in.timestamp - *last_time_);
      for (Track & t : live_) {
        const FilterStep & cur = t.history.back();
        t.history.push_prediction(predict(cur.post_state, cur.post_cov, ego, cfg_.q), ego);
        t.records.push_back({in.frame_index, Source::kMissed, std::nullopt});
      }
    }
    last_time_ = in.timestamp;
    last_pose_ = in.ego_pose;

    std::vector<BevBox> predicted;
    predicted.reserve(live_.size());
    for (const Track & t : live_) predicted.push_back(state_box(t.state(), cfg_.back_axle_fraction));
    std::vector<BevBox> boxes;
    boxes.reserve(in.detections.size());
    for (const Detection & d : in.detections) boxes.push_back(d.box);

    const AssignmentResult assoc = associate(predicted, boxes, cfg_.assoc_gate);

    for (const AssociationMatch & m : assoc.matches) {
      Track & t = live_[m.track];
      const Detection & det = in.detections[m.detection];
      FilterStep & cur = t.history.back();
      const auto upd = update(cur.post_state, cur.post_cov, Measurement::from_box(det.box), cfg_.r_track,
                              cfg_.back_axle_fraction);
      if (!upd) {
        t.degenerate = true;
        ++t.miss_streak;
        continue;
      }
      cur.post_state = upd->state;
      cur.post_cov = upd->cov;
      t.records.back().tag = Source::kDetected;
      t.records.back().detection = det;
      ++t.hit_count;
      t.miss_streak = 0;
      if (t.hit_count >= cfg_.c_min_hits) t.confirmed = true;
    }
    for (const std::size_t i : assoc.unmatched_tracks) ++live_[i].miss_streak;

    for (const std::size_t j : assoc.unmatched_detections) {
      const Detection & det = in.detections[j];
      Track t;
      t.id = next_id_++;
      t.history = FilterHistory(state_from_measurement(Measurement::from_box(det.box), cfg_.back_axle_fraction).vec(),
                                cfg_.initial_covariance());
      t.records.push_back({in.frame_index, Source::kDetected, det});
      t.hit_count = 1;
      t.confirmed = t.hit_count >= cfg_.c_min_hits;
      live_.push_back(std::move(t));
    }

    std::vector<PseudoLabel> out;
    std::vector<Track> survivors;
    survivors.reserve(live_.size());
    for (Track & t : live_) {
      const TrackState st = t.state();
      const bool dead = t.degenerate || t.miss_streak > cfg_.c_max_age || !in_fov(st, cfg_);
      if (!dead && t.confirmed && t.records.back().tag == Source::kDetected) {
        const Detection & det = *t.records.back().detection;
        out.push_back({in.frame_index, state_box(st, cfg_.back_axle_fraction), det.cz, det.h, t.id,
                       Source::kDetected, det.score});
      }
      if (dead) {
        retire(std::move(t));
      } else {
        survivors.push_back(std::move(t));
      }
    }
    live_ = std::move(survivors);
    return out;
  }

  /// Ends the sequence: every live track is retired.
  void finish()
  {
    for (Track & t : live_) retire(std::move(t));
    live_.clear();
  }

  /// Retired tracks ordered by id; confirmed ones only unless asked.
  std::vector<Track> take_finished(bool confirmed_only = true)
  {
    std::vector<Track> out;
    for (Track & t : finished_) {
      if (!confirmed_only || t.confirmed) out.push_back(std::move(t));
    }
    finished_.clear();
    std::sort(out.begin(), out.end(), [](const Track & a, const Track & b) { return a.id < b.id; });
    return out;
  }

private:
  void retire(Track t)
  {
    t.trim_trailing_misses();
    finished_.push_back(std::move(t));
  }

  PipelineConfig cfg_;
  std::vector<Track> live_;
  std::vector<Track> finished_;
  int next_id_{0};
  std::optional<double> last_time_;
  EgoPose last_pose_{};
};

inline FrameInput frame_input(const Frame & f, double score_min)
{
  FrameInput in{f.frame_index, f.timestamp, f.ego_pose, {}};
  for (const Detection & d : f.detections) {
    if (d.score >= score_min) in.detections.push_back(d);
  }
  return in;
}

/// Online mode over a whole sequence: per-frame outputs of confirmed tracks.
inline LabelSequence run_online(const SequenceLog & seq, const PipelineConfig & cfg)
{
  Tracker tracker(cfg);
  LabelSequence out{seq.sequence_id, {}};
  out.frames.reserve(seq.frames.size());
  for (const Frame & f : seq.frames) {
    out.frames.push_back({f.frame_index, tracker.step(frame_input(f, cfg.track_input_score_min))});
  }
  return out;
}

/// Runs the tracker over the whole sequence and returns every retired track.
inline std::vector<Track> run_tracking(const SequenceLog & seq, const PipelineConfig & cfg, bool confirmed_only = true)
{
  Tracker tracker(cfg);
  for (const Frame & f : seq.frames) tracker.step(frame_input(f, cfg.track_input_score_min));
  tracker.finish();
  return tracker.take_finished(confirmed_only);
}

}  // namespace offtrack
