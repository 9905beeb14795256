#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <utility>
#include <vector>

#include "offtrack/filtering.hpp"
#include "offtrack/geometry.hpp"
#include "offtrack/tracker.hpp"
#include "offtrack/types.hpp"

namespace offtrack {

/// Low-threshold detector dump, one candidate list per sequence frame
/// (indexed by position in the sequence, not by frame_index).
struct CandidatePool
{
  std::vector<std::vector<Detection>> frames;

  /// Pool detections of every frame with score >= `score_min`. Frames
  /// without a pool fall back to their regular detections.
  static CandidatePool from_sequence(const SequenceLog & seq, double score_min)
  {
    CandidatePool pool;
    pool.frames.reserve(seq.frames.size());
    for (const Frame & f : seq.frames) {
      const auto & src = f.pool_detections ? *f.pool_detections : f.detections;
      std::vector<Detection> kept;
      for (const Detection & d : src) {
        if (d.score >= score_min) kept.push_back(d);
      }
      pool.frames.push_back(std::move(kept));
    }
    return pool;
  }
};

/// Frame positions, timestamps and poses of a sequence.
class SequenceClock
{
public:
  explicit SequenceClock(const SequenceLog & seq)
  {
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
      const Frame & f = seq.frames[i];
      index_.push_back(f.frame_index);
      time_.push_back(f.timestamp);
      pose_.push_back(f.ego_pose);
    }
  }

  std::size_t size() const { return index_.size(); }
  int frame_index(std::size_t pos) const { return index_[pos]; }

  std::size_t position(int frame_index) const
  {
    const auto it = std::lower_bound(index_.begin(), index_.end(), frame_index);
    if (it == index_.end() || *it != frame_index) throw std::out_of_range("frame index not in sequence");
    return static_cast<std::size_t>(it - index_.begin());
  }

  /// Ego motion from position `pos` to `pos + 1`.
  EgoMotion motion(std::size_t pos) const
  {
    return ego_motion_between(pose_[pos], pose_[pos + 1], time_[pos + 1] - time_[pos]);
  }

private:
  std::vector<int> index_;
  std::vector<double> time_;
  std::vector<EgoPose> pose_;
};

struct RefinedFrame
{
  int frame_index{};
  Source tag{Source::kMissed};
  std::optional<Detection> detection;
  StateVector state;
  Covariance6 cov;
};

/// A confirmed track after offline refinement.
struct RefinedTrack
{
  int id{};
  std::vector<RefinedFrame> frames;  ///< ascending frame_index
  std::optional<std::pair<double, double>> size;  ///< (l, w) after resizing
  bool size_flagged{false};                       ///< no matched detection to size from

  /// Mean score of the tracker-matched detections.
  double mean_score() const
  {
    double sum = 0.0;
    int n = 0;
    for (const RefinedFrame & f : frames) {
      if (f.tag == Source::kDetected && f.detection) {
        sum += f.detection->score;
        ++n;
      }
    }
    return n > 0 ? sum / n : 0.0;
  }

  /// Median passthrough (z, h) over matched detections.
  std::pair<double, double> median_z_h() const
  {
    std::vector<double> zs, hs;
    for (const RefinedFrame & f : frames) {
      if (f.tag == Source::kDetected && f.detection) {
        zs.push_back(f.detection->cz);
        hs.push_back(f.detection->h);
      }
    }
    if (zs.empty()) return {0.0, 1.5};
    auto median = [](std::vector<double> v) {
      std::sort(v.begin(), v.end());
      const std::size_t n = v.size();
      return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };
    return {median(zs), median(hs)};
  }
};

// ---------------------------------------------------------------------------

inline RefinedTrack smooth_track(const Track & t)
{
  const auto smoothed = rts_smooth(t.history);
  RefinedTrack out;
  out.id = t.id;
  out.frames.reserve(t.records.size());
  for (std::size_t k = 0; k < t.records.size(); ++k) {
    const FrameRecord & r = t.records[k];
    out.frames.push_back({r.frame_index, r.tag, r.detection, smoothed[k].state, smoothed[k].cov});
  }
  return out;
}

/// RTS-smooths every track; source tags are kept.
inline std::vector<RefinedTrack> smooth_all(const std::vector<Track> & tracks)
{
  std::vector<RefinedTrack> out;
  out.reserve(tracks.size());
  for (const Track & t : tracks) out.push_back(smooth_track(t));
  return out;
}

/// Sets one (l, w) per track: the mean over its three highest-scoring
/// matched detections (fewer if the track has fewer).
inline void resize_track(RefinedTrack & t)
{
  std::vector<const Detection *> dets;
  for (const RefinedFrame & f : t.frames) {
    if (f.detection) dets.push_back(&*f.detection);
  }
  if (dets.empty()) {
    t.size_flagged = true;
    return;
  }
  std::stable_sort(dets.begin(), dets.end(), [](const Detection * a, const Detection * b) { return a->score > b->score; });
  const std::size_t n = std::min<std::size_t>(3, dets.size());
  double l = 0.0;
  double w = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    l += dets[i]->box.length;
    w += dets[i]->box.width;
  }
  l /= static_cast<double>(n);
  w /= static_cast<double>(n);
  t.size = {l, w};
  for (RefinedFrame & f : t.frames) {
    f.state(kLength) = l;
    f.state(kWidth) = w;
  }
}

inline void resize_tracks(std::vector<RefinedTrack> & tracks)
{
  for (RefinedTrack & t : tracks) resize_track(t);
}

/// Re-tags interior missed frames (between two measurement-updated frames)
/// as interpolated; their state is the smoothed estimate.
inline void interpolate(RefinedTrack & t)
{
  const auto is_det = [](const RefinedFrame & f) { return f.tag == Source::kDetected; };
  const auto first = std::find_if(t.frames.begin(), t.frames.end(), is_det);
  const auto last = std::find_if(t.frames.rbegin(), t.frames.rend(), is_det);
  if (first == t.frames.end()) return;
  for (auto it = first; it != last.base(); ++it) {
    if (it->tag == Source::kMissed) it->tag = Source::kInterpolated;
  }
}

enum class Direction { kForward, kBackward };

/// Extends a smoothed track past its last (forward) or before its first
/// (backward) frame by predicting with the motion model and updating with
/// pool candidates near the prediction.
///
/// Each step keeps the pool candidates whose centers fall in an axis-aligned
/// square of area `extrap_search_area_m2` around the predicted center, takes
/// the one with the highest BEV IoU (above `extrap_iou_min`) as measurement
/// and emits an extrapolated frame. The search stops after
/// `extrap_max_consecutive_misses` misses in a row, on leaving the field of
/// view, or at the sequence boundary. Returns the number of frames added.
inline std::size_t extrapolate(RefinedTrack & t, const CandidatePool & pool, const SequenceClock & clock,
                               Direction dir, const PipelineConfig & cfg)
{
  if (t.frames.empty() || clock.size() < 2) return 0;
  const bool fwd = dir == Direction::kForward;
  const RefinedFrame & anchor = fwd ? t.frames.back() : t.frames.front();
  std::size_t pos = clock.position(anchor.frame_index);

  const Matrix6 flip = speed_flip();
  StateVector x = anchor.state;
  Covariance6 p = anchor.cov;
  if (!fwd) {
    x = flip * x;
    p = flip * p * flip;
  }
  const double half_side = 0.5 * std::sqrt(cfg.extrap_search_area_m2);

  std::vector<RefinedFrame> added;
  int misses = 0;
  while (fwd ? pos + 1 < clock.size() : pos > 0) {
    const EgoMotion ego = fwd ? clock.motion(pos) : clock.motion(pos - 1).reversed();
    pos = fwd ? pos + 1 : pos - 1;
    const Prediction pred = predict(x, p, ego, cfg.q);
    x = pred.state;
    p = pred.cov;
    const TrackState st = TrackState::from_vec(x);
    if (!in_fov(st, cfg)) break;

    const BevBox guess = state_box(st, cfg.back_axle_fraction);
    const Detection * best = nullptr;
    double best_iou = cfg.extrap_iou_min;
    for (const Detection & c : pool.frames[pos]) {
      if (c.score < cfg.extrap_score_min) continue;
      if (std::abs(c.box.cx - guess.cx) > half_side || std::abs(c.box.cy - guess.cy) > half_side) continue;
      const double iou = bev_iou(guess, c.box);
      if (iou > best_iou) {
        best_iou = iou;
        best = &c;
      }
    }

    if (best != nullptr) {
      const auto upd = update(x, p, Measurement::from_box(best->box), cfg.r_extrap, cfg.back_axle_fraction);
      if (upd) {
        x = upd->state;
        p = upd->cov;
        StateVector out_state = fwd ? x : StateVector(flip * x);
        if (t.size) {
          out_state(kLength) = t.size->first;
          out_state(kWidth) = t.size->second;
        }
        added.push_back({clock.frame_index(pos), Source::kExtrapolated, *best, out_state,
                         fwd ? p : Covariance6(flip * p * flip)});
        misses = 0;
        continue;
      }
    }
    if (++misses >= cfg.extrap_max_consecutive_misses) break;
  }

  if (fwd) {
    t.frames.insert(t.frames.end(), added.begin(), added.end());
  } else {
    t.frames.insert(t.frames.begin(), added.rbegin(), added.rend());
  }
  return added.size();
}

/// Labels of one refined track in frame order; `next_emission` numbers the
/// interpolated and extrapolated ones.
struct EmittedLabel
{
  PseudoLabel label;
  bool refined{false};
  std::int64_t emission{0};
};

inline std::vector<EmittedLabel> track_labels(const RefinedTrack & t, const PipelineConfig & cfg,
                                              std::int64_t & next_emission)
{
  std::vector<EmittedLabel> out;
  const double mean = t.mean_score();
  const auto [mz, mh] = t.median_z_h();
  for (const RefinedFrame & f : t.frames) {
    if (f.tag == Source::kMissed) continue;
    const BevBox box = state_box(TrackState::from_vec(f.state), cfg.back_axle_fraction);
    EmittedLabel e;
    e.label.frame_index = f.frame_index;
    e.label.box = box;
    e.label.track_id = t.id;
    switch (f.tag) {
      case Source::kDetected:
        e.label.source = Source::kSmoothed;
        e.label.confidence = f.detection->score;
        e.label.cz = f.detection->cz;
        e.label.h = f.detection->h;
        break;
      case Source::kExtrapolated:
        e.label.source = Source::kExtrapolated;
        e.label.confidence = mean;
        e.label.cz = f.detection ? f.detection->cz : mz;
        e.label.h = f.detection ? f.detection->h : mh;
        e.refined = true;
        break;
      default:
        e.label.source = Source::kInterpolated;
        e.label.confidence = mean;
        e.label.cz = mz;
        e.label.h = mh;
        e.refined = true;
        break;
    }
    out.push_back(e);
  }
  // Emission order: interpolations, then forward, then backward extrapolations.
  int last_detected = std::numeric_limits<int>::min();
  for (const RefinedFrame & f : t.frames) {
    if (f.tag == Source::kDetected) last_detected = f.frame_index;
  }
  auto rank = [&](const EmittedLabel & e) {
    if (e.label.source == Source::kInterpolated) return 0;
    return e.label.frame_index > last_detected ? 1 : 2;
  };
  for (int pass = 0; pass < 3; ++pass) {
    for (EmittedLabel & e : out) {
      if (e.refined && rank(e) == pass) e.emission = next_emission++;
    }
  }
  return out;
}

/// Per-frame NMS over the labels of all tracks. Interpolated and
/// extrapolated labels outrank smoothed detections, later emissions outrank
/// earlier ones, then higher confidence wins.
inline LabelSequence finalize(const std::vector<RefinedTrack> & tracks, const SequenceClock & clock,
                              const PipelineConfig & cfg, std::string sequence_id = {})
{
  using Key = std::pair<int, std::int64_t>;
  std::vector<std::vector<NmsCandidate<Key>>> cands(clock.size());
  std::vector<std::vector<PseudoLabel>> labels(clock.size());
  std::int64_t emission = 0;
  for (const RefinedTrack & t : tracks) {
    for (const EmittedLabel & e : track_labels(t, cfg, emission)) {
      const std::size_t pos = clock.position(e.label.frame_index);
      cands[pos].push_back({e.label.box, Key{e.refined ? 1 : 0, e.refined ? e.emission : 0}, e.label.confidence});
      labels[pos].push_back(e.label);
    }
  }

  LabelSequence out{std::move(sequence_id), {}};
  out.frames.reserve(clock.size());
  for (std::size_t pos = 0; pos < clock.size(); ++pos) {
    std::vector<std::size_t> kept = bev_nms(cands[pos], cfg.nms_iou);
    std::sort(kept.begin(), kept.end(), [&](std::size_t a, std::size_t b) {
      return labels[pos][a].track_id < labels[pos][b].track_id;
    });
    LabelFrame lf{clock.frame_index(pos), {}};
    for (const std::size_t k : kept) lf.labels.push_back(labels[pos][k]);
    out.frames.push_back(std::move(lf));
  }
  return out;
}

/// Self-training baseline: detections with score strictly above the
/// threshold, passed through unchanged.
inline LabelSequence export_st_baseline(const SequenceLog & seq, double threshold)
{
  LabelSequence out{seq.sequence_id, {}};
  for (const Frame & f : seq.frames) {
    LabelFrame lf{f.frame_index, {}};
    for (const Detection & d : f.detections) {
      if (d.score > threshold) lf.labels.push_back({f.frame_index, d.box, d.cz, d.h, -1, Source::kDetected, d.score});
    }
    out.frames.push_back(std::move(lf));
  }
  return out;
}

/// Full offline refinement of one sequence.
inline LabelSequence dream(const SequenceLog & seq, const PipelineConfig & cfg)
{
  const std::vector<Track> tracks = run_tracking(seq, cfg);
  const SequenceClock clock(seq);
  const CandidatePool pool = CandidatePool::from_sequence(seq, cfg.extrap_score_min);

  std::vector<RefinedTrack> refined = smooth_all(tracks);
  resize_tracks(refined);
  for (RefinedTrack & t : refined) {
    interpolate(t);
    extrapolate(t, pool, clock, Direction::kForward, cfg);
    extrapolate(t, pool, clock, Direction::kBackward, cfg);
  }
  return finalize(refined, clock, cfg, seq.sequence_id);
}

}  // namespace offtrack
