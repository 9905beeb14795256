#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "offtrack/geometry.hpp"

namespace offtrack {

/// One frame-wise detector output.
struct Detection
{
  BevBox box;
  double cz{0.0};  ///< passthrough box center height
  double h{1.5};   ///< passthrough box height
  double score{0.0};
};

/// Ego pose in the world frame (SE(2)).
struct EgoPose
{
  double x{};
  double y{};
  double yaw{};
};

struct Frame
{
  int frame_index{};
  double timestamp{};
  EgoPose ego_pose;
  std::vector<Detection> detections;
  std::optional<std::vector<Detection>> pool_detections;
};

struct SequenceLog
{
  std::string sequence_id;
  std::vector<Frame> frames;
};

/// Where a per-frame record or label came from.
enum class Source { kDetected, kMissed, kSmoothed, kInterpolated, kExtrapolated, kGroundTruth };

inline std::string_view to_string(Source s)
{
  switch (s) {
    case Source::kDetected: return "detected";
    case Source::kMissed: return "missed";
    case Source::kSmoothed: return "smoothed";
    case Source::kInterpolated: return "interpolated";
    case Source::kExtrapolated: return "extrapolated";
    case Source::kGroundTruth: return "ground_truth";
  }
  return "unknown";
}

inline Source source_from_string(std::string_view s)
{
  for (const Source v : {Source::kDetected, Source::kMissed, Source::kSmoothed, Source::kInterpolated,
                         Source::kExtrapolated, Source::kGroundTruth}) {
    if (to_string(v) == s) return v;
  }
  throw std::invalid_argument("unknown source tag: " + std::string(s));
}

struct PseudoLabel
{
  int frame_index{};
  BevBox box;
  double cz{0.0};
  double h{1.5};
  int track_id{-1};
  Source source{Source::kDetected};
  double confidence{0.0};
};

/// Labels of one frame. Frames without labels are kept so that consumers
/// see the full frame range.
struct LabelFrame
{
  int frame_index{};
  std::vector<PseudoLabel> labels;
};

struct LabelSequence
{
  std::string sequence_id;
  std::vector<LabelFrame> frames;
};

}  // namespace offtrack
