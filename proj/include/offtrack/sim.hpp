#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "offtrack/geometry.hpp"
#include "offtrack/types.hpp"

namespace offtrack::sim {

/// Constant speed and yaw-rate ego trajectory (straight when yaw_rate = 0).
struct EgoSpec
{
  double x{0.0};
  double y{0.0};
  double yaw{0.0};
  double speed{10.0};
  double yaw_rate{0.0};
};

/// A vehicle moving at constant world speed and heading. (x, y) is the box
/// center at t = 0.
struct VehicleSpec
{
  double x{};
  double y{};
  double heading{};
  double speed{};
  double length{4.5};
  double width{1.9};
  double cz{0.8};
  double height{1.6};
  double dropout{0.0};  ///< extra range-independent miss probability
};

/// Per-component (x, y, theta, l, w) noise standard deviations.
using Sigma5 = std::array<double, 5>;

/// Detector stand-in.
///
/// A vehicle in the sensor sector at range r is detected confidently with
/// probability `detect_p_max * logistic(r; detect_r50, detect_slope)` and
/// otherwise lands only in the low-threshold pool with the analogous pool
/// probability. Box noise grows linearly with range and boxes inflate by
/// `size_bias_per_m` per meter past `size_bias_start_m`.
struct SensorSpec
{
  double half_angle{std::numbers::pi / 4.0};
  double gt_max_range{80.0};

  double detect_p_max{0.97};
  double detect_r50{50.0};
  double detect_slope{3.0};  ///< 0 gives a hard cutoff at r50

  double pool_p_max{0.95};
  double pool_r50{75.0};
  double pool_slope{3.0};

  Sigma5 sigma_near{0.10, 0.10, 0.03, 0.10, 0.05};
  Sigma5 sigma_per_m{0.003, 0.003, 0.001, 0.003, 0.0015};

  double size_bias_start_m{40.0};
  double size_bias_per_m{0.008};

  /// Confident score: score_near - score_per_m * r, plus noise, clamped
  /// into (0.8, 1). Pool-only score: uniform in [pool_score_lo, 0.8).
  double score_near{0.99};
  double score_per_m{0.0015};
  double score_sigma{0.03};
  double pool_score_lo{-2.0};

  double fp_rate{0.2};         ///< false positives per frame in the detections
  double fp_high_score_prob{0.3};
  double clutter_rate{2.0};    ///< extra pool-only false candidates per frame
};

struct ScenarioSpec
{
  std::uint64_t seed{0};
  std::string sequence_id{"sim"};
  int num_frames{200};
  double frame_rate{10.0};
  EgoSpec ego{};
  std::vector<VehicleSpec> vehicles;
  SensorSpec sensor{};

  void validate() const
  {
    if (num_frames <= 0) throw std::invalid_argument("scenario: num_frames must be > 0");
    if (vehicles.empty()) throw std::invalid_argument("scenario: at least one vehicle required");
    if (!(frame_rate > 0.0)) throw std::invalid_argument("scenario: frame_rate must be > 0");
    for (const Sigma5 * s : {&sensor.sigma_near, &sensor.sigma_per_m}) {
      for (const double v : *s) {
        if (!(v >= 0.0)) throw std::invalid_argument("scenario: noise sigmas must be >= 0");
      }
    }
    auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!prob(sensor.detect_p_max) || !prob(sensor.pool_p_max) || !prob(sensor.fp_high_score_prob)) {
      throw std::invalid_argument("scenario: probabilities must lie in [0, 1]");
    }
    for (const VehicleSpec & v : vehicles) {
      if (!prob(v.dropout)) throw std::invalid_argument("scenario: dropout must lie in [0, 1]");
      if (!(v.length > 0.0) || !(v.width > 0.0)) throw std::invalid_argument("scenario: vehicle size must be > 0");
    }
  }
};

inline double logistic_probability(double r, double p_max, double r50, double slope)
{
  if (slope <= 0.0) return r <= r50 ? p_max : 0.0;
  return p_max / (1.0 + std::exp((r - r50) / slope));
}

inline double detection_probability(const SensorSpec & s, double r)
{
  return logistic_probability(r, s.detect_p_max, s.detect_r50, s.detect_slope);
}

inline double pool_probability(const SensorSpec & s, double r)
{
  return std::max(logistic_probability(r, s.pool_p_max, s.pool_r50, s.pool_slope), detection_probability(s, r));
}

inline EgoPose ego_pose_at(const EgoSpec & e, double t)
{
  if (std::abs(e.yaw_rate) < 1e-12) {
    return {e.x + e.speed * t * std::cos(e.yaw), e.y + e.speed * t * std::sin(e.yaw), wrap_angle(e.yaw)};
  }
  const double radius = e.speed / e.yaw_rate;
  const double yaw = e.yaw + e.yaw_rate * t;
  return {e.x + radius * (std::sin(yaw) - std::sin(e.yaw)), e.y - radius * (std::cos(yaw) - std::cos(e.yaw)),
          wrap_angle(yaw)};
}

/// Ground-truth box of a vehicle at time t, in the ego frame of `ego`.
inline BevBox relative_box(const VehicleSpec & v, double t, const EgoPose & ego)
{
  const double wx = v.x + v.speed * t * std::cos(v.heading);
  const double wy = v.y + v.speed * t * std::sin(v.heading);
  const double dx = wx - ego.x;
  const double dy = wy - ego.y;
  const double c = std::cos(ego.yaw);
  const double s = std::sin(ego.yaw);
  return BevBox(c * dx + s * dy, -s * dx + c * dy, v.heading - ego.yaw, v.length, v.width);
}

struct SimOutput
{
  SequenceLog log;
  LabelSequence ground_truth;
};

/// Deterministic given the seed. Ground truth holds every vehicle whose
/// center lies in the sensor sector within `gt_max_range`; track_id is the
/// vehicle index.
inline SimOutput generate(const ScenarioSpec & spec)
{
  spec.validate();
  const SensorSpec & sen = spec.sensor;
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SimOutput out;
  out.log.sequence_id = spec.sequence_id;
  out.ground_truth.sequence_id = spec.sequence_id;
  const double pool_reach = sen.pool_r50 + 10.0 * std::max(sen.pool_slope, 1.0);

  auto noisy = [&](const BevBox & gt, double r) {
    std::array<double, 5> e{};
    for (std::size_t i = 0; i < 5; ++i) e[i] = (sen.sigma_near[i] + sen.sigma_per_m[i] * r) * gauss(rng);
    const double inflate = 1.0 + sen.size_bias_per_m * std::max(0.0, r - sen.size_bias_start_m);
    return BevBox(gt.cx + e[0], gt.cy + e[1], gt.yaw + e[2], std::max(0.5, gt.length * inflate + e[3]),
                  std::max(0.3, gt.width * inflate + e[4]));
  };
  auto sector_point = [&](double r_lo, double r_hi) {
    const double r = r_lo + (r_hi - r_lo) * unit(rng);
    const double a = (2.0 * unit(rng) - 1.0) * sen.half_angle;
    return std::array<double, 2>{r * std::cos(a), r * std::sin(a)};
  };
  auto poisson = [&](double mean) {
    if (mean <= 0.0) return 0;
    std::poisson_distribution<int> d(mean);
    return d(rng);
  };

  for (int k = 0; k < spec.num_frames; ++k) {
    const double t = k / spec.frame_rate;
    const EgoPose ego = ego_pose_at(spec.ego, t);
    Frame frame;
    frame.frame_index = k;
    frame.timestamp = t;
    frame.ego_pose = ego;
    std::vector<Detection> pool;
    LabelFrame gt{k, {}};

    for (std::size_t vi = 0; vi < spec.vehicles.size(); ++vi) {
      const VehicleSpec & v = spec.vehicles[vi];
      const BevBox box = relative_box(v, t, ego);
      const double r = std::hypot(box.cx, box.cy);
      const bool in_sector = std::abs(std::atan2(box.cy, box.cx)) <= sen.half_angle;
      if (in_sector && r <= sen.gt_max_range) {
        gt.labels.push_back({k, box, v.cz, v.height, static_cast<int>(vi), Source::kGroundTruth, 1.0});
      }
      if (!in_sector || r > pool_reach) continue;

      const double u = unit(rng);
      const BevBox det_box = noisy(box, r);
      const double score_noise = gauss(rng);
      const double pool_u = unit(rng);
      const double p_det = detection_probability(sen, r) * (1.0 - v.dropout);
      if (u < p_det) {
        const double score = std::clamp(sen.score_near - sen.score_per_m * r + sen.score_sigma * score_noise, 0.801, 0.999);
        Detection d{det_box, v.cz, v.height, score};
        frame.detections.push_back(d);
        pool.push_back(d);
      } else if (u < pool_probability(sen, r)) {
        const double score = sen.pool_score_lo + (0.8 - sen.pool_score_lo) * pool_u;
        pool.push_back({det_box, v.cz, v.height, score});
      }
    }

    const int nfp = poisson(sen.fp_rate);
    for (int i = 0; i < nfp; ++i) {
      const auto p = sector_point(5.0, sen.gt_max_range);
      const BevBox b(p[0], p[1], (2.0 * unit(rng) - 1.0) * std::numbers::pi, 3.8 + unit(rng), 1.6 + 0.4 * unit(rng));
      const bool high = unit(rng) < sen.fp_high_score_prob;
      const double score = high ? 0.8 + 0.15 * unit(rng) + 1e-3 : 0.3 + 0.5 * unit(rng);
      Detection d{b, 0.8, 1.6, score};
      frame.detections.push_back(d);
      pool.push_back(d);
    }
    const int nclutter = poisson(sen.clutter_rate);
    for (int i = 0; i < nclutter; ++i) {
      const auto p = sector_point(5.0, pool_reach);
      const BevBox b(p[0], p[1], (2.0 * unit(rng) - 1.0) * std::numbers::pi, 3.8 + unit(rng), 1.6 + 0.4 * unit(rng));
      pool.push_back({b, 0.8, 1.6, sen.pool_score_lo + (0.8 - sen.pool_score_lo) * unit(rng)});
    }

    frame.pool_detections = std::move(pool);
    out.log.frames.push_back(std::move(frame));
    out.ground_truth.frames.push_back(std::move(gt));
  }
  return out;
}

/// Multi-lane highway scene around a straight-driving ego: vehicles that
/// recede from close range, are approached from far ahead, or oncoming.
/// Every vehicle gets its own lane so ground-truth boxes never overlap.
inline ScenarioSpec highway_scenario(std::uint64_t seed, int num_vehicles = 8, int num_frames = 200,
                                     double frame_rate = 10.0)
{
  ScenarioSpec spec;
  spec.seed = seed;
  spec.sequence_id = "highway_" + std::to_string(seed);
  spec.num_frames = num_frames;
  spec.frame_rate = frame_rate;
  spec.ego.speed = 10.0;

  std::mt19937_64 rng(seed ^ 0x9E3779B97F4A7C15ULL);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double duration = num_frames / frame_rate;

  std::vector<double> lanes;
  for (int i = 0; i < num_vehicles; ++i) {
    const int k = i / 2 + 1;
    lanes.push_back((i % 2 == 0 ? 1.0 : -1.0) * 3.5 * k);
  }
  std::shuffle(lanes.begin(), lanes.end(), rng);

  for (int i = 0; i < num_vehicles; ++i) {
    VehicleSpec v;
    v.y = lanes[static_cast<std::size_t>(i)];
    v.length = 4.2 + 0.8 * unit(rng);
    v.width = 1.7 + 0.3 * unit(rng);
    const double kind = unit(rng);
    const double phase = unit(rng);
    if (kind < 0.4) {
      // Receding: starts close, pulls away.
      const double rel = 3.0 + 3.0 * unit(rng);
      v.heading = 0.0;
      v.speed = spec.ego.speed + rel;
      v.x = 10.0 + 30.0 * phase - rel * 0.3 * duration * phase;
    } else if (kind < 0.7) {
      // Approached from far ahead.
      const double rel = 3.0 + 4.0 * unit(rng);
      v.heading = 0.0;
      v.speed = spec.ego.speed - rel;
      v.x = 60.0 + rel * duration * (0.3 + 0.5 * phase);
    } else {
      // Oncoming.
      v.heading = std::numbers::pi;
      v.speed = 8.0 + 6.0 * unit(rng);
      const double closing = spec.ego.speed + v.speed;
      v.x = 90.0 + closing * duration * 0.8 * phase;
    }
    spec.vehicles.push_back(v);
  }
  return spec;
}

}  // namespace offtrack::sim
