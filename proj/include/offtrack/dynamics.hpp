#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "offtrack/geometry.hpp"

namespace offtrack {

using StateVector = Eigen::Matrix<double, 6, 1>;
using Matrix6 = Eigen::Matrix<double, 6, 6>;
using Covariance6 = Matrix6;

/// Component order of the state vector.
enum StateIndex : int { kX = 0, kY = 1, kTheta = 2, kSpeed = 3, kLength = 4, kWidth = 5 };

inline constexpr double kMinExtent = 0.1;

/// Vehicle state relative to the ego vehicle.
///
/// (x, y) is the tracked vehicle's back axle in the ego frame (x forward,
/// y left), theta its heading relative to the ego heading, s its absolute
/// ground speed and (l, w) its footprint.
struct TrackState
{
  double x{};
  double y{};
  double theta{};
  double s{};
  double l{4.0};
  double w{1.8};

  StateVector vec() const
  {
    StateVector v;
    v << x, y, theta, s, l, w;
    return v;
  }

  static TrackState from_vec(const StateVector & v)
  {
    return {v(kX), v(kY), wrap_angle(v(kTheta)), v(kSpeed), v(kLength), v(kWidth)};
  }
};

/// Ego motion over one step, velocities expressed in the ego frame at the
/// start of the step.
struct EgoMotion
{
  double vx{};
  double vy{};
  double wz{};
  double dt{0.1};

  EgoMotion reversed() const { return {-vx, -vy, -wz, dt}; }
};

/// Continuous-time noise intensities, in channel order
/// (theta, speed, ego vx, ego vy, ego yaw rate, length, width).
struct ProcessNoise
{
  std::array<double, 7> q{0.1218, 1.0, 0.00545, 0.00545, 0.00307, 0.01, 0.01};

  void validate() const
  {
    for (const double v : q) {
      if (!(v >= 0.0)) throw std::invalid_argument("ProcessNoise: entries must be >= 0");
    }
  }
};

namespace detail {
inline void require_positive_dt(const EgoMotion & ego)
{
  if (!(ego.dt > 0.0)) throw std::invalid_argument("dynamics: dt must be > 0");
}
}  // namespace detail

/// One forward-Euler step of the relative-frame constant speed and heading
/// model:
///   x' = s cos(theta) - vx + wz y,  y' = s sin(theta) - vy - wz x,
///   theta' = -wz,  s' = l' = w' = 0.
inline TrackState propagate(const TrackState & st, const EgoMotion & ego)
{
  detail::require_positive_dt(ego);
  const double dt = ego.dt;
  TrackState out = st;
  out.x = st.x + dt * (st.s * std::cos(st.theta) - ego.vx + ego.wz * st.y);
  out.y = st.y + dt * (st.s * std::sin(st.theta) - ego.vy - ego.wz * st.x);
  out.theta = wrap_angle(st.theta - dt * ego.wz);
  return out;
}

/// Jacobian of `propagate` with respect to the state.
inline Matrix6 jacobian_f(const TrackState & st, const EgoMotion & ego)
{
  const double dt = ego.dt;
  const double c = std::cos(st.theta);
  const double s = std::sin(st.theta);
  Matrix6 f = Matrix6::Identity();
  f(kX, kY) = dt * ego.wz;
  f(kX, kTheta) = -dt * st.s * s;
  f(kX, kSpeed) = dt * c;
  f(kY, kX) = -dt * ego.wz;
  f(kY, kTheta) = dt * st.s * c;
  f(kY, kSpeed) = dt * s;
  return f;
}

/// Maps the seven noise channels onto the state derivative.
inline Eigen::Matrix<double, 6, 7> noise_input_matrix(const TrackState & st)
{
  Eigen::Matrix<double, 6, 7> g = Eigen::Matrix<double, 6, 7>::Zero();
  g(kTheta, 0) = 1.0;
  g(kSpeed, 1) = 1.0;
  g(kX, 2) = -1.0;
  g(kY, 3) = -1.0;
  g(kTheta, 4) = -1.0;
  g(kX, 4) = st.y;
  g(kY, 4) = -st.x;
  g(kLength, 5) = 1.0;
  g(kWidth, 6) = 1.0;
  return g;
}

/// Q_d = L diag(q) L^T dt.
inline Covariance6 discrete_process_noise(const TrackState & st, const EgoMotion & ego,
                                          const ProcessNoise & noise)
{
  const auto g = noise_input_matrix(st);
  const Eigen::Matrix<double, 7, 1> q = Eigen::Map<const Eigen::Matrix<double, 7, 1>>(noise.q.data());
  Covariance6 qd = g * q.asDiagonal() * g.transpose() * ego.dt;
  return 0.5 * (qd + qd.transpose());
}

/// Reverses the direction of travel so that forward propagation walks back
/// in time. Combine with `EgoMotion::reversed()`.
inline TrackState time_reversed(TrackState st)
{
  st.s = -st.s;
  return st;
}

inline Matrix6 speed_flip()
{
  Matrix6 t = Matrix6::Identity();
  t(kSpeed, kSpeed) = -1.0;
  return t;
}

}  // namespace offtrack
