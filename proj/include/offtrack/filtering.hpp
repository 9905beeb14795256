#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "offtrack/dynamics.hpp"
#include "offtrack/geometry.hpp"

namespace offtrack {

using MeasurementVector = Eigen::Matrix<double, 5, 1>;
using MeasurementJacobian = Eigen::Matrix<double, 5, 6>;
using Matrix5 = Eigen::Matrix<double, 5, 5>;

inline constexpr double kDefaultBackAxleFraction = 0.25;

/// A detected box center, heading and footprint.
struct Measurement
{
  double mx{};
  double my{};
  double mtheta{};
  double ml{4.0};
  double mw{1.8};

  MeasurementVector vec() const
  {
    MeasurementVector v;
    v << mx, my, mtheta, ml, mw;
    return v;
  }

  static Measurement from_box(const BevBox & b) { return {b.cx, b.cy, b.yaw, b.length, b.width}; }
  BevBox box() const { return BevBox(mx, my, mtheta, ml, mw); }
};

/// Diagonal measurement noise in (x, y, theta, l, w) order.
struct MeasurementNoise
{
  std::array<double, 5> r{0.1, 0.1, 0.015, 0.07, 0.04};

  static MeasurementNoise tracking() { return {}; }
  static MeasurementNoise extrapolation() { return {{0.5, 0.5, 0.06, 0.07, 0.04}}; }

  Matrix5 matrix() const
  {
    return Eigen::Map<const Eigen::Matrix<double, 5, 1>>(r.data()).asDiagonal();
  }

  void validate() const
  {
    for (const double v : r) {
      if (!(v > 0.0)) throw std::invalid_argument("MeasurementNoise: entries must be > 0");
    }
  }
};

/// Symmetrizes and, when the smallest eigenvalue drops below -1e-9,
/// projects onto the PSD cone.
inline Covariance6 condition_covariance(const Covariance6 & p)
{
  Covariance6 sym = 0.5 * (p + p.transpose());
  Eigen::SelfAdjointEigenSolver<Covariance6> es(sym);
  if (es.info() == Eigen::Success && es.eigenvalues().minCoeff() < -1e-9) {
    const Eigen::Matrix<double, 6, 1> clamped = es.eigenvalues().cwiseMax(0.0);
    sym = es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose();
    sym = 0.5 * (sym + sym.transpose());
  }
  return sym;
}

// ---------------------------------------------------------------------------
// Measurement model

/// Box center predicted from the back-axle state:
/// center = axle + fraction * l * heading.
inline Measurement measurement_model(const TrackState & st,
                                     double back_axle_fraction = kDefaultBackAxleFraction)
{
  const double off = back_axle_fraction * st.l;
  return {st.x + off * std::cos(st.theta), st.y + off * std::sin(st.theta), st.theta, st.l, st.w};
}

inline MeasurementJacobian measurement_jacobian(const TrackState & st,
                                                double back_axle_fraction = kDefaultBackAxleFraction)
{
  const double c = std::cos(st.theta);
  const double s = std::sin(st.theta);
  const double f = back_axle_fraction;
  MeasurementJacobian h = MeasurementJacobian::Zero();
  h(0, kX) = 1.0;
  h(0, kTheta) = -f * st.l * s;
  h(0, kLength) = f * c;
  h(1, kY) = 1.0;
  h(1, kTheta) = f * st.l * c;
  h(1, kLength) = f * s;
  h(2, kTheta) = 1.0;
  h(3, kLength) = 1.0;
  h(4, kWidth) = 1.0;
  return h;
}

/// Inverse of `measurement_model`: the back-axle state of a detected box,
/// with zero speed.
inline TrackState state_from_measurement(const Measurement & z,
                                         double back_axle_fraction = kDefaultBackAxleFraction)
{
  const double off = back_axle_fraction * z.ml;
  return {z.mx - off * std::cos(z.mtheta), z.my - off * std::sin(z.mtheta), wrap_angle(z.mtheta),
          0.0, z.ml, z.mw};
}

inline BevBox state_box(const TrackState & st, double back_axle_fraction = kDefaultBackAxleFraction)
{
  const Measurement m = measurement_model(st, back_axle_fraction);
  return BevBox(m.mx, m.my, m.mtheta, std::max(m.ml, kMinExtent), std::max(m.mw, kMinExtent));
}

// ---------------------------------------------------------------------------
// Predict / update

struct Prediction
{
  StateVector state;
  Covariance6 cov;
  Matrix6 jacobian;
};

inline Prediction predict(const StateVector & state, const Covariance6 & cov, const EgoMotion & ego,
                          const ProcessNoise & noise)
{
  const TrackState st = TrackState::from_vec(state);
  const Matrix6 f = jacobian_f(st, ego);
  const TrackState next = propagate(st, ego);
  Covariance6 p = f * cov * f.transpose() + discrete_process_noise(st, ego, noise);
  return {next.vec(), condition_covariance(p), f};
}

struct UpdateResult
{
  StateVector state;
  Covariance6 cov;
  MeasurementVector innovation;
};

/// Heading innovation with the pi ambiguity of box detections resolved:
/// a measured heading more than pi/2 away is flipped by pi first.
inline double heading_innovation(double measured, double predicted)
{
  double d = wrap_angle(measured - predicted);
  if (std::abs(d) > 0.5 * std::numbers::pi) d = wrap_angle(d + std::numbers::pi);
  return d;
}

/// EKF measurement update (Joseph form). Returns nullopt when the
/// innovation covariance is numerically singular (condition number above
/// 1e12); the caller should treat the track as degenerate.
inline std::optional<UpdateResult> update(const StateVector & prior_state, const Covariance6 & prior_cov,
                                          const Measurement & z, const MeasurementNoise & noise,
                                          double back_axle_fraction = kDefaultBackAxleFraction)
{
  const TrackState st = TrackState::from_vec(prior_state);
  const MeasurementJacobian h = measurement_jacobian(st, back_axle_fraction);
  const Measurement zhat = measurement_model(st, back_axle_fraction);

  MeasurementVector innov = z.vec() - zhat.vec();
  innov(2) = heading_innovation(z.mtheta, zhat.mtheta);

  const Matrix5 r = noise.matrix();
  Matrix5 s = h * prior_cov * h.transpose() + r;
  s = 0.5 * (s + s.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix5> es(s, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) return std::nullopt;
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > 1e12) return std::nullopt;

  // K = P H^T S^-1, computed as a solve against S.
  const Eigen::LDLT<Matrix5> ldlt(s);
  const Eigen::Matrix<double, 6, 5> k = ldlt.solve(h * prior_cov.transpose()).transpose();

  StateVector x = prior_state + k * innov;
  x(kTheta) = wrap_angle(x(kTheta));
  x(kLength) = std::max(x(kLength), kMinExtent);
  x(kWidth) = std::max(x(kWidth), kMinExtent);

  const Matrix6 ikh = Matrix6::Identity() - k * h;
  const Covariance6 p = ikh * prior_cov * ikh.transpose() + k * r * k.transpose();
  return UpdateResult{x, condition_covariance(p), innov};
}

// ---------------------------------------------------------------------------
// History and RTS smoothing

/// Posterior estimate at one time step.
struct FilterStep
{
  StateVector post_state;
  Covariance6 post_cov;
};

/// Prediction from step k to step k+1, together with the Jacobian F_k
/// evaluated at the step-k posterior.
struct FilterTransition
{
  StateVector prior_state;
  Covariance6 prior_cov;
  Matrix6 jacobian;
  EgoMotion ego;
};

/// Forward-pass record: N steps and N-1 transitions between them.
class FilterHistory
{
public:
  FilterHistory() = default;
  FilterHistory(const StateVector & x0, const Covariance6 & p0) { steps_.push_back({x0, p0}); }

  std::size_t size() const { return steps_.size(); }
  bool empty() const { return steps_.empty(); }

  const std::vector<FilterStep> & steps() const { return steps_; }
  const std::vector<FilterTransition> & transitions() const { return transitions_; }

  const FilterStep & back() const { return steps_.back(); }
  FilterStep & back() { return steps_.back(); }

  /// Appends a predicted step; its posterior starts equal to the prior.
  void push_prediction(const Prediction & pred, const EgoMotion & ego)
  {
    if (steps_.empty()) throw std::logic_error("FilterHistory: prediction without initial step");
    transitions_.push_back({pred.state, pred.cov, pred.jacobian, ego});
    steps_.push_back({pred.state, pred.cov});
  }

  /// Drops everything after step `n - 1`.
  void truncate(std::size_t n)
  {
    if (n == 0 || n > steps_.size()) throw std::out_of_range("FilterHistory::truncate");
    steps_.resize(n);
    transitions_.resize(n - 1);
  }

private:
  std::vector<FilterStep> steps_;
  std::vector<FilterTransition> transitions_;
};

struct SmoothedStep
{
  StateVector state;
  Covariance6 cov;
};

namespace detail {

// Solves A X = B for symmetric A; falls back to A + 1e-9 I when A is not
// numerically positive definite.
inline Matrix6 symmetric_solve(const Matrix6 & a, const Matrix6 & b)
{
  const Eigen::LLT<Matrix6> llt(a);
  if (llt.info() == Eigen::Success) return llt.solve(b);
  const Matrix6 reg = a + 1e-9 * Matrix6::Identity();
  const Eigen::LLT<Matrix6> llt_reg(reg);
  if (llt_reg.info() == Eigen::Success) return llt_reg.solve(b);
  return reg.ldlt().solve(b);
}

}  // namespace detail

/// Fixed-interval Rauch-Tung-Striebel smoother over a forward EKF pass.
///
///   C_k     = P_{k|k} F_k^T P_{k+1|k}^-1
///   x_{k|N} = x_{k|k} + C_k (x_{k+1|N} - x_{k+1|k})
///   P_{k|N} = P_{k|k} + C_k (P_{k+1|N} - P_{k+1|k}) C_k^T
inline std::vector<SmoothedStep> rts_smooth(const FilterHistory & history)
{
  const auto & steps = history.steps();
  const auto & trans = history.transitions();
  const std::size_t n = steps.size();
  std::vector<SmoothedStep> out(n);
  if (n == 0) return out;

  out[n - 1] = {steps[n - 1].post_state, steps[n - 1].post_cov};
  for (std::size_t k = n - 1; k-- > 0;) {
    const FilterStep & cur = steps[k];
    const FilterTransition & tr = trans[k];
    // C^T = P_{k+1|k}^-1 F P_{k|k}, using symmetry of both covariances.
    const Matrix6 gain = detail::symmetric_solve(tr.prior_cov, tr.jacobian * cur.post_cov).transpose();

    StateVector diff = out[k + 1].state - tr.prior_state;
    diff(kTheta) = wrap_angle(diff(kTheta));
    StateVector x = cur.post_state + gain * diff;
    x(kTheta) = wrap_angle(x(kTheta));

    const Covariance6 p = cur.post_cov + gain * (out[k + 1].cov - tr.prior_cov) * gain.transpose();
    out[k] = {x, condition_covariance(p)};
  }
  return out;
}

}  // namespace offtrack
