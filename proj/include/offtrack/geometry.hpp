#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace offtrack {

/// Wraps an angle into (-pi, pi].
inline double wrap_angle(double a)
{
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::remainder(a, two_pi);
  if (a <= -std::numbers::pi) a += two_pi;
  return a;
}

struct Point2
{
  double x{};
  double y{};
};

/// Oriented rectangle in the ground plane.
///
/// The constructor wraps yaw and rejects non-positive extents. Fields stay
/// public for aggregate-style access; code that writes them directly is
/// responsible for keeping yaw wrapped and the extents positive.
struct BevBox
{
  double cx{};
  double cy{};
  double yaw{};
  double length{1.0};
  double width{1.0};

  BevBox() = default;
  BevBox(double cx_, double cy_, double yaw_, double length_, double width_)
      : cx(cx_), cy(cy_), yaw(wrap_angle(yaw_)), length(length_), width(width_)
  {
    if (!(length > 0.0) || !(width > 0.0)) {
      throw std::invalid_argument("BevBox: length and width must be positive");
    }
  }

  double area() const { return length * width; }
};

/// Corners in counter-clockwise order: front-left, rear-left, rear-right,
/// front-right (in the box frame, +x is the heading).
inline std::array<Point2, 4> corners(const BevBox & box)
{
  const double c = std::cos(box.yaw);
  const double s = std::sin(box.yaw);
  const double hl = 0.5 * box.length;
  const double hw = 0.5 * box.width;
  constexpr std::array<std::array<double, 2>, 4> signs{{{1, 1}, {-1, 1}, {-1, -1}, {1, -1}}};
  std::array<Point2, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) {
    const double lx = signs[i][0] * hl;
    const double ly = signs[i][1] * hw;
    out[i] = {box.cx + c * lx - s * ly, box.cy + s * lx + c * ly};
  }
  return out;
}

/// Signed shoelace area; positive for counter-clockwise polygons.
inline double polygon_area(std::span<const Point2> poly)
{
  const std::size_t n = poly.size();
  if (n < 3) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Point2 & p = poly[i];
    const Point2 & q = poly[(i + 1) % n];
    acc += p.x * q.y - q.x * p.y;
  }
  return 0.5 * acc;
}

namespace detail {

inline double cross(const Point2 & o, const Point2 & a, const Point2 & b)
{
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

// Sutherland-Hodgman: clip `subject` by every edge of the convex CCW `clip`.
inline std::vector<Point2> clip_convex(std::vector<Point2> subject, std::span<const Point2> clip)
{
  std::vector<Point2> next;
  const std::size_t m = clip.size();
  for (std::size_t e = 0; e < m && !subject.empty(); ++e) {
    const Point2 & a = clip[e];
    const Point2 & b = clip[(e + 1) % m];
    next.clear();
    const std::size_t n = subject.size();
    for (std::size_t i = 0; i < n; ++i) {
      const Point2 & p = subject[i];
      const Point2 & q = subject[(i + 1) % n];
      const double dp = cross(a, b, p);
      const double dq = cross(a, b, q);
      const bool p_in = dp >= 0.0;
      const bool q_in = dq >= 0.0;
      if (p_in) next.push_back(p);
      if (p_in != q_in) {
        const double t = dp / (dp - dq);
        next.push_back({p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)});
      }
    }
    subject.swap(next);
  }
  return subject;
}

}  // namespace detail

/// Area of the intersection of two oriented boxes.
inline double intersection_area(const BevBox & a, const BevBox & b)
{
  // Work relative to a's center to keep the arithmetic well conditioned.
  BevBox la = a;
  BevBox lb = b;
  la.cx = 0.0;
  la.cy = 0.0;
  lb.cx = b.cx - a.cx;
  lb.cy = b.cy - a.cy;
  const auto ca = corners(la);
  const auto cb = corners(lb);
  const auto poly = detail::clip_convex({ca.begin(), ca.end()}, cb);
  if (poly.size() < 3) return 0.0;
  const double area = polygon_area(poly);
  if (std::abs(area) < 1e-12) return 0.0;
  return std::abs(area);
}

inline double bev_iou(const BevBox & a, const BevBox & b)
{
  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

/// One NMS input. `Priority` is any totally ordered key; larger wins.
template <class Priority>
struct NmsCandidate
{
  BevBox box;
  Priority priority{};
  double score{};
};

/// Greedy BEV non-maximum suppression.
///
/// Candidates are visited by descending priority, then descending score,
/// then ascending input index. A candidate is dropped when its IoU with an
/// already kept box is strictly greater than `iou_threshold`. Returns the
/// kept input indices in visiting order.
template <class Priority>
std::vector<std::size_t> bev_nms(std::span<const NmsCandidate<Priority>> candidates,
                                 double iou_threshold)
{
  if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0)) {
    throw std::invalid_argument("bev_nms: iou_threshold must lie in [0, 1]");
  }
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    const auto & a = candidates[i];
    const auto & b = candidates[j];
    if (b.priority < a.priority) return true;
    if (a.priority < b.priority) return false;
    return a.score > b.score;
  });

  std::vector<std::size_t> kept;
  for (const std::size_t idx : order) {
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
      return bev_iou(candidates[idx].box, candidates[k].box) > iou_threshold;
    });
    if (!suppressed) kept.push_back(idx);
  }
  return kept;
}

template <class Priority>
std::vector<std::size_t> bev_nms(const std::vector<NmsCandidate<Priority>> & candidates,
                                 double iou_threshold)
{
  return bev_nms(std::span<const NmsCandidate<Priority>>(candidates), iou_threshold);
}

}  // namespace offtrack
