#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "offtrack/geometry.hpp"
#include "oracles.hpp"

using namespace offtrack;

namespace {

constexpr double kPi = std::numbers::pi;

BevBox random_box(std::mt19937_64 & rng, double spread = 3.0)
{
  std::uniform_real_distribution<double> pos(-spread, spread);
  std::uniform_real_distribution<double> yaw(-kPi, kPi);
  std::uniform_real_distribution<double> len(1.0, 6.0);
  std::uniform_real_distribution<double> wid(0.5, 3.0);
  return BevBox(pos(rng), pos(rng), yaw(rng), len(rng), wid(rng));
}

BevBox rigid(const BevBox & b, double tx, double ty, double rot)
{
  const double c = std::cos(rot), s = std::sin(rot);
  return BevBox(c * b.cx - s * b.cy + tx, s * b.cx + c * b.cy + ty, b.yaw + rot, b.length, b.width);
}

}  // namespace

TEST(BevBox, WrapsYawAndRejectsBadExtents)
{
  EXPECT_NEAR(BevBox(0, 0, 3 * kPi, 4, 2).yaw, kPi, 1e-12);
  EXPECT_NEAR(BevBox(0, 0, -kPi, 4, 2).yaw, kPi, 1e-12);
  EXPECT_NEAR(BevBox(0, 0, 2 * kPi + 0.5, 4, 2).yaw, 0.5, 1e-12);
  EXPECT_THROW(BevBox(0, 0, 0, 0, 2), std::invalid_argument);
  EXPECT_THROW(BevBox(0, 0, 0, 4, -1), std::invalid_argument);
}

TEST(WrapAngle, StaysInHalfOpenInterval)
{
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> a(-50, 50);
  for (int i = 0; i < 10000; ++i) {
    const double w = wrap_angle(a(rng));
    EXPECT_GT(w, -kPi);
    EXPECT_LE(w, kPi);
  }
}

TEST(Corners, AxisAligned)
{
  const auto c = corners(BevBox(0, 0, 0, 4, 2));
  const std::vector<Point2> expect{{2, 1}, {-2, 1}, {-2, -1}, {2, -1}};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(c[i].x, expect[i].x, 1e-12);
    EXPECT_NEAR(c[i].y, expect[i].y, 1e-12);
  }
}

TEST(Corners, QuarterTurnUpToCyclicRotation)
{
  const auto c = corners(BevBox(0, 0, kPi / 2, 4, 2));
  const std::vector<Point2> expect{{-1, 2}, {-1, -2}, {1, -2}, {1, 2}};
  bool found = false;
  for (std::size_t shift = 0; shift < 4 && !found; ++shift) {
    bool ok = true;
    for (std::size_t i = 0; i < 4; ++i) {
      ok = ok && std::abs(c[(i + shift) % 4].x - expect[i].x) < 1e-12 && std::abs(c[(i + shift) % 4].y - expect[i].y) < 1e-12;
    }
    found = ok;
  }
  EXPECT_TRUE(found);
}

TEST(Corners, MatchRotationMatrixExpansion)
{
  const BevBox b(1, 1, kPi / 6, 3, 1);
  const auto c = corners(b);
  const Eigen::Rotation2Dd rot(kPi / 6);
  const std::vector<Eigen::Vector2d> local{{1.5, 0.5}, {-1.5, 0.5}, {-1.5, -0.5}, {1.5, -0.5}};
  for (std::size_t i = 0; i < 4; ++i) {
    const Eigen::Vector2d p = rot * local[i] + Eigen::Vector2d(1, 1);
    EXPECT_NEAR(c[i].x, p.x(), 1e-12);
    EXPECT_NEAR(c[i].y, p.y(), 1e-12);
  }
}

TEST(Corners, CounterClockwiseForRandomBoxes)
{
  std::mt19937_64 rng(2);
  for (int i = 0; i < 200; ++i) {
    const BevBox b = random_box(rng);
    const auto c = corners(b);
    EXPECT_NEAR(polygon_area(c), b.area(), 1e-9);
  }
}

TEST(BevIou, HandCases)
{
  const BevBox a(0, 0, 0, 4, 2);
  EXPECT_NEAR(bev_iou(a, a), 1.0, 1e-12);
  EXPECT_NEAR(bev_iou(a, BevBox(1, 0, 0, 4, 2)), 0.6, 1e-12);
  EXPECT_EQ(bev_iou(a, BevBox(4.01, 0, 0, 4, 2)), 0.0);
  // Touching edges share no area.
  EXPECT_NEAR(bev_iou(a, BevBox(4.0, 0, 0, 4, 2)), 0.0, 1e-12);
  // Contained box: IoU = small / large.
  EXPECT_NEAR(bev_iou(a, BevBox(0, 0, 0, 2, 1)), 2.0 / 8.0, 1e-12);
  // Cross shape: 2x2 overlap, union 8 + 8 - 4.
  EXPECT_NEAR(bev_iou(a, BevBox(0, 0, kPi / 2, 4, 2)), 4.0 / 12.0, 1e-12);
}

TEST(BevIou, SymmetryIdentityRigidInvariance)
{
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> t(-100, 100);
  std::uniform_real_distribution<double> r(-kPi, kPi);
  for (int i = 0; i < 2000; ++i) {
    const BevBox a = random_box(rng);
    const BevBox b = random_box(rng);
    const double iou = bev_iou(a, b);
    EXPECT_GE(iou, 0.0);
    EXPECT_LE(iou, 1.0);
    EXPECT_LT(std::abs(iou - bev_iou(b, a)), 1e-12);
    EXPECT_NEAR(bev_iou(a, a), 1.0, 1e-12);
    const double tx = t(rng), ty = t(rng), rot = r(rng);
    EXPECT_NEAR(bev_iou(rigid(a, tx, ty, rot), rigid(b, tx, ty, rot)), iou, 1e-9);
  }
}

TEST(BevIou, AgreesWithMonteCarloOnSample)
{
  // The full 1000-pair check runs in the acceptance binary.
  std::mt19937_64 rng(4);
  for (int i = 0; i < 50; ++i) {
    const BevBox a = random_box(rng, 2.0);
    const BevBox b = random_box(rng, 2.0);
    EXPECT_NEAR(bev_iou(a, b), oracle::monte_carlo_iou(a, b, 1000, rng), 1e-3);
  }
}

TEST(BevNms, SingleAndDuplicate)
{
  const BevBox b(0, 0, 0, 4, 2);
  std::vector<NmsCandidate<int>> one{{b, 0, 0.5}};
  EXPECT_EQ(bev_nms(one, 0.1), std::vector<std::size_t>{0});

  std::vector<NmsCandidate<int>> two{{b, 1, 0.1}, {b, 2, 0.05}};
  EXPECT_EQ(bev_nms(two, 0.1), std::vector<std::size_t>{1});
}

TEST(BevNms, StrictThreshold)
{
  // IoU exactly 0.6 is not above 0.6, so both stay.
  std::vector<NmsCandidate<int>> c{{BevBox(0, 0, 0, 4, 2), 0, 0.9}, {BevBox(1, 0, 0, 4, 2), 0, 0.8}};
  EXPECT_EQ(bev_nms(c, 0.6).size(), 2u);
  EXPECT_EQ(bev_nms(c, 0.59).size(), 1u);
  EXPECT_THROW(bev_nms(c, 1.5), std::invalid_argument);
}

TEST(BevNms, MatchesBruteForceGreedy)
{
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> pri(0, 2);
  std::uniform_real_distribution<double> score(0, 1);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<NmsCandidate<int>> c;
    std::vector<double> pr, sc;
    for (int i = 0; i < 6; ++i) {
      c.push_back({random_box(rng, 2.0), pri(rng), score(rng)});
      pr.push_back(c.back().priority);
      sc.push_back(c.back().score);
    }
    std::vector<std::vector<double>> iou(6, std::vector<double>(6));
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = 0; j < 6; ++j) iou[i][j] = bev_iou(c[i].box, c[j].box);
    }
    const auto kept = bev_nms(c, 0.3);
    EXPECT_EQ(kept, oracle::greedy_nms(pr, sc, iou, 0.3));
    for (std::size_t i = 0; i < kept.size(); ++i) {
      for (std::size_t j = i + 1; j < kept.size(); ++j) EXPECT_LE(iou[kept[i]][kept[j]], 0.3);
    }
  }
}
