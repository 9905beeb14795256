#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "offtrack/sim.hpp"
#include "offtrack/tracker.hpp"

using namespace offtrack;

namespace {

Detection det_at(double x, double y, double score = 0.95, double yaw = 0.0)
{
  return {BevBox(x, y, yaw, 4.5, 1.9), 0.8, 1.6, score};
}

FrameInput frame(int k, std::vector<Detection> dets, EgoPose pose = {})
{
  return {k, 0.1 * k, pose, std::move(dets)};
}

int confirmed_live(const Tracker & t)
{
  int n = 0;
  for (const Track & tr : t.live_tracks()) n += tr.confirmed ? 1 : 0;
  return n;
}

}  // namespace

TEST(InFov, SectorExamples)
{
  const FieldOfView fov{};
  EXPECT_TRUE(in_fov({10, 0}, fov));
  EXPECT_FALSE(in_fov({100, 0}, fov));
  EXPECT_FALSE(in_fov({10, 10.01}, fov));
  EXPECT_TRUE(in_fov({10, 9.99}, fov));
  EXPECT_FALSE(in_fov({-5, 0}, fov));
}

TEST(EgoMotionBetween, TranslationAndRotation)
{
  const EgoMotion a = ego_motion_between({0, 0, 0}, {1, 0.5, 0}, 0.1);
  EXPECT_NEAR(a.vx, 10.0, 1e-12);
  EXPECT_NEAR(a.vy, 5.0, 1e-12);
  EXPECT_NEAR(a.wz, 0.0, 1e-12);
  // Heading north: a world step north is forward in the ego frame.
  const EgoMotion b = ego_motion_between({3, 4, std::numbers::pi / 2}, {3, 5, std::numbers::pi / 2 + 0.01}, 0.1);
  EXPECT_NEAR(b.vx, 10.0, 1e-12);
  EXPECT_NEAR(b.vy, 0.0, 1e-12);
  EXPECT_NEAR(b.wz, 0.1, 1e-12);
  // Yaw difference wraps through +-pi.
  const EgoMotion c = ego_motion_between({0, 0, 3.1}, {0, 0, -3.1}, 0.1);
  EXPECT_NEAR(c.wz, (2 * std::numbers::pi - 6.2) / 0.1, 1e-9);
  EXPECT_THROW(ego_motion_between({}, {}, 0.0), std::invalid_argument);
}

TEST(Tracker, EmptyStreamConfirmsNothing)
{
  Tracker t(PipelineConfig{});
  for (int k = 0; k < 20; ++k) EXPECT_TRUE(t.step(frame(k, {})).empty());
  t.finish();
  EXPECT_TRUE(t.take_finished(false).empty());
}

TEST(Tracker, ConfirmsOnThirdHit)
{
  Tracker t(PipelineConfig{});
  EXPECT_TRUE(t.step(frame(0, {det_at(20, 0)})).empty());
  EXPECT_EQ(confirmed_live(t), 0);
  EXPECT_TRUE(t.step(frame(1, {det_at(20, 0)})).empty());
  EXPECT_EQ(confirmed_live(t), 0);
  const auto out = t.step(frame(2, {det_at(20, 0)}));
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].frame_index, 2);
  EXPECT_EQ(out[0].source, Source::kDetected);
  EXPECT_EQ(confirmed_live(t), 1);
  EXPECT_EQ(t.live_tracks().size(), 1u);
  EXPECT_EQ(t.live_tracks()[0].hit_count, 3);
}

TEST(Tracker, SurvivesExactlyMaxAgeMisses)
{
  PipelineConfig cfg;
  Tracker t(cfg);
  for (int k = 0; k < 5; ++k) t.step(frame(k, {det_at(20, 0)}));
  ASSERT_EQ(confirmed_live(t), 1);
  for (int m = 1; m <= cfg.c_max_age; ++m) {
    t.step(frame(4 + m, {}));
    ASSERT_EQ(t.live_tracks().size(), 1u) << "died after " << m << " misses";
    EXPECT_EQ(t.live_tracks()[0].miss_streak, m);
    EXPECT_TRUE(t.live_tracks()[0].confirmed);
  }
  t.step(frame(5 + cfg.c_max_age, {}));
  EXPECT_TRUE(t.live_tracks().empty());
  ASSERT_EQ(t.finished_tracks().size(), 1u);
  // Trailing prediction-only frames are dropped on retirement.
  const Track & done = t.finished_tracks()[0];
  EXPECT_EQ(done.last_frame(), 4);
  EXPECT_EQ(done.history.size(), done.records.size());
}

TEST(Tracker, MissStreakResetsAndConfirmationSticks)
{
  Tracker t(PipelineConfig{});
  for (int k = 0; k < 3; ++k) t.step(frame(k, {det_at(20, 0)}));
  t.step(frame(3, {}));
  t.step(frame(4, {}));
  ASSERT_EQ(t.live_tracks().size(), 1u);
  EXPECT_EQ(t.live_tracks()[0].miss_streak, 2);
  t.step(frame(5, {det_at(20, 0)}));
  EXPECT_EQ(t.live_tracks()[0].miss_streak, 0);
  EXPECT_TRUE(t.live_tracks()[0].confirmed);
  const auto & rec = t.live_tracks()[0].records;
  for (std::size_t i = 1; i < rec.size(); ++i) EXPECT_GT(rec[i].frame_index, rec[i - 1].frame_index);
}

TEST(Tracker, TentativeTrackDiesUnconfirmed)
{
  Tracker t(PipelineConfig{});
  t.step(frame(0, {det_at(20, 0)}));
  for (int k = 1; k <= 4; ++k) t.step(frame(k, {}));
  t.finish();
  EXPECT_TRUE(t.take_finished(true).empty());
}

TEST(Tracker, FovExitTerminates)
{
  // Stationary ego, target driving away at 20 m/s from 70 m: it crosses the
  // 80 m range limit after about half a second.
  Tracker t(PipelineConfig{});
  int k = 0;
  for (; k < 30 && (k < 3 || !t.live_tracks().empty()); ++k) {
    const double x = 70.0 + 2.0 * k;
    t.step(frame(k, {det_at(x, 0)}));
  }
  EXPECT_TRUE(t.live_tracks().empty());
  ASSERT_EQ(t.finished_tracks().size(), 1u);
  EXPECT_LE(t.finished_tracks()[0].last_frame(), 6);
}

TEST(Tracker, RejectsNonMonotonicTime)
{
  Tracker t(PipelineConfig{});
  t.step(frame(0, {}));
  t.step(frame(1, {}));
  try {
    t.step({7, 0.05, {}, {}});
    FAIL() << "expected a throw";
  } catch (const std::invalid_argument & e) {
    EXPECT_NE(std::string(e.what()).find("frame 7"), std::string::npos);
  }
}

TEST(Tracker, FilteredPositionBeatsRawDetections)
{
  double raw_sum = 0.0, filt_sum = 0.0;
  int count = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 0.3);
    Tracker t(PipelineConfig{});
    const double speed = 5.0;
    for (int k = 0; k < 20; ++k) {
      const double tx = 15.0 + speed * 0.1 * k, ty = 2.0;
      const Detection d = det_at(tx + g(rng), ty + g(rng));
      t.step(frame(k, {d}));
      // An outlier can fail the IoU gate and spawn a second track; score
      // whichever track absorbed this frame's detection.
      for (const Track & tr : t.live_tracks()) {
        if (tr.records.back().frame_index != k || tr.records.back().tag != Source::kDetected) continue;
        const BevBox est = state_box(tr.state());
        raw_sum += std::hypot(d.box.cx - tx, d.box.cy - ty);
        filt_sum += std::hypot(est.cx - tx, est.cy - ty);
        ++count;
      }
    }
  }
  EXPECT_GT(count, 350);
  EXPECT_LT(filt_sum / count, raw_sum / count);
}

TEST(Tracker, IdsUniqueAndNeverReused)
{
  const sim::SimOutput s = sim::generate(sim::highway_scenario(3));
  const std::vector<Track> tracks = run_tracking(s.log, PipelineConfig{}, false);
  std::set<int> ids;
  for (const Track & t : tracks) EXPECT_TRUE(ids.insert(t.id).second);
}

TEST(Tracker, OnlineModeIsCausal)
{
  const sim::SimOutput s = sim::generate(sim::highway_scenario(5, 8, 120));
  const PipelineConfig cfg;
  const LabelSequence full = run_online(s.log, cfg);
  for (const std::size_t cut : {std::size_t{1}, std::size_t{17}, std::size_t{60}, std::size_t{119}}) {
    SequenceLog prefix = s.log;
    prefix.frames.resize(cut);
    const LabelSequence part = run_online(prefix, cfg);
    ASSERT_EQ(part.frames.size(), cut);
    for (std::size_t k = 0; k < cut; ++k) {
      ASSERT_EQ(part.frames[k].labels.size(), full.frames[k].labels.size());
      for (std::size_t i = 0; i < part.frames[k].labels.size(); ++i) {
        const PseudoLabel & a = part.frames[k].labels[i];
        const PseudoLabel & b = full.frames[k].labels[i];
        EXPECT_EQ(a.track_id, b.track_id);
        EXPECT_EQ(a.box.cx, b.box.cx);
        EXPECT_EQ(a.box.cy, b.box.cy);
        EXPECT_EQ(a.box.yaw, b.box.yaw);
      }
    }
  }
}

TEST(PipelineConfig, ValidationCatchesBadValues)
{
  PipelineConfig c;
  EXPECT_NO_THROW(c.validate());
  c.assoc_gate = 1.5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = PipelineConfig{};
  c.c_min_hits = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = PipelineConfig{};
  c.q.q[1] = -1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = PipelineConfig{};
  c.p0[5] = 0.0;
  EXPECT_THROW(Tracker{c}, std::invalid_argument);
}
