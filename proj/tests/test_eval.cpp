#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "offtrack/eval.hpp"
#include "oracles.hpp"

using namespace offtrack;

namespace {

// Hand-evaluated PR curve: 4 GT, sorted flags TP FP TP TP FP.
//   recall .25 .25 .50 .75 .75, precision 1 .5 .667 .75 .6
//   r/40 <= .25 -> 1 (10 samples), <= .75 -> .75 (20 samples), above -> 0
//   AP = (10 + 15) / 40
constexpr double kHandAp = 0.625;

/// Matching in one fixed visiting order, written independently.
std::vector<char> match_in_order(const std::vector<std::size_t> & order, const std::vector<std::vector<double>> & iou,
                                 double thr)
{
  const std::size_t ng = iou.empty() ? 0 : iou[0].size();
  std::vector<char> taken(ng, 0), tp(iou.size(), 0);
  for (const std::size_t p : order) {
    double best = -1.0;
    std::size_t bg = ng;
    for (std::size_t g = 0; g < ng; ++g) {
      if (!taken[g] && iou[p][g] > thr && iou[p][g] > best) {
        best = iou[p][g];
        bg = g;
      }
    }
    if (bg < ng) {
      taken[bg] = 1;
      tp[p] = 1;
    }
  }
  return tp;
}

LabelSequence labels(std::string id, const std::vector<std::vector<std::pair<BevBox, double>>> & frames)
{
  LabelSequence s{std::move(id), {}};
  for (std::size_t k = 0; k < frames.size(); ++k) {
    LabelFrame f{static_cast<int>(k), {}};
    for (const auto & [b, score] : frames[k]) f.labels.push_back({static_cast<int>(k), b, 0.8, 1.6, 0, Source::kSmoothed, score});
    s.frames.push_back(std::move(f));
  }
  return s;
}

/// Random predictions around random ground truth, spread over all bins.
std::pair<LabelSequence, LabelSequence> random_eval_set(std::mt19937_64 & rng)
{
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<std::vector<std::pair<BevBox, double>>> gt(5), pred(5);
  for (std::size_t k = 0; k < 5; ++k) {
    for (int i = 0; i < 6; ++i) {
      const BevBox b(5.0 + 70.0 * u(rng), -20.0 + 40.0 * u(rng), 0.3 * g(rng), 4.5, 1.9);
      gt[k].push_back({b, 1.0});
      if (u(rng) < 0.8) {
        const double e = 0.6 * u(rng);
        pred[k].push_back({BevBox(b.cx + e * g(rng), b.cy + e * g(rng), b.yaw, 4.5, 1.9), u(rng)});
      }
    }
    for (int i = 0; i < 2; ++i) pred[k].push_back({BevBox(5.0 + 70.0 * u(rng), -20.0 + 40.0 * u(rng), 0.0, 4.5, 1.9), u(rng)});
  }
  return {labels("s", pred), labels("s", gt)};
}

}  // namespace

TEST(RangeBin, Boundaries)
{
  EXPECT_EQ(range_bin(10.0), RangeBin::k0To30);
  EXPECT_EQ(range_bin(30.0), RangeBin::k30To50);
  EXPECT_EQ(range_bin(50.0), RangeBin::k50To80);
  EXPECT_EQ(range_bin(80.0), RangeBin::k50To80);
  EXPECT_FALSE(range_bin(85.0));
  EXPECT_EQ(range_bin(BevBox(18, 24, 0, 4, 2)), RangeBin::k30To50);
}

TEST(MatchFrame, IdenticalIsTruePositive)
{
  const BevBox b(10, 2, 0.3, 4.5, 1.9);
  const std::vector<ScoredBox> p{{b, 0.9}};
  const std::vector<BevBox> g{b};
  const FrameMatch m = match_frame(p, g, 0.7);
  EXPECT_EQ(m.pred_tp[0], 1);
  EXPECT_EQ(m.gt_matched[0], 1);
}

TEST(MatchFrame, SecondPredictionOnSameGtIsFalsePositive)
{
  const BevBox b(10, 2, 0.3, 4.5, 1.9);
  const std::vector<ScoredBox> p{{b, 0.6}, {b, 0.9}};
  const std::vector<BevBox> g{b};
  const FrameMatch m = match_frame(p, g, 0.5);
  EXPECT_EQ(m.pred_tp[0], 0);
  EXPECT_EQ(m.pred_tp[1], 1);
}

TEST(MatchFrame, StrictThreshold)
{
  // Offset so that IoU is exactly 0.5: (4 - d) / (4 + d) = 0.5.
  const BevBox g(0, 0, 0, 4, 2);
  const BevBox p(4.0 / 3.0, 0, 0, 4, 2);
  ASSERT_NEAR(bev_iou(p, g), 0.5, 1e-12);
  const std::vector<ScoredBox> ps{{p, 1.0}};
  const std::vector<BevBox> gs{g};
  EXPECT_EQ(match_frame(ps, gs, 0.5 + 1e-12).pred_tp[0], 0);
  EXPECT_EQ(match_frame(ps, gs, 0.5 - 1e-12).pred_tp[0], 1);
}

TEST(MatchFrame, AgreesWithEveryTieConsistentOrdering)
{
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> tied_score(1, 4);
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<BevBox> gts;
    for (int i = 0; i < 8; ++i) gts.emplace_back(8.0 * u(rng), 4.0 * u(rng), u(rng), 3.0 + 2.0 * u(rng), 1.5 + u(rng));
    std::vector<ScoredBox> preds;
    for (int i = 0; i < 8; ++i) {
      const BevBox & g = gts[static_cast<std::size_t>(i)];
      preds.push_back({BevBox(g.cx + u(rng) - 0.5, g.cy + u(rng) - 0.5, g.yaw, g.length, g.width), 0.2 * tied_score(rng)});
    }
    std::vector<std::vector<double>> iou(8, std::vector<double>(8));
    for (std::size_t p = 0; p < 8; ++p) {
      for (std::size_t g = 0; g < 8; ++g) iou[p][g] = bev_iou(preds[p].box, gts[g]);
    }
    const FrameMatch m = match_frame(preds, gts, 0.3);

    // Every permutation that visits predictions in non-increasing score.
    std::set<std::vector<char>> outcomes;
    std::vector<std::size_t> perm(8);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::sort(perm.begin(), perm.end(), [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });
    // Permute inside each tie block only.
    std::vector<std::pair<std::size_t, std::size_t>> blocks;
    for (std::size_t i = 0; i < 8;) {
      std::size_t j = i;
      while (j < 8 && preds[perm[j]].score == preds[perm[i]].score) ++j;
      std::sort(perm.begin() + static_cast<std::ptrdiff_t>(i), perm.begin() + static_cast<std::ptrdiff_t>(j));
      blocks.emplace_back(i, j);
      i = j;
    }
    auto recurse = [&](auto & self, std::size_t b) -> void {
      if (b == blocks.size()) {
        outcomes.insert(match_in_order(perm, iou, 0.3));
        return;
      }
      const auto first = perm.begin() + static_cast<std::ptrdiff_t>(blocks[b].first);
      const auto last = perm.begin() + static_cast<std::ptrdiff_t>(blocks[b].second);
      do {
        self(self, b + 1);
      } while (std::next_permutation(first, last));
    };
    recurse(recurse, 0);
    EXPECT_TRUE(outcomes.count(m.pred_tp)) << "trial " << trial;
  }
}

TEST(AveragePrecision, PerfectAndEmpty)
{
  const std::vector<char> tp{1, 1, 1};
  const std::vector<double> sc{0.9, 0.5, 0.1};
  EXPECT_DOUBLE_EQ(*average_precision(tp, sc, 3).ap, 1.0);
  const std::vector<char> fp{0, 0};
  const std::vector<double> sc2{0.9, 0.5};
  EXPECT_DOUBLE_EQ(*average_precision(fp, sc2, 3).ap, 0.0);
  EXPECT_DOUBLE_EQ(*average_precision({}, {}, 3).ap, 0.0);
}

TEST(AveragePrecision, HandComputedCurve)
{
  const std::vector<char> tp{1, 0, 1, 1, 0};
  const std::vector<double> sc{0.9, 0.8, 0.7, 0.6, 0.5};
  const ApResult r = average_precision(tp, sc, 4);
  EXPECT_NEAR(*r.ap, kHandAp, 1e-9);
  ASSERT_EQ(r.curve.size(), 5u);
  EXPECT_NEAR(r.curve[2].precision, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.curve[3].recall, 0.75, 1e-12);
  EXPECT_NEAR(*average_precision(tp, sc, 4, 40).ap, oracle::naive_ap(sc, {true, false, true, true, false}, 4), 1e-12);
}

TEST(AveragePrecision, NoGroundTruth)
{
  EXPECT_FALSE(average_precision({}, {}, 0).ap);
  const std::vector<char> fp{0};
  const std::vector<double> sc{0.4};
  EXPECT_DOUBLE_EQ(*average_precision(fp, sc, 0).ap, 0.0);
}

TEST(AveragePrecision, MatchesNaiveSweep)
{
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + static_cast<std::size_t>(u(rng) * 30);
    std::vector<char> tp;
    std::vector<bool> tpb;
    std::vector<double> sc;
    std::size_t ntp = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool t = u(rng) < 0.6;
      ntp += t;
      tp.push_back(t);
      tpb.push_back(t);
      sc.push_back(std::round(u(rng) * 10.0) / 10.0);  // plenty of ties
    }
    const std::size_t num_gt = ntp + static_cast<std::size_t>(u(rng) * 5);
    if (num_gt == 0) continue;
    EXPECT_NEAR(*average_precision(tp, sc, num_gt).ap, oracle::naive_ap(sc, tpb, num_gt), 1e-12);
  }
}

TEST(AveragePrecision, RejectsBadInput)
{
  const std::vector<char> tp{1};
  const std::vector<double> sc{0.1, 0.2};
  EXPECT_THROW(average_precision(tp, sc, 1), std::invalid_argument);
  EXPECT_THROW(average_precision({}, {}, 1, 0), std::invalid_argument);
}

TEST(Evaluate, LowerScoredDuplicateNeverRaisesAp)
{
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    auto [pred, gt] = random_eval_set(rng);
    const ApReport before = evaluate({pred}, {gt});
    // Duplicate the first true positive of some frame at a lower score.
    const FrameMatch m = [&] {
      std::vector<ScoredBox> pb;
      for (const PseudoLabel & l : pred.frames[0].labels) pb.push_back({l.box, l.confidence});
      std::vector<BevBox> gb;
      for (const PseudoLabel & l : gt.frames[0].labels) gb.push_back(l.box);
      return match_frame(pb, gb, 0.5);
    }();
    for (std::size_t i = 0; i < m.pred_tp.size(); ++i) {
      if (!m.pred_tp[i]) continue;
      PseudoLabel dup = pred.frames[0].labels[i];
      dup.confidence *= 0.5;
      pred.frames[0].labels.push_back(dup);
      break;
    }
    const ApReport after = evaluate({pred}, {gt});
    for (std::size_t c = 0; c < before.cells.size(); ++c) {
      if (before.cells[c].ap && after.cells[c].ap) EXPECT_LE(*after.cells[c].ap, *before.cells[c].ap + 1e-12);
    }
  }
}

TEST(Evaluate, MonotoneScoreTransformInvariant)
{
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    auto [pred, gt] = random_eval_set(rng);
    LabelSequence warped = pred;
    for (LabelFrame & f : warped.frames) {
      for (PseudoLabel & l : f.labels) l.confidence = std::exp(3.0 * l.confidence) - 7.0;
    }
    const ApReport a = evaluate({pred}, {gt});
    const ApReport b = evaluate({warped}, {gt});
    for (std::size_t c = 0; c < a.cells.size(); ++c) {
      ASSERT_EQ(a.cells[c].ap.has_value(), b.cells[c].ap.has_value());
      if (a.cells[c].ap) EXPECT_NEAR(*a.cells[c].ap, *b.cells[c].ap, 1e-12);
    }
  }
}

TEST(Evaluate, BinCountsSumToTotal)
{
  std::mt19937_64 rng(7);
  auto [pred, gt] = random_eval_set(rng);
  // One GT beyond range, excluded everywhere.
  gt.frames[0].labels.push_back({0, BevBox(85, 0, 0, 4.5, 1.9), 0.8, 1.6, 0, Source::kGroundTruth, 1.0});
  const ApReport r = evaluate({pred}, {gt});
  for (const double thr : kIouThresholds) {
    std::size_t sum = 0;
    for (const char * bin : {"0-30", "30-50", "50-80"}) sum += r.cell(thr, bin).num_gt;
    EXPECT_EQ(sum, r.cell(thr, "0-80").num_gt);
    EXPECT_EQ(r.cell(thr, "0-80").num_gt, 30u);
    EXPECT_EQ(r.cell(thr, "0-80").tp + r.cell(thr, "0-80").fn, 30u);
  }
}

TEST(Evaluate, PerfectLabelsScoreOne)
{
  std::mt19937_64 rng(8);
  auto [pred, gt] = random_eval_set(rng);
  const ApReport r = evaluate({gt}, {gt});
  for (const ApCell & c : r.cells) {
    if (c.num_gt > 0) EXPECT_DOUBLE_EQ(*c.ap, 1.0) << c.range;
  }
  EXPECT_EQ(r.cells.size(), 8u);
}

TEST(Evaluate, UnknownSequenceRejected)
{
  const LabelSequence p = labels("a", {{}});
  const LabelSequence g = labels("b", {{}});
  EXPECT_THROW(evaluate({p}, {g}), std::invalid_argument);
}
