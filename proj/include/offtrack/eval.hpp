#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "offtrack/geometry.hpp"
#include "offtrack/types.hpp"

namespace offtrack {

/// Depth bins by BEV center range: [0, 30), [30, 50), [50, 80].
enum class RangeBin { k0To30 = 0, k30To50 = 1, k50To80 = 2 };

inline constexpr double kMaxEvalRange = 80.0;

inline std::optional<RangeBin> range_bin(double range)
{
  if (!(range >= 0.0) || range > kMaxEvalRange) return std::nullopt;
  if (range < 30.0) return RangeBin::k0To30;
  if (range < 50.0) return RangeBin::k30To50;
  return RangeBin::k50To80;
}

inline std::optional<RangeBin> range_bin(const BevBox & box) { return range_bin(std::hypot(box.cx, box.cy)); }

struct ScoredBox
{
  BevBox box;
  double score{};
};

struct FrameMatch
{
  std::vector<char> pred_tp;         ///< per prediction
  std::vector<int> pred_gt;          ///< matched GT index or -1
  std::vector<char> gt_matched;      ///< per ground-truth box
};

/// Greedy matching in descending score order (ties by input index): each
/// prediction takes the unmatched ground truth with the highest BEV IoU when
/// that IoU is strictly above `iou_thresh`.
inline FrameMatch match_frame(std::span<const ScoredBox> preds, std::span<const BevBox> gts, double iou_thresh)
{
  FrameMatch m;
  m.pred_tp.assign(preds.size(), 0);
  m.pred_gt.assign(preds.size(), -1);
  m.gt_matched.assign(gts.size(), 0);
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return preds[a].score > preds[b].score; });
  for (const std::size_t p : order) {
    int best = -1;
    double best_iou = iou_thresh;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (m.gt_matched[g]) continue;
      const double iou = bev_iou(preds[p].box, gts[g]);
      if (iou > best_iou) {
        best_iou = iou;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      m.pred_tp[p] = 1;
      m.pred_gt[p] = best;
      m.gt_matched[static_cast<std::size_t>(best)] = 1;
    }
  }
  return m;
}

struct PrPoint
{
  double score{};
  double precision{};
  double recall{};
};

struct ApResult
{
  std::optional<double> ap;  ///< empty when undefined (no GT and no predictions)
  std::vector<PrPoint> curve;
};

/// Interpolated average precision over `num_recall_points` equally spaced
/// recall samples (1/N, 2/N, ..., 1); N = 40 is the current KITTI protocol.
/// Predictions with equal scores enter the curve together.
inline ApResult average_precision(std::span<const char> tp, std::span<const double> scores, std::size_t num_gt,
                                  int num_recall_points = 40)
{
  if (tp.size() != scores.size()) throw std::invalid_argument("average_precision: size mismatch");
  if (num_recall_points < 1) throw std::invalid_argument("average_precision: num_recall_points must be >= 1");
  ApResult res;
  if (num_gt == 0) {
    if (!tp.empty()) res.ap = 0.0;
    return res;
  }

  std::vector<std::size_t> order(tp.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  // (tp count, prediction count) at each distinct score threshold.
  std::vector<std::pair<std::size_t, std::size_t>> cuts;
  std::size_t ntp = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    ntp += tp[order[k]] ? 1 : 0;
    const bool last_of_tie = k + 1 == order.size() || scores[order[k + 1]] != scores[order[k]];
    if (last_of_tie) {
      cuts.emplace_back(ntp, k + 1);
      res.curve.push_back({scores[order[k]], static_cast<double>(ntp) / static_cast<double>(k + 1),
                           static_cast<double>(ntp) / static_cast<double>(num_gt)});
    }
  }

  const auto n = static_cast<std::size_t>(num_recall_points);
  double sum = 0.0;
  for (std::size_t r = 1; r <= n; ++r) {
    double best = 0.0;
    for (std::size_t c = 0; c < cuts.size(); ++c) {
      // recall >= r / n, compared in integers.
      if (cuts[c].first * n >= r * num_gt) best = std::max(best, res.curve[c].precision);
    }
    sum += best;
  }
  res.ap = sum / static_cast<double>(n);
  return res;
}

// ---------------------------------------------------------------------------

inline constexpr std::array<double, 2> kIouThresholds{0.5, 0.7};

/// Cell labels in report order; index 3 is the whole 0-80 m range.
inline constexpr std::array<const char *, 4> kRangeNames{"0-30", "30-50", "50-80", "0-80"};

struct ApCell
{
  double iou_threshold{};
  std::string range;
  std::optional<double> ap;
  std::vector<PrPoint> curve;
  std::size_t tp{0};
  std::size_t fp{0};
  std::size_t fn{0};
  std::size_t num_gt{0};
};

struct ApReport
{
  std::vector<ApCell> cells;  ///< iou-major, then kRangeNames order

  const ApCell & cell(double iou, const std::string & range) const
  {
    for (const ApCell & c : cells) {
      if (c.iou_threshold == iou && c.range == range) return c;
    }
    throw std::out_of_range("ApReport: no such cell");
  }
};

struct EvalOptions
{
  int num_recall_points{40};
};

/// Evaluates label sets against ground truth frame by frame.
///
/// Matching runs over all boxes of a frame. A matched prediction counts as
/// a true positive in its ground truth's bin; an unmatched prediction counts
/// as a false positive in its own bin. Boxes beyond 80 m are ignored, as are
/// predictions matched to them.
inline ApReport evaluate(const std::vector<LabelSequence> & preds, const std::vector<LabelSequence> & gts,
                         const EvalOptions & opt = {})
{
  std::map<std::string, const LabelSequence *> gt_by_id;
  for (const LabelSequence & g : gts) gt_by_id[g.sequence_id] = &g;

  struct Acc
  {
    std::vector<char> tp;
    std::vector<double> score;
    std::size_t num_gt{0};
    std::size_t fn{0};
  };

  ApReport report;
  for (const double thr : kIouThresholds) {
    std::array<Acc, 4> acc{};
    for (const LabelSequence & ps : preds) {
      const auto it = gt_by_id.find(ps.sequence_id);
      if (it == gt_by_id.end()) throw std::invalid_argument("evaluate: no ground truth for sequence " + ps.sequence_id);
      std::map<int, const LabelFrame *> pred_frames;
      for (const LabelFrame & f : ps.frames) pred_frames[f.frame_index] = &f;

      for (const LabelFrame & gf : it->second->frames) {
        std::vector<ScoredBox> pb;
        if (const auto pf = pred_frames.find(gf.frame_index); pf != pred_frames.end()) {
          for (const PseudoLabel & l : pf->second->labels) pb.push_back({l.box, l.confidence});
        }
        std::vector<BevBox> gb;
        for (const PseudoLabel & l : gf.labels) gb.push_back(l.box);

        const FrameMatch m = match_frame(pb, gb, thr);
        for (std::size_t g = 0; g < gb.size(); ++g) {
          const auto bin = range_bin(gb[g]);
          if (!bin) continue;
          for (const std::size_t cell : {static_cast<std::size_t>(*bin), std::size_t{3}}) {
            ++acc[cell].num_gt;
            if (!m.gt_matched[g]) ++acc[cell].fn;
          }
        }
        for (std::size_t p = 0; p < pb.size(); ++p) {
          const auto bin = m.pred_tp[p] ? range_bin(gb[static_cast<std::size_t>(m.pred_gt[p])]) : range_bin(pb[p].box);
          if (!bin) continue;
          for (const std::size_t cell : {static_cast<std::size_t>(*bin), std::size_t{3}}) {
            acc[cell].tp.push_back(m.pred_tp[p]);
            acc[cell].score.push_back(pb[p].score);
          }
        }
      }
    }
    for (std::size_t c = 0; c < 4; ++c) {
      ApResult r = average_precision(acc[c].tp, acc[c].score, acc[c].num_gt, opt.num_recall_points);
      ApCell cell{thr, kRangeNames[c], r.ap, std::move(r.curve), 0, 0, acc[c].fn, acc[c].num_gt};
      for (const char t : acc[c].tp) (t ? cell.tp : cell.fp)++;
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

}  // namespace offtrack
