#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "offtrack/geometry.hpp"

namespace offtrack {

/// Dense row-major cost matrix.
class CostMatrix
{
public:
  CostMatrix() = default;
  CostMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill)
  {
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double & operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

private:
  std::size_t rows_{0};
  std::size_t cols_{0};
  std::vector<double> data_;
};

struct Assignment
{
  /// row -> column, or -1 when the row is left unassigned (only possible
  /// when there are more rows than columns).
  std::vector<int> row_to_col;
  double total_cost{0.0};
};

namespace detail {

// Shortest augmenting path Hungarian method (Kuhn-Munkres with potentials)
// on a square matrix. Fills the matching and the dual potentials u, v with
// u[i] + v[j] <= c(i, j), tight on matched pairs.
inline void hungarian_square(const CostMatrix & c, std::vector<int> & row_to_col, std::vector<double> & u,
                             std::vector<double> & v)
{
  const std::size_t n = c.rows();
  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based internals; index 0 is the virtual root.
  std::vector<double> pu(n + 1, 0.0), pv(n + 1, 0.0);
  std::vector<std::size_t> match_col(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match_col[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match_col[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = c(i0 - 1, j - 1) - pu[i0] - pv[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          pu[match_col[j]] += delta;
          pv[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match_col[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match_col[j0] = match_col[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  row_to_col.assign(n, -1);
  for (std::size_t j = 1; j <= n; ++j) row_to_col[match_col[j] - 1] = static_cast<int>(j - 1);
  u.assign(pu.begin() + 1, pu.end());
  v.assign(pv.begin() + 1, pv.end());
}

// Among all perfect matchings that use only tight edges (exactly the
// optimal assignments, by complementary slackness), pick the one whose
// row -> column sequence is lexicographically smallest.
inline void lexicographic_refine(const std::vector<std::vector<char>> & tight, std::vector<int> & row_to_col)
{
  const std::size_t n = tight.size();
  std::vector<int> col_to_row(n, -1);
  for (std::size_t i = 0; i < n; ++i) col_to_row[static_cast<std::size_t>(row_to_col[i])] = static_cast<int>(i);

  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t current = static_cast<std::size_t>(row_to_col[i]);
    for (std::size_t j = 0; j < current; ++j) {
      if (!tight[i][j]) continue;
      // Force (i, j): the row r holding j must reach the column i frees via
      // an alternating path through rows > i only.
      const std::size_t r = static_cast<std::size_t>(col_to_row[j]);
      if (r < i) continue;
      std::vector<std::size_t> parent_row(n, n);
      std::vector<char> seen_row(n, 0);
      std::vector<std::size_t> queue{r};
      seen_row[r] = 1;
      std::size_t found = n;
      for (std::size_t qi = 0; qi < queue.size() && found == n; ++qi) {
        const std::size_t row = queue[qi];
        if (tight[row][current]) {
          found = row;
          break;
        }
        for (std::size_t col = 0; col < n; ++col) {
          if (col == j || col == current || !tight[row][col]) continue;
          const auto next = static_cast<std::size_t>(col_to_row[col]);
          if (next <= i || seen_row[next]) continue;
          seen_row[next] = 1;
          parent_row[next] = row;
          queue.push_back(next);
        }
      }
      if (found == n) continue;
      // Shift along the path: each row takes the column its successor held,
      // the last one takes `current`, and r gives up j to row i.
      std::size_t row = found;
      std::size_t take = current;
      while (true) {
        const auto old = static_cast<std::size_t>(row_to_col[row]);
        row_to_col[row] = static_cast<int>(take);
        col_to_row[take] = static_cast<int>(row);
        if (row == r) break;
        take = old;
        row = parent_row[row];
      }
      row_to_col[i] = static_cast<int>(j);
      col_to_row[j] = static_cast<int>(i);
      break;
    }
  }
}

}  // namespace detail

/// Minimum-cost one-to-one assignment of rows to columns.
///
/// Rectangular inputs are padded with zero-cost dummy rows or columns, so
/// min(rows, cols) real pairs are returned. Among optimal assignments the
/// lexicographically smallest (row, column) sequence is chosen.
inline Assignment hungarian(const CostMatrix & cost)
{
  const std::size_t n = cost.rows();
  const std::size_t m = cost.cols();
  Assignment out;
  out.row_to_col.assign(n, -1);
  if (n == 0 || m == 0) return out;

  const std::size_t k = std::max(n, m);
  CostMatrix sq(k, k, 0.0);
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (!std::isfinite(cost(i, j))) throw std::invalid_argument("hungarian: costs must be finite");
      sq(i, j) = cost(i, j);
      scale = std::max(scale, std::abs(cost(i, j)));
    }
  }

  std::vector<int> match;
  std::vector<double> u, v;
  detail::hungarian_square(sq, match, u, v);

  const double tol = 1e-10 * scale * static_cast<double>(k);
  std::vector<std::vector<char>> tight(k, std::vector<char>(k, 0));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) tight[i][j] = std::abs(sq(i, j) - u[i] - v[j]) <= tol;
    tight[i][static_cast<std::size_t>(match[i])] = 1;
  }
  detail::lexicographic_refine(tight, match);

  for (std::size_t i = 0; i < n; ++i) {
    const auto j = static_cast<std::size_t>(match[i]);
    if (j < m) {
      out.row_to_col[i] = static_cast<int>(j);
      out.total_cost += cost(i, j);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

struct AssociationMatch
{
  std::size_t track{};
  std::size_t detection{};
  double iou{};
};

struct AssignmentResult
{
  std::vector<AssociationMatch> matches;
  std::vector<std::size_t> unmatched_tracks;
  std::vector<std::size_t> unmatched_detections;
};

/// Cost of a pair whose IoU falls below the gate. Any positive value keeps
/// it out of the optimum since every row and column can fall back to a
/// zero-cost slack partner; a value above the -IoU range makes that obvious.
inline constexpr double kForbiddenCost = 4.0;

/// Global nearest neighbour association on negative BEV IoU.
///
/// The square problem has one slack column per track and one slack row per
/// detection, so that leaving either side unmatched costs nothing and the
/// optimum maximizes the total IoU over gate-respecting pairs.
inline AssignmentResult associate(std::span<const BevBox> predicted, std::span<const BevBox> detections,
                                  double gate)
{
  if (!(gate >= 0.0 && gate <= 1.0)) throw std::invalid_argument("associate: gate must lie in [0, 1]");
  const std::size_t n = predicted.size();
  const std::size_t m = detections.size();
  AssignmentResult res;
  if (n == 0 || m == 0) {
    for (std::size_t i = 0; i < n; ++i) res.unmatched_tracks.push_back(i);
    for (std::size_t j = 0; j < m; ++j) res.unmatched_detections.push_back(j);
    return res;
  }

  std::vector<double> iou(n * m);
  CostMatrix cost(n + m, m + n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      const double v = bev_iou(predicted[i], detections[j]);
      iou[i * m + j] = v;
      cost(i, j) = v >= gate ? -v : kForbiddenCost;
    }
  }

  const Assignment a = hungarian(cost);
  std::vector<char> det_used(m, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const int j = a.row_to_col[i];
    if (j >= 0 && static_cast<std::size_t>(j) < m && cost(i, static_cast<std::size_t>(j)) < kForbiddenCost) {
      const auto dj = static_cast<std::size_t>(j);
      res.matches.push_back({i, dj, iou[i * m + dj]});
      det_used[dj] = 1;
    } else {
      res.unmatched_tracks.push_back(i);
    }
  }
  for (std::size_t j = 0; j < m; ++j) {
    if (!det_used[j]) res.unmatched_detections.push_back(j);
  }
  return res;
}

inline AssignmentResult associate(const std::vector<BevBox> & predicted, const std::vector<BevBox> & detections,
                                  double gate)
{
  return associate(std::span<const BevBox>(predicted), std::span<const BevBox>(detections), gate);
}

}  // namespace offtrack
