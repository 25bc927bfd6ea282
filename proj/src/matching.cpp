#include "groupdet/matching.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

namespace groupdet {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Potentials-based square solver (Jonker/Volgenant flavor). a is n x n
// row-major. Returns col_of_row and fills potentials u, v (both size n+1,
// 1-indexed internally).
std::vector<int> solve_square(const std::vector<double>& a, int n, std::vector<double>& u,
                              std::vector<double>& v) {
  u.assign(static_cast<std::size_t>(n) + 1, 0.0);
  v.assign(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(n) + 1, 0), way(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, kInf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      int j1 = 0;
      double delta = kInf;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = a[static_cast<std::size_t>(i0 - 1) * n + (j - 1)] - u[static_cast<std::size_t>(i0)] -
                           v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> col_of_row(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j) {
    if (p[static_cast<std::size_t>(j)] != 0) col_of_row[static_cast<std::size_t>(p[static_cast<std::size_t>(j)]) - 1] = j - 1;
  }
  return col_of_row;
}

// Kuhn's augmenting-path matching restricted to the given adjacency; returns
// true iff every row can be matched.
bool can_match_all(const std::vector<std::vector<int>>& adj, int n_cols) {
  const int n_rows = static_cast<int>(adj.size());
  std::vector<int> row_of_col(static_cast<std::size_t>(n_cols), -1);
  std::vector<char> visited;
  std::function<bool(int)> try_row = [&](int r) -> bool {
    for (int c : adj[static_cast<std::size_t>(r)]) {
      if (visited[static_cast<std::size_t>(c)]) continue;
      visited[static_cast<std::size_t>(c)] = 1;
      if (row_of_col[static_cast<std::size_t>(c)] < 0 || try_row(row_of_col[static_cast<std::size_t>(c)])) {
        row_of_col[static_cast<std::size_t>(c)] = r;
        return true;
      }
    }
    return false;
  };
  for (int r = 0; r < n_rows; ++r) {
    visited.assign(static_cast<std::size_t>(n_cols), 0);
    if (!try_row(r)) return false;
  }
  return true;
}

}  // namespace

Assignment hungarian_match(const std::vector<double>& cost, int n_gt, int n_query) {
  if (n_gt > n_query)
    throw dim_error("hungarian_match: more ground truths than query slots");
  if (static_cast<int>(cost.size()) != n_gt * n_query)
    throw dim_error("hungarian_match: cost matrix size mismatch");
  Assignment out;
  if (n_gt == 0) return out;

  // Pad with zero-cost dummy rows to a square matrix; dummies absorb the
  // unused query slots without affecting which real assignment is optimal.
  const int n = n_query;
  std::vector<double> square(static_cast<std::size_t>(n) * n, 0.0);
  double max_abs = 1.0;
  for (int i = 0; i < n_gt; ++i) {
    for (int j = 0; j < n; ++j) {
      const double c = cost[static_cast<std::size_t>(i) * n + j];
      if (!std::isfinite(c)) throw numeric_error("hungarian_match: non-finite cost");
      square[static_cast<std::size_t>(i) * n + j] = c;
      max_abs = std::max(max_abs, std::fabs(c));
    }
  }

  std::vector<double> u, v;
  solve_square(square, n, u, v);

  // Optimal assignments are exactly the perfect matchings of the tight graph
  // (zero reduced cost under the optimal potentials). Walk real rows in order
  // and commit the smallest tight column that keeps the rest matchable.
  const double tol = 1e-9 * max_abs;
  auto tight = [&](int i, int j) {
    return square[static_cast<std::size_t>(i) * n + j] - u[static_cast<std::size_t>(i) + 1] -
               v[static_cast<std::size_t>(j) + 1] <=
           tol;
  };

  std::vector<char> col_taken(static_cast<std::size_t>(n), 0);
  out.query_for_gt.assign(static_cast<std::size_t>(n_gt), -1);
  for (int i = 0; i < n_gt; ++i) {
    for (int j = 0; j < n; ++j) {
      if (col_taken[static_cast<std::size_t>(j)] || !tight(i, j)) continue;
      // remaining rows: real rows after i, then dummies
      std::vector<std::vector<int>> adj;
      std::vector<int> col_ids;
      std::vector<int> col_pos(static_cast<std::size_t>(n), -1);
      for (int c = 0; c < n; ++c) {
        if (!col_taken[static_cast<std::size_t>(c)] && c != j) {
          col_pos[static_cast<std::size_t>(c)] = static_cast<int>(col_ids.size());
          col_ids.push_back(c);
        }
      }
      bool feasible = true;
      for (int r = i + 1; r < n && feasible; ++r) {
        std::vector<int> edges;
        for (int c = 0; c < n; ++c) {
          if (col_pos[static_cast<std::size_t>(c)] >= 0 && tight(r, c))
            edges.push_back(col_pos[static_cast<std::size_t>(c)]);
        }
        if (edges.empty()) feasible = false;
        adj.push_back(std::move(edges));
      }
      if (feasible && can_match_all(adj, static_cast<int>(col_ids.size()))) {
        out.query_for_gt[static_cast<std::size_t>(i)] = j;
        col_taken[static_cast<std::size_t>(j)] = 1;
        break;
      }
    }
    if (out.query_for_gt[static_cast<std::size_t>(i)] < 0)
      throw numeric_error("hungarian_match: tight graph extraction failed");
  }

  for (int i = 0; i < n_gt; ++i) {
    out.total_cost += cost[static_cast<std::size_t>(i) * n_query +
                           static_cast<std::size_t>(out.query_for_gt[static_cast<std::size_t>(i)])];
  }
  return out;
}

double match_cost(const PredSlot& pred, const GtPair& gt, const MatchWeights& weights) {
  double c = -weights.cls * pred.obj_probs[static_cast<std::size_t>(gt.object_class)];
  if (!gt.interactions.empty()) {
    double s = 0.0;
    for (int a : gt.interactions) s += pred.int_sigmoid[static_cast<std::size_t>(a)];
    c -= weights.interaction * (s / static_cast<double>(gt.interactions.size()));
  }
  double l1 = 0.0;
  l1 += std::fabs(pred.human.cx - gt.human.cx) + std::fabs(pred.human.cy - gt.human.cy) +
        std::fabs(pred.human.w - gt.human.w) + std::fabs(pred.human.h - gt.human.h);
  l1 += std::fabs(pred.object.cx - gt.object.cx) + std::fabs(pred.object.cy - gt.object.cy) +
        std::fabs(pred.object.w - gt.object.w) + std::fabs(pred.object.h - gt.object.h);
  c += weights.l1 * l1;
  c += weights.giou * (giou_loss_scalar(pred.human, gt.human) + giou_loss_scalar(pred.object, gt.object));
  return c;
}

}  // namespace groupdet
