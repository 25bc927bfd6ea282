// Brute-force reference implementations used only by tests. Each one takes
// the slow, obviously-correct route so it stays independent of the library
// code it checks.
#pragma once

#include <algorithm>
#include <utility>
#include <vector>

namespace oracle {

// Full sort per row by (score asc, index asc), keep the first k admissible.
inline std::vector<std::vector<int>> knn_lowest(const std::vector<double>& scores, int n, int k,
                                                bool exclude_self,
                                                const std::vector<int>& class_mask = {}) {
  std::vector<std::vector<int>> groups(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<double, int>> row;
    for (int j = 0; j < n; ++j) {
      if (exclude_self && j == i) continue;
      if (!class_mask.empty() && class_mask[static_cast<std::size_t>(j)] !=
                                     class_mask[static_cast<std::size_t>(i)])
        continue;
      row.emplace_back(scores[static_cast<std::size_t>(i) * n + j], j);
    }
    std::stable_sort(row.begin(), row.end());
    for (std::size_t r = 0; r < row.size() && static_cast<int>(r) < k; ++r)
      groups[static_cast<std::size_t>(i)].push_back(row[r].second);
  }
  return groups;
}

// Highest-similarity variant with the same tie rule.
inline std::vector<std::vector<int>> knn_highest(const std::vector<double>& sim, int n, int k) {
  std::vector<std::vector<int>> groups(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<double, int>> row;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      row.emplace_back(-sim[static_cast<std::size_t>(i) * n + j], j);
    }
    std::stable_sort(row.begin(), row.end());
    for (std::size_t r = 0; r < row.size() && static_cast<int>(r) < k; ++r)
      groups[static_cast<std::size_t>(i)].push_back(row[r].second);
  }
  return groups;
}

struct AssignmentResult {
  std::vector<int> query_for_gt;
  double total_cost = 0.0;
  bool valid = false;
};

// Enumerates every injection of rows into columns in lexicographic order of
// (q_0, q_1, ...), keeping the strictly best cost, so ties resolve to the
// lexicographically smallest optimum. Refuses instances too large to
// enumerate.
inline AssignmentResult enumerate_assignment(const std::vector<double>& cost, int n_gt,
                                             int n_query) {
  AssignmentResult best;
  if (n_gt > n_query || n_gt > 8) return best;
  std::vector<int> current(static_cast<std::size_t>(n_gt), -1);
  std::vector<bool> used(static_cast<std::size_t>(n_query), false);
  const auto recurse = [&](auto&& self, int row, double acc) -> void {
    if (row == n_gt) {
      if (!best.valid || acc < best.total_cost) {
        best.valid = true;
        best.total_cost = acc;
        best.query_for_gt = current;
      }
      return;
    }
    for (int q = 0; q < n_query; ++q) {
      if (used[static_cast<std::size_t>(q)]) continue;
      used[static_cast<std::size_t>(q)] = true;
      current[static_cast<std::size_t>(row)] = q;
      self(self, row + 1, acc + cost[static_cast<std::size_t>(row) * n_query + q]);
      used[static_cast<std::size_t>(q)] = false;
    }
  };
  recurse(recurse, 0, 0.0);
  return best;
}

// All-point interpolated AP straight from the definition: every recall
// increment contributes (delta recall) * (max precision at recall >= r),
// with the max found by direct scan.
inline double exhaustive_ap(const std::vector<bool>& flags, int n_gt) {
  const int n = static_cast<int>(flags.size());
  std::vector<double> precision(static_cast<std::size_t>(n)), recall(static_cast<std::size_t>(n));
  int tp = 0;
  for (int i = 0; i < n; ++i) {
    if (flags[static_cast<std::size_t>(i)]) ++tp;
    precision[static_cast<std::size_t>(i)] = static_cast<double>(tp) / (i + 1);
    recall[static_cast<std::size_t>(i)] = static_cast<double>(tp) / n_gt;
  }
  double ap = 0.0, prev = 0.0;
  for (int i = 0; i < n; ++i) {
    if (!flags[static_cast<std::size_t>(i)]) continue;
    const double r = recall[static_cast<std::size_t>(i)];
    if (r <= prev) continue;
    double maxp = 0.0;
    for (int j = 0; j < n; ++j) {
      if (recall[static_cast<std::size_t>(j)] >= r)
        maxp = std::max(maxp, precision[static_cast<std::size_t>(j)]);
    }
    ap += (r - prev) * maxp;
    prev = r;
  }
  return ap;
}

}  // namespace oracle
