#include "groupdet/grouping.hpp"

#include <algorithm>
#include <cmath>

namespace groupdet {

ScoreMatrix proximity_scores(const std::vector<Box>& boxes, const ProximityWeights& weights,
                             bool squared_distance) {
  const int n = static_cast<int>(boxes.size());
  if (n < 1) throw validation_error("proximity_scores: need at least one box");
  ScoreMatrix s;
  s.n = n;
  s.values.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      double dis = center_distance(boxes[static_cast<std::size_t>(i)], boxes[static_cast<std::size_t>(j)]);
      if (squared_distance) dis *= dis;
      const double ov = iou(boxes[static_cast<std::size_t>(i)], boxes[static_cast<std::size_t>(j)]);
      s.at(i, j) = weights.w_dis * dis + weights.w_iou * ov + weights.bias;
    }
  }
  return s;
}

namespace {

// Stable (score asc, index asc) top-k over admissible columns.
std::vector<int> lowest_k(const std::vector<std::pair<double, int>>& candidates, int k) {
  std::vector<std::pair<double, int>> sorted = candidates;
  std::sort(sorted.begin(), sorted.end());  // pair ordering = exactly the tie rule
  if (static_cast<int>(sorted.size()) > k) sorted.resize(static_cast<std::size_t>(k));
  std::vector<int> out;
  out.reserve(sorted.size());
  for (const auto& [score, idx] : sorted) out.push_back(idx);
  return out;
}

}  // namespace

GroupIndex select_geometric_neighbors(const ScoreMatrix& scores, int k, bool exclude_self,
                                      const std::vector<int>& class_mask) {
  if (k <= 0) throw config_error("geometric group size must be positive");
  const int n = scores.n;
  if (!class_mask.empty() && static_cast<int>(class_mask.size()) != n)
    throw dim_error("select_geometric_neighbors: class mask length mismatch");
  GroupIndex groups(static_cast<std::size_t>(n));
  std::vector<std::pair<double, int>> candidates;
  for (int i = 0; i < n; ++i) {
    candidates.clear();
    for (int j = 0; j < n; ++j) {
      if (exclude_self && j == i) continue;
      if (!class_mask.empty() &&
          class_mask[static_cast<std::size_t>(j)] != class_mask[static_cast<std::size_t>(i)])
        continue;
      candidates.emplace_back(scores.at(i, j), j);
    }
    groups[static_cast<std::size_t>(i)] = lowest_k(candidates, k);
  }
  return groups;
}

ScoreMatrix cosine_sim_matrix(const double* rows, int n, int d) {
  ScoreMatrix s;
  s.n = n;
  s.values.assign(static_cast<std::size_t>(n) * n, 0.0);
  std::vector<double> norms(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double sq = 0.0;
    const double* r = rows + static_cast<std::size_t>(i) * d;
    for (int c = 0; c < d; ++c) sq += r[c] * r[c];
    norms[static_cast<std::size_t>(i)] = std::sqrt(sq);
  }
  for (int i = 0; i < n; ++i) {
    s.at(i, i) = 1.0;
    for (int j = i + 1; j < n; ++j) {
      double sim = 0.0;
      const double ni = norms[static_cast<std::size_t>(i)], nj = norms[static_cast<std::size_t>(j)];
      if (ni > 0.0 && nj > 0.0) {
        double dot = 0.0;
        const double* ri = rows + static_cast<std::size_t>(i) * d;
        const double* rj = rows + static_cast<std::size_t>(j) * d;
        for (int c = 0; c < d; ++c) dot += ri[c] * rj[c];
        sim = dot / (ni * nj);
      }
      s.at(i, j) = sim;
      s.at(j, i) = sim;
    }
  }
  return s;
}

GroupIndex select_semantic_neighbors(const ScoreMatrix& sim, int k) {
  if (k <= 0) throw config_error("semantic group size must be positive");
  const int n = sim.n;
  GroupIndex groups(static_cast<std::size_t>(n));
  std::vector<std::pair<double, int>> candidates;
  for (int i = 0; i < n; ++i) {
    candidates.clear();
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      // negate so that "highest similarity, then lowest index" is the pair order
      candidates.emplace_back(-sim.at(i, j), j);
    }
    groups[static_cast<std::size_t>(i)] = lowest_k(candidates, k);
  }
  return groups;
}

}  // namespace groupdet
