#pragma once

#include <vector>

#include "groupdet/box.hpp"

namespace groupdet {

// Dense row-major n x n score/similarity matrices used by neighbor selection.
struct ScoreMatrix {
  int n = 0;
  std::vector<double> values;

  double at(int i, int j) const { return values[static_cast<std::size_t>(i) * n + j]; }
  double& at(int i, int j) { return values[static_cast<std::size_t>(i) * n + j]; }
};

// One neighbor list per entity/query, each sorted by selection rank.
using GroupIndex = std::vector<std::vector<int>>;

struct ProximityWeights {
  double w_dis = 1.0;   // lower score = closer, so distance enters positively
  double w_iou = -1.0;  // and overlap negatively
  double bias = 0.0;
};

// s[i][j] = w_dis * dis(i,j) + w_iou * iou(i,j) + bias. When squared_distance
// is set, the distance term is dis^2 (pseudo-code variant).
ScoreMatrix proximity_scores(const std::vector<Box>& boxes, const ProximityWeights& weights,
                             bool squared_distance = false);

// Per row, the k admissible columns with the lowest score; ties broken by
// lower column index; fewer than k candidates returns all of them.
// class_mask (when non-empty) restricts candidates to entries with the same
// class id as the row (intra-class grouping).
GroupIndex select_geometric_neighbors(const ScoreMatrix& scores, int k, bool exclude_self,
                                      const std::vector<int>& class_mask = {});

// Pairwise cosine similarity of rows of a row-major [n x d] buffer. Zero rows
// get similarity 0 against everything; the diagonal is fixed at 1.
ScoreMatrix cosine_sim_matrix(const double* rows, int n, int d);

// Per row, the k highest off-diagonal similarities; ties -> lower index.
GroupIndex select_semantic_neighbors(const ScoreMatrix& sim, int k);

}  // namespace groupdet
