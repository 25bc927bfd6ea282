#pragma once

#include <vector>

#include "groupdet/box.hpp"

namespace groupdet {

// Injective assignment of ground truths to query slots.
struct Assignment {
  std::vector<int> query_for_gt;  // size G, values in [0, Q), pairwise distinct
  double total_cost = 0.0;
};

// Minimum-total-cost injective assignment for a row-major [n_gt x n_query]
// cost matrix, n_gt <= n_query. Among cost-optimal assignments, returns the
// lexicographically smallest (gt 0 takes the lowest admissible query, then
// gt 1, ...). Deterministic.
Assignment hungarian_match(const std::vector<double>& cost, int n_gt, int n_query);

// One ground-truth HO pair; triplets sharing (human, object) are merged into
// a multi-label interaction set.
struct GtPair {
  Box human;
  Box object;
  int object_class = 0;
  std::vector<int> interactions;
};

// Per-query prediction values used for matching (probabilities, not logits).
struct PredSlot {
  Box human;
  Box object;
  std::vector<double> obj_probs;    // softmax over C_o + 1 (last = no object)
  std::vector<double> int_sigmoid;  // per interaction class
};

struct MatchWeights {
  double cls = 1.0;
  double interaction = 1.0;
  double l1 = 2.5;
  double giou = 1.0;
};

// -p(class) - mean sigmoid over the pair's labels + L1 over both boxes
// + (1 - GIoU) for both boxes, each weighted.
double match_cost(const PredSlot& pred, const GtPair& gt, const MatchWeights& weights);

}  // namespace groupdet
