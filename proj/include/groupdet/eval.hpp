#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "groupdet/box.hpp"
#include "groupdet/synth.hpp"

namespace groupdet {

struct Prediction {
  std::int64_t scene_seed = 0;
  Box human;
  Box object;
  int object_class = 0;
  int interaction = 0;
  double score = 0.0;
};

struct GtTriplet {
  std::int64_t scene_seed = 0;
  Box human;
  Box object;
  int object_class = 0;
  int interaction = 0;
};

// Sort by score (desc, stable), suppress a lower-scored prediction when a
// kept one shares its interaction class and BOTH boxes overlap above iou_thr,
// then truncate to top_k. Single-scene candidate lists only.
std::vector<Prediction> pairwise_nms(const std::vector<Prediction>& preds, double iou_thr,
                                     int top_k);

// TP/FP flags for score-sorted predictions of one scene: TP iff an unmatched
// ground truth of the same interaction class overlaps both boxes with
// IoU >= iou_thr; each ground truth matches once, greedily in score order,
// preferring the largest human+object IoU sum (ties -> lower gt index).
std::vector<bool> match_predictions(const std::vector<Prediction>& preds,
                                    const std::vector<GtTriplet>& gts, double iou_thr = 0.5);

// Area under the precision-recall curve for ranked flags. All-point
// interpolation by default; eleven_point switches to the 11-point variant.
double average_precision(const std::vector<bool>& flags, int n_gt, bool eleven_point = false);

struct EvalReport {
  std::vector<std::optional<double>> ap;  // absent when a class has no ground truth
  std::vector<int> n_gt;
  std::vector<bool> rare;
  std::optional<double> map_full;
  std::optional<double> map_rare;
  std::optional<double> map_nonrare;
};

// Dataset-level evaluation: pools predictions per interaction class across
// scenes (score-descending), flags them per scene, and averages APs.
// rare_classes come from training-split counts.
EvalReport evaluate_predictions(const std::vector<Prediction>& preds,
                                const std::vector<GtTriplet>& gts, int n_interaction_classes,
                                const std::vector<int>& rare_classes, double iou_thr = 0.5,
                                bool eleven_point = false);

std::vector<GtTriplet> scene_gt_triplets(const Scene& scene);

// line-delimited dump, floats at 6 decimals
void write_predictions(const std::string& path, const std::vector<Prediction>& preds);

// header `class_id,ap,n_gt,rare` rows per class (absent AP -> empty field),
// then one summary row `-1,<mAP_full>,<total_gt>,<n_rare_classes>`.
void write_eval_csv(const std::string& path, const EvalReport& report);

}  // namespace groupdet
