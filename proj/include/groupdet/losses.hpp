#pragma once

#include "groupdet/model.hpp"

namespace groupdet {

// Differentiable 1 - GIoU per row of [n x 4] cxcywh tensors (corners clamped
// to the unit frame, matching the scalar route in box.hpp). Returns [n x 1].
Tensor giou_loss_rows(const Tensor& pred, const Tensor& target);

struct LossParts {
  double l1 = 0.0;
  double giou = 0.0;
  double obj_ce = 0.0;
  double int_cls = 0.0;
  double total = 0.0;
};

// lambda_box * L1 + lambda_giou * (1 - GIoU) + lambda_obj * object CE
// + lambda_int * interaction classification. Box and interaction terms run
// over matched queries (normalized by the ground-truth count); the object CE
// covers every query, with unmatched ones trained toward "no object".
Tensor hoi_loss(const ModelOutput& out, const std::vector<GtPair>& gts,
                const Assignment& assignment, const ModelConfig& config, LossParts* parts);

}  // namespace groupdet
