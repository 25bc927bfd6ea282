#pragma once

#include <vector>

#include "groupdet/errors.hpp"

namespace groupdet {

// Normalized center-size box. Corners are clamped to [0,1] for area math, so
// boxes spilling over the frame edge contribute only their visible part.
struct Box {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  void validate() const {
    if (!(w > 0.0) || !(h > 0.0)) throw validation_error("box has non-positive extent");
    if (cx < 0.0 || cx > 1.0 || cy < 0.0 || cy > 1.0)
      throw validation_error("box center outside [0,1]");
  }

  double x0() const { return cx - 0.5 * w; }
  double y0() const { return cy - 0.5 * h; }
  double x1() const { return cx + 0.5 * w; }
  double y1() const { return cy + 0.5 * h; }
};

struct SpatialFeature {
  double dis = 0.0;  // centroid distance
  double iou = 0.0;
};

double iou(const Box& a, const Box& b);
double center_distance(const Box& a, const Box& b);
SpatialFeature spatial_feature(const Box& a, const Box& b);

// 1 - GIoU, in [0, 2]
double giou_loss_scalar(const Box& a, const Box& b);

}  // namespace groupdet
