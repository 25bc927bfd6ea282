#include "groupdet/box.hpp"

#include <algorithm>
#include <cmath>

namespace groupdet {

namespace {

struct Corners {
  double x0, y0, x1, y1;
};

Corners clamped(const Box& b) {
  return {std::clamp(b.x0(), 0.0, 1.0), std::clamp(b.y0(), 0.0, 1.0),
          std::clamp(b.x1(), 0.0, 1.0), std::clamp(b.y1(), 0.0, 1.0)};
}

double area(const Corners& c) { return std::max(c.x1 - c.x0, 0.0) * std::max(c.y1 - c.y0, 0.0); }

}  // namespace

double iou(const Box& a, const Box& b) {
  a.validate();
  b.validate();
  const Corners ca = clamped(a), cb = clamped(b);
  const double ix = std::max(std::min(ca.x1, cb.x1) - std::max(ca.x0, cb.x0), 0.0);
  const double iy = std::max(std::min(ca.y1, cb.y1) - std::max(ca.y0, cb.y0), 0.0);
  const double inter = ix * iy;
  const double uni = area(ca) + area(cb) - inter;
  if (uni <= 0.0) throw validation_error("iou: boxes have no visible area");
  return inter / uni;
}

double center_distance(const Box& a, const Box& b) {
  const double dx = a.cx - b.cx;
  const double dy = a.cy - b.cy;
  return std::sqrt(dx * dx + dy * dy);
}

SpatialFeature spatial_feature(const Box& a, const Box& b) {
  return {center_distance(a, b), iou(a, b)};
}

double giou_loss_scalar(const Box& a, const Box& b) {
  a.validate();
  b.validate();
  const Corners ca = clamped(a), cb = clamped(b);
  const double ix = std::max(std::min(ca.x1, cb.x1) - std::max(ca.x0, cb.x0), 0.0);
  const double iy = std::max(std::min(ca.y1, cb.y1) - std::max(ca.y0, cb.y0), 0.0);
  const double inter = ix * iy;
  const double uni = area(ca) + area(cb) - inter;
  if (uni <= 0.0) throw validation_error("giou: boxes have no visible area");
  const double hull_w = std::max(ca.x1, cb.x1) - std::min(ca.x0, cb.x0);
  const double hull_h = std::max(ca.y1, cb.y1) - std::min(ca.y0, cb.y0);
  const double hull = hull_w * hull_h;
  const double giou = inter / uni - (hull - uni) / hull;
  return 1.0 - giou;
}

}  // namespace groupdet
