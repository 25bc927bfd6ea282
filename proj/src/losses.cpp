#include "groupdet/losses.hpp"

namespace groupdet {

namespace {

struct BoxCols {
  Tensor x0, y0, x1, y1;
};

BoxCols corner_cols(const Tensor& boxes) {
  Tensor cx = slice_cols(boxes, 0, 1);
  Tensor cy = slice_cols(boxes, 1, 2);
  Tensor w = slice_cols(boxes, 2, 3);
  Tensor h = slice_cols(boxes, 3, 4);
  BoxCols c;
  c.x0 = clamp(sub(cx, scale(w, 0.5)), 0.0, 1.0);
  c.y0 = clamp(sub(cy, scale(h, 0.5)), 0.0, 1.0);
  c.x1 = clamp(add(cx, scale(w, 0.5)), 0.0, 1.0);
  c.y1 = clamp(add(cy, scale(h, 0.5)), 0.0, 1.0);
  return c;
}

}  // namespace

Tensor giou_loss_rows(const Tensor& pred, const Tensor& target) {
  if (pred.ndim() != 2 || pred.dim(1) != 4 || pred.shape() != target.shape())
    throw dim_error("giou_loss_rows: expected matching [n x 4] tensors");
  BoxCols a = corner_cols(pred);
  BoxCols b = corner_cols(target);

  Tensor inter_w = relu(sub(emin(a.x1, b.x1), emax(a.x0, b.x0)));
  Tensor inter_h = relu(sub(emin(a.y1, b.y1), emax(a.y0, b.y0)));
  Tensor inter = mul(inter_w, inter_h);
  Tensor area_a = mul(sub(a.x1, a.x0), sub(a.y1, a.y0));
  Tensor area_b = mul(sub(b.x1, b.x0), sub(b.y1, b.y0));
  Tensor uni = sub(add(area_a, area_b), inter);
  Tensor iou = div(inter, uni);
  Tensor hull = mul(sub(emax(a.x1, b.x1), emin(a.x0, b.x0)),
                    sub(emax(a.y1, b.y1), emin(a.y0, b.y0)));
  Tensor giou = sub(iou, div(sub(hull, uni), hull));
  return affine_scalar(giou, -1.0, 1.0);
}

Tensor hoi_loss(const ModelOutput& out, const std::vector<GtPair>& gts,
                const Assignment& assignment, const ModelConfig& config, LossParts* parts) {
  const int q = out.obj_logits.dim(0);
  const int n_gt = static_cast<int>(gts.size());
  if (static_cast<int>(assignment.query_for_gt.size()) != n_gt)
    throw dim_error("hoi_loss: assignment/gt count mismatch");

  Tensor l1_term = Tensor::scalar(0.0);
  Tensor giou_term = Tensor::scalar(0.0);
  Tensor int_term = Tensor::scalar(0.0);

  std::vector<int> obj_targets(static_cast<std::size_t>(q), config.n_object_classes);
  if (n_gt > 0) {
    std::vector<int> matched = assignment.query_for_gt;
    Tensor gt_h = Tensor::zeros({n_gt, 4});
    Tensor gt_o = Tensor::zeros({n_gt, 4});
    Tensor int_targets = Tensor::zeros({n_gt, config.n_interaction_classes});
    for (int g = 0; g < n_gt; ++g) {
      const GtPair& gt = gts[static_cast<std::size_t>(g)];
      gt_h.at(g, 0) = gt.human.cx;
      gt_h.at(g, 1) = gt.human.cy;
      gt_h.at(g, 2) = gt.human.w;
      gt_h.at(g, 3) = gt.human.h;
      gt_o.at(g, 0) = gt.object.cx;
      gt_o.at(g, 1) = gt.object.cy;
      gt_o.at(g, 2) = gt.object.w;
      gt_o.at(g, 3) = gt.object.h;
      for (int a : gt.interactions) int_targets.at(g, a) = 1.0;
      obj_targets[static_cast<std::size_t>(matched[static_cast<std::size_t>(g)])] = gt.object_class;
    }
    Tensor pred_h = gather_rows(out.boxes_h, matched);
    Tensor pred_o = gather_rows(out.boxes_o, matched);
    const double inv_gt = 1.0 / static_cast<double>(n_gt);
    l1_term = scale(add(sum_all(abs_t(sub(pred_h, gt_h))), sum_all(abs_t(sub(pred_o, gt_o)))),
                    inv_gt);
    giou_term = scale(add(sum_all(giou_loss_rows(pred_h, gt_h)),
                          sum_all(giou_loss_rows(pred_o, gt_o))),
                      inv_gt);
    Tensor int_logits_m = gather_rows(out.int_logits, matched);
    const double gp = config.focal ? config.focal_gamma : config.gamma_pos;
    const double gn = config.focal ? config.focal_gamma : config.gamma_neg;
    const double clip = config.focal ? 0.0 : config.asl_clip;
    int_term = asymmetric_bce(int_logits_m, int_targets, gp, gn, clip);
  }

  std::vector<double> class_weights(static_cast<std::size_t>(config.n_object_classes) + 1, 1.0);
  class_weights.back() = config.eos_coef;
  Tensor obj_term = cross_entropy_rows(out.obj_logits, obj_targets, class_weights);

  Tensor total = add(add(scale(l1_term, config.lambda_box), scale(giou_term, config.lambda_giou)),
                     add(scale(obj_term, config.lambda_obj), scale(int_term, config.lambda_int)));
  if (parts != nullptr) {
    parts->l1 = l1_term.value();
    parts->giou = giou_term.value();
    parts->obj_ce = obj_term.value();
    parts->int_cls = int_term.value();
    parts->total = total.value();
  }
  return total;
}

}  // namespace groupdet
