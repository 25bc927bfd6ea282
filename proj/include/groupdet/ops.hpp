#pragma once

#include <utility>
#include <vector>

#include "groupdet/tensor.hpp"

namespace groupdet {

// All ops validate shapes, compute eagerly, reject non-finite results, and
// record a tape node when gradients are enabled and an input requires them.

// [m x k] . [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

// elementwise, same shape
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
// ties route the gradient to `a`
Tensor emin(const Tensor& a, const Tensor& b);
Tensor emax(const Tensor& a, const Tensor& b);

// y = alpha * x + beta, elementwise
Tensor affine_scalar(const Tensor& x, double alpha, double beta);
inline Tensor scale(const Tensor& x, double s) { return affine_scalar(x, s, 0.0); }
inline Tensor neg(const Tensor& x) { return affine_scalar(x, -1.0, 0.0); }

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor abs_t(const Tensor& x);  // d|0|/dx taken as 0
Tensor clamp(const Tensor& x, double lo, double hi);

// x: [n x d], v: [d]
Tensor add_rowvec(const Tensor& x, const Tensor& v);
Tensor sub_rowvec(const Tensor& x, const Tensor& v);
// v: [d] -> [k x d]
Tensor repeat_row(const Tensor& v, int k);

// axis 0 for 1-D; axis 0 (down columns) or 1 (across rows) for 2-D.
// Max-subtracted for stability.
Tensor softmax(const Tensor& x, int axis);
Tensor log_softmax_rows(const Tensor& x);

// Normalizes the last axis with population variance, then y = xhat*gain + bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// Batch-style counterpart: normalizes each column of [k x d] over its k rows
// (per-channel stats), gain/bias per column. Single-row inputs normalize to
// zero and pass through the bias.
Tensor norm_cols(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5);

// x: [n x d], idx values in [0, n); backward scatter-adds.
Tensor gather_rows(const Tensor& x, const std::vector<int>& idx);

// x: [k x d] -> [d]; per-channel max, gradient to the first argmax row.
Tensor channel_max(const Tensor& x);
// x: [k x d] -> [d]
Tensor sum_axis0(const Tensor& x);

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, int r0, int r1);
Tensor slice_cols(const Tensor& x, int c0, int c1);
Tensor reshape(const Tensor& x, Shape shape);

Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

// x @ W + b  (b broadcast over rows)
Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias);

struct AffineLayer {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]
};

// Chained affine maps with ReLU between hidden layers when relu_between.
Tensor affine_relu_stack(const Tensor& x, const std::vector<AffineLayer>& layers,
                         bool relu_between);

// Multi-label classification loss with asymmetric focusing exponents and
// negative-probability clipping; gamma_pos = gamma_neg = g, clip = 0 is the
// symmetric focal loss, and all-zero parameters reduce to plain BCE.
// Reduction: sum over classes, mean over rows.
Tensor asymmetric_bce(const Tensor& logits, const Tensor& targets, double gamma_pos,
                      double gamma_neg, double clip);

// Weighted negative log-likelihood over per-row target indices:
// sum_i w[t_i] * (-logp[i, t_i]) / sum_i w[t_i].
Tensor nll_rows(const Tensor& logp, const std::vector<int>& targets,
                const std::vector<double>& class_weights);

Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& targets,
                          const std::vector<double>& class_weights);

}  // namespace groupdet
