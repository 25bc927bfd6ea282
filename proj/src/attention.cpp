#include "groupdet/attention.hpp"

#include <cmath>

namespace groupdet {

AttentionParams AttentionParams::create(ParamStore& store, const std::string& prefix, int d,
                                        int heads, Rng& rng) {
  if (heads <= 0 || d % heads != 0)
    throw config_error("attention: embedding dim must be divisible by heads");
  AttentionParams p;
  p.wq = {store.add_affine_weight(prefix + ".wq", d, d, rng), store.add_zeros(prefix + ".bq", {d})};
  p.wk = {store.add_affine_weight(prefix + ".wk", d, d, rng), store.add_zeros(prefix + ".bk", {d})};
  p.wv = {store.add_affine_weight(prefix + ".wv", d, d, rng), store.add_zeros(prefix + ".bv", {d})};
  p.wo = {store.add_affine_weight(prefix + ".wo", d, d, rng), store.add_zeros(prefix + ".bo", {d})};
  p.heads = heads;
  return p;
}

Tensor attention_projected_kv(const Tensor& queries, const Tensor& k_projected,
                              const Tensor& v_projected, const AttentionParams& params) {
  if (queries.ndim() != 2 || k_projected.ndim() != 2 || v_projected.ndim() != 2)
    throw dim_error("attention: 2-D inputs required");
  const int d = queries.dim(1);
  if (k_projected.dim(1) != d || v_projected.dim(1) != d)
    throw dim_error("attention: query/key/value widths disagree");
  if (k_projected.dim(0) != v_projected.dim(0))
    throw dim_error("attention: key/value counts disagree");
  if (d % params.heads != 0) throw dim_error("attention: width not divisible by heads");
  const int dh = d / params.heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor q = affine(queries, params.wq.weight, params.wq.bias);

  std::vector<Tensor> heads_out;
  heads_out.reserve(static_cast<std::size_t>(params.heads));
  for (int h = 0; h < params.heads; ++h) {
    Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
    Tensor kh = slice_cols(k_projected, h * dh, (h + 1) * dh);
    Tensor vh = slice_cols(v_projected, h * dh, (h + 1) * dh);
    Tensor weights = softmax(affine_scalar(matmul(qh, transpose(kh)), inv_scale, 0.0), 1);
    heads_out.push_back(matmul(weights, vh));
  }
  Tensor merged = params.heads == 1 ? heads_out[0] : concat_cols(heads_out);
  return affine(merged, params.wo.weight, params.wo.bias);
}

Tensor multi_head_attention(const Tensor& queries, const Tensor& keys, const Tensor& values,
                            const AttentionParams& params) {
  if (keys.ndim() != 2 || values.ndim() != 2) throw dim_error("attention: 2-D inputs required");
  if (keys.dim(1) != queries.dim(1) || values.dim(1) != queries.dim(1))
    throw dim_error("attention: query/key/value widths disagree");
  Tensor k = affine(keys, params.wk.weight, params.wk.bias);
  Tensor v = affine(values, params.wv.weight, params.wv.bias);
  return attention_projected_kv(queries, k, v, params);
}

LayerNormParams LayerNormParams::create(ParamStore& store, const std::string& prefix, int d) {
  return {store.add(prefix + ".gain", Tensor::full({d}, 1.0)),
          store.add_zeros(prefix + ".bias", {d})};
}

FfnParams FfnParams::create(ParamStore& store, const std::string& prefix, int d, int hidden,
                            Rng& rng) {
  FfnParams p;
  p.in = {store.add_affine_weight(prefix + ".in.w", d, hidden, rng),
          store.add_zeros(prefix + ".in.b", {hidden})};
  p.out = {store.add_affine_weight(prefix + ".out.w", hidden, d, rng),
           store.add_zeros(prefix + ".out.b", {d})};
  return p;
}

Tensor apply_ffn(const Tensor& x, const FfnParams& p) {
  return affine(relu(affine(x, p.in.weight, p.in.bias)), p.out.weight, p.out.bias);
}

}  // namespace groupdet
