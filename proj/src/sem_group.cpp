#include "groupdet/sem_group.hpp"

namespace groupdet {

SemLayerParams SemLayerParams::create(ParamStore& store, const std::string& prefix, int d,
                                      Rng& rng, NormKind norm) {
  SemLayerParams p;
  p.phi4_in = {store.add_affine_weight(prefix + ".phi4.in.w", 2 * d, d, rng),
               store.add_zeros(prefix + ".phi4.in.b", {d})};
  p.phi4_norm_gain = store.add(prefix + ".phi4.norm.gain", Tensor::full({d}, 1.0));
  p.phi4_norm_bias = store.add_zeros(prefix + ".phi4.norm.bias", {d});
  p.phi4_out = {store.add_affine_weight(prefix + ".phi4.out.w", d, d, rng),
                store.add_zeros(prefix + ".phi4.out.b", {d})};
  p.phi5_in = {store.add_affine_weight(prefix + ".phi5.in.w", d, d, rng),
               store.add_zeros(prefix + ".phi5.in.b", {d})};
  p.phi5_norm_gain = store.add(prefix + ".phi5.norm.gain", Tensor::full({d}, 1.0));
  p.phi5_norm_bias = store.add_zeros(prefix + ".phi5.norm.bias", {d});
  p.phi5_out = {store.add_affine_weight(prefix + ".phi5.out.w", d, d, rng),
                store.add_zeros(prefix + ".phi5.out.b", {d})};
  p.norm = norm;
  return p;
}

namespace {

Tensor apply_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, NormKind kind) {
  if (kind == NormKind::kLayer) return layer_norm(x, gain, bias);
  return norm_cols(x, gain, bias);
}

}  // namespace

Tensor semantic_context(const Tensor& q_i, const Tensor& group_rows, const SemLayerParams& params) {
  if (group_rows.ndim() != 2 || group_rows.dim(0) < 1)
    throw dim_error("semantic_context: empty group");
  if (q_i.ndim() != 1 || q_i.dim(0) != group_rows.dim(1))
    throw dim_error("semantic_context: query/group dimension mismatch");
  const int k = group_rows.dim(0);
  Tensor q_rep = repeat_row(q_i, k);
  Tensor features = concat_cols({q_rep, sub(group_rows, q_rep)});
  Tensor h = affine(features, params.phi4_in.weight, params.phi4_in.bias);
  h = apply_norm(h, params.phi4_norm_gain, params.phi4_norm_bias, params.norm);
  h = relu(h);
  h = affine(h, params.phi4_out.weight, params.phi4_out.bias);
  return channel_max(h);
}

Tensor integrate_context(const Tensor& q_i, const Tensor& m_i, const SemLayerParams& params) {
  if (q_i.shape() != m_i.shape() || q_i.ndim() != 1)
    throw dim_error("integrate_context: expected matching 1-D tensors");
  const int d = q_i.dim(0);
  Tensor h = affine(reshape(m_i, {1, d}), params.phi5_in.weight, params.phi5_in.bias);
  h = apply_norm(h, params.phi5_norm_gain, params.phi5_norm_bias, params.norm);
  h = relu(h);
  h = affine(h, params.phi5_out.weight, params.phi5_out.bias);
  return add(q_i, reshape(h, {d}));
}

Tensor semantic_layer(const Tensor& queries, int k_semantic, const SemLayerParams& params) {
  if (k_semantic <= 0) throw config_error("semantic group size must be positive");
  if (queries.ndim() != 2) throw dim_error("semantic_layer: queries must be [n x d]");
  const int n = queries.dim(0), d = queries.dim(1);
  if (n == 1) return queries;

  ScoreMatrix sim = cosine_sim_matrix(queries.data(), n, d);
  GroupIndex groups = select_semantic_neighbors(sim, k_semantic);

  std::vector<Tensor> rows;
  rows.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Tensor q_i = reshape(gather_rows(queries, {i}), {d});
    Tensor group_rows = gather_rows(queries, groups[static_cast<std::size_t>(i)]);
    Tensor m_i = semantic_context(q_i, group_rows, params);
    rows.push_back(reshape(integrate_context(q_i, m_i, params), {1, d}));
  }
  return concat_rows(rows);
}

}  // namespace groupdet
