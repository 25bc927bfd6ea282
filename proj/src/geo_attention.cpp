#include "groupdet/geo_attention.hpp"

namespace groupdet {

namespace {

AffineLayer make_affine(ParamStore& store, const std::string& name, int in, int out, Rng& rng) {
  return {store.add_affine_weight(name + ".w", in, out, rng),
          store.add_zeros(name + ".b", {out})};
}

}  // namespace

GeoLayerParams GeoLayerParams::create(ParamStore& store, const std::string& prefix, int d,
                                      Rng& rng) {
  GeoLayerParams p;
  p.delta.push_back(make_affine(store, prefix + ".delta.l0", d, d, rng));
  p.delta.push_back(make_affine(store, prefix + ".delta.l1", d, d, rng));
  p.phi1 = make_affine(store, prefix + ".phi1", d, d, rng);
  p.phi2 = make_affine(store, prefix + ".phi2", d, d, rng);
  p.phi3 = make_affine(store, prefix + ".phi3", d, d, rng);
  p.gamma.push_back(make_affine(store, prefix + ".gamma.l0", d, d, rng));
  p.gamma.push_back(make_affine(store, prefix + ".gamma.l1", d, d, rng));
  p.theta = make_affine(store, prefix + ".theta", d, d, rng);
  return p;
}

Tensor position_encoding(const Tensor& e_i, const Tensor& e_j, const GeoLayerParams& params) {
  if (e_i.shape() != e_j.shape() || e_i.ndim() != 1)
    throw dim_error("position_encoding: expected matching 1-D embeddings");
  const int d = e_i.dim(0);
  Tensor diff = reshape(sub(e_i, e_j), {1, d});
  return reshape(affine_relu_stack(diff, params.delta, true), {d});
}

Tensor dispatch_matrix(const Tensor& q_i, const Tensor& neighbors, const Tensor& pos_enc,
                       const GeoLayerParams& params) {
  if (neighbors.ndim() != 2 || neighbors.dim(0) < 1) throw dim_error("dispatch_matrix: empty group");
  if (pos_enc.shape() != neighbors.shape())
    throw dim_error("dispatch_matrix: position encodings must match neighbors");
  const int d = neighbors.dim(1);
  Tensor q_row = reshape(q_i, {1, d});
  Tensor q_proj = reshape(affine(q_row, params.phi1.weight, params.phi1.bias), {d});
  Tensor k_proj = affine(neighbors, params.phi2.weight, params.phi2.bias);
  Tensor logits = affine_relu_stack(add_rowvec(sub(pos_enc, k_proj), q_proj), params.gamma, true);
  return softmax(logits, 0);  // per channel, over group members
}

Tensor aggregate_geometric(const Tensor& queries, const GroupIndex& groups,
                           const Tensor& pe_source, const GeoLayerParams& params) {
  if (queries.ndim() != 2) throw dim_error("aggregate_geometric: queries must be [n x d]");
  const int n = queries.dim(0), d = queries.dim(1);
  if (static_cast<int>(groups.size()) != n)
    throw dim_error("aggregate_geometric: one group per entity required");
  if (pe_source.shape() != queries.shape())
    throw dim_error("aggregate_geometric: pe_source must match queries");

  std::vector<Tensor> rows;
  rows.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const std::vector<int>& group = groups[static_cast<std::size_t>(i)];
    Tensor q_row = gather_rows(queries, {i});
    if (group.empty()) {
      rows.push_back(q_row);
      continue;
    }
    const int k = static_cast<int>(group.size());
    Tensor q_i = reshape(q_row, {d});
    Tensor neighbors = gather_rows(queries, group);

    Tensor e_i = reshape(gather_rows(pe_source, {i}), {d});
    Tensor e_nbr = gather_rows(pe_source, group);
    Tensor pos_enc =
        affine_relu_stack(sub(repeat_row(e_i, k), e_nbr), params.delta, true);

    Tensor t = dispatch_matrix(q_i, neighbors, pos_enc, params);
    Tensor values = add(affine(neighbors, params.phi3.weight, params.phi3.bias), pos_enc);
    Tensor pooled = reshape(sum_axis0(mul(t, values)), {1, d});
    rows.push_back(add(affine(pooled, params.theta.weight, params.theta.bias), q_row));
  }
  return concat_rows(rows);
}

namespace {

Tensor aggregate_one_pool(const Tensor& queries, const Tensor& pe_source,
                          const std::vector<Box>& boxes, const ProximityWeights& prox,
                          const GeoLayerParams& params, const GeoConfig& config) {
  ScoreMatrix scores = proximity_scores(boxes, prox, config.squared_distance);
  GroupIndex groups = select_geometric_neighbors(scores, config.k_geometric, config.exclude_self);
  return aggregate_geometric(queries, groups, pe_source, params);
}

}  // namespace

std::pair<Tensor, Tensor> geometric_layer(const Tensor& q_h, const Tensor& q_o,
                                          const Tensor& pos_h, const Tensor& pos_o,
                                          const std::vector<Box>& boxes_h,
                                          const std::vector<Box>& boxes_o,
                                          const ProximityWeights& prox,
                                          const GeoLayerParams& params, const GeoConfig& config) {
  if (config.k_geometric <= 0) throw config_error("geometric group size must be positive");
  const int n_h = q_h.dim(0), n_o = q_o.dim(0);
  if (static_cast<int>(boxes_h.size()) != n_h || static_cast<int>(boxes_o.size()) != n_o)
    throw dim_error("geometric_layer: box count must match query count");

  const Tensor pe_h = config.pe_from_positional ? pos_h : q_h;
  const Tensor pe_o = config.pe_from_positional ? pos_o : q_o;

  if (config.intra_class) {
    return {aggregate_one_pool(q_h, pe_h, boxes_h, prox, params, config),
            aggregate_one_pool(q_o, pe_o, boxes_o, prox, params, config)};
  }

  std::vector<Box> boxes = boxes_h;
  boxes.insert(boxes.end(), boxes_o.begin(), boxes_o.end());
  Tensor q_all = concat_rows({q_h, q_o});
  Tensor pe_all = concat_rows({pe_h, pe_o});
  Tensor out = aggregate_one_pool(q_all, pe_all, boxes, prox, params, config);
  return {slice_rows(out, 0, n_h), slice_rows(out, n_h, n_h + n_o)};
}

}  // namespace groupdet
