#pragma once

#include <utility>

#include "groupdet/grouping.hpp"
#include "groupdet/ops.hpp"
#include "groupdet/optim.hpp"

namespace groupdet {

// Parameters of one geometric-aware local transformer layer: a position
// encoder delta, point-wise projections phi1/phi2/phi3, the per-channel
// logit MLP gamma, and the output alignment theta. All maps are d -> d.
struct GeoLayerParams {
  std::vector<AffineLayer> delta;  // two layers, ReLU between
  AffineLayer phi1;
  AffineLayer phi2;
  AffineLayer phi3;
  std::vector<AffineLayer> gamma;  // two layers, ReLU between
  AffineLayer theta;

  static GeoLayerParams create(ParamStore& store, const std::string& prefix, int d, Rng& rng);
};

struct GeoConfig {
  int k_geometric = 4;
  bool exclude_self = true;
  bool squared_distance = false;
  bool intra_class = true;          // false = one mixed human/object pool
  bool pe_from_positional = true;   // false = position encodings from content
};

// p_ij = delta(e_i - e_j) for a single pair; e_* are [d].
Tensor position_encoding(const Tensor& e_i, const Tensor& e_j, const GeoLayerParams& params);

// Per-channel softmax over the k group members of
// gamma(phi1(q_i) - phi2(q_j) + p_j); every channel's weights sum to 1.
// q_i: [d], neighbors/pos_enc: [k x d]; returns [k x d].
Tensor dispatch_matrix(const Tensor& q_i, const Tensor& neighbors, const Tensor& pos_enc,
                       const GeoLayerParams& params);

// Vector attention within each entity's group plus the mandatory residual:
// out_i = theta(sum_j t_ij (.) (phi3(q_j) + p_ij)) + q_i. Entities with an
// empty group pass through unchanged. pe_source: [n x d] rows feeding delta.
Tensor aggregate_geometric(const Tensor& queries, const GroupIndex& groups,
                           const Tensor& pe_source, const GeoLayerParams& params);

// Full layer: builds proximity groups from boxes (per class under intra-class
// mode, one pool otherwise) and aggregates. Returns refined (humans, objects).
std::pair<Tensor, Tensor> geometric_layer(const Tensor& q_h, const Tensor& q_o,
                                          const Tensor& pos_h, const Tensor& pos_o,
                                          const std::vector<Box>& boxes_h,
                                          const std::vector<Box>& boxes_o,
                                          const ProximityWeights& prox,
                                          const GeoLayerParams& params, const GeoConfig& config);

}  // namespace groupdet
