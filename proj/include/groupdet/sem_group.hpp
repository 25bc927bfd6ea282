#pragma once

#include "groupdet/grouping.hpp"
#include "groupdet/ops.hpp"
#include "groupdet/optim.hpp"

namespace groupdet {

enum class NormKind { kLayer, kBatch };

// phi4 maps concat(q_i, q_j - q_i) [2d] to context features [d]; phi5 maps
// the pooled context back to the query dimension. Both are
// linear -> normalization -> ReLU -> linear.
struct SemLayerParams {
  AffineLayer phi4_in;   // 2d -> d
  Tensor phi4_norm_gain;
  Tensor phi4_norm_bias;
  AffineLayer phi4_out;  // d -> d
  AffineLayer phi5_in;   // d -> d
  Tensor phi5_norm_gain;
  Tensor phi5_norm_bias;
  AffineLayer phi5_out;  // d -> d
  NormKind norm = NormKind::kLayer;

  static SemLayerParams create(ParamStore& store, const std::string& prefix, int d, Rng& rng,
                               NormKind norm);
};

// m_i = channel_max over group members of phi4(concat(q_i, q_j - q_i)).
// q_i: [d], group_rows: [k x d] with k >= 1; returns [d].
Tensor semantic_context(const Tensor& q_i, const Tensor& group_rows, const SemLayerParams& params);

// q_i + phi5(m_i)
Tensor integrate_context(const Tensor& q_i, const Tensor& m_i, const SemLayerParams& params);

// Rebuilds cosine top-k groups from the current queries (selection carries no
// gradient), aggregates context, and integrates it per query. n = 1 is the
// identity.
Tensor semantic_layer(const Tensor& queries, int k_semantic, const SemLayerParams& params);

}  // namespace groupdet
