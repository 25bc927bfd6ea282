#pragma once

#include "groupdet/ops.hpp"
#include "groupdet/optim.hpp"

namespace groupdet {

struct AttentionParams {
  AffineLayer wq, wk, wv, wo;
  int heads = 1;

  static AttentionParams create(ParamStore& store, const std::string& prefix, int d, int heads,
                                Rng& rng);
};

// Scaled dot-product attention, h heads over column blocks of width d/h.
// queries: [nq x d], keys/values: [nk x d].
Tensor multi_head_attention(const Tensor& queries, const Tensor& keys, const Tensor& values,
                            const AttentionParams& params);

// Same attention with keys/values already projected (for callers that fold
// structure, like tiling, into the k/v projections).
Tensor attention_projected_kv(const Tensor& queries, const Tensor& k_projected,
                              const Tensor& v_projected, const AttentionParams& params);

struct LayerNormParams {
  Tensor gain, bias;

  static LayerNormParams create(ParamStore& store, const std::string& prefix, int d);
};

inline Tensor apply_ln(const Tensor& x, const LayerNormParams& p) {
  return layer_norm(x, p.gain, p.bias);
}

struct FfnParams {
  AffineLayer in, out;  // d -> hidden -> d with ReLU between

  static FfnParams create(ParamStore& store, const std::string& prefix, int d, int hidden,
                          Rng& rng);
};

Tensor apply_ffn(const Tensor& x, const FfnParams& p);

}  // namespace groupdet
