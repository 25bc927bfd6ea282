#pragma once

#include <memory>
#include <string>
#include <vector>

#include "groupdet/attention.hpp"
#include "groupdet/geo_attention.hpp"
#include "groupdet/matching.hpp"
#include "groupdet/sem_group.hpp"

namespace groupdet {

struct ModelConfig {
  int d_entity = 32;  // interaction width is 3 * d_entity
  int n_queries = 16;
  int encoder_layers = 2;
  int instance_decoder_layers = 2;
  int interaction_decoder_layers = 2;
  int heads = 2;
  int ffn_mult = 4;

  int k_geometric = 4;
  int k_semantic = 2;
  int geo_layers = -1;  // leading decoder layers with the geometric block; -1 = all
  int sem_layers = -1;
  bool intra_class = true;  // false = mixed human/object pool
  bool pe_from_positional = true;
  bool exclude_self = true;
  bool squared_distance = false;
  bool use_geo = true;
  bool use_sem = true;
  NormKind sem_norm = NormKind::kLayer;

  int n_object_classes = 5;
  int n_interaction_classes = 6;

  bool focal = false;  // interaction loss: false = asymmetric, true = focal
  double gamma_pos = 0.0;
  double gamma_neg = 4.0;
  double asl_clip = 0.05;
  double focal_gamma = 2.0;
  double eos_coef = 0.1;  // weight of the no-object class in the object CE

  double lambda_box = 2.5;
  double lambda_giou = 1.0;
  double lambda_obj = 1.0;
  double lambda_int = 1.0;
  MatchWeights match_weights;

  int d_interaction() const { return 3 * d_entity; }
  void validate() const;
  // Keys that determine parameter shapes and forward semantics; recorded in
  // checkpoints and compared on load.
  std::string arch_string() const;
};

struct ModelOutput {
  Tensor boxes_h;     // [Q x 4], sigmoid cx cy w h
  Tensor boxes_o;     // [Q x 4]
  Tensor obj_logits;  // [Q x (C_o + 1)], last class = no object
  Tensor int_logits;  // [Q x C_a], multi-label
};

// The set-prediction network: encoder over scene tokens, instance decoder
// with interleaved geometric grouping, interaction decoder with interleaved
// semantic grouping, and prediction heads.
class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }

  // features/pos: [HW x d_entity]
  ModelOutput forward(const Tensor& features, const Tensor& pos) const;

  Tensor encode(const Tensor& features, const Tensor& pos) const;

  struct InstanceResult {
    Tensor q_h, q_o;    // final normalized embeddings, [Q x d]
    Tensor boxes_h, boxes_o;
    Tensor obj_logits;
  };
  InstanceResult instance_decode(const Tensor& memory, const Tensor& memory_pos) const;

  // mean of the two embeddings, tiled x3 to the interaction width
  static Tensor init_interaction_queries(const Tensor& q_h, const Tensor& q_o);

  // q_int: [Q x 3d]; memory is tiled internally
  Tensor interaction_decode(const Tensor& memory, const Tensor& memory_pos,
                            const Tensor& q_int) const;

  // Per-query values for Hungarian matching (probabilities, detached).
  std::vector<PredSlot> prediction_slots(const ModelOutput& out) const;

 private:
  struct EncoderLayer {
    LayerNormParams ln1, ln2;
    AttentionParams attn;
    FfnParams ffn;
  };
  struct InstanceLayer {
    GeoLayerParams geo;
    LayerNormParams ln1, ln2, ln3;
    AttentionParams self_attn, cross_attn;
    FfnParams ffn;
  };
  struct InteractionLayer {
    SemLayerParams sem;
    LayerNormParams ln1, ln2, ln3;
    AttentionParams self_attn, cross_attn;
    FfnParams ffn;
  };

  GeoConfig geo_config() const;
  // sigmoid(head(final_ln(queries)) + anchor)
  Tensor decode_boxes(const Tensor& queries, const AffineLayer& head, const Tensor& anchor) const;
  // Boxes decoded from the current residual stream; values only, no history.
  std::vector<Box> boxes_from_queries(const Tensor& queries, const AffineLayer& head,
                                      const Tensor& anchor) const;

  ModelConfig config_;
  ParamStore store_;
  std::vector<EncoderLayer> encoder_;
  LayerNormParams enc_final_ln_;
  Tensor query_h_, query_o_;          // learned content, [Q x d]
  Tensor query_pos_h_, query_pos_o_;  // learned query position embeddings
  // per-query box anchors (pre-sigmoid), initialized on a grid so query
  // slots tile the frame before any training
  Tensor query_anchor_h_, query_anchor_o_;
  std::vector<InstanceLayer> instance_;
  LayerNormParams ins_final_ln_;
  AffineLayer box_head_h_, box_head_o_, obj_head_;
  Tensor prox_weights_;  // [3]: w_dis, w_iou, bias
  std::vector<InteractionLayer> interaction_;
  LayerNormParams int_final_ln_;
  AffineLayer int_head_;
};

}  // namespace groupdet
