#include "groupdet/model.hpp"

#include <cmath>
#include <sstream>

namespace groupdet {

void ModelConfig::validate() const {
  if (d_entity <= 0 || d_entity % 4 != 0)
    throw config_error("d_entity must be a positive multiple of 4");
  if (heads <= 0 || d_entity % heads != 0)
    throw config_error("d_entity must be divisible by heads");
  if (n_queries < 1) throw config_error("n_queries must be >= 1");
  if (encoder_layers < 0 || instance_decoder_layers < 0 || interaction_decoder_layers < 0)
    throw config_error("layer counts must be >= 0");
  if (ffn_mult < 1) throw config_error("ffn_mult must be >= 1");
  if (k_geometric <= 0) throw config_error("geometric group size must be positive");
  if (k_semantic <= 0) throw config_error("semantic group size must be positive");
  if (n_object_classes < 1) throw config_error("need at least one object class");
  if (n_interaction_classes < 2) throw config_error("need at least two interaction classes");
  if (eos_coef <= 0.0) throw config_error("eos_coef must be positive");
}

std::string ModelConfig::arch_string() const {
  std::ostringstream os;
  os << "d_entity=" << d_entity << ";n_queries=" << n_queries << ";encoder_layers=" << encoder_layers
     << ";instance_decoder_layers=" << instance_decoder_layers
     << ";interaction_decoder_layers=" << interaction_decoder_layers << ";heads=" << heads
     << ";ffn_mult=" << ffn_mult << ";k_geometric=" << k_geometric << ";k_semantic=" << k_semantic
     << ";geo_layers=" << geo_layers << ";sem_layers=" << sem_layers
     << ";group_mode=" << (intra_class ? "intra_class" : "mixed")
     << ";pe_source=" << (pe_from_positional ? "positional" : "content")
     << ";exclude_self=" << exclude_self << ";squared_distance=" << squared_distance
     << ";sem_norm=" << (sem_norm == NormKind::kLayer ? "layer" : "batch")
     << ";object_classes=" << n_object_classes << ";interaction_classes=" << n_interaction_classes;
  return os.str();
}

namespace {

AffineLayer make_affine(ParamStore& store, const std::string& name, int in, int out, Rng& rng) {
  return {store.add_affine_weight(name + ".w", in, out, rng),
          store.add_zeros(name + ".b", {out})};
}

Tensor tile3(const Tensor& x) { return concat_cols({x, x, x}); }

}  // namespace

Model::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  Rng rng(seed);
  const int d = config_.d_entity;
  const int di = config_.d_interaction();
  const int q = config_.n_queries;
  const int hidden = config_.ffn_mult * d;
  const int hidden_i = config_.ffn_mult * di;

  for (int l = 0; l < config_.encoder_layers; ++l) {
    const std::string p = "enc.l" + std::to_string(l);
    EncoderLayer layer;
    layer.ln1 = LayerNormParams::create(store_, p + ".ln1", d);
    layer.attn = AttentionParams::create(store_, p + ".attn", d, config_.heads, rng);
    layer.ln2 = LayerNormParams::create(store_, p + ".ln2", d);
    layer.ffn = FfnParams::create(store_, p + ".ffn", d, hidden, rng);
    encoder_.push_back(std::move(layer));
  }
  enc_final_ln_ = LayerNormParams::create(store_, "enc.final_ln", d);

  auto init_embed = [&](const std::string& name) -> Tensor& {
    Tensor t = Tensor::zeros({q, d});
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    for (double& x : t.vec()) x = rng.uniform(-bound, bound);
    return store_.add(name, std::move(t));
  };
  query_h_ = init_embed("query.h.content");
  query_pos_h_ = init_embed("query.h.pos");
  query_o_ = init_embed("query.o.content");
  query_pos_o_ = init_embed("query.o.pos");

  // pre-sigmoid anchors on a grid, with class-typical size priors
  auto init_anchor = [&](const std::string& name, double w0, double h0) -> Tensor& {
    const auto logit = [](double p) { return std::log(p / (1.0 - p)); };
    const int side = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(q))));
    Tensor t = Tensor::zeros({q, 4});
    for (int i = 0; i < q; ++i) {
      t.at(i, 0) = logit((i % side + 0.5) / side);
      t.at(i, 1) = logit((i / side + 0.5) / side);
      t.at(i, 2) = logit(w0);
      t.at(i, 3) = logit(h0);
    }
    return store_.add(name, std::move(t));
  };
  query_anchor_h_ = init_anchor("query.h.anchor", 0.14, 0.25);
  query_anchor_o_ = init_anchor("query.o.anchor", 0.10, 0.10);

  prox_weights_ = store_.add("prox.weights", Tensor::from({3}, {1.0, -1.0, 0.0}));

  for (int l = 0; l < config_.instance_decoder_layers; ++l) {
    const std::string p = "insdec.l" + std::to_string(l);
    InstanceLayer layer;
    layer.geo = GeoLayerParams::create(store_, p + ".geo", d, rng);
    layer.ln1 = LayerNormParams::create(store_, p + ".ln1", d);
    layer.self_attn = AttentionParams::create(store_, p + ".self_attn", d, config_.heads, rng);
    layer.ln2 = LayerNormParams::create(store_, p + ".ln2", d);
    layer.cross_attn = AttentionParams::create(store_, p + ".cross_attn", d, config_.heads, rng);
    layer.ln3 = LayerNormParams::create(store_, p + ".ln3", d);
    layer.ffn = FfnParams::create(store_, p + ".ffn", d, hidden, rng);
    instance_.push_back(std::move(layer));
  }
  ins_final_ln_ = LayerNormParams::create(store_, "insdec.final_ln", d);
  box_head_h_ = make_affine(store_, "head.box_h", d, 4, rng);
  box_head_o_ = make_affine(store_, "head.box_o", d, 4, rng);
  obj_head_ = make_affine(store_, "head.obj", d, config_.n_object_classes + 1, rng);

  for (int l = 0; l < config_.interaction_decoder_layers; ++l) {
    const std::string p = "intdec.l" + std::to_string(l);
    InteractionLayer layer;
    layer.sem = SemLayerParams::create(store_, p + ".sem", di, rng, config_.sem_norm);
    layer.ln1 = LayerNormParams::create(store_, p + ".ln1", di);
    layer.self_attn = AttentionParams::create(store_, p + ".self_attn", di, config_.heads, rng);
    layer.ln2 = LayerNormParams::create(store_, p + ".ln2", di);
    layer.cross_attn = AttentionParams::create(store_, p + ".cross_attn", di, config_.heads, rng);
    layer.ln3 = LayerNormParams::create(store_, p + ".ln3", di);
    layer.ffn = FfnParams::create(store_, p + ".ffn", di, hidden_i, rng);
    interaction_.push_back(std::move(layer));
  }
  int_final_ln_ = LayerNormParams::create(store_, "intdec.final_ln", di);
  int_head_ = make_affine(store_, "head.int", di, config_.n_interaction_classes, rng);
}

GeoConfig Model::geo_config() const {
  GeoConfig g;
  g.k_geometric = config_.k_geometric;
  g.exclude_self = config_.exclude_self;
  g.squared_distance = config_.squared_distance;
  g.intra_class = config_.intra_class;
  g.pe_from_positional = config_.pe_from_positional;
  return g;
}

Tensor Model::encode(const Tensor& features, const Tensor& pos) const {
  if (features.ndim() != 2 || features.dim(1) != config_.d_entity)
    throw dim_error("encode: features must be [tokens x d_entity]");
  if (pos.shape() != features.shape())
    throw dim_error("encode: positional embeddings must match features");
  // Grid coordinates are baked into the stream itself, not only into the
  // attention logits: box regression reads positions straight out of the
  // memory values, which a desk-scale training budget needs. Zero layers stay
  // a pure identity.
  if (encoder_.empty()) return features;
  Tensor x = add(features, pos);
  for (const EncoderLayer& layer : encoder_) {
    Tensor h = apply_ln(x, layer.ln1);
    Tensor hp = add(h, pos);
    x = add(x, multi_head_attention(hp, hp, h, layer.attn));
    x = add(x, apply_ffn(apply_ln(x, layer.ln2), layer.ffn));
  }
  return apply_ln(x, enc_final_ln_);
}

Tensor Model::decode_boxes(const Tensor& queries, const AffineLayer& head,
                           const Tensor& anchor) const {
  return sigmoid(add(affine(apply_ln(queries, ins_final_ln_), head.weight, head.bias), anchor));
}

std::vector<Box> Model::boxes_from_queries(const Tensor& queries, const AffineLayer& head,
                                           const Tensor& anchor) const {
  NoGradGuard ng;
  Tensor raw = decode_boxes(queries.detach(), head, anchor);
  std::vector<Box> boxes;
  boxes.reserve(static_cast<std::size_t>(raw.dim(0)));
  for (int i = 0; i < raw.dim(0); ++i) {
    boxes.push_back({raw.at(i, 0), raw.at(i, 1), raw.at(i, 2), raw.at(i, 3)});
  }
  return boxes;
}

Model::InstanceResult Model::instance_decode(const Tensor& memory, const Tensor& memory_pos) const {
  const int q = config_.n_queries;
  Tensor u = concat_rows({query_h_, query_o_});
  Tensor qpos = concat_rows({query_pos_h_, query_pos_o_});

  for (int l = 0; l < config_.instance_decoder_layers; ++l) {
    const InstanceLayer& layer = instance_[static_cast<std::size_t>(l)];
    const bool geo_on =
        config_.use_geo && (config_.geo_layers < 0 || l < config_.geo_layers);
    if (geo_on) {
      Tensor u_h = slice_rows(u, 0, q);
      Tensor u_o = slice_rows(u, q, 2 * q);
      const std::vector<Box> boxes_h = boxes_from_queries(u_h, box_head_h_, query_anchor_h_);
      const std::vector<Box> boxes_o = boxes_from_queries(u_o, box_head_o_, query_anchor_o_);
      const ProximityWeights prox{prox_weights_.at(0), prox_weights_.at(1), prox_weights_.at(2)};
      auto [g_h, g_o] = geometric_layer(u_h, u_o, query_pos_h_, query_pos_o_, boxes_h, boxes_o,
                                        prox, layer.geo, geo_config());
      u = concat_rows({g_h, g_o});
    }
    Tensor h = apply_ln(u, layer.ln1);
    Tensor hp = add(h, qpos);
    u = add(u, multi_head_attention(hp, hp, h, layer.self_attn));
    h = apply_ln(u, layer.ln2);
    u = add(u, multi_head_attention(add(h, qpos), add(memory, memory_pos), memory,
                                    layer.cross_attn));
    u = add(u, apply_ffn(apply_ln(u, layer.ln3), layer.ffn));
  }

  InstanceResult result;
  result.boxes_h = decode_boxes(slice_rows(u, 0, q), box_head_h_, query_anchor_h_);
  result.boxes_o = decode_boxes(slice_rows(u, q, 2 * q), box_head_o_, query_anchor_o_);
  Tensor final = apply_ln(u, ins_final_ln_);
  result.q_h = slice_rows(final, 0, q);
  result.q_o = slice_rows(final, q, 2 * q);
  result.obj_logits = affine(result.q_o, obj_head_.weight, obj_head_.bias);
  return result;
}

Tensor Model::init_interaction_queries(const Tensor& q_h, const Tensor& q_o) {
  if (q_h.shape() != q_o.shape())
    throw dim_error("init_interaction_queries: branch shapes disagree");
  return tile3(scale(add(q_h, q_o), 0.5));
}

Tensor Model::interaction_decode(const Tensor& memory, const Tensor& memory_pos,
                                 const Tensor& q_int) const {
  if (q_int.ndim() != 2 || q_int.dim(1) != config_.d_interaction())
    throw dim_error("interaction_decode: queries must be [Q x 3*d_entity]");
  const int d = config_.d_entity;
  Tensor ipos = tile3(scale(add(query_pos_h_, query_pos_o_), 0.5));
  Tensor mem_with_pos = add(memory, memory_pos);

  // Keys/values come from the x3-tiled memory; tile3(x) @ W == x @ (sum of
  // the three d-row blocks of W), so the tiling folds into the projections.
  auto fold3 = [d](const Tensor& w) {
    return add(add(slice_rows(w, 0, d), slice_rows(w, d, 2 * d)), slice_rows(w, 2 * d, 3 * d));
  };

  Tensor u = q_int;
  for (int l = 0; l < config_.interaction_decoder_layers; ++l) {
    const InteractionLayer& layer = interaction_[static_cast<std::size_t>(l)];
    const bool sem_on =
        config_.use_sem && (config_.sem_layers < 0 || l < config_.sem_layers);
    if (sem_on) u = semantic_layer(u, config_.k_semantic, layer.sem);
    Tensor h = apply_ln(u, layer.ln1);
    Tensor hp = add(h, ipos);
    u = add(u, multi_head_attention(hp, hp, h, layer.self_attn));
    h = apply_ln(u, layer.ln2);
    Tensor k = add_rowvec(matmul(mem_with_pos, fold3(layer.cross_attn.wk.weight)),
                          layer.cross_attn.wk.bias);
    Tensor v = add_rowvec(matmul(memory, fold3(layer.cross_attn.wv.weight)),
                          layer.cross_attn.wv.bias);
    u = add(u, attention_projected_kv(add(h, ipos), k, v, layer.cross_attn));
    u = add(u, apply_ffn(apply_ln(u, layer.ln3), layer.ffn));
  }
  return affine(apply_ln(u, int_final_ln_), int_head_.weight, int_head_.bias);
}

ModelOutput Model::forward(const Tensor& features, const Tensor& pos) const {
  Tensor memory = encode(features, pos);
  InstanceResult ins = instance_decode(memory, pos);
  Tensor q_int = init_interaction_queries(ins.q_h, ins.q_o);
  ModelOutput out;
  out.boxes_h = ins.boxes_h;
  out.boxes_o = ins.boxes_o;
  out.obj_logits = ins.obj_logits;
  out.int_logits = interaction_decode(memory, pos, q_int);
  return out;
}

std::vector<PredSlot> Model::prediction_slots(const ModelOutput& out) const {
  const int q = config_.n_queries;
  const int n_obj = config_.n_object_classes;
  const int n_int = config_.n_interaction_classes;
  std::vector<PredSlot> slots(static_cast<std::size_t>(q));
  for (int i = 0; i < q; ++i) {
    PredSlot& s = slots[static_cast<std::size_t>(i)];
    s.human = {out.boxes_h.at(i, 0), out.boxes_h.at(i, 1), out.boxes_h.at(i, 2), out.boxes_h.at(i, 3)};
    s.object = {out.boxes_o.at(i, 0), out.boxes_o.at(i, 1), out.boxes_o.at(i, 2), out.boxes_o.at(i, 3)};
    s.obj_probs.resize(static_cast<std::size_t>(n_obj) + 1);
    double mx = out.obj_logits.at(i, 0);
    for (int c = 1; c <= n_obj; ++c) mx = std::max(mx, out.obj_logits.at(i, c));
    double sum = 0.0;
    for (int c = 0; c <= n_obj; ++c) {
      s.obj_probs[static_cast<std::size_t>(c)] = std::exp(out.obj_logits.at(i, c) - mx);
      sum += s.obj_probs[static_cast<std::size_t>(c)];
    }
    for (double& p : s.obj_probs) p /= sum;
    s.int_sigmoid.resize(static_cast<std::size_t>(n_int));
    for (int a = 0; a < n_int; ++a)
      s.int_sigmoid[static_cast<std::size_t>(a)] = 1.0 / (1.0 + std::exp(-out.int_logits.at(i, a)));
  }
  return slots;
}

}  // namespace groupdet
