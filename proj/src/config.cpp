#include "groupdet/config.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <vector>

namespace groupdet {

namespace {

struct KeyBinding {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const int value = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return value;
  } catch (const std::exception&) {
    throw config_error("config: key '" + key + "' expects an integer, got '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const std::uint64_t value = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return value;
  } catch (const std::exception&) {
    throw config_error("config: key '" + key + "' expects an unsigned integer, got '" + v + "'");
  }
}

double parse_double(const std::string& key, const std::string& v) {
  if (v == "inf") return std::numeric_limits<double>::infinity();
  try {
    std::size_t pos = 0;
    const double value = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing characters");
    return value;
  } catch (const std::exception&) {
    throw config_error("config: key '" + key + "' expects a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw config_error("config: key '" + key + "' expects 0/1, got '" + v + "'");
}

std::string fmt_double(double v) {
  if (std::isinf(v)) return "inf";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<KeyBinding> build_bindings() {
  std::vector<KeyBinding> keys;
  auto add_int = [&](const std::string& name, auto member) {
    keys.push_back({name,
                    [name, member](RunConfig& c, const std::string& v) { c.*member = parse_int(name, v); },
                    [member](const RunConfig& c) { return std::to_string(c.*member); }});
  };
  auto add_u64 = [&](const std::string& name, auto member) {
    keys.push_back({name,
                    [name, member](RunConfig& c, const std::string& v) { c.*member = parse_u64(name, v); },
                    [member](const RunConfig& c) { return std::to_string(c.*member); }});
  };
  auto add_double = [&](const std::string& name, auto member) {
    keys.push_back({name,
                    [name, member](RunConfig& c, const std::string& v) { c.*member = parse_double(name, v); },
                    [member](const RunConfig& c) { return fmt_double(c.*member); }});
  };
  auto add_string = [&](const std::string& name, auto member) {
    keys.push_back({name, [member](RunConfig& c, const std::string& v) { c.*member = v; },
                    [member](const RunConfig& c) { return c.*member; }});
  };

  // scene generator
  auto add_synth_int = [&](const std::string& name, auto member) {
    keys.push_back({name,
                    [name, member](RunConfig& c, const std::string& v) { c.synth.*member = parse_int(name, v); },
                    [member](const RunConfig& c) { return std::to_string(c.synth.*member); }});
  };
  auto add_synth_double = [&](const std::string& name, auto member) {
    keys.push_back({name,
                    [name, member](RunConfig& c, const std::string& v) { c.synth.*member = parse_double(name, v); },
                    [member](const RunConfig& c) { return fmt_double(c.synth.*member); }});
  };
  add_synth_int("grid_h", &SynthConfig::grid_h);
  add_synth_int("grid_w", &SynthConfig::grid_w);
  add_synth_int("humans_min", &SynthConfig::humans_min);
  add_synth_int("humans_max", &SynthConfig::humans_max);
  add_synth_int("objects_min", &SynthConfig::objects_min);
  add_synth_int("objects_max", &SynthConfig::objects_max);
  add_synth_double("noise_sigma", &SynthConfig::noise_sigma);
  add_synth_double("hold_motif_prob", &SynthConfig::hold_motif_prob);
  add_synth_double("team_motif_prob", &SynthConfig::team_motif_prob);
  add_synth_double("rare_motif_prob", &SynthConfig::rare_motif_prob);
  add_synth_int("max_pairs", &SynthConfig::max_pairs);
  for (int rule = 0; rule < kNumRules; ++rule) {
    static const char* rule_names[kNumRules] = {"rule_hold", "rule_near",   "rule_watch",
                                                "rule_team", "rule_beside", "rule_balance"};
    const std::string name = rule_names[rule];
    keys.push_back({name,
                    [name, rule](RunConfig& c, const std::string& v) {
                      c.synth.rule_enabled[rule] = parse_bool(name, v);
                    },
                    [rule](const RunConfig& c) { return c.synth.rule_enabled[rule] ? "1" : "0"; }});
  }

  // shared dims / classes (mirrored into both synth and model configs)
  keys.push_back({"d_entity",
                  [](RunConfig& c, const std::string& v) {
                    c.model.d_entity = parse_int("d_entity", v);
                    c.synth.d_entity = c.model.d_entity;
                  },
                  [](const RunConfig& c) { return std::to_string(c.model.d_entity); }});
  keys.push_back({"object_classes",
                  [](RunConfig& c, const std::string& v) {
                    c.model.n_object_classes = parse_int("object_classes", v);
                    c.synth.n_object_classes = c.model.n_object_classes;
                  },
                  [](const RunConfig& c) { return std::to_string(c.model.n_object_classes); }});
  keys.push_back({"interaction_classes",
                  [](RunConfig& c, const std::string& v) {
                    c.model.n_interaction_classes = parse_int("interaction_classes", v);
                    c.synth.n_interaction_classes = c.model.n_interaction_classes;
                  },
                  [](const RunConfig& c) { return std::to_string(c.model.n_interaction_classes); }});

  // model
  auto add_model_int = [&](const std::string& name, auto member) {
    keys.push_back({name,
                    [name, member](RunConfig& c, const std::string& v) { c.model.*member = parse_int(name, v); },
                    [member](const RunConfig& c) { return std::to_string(c.model.*member); }});
  };
  auto add_model_double = [&](const std::string& name, auto member) {
    keys.push_back({name,
                    [name, member](RunConfig& c, const std::string& v) { c.model.*member = parse_double(name, v); },
                    [member](const RunConfig& c) { return fmt_double(c.model.*member); }});
  };
  auto add_model_bool = [&](const std::string& name, auto member) {
    keys.push_back({name,
                    [name, member](RunConfig& c, const std::string& v) { c.model.*member = parse_bool(name, v); },
                    [member](const RunConfig& c) { return (c.model.*member) ? "1" : "0"; }});
  };
  add_model_int("n_queries", &ModelConfig::n_queries);
  add_model_int("encoder_layers", &ModelConfig::encoder_layers);
  add_model_int("instance_decoder_layers", &ModelConfig::instance_decoder_layers);
  add_model_int("interaction_decoder_layers", &ModelConfig::interaction_decoder_layers);
  add_model_int("heads", &ModelConfig::heads);
  add_model_int("ffn_mult", &ModelConfig::ffn_mult);
  add_model_int("k_geometric", &ModelConfig::k_geometric);
  add_model_int("k_semantic", &ModelConfig::k_semantic);
  add_model_int("geo_layers", &ModelConfig::geo_layers);
  add_model_int("sem_layers", &ModelConfig::sem_layers);
  add_model_bool("exclude_self", &ModelConfig::exclude_self);
  add_model_bool("squared_distance", &ModelConfig::squared_distance);
  add_model_bool("use_geo", &ModelConfig::use_geo);
  add_model_bool("use_sem", &ModelConfig::use_sem);
  keys.push_back({"group_mode",
                  [](RunConfig& c, const std::string& v) {
                    if (v == "intra_class")
                      c.model.intra_class = true;
                    else if (v == "mixed")
                      c.model.intra_class = false;
                    else
                      throw config_error("config: group_mode must be intra_class or mixed");
                  },
                  [](const RunConfig& c) {
                    return std::string(c.model.intra_class ? "intra_class" : "mixed");
                  }});
  keys.push_back({"pe_source",
                  [](RunConfig& c, const std::string& v) {
                    if (v == "positional")
                      c.model.pe_from_positional = true;
                    else if (v == "content")
                      c.model.pe_from_positional = false;
                    else
                      throw config_error("config: pe_source must be positional or content");
                  },
                  [](const RunConfig& c) {
                    return std::string(c.model.pe_from_positional ? "positional" : "content");
                  }});
  keys.push_back({"sem_norm",
                  [](RunConfig& c, const std::string& v) {
                    if (v == "layer")
                      c.model.sem_norm = NormKind::kLayer;
                    else if (v == "batch")
                      c.model.sem_norm = NormKind::kBatch;
                    else
                      throw config_error("config: sem_norm must be layer or batch");
                  },
                  [](const RunConfig& c) {
                    return std::string(c.model.sem_norm == NormKind::kLayer ? "layer" : "batch");
                  }});
  keys.push_back({"cls_loss",
                  [](RunConfig& c, const std::string& v) {
                    if (v == "asl")
                      c.model.focal = false;
                    else if (v == "focal")
                      c.model.focal = true;
                    else
                      throw config_error("config: cls_loss must be asl or focal");
                  },
                  [](const RunConfig& c) { return std::string(c.model.focal ? "focal" : "asl"); }});
  add_model_double("gamma_pos", &ModelConfig::gamma_pos);
  add_model_double("gamma_neg", &ModelConfig::gamma_neg);
  add_model_double("asl_clip", &ModelConfig::asl_clip);
  add_model_double("focal_gamma", &ModelConfig::focal_gamma);
  add_model_double("eos_coef", &ModelConfig::eos_coef);
  add_model_double("lambda_box", &ModelConfig::lambda_box);
  add_model_double("lambda_giou", &ModelConfig::lambda_giou);
  add_model_double("lambda_obj", &ModelConfig::lambda_obj);
  add_model_double("lambda_int", &ModelConfig::lambda_int);
  auto add_match_double = [&](const std::string& name, auto member) {
    keys.push_back({name,
                    [name, member](RunConfig& c, const std::string& v) {
                      c.model.match_weights.*member = parse_double(name, v);
                    },
                    [member](const RunConfig& c) { return fmt_double(c.model.match_weights.*member); }});
  };
  add_match_double("match_w_cls", &MatchWeights::cls);
  add_match_double("match_w_int", &MatchWeights::interaction);
  add_match_double("match_w_l1", &MatchWeights::l1);
  add_match_double("match_w_giou", &MatchWeights::giou);

  // optimizer / schedule
  add_double("lr", &RunConfig::lr);
  add_double("weight_decay", &RunConfig::weight_decay);
  add_double("beta1", &RunConfig::beta1);
  add_double("beta2", &RunConfig::beta2);
  add_double("adam_eps", &RunConfig::adam_eps);
  add_double("grad_clip", &RunConfig::grad_clip);
  add_int("batch_size", &RunConfig::batch_size);
  add_int("train_steps", &RunConfig::train_steps);
  add_int("warmup_steps", &RunConfig::warmup_steps);
  add_int("lr_drop_epochs", &RunConfig::lr_drop_epochs);
  add_u64("seed", &RunConfig::seed);
  add_int("n_train", &RunConfig::n_train);
  add_int("n_val", &RunConfig::n_val);
  add_int("val_every_epochs", &RunConfig::val_every_epochs);

  // protocol
  add_int("eval_top_k", &RunConfig::eval_top_k);
  add_double("nms_iou", &RunConfig::nms_iou);
  add_double("match_iou", &RunConfig::match_iou);
  keys.push_back({"ap_interp",
                  [](RunConfig& c, const std::string& v) {
                    if (v == "all")
                      c.eleven_point_ap = false;
                    else if (v == "11pt")
                      c.eleven_point_ap = true;
                    else
                      throw config_error("config: ap_interp must be all or 11pt");
                  },
                  [](const RunConfig& c) { return std::string(c.eleven_point_ap ? "11pt" : "all"); }});

  // paths
  add_string("out_dir", &RunConfig::out_dir);
  add_string("train_file", &RunConfig::train_file);
  add_string("val_file", &RunConfig::val_file);
  add_string("meta_file", &RunConfig::meta_file);
  add_string("checkpoint", &RunConfig::checkpoint);

  // sweep
  add_string("sweep_axis", &RunConfig::sweep_axis);
  add_string("sweep_values", &RunConfig::sweep_values);

  // gradcheck
  add_double("gc_h", &RunConfig::gc_h);
  add_double("gc_tol", &RunConfig::gc_tol);
  add_u64("gc_seed", &RunConfig::gc_seed);

  // bench
  add_int("bench_runs", &RunConfig::bench_runs);
  add_int("bench_warmup", &RunConfig::bench_warmup);
  return keys;
}

const std::vector<KeyBinding>& bindings() {
  static const std::vector<KeyBinding> keys = build_bindings();
  return keys;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::size_t hash_pos = raw.find('#');
    if (hash_pos != std::string::npos) raw.resize(hash_pos);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw config_error("config: line " + std::to_string(line_no) + " is not key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    bool found = false;
    for (const KeyBinding& b : bindings()) {
      if (b.name == key) {
        b.set(cfg, value);
        found = true;
        break;
      }
    }
    if (!found) throw config_error("config: unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_text(buf.str());
}

std::string RunConfig::canonical_text() const {
  std::string out;
  for (const KeyBinding& b : bindings()) {
    out += b.name;
    out += "=";
    out += b.get(*this);
    out += "\n";
  }
  return out;
}

std::uint64_t RunConfig::hash() const {
  const std::string text = canonical_text();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void RunConfig::validate() const {
  synth.validate();
  model.validate();
  if (synth.d_entity != model.d_entity)
    throw config_error("config: rasterizer channels must equal d_entity");
  if (synth.n_interaction_classes != model.n_interaction_classes ||
      synth.n_object_classes != model.n_object_classes)
    throw config_error("config: class counts must match between data and model");
  if (synth.max_pairs > model.n_queries)
    throw config_error("config: max_pairs must not exceed n_queries");
  if (lr <= 0.0) throw config_error("config: lr must be positive");
  if (batch_size < 1) throw config_error("config: batch_size must be >= 1");
  if (train_steps < 0) throw config_error("config: train_steps must be >= 0");
  if (warmup_steps < 0) throw config_error("config: warmup_steps must be >= 0");
  if (lr_drop_epochs < 1) throw config_error("config: lr_drop_epochs must be >= 1");
  if (n_train < 1 || n_val < 1) throw config_error("config: split sizes must be >= 1");
  if (val_every_epochs < 1) throw config_error("config: val_every_epochs must be >= 1");
  if (eval_top_k < 1) throw config_error("config: eval_top_k must be >= 1");
  if (nms_iou < 0.0 || nms_iou > 1.0) throw config_error("config: nms_iou must be in [0,1]");
  if (match_iou < 0.0 || match_iou > 1.0) throw config_error("config: match_iou must be in [0,1]");
  if (gc_h <= 0.0) throw config_error("config: gc_h must be positive");
  if (bench_runs < 1 || bench_warmup < 0) throw config_error("config: bad bench settings");
}

namespace {

std::string derive(const std::string& explicit_path, const std::string& out_dir,
                   const char* filename) {
  if (!explicit_path.empty()) return explicit_path;
  return (std::filesystem::path(out_dir) / filename).string();
}

}  // namespace

std::string RunConfig::resolved_train_file() const { return derive(train_file, out_dir, "train.jsonl"); }
std::string RunConfig::resolved_val_file() const { return derive(val_file, out_dir, "val.jsonl"); }
std::string RunConfig::resolved_meta_file() const { return derive(meta_file, out_dir, "meta.json"); }
std::string RunConfig::resolved_checkpoint() const { return derive(checkpoint, out_dir, "model.ckpt"); }

}  // namespace groupdet
