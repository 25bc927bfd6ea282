#include "groupdet/train.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace groupdet {

namespace {

constexpr char kCheckpointMagic[8] = {'G', 'D', 'C', 'K', 'P', 'T', '1', '\n'};

void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::ifstream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& store, const std::string& arch) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot open " + path + " for writing");
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_u32(out, static_cast<std::uint32_t>(arch.size()));
  out.write(arch.data(), static_cast<std::streamsize>(arch.size()));
  write_u32(out, static_cast<std::uint32_t>(store.names().size()));
  for (const std::string& name : store.names()) {
    const Tensor& t = store.get(name);
    write_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(out, static_cast<std::uint32_t>(t.ndim()));
    for (int i = 0; i < t.ndim(); ++i) write_u32(out, static_cast<std::uint32_t>(t.dim(i)));
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * sizeof(double)));
  }
  if (!out) throw data_error("write failed for " + path);
}

void load_checkpoint(const std::string& path, ParamStore& store, const std::string& expected_arch) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open checkpoint " + path);
  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
    throw data_error(path + ": not a groupdet checkpoint");
  const std::uint32_t arch_len = read_u32(in);
  std::string arch(arch_len, '\0');
  in.read(arch.data(), arch_len);
  if (!in) throw data_error(path + ": truncated checkpoint");
  if (arch != expected_arch) {
    throw config_error("checkpoint architecture mismatch\n  checkpoint: " + arch +
                       "\n  config:     " + expected_arch);
  }
  const std::uint32_t count = read_u32(in);
  if (count != store.names().size()) throw data_error(path + ": parameter count mismatch");
  for (std::uint32_t p = 0; p < count; ++p) {
    const std::uint32_t name_len = read_u32(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const std::uint32_t ndim = read_u32(in);
    Shape shape(ndim);
    for (std::uint32_t i = 0; i < ndim; ++i) shape[i] = static_cast<int>(read_u32(in));
    if (!store.contains(name)) throw data_error(path + ": unknown parameter " + name);
    Tensor& t = store.get(name);
    if (t.shape() != shape)
      throw data_error(path + ": shape mismatch for " + name + " (" + shape_str(shape) + " vs " +
                       shape_str(t.shape()) + ")");
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.numel() * sizeof(double)));
    if (!in) throw data_error(path + ": truncated checkpoint");
  }
}

std::vector<GtPair> training_targets(const Scene& scene, const ModelConfig& config) {
  std::vector<GtPair> gts = scene_gt_pairs(scene, config.n_interaction_classes);
  if (static_cast<int>(gts.size()) > config.n_queries)
    gts.resize(static_cast<std::size_t>(config.n_queries));
  return gts;
}

Tensor scene_loss(const Model& model, const Tensor& features, const Tensor& pos,
                  const std::vector<GtPair>& gts, LossParts* parts) {
  ModelOutput out = model.forward(features, pos);
  Assignment assignment;
  const int n_gt = static_cast<int>(gts.size());
  if (n_gt > 0) {
    const std::vector<PredSlot> slots = model.prediction_slots(out);
    const int q = model.config().n_queries;
    std::vector<double> cost(static_cast<std::size_t>(n_gt) * q);
    for (int g = 0; g < n_gt; ++g) {
      for (int s = 0; s < q; ++s) {
        cost[static_cast<std::size_t>(g) * q + s] = match_cost(
            slots[static_cast<std::size_t>(s)], gts[static_cast<std::size_t>(g)],
            model.config().match_weights);
      }
    }
    assignment = hungarian_match(cost, n_gt, q);
  }
  return hoi_loss(out, gts, assignment, model.config(), parts);
}

std::vector<Prediction> predict_scene(const Model& model, const Scene& scene,
                                      const Tensor& features, const Tensor& pos, double nms_iou,
                                      int top_k) {
  NoGradGuard ng;
  ModelOutput out = model.forward(features, pos);
  const std::vector<PredSlot> slots = model.prediction_slots(out);
  const int n_obj = model.config().n_object_classes;
  const int n_int = model.config().n_interaction_classes;
  std::vector<Prediction> candidates;
  candidates.reserve(slots.size() * static_cast<std::size_t>(n_int));
  for (const PredSlot& s : slots) {
    int best_cls = 0;
    for (int c = 1; c < n_obj; ++c) {
      if (s.obj_probs[static_cast<std::size_t>(c)] > s.obj_probs[static_cast<std::size_t>(best_cls)])
        best_cls = c;
    }
    const double p_obj = s.obj_probs[static_cast<std::size_t>(best_cls)];
    for (int a = 0; a < n_int; ++a) {
      Prediction p;
      p.scene_seed = scene.seed;
      p.human = s.human;
      p.object = s.object;
      p.object_class = best_cls;
      p.interaction = a;
      p.score = s.int_sigmoid[static_cast<std::size_t>(a)] * p_obj;
      candidates.push_back(p);
    }
  }
  return pairwise_nms(candidates, nms_iou, top_k);
}

namespace {

struct Dataset {
  std::vector<Scene> scenes;
  std::vector<Rasterized> raster;  // cached; pos shared across scenes
};

Dataset load_dataset(const std::string& path, const SynthConfig& synth) {
  Dataset d;
  d.scenes = read_scenes(path, synth);
  if (d.scenes.empty()) throw data_error(path + ": dataset has no scenes");
  d.raster.reserve(d.scenes.size());
  Tensor shared_pos;
  for (const Scene& s : d.scenes) {
    Rasterized r = rasterize(s, synth);
    if (!shared_pos.defined()) shared_pos = r.pos;
    r.pos = shared_pos;
    d.raster.push_back(std::move(r));
  }
  return d;
}

double scheduled_lr(const RunConfig& cfg, int step, int epoch) {
  const int drops = epoch / cfg.lr_drop_epochs;
  double lr = cfg.lr * std::pow(0.1, static_cast<double>(drops));
  if (cfg.warmup_steps > 0 && step <= cfg.warmup_steps)
    lr *= static_cast<double>(step) / cfg.warmup_steps;
  return lr;
}

double evaluate_val_map(const Model& model, const Dataset& val, const RunConfig& cfg,
                        const std::vector<int>& rare) {
  std::vector<Prediction> preds;
  std::vector<GtTriplet> gts;
  for (std::size_t i = 0; i < val.scenes.size(); ++i) {
    const std::vector<Prediction> scene_preds =
        predict_scene(model, val.scenes[i], val.raster[i].features, val.raster[i].pos, cfg.nms_iou,
                      cfg.eval_top_k);
    preds.insert(preds.end(), scene_preds.begin(), scene_preds.end());
    const std::vector<GtTriplet> scene_gts = scene_gt_triplets(val.scenes[i]);
    gts.insert(gts.end(), scene_gts.begin(), scene_gts.end());
  }
  const EvalReport report = evaluate_predictions(preds, gts, cfg.model.n_interaction_classes, rare,
                                                 cfg.match_iou, cfg.eleven_point_ap);
  return report.map_full.value_or(0.0);
}

}  // namespace

TrainResult train_run(const RunConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  const Dataset train = load_dataset(cfg.resolved_train_file(), cfg.synth);
  const Dataset val = load_dataset(cfg.resolved_val_file(), cfg.synth);
  const SplitMeta meta = read_meta(cfg.resolved_meta_file());

  Model model(cfg.model, cfg.seed);

  TrainResult result;
  result.checkpoint_path = cfg.resolved_checkpoint();
  result.log_path = (std::filesystem::path(cfg.out_dir) / "train_log.jsonl").string();
  std::ofstream log(result.log_path, std::ios::binary);
  if (!log) throw data_error("cannot open " + result.log_path + " for writing");
  {
    nlohmann::json header;
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(cfg.hash()));
    header["config_hash"] = hash;
    header["config_text"] = cfg.canonical_text();
    log << header.dump() << "\n";
  }

  Rng shuffle_rng(cfg.seed * 0x100000001b3ULL + 0x2545F4914F6CDD1DULL);
  std::vector<int> order(train.scenes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  auto reshuffle = [&]() {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i) {
      const int j = shuffle_rng.uniform_int(0, i);
      std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
  };
  reshuffle();

  int epoch = 0;
  std::size_t cursor = 0;
  const double inv_batch = 1.0 / static_cast<double>(cfg.batch_size);

  for (int step = 1; step <= cfg.train_steps; ++step) {
    model.params().zero_grads();
    LossParts batch_parts;
    for (int b = 0; b < cfg.batch_size; ++b) {
      if (cursor >= order.size()) {
        cursor = 0;
        ++epoch;
        reshuffle();
        if (epoch % cfg.val_every_epochs == 0) {
          const double map_full = evaluate_val_map(model, val, cfg, meta.rare);
          result.val_maps.emplace_back(epoch, map_full);
          nlohmann::json j;
          j["epoch"] = epoch;
          j["step"] = step;
          j["val_map_full"] = map_full;
          log << j.dump() << "\n";
        }
      }
      const int scene_idx = order[cursor++];
      const Scene& scene = train.scenes[static_cast<std::size_t>(scene_idx)];
      const Rasterized& r = train.raster[static_cast<std::size_t>(scene_idx)];
      const std::vector<GtPair> gts = training_targets(scene, cfg.model);
      LossParts parts;
      Tensor loss = scene_loss(model, r.features, r.pos, gts, &parts);
      loss.backward(inv_batch);
      batch_parts.l1 += parts.l1 * inv_batch;
      batch_parts.giou += parts.giou * inv_batch;
      batch_parts.obj_ce += parts.obj_ce * inv_batch;
      batch_parts.int_cls += parts.int_cls * inv_batch;
      batch_parts.total += parts.total * inv_batch;
    }
    if (cfg.grad_clip > 0.0) model.params().clip_grad_norm(cfg.grad_clip);
    const double lr = scheduled_lr(cfg, step, epoch);
    model.params().adamw_step(lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay);

    result.steps.push_back(batch_parts);
    nlohmann::json j;
    j["step"] = step;
    j["epoch"] = epoch;
    j["lr"] = lr;
    j["total"] = batch_parts.total;
    j["l1"] = batch_parts.l1;
    j["giou"] = batch_parts.giou;
    j["obj_ce"] = batch_parts.obj_ce;
    j["int_cls"] = batch_parts.int_cls;
    log << j.dump() << "\n";
  }

  result.final_val_map = evaluate_val_map(model, val, cfg, meta.rare);
  result.val_maps.emplace_back(epoch, result.final_val_map);
  {
    nlohmann::json j;
    j["final"] = true;
    j["val_map_full"] = result.final_val_map;
    log << j.dump() << "\n";
  }
  save_checkpoint(result.checkpoint_path, model.params(), cfg.model.arch_string());
  return result;
}

SweepResult sweep_run(const RunConfig& cfg) {
  const std::string axis = cfg.sweep_axis;
  if (axis != "Kg" && axis != "Ks" && axis != "Lg" && axis != "Ls" && axis != "group_mode")
    throw config_error("sweep_axis must be one of Kg, Ks, Lg, Ls, group_mode");

  std::vector<std::string> values;
  {
    std::string token;
    for (char c : cfg.sweep_values + ",") {
      if (c == ',') {
        if (!token.empty()) values.push_back(token);
        token.clear();
      } else if (!std::isspace(static_cast<unsigned char>(c))) {
        token += c;
      }
    }
  }
  if (values.empty()) throw config_error("sweep_values is empty");

  std::filesystem::create_directories(cfg.out_dir);
  SweepResult result;
  result.axis = axis;
  result.csv_path = (std::filesystem::path(cfg.out_dir) / ("sweep_" + axis + ".csv")).string();
  std::ofstream csv(result.csv_path, std::ios::binary);
  if (!csv) throw data_error("cannot open " + result.csv_path + " for writing");
  csv << "axis,value,map_full,map_rare,map_nonrare\n";

  for (const std::string& value : values) {
    RunConfig run = cfg;
    run.out_dir = (std::filesystem::path(cfg.out_dir) / (axis + "_" + value)).string();
    run.train_file.clear();
    run.val_file.clear();
    run.meta_file.clear();
    run.checkpoint.clear();
    try {
      if (axis == "Kg") {
        run.model.k_geometric = std::stoi(value);
      } else if (axis == "Ks") {
        run.model.k_semantic = std::stoi(value);
      } else if (axis == "Lg") {
        run.model.geo_layers = std::stoi(value);
      } else if (axis == "Ls") {
        run.model.sem_layers = std::stoi(value);
      } else {
        if (value != "intra_class" && value != "mixed")
          throw config_error("group_mode sweep values must be intra_class or mixed");
        run.model.intra_class = value == "intra_class";
      }
    } catch (const std::invalid_argument&) {
      throw config_error("sweep value '" + value + "' is not valid for axis " + axis);
    }
    run.validate();
    make_splits(run.synth, run.n_train, run.n_val, static_cast<std::int64_t>(run.seed),
                run.out_dir);
    train_run(run);
    const EvalRunResult eval = eval_run(run, AblateMode::kNone);
    SweepRow row;
    row.value = value;
    row.map_full = eval.report.map_full.value_or(0.0);
    row.map_rare = eval.report.map_rare.value_or(0.0);
    row.map_nonrare = eval.report.map_nonrare.value_or(0.0);
    result.rows.push_back(row);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s,%s,%.6f,%.6f,%.6f\n", axis.c_str(), value.c_str(),
                  row.map_full, row.map_rare, row.map_nonrare);
    csv << buf;
  }
  return result;
}

EvalRunResult eval_run(const RunConfig& cfg, AblateMode ablate) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  ModelConfig model_cfg = cfg.model;
  // ablation bypasses a module at inference; architecture keys are unchanged
  if (ablate == AblateMode::kNoGeo) model_cfg.use_geo = false;
  if (ablate == AblateMode::kNoSem) model_cfg.use_sem = false;

  const Dataset val = load_dataset(cfg.resolved_val_file(), cfg.synth);
  const SplitMeta meta = read_meta(cfg.resolved_meta_file());

  Model model(model_cfg, cfg.seed);
  load_checkpoint(cfg.resolved_checkpoint(), model.params(), cfg.model.arch_string());

  EvalRunResult result;
  std::vector<GtTriplet> gts;
  for (std::size_t i = 0; i < val.scenes.size(); ++i) {
    const std::vector<Prediction> scene_preds =
        predict_scene(model, val.scenes[i], val.raster[i].features, val.raster[i].pos, cfg.nms_iou,
                      cfg.eval_top_k);
    result.predictions.insert(result.predictions.end(), scene_preds.begin(), scene_preds.end());
    const std::vector<GtTriplet> scene_gts = scene_gt_triplets(val.scenes[i]);
    gts.insert(gts.end(), scene_gts.begin(), scene_gts.end());
  }
  result.report = evaluate_predictions(result.predictions, gts, cfg.model.n_interaction_classes,
                                       meta.rare, cfg.match_iou, cfg.eleven_point_ap);
  result.csv_path = (std::filesystem::path(cfg.out_dir) / "eval_report.csv").string();
  result.predictions_path = (std::filesystem::path(cfg.out_dir) / "predictions.jsonl").string();
  write_eval_csv(result.csv_path, result.report);
  write_predictions(result.predictions_path, result.predictions);
  return result;
}

}  // namespace groupdet
