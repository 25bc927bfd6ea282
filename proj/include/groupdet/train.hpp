#pragma once

#include <string>
#include <vector>

#include "groupdet/config.hpp"
#include "groupdet/eval.hpp"
#include "groupdet/losses.hpp"
#include "groupdet/model.hpp"

namespace groupdet {

// Versioned binary container of named parameter arrays with shape headers;
// refuses to load when the recorded architecture keys differ.
void save_checkpoint(const std::string& path, const ParamStore& store, const std::string& arch);
void load_checkpoint(const std::string& path, ParamStore& store, const std::string& expected_arch);

// Ground truths for matching/loss, capped at the query count.
std::vector<GtPair> training_targets(const Scene& scene, const ModelConfig& config);

// Forward + Hungarian matching + loss for one scene (graph attached).
Tensor scene_loss(const Model& model, const Tensor& features, const Tensor& pos,
                  const std::vector<GtPair>& gts, LossParts* parts);

// All (query, interaction) candidates of one scene, scored
// sigmoid(interaction logit) * best real-class probability, then NMS.
std::vector<Prediction> predict_scene(const Model& model, const Scene& scene,
                                      const Tensor& features, const Tensor& pos, double nms_iou,
                                      int top_k);

struct TrainResult {
  std::vector<LossParts> steps;                  // per-step batch-mean losses
  std::vector<std::pair<int, double>> val_maps;  // (epoch, val mAP full); absent mAP -> 0
  double final_val_map = 0.0;
  std::string checkpoint_path;
  std::string log_path;
};

// Full run: loads the generated splits, trains with AdamW and the step-decay
// schedule, evaluates on val, writes the checkpoint and a JSONL log whose
// first line embeds the config hash and canonical text.
TrainResult train_run(const RunConfig& cfg);

struct EvalRunResult {
  EvalReport report;
  std::vector<Prediction> predictions;
  std::string csv_path;
  std::string predictions_path;
};

enum class AblateMode { kNone, kNoGeo, kNoSem };

// Loads the checkpoint (arch-checked) and runs the full protocol over val.
EvalRunResult eval_run(const RunConfig& cfg, AblateMode ablate);

struct SweepRow {
  std::string value;
  double map_full = 0.0;
  double map_rare = 0.0;
  double map_nonrare = 0.0;
};

struct SweepResult {
  std::string axis;
  std::vector<SweepRow> rows;
  std::string csv_path;
};

// Trains and evaluates once per axis value (axis in {Kg, Ks, Lg, Ls,
// group_mode}), each run fully re-seeded, and writes one CSV row per value.
SweepResult sweep_run(const RunConfig& cfg);

}  // namespace groupdet
