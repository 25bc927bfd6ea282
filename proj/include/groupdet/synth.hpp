#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "groupdet/matching.hpp"
#include "groupdet/tensor.hpp"

namespace groupdet {

struct SceneObject {
  Box box;
  int cls = 0;
};

struct Triplet {
  int human = 0;
  int object = 0;
  int interaction = 0;
};

// Ground-truth scene; boxes are quantized to 4 decimals at generation time so
// the in-memory scene and its file form are identical.
struct Scene {
  std::int64_t seed = 0;
  std::vector<Box> humans;
  std::vector<SceneObject> objects;
  std::vector<Triplet> triplets;
};

// Interaction rule ids. Every rule is a pure geometric predicate over the
// (quantized) scene, so emitted triplets can be re-verified after the fact.
// kBalance is the rare class: its motif is placed with rare_motif_prob.
enum InteractionRule {
  kHold = 0,     // object center inside the human box, object smaller
  kNear = 1,     // centers closer than a threshold
  kWatch = 2,    // nearest object, at mid distance
  kTeam = 3,     // >= 2 humans share one close object
  kBeside = 4,   // side by side horizontally
  kBalance = 5,  // object directly above the human
  kNumRules = 6
};

bool rule_predicate(int rule, const Scene& scene, int human_idx, int object_idx);

struct SynthConfig {
  int grid_h = 16;
  int grid_w = 16;
  int d_entity = 32;
  int humans_min = 1;
  int humans_max = 6;
  int objects_min = 1;
  int objects_max = 6;
  int n_object_classes = 5;
  int n_interaction_classes = 6;
  double noise_sigma = 0.02;
  double hold_motif_prob = 0.45;
  double team_motif_prob = 0.30;
  double rare_motif_prob = 0.004;  // rare-class frequency knob
  bool rule_enabled[kNumRules] = {true, true, true, true, true, true};
  int max_pairs = 12;  // distinct (human, object) pairs kept per scene

  void validate() const;
};

// Deterministic in (seed, config).
Scene generate_scene(std::int64_t seed, const SynthConfig& config);

// Gaussian splats with class-coded channel signatures plus i.i.d. noise;
// positional embeddings depend only on the grid shape.
struct Rasterized {
  Tensor features;  // [H*W x d]
  Tensor pos;       // [H*W x d]
};
Rasterized rasterize(const Scene& scene, const SynthConfig& config);

// 2-D sinusoidal grid embeddings, [H*W x d].
Tensor sinusoidal_grid_embeddings(int grid_h, int grid_w, int d);

// Triplets merged per (human, object) pair in first-appearance order.
std::vector<GtPair> scene_gt_pairs(const Scene& scene, int n_interaction_classes);

struct SplitMeta {
  std::vector<int> train_counts;  // per interaction class, triplet counts
  std::vector<int> rare;          // classes with fewer than 10 train triplets
  int n_train = 0;
  int n_val = 0;
};

struct SplitPaths {
  std::string train_file;
  std::string val_file;
  std::string meta_file;
};

// Writes train/val JSONL over disjoint seed ranges plus a meta JSON with
// per-class train counts and the derived rare set. Byte-deterministic.
SplitPaths make_splits(const SynthConfig& config, int n_train, int n_val, std::int64_t base_seed,
                       const std::string& out_dir, SplitMeta* meta_out = nullptr);

void write_scenes(const std::string& path, const std::vector<Scene>& scenes,
                  const SynthConfig& config);
std::vector<Scene> read_scenes(const std::string& path, const SynthConfig& config);

void write_meta(const std::string& path, const SplitMeta& meta);
SplitMeta read_meta(const std::string& path);

}  // namespace groupdet
