#pragma once

#include <cstdint>
#include <string>

#include "groupdet/model.hpp"
#include "groupdet/synth.hpp"

namespace groupdet {

// Flat key=value run configuration ('#' comments, one pair per line). Every
// key has a default; unknown keys are rejected. The canonical text (fixed key
// order) is echoed into run logs and hashed for checkpoint/run identity.
struct RunConfig {
  SynthConfig synth;
  ModelConfig model;

  // optimizer / schedule
  double lr = 2e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 0.1;  // global L2 norm; <= 0 disables
  int batch_size = 8;
  int train_steps = 1500;
  int warmup_steps = 100;    // linear lr ramp from 0 over the first steps
  int lr_drop_epochs = 16;  // lr multiplied by 0.1 every this many epochs
  std::uint64_t seed = 0;
  int n_train = 500;
  int n_val = 120;
  int val_every_epochs = 1;

  // testing protocol
  int eval_top_k = 100;
  double nms_iou = 0.7;
  double match_iou = 0.5;
  bool eleven_point_ap = false;

  // paths (empty file paths derive from out_dir)
  std::string out_dir = "out";
  std::string train_file;
  std::string val_file;
  std::string meta_file;
  std::string checkpoint;

  // sweep
  std::string sweep_axis = "Kg";
  std::string sweep_values = "2,3,4,5";

  // gradcheck
  double gc_h = 1e-4;
  double gc_tol = 1e-4;
  std::uint64_t gc_seed = 0;

  // bench
  int bench_runs = 100;
  int bench_warmup = 10;

  static RunConfig from_text(const std::string& text);
  static RunConfig from_file(const std::string& path);

  std::string canonical_text() const;
  std::uint64_t hash() const;  // FNV-1a 64 over the canonical text
  void validate() const;

  std::string resolved_train_file() const;
  std::string resolved_val_file() const;
  std::string resolved_meta_file() const;
  std::string resolved_checkpoint() const;
};

}  // namespace groupdet
