#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "groupdet/rng.hpp"
#include "groupdet/tensor.hpp"

namespace groupdet {

// Named parameter registry with AdamW moment buffers. Iteration follows
// registration order so updates and checkpoints are deterministic.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t);
  // uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights
  Tensor& add_affine_weight(const std::string& name, int fan_in, int fan_out, Rng& rng);
  Tensor& add_zeros(const std::string& name, Shape shape);

  bool contains(const std::string& name) const { return params_.count(name) > 0; }
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  const std::vector<std::string>& names() const { return names_; }
  std::size_t total_parameters() const;

  void zero_grads();

  long step_count() const { return step_; }

  // Decoupled weight decay, then bias-corrected adaptive-moment update.
  void adamw_step(double lr, double beta1, double beta2, double eps, double weight_decay);

  // Global L2 clip over the concatenation of all grads; no-op if max_norm <= 0.
  double clip_grad_norm(double max_norm);

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, Tensor> params_;
  std::unordered_map<std::string, std::vector<double>> m_;
  std::unordered_map<std::string, std::vector<double>> v_;
  long step_ = 0;
};

struct AdamWSettings {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

}  // namespace groupdet
