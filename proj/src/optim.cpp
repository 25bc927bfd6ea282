#include "groupdet/optim.hpp"

#include <cmath>

namespace groupdet {

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  if (params_.count(name)) throw dim_error("ParamStore: duplicate parameter " + name);
  t.set_requires_grad(true);
  names_.push_back(name);
  auto [it, ok] = params_.emplace(name, std::move(t));
  (void)ok;
  m_.emplace(name, std::vector<double>(it->second.numel(), 0.0));
  v_.emplace(name, std::vector<double>(it->second.numel(), 0.0));
  return it->second;
}

Tensor& ParamStore::add_affine_weight(const std::string& name, int fan_in, int fan_out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t = Tensor::zeros({fan_in, fan_out});
  for (double& w : t.vec()) w = rng.uniform(-bound, bound);
  return add(name, std::move(t));
}

Tensor& ParamStore::add_zeros(const std::string& name, Shape shape) {
  return add(name, Tensor::zeros(std::move(shape)));
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw dim_error("ParamStore: unknown parameter " + name);
  return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw dim_error("ParamStore: unknown parameter " + name);
  return it->second;
}

std::size_t ParamStore::total_parameters() const {
  std::size_t n = 0;
  for (const auto& name : names_) n += params_.at(name).numel();
  return n;
}

void ParamStore::zero_grads() {
  for (const auto& name : names_) params_.at(name).zero_grad();
}

double ParamStore::clip_grad_norm(double max_norm) {
  double sq = 0.0;
  for (const auto& name : names_) {
    for (double g : params_.at(name).grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (const auto& name : names_) {
      for (double& g : params_.at(name).grad()) g *= scale;
    }
  }
  return norm;
}

void ParamStore::adamw_step(double lr, double beta1, double beta2, double eps,
                            double weight_decay) {
  step_ += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
  for (const auto& name : names_) {
    Tensor& p = params_.at(name);
    const std::vector<double>& g = p.grad();
    if (g.size() != p.numel()) throw dim_error("adamw_step: grad shape mismatch for " + name);
    std::vector<double>& m = m_.at(name);
    std::vector<double>& v = v_.at(name);
    double* w = p.data();
    for (std::size_t i = 0; i < p.numel(); ++i) {
      w[i] *= 1.0 - lr * weight_decay;
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    check_finite(w, p.numel(), "adamw_step");
  }
}

}  // namespace groupdet
