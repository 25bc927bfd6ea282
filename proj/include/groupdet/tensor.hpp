#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "groupdet/errors.hpp"

namespace groupdet {

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct Node;

// Dense row-major 64-bit float tensor with a reverse-mode tape. Copies are
// shallow handles: data, grad, and the producing node are shared. The graph
// is rebuilt from scratch every forward pass; leaves (parameters, inputs)
// have no node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  // Aliases an existing buffer without copying.
  static Tensor wrap(Shape shape, std::shared_ptr<std::vector<double>> values,
                     bool requires_grad = false);

  bool defined() const { return static_cast<bool>(data_); }
  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::size_t numel() const { return data_ ? data_->size() : 0; }

  double* data() { return data_->data(); }
  const double* data() const { return data_->data(); }
  std::vector<double>& vec() { return *data_; }
  const std::vector<double>& vec() const { return *data_; }
  const std::shared_ptr<std::vector<double>>& data_ptr() const { return data_; }

  double value() const;                 // scalar tensors only
  double at(int i) const;               // 1-D
  double at(int r, int c) const;        // 2-D
  double& at(int i);
  double& at(int r, int c);

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool rg);
  bool has_grad() const { return static_cast<bool>(grad_); }
  std::vector<double>& grad();          // allocates zeros on first use
  const std::vector<double>& grad() const;
  const std::shared_ptr<std::vector<double>>& grad_ptr() const { return grad_; }
  void zero_grad();

  const std::shared_ptr<Node>& node() const { return node_; }
  void set_node(std::shared_ptr<Node> node) { node_ = std::move(node); }

  // Reverse pass from a scalar tensor; seeds d(out)/d(out) = seed and
  // accumulates into every reachable requires_grad tensor. Grads are added,
  // not overwritten, so per-sample backward calls compose into a batch.
  void backward(double seed = 1.0);

  // Same values, no history.
  Tensor detach() const;

 private:
  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
  mutable std::shared_ptr<std::vector<double>> grad_;
  bool requires_grad_ = false;
  std::shared_ptr<Node> node_;
};

struct Node {
  std::vector<Tensor> parents;
  // Reads out_grad (and out_data where needed), accumulates into parents.
  std::function<void(Node&)> backward;
  Shape out_shape;
  std::shared_ptr<std::vector<double>> out_data;
  std::shared_ptr<std::vector<double>> out_grad;
  std::string op_name;
};

// Graph recording can be suspended for pure inference.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Throws numeric_error naming `op` if any value is NaN/Inf.
void check_finite(const double* values, std::size_t n, const char* op);

}  // namespace groupdet
