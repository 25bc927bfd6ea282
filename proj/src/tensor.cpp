#include "groupdet/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace groupdet {

namespace {
thread_local bool g_grad_enabled = true;

// Graph buffers are allocated and freed every step; keeping large blocks on
// the heap instead of per-allocation mmap avoids page-fault churn in the
// training loop.
[[maybe_unused]] const bool g_malloc_tuned = [] {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
  mallopt(M_TRIM_THRESHOLD, 256 * 1024 * 1024);
#endif
  return true;
}();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw dim_error("tensor extent must be positive, got " + std::to_string(d));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

void check_finite(const double* values, std::size_t n, const char* op) {
  // NaN/Inf poison a plain sum, so one vectorizable pass screens the buffer;
  // the per-element scan only runs to locate the offender.
  double probe = 0.0;
  for (std::size_t i = 0; i < n; ++i) probe += values[i];
  if (std::isfinite(probe)) return;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(values[i])) {
      throw numeric_error(std::string(op) + " produced a non-finite value at flat index " +
                          std::to_string(i));
    }
  }
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  Tensor t;
  const std::size_t n = shape_numel(shape);
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<std::vector<double>>(n, 0.0);
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : *t.data_) v = value;
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  if (values.size() != n) {
    throw dim_error("data length " + std::to_string(values.size()) + " does not match shape " +
                    shape_str(shape));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<std::vector<double>>(std::move(values));
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

Tensor Tensor::wrap(Shape shape, std::shared_ptr<std::vector<double>> values, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  if (!values || values->size() != n) throw dim_error("wrap: buffer does not match shape");
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(values);
  t.set_requires_grad(requires_grad);
  return t;
}

double Tensor::value() const {
  if (numel() != 1) throw dim_error("value() requires a scalar tensor, shape is " + shape_str(shape_));
  return (*data_)[0];
}

double Tensor::at(int i) const { return (*data_)[static_cast<std::size_t>(i)]; }

double Tensor::at(int r, int c) const {
  return (*data_)[static_cast<std::size_t>(r) * static_cast<std::size_t>(shape_[1]) +
                  static_cast<std::size_t>(c)];
}

double& Tensor::at(int i) { return (*data_)[static_cast<std::size_t>(i)]; }

double& Tensor::at(int r, int c) {
  return (*data_)[static_cast<std::size_t>(r) * static_cast<std::size_t>(shape_[1]) +
                  static_cast<std::size_t>(c)];
}

void Tensor::set_requires_grad(bool rg) {
  requires_grad_ = rg;
  if (rg && !grad_ && data_) grad_ = std::make_shared<std::vector<double>>(data_->size(), 0.0);
}

std::vector<double>& Tensor::grad() {
  if (!grad_) grad_ = std::make_shared<std::vector<double>>(data_->size(), 0.0);
  return *grad_;
}

const std::vector<double>& Tensor::grad() const {
  if (!grad_) grad_ = std::make_shared<std::vector<double>>(data_->size(), 0.0);
  return *grad_;
}

void Tensor::zero_grad() {
  if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0);
}

Tensor Tensor::detach() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = data_;
  t.requires_grad_ = false;
  return t;
}

void Tensor::backward(double seed) {
  if (numel() != 1) throw dim_error("backward() requires a scalar root, shape is " + shape_str(shape_));
  grad()[0] += seed;
  if (!node_) return;

  // Iterative DFS post-order over producing nodes, then run in reverse.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  struct Frame {
    Node* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({node_.get(), 0});
  visited.insert(node_.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      Node* child = f.node->parents[f.next_parent].node().get();
      ++f.next_parent;
      if (child != nullptr && !visited.count(child)) {
        visited.insert(child);
        stack.push_back({child, 0});
      }
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward) n->backward(*n);
  }
}

}  // namespace groupdet
