#include "groupdet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace groupdet {

namespace {

bool want_node(const std::vector<Tensor>& parents) {
  if (!grad_enabled()) return false;
  for (const Tensor& p : parents) {
    if (p.requires_grad()) return true;
  }
  return false;
}

Tensor finish(Shape shape, std::vector<double> values, const char* op, std::vector<Tensor> parents,
              std::function<void(Node&)> backward) {
  check_finite(values.data(), values.size(), op);
  const bool track = want_node(parents);
  Tensor out = Tensor::from(std::move(shape), std::move(values), track);
  if (track) {
    auto node = std::make_shared<Node>();
    node->parents = std::move(parents);
    node->backward = std::move(backward);
    node->out_shape = out.shape();
    node->out_data = out.data_ptr();
    node->out_grad = out.grad_ptr();
    node->op_name = op;
    out.set_node(std::move(node));
  }
  return out;
}

void require_2d(const Tensor& x, const char* op) {
  if (x.ndim() != 2) throw dim_error(std::string(op) + ": expected 2-D tensor, got " + shape_str(x.shape()));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw dim_error(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                    shape_str(b.shape()));
  }
}

// c += a.b, c += g.b^T, c += a^T.g kernels on raw row-major buffers.
void mm_nn(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    double* ci = c + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void mm_nt(const double* g, const double* b, double* c, int m, int n, int k) {
  for (int i = 0; i < m; ++i) {
    const double* gi = g + static_cast<std::size_t>(i) * n;
    double* ci = c + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double* bp = b + static_cast<std::size_t>(p) * n;
      double s = 0.0;
      for (int j = 0; j < n; ++j) s += gi[j] * bp[j];
      ci[p] += s;
    }
  }
}

void mm_tn(const double* a, const double* g, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<std::size_t>(i) * k;
    const double* gi = g + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double aip = ai[p];
      double* cp = c + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) cp[j] += aip * gi[j];
    }
  }
}

double stable_softplus(double x) {
  // log(1 + e^x) without overflow
  if (x > 30.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw dim_error("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " . " +
                    shape_str(b.shape()));
  }
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  mm_nn(a.data(), b.data(), out.data(), m, k, n);
  return finish({m, n}, std::move(out), "matmul", {a, b}, [m, k, n](Node& node) {
    Tensor& pa = node.parents[0];
    Tensor& pb = node.parents[1];
    const double* g = node.out_grad->data();
    if (pa.requires_grad()) mm_nt(g, pb.data(), pa.grad().data(), m, n, k);
    if (pb.requires_grad()) mm_tn(pa.data(), g, pb.grad().data(), m, k, n);
  });
}

Tensor transpose(const Tensor& x) {
  require_2d(x, "transpose");
  const int m = x.dim(0), n = x.dim(1);
  std::vector<double> out(x.numel());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<std::size_t>(j) * m + i] = x.at(i, j);
  return finish({n, m}, std::move(out), "transpose", {x}, [m, n](Node& node) {
    Tensor& p = node.parents[0];
    if (!p.requires_grad()) return;
    const double* g = node.out_grad->data();
    double* pg = p.grad().data();
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < m; ++i)
        pg[static_cast<std::size_t>(i) * n + j] += g[static_cast<std::size_t>(j) * m + i];
  });
}

namespace {

template <typename Fwd, typename Bwd>
Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* op, Fwd fwd, Bwd bwd) {
  require_same_shape(a, b, op);
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(a.data()[i], b.data()[i]);
  return finish(a.shape(), std::move(out), op, {a, b}, [n, bwd](Node& node) {
    Tensor& pa = node.parents[0];
    Tensor& pb = node.parents[1];
    const double* g = node.out_grad->data();
    double* ga = pa.requires_grad() ? pa.grad().data() : nullptr;
    double* gb = pb.requires_grad() ? pb.grad().data() : nullptr;
    const double* av = pa.data();
    const double* bv = pb.data();
    for (std::size_t i = 0; i < n; ++i) {
      double da, db;
      bwd(av[i], bv[i], da, db);
      if (ga) ga[i] += g[i] * da;
      if (gb) gb[i] += g[i] * db;
    }
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double& da, double& db) { da = 1.0; db = 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double& da, double& db) { da = 1.0; db = -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double x, double y, double& da, double& db) { da = y; db = x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double x, double y, double& da, double& db) {
        da = 1.0 / y;
        db = -x / (y * y);
      });
}

Tensor emin(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "emin", [](double x, double y) { return x <= y ? x : y; },
      [](double x, double y, double& da, double& db) {
        da = x <= y ? 1.0 : 0.0;
        db = x <= y ? 0.0 : 1.0;
      });
}

Tensor emax(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "emax", [](double x, double y) { return x >= y ? x : y; },
      [](double x, double y, double& da, double& db) {
        da = x >= y ? 1.0 : 0.0;
        db = x >= y ? 0.0 : 1.0;
      });
}

namespace {

template <typename Fwd, typename Deriv>
Tensor unary_elementwise(const Tensor& x, const char* op, Fwd fwd, Deriv deriv) {
  const std::size_t n = x.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(x.data()[i]);
  return finish(x.shape(), std::move(out), op, {x}, [n, deriv](Node& node) {
    Tensor& p = node.parents[0];
    if (!p.requires_grad()) return;
    const double* g = node.out_grad->data();
    const double* xv = p.data();
    const double* yv = node.out_data->data();
    double* pg = p.grad().data();
    for (std::size_t i = 0; i < n; ++i) pg[i] += g[i] * deriv(xv[i], yv[i]);
  });
}

}  // namespace

Tensor affine_scalar(const Tensor& x, double alpha, double beta) {
  return unary_elementwise(
      x, "affine_scalar", [alpha, beta](double v) { return alpha * v + beta; },
      [alpha](double, double) { return alpha; });
}

Tensor relu(const Tensor& x) {
  return unary_elementwise(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_elementwise(
      x, "sigmoid",
      [](double v) { return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor abs_t(const Tensor& x) {
  return unary_elementwise(
      x, "abs", [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (lo > hi) throw dim_error("clamp: lo > hi");
  return unary_elementwise(
      x, "clamp", [lo, hi](double v) { return std::min(std::max(v, lo), hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  require_2d(x, "add_rowvec");
  if (v.ndim() != 1 || v.dim(0) != x.dim(1)) {
    throw dim_error("add_rowvec: vector " + shape_str(v.shape()) + " does not match row width of " +
                    shape_str(x.shape()));
  }
  const int n = x.dim(0), d = x.dim(1);
  std::vector<double> out(x.numel());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      out[static_cast<std::size_t>(i) * d + j] = x.at(i, j) + v.at(j);
  return finish({n, d}, std::move(out), "add_rowvec", {x, v}, [n, d](Node& node) {
    Tensor& px = node.parents[0];
    Tensor& pv = node.parents[1];
    const double* g = node.out_grad->data();
    if (px.requires_grad()) {
      double* gx = px.grad().data();
      for (std::size_t i = 0; i < static_cast<std::size_t>(n) * d; ++i) gx[i] += g[i];
    }
    if (pv.requires_grad()) {
      double* gv = pv.grad().data();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) gv[j] += g[static_cast<std::size_t>(i) * d + j];
    }
  });
}

Tensor sub_rowvec(const Tensor& x, const Tensor& v) {
  require_2d(x, "sub_rowvec");
  if (v.ndim() != 1 || v.dim(0) != x.dim(1)) {
    throw dim_error("sub_rowvec: vector " + shape_str(v.shape()) + " does not match row width of " +
                    shape_str(x.shape()));
  }
  const int n = x.dim(0), d = x.dim(1);
  std::vector<double> out(x.numel());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      out[static_cast<std::size_t>(i) * d + j] = x.at(i, j) - v.at(j);
  return finish({n, d}, std::move(out), "sub_rowvec", {x, v}, [n, d](Node& node) {
    Tensor& px = node.parents[0];
    Tensor& pv = node.parents[1];
    const double* g = node.out_grad->data();
    if (px.requires_grad()) {
      double* gx = px.grad().data();
      for (std::size_t i = 0; i < static_cast<std::size_t>(n) * d; ++i) gx[i] += g[i];
    }
    if (pv.requires_grad()) {
      double* gv = pv.grad().data();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) gv[j] -= g[static_cast<std::size_t>(i) * d + j];
    }
  });
}

Tensor repeat_row(const Tensor& v, int k) {
  if (v.ndim() != 1) throw dim_error("repeat_row: expected 1-D tensor");
  if (k <= 0) throw dim_error("repeat_row: k must be positive");
  const int d = v.dim(0);
  std::vector<double> out(static_cast<std::size_t>(k) * d);
  for (int i = 0; i < k; ++i)
    std::memcpy(out.data() + static_cast<std::size_t>(i) * d, v.data(), sizeof(double) * d);
  return finish({k, d}, std::move(out), "repeat_row", {v}, [k, d](Node& node) {
    Tensor& p = node.parents[0];
    if (!p.requires_grad()) return;
    const double* g = node.out_grad->data();
    double* pg = p.grad().data();
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < d; ++j) pg[j] += g[static_cast<std::size_t>(i) * d + j];
  });
}

namespace {

// softmax over contiguous or strided lanes; n_lanes lanes of length `len`
// with element stride `stride` and lane starts given by lane_base.
void softmax_lanes(const double* x, double* y, int n_lanes, int len, int stride,
                   const std::vector<std::size_t>& lane_base) {
  for (int l = 0; l < n_lanes; ++l) {
    const std::size_t base = lane_base[static_cast<std::size_t>(l)];
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < len; ++i) mx = std::max(mx, x[base + static_cast<std::size_t>(i) * stride]);
    double sum = 0.0;
    for (int i = 0; i < len; ++i) {
      const double e = std::exp(x[base + static_cast<std::size_t>(i) * stride] - mx);
      y[base + static_cast<std::size_t>(i) * stride] = e;
      sum += e;
    }
    const double inv = 1.0 / sum;
    for (int i = 0; i < len; ++i) y[base + static_cast<std::size_t>(i) * stride] *= inv;
  }
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  int n_lanes, len, stride;
  std::vector<std::size_t> lane_base;
  if (x.ndim() == 1) {
    if (axis != 0) throw dim_error("softmax: axis out of range for 1-D tensor");
    n_lanes = 1;
    len = x.dim(0);
    stride = 1;
    lane_base = {0};
  } else if (x.ndim() == 2) {
    const int r = x.dim(0), c = x.dim(1);
    if (axis == 1) {
      n_lanes = r;
      len = c;
      stride = 1;
      for (int i = 0; i < r; ++i) lane_base.push_back(static_cast<std::size_t>(i) * c);
    } else if (axis == 0) {
      n_lanes = c;
      len = r;
      stride = c;
      for (int j = 0; j < c; ++j) lane_base.push_back(static_cast<std::size_t>(j));
    } else {
      throw dim_error("softmax: axis out of range for 2-D tensor");
    }
  } else {
    throw dim_error("softmax: expected 1-D or 2-D tensor");
  }
  if (len == 0) throw dim_error("softmax: empty axis");

  std::vector<double> out(x.numel());
  softmax_lanes(x.data(), out.data(), n_lanes, len, stride, lane_base);
  return finish(x.shape(), std::move(out), "softmax",
                {x}, [n_lanes, len, stride, lane_base](Node& node) {
                  Tensor& p = node.parents[0];
                  if (!p.requires_grad()) return;
                  const double* g = node.out_grad->data();
                  const double* s = node.out_data->data();
                  double* pg = p.grad().data();
                  for (int l = 0; l < n_lanes; ++l) {
                    const std::size_t base = lane_base[static_cast<std::size_t>(l)];
                    double dot = 0.0;
                    for (int i = 0; i < len; ++i) {
                      const std::size_t idx = base + static_cast<std::size_t>(i) * stride;
                      dot += g[idx] * s[idx];
                    }
                    for (int i = 0; i < len; ++i) {
                      const std::size_t idx = base + static_cast<std::size_t>(i) * stride;
                      pg[idx] += s[idx] * (g[idx] - dot);
                    }
                  }
                });
}

Tensor log_softmax_rows(const Tensor& x) {
  require_2d(x, "log_softmax_rows");
  const int n = x.dim(0), c = x.dim(1);
  if (c == 0) throw dim_error("log_softmax_rows: empty rows");
  std::vector<double> out(x.numel());
  for (int i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < c; ++j) mx = std::max(mx, x.at(i, j));
    double sum = 0.0;
    for (int j = 0; j < c; ++j) sum += std::exp(x.at(i, j) - mx);
    const double lse = mx + std::log(sum);
    for (int j = 0; j < c; ++j) out[static_cast<std::size_t>(i) * c + j] = x.at(i, j) - lse;
  }
  return finish({n, c}, std::move(out), "log_softmax_rows", {x}, [n, c](Node& node) {
    Tensor& p = node.parents[0];
    if (!p.requires_grad()) return;
    const double* g = node.out_grad->data();
    const double* y = node.out_data->data();
    double* pg = p.grad().data();
    for (int i = 0; i < n; ++i) {
      double gsum = 0.0;
      for (int j = 0; j < c; ++j) gsum += g[static_cast<std::size_t>(i) * c + j];
      for (int j = 0; j < c; ++j) {
        const std::size_t idx = static_cast<std::size_t>(i) * c + j;
        pg[idx] += g[idx] - std::exp(y[idx]) * gsum;
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  Shape shape = x.shape();
  int n, d;
  if (x.ndim() == 1) {
    n = 1;
    d = x.dim(0);
  } else if (x.ndim() == 2) {
    n = x.dim(0);
    d = x.dim(1);
  } else {
    throw dim_error("layer_norm: expected 1-D or 2-D tensor");
  }
  if (gain.ndim() != 1 || gain.dim(0) != d || bias.ndim() != 1 || bias.dim(0) != d) {
    throw dim_error("layer_norm: gain/bias must be [last-axis] vectors");
  }

  std::vector<double> out(x.numel());
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n));
  const double* xd = x.data();
  for (int i = 0; i < n; ++i) {
    const double* row = xd + static_cast<std::size_t>(i) * d;
    double mean = 0.0;
    for (int j = 0; j < d; ++j) mean += row[j];
    mean /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      const double c = row[j] - mean;
      var += c * c;
    }
    var /= d;
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[static_cast<std::size_t>(i)] = inv;
    for (int j = 0; j < d; ++j) {
      const std::size_t idx = static_cast<std::size_t>(i) * d + j;
      const double xh = (row[j] - mean) * inv;
      (*xhat)[idx] = xh;
      out[idx] = xh * gain.at(j) + bias.at(j);
    }
  }
  return finish(std::move(shape), std::move(out), "layer_norm", {x, gain, bias},
                [n, d, xhat, inv_std](Node& node) {
                  Tensor& px = node.parents[0];
                  Tensor& pgain = node.parents[1];
                  Tensor& pbias = node.parents[2];
                  const double* g = node.out_grad->data();
                  const double* gainv = pgain.data();
                  for (int i = 0; i < n; ++i) {
                    const std::size_t row = static_cast<std::size_t>(i) * d;
                    if (pgain.requires_grad() || pbias.requires_grad()) {
                      double* gg = pgain.requires_grad() ? pgain.grad().data() : nullptr;
                      double* gb = pbias.requires_grad() ? pbias.grad().data() : nullptr;
                      for (int j = 0; j < d; ++j) {
                        if (gg) gg[j] += g[row + j] * (*xhat)[row + j];
                        if (gb) gb[j] += g[row + j];
                      }
                    }
                    if (px.requires_grad()) {
                      double m1 = 0.0, m2 = 0.0;
                      for (int j = 0; j < d; ++j) {
                        const double gh = g[row + j] * gainv[j];
                        m1 += gh;
                        m2 += gh * (*xhat)[row + j];
                      }
                      m1 /= d;
                      m2 /= d;
                      const double inv = (*inv_std)[static_cast<std::size_t>(i)];
                      double* gx = px.grad().data();
                      for (int j = 0; j < d; ++j) {
                        const double gh = g[row + j] * gainv[j];
                        gx[row + j] += inv * (gh - m1 - (*xhat)[row + j] * m2);
                      }
                    }
                  }
                });
}

Tensor norm_cols(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  require_2d(x, "norm_cols");
  const int k = x.dim(0), d = x.dim(1);
  if (gain.ndim() != 1 || gain.dim(0) != d || bias.ndim() != 1 || bias.dim(0) != d) {
    throw dim_error("norm_cols: gain/bias must be [columns] vectors");
  }
  std::vector<double> out(x.numel());
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) {
    double mean = 0.0;
    for (int r = 0; r < k; ++r) mean += x.at(r, j);
    mean /= k;
    double var = 0.0;
    for (int r = 0; r < k; ++r) {
      const double c = x.at(r, j) - mean;
      var += c * c;
    }
    var /= k;
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[static_cast<std::size_t>(j)] = inv;
    for (int r = 0; r < k; ++r) {
      const std::size_t idx = static_cast<std::size_t>(r) * d + j;
      const double xh = (x.at(r, j) - mean) * inv;
      (*xhat)[idx] = xh;
      out[idx] = xh * gain.at(j) + bias.at(j);
    }
  }
  return finish({k, d}, std::move(out), "norm_cols", {x, gain, bias},
                [k, d, xhat, inv_std](Node& node) {
                  Tensor& px = node.parents[0];
                  Tensor& pgain = node.parents[1];
                  Tensor& pbias = node.parents[2];
                  const double* g = node.out_grad->data();
                  const double* gainv = pgain.data();
                  for (int j = 0; j < d; ++j) {
                    if (pgain.requires_grad() || pbias.requires_grad()) {
                      double* gg = pgain.requires_grad() ? pgain.grad().data() : nullptr;
                      double* gb = pbias.requires_grad() ? pbias.grad().data() : nullptr;
                      for (int r = 0; r < k; ++r) {
                        const std::size_t idx = static_cast<std::size_t>(r) * d + j;
                        if (gg) gg[j] += g[idx] * (*xhat)[idx];
                        if (gb) gb[j] += g[idx];
                      }
                    }
                    if (px.requires_grad()) {
                      double m1 = 0.0, m2 = 0.0;
                      for (int r = 0; r < k; ++r) {
                        const std::size_t idx = static_cast<std::size_t>(r) * d + j;
                        const double gh = g[idx] * gainv[j];
                        m1 += gh;
                        m2 += gh * (*xhat)[idx];
                      }
                      m1 /= k;
                      m2 /= k;
                      const double inv = (*inv_std)[static_cast<std::size_t>(j)];
                      double* gx = px.grad().data();
                      for (int r = 0; r < k; ++r) {
                        const std::size_t idx = static_cast<std::size_t>(r) * d + j;
                        const double gh = g[idx] * gainv[j];
                        gx[idx] += inv * (gh - m1 - (*xhat)[idx] * m2);
                      }
                    }
                  }
                });
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& idx) {
  require_2d(x, "gather_rows");
  const int n = x.dim(0), d = x.dim(1);
  const int k = static_cast<int>(idx.size());
  if (k == 0) throw dim_error("gather_rows: empty index list");
  for (int i : idx) {
    if (i < 0 || i >= n) {
      throw index_error("gather_rows: index " + std::to_string(i) + " out of range [0, " +
                        std::to_string(n) + ")");
    }
  }
  std::vector<double> out(static_cast<std::size_t>(k) * d);
  for (int r = 0; r < k; ++r) {
    std::memcpy(out.data() + static_cast<std::size_t>(r) * d,
                x.data() + static_cast<std::size_t>(idx[static_cast<std::size_t>(r)]) * d,
                sizeof(double) * d);
  }
  return finish({k, d}, std::move(out), "gather_rows", {x}, [idx, d](Node& node) {
    Tensor& p = node.parents[0];
    if (!p.requires_grad()) return;
    const double* g = node.out_grad->data();
    double* pg = p.grad().data();
    for (std::size_t r = 0; r < idx.size(); ++r) {
      double* dst = pg + static_cast<std::size_t>(idx[r]) * d;
      const double* src = g + r * d;
      for (int j = 0; j < d; ++j) dst[j] += src[j];
    }
  });
}

Tensor channel_max(const Tensor& x) {
  require_2d(x, "channel_max");
  const int k = x.dim(0), d = x.dim(1);
  if (k < 1) throw dim_error("channel_max: empty group");
  std::vector<double> out(static_cast<std::size_t>(d));
  auto argmax = std::make_shared<std::vector<int>>(static_cast<std::size_t>(d), 0);
  for (int j = 0; j < d; ++j) {
    double best = x.at(0, j);
    int best_row = 0;
    for (int r = 1; r < k; ++r) {
      if (x.at(r, j) > best) {
        best = x.at(r, j);
        best_row = r;
      }
    }
    out[static_cast<std::size_t>(j)] = best;
    (*argmax)[static_cast<std::size_t>(j)] = best_row;
  }
  return finish({d}, std::move(out), "channel_max", {x}, [d, argmax](Node& node) {
    Tensor& p = node.parents[0];
    if (!p.requires_grad()) return;
    const double* g = node.out_grad->data();
    double* pg = p.grad().data();
    const int width = d;
    for (int j = 0; j < width; ++j) {
      pg[static_cast<std::size_t>((*argmax)[static_cast<std::size_t>(j)]) * width + j] += g[j];
    }
  });
}

Tensor sum_axis0(const Tensor& x) {
  require_2d(x, "sum_axis0");
  const int k = x.dim(0), d = x.dim(1);
  std::vector<double> out(static_cast<std::size_t>(d), 0.0);
  for (int r = 0; r < k; ++r)
    for (int j = 0; j < d; ++j) out[static_cast<std::size_t>(j)] += x.at(r, j);
  return finish({d}, std::move(out), "sum_axis0", {x}, [k, d](Node& node) {
    Tensor& p = node.parents[0];
    if (!p.requires_grad()) return;
    const double* g = node.out_grad->data();
    double* pg = p.grad().data();
    for (int r = 0; r < k; ++r)
      for (int j = 0; j < d; ++j) pg[static_cast<std::size_t>(r) * d + j] += g[j];
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw dim_error("concat_rows: no parts");
  int d = -1, total = 0;
  for (const Tensor& p : parts) {
    require_2d(p, "concat_rows");
    if (d < 0) d = p.dim(1);
    if (p.dim(1) != d) throw dim_error("concat_rows: column widths disagree");
    total += p.dim(0);
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(total) * d);
  for (const Tensor& p : parts) out.insert(out.end(), p.vec().begin(), p.vec().end());
  std::vector<int> rows;
  for (const Tensor& p : parts) rows.push_back(p.dim(0));
  return finish({total, d}, std::move(out), "concat_rows", parts, [rows, d](Node& node) {
    const double* g = node.out_grad->data();
    std::size_t offset = 0;
    for (std::size_t pi = 0; pi < node.parents.size(); ++pi) {
      Tensor& p = node.parents[pi];
      const std::size_t count = static_cast<std::size_t>(rows[pi]) * d;
      if (p.requires_grad()) {
        double* pg = p.grad().data();
        for (std::size_t i = 0; i < count; ++i) pg[i] += g[offset + i];
      }
      offset += count;
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw dim_error("concat_cols: no parts");
  int n = -1, total = 0;
  for (const Tensor& p : parts) {
    require_2d(p, "concat_cols");
    if (n < 0) n = p.dim(0);
    if (p.dim(0) != n) throw dim_error("concat_cols: row counts disagree");
    total += p.dim(1);
  }
  std::vector<double> out(static_cast<std::size_t>(n) * total);
  int col0 = 0;
  for (const Tensor& p : parts) {
    const int w = p.dim(1);
    for (int i = 0; i < n; ++i) {
      std::memcpy(out.data() + static_cast<std::size_t>(i) * total + col0,
                  p.data() + static_cast<std::size_t>(i) * w, sizeof(double) * w);
    }
    col0 += w;
  }
  std::vector<int> widths;
  for (const Tensor& p : parts) widths.push_back(p.dim(1));
  return finish({n, total}, std::move(out), "concat_cols", parts, [n, total, widths](Node& node) {
    const double* g = node.out_grad->data();
    int col0 = 0;
    for (std::size_t pi = 0; pi < node.parents.size(); ++pi) {
      Tensor& p = node.parents[pi];
      const int w = widths[pi];
      if (p.requires_grad()) {
        double* pg = p.grad().data();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < w; ++j)
            pg[static_cast<std::size_t>(i) * w + j] +=
                g[static_cast<std::size_t>(i) * total + col0 + j];
      }
      col0 += w;
    }
  });
}

Tensor slice_rows(const Tensor& x, int r0, int r1) {
  require_2d(x, "slice_rows");
  const int n = x.dim(0), d = x.dim(1);
  if (r0 < 0 || r1 > n || r0 >= r1) throw index_error("slice_rows: bad range");
  const int k = r1 - r0;
  std::vector<double> out(x.vec().begin() + static_cast<std::ptrdiff_t>(r0) * d,
                          x.vec().begin() + static_cast<std::ptrdiff_t>(r1) * d);
  return finish({k, d}, std::move(out), "slice_rows", {x}, [r0, k, d](Node& node) {
    Tensor& p = node.parents[0];
    if (!p.requires_grad()) return;
    const double* g = node.out_grad->data();
    double* pg = p.grad().data() + static_cast<std::size_t>(r0) * d;
    for (std::size_t i = 0; i < static_cast<std::size_t>(k) * d; ++i) pg[i] += g[i];
  });
}

Tensor slice_cols(const Tensor& x, int c0, int c1) {
  require_2d(x, "slice_cols");
  const int n = x.dim(0), d = x.dim(1);
  if (c0 < 0 || c1 > d || c0 >= c1) throw index_error("slice_cols: bad range");
  const int w = c1 - c0;
  std::vector<double> out(static_cast<std::size_t>(n) * w);
  for (int i = 0; i < n; ++i) {
    std::memcpy(out.data() + static_cast<std::size_t>(i) * w,
                x.data() + static_cast<std::size_t>(i) * d + c0, sizeof(double) * w);
  }
  return finish({n, w}, std::move(out), "slice_cols", {x}, [n, d, c0, w](Node& node) {
    Tensor& p = node.parents[0];
    if (!p.requires_grad()) return;
    const double* g = node.out_grad->data();
    double* pg = p.grad().data();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < w; ++j)
        pg[static_cast<std::size_t>(i) * d + c0 + j] += g[static_cast<std::size_t>(i) * w + j];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw dim_error("reshape: element count mismatch " + shape_str(x.shape()) + " -> " +
                    shape_str(shape));
  }
  std::vector<double> out = x.vec();
  return finish(std::move(shape), std::move(out), "reshape", {x}, [](Node& node) {
    Tensor& p = node.parents[0];
    if (!p.requires_grad()) return;
    const double* g = node.out_grad->data();
    double* pg = p.grad().data();
    for (std::size_t i = 0; i < node.out_data->size(); ++i) pg[i] += g[i];
  });
}

Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) s += x.data()[i];
  return finish({1}, {s}, "sum_all", {x}, [](Node& node) {
    Tensor& p = node.parents[0];
    if (!p.requires_grad()) return;
    const double g = (*node.out_grad)[0];
    double* pg = p.grad().data();
    for (std::size_t i = 0; i < p.numel(); ++i) pg[i] += g;
  });
}

Tensor mean_all(const Tensor& x) {
  const double n = static_cast<double>(x.numel());
  double s = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) s += x.data()[i];
  return finish({1}, {s / n}, "mean_all", {x}, [n](Node& node) {
    Tensor& p = node.parents[0];
    if (!p.requires_grad()) return;
    const double g = (*node.out_grad)[0] / n;
    double* pg = p.grad().data();
    for (std::size_t i = 0; i < p.numel(); ++i) pg[i] += g;
  });
}

Tensor affine(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return add_rowvec(matmul(x, weight), bias);
}

Tensor affine_relu_stack(const Tensor& x, const std::vector<AffineLayer>& layers,
                         bool relu_between) {
  if (layers.empty()) throw dim_error("affine_relu_stack: no layers");
  Tensor h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = affine(h, layers[i].weight, layers[i].bias);
    if (relu_between && i + 1 < layers.size()) h = relu(h);
  }
  return h;
}

Tensor asymmetric_bce(const Tensor& logits, const Tensor& targets, double gamma_pos,
                      double gamma_neg, double clip) {
  require_same_shape(logits, targets, "asymmetric_bce");
  int rows = 1;
  if (logits.ndim() == 2) rows = logits.dim(0);
  const std::size_t n = logits.numel();
  const double* z = logits.data();
  const double* y = targets.data();

  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-z[i]));
    const double log_p = -stable_softplus(-z[i]);
    const double pm = std::max(p - clip, 0.0);
    const double log_1mpm = clip <= 0.0 ? -stable_softplus(z[i]) : std::log(1.0 - pm);
    const double pos = std::pow(1.0 - p, gamma_pos) * log_p;
    const double negv = pm > 0.0 ? std::pow(pm, gamma_neg) * log_1mpm : 0.0;
    total += -y[i] * pos - (1.0 - y[i]) * negv;
  }
  total /= rows;

  return finish({1}, {total}, "asymmetric_bce", {logits, targets},
                [n, rows, gamma_pos, gamma_neg, clip](Node& node) {
                  Tensor& pz = node.parents[0];
                  if (!pz.requires_grad()) return;
                  const double g = (*node.out_grad)[0] / rows;
                  const double* z = pz.data();
                  const double* y = node.parents[1].data();
                  double* gz = pz.grad().data();
                  for (std::size_t i = 0; i < n; ++i) {
                    const double p = 1.0 / (1.0 + std::exp(-z[i]));
                    const double dp = p * (1.0 - p);
                    const double log_p = -stable_softplus(-z[i]);
                    // d/dz of (1-p)^gp * log(p)
                    const double dpos = -gamma_pos * p * std::pow(1.0 - p, gamma_pos) * log_p +
                                        std::pow(1.0 - p, gamma_pos + 1.0);
                    double dneg = 0.0;
                    const double pm = std::max(p - clip, 0.0);
                    if (pm > 0.0) {
                      const double log_1mpm =
                          clip <= 0.0 ? -stable_softplus(z[i]) : std::log(1.0 - pm);
                      const double t1 =
                          gamma_neg == 0.0 ? 0.0
                                           : gamma_neg * std::pow(pm, gamma_neg - 1.0) * log_1mpm;
                      const double t2 = std::pow(pm, gamma_neg) / (1.0 - pm);
                      dneg = (t1 - t2) * dp;
                    }
                    gz[i] += g * (-y[i] * dpos - (1.0 - y[i]) * dneg);
                  }
                });
}

Tensor nll_rows(const Tensor& logp, const std::vector<int>& targets,
                const std::vector<double>& class_weights) {
  require_2d(logp, "nll_rows");
  const int n = logp.dim(0), c = logp.dim(1);
  if (static_cast<int>(targets.size()) != n) throw dim_error("nll_rows: one target per row required");
  if (static_cast<int>(class_weights.size()) != c) throw dim_error("nll_rows: one weight per class required");
  double wsum = 0.0, loss = 0.0;
  for (int i = 0; i < n; ++i) {
    const int t = targets[static_cast<std::size_t>(i)];
    if (t < 0 || t >= c) throw index_error("nll_rows: target out of range");
    const double w = class_weights[static_cast<std::size_t>(t)];
    wsum += w;
    loss -= w * logp.at(i, t);
  }
  if (wsum <= 0.0) throw dim_error("nll_rows: non-positive total weight");
  loss /= wsum;
  return finish({1}, {loss}, "nll_rows", {logp}, [targets, class_weights, wsum, c](Node& node) {
    Tensor& p = node.parents[0];
    if (!p.requires_grad()) return;
    const double g = (*node.out_grad)[0];
    double* pg = p.grad().data();
    for (std::size_t i = 0; i < targets.size(); ++i) {
      const int t = targets[i];
      pg[i * c + static_cast<std::size_t>(t)] -= g * class_weights[static_cast<std::size_t>(t)] / wsum;
    }
  });
}

Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& targets,
                          const std::vector<double>& class_weights) {
  return nll_rows(log_softmax_rows(logits), targets, class_weights);
}

}  // namespace groupdet
