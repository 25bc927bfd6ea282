#include <cmath>

#include "doctest.h"
#include "groupdet/gradcheck.hpp"
#include "groupdet/ops.hpp"
#include "groupdet/rng.hpp"

using namespace groupdet;

TEST_CASE("matmul products") {
  Tensor eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor x = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor r = matmul(eye, x);
  for (int i = 0; i < 4; ++i) CHECK(r.data()[i] == x.data()[i]);

  Tensor zero = Tensor::zeros({2, 2});
  Tensor z = matmul(zero, x);
  for (int i = 0; i < 4; ++i) CHECK(z.data()[i] == 0.0);

  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from({2, 2}, {5, 6, 7, 8});
  Tensor c = matmul(a, b);
  CHECK(c.at(0, 0) == doctest::Approx(19).epsilon(1e-12));
  CHECK(c.at(0, 1) == doctest::Approx(22).epsilon(1e-12));
  CHECK(c.at(1, 0) == doctest::Approx(43).epsilon(1e-12));
  CHECK(c.at(1, 1) == doctest::Approx(50).epsilon(1e-12));

  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), dim_error);
}

TEST_CASE("softmax values and stability") {
  Tensor u = softmax(Tensor::from({3}, {0.7, 0.7, 0.7}), 0);
  for (int i = 0; i < 3; ++i) CHECK(u.at(i) == doctest::Approx(1.0 / 3).epsilon(1e-12));

  Tensor single = softmax(Tensor::from({1}, {42.0}), 0);
  CHECK(single.at(0) == 1.0);

  Tensor two = softmax(Tensor::from({2}, {0.0, std::log(2.0)}), 0);
  CHECK(two.at(0) == doctest::Approx(1.0 / 3).epsilon(1e-9));
  CHECK(two.at(1) == doctest::Approx(2.0 / 3).epsilon(1e-9));

  // non-negative, sums to 1 +- 1e-12 for values up to +-1e3
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = rng.uniform_int(1, 7);
    Tensor x = Tensor::zeros({n});
    for (double& v : x.vec()) v = rng.uniform(-1e3, 1e3);
    Tensor s = softmax(x, 0);
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
      CHECK(s.at(i) >= 0.0);
      sum += s.at(i);
    }
    CHECK(std::fabs(sum - 1.0) <= 1e-12);
  }

  // 2-D: both axes normalize their own lanes
  Tensor m = Tensor::from({2, 2}, {1.0, 2.0, 3.0, 4.0});
  Tensor rows = softmax(m, 1);
  CHECK(rows.at(0, 0) + rows.at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
  Tensor cols = softmax(m, 0);
  CHECK(cols.at(0, 0) + cols.at(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("layer_norm rows") {
  Tensor gain = Tensor::full({3}, 1.0);
  Tensor bias = Tensor::zeros({3});
  Tensor constant = layer_norm(Tensor::from({1, 3}, {5.0, 5.0, 5.0}), gain, bias);
  for (int j = 0; j < 3; ++j) CHECK(std::fabs(constant.at(0, j)) < 1e-6);

  Tensor g2 = Tensor::full({2}, 1.0);
  Tensor b2 = Tensor::zeros({2});
  Tensor pair = layer_norm(Tensor::from({1, 2}, {1.0, 3.0}), g2, b2, 1e-12);
  CHECK(pair.at(0, 0) == doctest::Approx(-1.0).epsilon(1e-5));
  CHECK(pair.at(0, 1) == doctest::Approx(1.0).epsilon(1e-5));

  // shift invariance
  Rng rng(5);
  Tensor x = Tensor::zeros({2, 4});
  for (double& v : x.vec()) v = rng.uniform(-1, 1);
  Tensor shifted = Tensor::zeros({2, 4});
  for (std::size_t i = 0; i < x.numel(); ++i) shifted.data()[i] = x.data()[i] + 0.75;
  Tensor g4 = Tensor::full({4}, 1.0);
  Tensor b4 = Tensor::zeros({4});
  Tensor ln_a = layer_norm(x, g4, b4);
  Tensor ln_b = layer_norm(shifted, g4, b4);
  for (std::size_t i = 0; i < ln_a.numel(); ++i)
    CHECK(ln_a.data()[i] == doctest::Approx(ln_b.data()[i]).epsilon(1e-9));
}

TEST_CASE("affine_relu_stack composition") {
  Tensor x = Tensor::from({1, 2}, {1.0, -2.0});

  // all-zero weights -> bias of last layer broadcast
  std::vector<AffineLayer> zero_layers = {{Tensor::zeros({2, 3}), Tensor::from({3}, {0.5, -1.0, 2.0})}};
  Tensor out = affine_relu_stack(x, zero_layers, true);
  CHECK(out.at(0, 0) == 0.5);
  CHECK(out.at(0, 1) == -1.0);
  CHECK(out.at(0, 2) == 2.0);

  // single identity layer -> x
  std::vector<AffineLayer> identity = {{Tensor::from({2, 2}, {1, 0, 0, 1}), Tensor::zeros({2})}};
  Tensor same = affine_relu_stack(x, identity, true);
  CHECK(same.at(0, 0) == 1.0);
  CHECK(same.at(0, 1) == -2.0);

  // W=I, b=0 with ReLU between two identity layers: [1,-2] -> [1,0]
  std::vector<AffineLayer> two = {{Tensor::from({2, 2}, {1, 0, 0, 1}), Tensor::zeros({2})},
                                  {Tensor::from({2, 2}, {1, 0, 0, 1}), Tensor::zeros({2})}};
  Tensor relu_out = affine_relu_stack(x, two, true);
  CHECK(relu_out.at(0, 0) == 1.0);
  CHECK(relu_out.at(0, 1) == 0.0);
}

TEST_CASE("gather_rows copies and scatter-adds") {
  Tensor x = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6});

  Tensor all = gather_rows(x, {0, 1, 2});
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(all.data()[i] == x.data()[i]);

  Tensor rev = gather_rows(x, {2, 1, 0});
  CHECK(rev.at(0, 0) == 5.0);
  CHECK(rev.at(2, 1) == 2.0);

  // duplicated index accumulates grad x2 on that row
  Tensor src = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6}, true);
  Tensor picked = gather_rows(src, {1, 1});
  sum_all(picked).backward();
  CHECK(src.grad()[0] == 0.0);
  CHECK(src.grad()[2] == 2.0);
  CHECK(src.grad()[3] == 2.0);
  CHECK(src.grad()[4] == 0.0);

  CHECK_THROWS_AS(gather_rows(x, {3}), index_error);
  CHECK_THROWS_AS(gather_rows(x, {-1}), index_error);
}

TEST_CASE("gather backward equals dense scatter matrix") {
  // backward of gather is the linear map S^T where S is the selection matrix
  Rng rng(17);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = rng.uniform_int(1, 8), d = rng.uniform_int(1, 4);
    const int k = rng.uniform_int(1, 8);
    std::vector<int> idx;
    for (int i = 0; i < k; ++i) idx.push_back(rng.uniform_int(0, n - 1));
    Tensor x = Tensor::zeros({n, d}, true);
    for (double& v : x.vec()) v = rng.uniform(-1, 1);
    Tensor w = Tensor::zeros({k, d});
    for (double& v : w.vec()) v = rng.uniform(-1, 1);
    sum_all(mul(gather_rows(x, idx), w)).backward();

    // dense route: grad[r] = sum over gathered slots that selected r
    std::vector<double> expected(static_cast<std::size_t>(n) * d, 0.0);
    for (int r = 0; r < k; ++r)
      for (int c = 0; c < d; ++c)
        expected[static_cast<std::size_t>(idx[static_cast<std::size_t>(r)]) * d + c] += w.at(r, c);
    for (std::size_t i = 0; i < expected.size(); ++i)
      CHECK(x.grad()[i] == doctest::Approx(expected[i]).epsilon(1e-12));
  }
}

TEST_CASE("channel_max values and tie rule") {
  Tensor one = channel_max(Tensor::from({1, 3}, {4, 5, 6}));
  CHECK(one.at(0) == 4.0);
  CHECK(one.at(2) == 6.0);

  Tensor m = channel_max(Tensor::from({2, 2}, {1, 5, 3, 2}));
  CHECK(m.at(0) == 3.0);
  CHECK(m.at(1) == 5.0);

  // all-equal rows: gradient routes to row 0 (first-argmax rule)
  Tensor eq = Tensor::from({3, 2}, {7, 7, 7, 7, 7, 7}, true);
  sum_all(channel_max(eq)).backward();
  CHECK(eq.grad()[0] == 1.0);
  CHECK(eq.grad()[1] == 1.0);
  CHECK(eq.grad()[2] == 0.0);
  CHECK(eq.grad()[4] == 0.0);
}

TEST_CASE("elementwise helpers") {
  Tensor a = Tensor::from({2}, {1.0, -2.0});
  Tensor b = Tensor::from({2}, {0.5, 4.0});
  CHECK(emin(a, b).at(0) == 0.5);
  CHECK(emax(a, b).at(1) == 4.0);
  CHECK(div(a, b).at(1) == doctest::Approx(-0.5));
  CHECK(clamp(a, 0.0, 1.0).at(1) == 0.0);
  CHECK(abs_t(a).at(1) == 2.0);
  CHECK(affine_scalar(a, -1.0, 1.0).at(0) == 0.0);  // 1 - x
  Tensor nonfinite = Tensor::from({1}, {0.0});
  CHECK_THROWS_AS(div(nonfinite, nonfinite), numeric_error);
}

TEST_CASE("reverse mode matches finite differences over 100+ random shapes") {
  // spot-checks a rotating subset of ops with fresh shapes/values each trial;
  // the gradcheck CLI runs the exhaustive per-op table
  Rng rng(2024);
  int trials = 0;
  for (int t = 0; t < 120; ++t) {
    ParamStore store;
    const int m = rng.uniform_int(1, 4), k = rng.uniform_int(1, 4), n = rng.uniform_int(1, 4);
    Tensor a = Tensor::zeros({m, k});
    Tensor b = Tensor::zeros({k, n});
    for (double& v : a.vec()) v = rng.uniform(-1.5, 1.5);
    for (double& v : b.vec()) v = rng.uniform(-1.5, 1.5);
    store.add("a", std::move(a));
    store.add("b", std::move(b));
    GradCheckFn f;
    switch (t % 4) {
      case 0:
        f = [](ParamStore& s) {
          Tensor y = matmul(s.get("a"), s.get("b"));
          return sum_all(mul(y, y));
        };
        break;
      case 1:
        f = [](ParamStore& s) { return mean_all(softmax(matmul(s.get("a"), s.get("b")), 1)); };
        break;
      case 2:
        f = [](ParamStore& s) {
          Tensor y = sigmoid(matmul(s.get("a"), s.get("b")));
          return sum_all(mul(y, y));
        };
        break;
      default:
        f = [](ParamStore& s) {
          Tensor y = log_softmax_rows(matmul(s.get("a"), s.get("b")));
          return sum_all(mul(y, y));
        };
        break;
    }
    const GradCheckReport r = finite_diff_check("prop", f, store);
    REQUIRE(r.failure.empty());
    REQUIRE(r.max_rel_err <= 1e-4);
    ++trials;
  }
  CHECK(trials >= 100);
}

TEST_CASE("backward accumulates across calls") {
  Tensor x = Tensor::from({1}, {2.0}, true);
  Tensor y1 = mul(x, x);
  y1.backward(0.5);
  Tensor y2 = mul(x, x);
  y2.backward(0.5);
  CHECK(x.grad()[0] == doctest::Approx(4.0).epsilon(1e-12));  // 2 * (0.5 * 2x)
}
