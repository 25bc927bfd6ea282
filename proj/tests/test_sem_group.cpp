#include <cmath>

#include "doctest.h"
#include "groupdet/sem_group.hpp"
#include "oracles.hpp"

using namespace groupdet;

namespace {

SemLayerParams make_params(ParamStore& store, int d, std::uint64_t seed,
                           NormKind norm = NormKind::kLayer) {
  Rng rng(seed);
  return SemLayerParams::create(store, "sem", d, rng, norm);
}

void zero_phi5(SemLayerParams& p) {
  for (double& v : p.phi5_in.weight.vec()) v = 0.0;
  for (double& v : p.phi5_in.bias.vec()) v = 0.0;
  for (double& v : p.phi5_norm_gain.vec()) v = 0.0;
  for (double& v : p.phi5_norm_bias.vec()) v = 0.0;
  for (double& v : p.phi5_out.weight.vec()) v = 0.0;
  for (double& v : p.phi5_out.bias.vec()) v = 0.0;
}

}  // namespace

TEST_CASE("cosine similarity matrix") {
  std::vector<double> rows = {1, 0, 2, 0, 0, 3};  // v, 2v, orthogonal
  ScoreMatrix s = cosine_sim_matrix(rows.data(), 3, 2);
  CHECK(s.at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));  // v vs 2v
  CHECK(s.at(0, 2) == doctest::Approx(0.0).epsilon(1e-12));  // orthogonal
  CHECK(s.at(0, 0) == 1.0);
  CHECK(s.at(1, 2) == s.at(2, 1));

  std::vector<double> pair = {1, 0, 1, 1};
  ScoreMatrix t = cosine_sim_matrix(pair.data(), 2, 2);
  CHECK(t.at(0, 1) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-9));

  // zero rows get similarity 0 by convention
  std::vector<double> withzero = {0, 0, 1, 1};
  ScoreMatrix z = cosine_sim_matrix(withzero.data(), 2, 2);
  CHECK(z.at(0, 1) == 0.0);
}

TEST_CASE("semantic neighbor selection") {
  ScoreMatrix two;
  two.n = 2;
  two.values = {1.0, 0.4, 0.4, 1.0};
  GroupIndex g2 = select_semantic_neighbors(two, 1);
  CHECK(g2[0][0] == 1);
  CHECK(g2[1][0] == 0);

  ScoreMatrix s;
  s.n = 4;
  s.values = {1.0, 0.9, 0.1, 0.9,  //
              0.9, 1.0, 0.2, 0.3,  //
              0.1, 0.2, 1.0, 0.4,  //
              0.9, 0.3, 0.4, 1.0};
  GroupIndex g = select_semantic_neighbors(s, 2);
  REQUIRE(g[0].size() == 2);
  CHECK(g[0][0] == 1);  // tie 0.9/0.9 -> lower index first
  CHECK(g[0][1] == 3);

  GroupIndex all = select_semantic_neighbors(s, 9);
  CHECK(all[0].size() == 3);

  CHECK_THROWS_AS(select_semantic_neighbors(s, 0), config_error);
}

TEST_CASE("selection matches the oracle and is scale invariant") {
  Rng rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = rng.uniform_int(2, 10), d = rng.uniform_int(2, 6);
    const int k = rng.uniform_int(1, n);
    std::vector<double> rows(static_cast<std::size_t>(n) * d);
    for (double& v : rows) v = rng.uniform(-1, 1);
    ScoreMatrix sim = cosine_sim_matrix(rows.data(), n, d);
    CHECK(select_semantic_neighbors(sim, k) == oracle::knn_highest(sim.values, n, k));

    // positive per-row power-of-two scaling leaves indices unchanged exactly
    std::vector<double> scaled = rows;
    for (int i = 0; i < n; ++i) {
      const double s = std::ldexp(1.0, rng.uniform_int(-2, 3));
      for (int c = 0; c < d; ++c) scaled[static_cast<std::size_t>(i) * d + c] *= s;
    }
    ScoreMatrix sim2 = cosine_sim_matrix(scaled.data(), n, d);
    CHECK(select_semantic_neighbors(sim2, k) == select_semantic_neighbors(sim, k));
  }
}

TEST_CASE("semantic context pooling") {
  const int d = 2;
  ParamStore store;
  SemLayerParams p = make_params(store, d, 31);

  // single neighbor equal to q_i: context is phi4(concat(q_i, 0))
  Tensor q = Tensor::from({d}, {0.3, -0.4});
  Tensor same = reshape(q, {1, d});
  Tensor m = semantic_context(q, same, p);
  // reference: run phi4 by hand through the ops
  Tensor features = Tensor::from({1, 2 * d}, {0.3, -0.4, 0.0, 0.0});
  Tensor h = affine(features, p.phi4_in.weight, p.phi4_in.bias);
  h = layer_norm(h, p.phi4_norm_gain, p.phi4_norm_bias);
  h = relu(h);
  h = affine(h, p.phi4_out.weight, p.phi4_out.bias);
  for (int c = 0; c < d; ++c) CHECK(m.at(c) == h.at(0, c));

  // order invariance of the max pool
  Rng rng(32);
  Tensor rows = Tensor::zeros({3, d});
  for (double& v : rows.vec()) v = rng.uniform(-1, 1);
  Tensor shuffled = gather_rows(rows, {2, 0, 1});
  Tensor m1 = semantic_context(q, rows, p);
  Tensor m2 = semantic_context(q, shuffled, p);
  for (int c = 0; c < d; ++c) CHECK(m1.at(c) == m2.at(c));

  CHECK_THROWS_AS(semantic_context(q, Tensor::zeros({1, 3}), p), dim_error);
}

TEST_CASE("integrate context residual") {
  const int d = 2;
  ParamStore store;
  SemLayerParams p = make_params(store, d, 33);
  Tensor q = Tensor::from({d}, {1.0, 1.0});

  SUBCASE("zero phi5 returns the query") {
    zero_phi5(p);
    Tensor out = integrate_context(q, Tensor::from({d}, {5.0, -3.0}), p);
    CHECK(out.at(0) == 1.0);
    CHECK(out.at(1) == 1.0);
  }

  SUBCASE("residual adds the projection") {
    // force phi5(m) = [0.5, -0.5] via the output bias
    zero_phi5(p);
    p.phi5_out.bias.at(0) = 0.5;
    p.phi5_out.bias.at(1) = -0.5;
    Tensor out = integrate_context(q, Tensor::zeros({d}), p);
    CHECK(out.at(0) == doctest::Approx(1.5));
    CHECK(out.at(1) == doctest::Approx(0.5));
  }
}

TEST_CASE("semantic layer") {
  const int d = 4;
  ParamStore store;
  SemLayerParams p = make_params(store, d, 35);
  Rng rng(36);

  SUBCASE("n=1 is the identity") {
    Tensor q = Tensor::zeros({1, d});
    for (double& v : q.vec()) v = rng.uniform(-1, 1);
    Tensor out = semantic_layer(q, 2, p);
    for (std::size_t i = 0; i < q.numel(); ++i) CHECK(out.data()[i] == q.data()[i]);
  }

  SUBCASE("zero phi5 is the identity for any n") {
    zero_phi5(p);
    Tensor q = Tensor::zeros({5, d});
    for (double& v : q.vec()) v = rng.uniform(-1, 1);
    Tensor out = semantic_layer(q, 2, p);
    for (std::size_t i = 0; i < q.numel(); ++i) CHECK(out.data()[i] == q.data()[i]);
  }

  SUBCASE("duplicated queries produce identical outputs") {
    Tensor q = Tensor::zeros({4, d});
    for (int c = 0; c < d; ++c) {
      const double v = rng.uniform(-1, 1), w = rng.uniform(-1, 1);
      q.at(0, c) = v;
      q.at(1, c) = w;
      q.at(2, c) = v;
      q.at(3, c) = w;
    }
    Tensor out = semantic_layer(q, 2, p);
    for (int c = 0; c < d; ++c) {
      CHECK(out.at(0, c) == doctest::Approx(out.at(2, c)).epsilon(1e-12));
      CHECK(out.at(1, c) == doctest::Approx(out.at(3, c)).epsilon(1e-12));
    }
  }

  SUBCASE("permutation equivariance") {
    for (int trial = 0; trial < 30; ++trial) {
      const int n = rng.uniform_int(2, 8);
      Tensor q = Tensor::zeros({n, d});
      for (double& v : q.vec()) v = rng.uniform(-1, 1);
      std::vector<int> perm(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
      for (int i = n - 1; i > 0; --i)
        std::swap(perm[static_cast<std::size_t>(i)],
                  perm[static_cast<std::size_t>(rng.uniform_int(0, i))]);
      Tensor qp = Tensor::zeros({n, d});
      for (int i = 0; i < n; ++i)
        for (int c = 0; c < d; ++c) qp.at(perm[static_cast<std::size_t>(i)], c) = q.at(i, c);
      Tensor out = semantic_layer(q, 2, p);
      Tensor outp = semantic_layer(qp, 2, p);
      for (int i = 0; i < n; ++i)
        for (int c = 0; c < d; ++c)
          CHECK(std::fabs(outp.at(perm[static_cast<std::size_t>(i)], c) - out.at(i, c)) <= 1e-9);
    }
  }

  SUBCASE("batch-norm variant stays finite and differs from layer norm") {
    ParamStore store2;
    SemLayerParams pb = make_params(store2, d, 35, NormKind::kBatch);
    Tensor q = Tensor::zeros({4, d});
    for (double& v : q.vec()) v = rng.uniform(-1, 1);
    Tensor out = semantic_layer(q, 2, pb);
    CHECK(out.numel() == q.numel());
  }
}
