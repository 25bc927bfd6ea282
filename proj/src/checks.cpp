#include "groupdet/checks.hpp"

#include <cmath>

#include "groupdet/losses.hpp"
#include "groupdet/train.hpp"

namespace groupdet {

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.vec()) v = rng.uniform(lo, hi);
  return t;
}

// keeps every value at least `margin` away from `kink`
Tensor random_away_from(Rng& rng, Shape shape, double kink, double margin, double lo = -1.0,
                        double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.vec()) {
    do {
      v = rng.uniform(lo, hi);
    } while (std::fabs(v - kink) < margin);
  }
  return t;
}

GradCheckReport run_one(const std::string& name, std::uint64_t seed, double h, double tol,
                        const std::function<void(ParamStore&, Rng&)>& setup,
                        const GradCheckFn& f) {
  ParamStore store;
  Rng rng(seed);
  setup(store, rng);
  return finite_diff_check(name, f, store, h, tol);
}

}  // namespace

std::vector<GradCheckReport> run_gradcheck_suite(double h, double tol, std::uint64_t seed) {
  std::vector<GradCheckReport> reports;
  std::uint64_t salt = seed * 1000003ULL;
  auto run = [&](const std::string& name, const std::function<void(ParamStore&, Rng&)>& setup,
                 const GradCheckFn& f) {
    reports.push_back(run_one(name, ++salt, h, tol, setup, f));
  };

  // Projection tensors must stay identical across FD re-evaluations, so each
  // check creates them in setup and captures them.

  // --- elementwise and structural ops ---
  auto simple_pair = [&](const std::string& name, auto op, double kink_margin = 0.0,
                         double lo = -1.0, double hi = 1.0) {
    auto proj = std::make_shared<Tensor>();
    run(
        name,
        [proj, kink_margin, lo, hi](ParamStore& store, Rng& rng) {
          Tensor a = kink_margin > 0.0 ? random_away_from(rng, {3, 4}, 0.0, kink_margin, lo, hi)
                                       : random_tensor(rng, {3, 4}, lo, hi);
          Tensor b = random_tensor(rng, {3, 4}, lo, hi);
          store.add("a", std::move(a));
          store.add("b", std::move(b));
          *proj = random_tensor(rng, {3, 4}, 0.25, 1.75);
        },
        [proj, op](ParamStore& store) {
          return sum_all(mul(op(store.get("a"), store.get("b")), *proj));
        });
  };

  simple_pair("add", [](const Tensor& a, const Tensor& b) { return add(a, b); });
  simple_pair("sub", [](const Tensor& a, const Tensor& b) { return sub(a, b); });
  simple_pair("mul", [](const Tensor& a, const Tensor& b) { return mul(a, b); });
  run(
      "div",
      [](ParamStore& store, Rng& rng) {
        store.add("a", random_tensor(rng, {3, 4}));
        store.add("b", random_away_from(rng, {3, 4}, 0.0, 0.4, -2.0, 2.0));
      },
      [](ParamStore& store) { return mean_all(div(store.get("a"), store.get("b"))); });
  // ties between a and b are the only kink; random doubles never tie
  simple_pair("emin", [](const Tensor& a, const Tensor& b) { return emin(a, b); });
  simple_pair("emax", [](const Tensor& a, const Tensor& b) { return emax(a, b); });

  auto simple_unary = [&](const std::string& name, auto op, double kink, double margin,
                          double lo = -1.0, double hi = 1.0) {
    auto proj = std::make_shared<Tensor>();
    run(
        name,
        [proj, kink, margin, lo, hi](ParamStore& store, Rng& rng) {
          store.add("x", margin > 0.0 ? random_away_from(rng, {3, 4}, kink, margin, lo, hi)
                                      : random_tensor(rng, {3, 4}, lo, hi));
          *proj = random_tensor(rng, {3, 4}, 0.25, 1.75);
        },
        [proj, op](ParamStore& store) { return sum_all(mul(op(store.get("x")), *proj)); });
  };
  simple_unary("relu", [](const Tensor& x) { return relu(x); }, 0.0, 0.01);
  simple_unary("sigmoid", [](const Tensor& x) { return sigmoid(x); }, 0.0, 0.0, -3.0, 3.0);
  simple_unary("abs", [](const Tensor& x) { return abs_t(x); }, 0.0, 0.01);
  simple_unary("affine_scalar",
               [](const Tensor& x) { return affine_scalar(x, -1.7, 0.4); }, 0.0, 0.0);
  simple_unary("clamp", [](const Tensor& x) { return clamp(x, -0.5, 0.5); }, 0.0, 0.0, 0.6, 2.0);
  {
    auto proj = std::make_shared<Tensor>();
    run(
        "transpose",
        [proj](ParamStore& store, Rng& rng) {
          store.add("x", random_tensor(rng, {3, 4}));
          *proj = random_tensor(rng, {4, 3}, 0.25, 1.75);
        },
        [proj](ParamStore& store) { return sum_all(mul(transpose(store.get("x")), *proj)); });
    auto proj2 = std::make_shared<Tensor>();
    run(
        "reshape",
        [proj2](ParamStore& store, Rng& rng) {
          store.add("x", random_tensor(rng, {3, 4}));
          *proj2 = random_tensor(rng, {4, 3}, 0.25, 1.75);
        },
        [proj2](ParamStore& store) {
          return sum_all(mul(reshape(store.get("x"), {4, 3}), *proj2));
        });
  }

  run(
      "matmul",
      [](ParamStore& store, Rng& rng) {
        store.add("a", random_tensor(rng, {3, 5}));
        store.add("b", random_tensor(rng, {5, 2}));
      },
      [](ParamStore& store) {
        // asymmetric projection via squaring
        Tensor y = matmul(store.get("a"), store.get("b"));
        return sum_all(mul(y, y));
      });

  {
    auto proj = std::make_shared<Tensor>();
    run(
        "softmax_axis0",
        [proj](ParamStore& store, Rng& rng) {
          store.add("x", random_tensor(rng, {4, 3}, -2.0, 2.0));
          *proj = random_tensor(rng, {4, 3}, 0.25, 1.75);
        },
        [proj](ParamStore& store) { return sum_all(mul(softmax(store.get("x"), 0), *proj)); });
    auto proj1 = std::make_shared<Tensor>();
    run(
        "softmax_axis1",
        [proj1](ParamStore& store, Rng& rng) {
          store.add("x", random_tensor(rng, {4, 3}, -2.0, 2.0));
          *proj1 = random_tensor(rng, {4, 3}, 0.25, 1.75);
        },
        [proj1](ParamStore& store) { return sum_all(mul(softmax(store.get("x"), 1), *proj1)); });
    auto proj2 = std::make_shared<Tensor>();
    run(
        "log_softmax_rows",
        [proj2](ParamStore& store, Rng& rng) {
          store.add("x", random_tensor(rng, {4, 3}, -2.0, 2.0));
          *proj2 = random_tensor(rng, {4, 3}, 0.25, 1.75);
        },
        [proj2](ParamStore& store) {
          return sum_all(mul(log_softmax_rows(store.get("x")), *proj2));
        });
  }

  {
    auto proj = std::make_shared<Tensor>();
    run(
        "layer_norm",
        [proj](ParamStore& store, Rng& rng) {
          store.add("x", random_tensor(rng, {3, 6}));
          store.add("gain", random_tensor(rng, {6}, 0.5, 1.5));
          store.add("bias", random_tensor(rng, {6}, -0.3, 0.3));
          *proj = random_tensor(rng, {3, 6}, 0.25, 1.75);
        },
        [proj](ParamStore& store) {
          return sum_all(
              mul(layer_norm(store.get("x"), store.get("gain"), store.get("bias")), *proj));
        });
    auto projc = std::make_shared<Tensor>();
    run(
        "norm_cols",
        [projc](ParamStore& store, Rng& rng) {
          store.add("x", random_tensor(rng, {5, 4}));
          store.add("gain", random_tensor(rng, {4}, 0.5, 1.5));
          store.add("bias", random_tensor(rng, {4}, -0.3, 0.3));
          *projc = random_tensor(rng, {5, 4}, 0.25, 1.75);
        },
        [projc](ParamStore& store) {
          return sum_all(
              mul(norm_cols(store.get("x"), store.get("gain"), store.get("bias")), *projc));
        });
  }

  {
    auto proj = std::make_shared<Tensor>();
    run(
        "add_rowvec",
        [proj](ParamStore& store, Rng& rng) {
          store.add("x", random_tensor(rng, {4, 3}));
          store.add("v", random_tensor(rng, {3}));
          *proj = random_tensor(rng, {4, 3}, 0.25, 1.75);
        },
        [proj](ParamStore& store) {
          return sum_all(mul(add_rowvec(store.get("x"), store.get("v")), *proj));
        });
    auto proj2 = std::make_shared<Tensor>();
    run(
        "sub_rowvec",
        [proj2](ParamStore& store, Rng& rng) {
          store.add("x", random_tensor(rng, {4, 3}));
          store.add("v", random_tensor(rng, {3}));
          *proj2 = random_tensor(rng, {4, 3}, 0.25, 1.75);
        },
        [proj2](ParamStore& store) {
          return sum_all(mul(sub_rowvec(store.get("x"), store.get("v")), *proj2));
        });
    auto proj3 = std::make_shared<Tensor>();
    run(
        "repeat_row",
        [proj3](ParamStore& store, Rng& rng) {
          store.add("v", random_tensor(rng, {5}));
          *proj3 = random_tensor(rng, {3, 5}, 0.25, 1.75);
        },
        [proj3](ParamStore& store) { return sum_all(mul(repeat_row(store.get("v"), 3), *proj3)); });
  }

  {
    auto proj = std::make_shared<Tensor>();
    run(
        "gather_rows",
        [proj](ParamStore& store, Rng& rng) {
          store.add("x", random_tensor(rng, {4, 3}));
          *proj = random_tensor(rng, {3, 3}, 0.25, 1.75);
        },
        [proj](ParamStore& store) {
          // duplicated index exercises the scatter-add
          return sum_all(mul(gather_rows(store.get("x"), {1, 1, 3}), *proj));
        });
    auto proj2 = std::make_shared<Tensor>();
    run(
        "channel_max",
        [proj2](ParamStore& store, Rng& rng) {
          // keep per-channel maxima separated so the argmax is stable under h
          Tensor x = random_tensor(rng, {4, 3}, -1.0, 1.0);
          for (int j = 0; j < 3; ++j) x.at(j % 4, j) += 2.0;
          store.add("x", std::move(x));
          *proj2 = random_tensor(rng, {3}, 0.25, 1.75);
        },
        [proj2](ParamStore& store) {
          return sum_all(mul(channel_max(store.get("x")), *proj2));
        });
    auto proj3 = std::make_shared<Tensor>();
    run(
        "sum_axis0",
        [proj3](ParamStore& store, Rng& rng) {
          store.add("x", random_tensor(rng, {4, 3}));
          *proj3 = random_tensor(rng, {3}, 0.25, 1.75);
        },
        [proj3](ParamStore& store) { return sum_all(mul(sum_axis0(store.get("x")), *proj3)); });
  }

  {
    auto proj = std::make_shared<Tensor>();
    run(
        "concat_slice",
        [proj](ParamStore& store, Rng& rng) {
          store.add("a", random_tensor(rng, {2, 3}));
          store.add("b", random_tensor(rng, {2, 3}));
          *proj = random_tensor(rng, {2, 4}, 0.25, 1.75);
        },
        [proj](ParamStore& store) {
          Tensor rows = concat_rows({store.get("a"), store.get("b")});
          Tensor cols = concat_cols({slice_rows(rows, 0, 2), slice_rows(rows, 2, 4)});
          return sum_all(mul(slice_cols(cols, 1, 5), *proj));
        });
  }

  {
    auto proj = std::make_shared<Tensor>();
    run(
        "affine_relu_stack",
        [proj](ParamStore& store, Rng& rng) {
          store.add("x", random_tensor(rng, {3, 4}));
          store.add_affine_weight("w0", 4, 5, rng);
          store.add("b0", random_tensor(rng, {5}, -0.2, 0.2));
          store.add_affine_weight("w1", 5, 2, rng);
          store.add("b1", random_tensor(rng, {2}, -0.2, 0.2));
          *proj = random_tensor(rng, {3, 2}, 0.25, 1.75);
        },
        [proj](ParamStore& store) {
          const std::vector<AffineLayer> layers = {{store.get("w0"), store.get("b0")},
                                                   {store.get("w1"), store.get("b1")}};
          return sum_all(mul(affine_relu_stack(store.get("x"), layers, true), *proj));
        });
  }

  {
    auto targets = std::make_shared<Tensor>();
    run(
        "asymmetric_bce",
        [targets](ParamStore& store, Rng& rng) {
          // avoid the clip kink at p = 0.05 (z ~ -2.944)
          store.add("z", random_away_from(rng, {3, 4}, -2.944, 0.25, -2.5, 2.5));
          Tensor t = Tensor::zeros({3, 4});
          for (double& v : t.vec()) v = rng.bernoulli(0.4) ? 1.0 : 0.0;
          *targets = t;
        },
        [targets](ParamStore& store) {
          return asymmetric_bce(store.get("z"), *targets, 0.0, 4.0, 0.05);
        });
    run(
        "focal_bce",
        [targets](ParamStore& store, Rng& rng) {
          store.add("z", random_tensor(rng, {3, 4}, -2.5, 2.5));
        },
        [targets](ParamStore& store) {
          return asymmetric_bce(store.get("z"), *targets, 2.0, 2.0, 0.0);
        });
  }

  run(
      "cross_entropy_rows",
      [](ParamStore& store, Rng& rng) { store.add("z", random_tensor(rng, {4, 5}, -2.0, 2.0)); },
      [](ParamStore& store) {
        return cross_entropy_rows(store.get("z"), {0, 2, 4, 4}, {1.0, 1.0, 1.0, 1.0, 0.1});
      });

  run(
      "giou_loss_rows",
      [](ParamStore& store, Rng& rng) {
        Tensor pred = Tensor::zeros({3, 4});
        Tensor gt = Tensor::zeros({3, 4});
        for (int i = 0; i < 3; ++i) {
          const double cx = rng.uniform(0.35, 0.65), cy = rng.uniform(0.35, 0.65);
          const double w = rng.uniform(0.18, 0.30), hh = rng.uniform(0.18, 0.30);
          pred.at(i, 0) = cx;
          pred.at(i, 1) = cy;
          pred.at(i, 2) = w;
          pred.at(i, 3) = hh;
          gt.at(i, 0) = cx + rng.uniform(-0.05, 0.05);
          gt.at(i, 1) = cy + rng.uniform(-0.05, 0.05);
          gt.at(i, 2) = w + rng.uniform(-0.03, 0.03);
          gt.at(i, 3) = hh + rng.uniform(-0.03, 0.03);
        }
        store.add("pred", std::move(pred));
        store.add("gt", std::move(gt));
      },
      [](ParamStore& store) {
        return sum_all(giou_loss_rows(store.get("pred"), store.get("gt")));
      });

  {
    auto params = std::make_shared<AttentionParams>();
    auto proj = std::make_shared<Tensor>();
    run(
        "multi_head_attention",
        [params, proj](ParamStore& store, Rng& rng) {
          *params = AttentionParams::create(store, "attn", 4, 2, rng);
          store.add("q", random_tensor(rng, {3, 4}));
          store.add("kv", random_tensor(rng, {5, 4}));
          *proj = random_tensor(rng, {3, 4}, 0.25, 1.75);
        },
        [params, proj](ParamStore& store) {
          return sum_all(
              mul(multi_head_attention(store.get("q"), store.get("kv"), store.get("kv"), *params),
                  *proj));
        });
  }

  // --- geometric and semantic layers end to end ---
  {
    auto geo = std::make_shared<GeoLayerParams>();
    auto groups = std::make_shared<GroupIndex>();
    auto proj = std::make_shared<Tensor>();
    run(
        "aggregate_geometric",
        [geo, groups, proj](ParamStore& store, Rng& rng) {
          *geo = GeoLayerParams::create(store, "geo", 4, rng);
          store.add("q", random_tensor(rng, {5, 4}));
          store.add("pe", random_tensor(rng, {5, 4}));
          *groups = {{1, 2}, {0, 3, 4}, {1}, {2, 0}, {3}};
          *proj = random_tensor(rng, {5, 4}, 0.25, 1.75);
        },
        [geo, groups, proj](ParamStore& store) {
          return sum_all(
              mul(aggregate_geometric(store.get("q"), *groups, store.get("pe"), *geo), *proj));
        });
  }
  {
    auto geo = std::make_shared<GeoLayerParams>();
    auto boxes_h = std::make_shared<std::vector<Box>>();
    auto boxes_o = std::make_shared<std::vector<Box>>();
    auto proj_h = std::make_shared<Tensor>();
    auto proj_o = std::make_shared<Tensor>();
    run(
        "geometric_layer",
        [geo, boxes_h, boxes_o, proj_h, proj_o](ParamStore& store, Rng& rng) {
          *geo = GeoLayerParams::create(store, "geo", 4, rng);
          store.add("qh", random_tensor(rng, {3, 4}));
          store.add("qo", random_tensor(rng, {2, 4}));
          store.add("ph", random_tensor(rng, {3, 4}));
          store.add("po", random_tensor(rng, {2, 4}));
          *boxes_h = {{0.2, 0.3, 0.12, 0.2}, {0.45, 0.35, 0.12, 0.2}, {0.7, 0.6, 0.12, 0.2}};
          *boxes_o = {{0.3, 0.65, 0.1, 0.1}, {0.75, 0.25, 0.1, 0.1}};
          *proj_h = random_tensor(rng, {3, 4}, 0.25, 1.75);
          *proj_o = random_tensor(rng, {2, 4}, 0.25, 1.75);
        },
        [geo, boxes_h, boxes_o, proj_h, proj_o](ParamStore& store) {
          GeoConfig gc;
          gc.k_geometric = 2;
          auto [oh, oo] = geometric_layer(store.get("qh"), store.get("qo"), store.get("ph"),
                                          store.get("po"), *boxes_h, *boxes_o, {1.0, -1.0, 0.0},
                                          *geo, gc);
          return add(sum_all(mul(oh, *proj_h)), sum_all(mul(oo, *proj_o)));
        });
  }
  {
    auto sem = std::make_shared<SemLayerParams>();
    auto proj = std::make_shared<Tensor>();
    run(
        "semantic_layer",
        [sem, proj](ParamStore& store, Rng& rng) {
          *sem = SemLayerParams::create(store, "sem", 6, rng, NormKind::kLayer);
          store.add("q", random_tensor(rng, {5, 6}));
          *proj = random_tensor(rng, {5, 6}, 0.25, 1.75);
        },
        [sem, proj](ParamStore& store) {
          return sum_all(mul(semantic_layer(store.get("q"), 2, *sem), *proj));
        });
  }

  // --- full micro model ---
  {
    ModelConfig mc;
    mc.d_entity = 4;
    mc.n_queries = 2;
    mc.encoder_layers = 1;
    mc.instance_decoder_layers = 1;
    mc.interaction_decoder_layers = 1;
    mc.heads = 2;
    mc.ffn_mult = 2;
    mc.k_geometric = 1;
    mc.k_semantic = 1;
    mc.n_object_classes = 2;
    mc.n_interaction_classes = 2;
    auto model = std::make_shared<Model>(mc, salt + 77);
    auto gts = std::make_shared<std::vector<GtPair>>();
    {
      GtPair g;
      g.human = {0.4, 0.45, 0.2, 0.3};
      g.object = {0.6, 0.55, 0.1, 0.1};
      g.object_class = 1;
      g.interactions = {0};
      gts->push_back(g);
    }
    ParamStore& store = model->params();
    Rng rng(salt + 78);
    store.add("gc.features", random_tensor(rng, {2, 4}, -0.5, 0.5));
    const Tensor pos = random_tensor(rng, {2, 4}, -0.5, 0.5);
    GradCheckFn f = [model, gts, pos](ParamStore& s) {
      return scene_loss(*model, s.get("gc.features"), pos, *gts, nullptr);
    };
    reports.push_back(finite_diff_check("full_model_micro", f, store, h, tol));
  }

  return reports;
}

}  // namespace groupdet
