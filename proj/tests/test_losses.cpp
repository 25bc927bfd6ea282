#include <cmath>

#include "doctest.h"
#include "groupdet/losses.hpp"
#include "groupdet/rng.hpp"

using namespace groupdet;

TEST_CASE("asymmetric loss reduces to BCE at zero focusing") {
  Rng rng(7);
  Tensor z = Tensor::zeros({2, 3});
  Tensor y = Tensor::zeros({2, 3});
  for (double& v : z.vec()) v = rng.uniform(-2, 2);
  for (double& v : y.vec()) v = rng.bernoulli(0.5) ? 1.0 : 0.0;

  const double got = asymmetric_bce(z, y, 0.0, 0.0, 0.0).value();
  // hand BCE with the same reduction (sum over classes, mean over rows)
  double want = 0.0;
  for (int i = 0; i < 2; ++i) {
    for (int c = 0; c < 3; ++c) {
      const double p = 1.0 / (1.0 + std::exp(-z.at(i, c)));
      want += -y.at(i, c) * std::log(p) - (1.0 - y.at(i, c)) * std::log(1.0 - p);
    }
  }
  want /= 2.0;
  CHECK(got == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("asymmetric loss limits and hand value") {
  // perfect logits drive the loss to ~0
  Tensor strong = Tensor::from({1, 2}, {30.0, -30.0});
  Tensor target = Tensor::from({1, 2}, {1.0, 0.0});
  CHECK(asymmetric_bce(strong, target, 0.0, 4.0, 0.05).value() < 1e-9);

  // single logit 0, target 1, gamma+ = 0: -ln 0.5
  Tensor zero = Tensor::from({1, 1}, {0.0});
  Tensor one = Tensor::from({1, 1}, {1.0});
  CHECK(asymmetric_bce(zero, one, 0.0, 4.0, 0.05).value() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // clipping removes the easy-negative term entirely: p = 0.04 < clip
  Tensor easy_neg = Tensor::from({1, 1}, {std::log(0.04 / 0.96)});
  Tensor neg = Tensor::zeros({1, 1});
  CHECK(asymmetric_bce(easy_neg, neg, 0.0, 4.0, 0.05).value() == 0.0);
}

namespace {

ModelConfig tiny_config() {
  ModelConfig mc;
  mc.d_entity = 4;
  mc.n_queries = 3;
  mc.encoder_layers = 0;
  mc.instance_decoder_layers = 0;
  mc.interaction_decoder_layers = 0;
  mc.heads = 1;
  mc.n_object_classes = 2;
  mc.n_interaction_classes = 3;
  return mc;
}

ModelOutput make_output(const ModelConfig& mc) {
  ModelOutput out;
  out.boxes_h = Tensor::full({mc.n_queries, 4}, 0.5);
  out.boxes_o = Tensor::full({mc.n_queries, 4}, 0.5);
  out.obj_logits = Tensor::zeros({mc.n_queries, mc.n_object_classes + 1});
  out.int_logits = Tensor::zeros({mc.n_queries, mc.n_interaction_classes});
  return out;
}

}  // namespace

TEST_CASE("hoi loss composition") {
  const ModelConfig mc = tiny_config();

  SUBCASE("perfect matched boxes zero the box terms") {
    ModelOutput out = make_output(mc);
    GtPair gt;
    gt.human = {0.5, 0.5, 0.5, 0.5};
    gt.object = {0.5, 0.5, 0.5, 0.5};
    gt.object_class = 1;
    gt.interactions = {0};
    Assignment a;
    a.query_for_gt = {0};
    LossParts parts;
    hoi_loss(out, {gt}, a, mc, &parts);
    CHECK(parts.l1 == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(parts.giou == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(parts.obj_ce > 0.0);
  }

  SUBCASE("lambda weights sum components as 2.5/1/1/1") {
    // components all equal to 1 give a 5.5 total
    LossParts parts;
    parts.l1 = 1.0;
    parts.giou = 1.0;
    parts.obj_ce = 1.0;
    parts.int_cls = 1.0;
    const double total = mc.lambda_box * parts.l1 + mc.lambda_giou * parts.giou +
                         mc.lambda_obj * parts.obj_ce + mc.lambda_int * parts.int_cls;
    CHECK(total == doctest::Approx(5.5).epsilon(1e-12));
  }

  SUBCASE("empty ground truth leaves only the object CE") {
    ModelOutput out = make_output(mc);
    Assignment a;
    LossParts parts;
    Tensor loss = hoi_loss(out, {}, a, mc, &parts);
    CHECK(parts.l1 == 0.0);
    CHECK(parts.giou == 0.0);
    CHECK(parts.int_cls == 0.0);
    CHECK(parts.obj_ce > 0.0);
    CHECK(loss.value() == doctest::Approx(mc.lambda_obj * parts.obj_ce).epsilon(1e-12));
  }

  SUBCASE("reported total equals the weighted sum and is non-negative") {
    Rng rng(13);
    ModelOutput out = make_output(mc);
    for (double& v : out.obj_logits.vec()) v = rng.uniform(-1, 1);
    for (double& v : out.int_logits.vec()) v = rng.uniform(-1, 1);
    GtPair gt;
    gt.human = {0.4, 0.4, 0.2, 0.2};
    gt.object = {0.6, 0.6, 0.2, 0.2};
    gt.object_class = 0;
    gt.interactions = {1, 2};
    Assignment a;
    a.query_for_gt = {2};
    LossParts parts;
    Tensor loss = hoi_loss(out, {gt}, a, mc, &parts);
    CHECK(parts.total >= 0.0);
    const double recomposed = mc.lambda_box * parts.l1 + mc.lambda_giou * parts.giou +
                              mc.lambda_obj * parts.obj_ce + mc.lambda_int * parts.int_cls;
    CHECK(loss.value() == doctest::Approx(recomposed).epsilon(1e-12));
  }
}

TEST_CASE("loss gradients flow into the logits") {
  const ModelConfig mc = tiny_config();
  ModelOutput out = make_output(mc);
  out.obj_logits.set_requires_grad(true);
  out.int_logits.set_requires_grad(true);
  GtPair gt;
  gt.human = {0.5, 0.5, 0.4, 0.4};
  gt.object = {0.5, 0.5, 0.3, 0.3};
  gt.object_class = 1;
  gt.interactions = {2};
  Assignment a;
  a.query_for_gt = {1};
  Tensor loss = hoi_loss(out, {gt}, a, mc, nullptr);
  loss.backward();
  double obj_grad = 0.0, int_grad = 0.0;
  for (double g : out.obj_logits.grad()) obj_grad += std::fabs(g);
  for (double g : out.int_logits.grad()) int_grad += std::fabs(g);
  CHECK(obj_grad > 0.0);
  CHECK(int_grad > 0.0);
}
