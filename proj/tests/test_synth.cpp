#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "groupdet/synth.hpp"

using namespace groupdet;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

bool same_scene(const Scene& a, const Scene& b) {
  if (a.seed != b.seed || a.humans.size() != b.humans.size() ||
      a.objects.size() != b.objects.size() || a.triplets.size() != b.triplets.size())
    return false;
  for (std::size_t i = 0; i < a.humans.size(); ++i) {
    if (a.humans[i].cx != b.humans[i].cx || a.humans[i].cy != b.humans[i].cy ||
        a.humans[i].w != b.humans[i].w || a.humans[i].h != b.humans[i].h)
      return false;
  }
  for (std::size_t i = 0; i < a.objects.size(); ++i) {
    if (a.objects[i].cls != b.objects[i].cls || a.objects[i].box.cx != b.objects[i].box.cx)
      return false;
  }
  for (std::size_t i = 0; i < a.triplets.size(); ++i) {
    if (a.triplets[i].human != b.triplets[i].human || a.triplets[i].object != b.triplets[i].object ||
        a.triplets[i].interaction != b.triplets[i].interaction)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("scene generation is deterministic in (seed, config)") {
  SynthConfig cfg;
  for (std::int64_t seed : {0, 1, 17, 12345}) {
    CHECK(same_scene(generate_scene(seed, cfg), generate_scene(seed, cfg)));
  }
}

TEST_CASE("forced hold configuration yields exactly triplet (0, 0, hold)") {
  SynthConfig cfg;
  cfg.humans_min = cfg.humans_max = 1;
  cfg.objects_min = cfg.objects_max = 1;
  cfg.hold_motif_prob = 1.0;
  cfg.team_motif_prob = 0.0;
  cfg.rare_motif_prob = 0.0;
  for (int r = 0; r < kNumRules; ++r) cfg.rule_enabled[r] = r == kHold;
  for (std::int64_t seed = 0; seed < 50; ++seed) {
    Scene s = generate_scene(seed, cfg);
    REQUIRE(s.triplets.size() == 1);
    CHECK(s.triplets[0].human == 0);
    CHECK(s.triplets[0].object == 0);
    CHECK(s.triplets[0].interaction == kHold);
  }
}

TEST_CASE("entity counts stay within the configured ranges over 1000 seeds") {
  SynthConfig cfg;
  cfg.humans_min = 2;
  cfg.humans_max = 4;
  cfg.objects_min = 1;
  cfg.objects_max = 3;
  for (std::int64_t seed = 0; seed < 1000; ++seed) {
    Scene s = generate_scene(seed, cfg);
    CHECK(s.humans.size() >= 2);
    CHECK(s.humans.size() <= 4);
    CHECK(s.objects.size() >= 1);
    CHECK(s.objects.size() <= 3);
    for (const Box& b : s.humans) b.validate();
    for (const SceneObject& o : s.objects) o.box.validate();
  }
}

TEST_CASE("every emitted triplet satisfies its generating rule") {
  SynthConfig cfg;
  int checked = 0;
  for (std::int64_t seed = 0; seed < 300; ++seed) {
    Scene s = generate_scene(seed, cfg);
    for (const Triplet& t : s.triplets) {
      CHECK(rule_predicate(t.interaction, s, t.human, t.object));
      ++checked;
    }
  }
  CHECK(checked > 500);
}

TEST_CASE("disabled rules never fire and the pair cap holds") {
  SynthConfig cfg;
  cfg.rule_enabled[kNear] = false;
  cfg.max_pairs = 3;
  for (std::int64_t seed = 0; seed < 200; ++seed) {
    Scene s = generate_scene(seed, cfg);
    std::vector<std::pair<int, int>> pairs;
    for (const Triplet& t : s.triplets) {
      CHECK(t.interaction != kNear);
      const std::pair<int, int> key{t.human, t.object};
      if (std::find(pairs.begin(), pairs.end(), key) == pairs.end()) pairs.push_back(key);
    }
    CHECK(pairs.size() <= 3);
  }
}

TEST_CASE("infeasible config is rejected") {
  SynthConfig cfg;
  cfg.humans_max = 20;
  cfg.objects_max = 20;
  CHECK_THROWS_AS(generate_scene(0, cfg), data_error);
  SynthConfig bad;
  bad.n_interaction_classes = 1;
  CHECK_THROWS_AS(bad.validate(), config_error);
}

TEST_CASE("rasterizer") {
  SynthConfig cfg;
  cfg.noise_sigma = 0.0;

  SUBCASE("empty scene gives zero features") {
    Scene s;
    s.seed = 1;
    Rasterized r = rasterize(s, cfg);
    for (double v : r.features.vec()) CHECK(v == 0.0);
    CHECK(r.features.shape() == Shape{256, 32});
  }

  SUBCASE("single entity peaks at the grid cell nearest its center") {
    Scene s;
    s.seed = 2;
    s.humans.push_back({0.33, 0.61, 0.15, 0.25});
    Rasterized r = rasterize(s, cfg);
    // feature-norm argmax
    int best = -1;
    double best_norm = -1.0;
    for (int cell = 0; cell < 256; ++cell) {
      double norm = 0.0;
      for (int c = 0; c < 32; ++c) norm += r.features.at(cell, c) * r.features.at(cell, c);
      if (norm > best_norm) {
        best_norm = norm;
        best = cell;
      }
    }
    // nearest cell to (0.33, 0.61): gx = 5 (center 0.34375), gy = 9 (0.59375)
    const int expect = 9 * 16 + 5;
    CHECK(best == expect);
  }

  SUBCASE("positional embeddings depend only on the grid shape") {
    Scene a = generate_scene(0, cfg);
    Scene b = generate_scene(9, cfg);
    Rasterized ra = rasterize(a, cfg);
    Rasterized rb = rasterize(b, cfg);
    CHECK(ra.pos.vec() == rb.pos.vec());
  }

  SUBCASE("noise is deterministic per scene seed") {
    SynthConfig noisy;
    Scene s = generate_scene(3, noisy);
    Rasterized r1 = rasterize(s, noisy);
    Rasterized r2 = rasterize(s, noisy);
    CHECK(r1.features.vec() == r2.features.vec());
  }
}

TEST_CASE("splits are disjoint, byte-identical, and count the rare set") {
  SynthConfig cfg;
  const std::string dir =
      (std::filesystem::temp_directory_path() / "groupdet_test_splits").string();
  std::filesystem::create_directories(dir);

  SplitMeta meta;
  SplitPaths paths = make_splits(cfg, 30, 10, 100, dir, &meta);
  const std::string train_bytes = slurp(paths.train_file);
  const std::string val_bytes = slurp(paths.val_file);
  const std::string meta_bytes = slurp(paths.meta_file);

  // re-run: byte-identical outputs
  make_splits(cfg, 30, 10, 100, dir);
  CHECK(slurp(paths.train_file) == train_bytes);
  CHECK(slurp(paths.val_file) == val_bytes);
  CHECK(slurp(paths.meta_file) == meta_bytes);

  // disjoint seed ranges
  std::vector<Scene> train = read_scenes(paths.train_file, cfg);
  std::vector<Scene> val = read_scenes(paths.val_file, cfg);
  for (const Scene& t : train)
    for (const Scene& v : val) CHECK(t.seed != v.seed);

  // rare set = classes under 10 training triplets
  std::vector<int> counts(static_cast<std::size_t>(cfg.n_interaction_classes), 0);
  for (const Scene& t : train)
    for (const Triplet& tr : t.triplets) ++counts[static_cast<std::size_t>(tr.interaction)];
  CHECK(counts == meta.train_counts);
  for (int c = 0; c < cfg.n_interaction_classes; ++c) {
    const bool rare =
        std::find(meta.rare.begin(), meta.rare.end(), c) != meta.rare.end();
    CHECK(rare == (counts[static_cast<std::size_t>(c)] < 10));
  }

  // file round trip preserves scenes exactly (boxes are 4-decimal quantized)
  for (std::size_t i = 0; i < train.size(); ++i)
    CHECK(same_scene(train[i], generate_scene(train[i].seed, cfg)));

  SplitMeta meta2 = read_meta(paths.meta_file);
  CHECK(meta2.train_counts == meta.train_counts);
  CHECK(meta2.rare == meta.rare);

  // mismatched reader config is rejected
  SynthConfig other = cfg;
  other.n_interaction_classes = 4;
  other.n_object_classes = 5;
  CHECK_THROWS_AS(read_scenes(paths.train_file, other), data_error);
}

TEST_CASE("the rare-class knob produces an under-10 class at full scale") {
  SynthConfig cfg;  // defaults: 500-scene scale is the desk configuration
  int balance_count = 0;
  for (std::int64_t seed = 0; seed < 500; ++seed) {
    Scene s = generate_scene(seed, cfg);
    for (const Triplet& t : s.triplets) {
      if (t.interaction == kBalance) ++balance_count;
    }
  }
  CHECK(balance_count >= 1);
  CHECK(balance_count < 10);
}

TEST_CASE("gt pair merging is multi-label per (human, object)") {
  Scene s;
  s.seed = 5;
  s.humans.push_back({0.4, 0.4, 0.2, 0.3});
  s.objects.push_back({{0.42, 0.42, 0.05, 0.05}, 2});
  s.triplets = {{0, 0, 0}, {0, 0, 1}};
  std::vector<GtPair> pairs = scene_gt_pairs(s, 6);
  REQUIRE(pairs.size() == 1);
  CHECK(pairs[0].object_class == 2);
  CHECK(pairs[0].interactions == std::vector<int>{0, 1});
}
