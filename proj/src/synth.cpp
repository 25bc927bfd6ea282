#include "groupdet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "groupdet/rng.hpp"
#include "json.hpp"

namespace groupdet {

namespace {

// rule thresholds (normalized frame)
constexpr double kNearThresh = 0.14;
constexpr double kWatchMin = 0.15;
constexpr double kWatchMax = 0.40;
constexpr double kTeamRadius = 0.18;
constexpr double kBesideDx = 0.22;
constexpr double kBesideDy = 0.05;
constexpr double kBalanceDx = 0.006;
constexpr double kBalanceDyMin = 0.17;
constexpr double kBalanceDyMax = 0.21;

constexpr double kHumanAspect = 0.55;  // w = aspect * h
constexpr double kHumanHMin = 0.18, kHumanHMax = 0.30;
constexpr double kObjectSideMin = 0.09, kObjectSideMax = 0.15;

double quantize4(double x) { return std::round(x * 10000.0) / 10000.0; }

void quantize(Box& b) {
  b.cx = quantize4(b.cx);
  b.cy = quantize4(b.cy);
  b.w = quantize4(b.w);
  b.h = quantize4(b.h);
}

double clamp_center(double c, double half_extent) {
  const double lo = std::max(0.02 + half_extent * 0.2, 0.02);
  return std::clamp(c, lo, 1.0 - lo);
}

bool center_inside(const Box& outer, double x, double y) {
  return x > outer.x0() && x < outer.x1() && y > outer.y0() && y < outer.y1();
}

int nearest_object(const Scene& scene, int human_idx) {
  int best = -1;
  double best_d = 0.0;
  for (int o = 0; o < static_cast<int>(scene.objects.size()); ++o) {
    const double d = center_distance(scene.humans[static_cast<std::size_t>(human_idx)],
                                     scene.objects[static_cast<std::size_t>(o)].box);
    if (best < 0 || d < best_d) {
      best = o;
      best_d = d;
    }
  }
  return best;
}

}  // namespace

bool rule_predicate(int rule, const Scene& scene, int human_idx, int object_idx) {
  const Box& h = scene.humans[static_cast<std::size_t>(human_idx)];
  const Box& o = scene.objects[static_cast<std::size_t>(object_idx)].box;
  switch (rule) {
    case kHold:
      return center_inside(h, o.cx, o.cy) && o.w * o.h < h.w * h.h;
    case kNear:
      return center_distance(h, o) < kNearThresh;
    case kWatch: {
      if (nearest_object(scene, human_idx) != object_idx) return false;
      const double d = center_distance(h, o);
      return d >= kWatchMin && d <= kWatchMax;
    }
    case kTeam: {
      if (center_distance(h, o) > kTeamRadius) return false;
      int close = 0;
      for (const Box& other : scene.humans) {
        const double dx = other.cx - o.cx, dy = other.cy - o.cy;
        if (std::sqrt(dx * dx + dy * dy) <= kTeamRadius) ++close;
      }
      return close >= 2;
    }
    case kBeside: {
      const double dx = std::fabs(h.cx - o.cx), dy = std::fabs(h.cy - o.cy);
      return dy <= kBesideDy && dx > 0.0 && dx <= kBesideDx &&
             !rule_predicate(kHold, scene, human_idx, object_idx);
    }
    case kBalance: {
      const double dx = std::fabs(h.cx - o.cx);
      const double dy = h.cy - o.cy;  // positive when the object is above
      return dx <= kBalanceDx && dy >= kBalanceDyMin && dy <= kBalanceDyMax;
    }
    default:
      throw validation_error("unknown interaction rule " + std::to_string(rule));
  }
}

void SynthConfig::validate() const {
  if (grid_h * grid_w < 4) throw config_error("grid must have at least 4 cells");
  if (d_entity < 4 || d_entity % 4 != 0) throw config_error("d_entity must be a positive multiple of 4");
  if (humans_min < 1 || humans_min > humans_max) throw config_error("bad human count range");
  if (objects_min < 1 || objects_min > objects_max) throw config_error("bad object count range");
  if (n_object_classes < 1) throw config_error("need at least one object class");
  if (n_interaction_classes < 2 || n_interaction_classes > kNumRules)
    throw config_error("interaction classes must be in [2, " + std::to_string(kNumRules) + "]");
  if (noise_sigma < 0.0) throw config_error("noise sigma must be non-negative");
  if (max_pairs < 1) throw config_error("max_pairs must be >= 1");
  if (hold_motif_prob < 0 || team_motif_prob < 0 || rare_motif_prob < 0 ||
      hold_motif_prob + team_motif_prob + rare_motif_prob > 1.0)
    throw config_error("motif probabilities must be non-negative and sum to <= 1");
}

Scene generate_scene(std::int64_t seed, const SynthConfig& config) {
  config.validate();
  if (config.humans_max + config.objects_max > 24)
    throw data_error("generate_scene: too many entities for the frame");
  Rng rng(static_cast<std::uint64_t>(seed) * 0x9E3779B97F4A7C15ULL + 0xD1B54A32D192ED03ULL);

  Scene scene;
  scene.seed = seed;
  const int n_h = rng.uniform_int(config.humans_min, config.humans_max);
  const int n_o = rng.uniform_int(config.objects_min, config.objects_max);

  // humans first; later ones sometimes cluster near an earlier one so the
  // team rule has material to fire on
  for (int i = 0; i < n_h; ++i) {
    const double bh = rng.uniform(kHumanHMin, kHumanHMax);
    const double bw = kHumanAspect * bh;
    Box b;
    b.w = bw;
    b.h = bh;
    const bool cluster = i > 0 && rng.bernoulli(0.5);
    bool placed = false;
    for (int attempt = 0; attempt < 40 && !placed; ++attempt) {
      if (cluster) {
        const int anchor = rng.uniform_int(0, i - 1);
        const double ang = rng.uniform(0.0, 6.283185307179586);
        const double r = rng.uniform(0.14, 0.30);
        b.cx = clamp_center(scene.humans[static_cast<std::size_t>(anchor)].cx + r * std::cos(ang), bw / 2);
        b.cy = clamp_center(scene.humans[static_cast<std::size_t>(anchor)].cy + r * std::sin(ang), bh / 2);
      } else {
        b.cx = rng.uniform(0.10, 0.90);
        b.cy = rng.uniform(0.10, 0.90);
      }
      placed = true;
      for (const Box& other : scene.humans) {
        if (center_distance(other, b) < 0.12) {
          placed = false;
          break;
        }
      }
    }
    quantize(b);
    scene.humans.push_back(b);
  }

  for (int i = 0; i < n_o; ++i) {
    double side = rng.uniform(kObjectSideMin, kObjectSideMax);
    Box b;
    const double draw = rng.uniform();
    const double p_rare = config.rule_enabled[kBalance] && config.n_interaction_classes > kBalance
                              ? config.rare_motif_prob
                              : 0.0;
    const double p_hold = config.rule_enabled[kHold] ? config.hold_motif_prob : 0.0;
    const double p_team = config.rule_enabled[kTeam] ? config.team_motif_prob : 0.0;

    if (draw < p_rare) {
      // balance: object directly above a host human
      const int host = rng.uniform_int(0, n_h - 1);
      const Box& hb = scene.humans[static_cast<std::size_t>(host)];
      b.cx = std::clamp(hb.cx + rng.uniform(-0.005, 0.005), 0.02, 0.98);
      b.cy = std::clamp(hb.cy - rng.uniform(kBalanceDyMin + 0.005, kBalanceDyMax - 0.005), 0.02, 0.98);
    } else if (draw < p_rare + p_hold) {
      const int host = rng.uniform_int(0, n_h - 1);
      const Box& hb = scene.humans[static_cast<std::size_t>(host)];
      side = std::min(side, 0.55 * std::min(hb.w, hb.h));
      b.cx = hb.cx + rng.uniform(-0.3, 0.3) * hb.w / 2;
      b.cy = hb.cy + rng.uniform(-0.3, 0.3) * hb.h / 2;
    } else if (draw < p_rare + p_hold + p_team && n_h >= 2) {
      // drop the object between the closest pair of humans
      int bi = 0, bj = 1;
      double best = center_distance(scene.humans[0], scene.humans[1]);
      for (int a = 0; a < n_h; ++a) {
        for (int c = a + 1; c < n_h; ++c) {
          const double d = center_distance(scene.humans[static_cast<std::size_t>(a)],
                                           scene.humans[static_cast<std::size_t>(c)]);
          if (d < best) {
            best = d;
            bi = a;
            bj = c;
          }
        }
      }
      const Box& ha = scene.humans[static_cast<std::size_t>(bi)];
      const Box& hb = scene.humans[static_cast<std::size_t>(bj)];
      b.cx = std::clamp(0.5 * (ha.cx + hb.cx) + rng.uniform(-0.03, 0.03), 0.02, 0.98);
      b.cy = std::clamp(0.5 * (ha.cy + hb.cy) + rng.uniform(-0.03, 0.03), 0.02, 0.98);
    } else {
      bool placed = false;
      for (int attempt = 0; attempt < 40 && !placed; ++attempt) {
        b.cx = rng.uniform(0.08, 0.92);
        b.cy = rng.uniform(0.08, 0.92);
        placed = true;
        for (const SceneObject& other : scene.objects) {
          if (center_distance(other.box, b) < 0.10) {
            placed = false;
            break;
          }
        }
      }
    }
    b.w = side;
    b.h = side;
    quantize(b);
    scene.objects.push_back({b, rng.uniform_int(0, config.n_object_classes - 1)});
  }

  // evaluate every rule predicate over every pair, then cap distinct pairs
  std::vector<std::pair<int, int>> pair_order;
  auto pair_rank = [&](int h, int o) -> int {
    for (std::size_t i = 0; i < pair_order.size(); ++i) {
      if (pair_order[i].first == h && pair_order[i].second == o) return static_cast<int>(i);
    }
    pair_order.emplace_back(h, o);
    return static_cast<int>(pair_order.size()) - 1;
  };
  for (int h = 0; h < n_h; ++h) {
    for (int o = 0; o < n_o; ++o) {
      for (int rule = 0; rule < config.n_interaction_classes; ++rule) {
        if (!config.rule_enabled[rule]) continue;
        if (rule_predicate(rule, scene, h, o)) {
          if (pair_rank(h, o) < config.max_pairs) scene.triplets.push_back({h, o, rule});
        }
      }
    }
  }
  return scene;
}

Tensor sinusoidal_grid_embeddings(int grid_h, int grid_w, int d) {
  if (d % 4 != 0) throw config_error("sinusoidal embeddings need d divisible by 4");
  const int half = d / 2;     // y block then x block
  const int quarter = d / 4;  // sin/cos pairs per axis
  Tensor pos = Tensor::zeros({grid_h * grid_w, d});
  for (int gy = 0; gy < grid_h; ++gy) {
    for (int gx = 0; gx < grid_w; ++gx) {
      const int row = gy * grid_w + gx;
      for (int i = 0; i < quarter; ++i) {
        const double freq = std::pow(10000.0, -2.0 * i / half);
        pos.at(row, 2 * i) = std::sin(gy * freq);
        pos.at(row, 2 * i + 1) = std::cos(gy * freq);
        pos.at(row, half + 2 * i) = std::sin(gx * freq);
        pos.at(row, half + 2 * i + 1) = std::cos(gx * freq);
      }
    }
  }
  return pos;
}

namespace {

std::vector<double> class_signature(int kind_seed, int d) {
  Rng rng(static_cast<std::uint64_t>(kind_seed));
  std::vector<double> sig(static_cast<std::size_t>(d));
  for (double& v : sig) v = rng.bernoulli(0.5) ? 1.0 : -1.0;
  return sig;
}

void splat(Tensor& features, const Box& b, const std::vector<double>& sig, int grid_h, int grid_w) {
  const int d = features.dim(1);
  // floor keeps small objects visible across neighboring cells so sub-cell
  // localization has a gradient to follow
  const double sigma = std::max(0.045, 0.35 * std::sqrt(b.w * b.h));
  const double cutoff = 3.5 * sigma;
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  for (int gy = 0; gy < grid_h; ++gy) {
    const double y = (gy + 0.5) / grid_h;
    if (std::fabs(y - b.cy) > cutoff) continue;
    for (int gx = 0; gx < grid_w; ++gx) {
      const double x = (gx + 0.5) / grid_w;
      if (std::fabs(x - b.cx) > cutoff) continue;
      const double dx = x - b.cx, dy = y - b.cy;
      const double w = std::exp(-(dx * dx + dy * dy) * inv2s2);
      double* row = features.data() + static_cast<std::size_t>(gy * grid_w + gx) * d;
      for (int c = 0; c < d; ++c) row[c] += w * sig[static_cast<std::size_t>(c)];
    }
  }
}

}  // namespace

Rasterized rasterize(const Scene& scene, const SynthConfig& config) {
  config.validate();
  Rasterized out;
  out.features = Tensor::zeros({config.grid_h * config.grid_w, config.d_entity});
  const std::vector<double> human_sig = class_signature(1000, config.d_entity);
  for (const Box& b : scene.humans) splat(out.features, b, human_sig, config.grid_h, config.grid_w);
  for (const SceneObject& so : scene.objects) {
    splat(out.features, so.box, class_signature(2000 + so.cls, config.d_entity), config.grid_h,
          config.grid_w);
  }
  if (config.noise_sigma > 0.0) {
    Rng rng(static_cast<std::uint64_t>(scene.seed) ^ 0xA5A5A5A55A5A5A5AULL);
    for (double& v : out.features.vec()) v += rng.normal(0.0, config.noise_sigma);
  }
  out.pos = sinusoidal_grid_embeddings(config.grid_h, config.grid_w, config.d_entity);
  return out;
}

std::vector<GtPair> scene_gt_pairs(const Scene& scene, int n_interaction_classes) {
  std::vector<GtPair> pairs;
  std::vector<std::pair<int, int>> keys;
  for (const Triplet& t : scene.triplets) {
    if (t.interaction < 0 || t.interaction >= n_interaction_classes)
      throw data_error("triplet interaction id out of range");
    int idx = -1;
    for (std::size_t i = 0; i < keys.size(); ++i) {
      if (keys[i].first == t.human && keys[i].second == t.object) {
        idx = static_cast<int>(i);
        break;
      }
    }
    if (idx < 0) {
      keys.emplace_back(t.human, t.object);
      GtPair p;
      p.human = scene.humans.at(static_cast<std::size_t>(t.human));
      const SceneObject& so = scene.objects.at(static_cast<std::size_t>(t.object));
      p.object = so.box;
      p.object_class = so.cls;
      pairs.push_back(std::move(p));
      idx = static_cast<int>(pairs.size()) - 1;
    }
    pairs[static_cast<std::size_t>(idx)].interactions.push_back(t.interaction);
  }
  return pairs;
}

namespace {

void append_box(std::string& line, const Box& b) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "[%.4f,%.4f,%.4f,%.4f", b.cx, b.cy, b.w, b.h);
  line += buf;
}

}  // namespace

void write_scenes(const std::string& path, const std::vector<Scene>& scenes,
                  const SynthConfig& config) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot open " + path + " for writing");
  out << "{\"schema\":\"groupdet-scenes\",\"version\":1,\"grid_h\":" << config.grid_h
      << ",\"grid_w\":" << config.grid_w << ",\"object_classes\":" << config.n_object_classes
      << ",\"interaction_classes\":" << config.n_interaction_classes << "}\n";
  std::string line;
  for (const Scene& s : scenes) {
    line.clear();
    line += "{\"seed\":" + std::to_string(s.seed) + ",\"humans\":[";
    for (std::size_t i = 0; i < s.humans.size(); ++i) {
      if (i) line += ",";
      append_box(line, s.humans[i]);
      line += "]";
    }
    line += "],\"objects\":[";
    for (std::size_t i = 0; i < s.objects.size(); ++i) {
      if (i) line += ",";
      append_box(line, s.objects[i].box);
      line += "," + std::to_string(s.objects[i].cls) + "]";
    }
    line += "],\"triplets\":[";
    for (std::size_t i = 0; i < s.triplets.size(); ++i) {
      if (i) line += ",";
      line += "[" + std::to_string(s.triplets[i].human) + "," + std::to_string(s.triplets[i].object) +
              "," + std::to_string(s.triplets[i].interaction) + "]";
    }
    line += "]}\n";
    out << line;
  }
  if (!out) throw data_error("write failed for " + path);
}

std::vector<Scene> read_scenes(const std::string& path, const SynthConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw data_error(path + ": missing header line");
  nlohmann::json header = nlohmann::json::parse(line, nullptr, false);
  if (header.is_discarded() || header.value("schema", "") != "groupdet-scenes" ||
      header.value("version", 0) != 1)
    throw data_error(path + ": not a groupdet-scenes v1 file");
  if (header.value("grid_h", 0) != config.grid_h || header.value("grid_w", 0) != config.grid_w ||
      header.value("object_classes", 0) != config.n_object_classes ||
      header.value("interaction_classes", 0) != config.n_interaction_classes)
    throw data_error(path + ": dataset header does not match the configuration");

  std::vector<Scene> scenes;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw data_error(path + ": bad JSON at line " + std::to_string(line_no));
    Scene s;
    s.seed = j.at("seed").get<std::int64_t>();
    for (const auto& hb : j.at("humans")) {
      Box b{hb.at(0).get<double>(), hb.at(1).get<double>(), hb.at(2).get<double>(),
            hb.at(3).get<double>()};
      b.validate();
      s.humans.push_back(b);
    }
    for (const auto& ob : j.at("objects")) {
      Box b{ob.at(0).get<double>(), ob.at(1).get<double>(), ob.at(2).get<double>(),
            ob.at(3).get<double>()};
      b.validate();
      const int cls = ob.at(4).get<int>();
      if (cls < 0 || cls >= config.n_object_classes)
        throw data_error(path + ": object class out of range at line " + std::to_string(line_no));
      s.objects.push_back({b, cls});
    }
    for (const auto& tr : j.at("triplets")) {
      Triplet t{tr.at(0).get<int>(), tr.at(1).get<int>(), tr.at(2).get<int>()};
      if (t.human < 0 || t.human >= static_cast<int>(s.humans.size()) || t.object < 0 ||
          t.object >= static_cast<int>(s.objects.size()) || t.interaction < 0 ||
          t.interaction >= config.n_interaction_classes)
        throw data_error(path + ": triplet index out of range at line " + std::to_string(line_no));
      s.triplets.push_back(t);
    }
    scenes.push_back(std::move(s));
  }
  return scenes;
}

void write_meta(const std::string& path, const SplitMeta& meta) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot open " + path + " for writing");
  nlohmann::json j;
  j["schema"] = "groupdet-meta";
  j["version"] = 1;
  j["n_train"] = meta.n_train;
  j["n_val"] = meta.n_val;
  j["train_counts"] = meta.train_counts;
  j["rare"] = meta.rare;
  out << j.dump() << "\n";
}

SplitMeta read_meta(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw data_error(path + ": " + e.what());
  }
  if (j.value("schema", "") != "groupdet-meta" || j.value("version", 0) != 1)
    throw data_error(path + ": not a groupdet-meta v1 file");
  SplitMeta meta;
  meta.n_train = j.at("n_train").get<int>();
  meta.n_val = j.at("n_val").get<int>();
  meta.train_counts = j.at("train_counts").get<std::vector<int>>();
  meta.rare = j.at("rare").get<std::vector<int>>();
  return meta;
}

SplitPaths make_splits(const SynthConfig& config, int n_train, int n_val, std::int64_t base_seed,
                       const std::string& out_dir, SplitMeta* meta_out) {
  if (n_train < 1 || n_val < 1) throw config_error("split sizes must be >= 1");
  std::filesystem::create_directories(out_dir);

  std::vector<Scene> train, val;
  train.reserve(static_cast<std::size_t>(n_train));
  val.reserve(static_cast<std::size_t>(n_val));
  for (int i = 0; i < n_train; ++i) train.push_back(generate_scene(base_seed + i, config));
  for (int i = 0; i < n_val; ++i) val.push_back(generate_scene(base_seed + n_train + i, config));

  SplitMeta meta;
  meta.n_train = n_train;
  meta.n_val = n_val;
  meta.train_counts.assign(static_cast<std::size_t>(config.n_interaction_classes), 0);
  for (const Scene& s : train) {
    for (const Triplet& t : s.triplets) ++meta.train_counts[static_cast<std::size_t>(t.interaction)];
  }
  for (int c = 0; c < config.n_interaction_classes; ++c) {
    if (meta.train_counts[static_cast<std::size_t>(c)] < 10) meta.rare.push_back(c);
  }

  SplitPaths paths;
  paths.train_file = (std::filesystem::path(out_dir) / "train.jsonl").string();
  paths.val_file = (std::filesystem::path(out_dir) / "val.jsonl").string();
  paths.meta_file = (std::filesystem::path(out_dir) / "meta.json").string();
  write_scenes(paths.train_file, train, config);
  write_scenes(paths.val_file, val, config);
  write_meta(paths.meta_file, meta);
  if (meta_out != nullptr) *meta_out = meta;
  return paths;
}

}  // namespace groupdet
