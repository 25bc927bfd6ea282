#include "groupdet/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

namespace groupdet {

std::vector<Prediction> pairwise_nms(const std::vector<Prediction>& preds, double iou_thr,
                                     int top_k) {
  std::vector<int> order(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return preds[static_cast<std::size_t>(a)].score > preds[static_cast<std::size_t>(b)].score;
  });
  std::vector<Prediction> kept;
  for (int idx : order) {
    const Prediction& cand = preds[static_cast<std::size_t>(idx)];
    bool suppressed = false;
    for (const Prediction& k : kept) {
      if (k.interaction != cand.interaction) continue;
      if (iou(k.human, cand.human) > iou_thr && iou(k.object, cand.object) > iou_thr) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(cand);
  }
  if (top_k >= 0 && static_cast<int>(kept.size()) > top_k)
    kept.resize(static_cast<std::size_t>(top_k));
  return kept;
}

std::vector<bool> match_predictions(const std::vector<Prediction>& preds,
                                    const std::vector<GtTriplet>& gts, double iou_thr) {
  std::vector<bool> flags(preds.size(), false);
  std::vector<bool> taken(gts.size(), false);
  for (std::size_t p = 0; p < preds.size(); ++p) {
    const Prediction& pred = preds[p];
    int best_gt = -1;
    double best_sum = -1.0;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      const GtTriplet& gt = gts[g];
      if (gt.interaction != pred.interaction) continue;
      const double iou_h = iou(pred.human, gt.human);
      if (iou_h < iou_thr) continue;
      const double iou_o = iou(pred.object, gt.object);
      if (iou_o < iou_thr) continue;
      const double sum = iou_h + iou_o;
      if (sum > best_sum) {
        best_sum = sum;
        best_gt = static_cast<int>(g);
      }
    }
    if (best_gt >= 0) {
      flags[p] = true;
      taken[static_cast<std::size_t>(best_gt)] = true;
    }
  }
  return flags;
}

double average_precision(const std::vector<bool>& flags, int n_gt, bool eleven_point) {
  if (n_gt <= 0) throw validation_error("average_precision: class has no ground truth");
  std::vector<double> precision, recall;
  int tp = 0;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    if (flags[i]) ++tp;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(i + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(n_gt));
  }
  // precision envelope: best precision at recall >= r
  std::vector<double> env = precision;
  for (int i = static_cast<int>(env.size()) - 2; i >= 0; --i)
    env[static_cast<std::size_t>(i)] = std::max(env[static_cast<std::size_t>(i)], env[static_cast<std::size_t>(i) + 1]);

  if (eleven_point) {
    double total = 0.0;
    for (int k = 0; k <= 10; ++k) {
      const double r = k / 10.0;
      double best = 0.0;
      for (std::size_t i = 0; i < recall.size(); ++i) {
        if (recall[i] >= r) {
          best = env[i];
          break;
        }
      }
      total += best;
    }
    return total / 11.0;
  }

  double ap = 0.0;
  double prev_recall = 0.0;
  for (std::size_t i = 0; i < recall.size(); ++i) {
    if (recall[i] > prev_recall) {
      ap += (recall[i] - prev_recall) * env[i];
      prev_recall = recall[i];
    }
  }
  return ap;
}

std::vector<GtTriplet> scene_gt_triplets(const Scene& scene) {
  std::vector<GtTriplet> out;
  out.reserve(scene.triplets.size());
  for (const Triplet& t : scene.triplets) {
    GtTriplet g;
    g.scene_seed = scene.seed;
    g.human = scene.humans.at(static_cast<std::size_t>(t.human));
    const SceneObject& so = scene.objects.at(static_cast<std::size_t>(t.object));
    g.object = so.box;
    g.object_class = so.cls;
    g.interaction = t.interaction;
    out.push_back(g);
  }
  return out;
}

EvalReport evaluate_predictions(const std::vector<Prediction>& preds,
                                const std::vector<GtTriplet>& gts, int n_interaction_classes,
                                const std::vector<int>& rare_classes, double iou_thr,
                                bool eleven_point) {
  EvalReport report;
  report.ap.resize(static_cast<std::size_t>(n_interaction_classes));
  report.n_gt.assign(static_cast<std::size_t>(n_interaction_classes), 0);
  report.rare.assign(static_cast<std::size_t>(n_interaction_classes), false);
  for (int c : rare_classes) {
    if (c >= 0 && c < n_interaction_classes) report.rare[static_cast<std::size_t>(c)] = true;
  }
  for (const GtTriplet& g : gts) ++report.n_gt[static_cast<std::size_t>(g.interaction)];

  // per-scene, per-class TP flags; then pooled per class across scenes
  std::map<std::int64_t, std::vector<int>> preds_by_scene;
  for (std::size_t i = 0; i < preds.size(); ++i)
    preds_by_scene[preds[i].scene_seed].push_back(static_cast<int>(i));
  std::map<std::int64_t, std::vector<GtTriplet>> gts_by_scene;
  for (const GtTriplet& g : gts) gts_by_scene[g.scene_seed].push_back(g);

  struct Scored {
    double score;
    std::int64_t seed;
    int order;
    bool tp;
  };
  std::vector<std::vector<Scored>> pooled(static_cast<std::size_t>(n_interaction_classes));
  for (auto& [seed, idxs] : preds_by_scene) {
    std::stable_sort(idxs.begin(), idxs.end(), [&](int a, int b) {
      return preds[static_cast<std::size_t>(a)].score > preds[static_cast<std::size_t>(b)].score;
    });
    std::vector<Prediction> scene_preds;
    scene_preds.reserve(idxs.size());
    for (int i : idxs) scene_preds.push_back(preds[static_cast<std::size_t>(i)]);
    const auto git = gts_by_scene.find(seed);
    static const std::vector<GtTriplet> kNoGt;
    const std::vector<bool> flags =
        match_predictions(scene_preds, git == gts_by_scene.end() ? kNoGt : git->second, iou_thr);
    for (std::size_t i = 0; i < scene_preds.size(); ++i) {
      const int c = scene_preds[i].interaction;
      if (c < 0 || c >= n_interaction_classes) throw data_error("prediction class out of range");
      pooled[static_cast<std::size_t>(c)].push_back(
          {scene_preds[i].score, seed, static_cast<int>(i), flags[i]});
    }
  }

  double full_sum = 0.0, rare_sum = 0.0, nonrare_sum = 0.0;
  int full_n = 0, rare_n = 0, nonrare_n = 0;
  for (int c = 0; c < n_interaction_classes; ++c) {
    if (report.n_gt[static_cast<std::size_t>(c)] == 0) continue;  // class skipped, not zero-filled
    auto& rows = pooled[static_cast<std::size_t>(c)];
    std::sort(rows.begin(), rows.end(), [](const Scored& a, const Scored& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.seed != b.seed) return a.seed < b.seed;
      return a.order < b.order;
    });
    std::vector<bool> flags;
    flags.reserve(rows.size());
    for (const Scored& r : rows) flags.push_back(r.tp);
    const double ap = average_precision(flags, report.n_gt[static_cast<std::size_t>(c)], eleven_point);
    report.ap[static_cast<std::size_t>(c)] = ap;
    full_sum += ap;
    ++full_n;
    if (report.rare[static_cast<std::size_t>(c)]) {
      rare_sum += ap;
      ++rare_n;
    } else {
      nonrare_sum += ap;
      ++nonrare_n;
    }
  }
  if (full_n > 0) report.map_full = full_sum / full_n;
  if (rare_n > 0) report.map_rare = rare_sum / rare_n;
  if (nonrare_n > 0) report.map_nonrare = nonrare_sum / nonrare_n;
  return report;
}

void write_predictions(const std::string& path, const std::vector<Prediction>& preds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot open " + path + " for writing");
  char buf[256];
  for (const Prediction& p : preds) {
    std::snprintf(buf, sizeof(buf),
                  "{\"seed\":%lld,\"human\":[%.6f,%.6f,%.6f,%.6f],\"object\":[%.6f,%.6f,%.6f,%.6f],"
                  "\"object_class\":%d,\"interaction\":%d,\"score\":%.6f}\n",
                  static_cast<long long>(p.scene_seed), p.human.cx, p.human.cy, p.human.w, p.human.h,
                  p.object.cx, p.object.cy, p.object.w, p.object.h, p.object_class, p.interaction,
                  p.score);
    out << buf;
  }
}

void write_eval_csv(const std::string& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot open " + path + " for writing");
  out << "class_id,ap,n_gt,rare\n";
  char buf[128];
  int total_gt = 0, n_rare = 0;
  for (std::size_t c = 0; c < report.ap.size(); ++c) {
    total_gt += report.n_gt[c];
    if (report.rare[c]) ++n_rare;
    if (report.ap[c].has_value()) {
      std::snprintf(buf, sizeof(buf), "%zu,%.6f,%d,%d\n", c, *report.ap[c], report.n_gt[c],
                    report.rare[c] ? 1 : 0);
    } else {
      std::snprintf(buf, sizeof(buf), "%zu,,%d,%d\n", c, report.n_gt[c], report.rare[c] ? 1 : 0);
    }
    out << buf;
  }
  std::snprintf(buf, sizeof(buf), "-1,%.6f,%d,%d\n", report.map_full.value_or(0.0), total_gt,
                n_rare);
  out << buf;
}

}  // namespace groupdet
