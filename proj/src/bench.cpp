#include "groupdet/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "groupdet/train.hpp"

namespace groupdet {

namespace {

// 2*m*n*k per matmul; elementwise work is ignored (it is dominated here).
double mm(double m, double k, double n) { return 2.0 * m * k * n; }

double attention_flops(double nq, double nk, double d) {
  double f = 0.0;
  f += mm(nq, d, d);            // q projection
  f += 2.0 * mm(nk, d, d);      // k, v projections
  f += 2.0 * mm(nq, d, nk);     // scores and value mix (all heads combined)
  f += mm(nq, d, d);            // output projection
  return f;
}

}  // namespace

BenchReport bench_run(const RunConfig& cfg) {
  cfg.validate();
  BenchReport report;
  const ModelConfig& m = cfg.model;
  const double t = static_cast<double>(cfg.synth.grid_h * cfg.synth.grid_w);
  const double d = m.d_entity;
  const double di = m.d_interaction();
  const double q = m.n_queries;
  const double hidden = static_cast<double>(m.ffn_mult) * d;
  const double hidden_i = static_cast<double>(m.ffn_mult) * di;
  const double kg = std::min<double>(m.k_geometric, std::max(0.0, q - 1.0));
  const double ks = std::min<double>(m.k_semantic, std::max(0.0, q - 1.0));

  report.flops_encoder =
      m.encoder_layers * (attention_flops(t, t, d) + mm(t, d, hidden) + mm(t, hidden, d));

  const int geo_layer_count =
      m.use_geo ? (m.geo_layers < 0 ? m.instance_decoder_layers
                                    : std::min(m.geo_layers, m.instance_decoder_layers))
                : 0;
  double geo_per_layer = 0.0;
  {
    const double per_entity = 2.0 * mm(kg, d, d)   // delta (two layers)
                              + 2.0 * mm(kg, d, d) // gamma (two layers)
                              + 2.0 * mm(kg, d, d) // phi2, phi3
                              + 2.0 * mm(1, d, d); // phi1, theta
    geo_per_layer = 2.0 * q * per_entity + mm(2.0 * q, d, 4);  // + box heads for grouping
  }
  report.flops_instance_decoder =
      m.instance_decoder_layers *
          (attention_flops(2.0 * q, 2.0 * q, d) + attention_flops(2.0 * q, t, d) +
           mm(2.0 * q, d, hidden) + mm(2.0 * q, hidden, d)) +
      geo_layer_count * geo_per_layer;

  const int sem_layer_count =
      m.use_sem ? (m.sem_layers < 0 ? m.interaction_decoder_layers
                                    : std::min(m.sem_layers, m.interaction_decoder_layers))
                : 0;
  const double sem_per_layer =
      q * (mm(ks, 2.0 * di, di) + mm(ks, di, di) + 2.0 * mm(1, di, di));
  report.flops_interaction_decoder =
      m.interaction_decoder_layers *
          (attention_flops(q, q, di) + attention_flops(q, t, di) + mm(q, di, hidden_i) +
           mm(q, hidden_i, di)) +
      sem_layer_count * sem_per_layer;

  report.flops_heads = 2.0 * mm(q, d, 4) + mm(q, d, m.n_object_classes + 1) +
                       mm(q, di, m.n_interaction_classes);
  report.flops_total = report.flops_encoder + report.flops_instance_decoder +
                       report.flops_interaction_decoder + report.flops_heads;

  Model model(m, cfg.seed);
  report.param_count = model.params().total_parameters();

  const Scene scene = generate_scene(static_cast<std::int64_t>(cfg.seed), cfg.synth);
  const Rasterized r = rasterize(scene, cfg.synth);
  for (int i = 0; i < cfg.bench_warmup; ++i) {
    predict_scene(model, scene, r.features, r.pos, cfg.nms_iou, cfg.eval_top_k);
  }
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < cfg.bench_runs; ++i) {
    predict_scene(model, scene, r.features, r.pos, cfg.nms_iou, cfg.eval_top_k);
  }
  const auto end = std::chrono::steady_clock::now();
  const double seconds = std::chrono::duration<double>(end - start).count();
  report.runs = cfg.bench_runs;
  report.scenes_per_sec = seconds > 0.0 ? cfg.bench_runs / seconds : 0.0;
  return report;
}

void write_bench_csv(const std::string& path, const BenchReport& report) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot open " + path + " for writing");
  char buf[96];
  out << "metric,value\n";
  out << "params," << report.param_count << "\n";
  std::snprintf(buf, sizeof(buf), "flops_encoder,%.0f\n", report.flops_encoder);
  out << buf;
  std::snprintf(buf, sizeof(buf), "flops_instance_decoder,%.0f\n", report.flops_instance_decoder);
  out << buf;
  std::snprintf(buf, sizeof(buf), "flops_interaction_decoder,%.0f\n",
                report.flops_interaction_decoder);
  out << buf;
  std::snprintf(buf, sizeof(buf), "flops_heads,%.0f\n", report.flops_heads);
  out << buf;
  std::snprintf(buf, sizeof(buf), "flops_total,%.0f\n", report.flops_total);
  out << buf;
  std::snprintf(buf, sizeof(buf), "scenes_per_sec,%.3f\n", report.scenes_per_sec);
  out << buf;
  out << "runs," << report.runs << "\n";
}

}  // namespace groupdet
