#pragma once

#include <string>

#include "groupdet/config.hpp"

namespace groupdet {

struct BenchReport {
  std::size_t param_count = 0;
  double flops_encoder = 0.0;
  double flops_instance_decoder = 0.0;
  double flops_interaction_decoder = 0.0;
  double flops_heads = 0.0;
  double flops_total = 0.0;
  double scenes_per_sec = 0.0;
  int runs = 0;
};

// Exact parameter count, analytic matmul-FLOP estimate for one forward pass,
// and measured single-scene inference throughput (warmup + timed runs).
BenchReport bench_run(const RunConfig& cfg);

// metric,value rows
void write_bench_csv(const std::string& path, const BenchReport& report);

}  // namespace groupdet
