// Command-line front end: data generation, training, evaluation, gradient
// checking, ablation sweeps, and benchmarking over a flat key=value config.
//
// Exit codes: 0 ok, 1 unexpected failure, 2 config error, 3 data error,
// 4 numeric abort.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "groupdet/bench.hpp"
#include "groupdet/checks.hpp"
#include "groupdet/config.hpp"
#include "groupdet/train.hpp"

namespace {

using namespace groupdet;

RunConfig load_config(const std::string& path, std::uint64_t* seed_override,
                      const std::string& out_override) {
  RunConfig cfg = path.empty() ? RunConfig() : RunConfig::from_file(path);
  if (seed_override != nullptr) cfg.seed = *seed_override;
  if (!out_override.empty()) cfg.out_dir = out_override;
  cfg.validate();
  return cfg;
}

int cmd_gen_data(const RunConfig& cfg) {
  SplitMeta meta;
  const SplitPaths paths = make_splits(cfg.synth, cfg.n_train, cfg.n_val,
                                       static_cast<std::int64_t>(cfg.seed), cfg.out_dir, &meta);
  std::cout << "train: " << paths.train_file << " (" << meta.n_train << " scenes)\n";
  std::cout << "val:   " << paths.val_file << " (" << meta.n_val << " scenes)\n";
  std::cout << "meta:  " << paths.meta_file << "\n";
  std::cout << "train triplet counts per interaction class:\n";
  for (std::size_t c = 0; c < meta.train_counts.size(); ++c) {
    const bool rare = std::find(meta.rare.begin(), meta.rare.end(), static_cast<int>(c)) != meta.rare.end();
    std::cout << "  class " << c << ": " << meta.train_counts[c] << (rare ? "  (rare)" : "") << "\n";
  }
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const TrainResult result = train_run(cfg);
  if (!result.steps.empty()) {
    std::printf("steps: %zu  first loss: %.6f  last loss: %.6f\n", result.steps.size(),
                result.steps.front().total, result.steps.back().total);
  }
  std::printf("final val mAP (Full): %.6f\n", result.final_val_map);
  std::cout << "checkpoint: " << result.checkpoint_path << "\n";
  std::cout << "log:        " << result.log_path << "\n";
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& ablate) {
  AblateMode mode = AblateMode::kNone;
  if (ablate == "no-geo") {
    mode = AblateMode::kNoGeo;
  } else if (ablate == "no-sem") {
    mode = AblateMode::kNoSem;
  } else if (!ablate.empty() && ablate != "none") {
    throw config_error("--ablate must be one of none, no-geo, no-sem");
  }
  const EvalRunResult result = eval_run(cfg, mode);
  auto show = [](const char* name, const std::optional<double>& v) {
    if (v.has_value())
      std::printf("%s: %.6f\n", name, *v);
    else
      std::printf("%s: absent\n", name);
  };
  show("mAP Full", result.report.map_full);
  show("mAP Rare", result.report.map_rare);
  show("mAP Non-Rare", result.report.map_nonrare);
  std::cout << "report:      " << result.csv_path << "\n";
  std::cout << "predictions: " << result.predictions_path << "\n";
  return 0;
}

int cmd_gradcheck(const RunConfig& cfg) {
  const std::vector<GradCheckReport> reports = run_gradcheck_suite(cfg.gc_h, cfg.gc_tol, cfg.gc_seed);
  bool all_pass = true;
  std::printf("%-24s %-12s %s\n", "check", "max_rel_err", "status");
  for (const GradCheckReport& r : reports) {
    if (!r.failure.empty()) {
      std::printf("%-24s %-12s FAIL (%s)\n", r.name.c_str(), "-", r.failure.c_str());
      all_pass = false;
      continue;
    }
    std::printf("%-24s %-12.3e %s\n", r.name.c_str(), r.max_rel_err, r.pass ? "pass" : "FAIL");
    if (!r.pass) {
      std::printf("    worst: %s[%zu] analytic=%.9g numeric=%.9g\n", r.worst_param.c_str(),
                  r.worst_index, r.analytic, r.numeric);
      all_pass = false;
    }
  }
  return all_pass ? 0 : 1;
}

int cmd_sweep(const RunConfig& cfg) {
  const SweepResult result = sweep_run(cfg);
  for (const SweepRow& row : result.rows) {
    std::cout << result.axis << "=" << row.value << "  mAP Full=" << row.map_full << "\n";
  }
  std::cout << "sweep table: " << result.csv_path << "\n";
  return 0;
}

int cmd_bench(const RunConfig& cfg) {
  const BenchReport report = bench_run(cfg);
  std::filesystem::create_directories(cfg.out_dir);
  const std::string csv_path = (std::filesystem::path(cfg.out_dir) / "bench.csv").string();
  write_bench_csv(csv_path, report);
  std::printf("params: %zu\n", report.param_count);
  std::printf("flops (one forward): %.3e\n", report.flops_total);
  std::printf("scenes/sec: %.3f over %d runs\n", report.scenes_per_sec, report.runs);
  std::cout << "table: " << csv_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"groupdet: group-aware HOI detection on synthetic desk-scale scenes"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string ablate;
  std::uint64_t seed = 0;
  bool seed_set = false;

  auto add_common = [&](CLI::App* sub, bool with_ablate) {
    sub->add_option("--config", config_path, "key=value config file");
    sub->add_option("--out", out_dir, "output directory (overrides config out_dir)");
    sub->add_option("--seed", seed, "seed override")->each([&](const std::string&) { seed_set = true; });
    if (with_ablate) sub->add_option("--ablate", ablate, "none | no-geo | no-sem");
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate train/val scene files");
  CLI::App* train = app.add_subcommand("train", "train and checkpoint a model");
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on the val split");
  CLI::App* grad = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  CLI::App* sweep = app.add_subcommand("sweep", "train/eval across one config axis");
  CLI::App* bench = app.add_subcommand("bench", "parameter count, FLOPs, throughput");
  add_common(gen, false);
  add_common(train, false);
  add_common(eval, true);
  add_common(grad, false);
  add_common(sweep, false);
  add_common(bench, false);

  CLI11_PARSE(app, argc, argv);

  try {
    const groupdet::RunConfig cfg = load_config(config_path, seed_set ? &seed : nullptr, out_dir);
    if (gen->parsed()) return cmd_gen_data(cfg);
    if (train->parsed()) return cmd_train(cfg);
    if (eval->parsed()) return cmd_eval(cfg, ablate);
    if (grad->parsed()) return cmd_gradcheck(cfg);
    if (sweep->parsed()) return cmd_sweep(cfg);
    if (bench->parsed()) return cmd_bench(cfg);
  } catch (const groupdet::config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const groupdet::data_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const groupdet::numeric_error& e) {
    std::cerr << "numeric abort: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
