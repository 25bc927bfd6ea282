#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "groupdet/train.hpp"
#include "json.hpp"

using namespace groupdet;

namespace {

RunConfig tiny_run(const std::string& dir) {
  RunConfig cfg;
  cfg.model.d_entity = 8;
  cfg.synth.d_entity = 8;
  cfg.model.n_queries = 8;
  cfg.synth.max_pairs = 8;
  cfg.model.encoder_layers = 1;
  cfg.model.instance_decoder_layers = 1;
  cfg.model.interaction_decoder_layers = 1;
  cfg.synth.grid_h = 8;
  cfg.synth.grid_w = 8;
  cfg.synth.humans_max = 2;
  cfg.synth.objects_max = 2;
  cfg.n_train = 8;
  cfg.n_val = 4;
  cfg.train_steps = 4;
  cfg.batch_size = 2;
  cfg.val_every_epochs = 50;
  cfg.out_dir = dir;
  cfg.validate();
  return cfg;
}

}  // namespace

TEST_CASE("training run writes a hash-stamped log, checkpoint, and eval outputs") {
  const std::string dir =
      (std::filesystem::temp_directory_path() / "groupdet_test_train").string();
  std::filesystem::create_directories(dir);
  RunConfig cfg = tiny_run(dir);

  make_splits(cfg.synth, cfg.n_train, cfg.n_val, static_cast<std::int64_t>(cfg.seed), cfg.out_dir);
  const TrainResult result = train_run(cfg);
  CHECK(result.steps.size() == 4);

  // first log line embeds the config hash and canonical text
  std::ifstream log(result.log_path);
  std::string first;
  REQUIRE(std::getline(log, first));
  nlohmann::json header = nlohmann::json::parse(first);
  char hash[32];
  std::snprintf(hash, sizeof(hash), "%016llx", static_cast<unsigned long long>(cfg.hash()));
  CHECK(header.at("config_hash").get<std::string>() == hash);
  CHECK(header.at("config_text").get<std::string>() == cfg.canonical_text());

  // epochs = 0: the checkpoint holds the initial parameters only
  {
    RunConfig zero = cfg;
    zero.train_steps = 0;
    zero.out_dir = dir + "/zero";
    std::filesystem::create_directories(zero.out_dir);
    zero.train_file = cfg.resolved_train_file();
    zero.val_file = cfg.resolved_val_file();
    zero.meta_file = cfg.resolved_meta_file();
    const TrainResult untrained = train_run(zero);
    Model fresh(zero.model, zero.seed);
    Model loaded(zero.model, zero.seed + 1);  // different init, then restored
    load_checkpoint(untrained.checkpoint_path, loaded.params(), zero.model.arch_string());
    for (const std::string& name : fresh.params().names()) {
      REQUIRE(loaded.params().get(name).vec() == fresh.params().get(name).vec());
    }
  }

  // eval consumes the checkpoint and writes the protocol outputs
  const EvalRunResult eval = eval_run(cfg, AblateMode::kNone);
  CHECK(std::filesystem::exists(eval.csv_path));
  CHECK(std::filesystem::exists(eval.predictions_path));

  // eval is repeatable byte for byte
  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
  };
  const std::string csv1 = slurp(eval.csv_path);
  eval_run(cfg, AblateMode::kNone);
  CHECK(slurp(eval.csv_path) == csv1);

  // missing checkpoint is a data error
  RunConfig missing = cfg;
  missing.checkpoint = dir + "/nope.ckpt";
  CHECK_THROWS_AS(eval_run(missing, AblateMode::kNone), data_error);
}

TEST_CASE("ablate modes bypass modules at evaluation time") {
  const std::string dir =
      (std::filesystem::temp_directory_path() / "groupdet_test_ablate").string();
  std::filesystem::create_directories(dir);
  RunConfig cfg = tiny_run(dir);
  make_splits(cfg.synth, cfg.n_train, cfg.n_val, static_cast<std::int64_t>(cfg.seed), cfg.out_dir);
  train_run(cfg);
  const EvalRunResult full = eval_run(cfg, AblateMode::kNone);
  const EvalRunResult nogeo = eval_run(cfg, AblateMode::kNoGeo);
  const EvalRunResult nosem = eval_run(cfg, AblateMode::kNoSem);
  // same checkpoint loads everywhere; scores change when a module is bypassed
  REQUIRE(!full.predictions.empty());
  REQUIRE(!nogeo.predictions.empty());
  bool geo_differs = full.predictions.size() != nogeo.predictions.size();
  for (std::size_t i = 0; !geo_differs && i < full.predictions.size(); ++i) {
    if (full.predictions[i].score != nogeo.predictions[i].score) geo_differs = true;
  }
  bool sem_differs = full.predictions.size() != nosem.predictions.size();
  for (std::size_t i = 0; !sem_differs && i < full.predictions.size(); ++i) {
    if (full.predictions[i].score != nosem.predictions[i].score) sem_differs = true;
  }
  CHECK(geo_differs);
  CHECK(sem_differs);
}
