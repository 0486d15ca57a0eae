#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "uarpo/dataset.hpp"
#include "uarpo/errors.hpp"
#include "uarpo/train.hpp"

namespace uarpo {

// One flat schema covers every subcommand; a config file sets keys inside
// [section] blocks, --set overrides take the full dotted name. Unknown keys
// are rejected.
struct KeySpec {
  const char* key;
  const char* def;
  const char* doc;
};

inline const std::vector<KeySpec>& config_schema() {
  static const std::vector<KeySpec> schema = {
      {"seed", "0", "global RNG seed used by gen-data, train and eval"},
      // data
      {"data.out_dir", "data", "dataset output directory"},
      {"data.quantities", "price,volatility", "prediction quantities to cover"},
      {"data.horizons", "5,21,63", "prediction horizons in periods"},
      {"data.lengths", "128", "lookback window lengths (32..512)"},
      {"data.styles", "line-thin", "chart styles: line-thin|line-thick|filled-area"},
      {"data.difficulties", "learnable,noise", "sample kinds: learnable|noise"},
      {"data.count_per_stratum", "10", "samples per stratum (0 warns and writes nothing)"},
      {"data.train_fraction", "0.8", "fraction of each stratum assigned to train"},
      {"data.image_height", "64", "chart height in pixels"},
      {"data.image_width", "96", "chart width in pixels"},
      {"data.learnable_mode", "trend",
       "learnable continuation: trend (extends drift) or reverse (flips it)"},
      {"data.learnable_drift", "0.004", "per-period drift magnitude of learnable samples"},
      {"data.noise_vol", "0.02", "per-period volatility of noise samples"},
      {"data.frequency_tag", "daily", "frequency label stored with each sample"},
      {"data.features", "close", "chart features: close[,volume][,moving-average]"},
      {"data.csv_path", "", "optional OHLC CSV; samples become windows of it"},
      {"data.csv_time_col", "timestamp", "CSV timestamp column name"},
      {"data.csv_close_col", "close", "CSV close column name"},
      // model
      {"model.image_height", "0", "policy image height (0: take from dataset)"},
      {"model.image_width", "0", "policy image width (0: take from dataset)"},
      {"model.patch", "8", "square patch size"},
      {"model.d_model", "64", "embedding width"},
      {"model.n_blocks", "2", "decoder blocks"},
      {"model.ffn_mult", "4", "feed-forward width multiplier"},
      {"model.max_len", "64", "maximum generated tokens"},
      // rewards
      {"rewards.w_acc", "1.0", "accuracy reward weight"},
      {"rewards.w_fmt", "0.25", "format reward weight"},
      {"rewards.w_len", "0.25", "completion length reward weight"},
      {"rewards.length_cap", "16", "think tokens at which the length ramp saturates"},
      // train
      {"train.dataset", "data", "dataset directory (holding manifest.jsonl)"},
      {"train.out_dir", "run", "training output directory"},
      {"train.mode", "uarpo", "objective mode: uarpo|grpo"},
      {"train.iterations", "1", "outer iterations (reference-policy refreshes)"},
      {"train.steps_per_iter", "100", "steps per iteration"},
      {"train.inner_epochs", "1", "optimization epochs per step"},
      {"train.batch_size", "4", "questions per step"},
      {"train.group_size", "8", "rollouts per question"},
      {"train.stack_len", "8", "cross-group window length L"},
      {"train.clip_eps", "0.2", "surrogate clip radius"},
      {"train.kl_beta", "0.04", "KL penalty weight"},
      {"train.alpha", "1.0", "uncertainty coefficient (0 disables the adjustment)"},
      {"train.confidence_const", "0.0", "uncertainty offset"},
      {"train.temperature", "1.0", "sampling temperature during training"},
      {"train.max_len", "0", "sampling cap (0: model.max_len)"},
      {"train.lr", "3e-4", "Adam learning rate"},
      {"train.adam_beta1", "0.9", "Adam beta1"},
      {"train.adam_beta2", "0.999", "Adam beta2"},
      {"train.adam_eps", "1e-8", "Adam epsilon"},
      {"train.grad_clip", "1.0", "global gradient-norm cap (0 disables)"},
      {"train.stack_reset", "false", "reset target stacks when pi_ref refreshes"},
      {"train.threads", "0", "worker threads (0: hardware concurrency)"},
      // eval
      {"eval.checkpoint", "run/checkpoint_final.uarpo", "policy checkpoint to evaluate"},
      {"eval.dataset", "data", "dataset directory"},
      {"eval.split", "test", "split to evaluate"},
      {"eval.out_dir", "eval", "evaluation output directory"},
      {"eval.naive", "true", "also write the naive-baseline report"},
      {"eval.naive_window", "0", "naive trend window (0: the target horizon)"},
      {"eval.threads", "0", "worker threads (0: hardware concurrency)"},
      // compare / plot
      {"compare.column", "train_acc", "metrics column aligned by the compare command"},
  };
  return schema;
}

class RunConfig {
 public:
  RunConfig() {
    for (const auto& k : config_schema()) values_[k.key] = k.def;
  }

  static RunConfig from_file(const std::string& path) {
    RunConfig cfg;
    if (path.empty()) return cfg;
    std::ifstream f(path);
    if (!f) throw IoError("cannot open config: " + path);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(f, line)) {
      ++line_no;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      trim_(line);
      if (line.empty()) continue;
      if (line.front() == '[' && line.back() == ']') {
        section = line.substr(1, line.size() - 2);
        trim_(section);
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
      std::string key = line.substr(0, eq);
      std::string value = line.substr(eq + 1);
      trim_(key);
      trim_(value);
      if (!section.empty() && key.find('.') == std::string::npos) key = section + "." + key;
      cfg.set(key, value);
    }
    return cfg;
  }

  void set(const std::string& key, const std::string& value) {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second = value;
  }

  const std::string& str(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }

  long integer(const std::string& key) const {
    const std::string& v = str(key);
    char* end = nullptr;
    const long out = std::strtol(v.c_str(), &end, 10);
    if (v.empty() || end != v.c_str() + v.size())
      throw ConfigError("config key '" + key + "': expected integer, got '" + v + "'");
    return out;
  }

  uint64_t u64(const std::string& key) const {
    const std::string& v = str(key);
    char* end = nullptr;
    const unsigned long long out = std::strtoull(v.c_str(), &end, 10);
    if (v.empty() || end != v.c_str() + v.size())
      throw ConfigError("config key '" + key + "': expected unsigned integer, got '" + v + "'");
    return out;
  }

  double number(const std::string& key) const {
    const std::string& v = str(key);
    char* end = nullptr;
    const double out = std::strtod(v.c_str(), &end);
    if (v.empty() || end != v.c_str() + v.size())
      throw ConfigError("config key '" + key + "': expected number, got '" + v + "'");
    return out;
  }

  bool boolean(const std::string& key) const {
    const std::string& v = str(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ConfigError("config key '" + key + "': expected boolean, got '" + v + "'");
  }

  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(str(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      trim_(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

 private:
  static void trim_(std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    const auto b = s.find_last_not_of(" \t\r");
    s = a == std::string::npos ? "" : s.substr(a, b - a + 1);
  }

  std::map<std::string, std::string> values_;
};

inline GenConfig make_gen_config(const RunConfig& cfg) {
  GenConfig g;
  g.quantities.clear();
  for (const auto& q : cfg.list("data.quantities")) g.quantities.push_back(quantity_from(q));
  g.horizons.clear();
  for (const auto& h : cfg.list("data.horizons")) g.horizons.push_back(static_cast<int>(std::stol(h)));
  g.lengths.clear();
  for (const auto& l : cfg.list("data.lengths")) g.lengths.push_back(static_cast<int>(std::stol(l)));
  g.styles.clear();
  for (const auto& s : cfg.list("data.styles")) g.styles.push_back(style_from(s));
  g.difficulties.clear();
  for (const auto& d : cfg.list("data.difficulties")) g.difficulties.push_back(difficulty_from(d));
  g.count_per_stratum = static_cast<int>(cfg.integer("data.count_per_stratum"));
  g.train_fraction = cfg.number("data.train_fraction");
  g.image_height = static_cast<int>(cfg.integer("data.image_height"));
  g.image_width = static_cast<int>(cfg.integer("data.image_width"));
  g.learnable_mode = cfg.str("data.learnable_mode");
  g.learnable_drift = static_cast<float>(cfg.number("data.learnable_drift"));
  g.noise_vol = static_cast<float>(cfg.number("data.noise_vol"));
  g.frequency_tag = cfg.str("data.frequency_tag");
  bool saw_close = false;
  for (const auto& feat : cfg.list("data.features")) {
    if (feat == "close")
      saw_close = true;
    else if (feat == "volume")
      g.with_volume = true;
    else if (feat == "moving-average")
      g.with_moving_average = true;
    else
      throw ConfigError("data.features: unknown feature '" + feat + "'");
  }
  if (!saw_close) throw ConfigError("data.features: must include close");
  g.seed = cfg.u64("seed");
  g.out_dir = cfg.str("data.out_dir");
  g.csv_path = cfg.str("data.csv_path");
  g.csv_cols.time_col = cfg.str("data.csv_time_col");
  g.csv_cols.close_col = cfg.str("data.csv_close_col");
  return g;
}

// Model geometry; zero image dims are filled from the dataset by the caller.
inline PolicyConfig make_policy_config(const RunConfig& cfg) {
  PolicyConfig m;
  m.image_height = static_cast<int>(cfg.integer("model.image_height"));
  m.image_width = static_cast<int>(cfg.integer("model.image_width"));
  m.patch = static_cast<int>(cfg.integer("model.patch"));
  m.d_model = static_cast<int>(cfg.integer("model.d_model"));
  m.n_blocks = static_cast<int>(cfg.integer("model.n_blocks"));
  m.ffn_mult = static_cast<int>(cfg.integer("model.ffn_mult"));
  m.max_len = static_cast<int>(cfg.integer("model.max_len"));
  return m;
}

inline TrainConfig make_train_config(const RunConfig& cfg) {
  TrainConfig t;
  t.iterations = static_cast<int>(cfg.integer("train.iterations"));
  t.steps_per_iter = static_cast<int>(cfg.integer("train.steps_per_iter"));
  t.inner_epochs = static_cast<int>(cfg.integer("train.inner_epochs"));
  t.batch_size = static_cast<int>(cfg.integer("train.batch_size"));
  t.hyper.group_size = static_cast<int>(cfg.integer("train.group_size"));
  t.hyper.stack_len = static_cast<int>(cfg.integer("train.stack_len"));
  t.hyper.clip_eps = static_cast<float>(cfg.number("train.clip_eps"));
  t.hyper.kl_beta = static_cast<float>(cfg.number("train.kl_beta"));
  t.hyper.alpha = static_cast<float>(cfg.number("train.alpha"));
  t.hyper.confidence_const = static_cast<float>(cfg.number("train.confidence_const"));
  t.rewards.w_acc = static_cast<float>(cfg.number("rewards.w_acc"));
  t.rewards.w_fmt = static_cast<float>(cfg.number("rewards.w_fmt"));
  t.rewards.w_len = static_cast<float>(cfg.number("rewards.w_len"));
  t.rewards.length_cap = static_cast<int>(cfg.integer("rewards.length_cap"));
  t.model = make_policy_config(cfg);
  t.temperature = static_cast<float>(cfg.number("train.temperature"));
  t.max_len = static_cast<int>(cfg.integer("train.max_len"));
  if (t.max_len == 0) t.max_len = t.model.max_len;
  t.lr = static_cast<float>(cfg.number("train.lr"));
  t.adam_beta1 = static_cast<float>(cfg.number("train.adam_beta1"));
  t.adam_beta2 = static_cast<float>(cfg.number("train.adam_beta2"));
  t.adam_eps = static_cast<float>(cfg.number("train.adam_eps"));
  t.grad_clip = static_cast<float>(cfg.number("train.grad_clip"));
  t.seed = cfg.u64("seed");
  const std::string mode = cfg.str("train.mode");
  if (mode == "uarpo")
    t.mode = TrainConfig::Mode::uarpo;
  else if (mode == "grpo")
    t.mode = TrainConfig::Mode::grpo;
  else
    throw ConfigError("train.mode: expected uarpo|grpo, got '" + mode + "'");
  t.stack_reset = cfg.boolean("train.stack_reset");
  t.threads = static_cast<int>(cfg.integer("train.threads"));
  t.dataset_dir = cfg.str("train.dataset");
  t.out_dir = cfg.str("train.out_dir");
  return t;
}

}  // namespace uarpo
