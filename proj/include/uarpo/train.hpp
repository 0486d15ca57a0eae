#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "uarpo/adam.hpp"
#include "uarpo/advantage.hpp"
#include "uarpo/checkpoint.hpp"
#include "uarpo/dataset.hpp"
#include "uarpo/objective.hpp"
#include "uarpo/policy.hpp"
#include "uarpo/rewards.hpp"

namespace uarpo {

struct TrainConfig {
  int iterations = 1;       // outer iterations refreshing pi_ref
  int steps_per_iter = 10;  // steps per iteration, each snapshotting pi_old
  int inner_epochs = 1;     // optimization epochs per step
  int batch_size = 4;       // questions per step
  UarpoHyper hyper;
  RewardWeights rewards;
  PolicyConfig model;
  float temperature = 1.0f;
  int max_len = 64;  // sampling cap
  float lr = 3e-4f;
  float adam_beta1 = 0.9f;
  float adam_beta2 = 0.999f;
  float adam_eps = 1e-8f;
  float grad_clip = 1.0f;  // global-norm cap; 0 disables
  uint64_t seed = 0;
  enum class Mode { uarpo, grpo } mode = Mode::uarpo;
  bool stack_reset = false;  // reset target stacks when pi_ref refreshes
  int threads = 0;           // 0: hardware concurrency
  std::string dataset_dir;
  std::string out_dir;

  void validate() const {
    if (iterations < 1) throw ConfigError("train.iterations: must be >= 1");
    if (steps_per_iter < 1) throw ConfigError("train.steps_per_iter: must be >= 1");
    if (inner_epochs < 1) throw ConfigError("train.inner_epochs: must be >= 1");
    if (batch_size < 1) throw ConfigError("train.batch_size: must be >= 1");
    if (!(temperature > 0.0f)) throw ConfigError("train.temperature: must be > 0");
    if (!(lr > 0.0f)) throw ConfigError("train.lr: must be > 0");
    if (grad_clip < 0.0f) throw ConfigError("train.grad_clip: must be >= 0");
    if (max_len < 4 || max_len > model.max_len)
      throw ConfigError("train.max_len: must be in [4, model.max_len]");
    if (threads < 0) throw ConfigError("train.threads: must be >= 0");
    hyper.validate();
    rewards.validate();
    model.validate();
  }
};

inline const char* mode_name(TrainConfig::Mode m) {
  return m == TrainConfig::Mode::uarpo ? "uarpo" : "grpo";
}

// Deep copy of the policy; later updates to the source leave it untouched.
inline PolicyParams snapshot(const PolicyParams& p) { return p; }

struct RolloutTrace {
  Rollout rollout;
  RewardBreakdown reward;
  float in_group_adv = 0.0f;
  float uncertainty = 0.0f;
  float combined_adv = 0.0f;
  std::vector<float> logp_ref;
};

struct GroupTrace {
  int record_index = 0;
  TargetSpec target;
  float cross_group_adv = 0.0f;
  std::vector<RolloutTrace> rollouts;
};

struct StepTrace {
  int iteration = 0;
  int step = 0;         // within the iteration
  int global_step = 0;  // across iterations
  std::vector<GroupTrace> groups;
  std::vector<float> epoch_losses;  // one per inner epoch
  // logp_new per epoch per rollout (group-major order), for oracle replays
  std::vector<std::vector<std::vector<float>>> epoch_logp_new;
  double format_valid_fraction = 0.0;
  double train_accuracy = 0.0;
};

struct TrainHooks {
  std::function<void(const StepTrace&)> on_step;
  std::function<bool(const StepTrace&)> should_stop;  // checked after on_step
};

struct TrainResult {
  PolicyParams params;
  std::filesystem::path metrics_path;
  std::filesystem::path final_checkpoint;
  int steps_completed = 0;
};

namespace detail {

// Index-sharded parallel map; each task writes only its own slot, so the
// result is independent of scheduling.
template <typename F>
void parallel_tasks(int n, int threads, F&& fn) {
  if (n <= 0) return;
  const int workers = std::max(1, std::min(threads, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&, w]() {
      for (int i = w; i < n; i += workers) fn(i);
    });
  for (auto& t : pool) t.join();
}

struct MetricsWriter {
  std::ofstream csv;
  std::ofstream timing;

  static constexpr const char* kHeader =
      "iteration,step,r_acc,r_fmt,r_len,r_total,fmt_valid_frac,train_acc,mean_abs_igra,mean_u,"
      "as_price_5,as_price_21,as_price_63,as_volatility_5,as_volatility_21,as_volatility_63,loss";

  explicit MetricsWriter(const std::filesystem::path& dir) {
    csv.open(dir / "metrics.csv", std::ios::binary);
    timing.open(dir / "metrics_timing.csv", std::ios::binary);
    if (!csv || !timing) throw IoError("cannot write metrics in '" + dir.string() + "'");
    csv << kHeader << "\n";
    timing << "iteration,step,wall_ms\n";
  }

  static std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.7g", v);
    return buf;
  }
};

}  // namespace detail

// The full fine-tuning loop: outer iterations refresh pi_ref, every step
// snapshots pi_old, samples G rollouts per question, scores them, computes
// in-group and cross-group advantages with the uncertainty multiplier, and
// runs `inner_epochs` of Adam ascent on the clipped surrogate. One metrics
// row per step; a checkpoint per iteration. Deterministic for a fixed
// config and seed, regardless of thread count.
inline TrainResult run_training(const TrainConfig& cfg, const DatasetManifest& manifest,
                                const TrainHooks& hooks = {}) {
  cfg.validate();
  if (cfg.out_dir.empty()) throw ConfigError("train.out_dir: required");
  const auto train_split = manifest.split("train");
  if (train_split.empty()) throw ConfigError("training split is empty");

  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  if (ec) throw IoError("cannot create output directory '" + cfg.out_dir + "': " + ec.message());

  // surface dataset problems before any training work
  std::vector<Image> images(train_split.size());
  for (size_t i = 0; i < train_split.size(); ++i) {
    images[i] = read_pgm(manifest.dir / train_split[i]->image_path);
    if (images[i].height != cfg.model.image_height || images[i].width != cfg.model.image_width)
      throw ConfigError("dataset image " + train_split[i]->image_path + " is " +
                        std::to_string(images[i].height) + "x" + std::to_string(images[i].width) +
                        ", model expects " + std::to_string(cfg.model.image_height) + "x" +
                        std::to_string(cfg.model.image_width));
  }

  const int threads = cfg.threads > 0
                          ? cfg.threads
                          : std::max(1u, std::thread::hardware_concurrency());
  const bool grpo = cfg.mode == TrainConfig::Mode::grpo;
  const int G = cfg.hyper.group_size;
  const int B = cfg.batch_size;

  uint64_t seed_mix = cfg.seed;
  PolicyParams params = PolicyParams::init(cfg.model, splitmix64(seed_mix));
  auto named = params.named_tensors();
  std::vector<Tensor*> param_ptrs;
  for (auto& [n, t] : named) {
    t->requires_grad = true;
    param_ptrs.push_back(t);
  }
  std::vector<const Tensor*> param_cptrs(param_ptrs.begin(), param_ptrs.end());
  AdamState adam = AdamState::for_params(param_cptrs);
  AdamConfig adam_cfg{cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};

  std::map<int, TargetStack> stacks;
  for (const auto& t : all_targets()) stacks.emplace(target_index(t), TargetStack(cfg.hyper.stack_len));

  detail::MetricsWriter metrics(cfg.out_dir);
  TrainResult result;
  result.metrics_path = std::filesystem::path(cfg.out_dir) / "metrics.csv";

  // epoch-shuffled batch cursor (without replacement within an epoch)
  std::vector<int> order(train_split.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  uint64_t epoch_counter = 0;
  size_t cursor = order.size();  // force initial shuffle
  auto next_batch = [&]() {
    std::vector<int> batch;
    batch.reserve(static_cast<size_t>(B));
    while (static_cast<int>(batch.size()) < B) {
      if (cursor >= order.size()) {
        Rng r = Rng::keyed(cfg.seed, 0x50fful, epoch_counter);
        r.shuffle(order);
        ++epoch_counter;
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }
    return batch;
  };

  const auto save_ckpt = [&](const std::string& name) {
    const auto path = std::filesystem::path(cfg.out_dir) / name;
    save_checkpoint(params, path);
    return path;
  };

  int global_step = 0;
  bool stop_requested = false;
  for (int iter = 1; iter <= cfg.iterations && !stop_requested; ++iter) {
    const PolicyParams pi_ref = snapshot(params);
    if (cfg.stack_reset)
      for (auto& [k, s] : stacks) s.reset();

    for (int step = 1; step <= cfg.steps_per_iter && !stop_requested; ++step) {
      const auto t0 = std::chrono::steady_clock::now();
      ++global_step;
      const std::vector<int> batch = next_batch();
      const PolicyParams pi_old = snapshot(params);
      uint64_t step_seed_mix = cfg.seed ^ (0xabcdull + static_cast<uint64_t>(global_step));
      const uint64_t step_seed = splitmix64(step_seed_mix);

      // --- sample G rollouts per question under pi_old ------------------
      const int n_roll = B * G;
      std::vector<Rollout> rollouts(static_cast<size_t>(n_roll));
      detail::parallel_tasks(n_roll, threads, [&](int i) {
        const int q = i / G;
        const int g = i % G;
        const ManifestRecord& rec = *train_split[static_cast<size_t>(batch[static_cast<size_t>(q)])];
        rollouts[static_cast<size_t>(i)] = detail::sample_one(
            pi_old, images[static_cast<size_t>(batch[static_cast<size_t>(q)])], rec.target(),
            cfg.temperature, cfg.max_len,
            Rng::keyed(step_seed, static_cast<uint64_t>(rec.index), static_cast<uint64_t>(g)));
      });

      // --- rewards, advantages, reference logps -------------------------
      StepTrace trace;
      trace.iteration = iter;
      trace.step = step;
      trace.global_step = global_step;
      trace.groups.resize(static_cast<size_t>(B));
      int valid_count = 0;
      int correct_count = 0;
      for (int q = 0; q < B; ++q) {
        const ManifestRecord& rec = *train_split[static_cast<size_t>(batch[static_cast<size_t>(q)])];
        GroupTrace& gt = trace.groups[static_cast<size_t>(q)];
        gt.record_index = rec.index;
        gt.target = rec.target();
        std::vector<float> totals(static_cast<size_t>(G));
        std::vector<int> confs(static_cast<size_t>(G));
        gt.rollouts.resize(static_cast<size_t>(G));
        for (int g = 0; g < G; ++g) {
          RolloutTrace& rt = gt.rollouts[static_cast<size_t>(g)];
          rt.rollout = rollouts[static_cast<size_t>(q * G + g)];
          rt.reward = score_rollout(rt.rollout.tokens, rec.label, cfg.rewards);
          totals[static_cast<size_t>(g)] = rt.reward.total;
          confs[static_cast<size_t>(g)] = rt.reward.confidence_score;
          const ParsedOutput parsed = parse_output(rt.rollout.tokens);
          valid_count += parsed.format_valid;
          correct_count += parsed.format_valid && parsed.direction == rec.label;
        }
        const AdvantageSet adv = compute_advantages(totals, confs, stacks.at(target_index(gt.target)),
                                                    cfg.hyper, grpo);
        gt.cross_group_adv = adv.cross_group;
        for (int g = 0; g < G; ++g) {
          gt.rollouts[static_cast<size_t>(g)].in_group_adv = adv.in_group[static_cast<size_t>(g)];
          gt.rollouts[static_cast<size_t>(g)].uncertainty = adv.uncertainty[static_cast<size_t>(g)];
          gt.rollouts[static_cast<size_t>(g)].combined_adv = adv.combined[static_cast<size_t>(g)];
        }
      }
      trace.format_valid_fraction = static_cast<double>(valid_count) / n_roll;
      trace.train_accuracy = static_cast<double>(correct_count) / n_roll;

      if (cfg.hyper.kl_beta > 0.0f) {
        detail::parallel_tasks(n_roll, threads, [&](int i) {
          const int q = i / G;
          const int g = i % G;
          RolloutTrace& rt = trace.groups[static_cast<size_t>(q)].rollouts[static_cast<size_t>(g)];
          Tape tape;
          const auto leaves = detail::register_leaves(tape, pi_ref, false);
          const ValueId lp = detail::rollout_logp_graph(
              tape, leaves, pi_ref, images[static_cast<size_t>(batch[static_cast<size_t>(q)])],
              trace.groups[static_cast<size_t>(q)].target, rt.rollout.tokens, cfg.temperature);
          const float* d = tape.data(lp);
          rt.logp_ref.assign(d, d + rt.rollout.tokens.size());
        });
      } else {
        for (auto& gt : trace.groups)
          for (auto& rt : gt.rollouts) rt.logp_ref = rt.rollout.logps;
      }

      // --- inner optimization epochs -------------------------------------
      for (int e = 0; e < cfg.inner_epochs; ++e) {
        std::vector<std::vector<std::vector<float>>> grads(
            static_cast<size_t>(n_roll));  // [rollout][param][...]
        std::vector<double> objectives(static_cast<size_t>(n_roll));
        std::vector<std::vector<float>> logp_new(static_cast<size_t>(n_roll));
        detail::parallel_tasks(n_roll, threads, [&](int i) {
          const int q = i / G;
          const int g = i % G;
          const GroupTrace& gt = trace.groups[static_cast<size_t>(q)];
          const RolloutTrace& rt = gt.rollouts[static_cast<size_t>(g)];
          Tape tape;
          const auto leaves = detail::register_leaves(tape, params, true);
          const ValueId lp = detail::rollout_logp_graph(
              tape, leaves, params, images[static_cast<size_t>(batch[static_cast<size_t>(q)])],
              gt.target, rt.rollout.tokens, cfg.temperature);
          const float* lpd = tape.data(lp);
          logp_new[static_cast<size_t>(i)].assign(lpd, lpd + rt.rollout.tokens.size());
          const std::vector<float> adv(rt.rollout.tokens.size(), rt.combined_adv);
          const ValueId obj = tape.mean_all(tape.token_surrogate(
              lp, rt.rollout.logps, rt.logp_ref, adv, cfg.hyper.clip_eps, cfg.hyper.kl_beta));
          objectives[static_cast<size_t>(i)] = tape.data(obj)[0];
          tape.backward(obj);
          auto& gslot = grads[static_cast<size_t>(i)];
          gslot.resize(param_ptrs.size());
          for (size_t pix = 0; pix < param_ptrs.size(); ++pix)
            gslot[pix] = tape.grad_data(leaves.ordered[pix]);
        });

        double j_total = 0.0;
        for (double v : objectives) j_total += v;
        const double loss = -j_total / n_roll;
        if (!std::isfinite(loss)) {
          save_ckpt("checkpoint_lastgood.uarpo");
          throw NumericError("non-finite loss at step " + std::to_string(global_step) +
                             " (last good checkpoint retained)");
        }
        trace.epoch_losses.push_back(static_cast<float>(loss));
        trace.epoch_logp_new.push_back(std::move(logp_new));

        // ascend on J: accumulate -dJ/dtheta in rollout-index order
        std::vector<std::vector<float>> total_grad(param_ptrs.size());
        for (size_t pix = 0; pix < param_ptrs.size(); ++pix)
          total_grad[pix].assign(param_ptrs[pix]->data.size(), 0.0f);
        const float scale = -1.0f / static_cast<float>(n_roll);
        for (int i = 0; i < n_roll; ++i)
          for (size_t pix = 0; pix < param_ptrs.size(); ++pix) {
            const auto& src = grads[static_cast<size_t>(i)][pix];
            auto& dst = total_grad[pix];
            for (size_t k = 0; k < dst.size(); ++k) dst[k] += scale * src[k];
          }

        if (cfg.grad_clip > 0.0f) {
          double norm_sq = 0.0;
          for (const auto& gv : total_grad)
            for (float v : gv) norm_sq += static_cast<double>(v) * v;
          const double norm = std::sqrt(norm_sq);
          if (norm > cfg.grad_clip) {
            const float s = static_cast<float>(cfg.grad_clip / norm);
            for (auto& gv : total_grad)
              for (float& v : gv) v *= s;
          }
        }

        std::vector<const std::vector<float>*> grad_ptrs;
        grad_ptrs.reserve(total_grad.size());
        for (const auto& gv : total_grad) grad_ptrs.push_back(&gv);
        try {
          adam_step(param_ptrs, grad_ptrs, adam, adam_cfg);
        } catch (const NumericError&) {
          save_ckpt("checkpoint_lastgood.uarpo");
          throw;
        }
      }

      // --- metrics row ----------------------------------------------------
      {
        double r_acc = 0, r_fmt = 0, r_len = 0, r_tot = 0, abs_igra = 0, mean_u = 0;
        double as_sum[6] = {};
        int as_count[6] = {};
        for (const auto& gt : trace.groups) {
          as_sum[target_index(gt.target)] += gt.cross_group_adv;
          as_count[target_index(gt.target)] += 1;
          for (const auto& rt : gt.rollouts) {
            r_acc += rt.reward.accuracy;
            r_fmt += rt.reward.format;
            r_len += rt.reward.length;
            r_tot += rt.reward.total;
            abs_igra += std::abs(rt.in_group_adv);
            mean_u += rt.uncertainty;
          }
        }
        auto& csv = metrics.csv;
        using detail::MetricsWriter;
        // the step column is the global step so metrics files join cleanly
        csv << iter << "," << global_step << "," << MetricsWriter::fmt(r_acc / n_roll) << ","
            << MetricsWriter::fmt(r_fmt / n_roll) << "," << MetricsWriter::fmt(r_len / n_roll) << ","
            << MetricsWriter::fmt(r_tot / n_roll) << ","
            << MetricsWriter::fmt(trace.format_valid_fraction) << ","
            << MetricsWriter::fmt(trace.train_accuracy) << ","
            << MetricsWriter::fmt(abs_igra / n_roll) << "," << MetricsWriter::fmt(mean_u / n_roll);
        for (int t = 0; t < 6; ++t) {
          csv << ",";
          if (as_count[t] > 0) csv << MetricsWriter::fmt(as_sum[t] / as_count[t]);
        }
        csv << "," << MetricsWriter::fmt(trace.epoch_losses.front()) << "\n";
        const double wall_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.3f", wall_ms);
        metrics.timing << iter << "," << global_step << "," << buf << "\n";
      }

      result.steps_completed = global_step;
      if (hooks.on_step) hooks.on_step(trace);
      if (hooks.should_stop && hooks.should_stop(trace)) stop_requested = true;
    }

    char name[48];
    std::snprintf(name, sizeof(name), "checkpoint_iter_%03d.uarpo", iter);
    save_ckpt(name);
  }

  result.final_checkpoint = save_ckpt("checkpoint_final.uarpo");
  metrics.csv.flush();
  metrics.timing.flush();
  if (!metrics.csv || !metrics.timing) throw IoError("metrics write failed");
  result.params = std::move(params);
  return result;
}

}  // namespace uarpo
