#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "uarpo/errors.hpp"

namespace uarpo {

struct UarpoHyper {
  float clip_eps = 0.2f;         // PPO clip radius
  float kl_beta = 0.04f;         // KL penalty weight
  float alpha = 1.0f;            // uncertainty coefficient; 0 disables the
                                 // adjustment entirely (U == 1)
  float confidence_const = 0.0f; // uncertainty offset
  int stack_len = 8;             // cross-group window length L
  int group_size = 8;            // rollouts per question G

  void validate() const {
    if (!(clip_eps > 0.0f) || !(clip_eps < 1.0f))
      throw ConfigError("train.clip_eps: must be in (0, 1)");
    if (kl_beta < 0.0f) throw ConfigError("train.kl_beta: must be >= 0");
    if (stack_len < 1) throw ConfigError("train.stack_len: must be >= 1");
    if (group_size < 2) throw ConfigError("train.group_size: must be >= 2");
  }
};

namespace detail {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
};

inline MeanStd mean_std(std::span<const float> v) {
  MeanStd ms;
  for (float x : v) ms.mean += x;
  ms.mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (float x : v) ss += (x - ms.mean) * (x - ms.mean);
  ms.std = std::sqrt(ss / static_cast<double>(v.size()));
  return ms;
}

}  // namespace detail

inline constexpr double kDegenerateStd = 1e-8;

// In-group relative advantage: rewards standardized within the group with
// the population std. A degenerate group (std < 1e-8) gets zeros rather
// than a division.
inline std::vector<float> in_group_advantage(std::span<const float> rewards) {
  if (rewards.size() < 2) throw ConfigError("in_group_advantage: group size must be >= 2");
  const auto ms = detail::mean_std(rewards);
  std::vector<float> out(rewards.size(), 0.0f);
  if (ms.std < kDegenerateStd) return out;
  for (size_t i = 0; i < rewards.size(); ++i)
    out[i] = static_cast<float>((rewards[i] - ms.mean) / ms.std);
  return out;
}

// Per-target ring of recent group-mean rewards. Pushing the current group
// mean returns the cross-group relative advantage: the new mean
// standardized against the stored window (which includes it). Zero until
// more than `window_len` group means have been pushed, and zero for a
// degenerate window.
class TargetStack {
 public:
  explicit TargetStack(int window_len) : window_len_(window_len) {
    if (window_len < 1) throw ConfigError("TargetStack: window length must be >= 1");
  }

  float push_and_advantage(float group_mean) {
    if (!std::isfinite(group_mean)) throw NumericError("TargetStack: non-finite group mean");
    window_.push_back(group_mean);
    if (static_cast<int>(window_.size()) > window_len_ + 1) window_.erase(window_.begin());
    pushes_ += 1;
    if (pushes_ <= static_cast<int64_t>(window_len_)) return 0.0f;
    const auto ms = detail::mean_std(window_);
    if (ms.std < kDegenerateStd) return 0.0f;
    return static_cast<float>((group_mean - ms.mean) / ms.std);
  }

  int64_t pushes() const { return pushes_; }
  std::span<const float> window() const { return window_; }
  void reset() {
    window_.clear();
    pushes_ = 0;
  }

 private:
  int window_len_;
  std::vector<float> window_;
  int64_t pushes_ = 0;
};

// Uncertainty adjustment U = alpha * (score - const) / 100, clamped below
// at zero so low confidence shrinks an update instead of inverting it.
// alpha == 0 means "no adjustment": U is identically 1.
inline float uncertainty_adjust(int score, const UarpoHyper& hyper) {
  if (score < 0 || score > 100)
    throw ConfigError("uncertainty_adjust: score must be in [0, 100], got " + std::to_string(score));
  if (hyper.alpha == 0.0f) return 1.0f;
  const double raw =
      static_cast<double>(hyper.alpha) * (static_cast<double>(score) - hyper.confidence_const) / 100.0;
  return raw > 0.0 ? static_cast<float>(raw) : 0.0f;
}

// Everything the objective needs per group, assembled in one place.
struct AdvantageSet {
  std::vector<float> in_group;   // per rollout
  float cross_group = 0.0f;      // shared by the group
  std::vector<float> uncertainty;  // per rollout
  std::vector<float> combined;   // (in_group_i + cross_group) * uncertainty_i
};

inline AdvantageSet compute_advantages(std::span<const float> rewards,
                                       std::span<const int> confidence_scores, TargetStack& stack,
                                       const UarpoHyper& hyper, bool grpo_mode) {
  if (rewards.size() != confidence_scores.size())
    throw ConfigError("compute_advantages: rewards/confidence size mismatch");
  AdvantageSet set;
  set.in_group = in_group_advantage(rewards);
  double mean = 0.0;
  for (float r : rewards) mean += r;
  mean /= static_cast<double>(rewards.size());
  const float cg = stack.push_and_advantage(static_cast<float>(mean));
  set.cross_group = grpo_mode ? 0.0f : cg;
  set.uncertainty.resize(rewards.size());
  set.combined.resize(rewards.size());
  for (size_t i = 0; i < rewards.size(); ++i) {
    set.uncertainty[i] = grpo_mode ? 1.0f : uncertainty_adjust(confidence_scores[i], hyper);
    set.combined[i] = (set.in_group[i] + set.cross_group) * set.uncertainty[i];
  }
  return set;
}

}  // namespace uarpo
