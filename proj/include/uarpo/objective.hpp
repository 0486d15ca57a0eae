#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "uarpo/advantage.hpp"
#include "uarpo/errors.hpp"

namespace uarpo {

// Scalar twins of the fused tape primitive, used for metrics and as the
// reference path in tests. Gradients never flow through these.

// k3 KL estimator: exp(d) - d - 1 with d = logp_ref - logp_new; always >= 0.
inline double kl_k3(double logp_new, double logp_ref) {
  const double d = logp_ref - logp_new;
  return std::exp(d) - d - 1.0;
}

inline void check_logp(double v, const char* who) {
  if (v > 1e-6) throw ConfigError(std::string(who) + ": log-probability must be <= 0");
}

// Clipped importance-weighted advantage minus the KL penalty, per token.
inline double token_objective(double logp_new, double logp_old, double logp_ref, double advantage,
                              const UarpoHyper& hyper) {
  check_logp(logp_new, "token_objective");
  check_logp(logp_old, "token_objective");
  check_logp(logp_ref, "token_objective");
  const double ratio = std::exp(logp_new - logp_old);
  if (!std::isfinite(ratio)) throw NumericError("token_objective: non-finite importance ratio");
  const double clipped =
      std::clamp(ratio, 1.0 - static_cast<double>(hyper.clip_eps), 1.0 + static_cast<double>(hyper.clip_eps));
  const double term = std::min(ratio * advantage, clipped * advantage);
  return term - hyper.kl_beta * kl_k3(logp_new, logp_ref);
}

// Group objective: mean over rollouts of the per-rollout token mean. The
// trainer maximizes this (loss = -J). Token terms are rounded to float32 to
// mirror the tape path.
inline double batch_objective(const std::vector<std::vector<float>>& logp_new,
                              const std::vector<std::vector<float>>& logp_old,
                              const std::vector<std::vector<float>>& logp_ref,
                              std::span<const float> combined_advantage, const UarpoHyper& hyper) {
  if (logp_new.empty()) throw ConfigError("batch_objective: no rollouts");
  if (logp_new.size() != logp_old.size() || logp_new.size() != logp_ref.size() ||
      logp_new.size() != combined_advantage.size())
    throw ConfigError("batch_objective: rollout count mismatch");
  double total = 0.0;
  for (size_t i = 0; i < logp_new.size(); ++i) {
    const size_t len = logp_new[i].size();
    if (len == 0) throw ConfigError("batch_objective: empty rollout");
    if (logp_old[i].size() != len || logp_ref[i].size() != len)
      throw ConfigError("batch_objective: token count mismatch in rollout " + std::to_string(i));
    double acc = 0.0;
    for (size_t t = 0; t < len; ++t)
      acc += static_cast<float>(token_objective(logp_new[i][t], logp_old[i][t], logp_ref[i][t],
                                                combined_advantage[i], hyper));
    total += acc / static_cast<double>(len);
  }
  return total / static_cast<double>(logp_new.size());
}

}  // namespace uarpo
