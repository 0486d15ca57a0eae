#pragma once

// Finite-difference check of d(sum of rollout log-probs)/d(theta) against
// the tape backward, sampling components per tensor. Test-only.

#include <cmath>
#include <vector>

#include "support/gradcheck.hpp"
#include "uarpo/policy.hpp"

namespace testsupport {

struct PolicyFdResult {
  double max_rel = 0.0;
  int checked = 0;
};

// The objective is a sum of log-probs (magnitude ~20 in float32), so the
// step is larger than for unit-scale functions: rounding noise in f(x+-h)
// scales as eps*|f|/h while truncation grows as h^2.
inline PolicyFdResult policy_fd_check(uarpo::PolicyParams& p, const uarpo::Image& im,
                                      const uarpo::TargetSpec& target,
                                      const std::vector<int32_t>& tokens, int per_tensor,
                                      uarpo::Rng& rng, double h = 8e-3) {
  using namespace uarpo;
  auto objective = [&](const PolicyParams& pp) -> double {
    Tape tape;
    const auto leaves = detail::register_leaves(tape, pp, false);
    const ValueId lp = detail::rollout_logp_graph(tape, leaves, pp, im, target, tokens, 1.0f);
    return static_cast<double>(tape.data(tape.sum_all(lp))[0]);
  };

  Tape tape;
  const auto leaves = detail::register_leaves(tape, p, true);
  const ValueId lp = detail::rollout_logp_graph(tape, leaves, p, im, target, tokens, 1.0f);
  tape.backward(tape.sum_all(lp));

  PolicyFdResult res;
  auto named = p.named_tensors();
  for (size_t t = 0; t < named.size(); ++t) {
    Tensor* tensor = named[t].second;
    const auto& analytic = tape.grad_data(leaves.ordered[t]);
    const size_t n = tensor->data.size();
    for (int c = 0; c < per_tensor; ++c) {
      const size_t ix = static_cast<size_t>(rng.below(n));
      const float orig = tensor->data[ix];
      tensor->data[ix] = static_cast<float>(orig + h);
      const double fp = objective(p);
      tensor->data[ix] = static_cast<float>(orig - h);
      const double fm = objective(p);
      tensor->data[ix] = orig;
      res.max_rel = std::max(res.max_rel, rel_err(analytic[ix], (fp - fm) / (2.0 * h)));
      res.checked += 1;
    }
  }
  return res;
}

}  // namespace testsupport
