#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "uarpo/errors.hpp"
#include "uarpo/tensor.hpp"

namespace uarpo {

struct AdamConfig {
  float lr = 3e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  int64_t t = 0;

  static AdamState for_params(const std::vector<const Tensor*>& params) {
    AdamState s;
    s.m.reserve(params.size());
    s.v.reserve(params.size());
    for (const Tensor* p : params) {
      s.m.push_back(Tensor::zeros(p->shape));
      s.v.push_back(Tensor::zeros(p->shape));
    }
    return s;
  }
};

// Bias-corrected Adam, applied in place. A non-finite gradient aborts the
// step before any parameter is touched, so the caller's parameters remain
// the last good ones.
inline void adam_step(std::vector<Tensor*>& params, const std::vector<const std::vector<float>*>& grads,
                      AdamState& state, const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw ShapeError("adam_step: params/grads/moments size mismatch");
  for (size_t p = 0; p < params.size(); ++p) {
    if (grads[p]->size() != params[p]->data.size())
      throw ShapeError("adam_step: gradient shape mismatch at tensor " + std::to_string(p));
    for (float g : *grads[p])
      if (!std::isfinite(g))
        throw NumericError("adam_step: non-finite gradient at tensor " + std::to_string(p));
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(static_cast<double>(cfg.beta1), static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(static_cast<double>(cfg.beta2), static_cast<double>(state.t));
  for (size_t p = 0; p < params.size(); ++p) {
    float* w = params[p]->data.data();
    const float* g = grads[p]->data();
    float* m = state.m[p].data.data();
    float* v = state.v[p].data.data();
    const size_t n = params[p]->data.size();
    for (size_t i = 0; i < n; ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0f - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0f - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= static_cast<float>(cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
  }
}

}  // namespace uarpo
