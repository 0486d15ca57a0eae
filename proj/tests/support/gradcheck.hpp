#pragma once

// Finite-difference gradient oracle. Test-only; must stay independent of the
// backward pass it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "uarpo/autodiff.hpp"
#include "uarpo/rng.hpp"
#include "uarpo/tensor.hpp"

namespace testsupport {

// Relative error with a unit floor, so tiny gradients are compared
// absolutely. Central differences on float32 carry ~1e-4 absolute noise at
// step 1e-3, which this metric absorbs.
inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

struct FdReport {
  double max_rel = 0.0;
  int checked = 0;
};

// `build` assembles the scalar objective from fresh leaves each call:
//   (Tape&, const std::vector<uarpo::ValueId>& leaves) -> uarpo::ValueId
// Analytic gradients from one backward pass are compared against central
// differences f(x+h) - f(x-h) over 2h, component by component (optionally a
// random subset of `per_tensor` components).
template <typename F>
FdReport fd_gradcheck(const std::vector<uarpo::Tensor>& inputs, F&& build, double h = 1e-3,
                      int per_tensor = -1, uarpo::Rng* rng = nullptr) {
  using uarpo::Tape;
  using uarpo::Tensor;
  using uarpo::ValueId;

  auto eval = [&](const std::vector<Tensor>& xs) -> double {
    Tape tape;
    std::vector<ValueId> ids;
    ids.reserve(xs.size());
    for (const auto& x : xs) {
      Tensor t = x;
      t.requires_grad = false;
      ids.push_back(tape.leaf(std::move(t)));
    }
    const ValueId root = build(tape, ids);
    return static_cast<double>(tape.data(root)[0]);
  };

  Tape tape;
  std::vector<ValueId> ids;
  for (const auto& x : inputs) {
    Tensor t = x;
    t.requires_grad = true;
    ids.push_back(tape.leaf(std::move(t)));
  }
  const ValueId root = build(tape, ids);
  tape.backward(root);

  FdReport report;
  std::vector<Tensor> work = inputs;
  for (size_t t = 0; t < inputs.size(); ++t) {
    const auto& analytic = tape.grad_data(ids[t]);
    const size_t n = work[t].data.size();
    std::vector<size_t> components;
    if (per_tensor < 0 || static_cast<size_t>(per_tensor) >= n) {
      components.resize(n);
      for (size_t i = 0; i < n; ++i) components[i] = i;
    } else {
      for (int i = 0; i < per_tensor; ++i)
        components.push_back(static_cast<size_t>(rng->below(n)));
    }
    for (size_t c : components) {
      const float orig = work[t].data[c];
      work[t].data[c] = static_cast<float>(orig + h);
      const double fp = eval(work);
      work[t].data[c] = static_cast<float>(orig - h);
      const double fm = eval(work);
      work[t].data[c] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      report.max_rel = std::max(report.max_rel, rel_err(analytic[c], fd));
      report.checked += 1;
    }
  }
  return report;
}

}  // namespace testsupport
