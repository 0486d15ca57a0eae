#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "uarpo/errors.hpp"
#include "uarpo/tensor.hpp"

namespace uarpo {

using ValueId = int32_t;

enum class Op : uint8_t {
  kLeaf,
  kMatmul,
  kTranspose,
  kAdd,
  kAddRowvec,
  kMul,
  kMulRowvec,
  kScalarMul,
  kExp,
  kLog,
  kRelu,
  kSilu,
  kSoftmaxRows,
  kLogSoftmaxRows,
  kGatherRows,
  kPickPerRow,
  kConcatRows,
  kSumAll,
  kMeanAll,
  kRmsnormRows,
  kTokenSurrogate,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::kLeaf: return "leaf";
    case Op::kMatmul: return "matmul";
    case Op::kTranspose: return "transpose";
    case Op::kAdd: return "add";
    case Op::kAddRowvec: return "add_rowvec";
    case Op::kMul: return "mul";
    case Op::kMulRowvec: return "mul_rowvec";
    case Op::kScalarMul: return "scalar_mul";
    case Op::kExp: return "exp";
    case Op::kLog: return "log";
    case Op::kRelu: return "relu";
    case Op::kSilu: return "silu";
    case Op::kSoftmaxRows: return "softmax_rows";
    case Op::kLogSoftmaxRows: return "log_softmax_rows";
    case Op::kGatherRows: return "gather_rows";
    case Op::kPickPerRow: return "pick_per_row";
    case Op::kConcatRows: return "concat_rows";
    case Op::kSumAll: return "sum_all";
    case Op::kMeanAll: return "mean_all";
    case Op::kRmsnormRows: return "rmsnorm_rows";
    case Op::kTokenSurrogate: return "token_surrogate";
  }
  return "?";
}

// C += A(m x k) * B(k x n), row-major. The k loop is sequential per output
// element, so results do not depend on vector width or trailing columns.
inline void mm_accumulate(const float* a, const float* b, float* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const float* arow = a + static_cast<size_t>(i) * k;
    float* crow = c + static_cast<size_t>(i) * n;
    for (int kk = 0; kk < k; ++kk) {
      const float av = arow[kk];
      if (av == 0.0f) continue;
      const float* brow = b + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

inline void transpose_into(const float* a, float* out, int rows, int cols) {
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out[static_cast<size_t>(j) * rows + i] = a[static_cast<size_t>(i) * cols + j];
}

// Reverse-mode tape over float32 tensors. Nodes are appended in evaluation
// order, which keeps the record topologically sorted; backward() walks it
// once in reverse. Parameter tensors can be registered as non-owning views
// so repeated forwards do not copy them.
//
// One tape is single-threaded; independent tapes share nothing.
class Tape {
 public:
  Tape() = default;

  ValueId leaf(Tensor t) {
    Node n;
    n.shape = t.shape;
    n.own = std::move(t.data);
    n.op = Op::kLeaf;
    n.needs_grad = t.requires_grad;
    return push_(std::move(n));
  }

  ValueId constant(Tensor t) {
    t.requires_grad = false;
    return leaf(std::move(t));
  }

  // Non-owning leaf; `data` must stay alive for the lifetime of the tape.
  ValueId leaf_view(const float* data, Shape shape, bool requires_grad) {
    Node n;
    n.shape = std::move(shape);
    n.view = data;
    n.op = Op::kLeaf;
    n.needs_grad = requires_grad;
    return push_(std::move(n));
  }

  // ---- primitives ------------------------------------------------------

  ValueId matmul(ValueId a, ValueId b) {
    const Node& na = node_(a);
    const Node& nb = node_(b);
    if (na.shape.size() != 2 || nb.shape.size() != 2 || na.shape[1] != nb.shape[0])
      shape_fail_("matmul", na.shape, nb.shape);
    const int m = na.shape[0], k = na.shape[1], n = nb.shape[1];
    Node out = make_(Op::kMatmul, {m, n}, a, b);
    std::fill(out.own.begin(), out.own.end(), 0.0f);
    mm_accumulate(data_(na), data_(nb), out.own.data(), m, k, n);
    return push_(std::move(out));
  }

  ValueId transpose(ValueId a) {
    const Node& na = node_(a);
    if (na.shape.size() != 2) shape_fail_("transpose", na.shape);
    const int r = na.shape[0], c = na.shape[1];
    Node out = make_(Op::kTranspose, {c, r}, a);
    transpose_into(data_(na), out.own.data(), r, c);
    return push_(std::move(out));
  }

  ValueId add(ValueId a, ValueId b) {
    const Node& na = node_(a);
    const Node& nb = node_(b);
    if (na.shape != nb.shape) shape_fail_("add", na.shape, nb.shape);
    Node out = make_(Op::kAdd, na.shape, a, b);
    const float* pa = data_(na);
    const float* pb = data_(nb);
    for (size_t i = 0; i < out.own.size(); ++i) out.own[i] = pa[i] + pb[i];
    return push_(std::move(out));
  }

  ValueId add_rowvec(ValueId m, ValueId v) {
    const Node& nm = node_(m);
    const Node& nv = node_(v);
    if (nm.shape.size() != 2 || nv.shape.size() != 1 || nv.shape[0] != nm.shape[1])
      shape_fail_("add_rowvec", nm.shape, nv.shape);
    Node out = make_(Op::kAddRowvec, nm.shape, m, v);
    const int rows = nm.shape[0], cols = nm.shape[1];
    const float* pm = data_(nm);
    const float* pv = data_(nv);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j)
        out.own[static_cast<size_t>(i) * cols + j] = pm[static_cast<size_t>(i) * cols + j] + pv[j];
    return push_(std::move(out));
  }

  ValueId mul(ValueId a, ValueId b) {
    const Node& na = node_(a);
    const Node& nb = node_(b);
    if (na.shape != nb.shape) shape_fail_("mul", na.shape, nb.shape);
    Node out = make_(Op::kMul, na.shape, a, b);
    const float* pa = data_(na);
    const float* pb = data_(nb);
    for (size_t i = 0; i < out.own.size(); ++i) out.own[i] = pa[i] * pb[i];
    return push_(std::move(out));
  }

  ValueId mul_rowvec(ValueId m, ValueId v) {
    const Node& nm = node_(m);
    const Node& nv = node_(v);
    if (nm.shape.size() != 2 || nv.shape.size() != 1 || nv.shape[0] != nm.shape[1])
      shape_fail_("mul_rowvec", nm.shape, nv.shape);
    Node out = make_(Op::kMulRowvec, nm.shape, m, v);
    const int rows = nm.shape[0], cols = nm.shape[1];
    const float* pm = data_(nm);
    const float* pv = data_(nv);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j)
        out.own[static_cast<size_t>(i) * cols + j] = pm[static_cast<size_t>(i) * cols + j] * pv[j];
    return push_(std::move(out));
  }

  ValueId scalar_mul(ValueId a, float c) {
    const Node& na = node_(a);
    Node out = make_(Op::kScalarMul, na.shape, a);
    out.saved = {c};
    const float* pa = data_(na);
    for (size_t i = 0; i < out.own.size(); ++i) out.own[i] = pa[i] * c;
    return push_(std::move(out));
  }

  ValueId exp(ValueId a) {
    const Node& na = node_(a);
    Node out = make_(Op::kExp, na.shape, a);
    const float* pa = data_(na);
    for (size_t i = 0; i < out.own.size(); ++i) out.own[i] = std::exp(pa[i]);
    return push_(std::move(out));
  }

  ValueId log(ValueId a) {
    const Node& na = node_(a);
    Node out = make_(Op::kLog, na.shape, a);
    const float* pa = data_(na);
    for (size_t i = 0; i < out.own.size(); ++i) out.own[i] = std::log(pa[i]);
    return push_(std::move(out));
  }

  ValueId relu(ValueId a) {
    const Node& na = node_(a);
    Node out = make_(Op::kRelu, na.shape, a);
    const float* pa = data_(na);
    for (size_t i = 0; i < out.own.size(); ++i) out.own[i] = pa[i] > 0.0f ? pa[i] : 0.0f;
    return push_(std::move(out));
  }

  // x * sigmoid(x); smooth, so finite-difference checks have no kinks.
  ValueId silu(ValueId a) {
    const Node& na = node_(a);
    Node out = make_(Op::kSilu, na.shape, a);
    const float* pa = data_(na);
    for (size_t i = 0; i < out.own.size(); ++i)
      out.own[i] = pa[i] / (1.0f + std::exp(-pa[i]));
    return push_(std::move(out));
  }

  // Softmax over the last axis; rank-1 input is one row.
  ValueId softmax_rows(ValueId a) {
    const Node& na = node_(a);
    auto [rows, cols] = rows_cols_(na, "softmax_rows");
    Node out = make_(Op::kSoftmaxRows, na.shape, a);
    const float* pa = data_(na);
    for (int i = 0; i < rows; ++i) {
      const float* row = pa + static_cast<size_t>(i) * cols;
      float* orow = out.own.data() + static_cast<size_t>(i) * cols;
      float mx = row[0];
      for (int j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
      double sum = 0.0;
      for (int j = 0; j < cols; ++j) {
        const float e = std::exp(row[j] - mx);
        orow[j] = e;
        sum += e;
      }
      const float inv = static_cast<float>(1.0 / sum);
      for (int j = 0; j < cols; ++j) orow[j] *= inv;
    }
    return push_(std::move(out));
  }

  ValueId log_softmax_rows(ValueId a) {
    const Node& na = node_(a);
    auto [rows, cols] = rows_cols_(na, "log_softmax_rows");
    Node out = make_(Op::kLogSoftmaxRows, na.shape, a);
    const float* pa = data_(na);
    for (int i = 0; i < rows; ++i) {
      const float* row = pa + static_cast<size_t>(i) * cols;
      float* orow = out.own.data() + static_cast<size_t>(i) * cols;
      float mx = row[0];
      for (int j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
      double sum = 0.0;
      for (int j = 0; j < cols; ++j) sum += std::exp(static_cast<double>(row[j]) - mx);
      const float lse = static_cast<float>(std::log(sum)) + mx;
      for (int j = 0; j < cols; ++j) orow[j] = row[j] - lse;
    }
    return push_(std::move(out));
  }

  // Rows of `table` selected by index; duplicate ids accumulate on backward.
  ValueId gather_rows(ValueId table, std::vector<int32_t> ids) {
    const Node& nt = node_(table);
    if (nt.shape.size() != 2) shape_fail_("gather_rows", nt.shape);
    const int cols = nt.shape[1];
    for (int32_t id : ids)
      if (id < 0 || id >= nt.shape[0])
        throw ShapeError(std::string("gather_rows: row index ") + std::to_string(id) +
                         " out of range for " + shape_str(nt.shape));
    Node out = make_(Op::kGatherRows, {static_cast<int>(ids.size()), cols}, table);
    const float* pt = data_(nt);
    for (size_t i = 0; i < ids.size(); ++i)
      std::copy_n(pt + static_cast<size_t>(ids[i]) * cols, cols, out.own.data() + i * cols);
    out.idx = std::move(ids);
    return push_(std::move(out));
  }

  // One element per row, selected by column index; result is rank 1.
  ValueId pick_per_row(ValueId m, std::vector<int32_t> cols_idx) {
    const Node& nm = node_(m);
    if (nm.shape.size() != 2 || static_cast<int>(cols_idx.size()) != nm.shape[0])
      shape_fail_("pick_per_row", nm.shape);
    const int cols = nm.shape[1];
    for (int32_t c : cols_idx)
      if (c < 0 || c >= cols)
        throw ShapeError(std::string("pick_per_row: column index ") + std::to_string(c) +
                         " out of range for " + shape_str(nm.shape));
    Node out = make_(Op::kPickPerRow, {static_cast<int>(cols_idx.size())}, m);
    const float* pm = data_(nm);
    for (size_t i = 0; i < cols_idx.size(); ++i) out.own[i] = pm[i * cols + cols_idx[i]];
    out.idx = std::move(cols_idx);
    return push_(std::move(out));
  }

  ValueId concat_rows(ValueId a, ValueId b) {
    const Node& na = node_(a);
    const Node& nb = node_(b);
    if (na.shape.size() != 2 || nb.shape.size() != 2 || na.shape[1] != nb.shape[1])
      shape_fail_("concat_rows", na.shape, nb.shape);
    Node out = make_(Op::kConcatRows, {na.shape[0] + nb.shape[0], na.shape[1]}, a, b);
    const size_t asz = static_cast<size_t>(shape_numel(na.shape));
    std::copy_n(data_(na), asz, out.own.data());
    std::copy_n(data_(nb), shape_numel(nb.shape), out.own.data() + asz);
    return push_(std::move(out));
  }

  ValueId sum_all(ValueId a) {
    const Node& na = node_(a);
    Node out = make_(Op::kSumAll, {1}, a);
    const float* pa = data_(na);
    double s = 0.0;
    for (int64_t i = 0; i < shape_numel(na.shape); ++i) s += pa[i];
    out.own[0] = static_cast<float>(s);
    return push_(std::move(out));
  }

  ValueId mean_all(ValueId a) {
    const Node& na = node_(a);
    Node out = make_(Op::kMeanAll, {1}, a);
    const float* pa = data_(na);
    const int64_t n = shape_numel(na.shape);
    double s = 0.0;
    for (int64_t i = 0; i < n; ++i) s += pa[i];
    out.own[0] = static_cast<float>(s / static_cast<double>(n));
    return push_(std::move(out));
  }

  // y = x / sqrt(mean(x^2) + eps), per row.
  ValueId rmsnorm_rows(ValueId a) {
    const Node& na = node_(a);
    auto [rows, cols] = rows_cols_(na, "rmsnorm_rows");
    Node out = make_(Op::kRmsnormRows, na.shape, a);
    out.saved.resize(static_cast<size_t>(rows));
    const float* pa = data_(na);
    for (int i = 0; i < rows; ++i) {
      const float* row = pa + static_cast<size_t>(i) * cols;
      double ss = 0.0;
      for (int j = 0; j < cols; ++j) ss += static_cast<double>(row[j]) * row[j];
      const float r = static_cast<float>(std::sqrt(ss / cols + kRmsEps));
      out.saved[static_cast<size_t>(i)] = r;
      float* orow = out.own.data() + static_cast<size_t>(i) * cols;
      for (int j = 0; j < cols; ++j) orow[j] = row[j] / r;
    }
    return push_(std::move(out));
  }

  // Per-token clipped-surrogate objective with a KL penalty, as one fused
  // primitive so the only gradient path is through logp_new:
  //   ratio  = exp(logp_new - logp_old)
  //   term   = min(ratio * A, clamp(ratio, 1-eps, 1+eps) * A)
  //   kl     = exp(logp_ref - logp_new) - (logp_ref - logp_new) - 1
  //   out    = term - beta * kl
  ValueId token_surrogate(ValueId logp_new, const std::vector<float>& logp_old,
                          const std::vector<float>& logp_ref, const std::vector<float>& advantage,
                          float clip_eps, float kl_beta) {
    const Node& nn = node_(logp_new);
    if (nn.shape.size() != 1 || nn.shape[0] != static_cast<int>(logp_old.size()) ||
        logp_old.size() != logp_ref.size() || logp_old.size() != advantage.size())
      shape_fail_("token_surrogate", nn.shape,
                  {static_cast<int>(logp_old.size()), static_cast<int>(logp_ref.size()),
                   static_cast<int>(advantage.size())});
    const size_t n = logp_old.size();
    Node out = make_(Op::kTokenSurrogate, nn.shape, logp_new);
    out.saved.reserve(2 + 3 * n);
    out.saved.push_back(clip_eps);
    out.saved.push_back(kl_beta);
    out.saved.insert(out.saved.end(), logp_old.begin(), logp_old.end());
    out.saved.insert(out.saved.end(), logp_ref.begin(), logp_ref.end());
    out.saved.insert(out.saved.end(), advantage.begin(), advantage.end());
    const float* pn = data_(nn);
    for (size_t i = 0; i < n; ++i) {
      const double ratio = std::exp(static_cast<double>(pn[i]) - logp_old[i]);
      if (!std::isfinite(ratio))
        throw NumericError("token_surrogate: non-finite importance ratio");
      const double a = advantage[i];
      const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
      const double term = std::min(ratio * a, clipped * a);
      const double delta = static_cast<double>(logp_ref[i]) - pn[i];
      const double kl = std::exp(delta) - delta - 1.0;
      out.own[i] = static_cast<float>(term - kl_beta * kl);
    }
    return push_(std::move(out));
  }

  // ---- access ----------------------------------------------------------

  const Shape& shape(ValueId id) const { return node_(id).shape; }
  const float* data(ValueId id) const { return data_(node_(id)); }

  Tensor value(ValueId id) const {
    const Node& n = node_(id);
    const float* p = data_(n);
    return Tensor(n.shape, std::vector<float>(p, p + shape_numel(n.shape)));
  }

  size_t size() const { return nodes_.size(); }

  // ---- backward --------------------------------------------------------

  // Accumulates gradients for every grad-requiring node reachable from
  // `root`; unreachable grad-requiring leaves end up with zeros.
  void backward(ValueId root) {
    const Node& nr = node_(root);
    if (shape_numel(nr.shape) != 1)
      throw ShapeError("backward: root must be scalar, got " + shape_str(nr.shape));
    grads_.assign(nodes_.size(), {});
    for (size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].needs_grad) grads_[i].assign(static_cast<size_t>(shape_numel(nodes_[i].shape)), 0.0f);
    if (!nr.needs_grad) return;
    grads_[static_cast<size_t>(root)][0] = 1.0f;
    for (int32_t i = static_cast<int32_t>(nodes_.size()) - 1; i >= 0; --i) {
      const Node& n = nodes_[static_cast<size_t>(i)];
      if (!n.needs_grad || n.op == Op::kLeaf) continue;
      backward_one_(n, grads_[static_cast<size_t>(i)]);
    }
  }

  // Valid after backward(); zero-filled for grad-requiring leaves the root
  // does not reach. Empty for nodes that do not require gradients.
  const std::vector<float>& grad_data(ValueId id) const { return grads_.at(static_cast<size_t>(id)); }

  Tensor grad(ValueId id) const {
    const Node& n = node_(id);
    const auto& g = grads_.at(static_cast<size_t>(id));
    if (g.empty()) return Tensor::zeros(n.shape);
    return Tensor(n.shape, g);
  }

  // The keys of the gradient map: every grad-requiring leaf.
  std::vector<ValueId> grad_leaves() const {
    std::vector<ValueId> out;
    for (size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].op == Op::kLeaf && nodes_[i].needs_grad) out.push_back(static_cast<ValueId>(i));
    return out;
  }

 private:
  static constexpr double kRmsEps = 1e-6;

  struct Node {
    Shape shape;
    std::vector<float> own;
    const float* view = nullptr;
    Op op = Op::kLeaf;
    int32_t a = -1, b = -1;
    bool needs_grad = false;
    std::vector<float> saved;
    std::vector<int32_t> idx;
  };

  const Node& node_(ValueId id) const { return nodes_.at(static_cast<size_t>(id)); }
  static const float* data_(const Node& n) { return n.view ? n.view : n.own.data(); }

  Node make_(Op op, Shape shape, ValueId a, ValueId b = -1) {
    Node n;
    n.shape = std::move(shape);
    n.own.resize(static_cast<size_t>(shape_numel(n.shape)));
    n.op = op;
    n.a = a;
    n.b = b;
    n.needs_grad = node_(a).needs_grad || (b >= 0 && node_(b).needs_grad);
    return n;
  }

  ValueId push_(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<ValueId>(nodes_.size() - 1);
  }

  static std::pair<int, int> rows_cols_(const Node& n, const char* who) {
    if (n.shape.size() == 1) return {1, n.shape[0]};
    if (n.shape.size() == 2) return {n.shape[0], n.shape[1]};
    throw ShapeError(std::string(who) + ": expected rank 1 or 2, got " + shape_str(n.shape));
  }

  [[noreturn]] static void shape_fail_(const char* who, const Shape& a) {
    throw ShapeError(std::string(who) + ": invalid shape " + shape_str(a));
  }
  [[noreturn]] static void shape_fail_(const char* who, const Shape& a, const Shape& b) {
    throw ShapeError(std::string(who) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
  }

  float* gradbuf_(int32_t id) {
    auto& g = grads_[static_cast<size_t>(id)];
    return g.empty() ? nullptr : g.data();
  }

  void backward_one_(const Node& n, const std::vector<float>& g) {
    const Node& na = node_(n.a);
    float* ga = gradbuf_(n.a);
    const float* pa = data_(na);
    const int64_t numel = shape_numel(n.shape);
    switch (n.op) {
      case Op::kLeaf:
        break;
      case Op::kMatmul: {
        const Node& nb = node_(n.b);
        float* gb = gradbuf_(n.b);
        const int m = na.shape[0], k = na.shape[1], nn = nb.shape[1];
        if (ga) {
          // dA += G * B^T
          std::vector<float> bt(static_cast<size_t>(k) * nn);
          transpose_into(data_(nb), bt.data(), k, nn);
          mm_accumulate(g.data(), bt.data(), ga, m, nn, k);
        }
        if (gb) {
          // dB += A^T * G
          std::vector<float> at(static_cast<size_t>(m) * k);
          transpose_into(pa, at.data(), m, k);
          mm_accumulate(at.data(), g.data(), gb, k, m, nn);
        }
        break;
      }
      case Op::kTranspose: {
        if (ga) {
          const int r = n.shape[0], c = n.shape[1];
          for (int i = 0; i < r; ++i)
            for (int j = 0; j < c; ++j)
              ga[static_cast<size_t>(j) * r + i] += g[static_cast<size_t>(i) * c + j];
        }
        break;
      }
      case Op::kAdd: {
        float* gb = gradbuf_(n.b);
        for (int64_t i = 0; i < numel; ++i) {
          if (ga) ga[i] += g[static_cast<size_t>(i)];
          if (gb) gb[i] += g[static_cast<size_t>(i)];
        }
        break;
      }
      case Op::kAddRowvec: {
        float* gb = gradbuf_(n.b);
        const int rows = n.shape[0], cols = n.shape[1];
        for (int i = 0; i < rows; ++i)
          for (int j = 0; j < cols; ++j) {
            const float gv = g[static_cast<size_t>(i) * cols + j];
            if (ga) ga[static_cast<size_t>(i) * cols + j] += gv;
            if (gb) gb[j] += gv;
          }
        break;
      }
      case Op::kMul: {
        const Node& nb = node_(n.b);
        float* gb = gradbuf_(n.b);
        const float* pb = data_(nb);
        for (int64_t i = 0; i < numel; ++i) {
          if (ga) ga[i] += g[static_cast<size_t>(i)] * pb[i];
          if (gb) gb[i] += g[static_cast<size_t>(i)] * pa[i];
        }
        break;
      }
      case Op::kMulRowvec: {
        const Node& nb = node_(n.b);
        float* gb = gradbuf_(n.b);
        const float* pb = data_(nb);
        const int rows = n.shape[0], cols = n.shape[1];
        for (int i = 0; i < rows; ++i)
          for (int j = 0; j < cols; ++j) {
            const size_t ix = static_cast<size_t>(i) * cols + j;
            if (ga) ga[ix] += g[ix] * pb[j];
            if (gb) gb[j] += g[ix] * pa[ix];
          }
        break;
      }
      case Op::kScalarMul: {
        const float c = n.saved[0];
        if (ga)
          for (int64_t i = 0; i < numel; ++i) ga[i] += g[static_cast<size_t>(i)] * c;
        break;
      }
      case Op::kExp: {
        if (ga)
          for (int64_t i = 0; i < numel; ++i) ga[i] += g[static_cast<size_t>(i)] * n.own[static_cast<size_t>(i)];
        break;
      }
      case Op::kLog: {
        if (ga)
          for (int64_t i = 0; i < numel; ++i) ga[i] += g[static_cast<size_t>(i)] / pa[i];
        break;
      }
      case Op::kRelu: {
        if (ga)
          for (int64_t i = 0; i < numel; ++i)
            if (pa[i] > 0.0f) ga[i] += g[static_cast<size_t>(i)];
        break;
      }
      case Op::kSilu: {
        if (ga)
          for (int64_t i = 0; i < numel; ++i) {
            const float s = 1.0f / (1.0f + std::exp(-pa[i]));
            ga[i] += g[static_cast<size_t>(i)] * s * (1.0f + pa[i] * (1.0f - s));
          }
        break;
      }
      case Op::kSoftmaxRows: {
        if (!ga) break;
        const auto [rows, cols] = rows_cols_(n, "softmax_rows");
        for (int i = 0; i < rows; ++i) {
          const float* s = n.own.data() + static_cast<size_t>(i) * cols;
          const float* gr = g.data() + static_cast<size_t>(i) * cols;
          double dot = 0.0;
          for (int j = 0; j < cols; ++j) dot += static_cast<double>(gr[j]) * s[j];
          float* gar = ga + static_cast<size_t>(i) * cols;
          for (int j = 0; j < cols; ++j) gar[j] += s[j] * (gr[j] - static_cast<float>(dot));
        }
        break;
      }
      case Op::kLogSoftmaxRows: {
        if (!ga) break;
        const auto [rows, cols] = rows_cols_(n, "log_softmax_rows");
        for (int i = 0; i < rows; ++i) {
          const float* ls = n.own.data() + static_cast<size_t>(i) * cols;
          const float* gr = g.data() + static_cast<size_t>(i) * cols;
          double gsum = 0.0;
          for (int j = 0; j < cols; ++j) gsum += gr[j];
          float* gar = ga + static_cast<size_t>(i) * cols;
          for (int j = 0; j < cols; ++j)
            gar[j] += gr[j] - std::exp(ls[j]) * static_cast<float>(gsum);
        }
        break;
      }
      case Op::kGatherRows: {
        if (!ga) break;
        const int cols = n.shape[1];
        for (size_t i = 0; i < n.idx.size(); ++i) {
          float* dst = ga + static_cast<size_t>(n.idx[i]) * cols;
          const float* src = g.data() + i * cols;
          for (int j = 0; j < cols; ++j) dst[j] += src[j];
        }
        break;
      }
      case Op::kPickPerRow: {
        if (!ga) break;
        const int cols = na.shape[1];
        for (size_t i = 0; i < n.idx.size(); ++i) ga[i * cols + n.idx[i]] += g[i];
        break;
      }
      case Op::kConcatRows: {
        float* gb = gradbuf_(n.b);
        const int64_t asz = shape_numel(na.shape);
        if (ga)
          for (int64_t i = 0; i < asz; ++i) ga[i] += g[static_cast<size_t>(i)];
        if (gb) {
          const int64_t bsz = shape_numel(node_(n.b).shape);
          for (int64_t i = 0; i < bsz; ++i) gb[i] += g[static_cast<size_t>(asz + i)];
        }
        break;
      }
      case Op::kSumAll: {
        if (ga) {
          const int64_t an = shape_numel(na.shape);
          for (int64_t i = 0; i < an; ++i) ga[i] += g[0];
        }
        break;
      }
      case Op::kMeanAll: {
        if (ga) {
          const int64_t an = shape_numel(na.shape);
          const float gv = g[0] / static_cast<float>(an);
          for (int64_t i = 0; i < an; ++i) ga[i] += gv;
        }
        break;
      }
      case Op::kRmsnormRows: {
        if (!ga) break;
        const auto [rows, cols] = rows_cols_(n, "rmsnorm_rows");
        for (int i = 0; i < rows; ++i) {
          const float r = n.saved[static_cast<size_t>(i)];
          const float* y = n.own.data() + static_cast<size_t>(i) * cols;
          const float* gr = g.data() + static_cast<size_t>(i) * cols;
          double dot = 0.0;
          for (int j = 0; j < cols; ++j) dot += static_cast<double>(gr[j]) * y[j];
          const float corr = static_cast<float>(dot / cols);
          float* gar = ga + static_cast<size_t>(i) * cols;
          for (int j = 0; j < cols; ++j) gar[j] += (gr[j] - y[j] * corr) / r;
        }
        break;
      }
      case Op::kTokenSurrogate: {
        if (!ga) break;
        const size_t cnt = n.own.size();
        const float eps = n.saved[0], beta = n.saved[1];
        const float* lpo = n.saved.data() + 2;
        const float* lpr = n.saved.data() + 2 + cnt;
        const float* adv = n.saved.data() + 2 + 2 * cnt;
        for (size_t i = 0; i < cnt; ++i) {
          const double ratio = std::exp(static_cast<double>(pa[i]) - lpo[i]);
          const double a = adv[i];
          const double clipped = std::clamp(ratio, 1.0 - static_cast<double>(eps), 1.0 + static_cast<double>(eps));
          // gradient of min(ratio*A, clipped*A) w.r.t. logp_new; the
          // unclipped branch wins ties, the clipped branch only has slope
          // while the ratio is inside the clip interval
          double dterm;
          if (ratio * a <= clipped * a) {
            dterm = ratio * a;
          } else {
            const bool inside = ratio > 1.0 - eps && ratio < 1.0 + eps;
            dterm = inside ? ratio * a : 0.0;
          }
          const double delta = static_cast<double>(lpr[i]) - pa[i];
          const double dkl = 1.0 - std::exp(delta);
          ga[i] += g[i] * static_cast<float>(dterm - beta * dkl);
        }
        break;
      }
    }
  }

  std::vector<Node> nodes_;
  std::vector<std::vector<float>> grads_;
};

}  // namespace uarpo
