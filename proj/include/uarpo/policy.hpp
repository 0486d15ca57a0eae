#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "uarpo/autodiff.hpp"
#include "uarpo/image_io.hpp"
#include "uarpo/rng.hpp"
#include "uarpo/series.hpp"
#include "uarpo/tensor.hpp"
#include "uarpo/vocab.hpp"

namespace uarpo {

struct PolicyConfig {
  int image_height = 64;
  int image_width = 96;
  int patch = 8;
  int d_model = 64;
  int n_blocks = 2;
  int ffn_mult = 4;
  int max_len = 64;

  void validate() const {
    if (patch < 2) throw ConfigError("model.patch: must be >= 2");
    if (image_height % patch != 0 || image_width % patch != 0)
      throw ConfigError("model: image " + std::to_string(image_height) + "x" +
                        std::to_string(image_width) + " not divisible by patch " +
                        std::to_string(patch));
    if (d_model < 8) throw ConfigError("model.d_model: must be >= 8");
    if (n_blocks < 1) throw ConfigError("model.n_blocks: must be >= 1");
    if (ffn_mult < 1) throw ConfigError("model.ffn_mult: must be >= 1");
    if (max_len < 4) throw ConfigError("model.max_len: must be >= 4");
  }

  int n_patches() const { return (image_height / patch) * (image_width / patch); }
  int patch_dim() const { return patch * patch; }
  // image patches + quantity token + horizon token + generated tokens
  int seq_capacity() const { return n_patches() + 2 + max_len; }
};

// A tiny single-head decoder conditioned on chart patches and the target
// encoding. Snapshotting a policy is a plain value copy.
struct PolicyParams {
  PolicyConfig cfg;

  struct Block {
    Tensor wq, wk, wv, wo;
    Tensor ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  };

  Tensor patch_proj;  // [patch_dim, d]
  Tensor patch_bias;  // [d]
  Tensor tok_emb;     // [vocab, d]
  Tensor pos_emb;     // [seq_capacity, d]
  std::vector<Block> blocks;
  Tensor out_proj;  // [d, vocab]
  Tensor out_bias;  // [vocab]

  static PolicyParams init(const PolicyConfig& cfg, uint64_t seed) {
    cfg.validate();
    PolicyParams p;
    p.cfg = cfg;
    Rng rng = Rng::keyed(seed, 0x1417u);
    const float s = 0.08f;
    const int d = cfg.d_model;
    p.patch_proj = Tensor::randn({cfg.patch_dim(), d}, s, rng);
    p.patch_bias = Tensor::zeros({d});
    p.tok_emb = Tensor::randn({kVocabSize, d}, s, rng);
    p.pos_emb = Tensor::randn({cfg.seq_capacity(), d}, s, rng);
    for (int b = 0; b < cfg.n_blocks; ++b) {
      Block blk;
      blk.wq = Tensor::randn({d, d}, s, rng);
      blk.wk = Tensor::randn({d, d}, s, rng);
      blk.wv = Tensor::randn({d, d}, s, rng);
      blk.wo = Tensor::randn({d, d}, s, rng);
      blk.ffn_w1 = Tensor::randn({d, d * cfg.ffn_mult}, s, rng);
      blk.ffn_b1 = Tensor::zeros({d * cfg.ffn_mult});
      blk.ffn_w2 = Tensor::randn({d * cfg.ffn_mult, d}, s, rng);
      blk.ffn_b2 = Tensor::zeros({d});
      p.blocks.push_back(std::move(blk));
    }
    p.out_proj = Tensor::randn({d, kVocabSize}, s, rng);
    p.out_bias = Tensor::zeros({kVocabSize});
    return p;
  }

  std::vector<std::pair<std::string, Tensor*>> named_tensors() {
    std::vector<std::pair<std::string, Tensor*>> out = {
        {"patch_proj", &patch_proj},
        {"patch_bias", &patch_bias},
        {"tok_emb", &tok_emb},
        {"pos_emb", &pos_emb},
    };
    for (size_t b = 0; b < blocks.size(); ++b) {
      const std::string pre = "block" + std::to_string(b) + ".";
      out.emplace_back(pre + "attn_wq", &blocks[b].wq);
      out.emplace_back(pre + "attn_wk", &blocks[b].wk);
      out.emplace_back(pre + "attn_wv", &blocks[b].wv);
      out.emplace_back(pre + "attn_wo", &blocks[b].wo);
      out.emplace_back(pre + "ffn_w1", &blocks[b].ffn_w1);
      out.emplace_back(pre + "ffn_b1", &blocks[b].ffn_b1);
      out.emplace_back(pre + "ffn_w2", &blocks[b].ffn_w2);
      out.emplace_back(pre + "ffn_b2", &blocks[b].ffn_b2);
    }
    out.emplace_back("out_proj", &out_proj);
    out.emplace_back("out_bias", &out_bias);
    return out;
  }

  std::vector<std::pair<std::string, const Tensor*>> named_tensors() const {
    auto mut = const_cast<PolicyParams*>(this)->named_tensors();
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(mut.size());
    for (auto& [n, t] : mut) out.emplace_back(n, t);
    return out;
  }

  int64_t param_count() const {
    int64_t n = 0;
    for (const auto& [name, t] : named_tensors()) n += t->numel();
    return n;
  }

  bool all_finite() const {
    for (const auto& [name, t] : named_tensors())
      if (!t->all_finite()) return false;
    return true;
  }
};

// One sampled output: token ids with the log-probabilities they were drawn
// at, under the sampling policy and temperature.
struct Rollout {
  std::vector<int32_t> tokens;
  std::vector<float> logps;
  bool terminated_by_eos = false;
};

namespace detail {

inline Tensor image_patch_matrix(const Image& im, const PolicyConfig& cfg) {
  if (im.height != cfg.image_height || im.width != cfg.image_width)
    throw ConfigError("policy: image " + std::to_string(im.height) + "x" + std::to_string(im.width) +
                      " does not match model " + std::to_string(cfg.image_height) + "x" +
                      std::to_string(cfg.image_width));
  const int pr = cfg.image_height / cfg.patch;
  const int pc = cfg.image_width / cfg.patch;
  Tensor out = Tensor::zeros({pr * pc, cfg.patch_dim()});
  for (int i = 0; i < pr; ++i)
    for (int j = 0; j < pc; ++j) {
      float* dst = out.data.data() + static_cast<size_t>(i * pc + j) * cfg.patch_dim();
      for (int y = 0; y < cfg.patch; ++y)
        for (int x = 0; x < cfg.patch; ++x)
          dst[y * cfg.patch + x] =
              static_cast<float>(im.at(i * cfg.patch + y, j * cfg.patch + x)) / 255.0f;
    }
  return out;
}

inline std::vector<int32_t> iota_ids(int from, int count) {
  std::vector<int32_t> v(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) v[static_cast<size_t>(i)] = from + i;
  return v;
}

// Registered tape leaves for one forward pass; views only, no copies.
struct PolicyLeaves {
  ValueId patch_proj, patch_bias, tok_emb, pos_emb;
  struct Block {
    ValueId wq, wk, wv, wo, ffn_w1, ffn_b1, ffn_w2, ffn_b2;
  };
  std::vector<Block> blocks;
  ValueId out_proj, out_bias;
  std::vector<ValueId> ordered;  // same order as PolicyParams::named_tensors
};

inline PolicyLeaves register_leaves(Tape& tape, const PolicyParams& p, bool requires_grad) {
  PolicyLeaves l;
  auto reg = [&](const Tensor& t) {
    const ValueId id = tape.leaf_view(t.data.data(), t.shape, requires_grad);
    l.ordered.push_back(id);
    return id;
  };
  l.patch_proj = reg(p.patch_proj);
  l.patch_bias = reg(p.patch_bias);
  l.tok_emb = reg(p.tok_emb);
  l.pos_emb = reg(p.pos_emb);
  for (const auto& b : p.blocks) {
    PolicyLeaves::Block lb;
    lb.wq = reg(b.wq);
    lb.wk = reg(b.wk);
    lb.wv = reg(b.wv);
    lb.wo = reg(b.wo);
    lb.ffn_w1 = reg(b.ffn_w1);
    lb.ffn_b1 = reg(b.ffn_b1);
    lb.ffn_w2 = reg(b.ffn_w2);
    lb.ffn_b2 = reg(b.ffn_b2);
    l.blocks.push_back(lb);
  }
  l.out_proj = reg(p.out_proj);
  l.out_bias = reg(p.out_bias);
  return l;
}

inline Tensor causal_mask(int s) {
  Tensor m = Tensor::zeros({s, s});
  for (int i = 0; i < s; ++i)
    for (int j = i + 1; j < s; ++j) m.at(i, j) = -1e9f;
  return m;
}

// Patch embeddings with positions added: [n_patches, d].
inline ValueId encode_image_graph(Tape& tape, const PolicyLeaves& l, const PolicyParams& p,
                                  const Image& im) {
  const ValueId patches = tape.constant(image_patch_matrix(im, p.cfg));
  const ValueId proj = tape.add_rowvec(tape.matmul(patches, l.patch_proj), l.patch_bias);
  const ValueId pos = tape.gather_rows(l.pos_emb, iota_ids(0, p.cfg.n_patches()));
  return tape.add(proj, pos);
}

// Full decoder stack over [image patches, quantity, horizon, tokens...];
// returns the final normed hidden states [S, d].
inline ValueId policy_hidden(Tape& tape, const PolicyLeaves& l, const PolicyParams& p,
                             const Image& im, const TargetSpec& target,
                             std::span<const int32_t> tokens) {
  const PolicyConfig& cfg = p.cfg;
  if (static_cast<int>(tokens.size()) > cfg.max_len)
    throw ConfigError("policy: token prefix longer than max_len");
  for (int32_t t : tokens)
    if (t < 0 || t >= kVocabSize)
      throw ConfigError("policy: unknown token id " + std::to_string(t));
  const int P = cfg.n_patches();
  const int T = static_cast<int>(tokens.size());
  const int S = P + 2 + T;

  const ValueId img = encode_image_graph(tape, l, p, im);
  std::vector<int32_t> tok_ids;
  tok_ids.reserve(static_cast<size_t>(T) + 2);
  tok_ids.push_back(quantity_token(target.quantity));
  tok_ids.push_back(horizon_token(target.horizon));
  tok_ids.insert(tok_ids.end(), tokens.begin(), tokens.end());
  const ValueId tok_part =
      tape.add(tape.gather_rows(l.tok_emb, tok_ids), tape.gather_rows(l.pos_emb, iota_ids(P, 2 + T)));
  ValueId x = tape.concat_rows(img, tok_part);

  const ValueId mask = tape.constant(causal_mask(S));
  const float scale = 1.0f / std::sqrt(static_cast<float>(cfg.d_model));
  for (const auto& blk : l.blocks) {
    const ValueId xn = tape.rmsnorm_rows(x);
    const ValueId q = tape.matmul(xn, blk.wq);
    const ValueId k = tape.matmul(xn, blk.wk);
    const ValueId v = tape.matmul(xn, blk.wv);
    const ValueId scores = tape.add(tape.scalar_mul(tape.matmul(q, tape.transpose(k)), scale), mask);
    const ValueId att = tape.matmul(tape.softmax_rows(scores), v);
    x = tape.add(x, tape.matmul(att, blk.wo));
    const ValueId x2 = tape.rmsnorm_rows(x);
    const ValueId ff = tape.add_rowvec(
        tape.matmul(tape.silu(tape.add_rowvec(tape.matmul(x2, blk.ffn_w1), blk.ffn_b1)), blk.ffn_w2),
        blk.ffn_b2);
    x = tape.add(x, ff);
  }
  return tape.rmsnorm_rows(x);
}

inline ValueId logits_for_rows(Tape& tape, const PolicyLeaves& l, ValueId hidden,
                               std::vector<int32_t> rows) {
  return tape.add_rowvec(tape.matmul(tape.gather_rows(hidden, std::move(rows)), l.out_proj),
                         l.out_bias);
}

// PAD is never sampled: its logit is pushed to -inf before the softmax, in
// both the sampling path and the training log-prob path.
inline Tensor pad_mask_row() {
  Tensor m = Tensor::zeros({kVocabSize});
  m.data[static_cast<size_t>(tok::kPad)] = -1e30f;
  return m;
}

// Log-probabilities of the given sampled tokens, one per token, under the
// policy at `temperature`: log_softmax(mask(logits)/T)[token].
inline ValueId rollout_logp_graph(Tape& tape, const PolicyLeaves& l, const PolicyParams& p,
                                  const Image& im, const TargetSpec& target,
                                  const std::vector<int32_t>& tokens, float temperature) {
  if (tokens.empty()) throw ConfigError("policy: empty rollout");
  if (!(temperature > 0.0f)) throw ConfigError("policy: training temperature must be > 0");
  const int P = p.cfg.n_patches();
  const int T = static_cast<int>(tokens.size());
  // feed all tokens but the last; row P+1+j predicts token j
  const std::span<const int32_t> prefix(tokens.data(), static_cast<size_t>(T - 1));
  const ValueId hidden = policy_hidden(tape, l, p, im, target, prefix);
  const ValueId logits = logits_for_rows(tape, l, hidden, iota_ids(P + 1, T));
  Tensor mask2d = Tensor::zeros({T, kVocabSize});
  for (int i = 0; i < T; ++i) mask2d.at(i, tok::kPad) = -1e30f;
  const ValueId masked = tape.add(logits, tape.constant(mask2d));
  const ValueId ls = tape.log_softmax_rows(tape.scalar_mul(masked, 1.0f / temperature));
  return tape.pick_per_row(ls, tokens);
}

}  // namespace detail

// Patch-embedding sequence (with positions) for an image: [n_patches, d].
inline Tensor encode_image(const PolicyParams& p, const Image& im) {
  Tape tape;
  const auto leaves = detail::register_leaves(tape, p, false);
  return tape.value(detail::encode_image_graph(tape, leaves, p, im));
}

// Next-token logit rows: row 0 predicts the first output token, row j the
// token following prefix[0..j). Causal: appending a token never changes
// earlier rows.
inline Tensor forward_logits(const PolicyParams& p, const Image& im, const TargetSpec& target,
                             std::span<const int32_t> prefix) {
  Tape tape;
  const auto leaves = detail::register_leaves(tape, p, false);
  const ValueId hidden = detail::policy_hidden(tape, leaves, p, im, target, prefix);
  const int P = p.cfg.n_patches();
  return tape.value(detail::logits_for_rows(
      tape, leaves, hidden, detail::iota_ids(P + 1, static_cast<int>(prefix.size()) + 1)));
}

namespace detail {

// One decode step: logits row for the next position, PAD masked, scaled by
// temperature when positive, log-softmaxed. Returns the chosen token and its
// stored log-probability.
inline std::pair<int32_t, float> decode_step(const PolicyParams& p, const Image& im,
                                             const TargetSpec& target,
                                             const std::vector<int32_t>& sofar, float temperature,
                                             Rng* rng) {
  Tape tape;
  const auto leaves = register_leaves(tape, p, false);
  const ValueId hidden = policy_hidden(tape, leaves, p, im, target,
                                       std::span<const int32_t>(sofar.data(), sofar.size()));
  const int P = p.cfg.n_patches();
  const ValueId logits =
      logits_for_rows(tape, leaves, hidden, {P + 1 + static_cast<int32_t>(sofar.size())});
  const ValueId masked = tape.add_rowvec(logits, tape.constant(pad_mask_row()));
  const float t_eff = temperature > 0.0f ? temperature : 1.0f;
  const ValueId ls = tape.log_softmax_rows(tape.scalar_mul(masked, 1.0f / t_eff));
  const float* row = tape.data(ls);

  if (temperature <= 0.0f) {
    // greedy: argmax, lowest id wins ties
    int32_t best = 0;
    float best_v = -std::numeric_limits<float>::infinity();
    for (int32_t i = 0; i < kVocabSize; ++i)
      if (row[i] > best_v) {
        best_v = row[i];
        best = i;
      }
    return {best, row[best]};
  }
  const double u = rng->uniform01();
  double cum = 0.0;
  for (int32_t i = 0; i < kVocabSize; ++i) {
    cum += std::exp(static_cast<double>(row[i]));
    if (u < cum) return {i, row[i]};
  }
  return {kVocabSize - 1, row[kVocabSize - 1]};
}

inline Rollout sample_one(const PolicyParams& p, const Image& im, const TargetSpec& target,
                          float temperature, int max_len, Rng rng) {
  Rollout r;
  while (static_cast<int>(r.tokens.size()) < max_len) {
    const auto [tok_id, logp] = decode_step(p, im, target, r.tokens, temperature, &rng);
    r.tokens.push_back(tok_id);
    r.logps.push_back(logp);
    if (tok_id == tok::kEos) {
      r.terminated_by_eos = true;
      break;
    }
  }
  return r;
}

}  // namespace detail

// G rollouts from the policy; rollout i draws from an RNG stream keyed by
// (seed, sample_id, i), so results do not depend on scheduling order.
inline std::vector<Rollout> sample_group(const PolicyParams& p, const Image& im,
                                         const TargetSpec& target, int group_size, float temperature,
                                         int max_len, uint64_t seed, uint64_t sample_id) {
  if (group_size < 2) throw ConfigError("sample_group: group size must be >= 2");
  if (temperature < 0.0f) throw ConfigError("sample_group: temperature must be >= 0");
  if (max_len < 1 || max_len > p.cfg.max_len)
    throw ConfigError("sample_group: max_len out of range");
  std::vector<Rollout> out;
  out.reserve(static_cast<size_t>(group_size));
  for (int i = 0; i < group_size; ++i)
    out.push_back(detail::sample_one(p, im, target, temperature, max_len,
                                     Rng::keyed(seed, sample_id, static_cast<uint64_t>(i))));
  return out;
}

inline Rollout greedy_decode(const PolicyParams& p, const Image& im, const TargetSpec& target,
                             int max_len) {
  Rng unused(0);
  return detail::sample_one(p, im, target, 0.0f, max_len, unused);
}

}  // namespace uarpo
