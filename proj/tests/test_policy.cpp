#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "support/policy_fd.hpp"
#include "uarpo/checkpoint.hpp"
#include "uarpo/policy.hpp"
#include "uarpo/render.hpp"

using namespace uarpo;
namespace fs = std::filesystem;

namespace {

PolicyConfig tiny_cfg() {
  PolicyConfig cfg;
  cfg.image_height = 16;
  cfg.image_width = 24;
  cfg.patch = 8;
  cfg.d_model = 16;
  cfg.n_blocks = 2;
  cfg.ffn_mult = 2;
  cfg.max_len = 12;
  return cfg;
}

Image noise_image(int h, int w, uint64_t seed) {
  Rng rng(seed);
  Image im = Image::blank(h, w);
  for (auto& p : im.px) p = static_cast<uint8_t>(rng.below(256));
  return im;
}

}  // namespace

TEST_CASE("a 64x96 grid with patch 8 yields 96 patch embeddings") {
  PolicyConfig cfg;  // defaults: 64x96, patch 8
  CHECK(cfg.n_patches() == 96);
  const PolicyParams p = PolicyParams::init(cfg, 1);
  const Tensor enc = encode_image(p, noise_image(64, 96, 2));
  CHECK(enc.shape == Shape{96, cfg.d_model});
}

TEST_CASE("indivisible image dimensions are rejected at construction") {
  PolicyConfig cfg = tiny_cfg();
  cfg.image_width = 25;
  CHECK_THROWS_AS(PolicyParams::init(cfg, 1), ConfigError);
}

TEST_CASE("all-zero image embeds to positional embedding plus bias") {
  const PolicyParams p = PolicyParams::init(tiny_cfg(), 3);
  const Image zero = Image::blank(16, 24, 0);
  const Tensor enc = encode_image(p, zero);
  for (int i = 0; i < enc.rows(); ++i)
    for (int j = 0; j < enc.cols(); ++j)
      CHECK(enc.at(i, j) ==
            doctest::Approx(p.pos_emb.at(i, j) + p.patch_bias.data[static_cast<size_t>(j)])
                .epsilon(1e-6));
}

TEST_CASE("permuting two patches permutes exactly those pre-position embeddings") {
  const PolicyParams p = PolicyParams::init(tiny_cfg(), 4);
  Image a = noise_image(16, 24, 5);
  Image b = a;
  // swap patch (0,0) with patch (1,2): patch grid is 2x3
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) std::swap(b.at(y, x), b.at(8 + y, 16 + x));
  const Tensor ea = encode_image(p, a);
  const Tensor eb = encode_image(p, b);
  auto prepos = [&](const Tensor& e, int row, int col) {
    return e.at(row, col) - p.pos_emb.at(row, col);
  };
  const int pa = 0, pb = 5;  // row-major patch indices of the swap
  for (int r = 0; r < ea.rows(); ++r)
    for (int c = 0; c < ea.cols(); ++c) {
      const float got = prepos(eb, r, c);
      const float want = r == pa ? prepos(ea, pb, c) : r == pb ? prepos(ea, pa, c) : prepos(ea, r, c);
      CHECK(got == doctest::Approx(want).epsilon(1e-6));
    }
}

TEST_CASE("probability rows sum to one") {
  const PolicyParams p = PolicyParams::init(tiny_cfg(), 6);
  const Image im = noise_image(16, 24, 7);
  const std::vector<int32_t> prefix = {tok::kThinkOpen, tok::kFiller0, tok::kThinkClose};
  const Tensor logits = forward_logits(p, im, {Quantity::price, 21}, prefix);
  REQUIRE(logits.shape == Shape{4, kVocabSize});
  for (int r = 0; r < logits.rows(); ++r) {
    double mx = logits.at(r, 0);
    for (int c = 1; c < kVocabSize; ++c) mx = std::max(mx, static_cast<double>(logits.at(r, c)));
    double sum = 0.0;
    for (int c = 0; c < kVocabSize; ++c) sum += std::exp(logits.at(r, c) - mx);
    double prob_total = 0.0;
    for (int c = 0; c < kVocabSize; ++c) prob_total += std::exp(logits.at(r, c) - mx) / sum;
    CHECK(prob_total == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("appending a token leaves earlier logit rows unchanged") {
  const PolicyParams p = PolicyParams::init(tiny_cfg(), 8);
  const Image im = noise_image(16, 24, 9);
  const TargetSpec target{Quantity::volatility, 63};
  std::vector<int32_t> prefix = {tok::kThinkOpen, tok::kFiller0 + 3};
  const Tensor before = forward_logits(p, im, target, prefix);
  prefix.push_back(tok::kFiller0 + 7);
  const Tensor after = forward_logits(p, im, target, prefix);
  REQUIRE(after.rows() == before.rows() + 1);
  for (int r = 0; r < before.rows(); ++r)
    for (int c = 0; c < kVocabSize; ++c)
      CHECK(std::abs(after.at(r, c) - before.at(r, c)) <= 1e-6);
}

TEST_CASE("different images give different first-row logits") {
  const PolicyParams p = PolicyParams::init(tiny_cfg(), 10);
  const Tensor la = forward_logits(p, noise_image(16, 24, 11), {Quantity::price, 5}, {});
  const Tensor lb = forward_logits(p, noise_image(16, 24, 12), {Quantity::price, 5}, {});
  double diff = 0.0;
  for (int c = 0; c < kVocabSize; ++c) diff += std::abs(la.at(0, c) - lb.at(0, c));
  CHECK(diff > 1e-4);
}

TEST_CASE("unknown token ids are rejected") {
  const PolicyParams p = PolicyParams::init(tiny_cfg(), 13);
  const std::vector<int32_t> bad = {kVocabSize};
  CHECK_THROWS_AS(forward_logits(p, noise_image(16, 24, 14), {Quantity::price, 5}, bad),
                  ConfigError);
}

TEST_CASE("temperature zero sampling is greedy and identical across the group") {
  const PolicyParams p = PolicyParams::init(tiny_cfg(), 15);
  const Image im = noise_image(16, 24, 16);
  const auto group = sample_group(p, im, {Quantity::price, 5}, 4, 0.0f, 12, 99, 0);
  REQUIRE(group.size() == 4);
  for (const auto& r : group) {
    CHECK(r.tokens == group[0].tokens);
    CHECK(r.tokens.size() >= 1);
    CHECK(r.tokens.size() <= 12);
  }
  const Rollout g1 = greedy_decode(p, im, {Quantity::price, 5}, 12);
  const Rollout g2 = greedy_decode(p, im, {Quantity::price, 5}, 12);
  CHECK(g1.tokens == g2.tokens);
  CHECK(g1.tokens == group[0].tokens);
}

TEST_CASE("rollouts never contain PAD and keep logps non-positive") {
  const PolicyParams p = PolicyParams::init(tiny_cfg(), 17);
  const Image im = noise_image(16, 24, 18);
  const auto group = sample_group(p, im, {Quantity::volatility, 21}, 6, 1.2f, 12, 7, 3);
  for (const auto& r : group) {
    CHECK(!r.tokens.empty());
    for (size_t i = 0; i < r.tokens.size(); ++i) {
      CHECK(r.tokens[i] != tok::kPad);
      CHECK(r.logps[i] <= 0.0f);
      if (r.tokens[i] == tok::kEos) CHECK(i == r.tokens.size() - 1);
    }
  }
}

TEST_CASE("sampling is reproducible per (seed, sample, rollout) key") {
  const PolicyParams p = PolicyParams::init(tiny_cfg(), 19);
  const Image im = noise_image(16, 24, 20);
  const auto a = sample_group(p, im, {Quantity::price, 63}, 4, 1.0f, 12, 42, 5);
  const auto b = sample_group(p, im, {Quantity::price, 63}, 4, 1.0f, 12, 42, 5);
  for (int i = 0; i < 4; ++i) {
    CHECK(a[static_cast<size_t>(i)].tokens == b[static_cast<size_t>(i)].tokens);
    CHECK(a[static_cast<size_t>(i)].logps == b[static_cast<size_t>(i)].logps);
  }
  const auto c = sample_group(p, im, {Quantity::price, 63}, 4, 1.0f, 12, 43, 5);
  bool any_diff = false;
  for (int i = 0; i < 4; ++i) any_diff |= a[static_cast<size_t>(i)].tokens != c[static_cast<size_t>(i)].tokens;
  CHECK(any_diff);
}

TEST_CASE("stored log-probs equal a fresh forward recomputation") {
  const PolicyParams p = PolicyParams::init(tiny_cfg(), 21);
  const Image im = noise_image(16, 24, 22);
  const TargetSpec target{Quantity::price, 21};
  const float temp = 0.8f;
  const auto group = sample_group(p, im, target, 4, temp, 12, 11, 0);
  for (const auto& r : group) {
    Tape tape;
    const auto leaves = detail::register_leaves(tape, p, false);
    const ValueId lp = detail::rollout_logp_graph(tape, leaves, p, im, target, r.tokens, temp);
    for (size_t i = 0; i < r.tokens.size(); ++i)
      CHECK(std::abs(tape.data(lp)[i] - r.logps[i]) <= 1e-5);
  }
}

TEST_CASE("sampled-sequence log-prob gradient matches finite differences") {
  PolicyParams p = PolicyParams::init(tiny_cfg(), 23);
  const Image im = noise_image(16, 24, 24);
  const TargetSpec target{Quantity::volatility, 5};
  const std::vector<int32_t> tokens = {tok::kThinkOpen, tok::kFiller0 + 2, tok::kThinkClose,
                                       tok::kAnswerOpen, tok::kUp,          tok::kAnswerClose,
                                       tok::kEos};
  Rng rng(25);
  const auto res = testsupport::policy_fd_check(p, im, target, tokens, 4, rng);
  CHECK(res.checked == 4 * 22);
  CHECK(res.max_rel <= 1e-3);
}

TEST_CASE("checkpoint round trip is bit exact") {
  const fs::path dir = fs::temp_directory_path() / "uarpo_policy_ckpt";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const PolicyParams p = PolicyParams::init(tiny_cfg(), 26);
  save_checkpoint(p, dir / "m.uarpo");
  const PolicyParams q = load_checkpoint(dir / "m.uarpo");
  for (size_t i = 0; i < p.named_tensors().size(); ++i) {
    const auto [pn, pt] = p.named_tensors()[i];
    const auto [qn, qt] = q.named_tensors()[i];
    CHECK(pn == qn);
    CHECK(pt->shape == qt->shape);
    CHECK(pt->data == qt->data);
  }
}

TEST_CASE("truncated checkpoint is reported as truncated") {
  const fs::path dir = fs::temp_directory_path() / "uarpo_policy_ckpt2";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const PolicyParams p = PolicyParams::init(tiny_cfg(), 27);
  save_checkpoint(p, dir / "m.uarpo");
  const auto full = fs::file_size(dir / "m.uarpo");
  std::ifstream in(dir / "m.uarpo", std::ios::binary);
  std::vector<char> bytes(static_cast<size_t>(full) / 2);
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  std::ofstream out(dir / "trunc.uarpo", std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  CHECK_THROWS_WITH_AS(load_checkpoint(dir / "trunc.uarpo"), doctest::Contains("truncated"),
                       IoError);
}

TEST_CASE("magic mismatch is a distinct diagnostic") {
  const fs::path dir = fs::temp_directory_path() / "uarpo_policy_ckpt3";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::ofstream f(dir / "bad.uarpo", std::ios::binary);
  f << "NOPE" << std::string(64, '\0');
  f.close();
  CHECK_THROWS_WITH_AS(load_checkpoint(dir / "bad.uarpo"), doctest::Contains("magic"), IoError);
}

TEST_CASE("checkpoint with a different vocab size names the offending tensor") {
  const fs::path dir = fs::temp_directory_path() / "uarpo_policy_ckpt4";
  fs::remove_all(dir);
  fs::create_directories(dir);
  PolicyParams p = PolicyParams::init(tiny_cfg(), 28);
  // shrink the embedding as if the file came from a 40-token build
  p.tok_emb = Tensor::zeros({kVocabSize - 1, tiny_cfg().d_model});
  save_checkpoint(p, dir / "wrong.uarpo");
  CHECK_THROWS_WITH_AS(load_checkpoint(dir / "wrong.uarpo"), doctest::Contains("tok_emb"), IoError);
}
