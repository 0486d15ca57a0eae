#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "uarpo/rewards.hpp"
#include "uarpo/rng.hpp"

using namespace uarpo;
using namespace uarpo::tok;

namespace {
std::vector<int32_t> valid_tokens(int32_t dir, std::initializer_list<int> conf_digits,
                                  int think = 2) {
  std::vector<int32_t> t = {kThinkOpen};
  for (int i = 0; i < think; ++i) t.push_back(kFiller0 + (i % kNumFiller));
  t.push_back(kThinkClose);
  t.push_back(kAnswerOpen);
  t.push_back(dir);
  t.push_back(kAnswerClose);
  t.push_back(kConfOpen);
  for (int d : conf_digits) t.push_back(digit_token(d));
  t.push_back(kConfClose);
  t.push_back(kEos);
  return t;
}
}  // namespace

TEST_CASE("grammar instance parses with all fields") {
  const auto toks = valid_tokens(kUp, {8, 5});
  const ParsedOutput p = parse_output(toks);
  CHECK(p.format_valid);
  CHECK(p.direction == Direction::up);
  CHECK(p.confidence == 85);
  CHECK(p.think_length == 2);
}

TEST_CASE("missing answer close tag invalidates the format") {
  auto toks = valid_tokens(kUp, {8, 5});
  toks.erase(std::find(toks.begin(), toks.end(), kAnswerClose));
  const ParsedOutput p = parse_output(toks);
  CHECK(!p.format_valid);
  // best effort still sees the direction
  CHECK(p.direction == Direction::up);
}

TEST_CASE("confidence over 100 invalidates the format") {
  const auto toks = valid_tokens(kDown, {1, 5, 0});
  const ParsedOutput p = parse_output(toks);
  CHECK(!p.format_valid);
  CHECK(!p.confidence.has_value());
}

TEST_CASE("confidence exactly 100 is valid") {
  const ParsedOutput p = parse_output(valid_tokens(kDown, {1, 0, 0}));
  CHECK(p.format_valid);
  CHECK(p.confidence == 100);
}

TEST_CASE("missing EOS or trailing tokens invalidate") {
  auto toks = valid_tokens(kUp, {9});
  toks.pop_back();
  CHECK(!parse_output(toks).format_valid);
  toks = valid_tokens(kUp, {9});
  toks.push_back(kFiller0);
  CHECK(!parse_output(toks).format_valid);
}

TEST_CASE("non-filler inside think invalidates but still counts the span") {
  std::vector<int32_t> toks = {kThinkOpen, kUp, kFiller0, kThinkClose, kEos};
  const ParsedOutput p = parse_output(toks);
  CHECK(!p.format_valid);
  CHECK(p.think_length == 2);
}

TEST_CASE("parsing is total and deterministic on random token soup") {
  Rng rng(3);
  for (int it = 0; it < 500; ++it) {
    std::vector<int32_t> toks;
    const int len = 1 + static_cast<int>(rng.below(40));
    for (int i = 0; i < len; ++i) toks.push_back(static_cast<int32_t>(rng.below(kVocabSize)));
    const ParsedOutput a = parse_output(toks);
    const ParsedOutput b = parse_output(toks);
    CHECK(a.format_valid == b.format_valid);
    CHECK(a.direction == b.direction);
    CHECK(a.confidence == b.confidence);
    CHECK(a.think_length == b.think_length);
    if (a.format_valid) {
      CHECK(a.direction.has_value());
      REQUIRE(a.confidence.has_value());
      CHECK(*a.confidence >= 0);
      CHECK(*a.confidence <= 100);
    }
  }
}

TEST_CASE("accuracy reward is gated on format validity and match") {
  RewardWeights w;
  const auto match = parse_output(valid_tokens(kUp, {5, 0}));
  CHECK(accuracy_reward(match, Direction::up, w) == w.w_acc);
  CHECK(accuracy_reward(match, Direction::down, w) == 0.0f);
  auto invalid_toks = valid_tokens(kUp, {5, 0});
  invalid_toks.pop_back();
  const auto invalid = parse_output(invalid_toks);
  CHECK(accuracy_reward(invalid, Direction::up, w) == 0.0f);
}

TEST_CASE("length reward ramps linearly to the cap") {
  RewardWeights w;  // cap 16, w_len 0.25
  CHECK(length_reward(0, w) == 0.0f);
  CHECK(length_reward(w.length_cap, w) == w.w_len);
  CHECK(length_reward(w.length_cap / 2, w) == doctest::Approx(w.w_len / 2));
  CHECK(length_reward(w.length_cap * 3, w) == w.w_len);
}

TEST_CASE("total reward adds up and respects gating") {
  RewardWeights w;
  // all components at maximum: think length at the cap
  const auto full = score_rollout(valid_tokens(kUp, {9, 9}, w.length_cap), Direction::up, w);
  CHECK(full.total == doctest::Approx(1.5f));
  CHECK(full.confidence_score == 99);

  // invalid format: only the best-effort length component accrues
  std::vector<int32_t> broken = {kThinkOpen, kFiller0, kFiller0 + 1, kThinkClose, kUp};
  const auto inv = score_rollout(broken, Direction::up, w);
  CHECK(inv.accuracy == 0.0f);
  CHECK(inv.format == 0.0f);
  CHECK(inv.length == doctest::Approx(w.w_len * 2.0f / w.length_cap));
  CHECK(inv.total == inv.length);
  CHECK(inv.confidence_score == 0);

  // valid format, wrong direction, zero think
  const auto wrong = score_rollout(valid_tokens(kDown, {5}, 0), Direction::up, w);
  CHECK(wrong.total == doctest::Approx(0.25f));
}

TEST_CASE("reward total is bounded and monotone in weights") {
  Rng rng(17);
  RewardWeights w;
  for (int it = 0; it < 300; ++it) {
    std::vector<int32_t> toks;
    const int len = 1 + static_cast<int>(rng.below(30));
    for (int i = 0; i < len; ++i) toks.push_back(static_cast<int32_t>(rng.below(kVocabSize)));
    const auto b = score_rollout(toks, Direction::up, w);
    CHECK(b.total >= 0.0f);
    CHECK(b.total <= w.max_total());
    CHECK(b.total == doctest::Approx(b.accuracy + b.format + b.length));
  }
}

TEST_CASE("negative weights are rejected") {
  RewardWeights w;
  w.w_fmt = -0.1f;
  CHECK_THROWS_AS(w.validate(), ConfigError);
}
