#pragma once

#include <optional>
#include <span>
#include <vector>

#include "uarpo/errors.hpp"
#include "uarpo/series.hpp"
#include "uarpo/vocab.hpp"

namespace uarpo {

struct RewardWeights {
  float w_acc = 1.0f;
  float w_fmt = 0.25f;
  float w_len = 0.25f;
  int length_cap = 16;  // think tokens at which the length ramp saturates

  void validate() const {
    if (w_acc < 0.0f || w_fmt < 0.0f || w_len < 0.0f)
      throw ConfigError("rewards: weights must be >= 0");
    if (length_cap < 1) throw ConfigError("rewards.length_cap: must be >= 1");
  }
  float max_total() const { return w_acc + w_fmt + w_len; }
};

struct ParsedOutput {
  bool format_valid = false;
  std::optional<Direction> direction;
  std::optional<int> confidence;  // 0..100
  int think_length = 0;           // tokens strictly inside <think>...</think>
};

// Total parse of a token sequence against the output grammar
//   <think> filler* </think> <answer> up|down </answer>
//   <confidence> digit{1,3} </confidence> EOS        (value <= 100)
// Invalid sequences still yield best-effort fields: the first direction
// token anywhere, the digits between the first confidence tags if they form
// a value <= 100, and the span between the first think tags.
inline ParsedOutput parse_output(std::span<const int32_t> tokens) {
  ParsedOutput out;

  // best-effort fields first
  for (int32_t t : tokens) {
    if (is_direction_token(t)) {
      out.direction = t == tok::kUp ? Direction::up : Direction::down;
      break;
    }
  }
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == tok::kThinkOpen) {
      for (size_t j = i + 1; j < tokens.size(); ++j) {
        if (tokens[j] == tok::kThinkClose) {
          out.think_length = static_cast<int>(j - i - 1);
          break;
        }
      }
      break;
    }
  }
  {
    int value = 0;
    int digits = 0;
    bool open = false;
    bool closed = false;
    for (int32_t t : tokens) {
      if (!open) {
        open = t == tok::kConfOpen;
        continue;
      }
      if (t == tok::kConfClose) {
        closed = true;
        break;
      }
      if (is_digit_token(t) && digits < 3) {
        value = value * 10 + digit_value(t);
        ++digits;
      } else {
        digits = 0;
        break;
      }
    }
    if (closed && digits >= 1 && value <= 100) out.confidence = value;
  }

  // strict grammar walk
  size_t i = 0;
  auto expect = [&](int32_t t) {
    if (i < tokens.size() && tokens[i] == t) {
      ++i;
      return true;
    }
    return false;
  };
  if (!expect(tok::kThinkOpen)) return out;
  while (i < tokens.size() && is_filler_token(tokens[i])) ++i;
  if (!expect(tok::kThinkClose)) return out;
  if (!expect(tok::kAnswerOpen)) return out;
  if (i >= tokens.size() || !is_direction_token(tokens[i])) return out;
  const Direction dir = tokens[i] == tok::kUp ? Direction::up : Direction::down;
  ++i;
  if (!expect(tok::kAnswerClose)) return out;
  if (!expect(tok::kConfOpen)) return out;
  int value = 0;
  int digits = 0;
  while (i < tokens.size() && is_digit_token(tokens[i]) && digits < 3) {
    value = value * 10 + digit_value(tokens[i]);
    ++digits;
    ++i;
  }
  if (digits < 1 || value > 100) return out;
  if (!expect(tok::kConfClose)) return out;
  if (!expect(tok::kEos)) return out;
  if (i != tokens.size()) return out;

  out.format_valid = true;
  out.direction = dir;
  out.confidence = value;
  return out;
}

inline float accuracy_reward(const ParsedOutput& parsed, Direction label, const RewardWeights& w) {
  return parsed.format_valid && parsed.direction && *parsed.direction == label ? w.w_acc : 0.0f;
}

inline float format_reward(const ParsedOutput& parsed, const RewardWeights& w) {
  return parsed.format_valid ? w.w_fmt : 0.0f;
}

// Linear ramp up to the cap, flat beyond it.
inline float length_reward(int think_length, const RewardWeights& w) {
  if (think_length < 0) throw ConfigError("length_reward: negative think length");
  const int capped = think_length < w.length_cap ? think_length : w.length_cap;
  return w.w_len * static_cast<float>(capped) / static_cast<float>(w.length_cap);
}

struct RewardBreakdown {
  float accuracy = 0.0f;
  float length = 0.0f;
  float format = 0.0f;
  float total = 0.0f;
  int confidence_score = 0;  // 0 when the format is invalid
};

inline RewardBreakdown score_rollout(std::span<const int32_t> tokens, Direction label,
                                     const RewardWeights& w) {
  const ParsedOutput parsed = parse_output(tokens);
  RewardBreakdown b;
  b.accuracy = accuracy_reward(parsed, label, w);
  b.format = format_reward(parsed, w);
  b.length = length_reward(parsed.think_length, w);
  b.total = b.accuracy + b.format + b.length;
  b.confidence_score = parsed.format_valid ? *parsed.confidence : 0;
  return b;
}

}  // namespace uarpo
