#pragma once

#include <cstdint>
#include <string>

#include "uarpo/errors.hpp"
#include "uarpo/series.hpp"

namespace uarpo {

// Fixed token inventory for the structured output grammar:
//   <think> filler* </think> <answer> up|down </answer>
//   <confidence> digit{1,3} </confidence> EOS
namespace tok {
inline constexpr int32_t kPad = 0;
inline constexpr int32_t kEos = 1;
inline constexpr int32_t kThinkOpen = 2;
inline constexpr int32_t kThinkClose = 3;
inline constexpr int32_t kAnswerOpen = 4;
inline constexpr int32_t kAnswerClose = 5;
inline constexpr int32_t kConfOpen = 6;
inline constexpr int32_t kConfClose = 7;
inline constexpr int32_t kUp = 8;
inline constexpr int32_t kDown = 9;
inline constexpr int32_t kDigit0 = 10;  // .. 19
inline constexpr int32_t kFiller0 = 20;  // .. 35
inline constexpr int32_t kQuantityPrice = 36;
inline constexpr int32_t kQuantityVolatility = 37;
inline constexpr int32_t kHorizon5 = 38;
inline constexpr int32_t kHorizon21 = 39;
inline constexpr int32_t kHorizon63 = 40;
}  // namespace tok

inline constexpr int32_t kNumFiller = 16;
inline constexpr int32_t kVocabSize = 41;

inline bool is_digit_token(int32_t t) { return t >= tok::kDigit0 && t < tok::kDigit0 + 10; }
inline int digit_value(int32_t t) { return t - tok::kDigit0; }
inline int32_t digit_token(int v) { return tok::kDigit0 + v; }
inline bool is_filler_token(int32_t t) { return t >= tok::kFiller0 && t < tok::kFiller0 + kNumFiller; }
inline bool is_direction_token(int32_t t) { return t == tok::kUp || t == tok::kDown; }

inline int32_t quantity_token(Quantity q) {
  return q == Quantity::price ? tok::kQuantityPrice : tok::kQuantityVolatility;
}

inline int32_t horizon_token(int h) {
  switch (h) {
    case 5: return tok::kHorizon5;
    case 21: return tok::kHorizon21;
    case 63: return tok::kHorizon63;
  }
  throw ConfigError("no token for horizon " + std::to_string(h));
}

inline std::string token_name(int32_t t) {
  switch (t) {
    case tok::kPad: return "PAD";
    case tok::kEos: return "EOS";
    case tok::kThinkOpen: return "<think>";
    case tok::kThinkClose: return "</think>";
    case tok::kAnswerOpen: return "<answer>";
    case tok::kAnswerClose: return "</answer>";
    case tok::kConfOpen: return "<confidence>";
    case tok::kConfClose: return "</confidence>";
    case tok::kUp: return "up";
    case tok::kDown: return "down";
    case tok::kQuantityPrice: return "q:price";
    case tok::kQuantityVolatility: return "q:volatility";
    case tok::kHorizon5: return "h:5";
    case tok::kHorizon21: return "h:21";
    case tok::kHorizon63: return "h:63";
  }
  if (is_digit_token(t)) return std::to_string(digit_value(t));
  if (is_filler_token(t)) return "f" + std::to_string(t - tok::kFiller0);
  return "tok" + std::to_string(t);
}

}  // namespace uarpo
