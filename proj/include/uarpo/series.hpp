#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "uarpo/errors.hpp"
#include "uarpo/rng.hpp"

namespace uarpo {

// Prediction horizons, in periods. These are also the evaluation columns.
inline constexpr int kHorizons[3] = {5, 21, 63};
inline constexpr int kMaxHorizon = 63;

enum class Quantity : uint8_t { price, volatility };
enum class Direction : uint8_t { up, down };

inline const char* quantity_name(Quantity q) { return q == Quantity::price ? "price" : "volatility"; }
inline const char* direction_name(Direction d) { return d == Direction::up ? "up" : "down"; }

inline Quantity quantity_from(const std::string& s) {
  if (s == "price") return Quantity::price;
  if (s == "volatility") return Quantity::volatility;
  throw ConfigError("unknown quantity '" + s + "' (expected price|volatility)");
}

inline Direction direction_from(const std::string& s) {
  if (s == "up") return Direction::up;
  if (s == "down") return Direction::down;
  throw ConfigError("unknown direction '" + s + "'");
}

// A prediction objective: which quantity to call, over how many periods.
struct TargetSpec {
  Quantity quantity = Quantity::price;
  int horizon = 5;

  void validate() const {
    if (horizon != 5 && horizon != 21 && horizon != 63)
      throw ConfigError("target horizon must be one of 5|21|63, got " + std::to_string(horizon));
  }
  bool operator==(const TargetSpec&) const = default;
};

inline int target_index(const TargetSpec& t) {
  int h = t.horizon == 5 ? 0 : t.horizon == 21 ? 1 : 2;
  return (t.quantity == Quantity::price ? 0 : 3) + h;
}

inline std::vector<TargetSpec> all_targets() {
  std::vector<TargetSpec> out;
  for (Quantity q : {Quantity::price, Quantity::volatility})
    for (int h : kHorizons) out.push_back({q, h});
  return out;
}

struct Regime {
  int duration = 0;       // steps
  float drift = 0.0f;     // per-period log drift
  float vol = 0.0f;       // per-period log volatility
};

struct SeriesSpec {
  int length = 128;                 // lookback window size
  std::string frequency_tag = "daily";
  std::vector<Regime> regimes;
  uint64_t seed = 0;

  void validate() const {
    if (length < 32 || length > 512)
      throw ConfigError("series length must be in [32, 512], got " + std::to_string(length));
    if (regimes.empty()) throw ConfigError("series regimes must be non-empty");
    long total = 0;
    for (size_t i = 0; i < regimes.size(); ++i) {
      if (regimes[i].duration <= 0)
        throw ConfigError("regime " + std::to_string(i) + ": duration must be positive");
      if (regimes[i].vol < 0.0f)
        throw ConfigError("regime " + std::to_string(i) + ": volatility must be >= 0");
      if (!std::isfinite(regimes[i].drift) || !std::isfinite(regimes[i].vol))
        throw ConfigError("regime " + std::to_string(i) + ": non-finite parameter");
      total += regimes[i].duration;
    }
    if (total < length + kMaxHorizon)
      throw ConfigError("regime durations sum to " + std::to_string(total) + ", need >= " +
                        std::to_string(length + kMaxHorizon));
  }
};

// Price path whose log follows a regime-switching random walk. The result
// has spec.length visible points plus kMaxHorizon hidden continuation
// points, so any horizon can be labeled. Deterministic per seed.
inline std::vector<float> generate_series(const SeriesSpec& spec) {
  spec.validate();
  const int n = spec.length + kMaxHorizon;
  std::vector<float> out(static_cast<size_t>(n));
  Rng rng = Rng::keyed(spec.seed, 0x5e51e5u);
  double logp = 0.0;
  out[0] = 1.0f;
  size_t regime = 0;
  int left = spec.regimes[0].duration;
  for (int i = 1; i < n; ++i) {
    while (left == 0 && regime + 1 < spec.regimes.size()) {
      ++regime;
      left = spec.regimes[regime].duration;
    }
    const Regime& r = spec.regimes[regime];
    logp += r.drift + r.vol * rng.normal();
    out[static_cast<size_t>(i)] = static_cast<float>(std::exp(logp));
    if (left > 0) --left;
  }
  return out;
}

// Population standard deviation of log increments over (first, last], i.e.
// increments ending at indices first+1 .. last.
inline double realized_volatility(std::span<const float> series, int first, int last) {
  if (first < 0 || last <= first || last >= static_cast<int>(series.size()))
    throw ConfigError("realized_volatility: window (" + std::to_string(first) + ", " +
                      std::to_string(last) + "] out of range");
  const int n = last - first;
  double mean = 0.0;
  std::vector<double> incs(static_cast<size_t>(n));
  for (int j = 0; j < n; ++j) {
    incs[static_cast<size_t>(j)] =
        std::log(static_cast<double>(series[static_cast<size_t>(first + j + 1)])) -
        std::log(static_cast<double>(series[static_cast<size_t>(first + j)]));
    mean += incs[static_cast<size_t>(j)];
  }
  mean /= n;
  double ss = 0.0;
  for (double v : incs) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / n);
}

// Rise/fall label at lookback end t for the given target. Exact ties are
// "down". Price compares levels; volatility compares realized volatility of
// the next h periods against the previous h.
inline Direction label_sample(std::span<const float> series, int t, const TargetSpec& target) {
  target.validate();
  const int h = target.horizon;
  const int n = static_cast<int>(series.size());
  if (t < 0 || t >= n) throw ConfigError("label_sample: lookback end " + std::to_string(t) + " out of range");
  if (t + h >= n)
    throw ConfigError("label_sample: insufficient continuation for horizon " + std::to_string(h));
  if (target.quantity == Quantity::price) {
    return series[static_cast<size_t>(t + h)] > series[static_cast<size_t>(t)] ? Direction::up
                                                                               : Direction::down;
  }
  if (t - h < 0)
    throw ConfigError("label_sample: insufficient lookback for volatility horizon " + std::to_string(h));
  const double future = realized_volatility(series, t, t + h);
  const double past = realized_volatility(series, t - h, t);
  return future > past ? Direction::up : Direction::down;
}

}  // namespace uarpo
