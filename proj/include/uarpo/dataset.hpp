#pragma once

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <span>
#include <string>
#include <vector>

#include "uarpo/csv.hpp"
#include "uarpo/errors.hpp"
#include "uarpo/image_io.hpp"
#include "uarpo/render.hpp"
#include "uarpo/rng.hpp"
#include "uarpo/series.hpp"

namespace uarpo {

// Generator metadata: "learnable" samples have a chart pattern that
// determines the label, "noise" samples have a coin-flip continuation.
enum class Difficulty : uint8_t { learnable, noise };

inline const char* difficulty_name(Difficulty d) {
  return d == Difficulty::learnable ? "learnable" : "noise";
}

inline Difficulty difficulty_from(const std::string& s) {
  if (s == "learnable") return Difficulty::learnable;
  if (s == "noise") return Difficulty::noise;
  throw ConfigError("unknown difficulty '" + s + "' (expected learnable|noise)");
}

struct GenConfig {
  std::vector<Quantity> quantities = {Quantity::price, Quantity::volatility};
  std::vector<int> horizons = {5, 21, 63};
  std::vector<int> lengths = {128};
  std::vector<Style> styles = {Style::line_thin};
  std::vector<Difficulty> difficulties = {Difficulty::learnable, Difficulty::noise};
  int count_per_stratum = 10;
  double train_fraction = 0.8;
  int image_height = 64;
  int image_width = 96;
  std::string learnable_mode = "trend";  // trend: continuation extends the
                                         // visible drift; reverse: it flips it
  float learnable_drift = 0.004f;
  float noise_vol = 0.02f;
  std::string frequency_tag = "daily";
  bool with_volume = false;
  bool with_moving_average = false;
  uint64_t seed = 0;
  std::string out_dir;
  std::string csv_path;  // when set, samples are windows of this series
  CsvColumnMap csv_cols;

  void validate() const {
    if (quantities.empty()) throw ConfigError("data.quantities: empty");
    if (horizons.empty()) throw ConfigError("data.horizons: empty");
    if (lengths.empty()) throw ConfigError("data.lengths: empty");
    if (styles.empty()) throw ConfigError("data.styles: empty");
    if (difficulties.empty() && csv_path.empty()) throw ConfigError("data.difficulties: empty");
    for (int h : horizons)
      if (h != 5 && h != 21 && h != 63)
        throw ConfigError("data.horizons: must be among 5|21|63, got " + std::to_string(h));
    int max_h = 0;
    for (int h : horizons) max_h = std::max(max_h, h);
    for (int l : lengths) {
      if (l < 32 || l > 512)
        throw ConfigError("data.lengths: must be in [32, 512], got " + std::to_string(l));
      if (l < 2 * max_h + 2)
        throw ConfigError("data.lengths: " + std::to_string(l) + " too short for horizon " +
                          std::to_string(max_h) + " (needs >= " + std::to_string(2 * max_h + 2) + ")");
    }
    if (count_per_stratum < 0) throw ConfigError("data.count_per_stratum: must be >= 0");
    if (train_fraction < 0.0 || train_fraction > 1.0)
      throw ConfigError("data.train_fraction: must be in [0, 1]");
    if (learnable_mode != "trend" && learnable_mode != "reverse")
      throw ConfigError("data.learnable_mode: expected trend|reverse, got '" + learnable_mode + "'");
    if (!(learnable_drift > 0.0f)) throw ConfigError("data.learnable_drift: must be > 0");
    if (!(noise_vol > 0.0f)) throw ConfigError("data.noise_vol: must be > 0");
    if (image_height < 16 || image_width < 16 || image_height > 512 || image_width > 512)
      throw ConfigError("data.image_height/width: must be in [16, 512]");
  }
};

struct ManifestRecord {
  int index = 0;
  std::string image_path;  // relative to the manifest directory
  Quantity quantity = Quantity::price;
  int horizon = 5;
  Direction label = Direction::down;
  std::string split;  // train | test
  Difficulty difficulty = Difficulty::noise;
  Style style = Style::line_thin;
  int length = 0;
  std::string frequency_tag;
  uint64_t seed = 0;              // per-sample stream key
  std::vector<Regime> regimes;    // synthetic provenance
  std::vector<float> series;      // csv provenance: full window + continuation
  TargetSpec target() const { return {quantity, horizon}; }
};

struct DatasetManifest {
  uint64_t global_seed = 0;
  std::filesystem::path dir;  // directory holding manifest.jsonl and images
  std::vector<ManifestRecord> records;

  std::vector<const ManifestRecord*> split(const std::string& which) const {
    std::vector<const ManifestRecord*> out;
    for (const auto& r : records)
      if (r.split == which) out.push_back(&r);
    return out;
  }
};

// The series a record was labeled from: regenerated for synthetic records,
// stored inline for CSV records. Lookback end is index record.length - 1.
inline std::vector<float> record_series(const ManifestRecord& rec) {
  if (!rec.series.empty()) return rec.series;
  SeriesSpec spec;
  spec.length = rec.length;
  spec.frequency_tag = rec.frequency_tag;
  spec.regimes = rec.regimes;
  spec.seed = rec.seed;
  return generate_series(spec);
}

namespace detail {

inline nlohmann::json record_to_json(const ManifestRecord& r) {
  nlohmann::json j;
  j["index"] = r.index;
  j["image_path"] = r.image_path;
  j["quantity"] = quantity_name(r.quantity);
  j["horizon"] = r.horizon;
  j["label"] = direction_name(r.label);
  j["split"] = r.split;
  j["seed"] = r.seed;
  j["tags"] = {{"difficulty", difficulty_name(r.difficulty)},
               {"style", style_name(r.style)},
               {"length", r.length},
               {"frequency", r.frequency_tag}};
  if (!r.regimes.empty()) {
    nlohmann::json regs = nlohmann::json::array();
    for (const auto& g : r.regimes)
      regs.push_back({g.duration, static_cast<double>(g.drift), static_cast<double>(g.vol)});
    j["regimes"] = regs;
  }
  if (!r.series.empty()) {
    nlohmann::json vals = nlohmann::json::array();
    for (float v : r.series) vals.push_back(static_cast<double>(v));
    j["series"] = vals;
  }
  return j;
}

inline ManifestRecord record_from_json(const nlohmann::json& j) {
  ManifestRecord r;
  r.index = j.at("index").get<int>();
  r.image_path = j.at("image_path").get<std::string>();
  r.quantity = quantity_from(j.at("quantity").get<std::string>());
  r.horizon = j.at("horizon").get<int>();
  r.label = direction_from(j.at("label").get<std::string>());
  r.split = j.at("split").get<std::string>();
  r.seed = j.at("seed").get<uint64_t>();
  const auto& tags = j.at("tags");
  r.difficulty = difficulty_from(tags.at("difficulty").get<std::string>());
  r.style = style_from(tags.at("style").get<std::string>());
  r.length = tags.at("length").get<int>();
  r.frequency_tag = tags.at("frequency").get<std::string>();
  if (j.contains("regimes"))
    for (const auto& g : j.at("regimes"))
      r.regimes.push_back({g.at(0).get<int>(), static_cast<float>(g.at(1).get<double>()),
                           static_cast<float>(g.at(2).get<double>())});
  if (j.contains("series"))
    for (const auto& v : j.at("series")) r.series.push_back(static_cast<float>(v.get<double>()));
  return r;
}

// Regime layout for one synthetic sample. Learnable samples alternate label
// direction by index so both splits stay exactly balanced.
inline std::vector<Regime> sample_regimes(const GenConfig& cfg, Difficulty diff, int length,
                                          int sample_ix) {
  const float d = cfg.learnable_drift;
  const float sign = sample_ix % 2 == 0 ? 1.0f : -1.0f;
  if (diff == Difficulty::noise) return {{length + kMaxHorizon, 0.0f, cfg.noise_vol}};
  if (cfg.learnable_mode == "trend") return {{length + kMaxHorizon, sign * d, 0.0f}};
  // reverse: the hidden continuation flips the visible drift
  return {{length, sign * d, 0.0f}, {kMaxHorizon, -sign * d, 0.0f}};
}

}  // namespace detail

struct BuildResult {
  DatasetManifest manifest;
  std::vector<std::string> warnings;
};

// Stratified synthetic (or CSV-windowed) dataset: images as binary PGM plus
// a JSON-lines manifest. A pure function of (config, seed): same config and
// seed give byte-identical outputs.
inline BuildResult build_dataset(const GenConfig& cfg) {
  cfg.validate();
  if (cfg.out_dir.empty()) throw ConfigError("data.out_dir: required");
  BuildResult result;
  DatasetManifest& man = result.manifest;
  man.global_seed = cfg.seed;
  man.dir = cfg.out_dir;

  std::error_code ec;
  std::filesystem::create_directories(man.dir / "images", ec);
  if (ec) throw IoError("cannot create output directory '" + man.dir.string() + "': " + ec.message());

  std::vector<float> csv_series;
  if (!cfg.csv_path.empty()) csv_series = ingest_csv(cfg.csv_path, cfg.csv_cols);

  struct StratumKey {
    Quantity q;
    int horizon;
    int length;
    Style style;
    Difficulty diff;
  };
  std::vector<StratumKey> strata;
  const std::vector<Difficulty> diffs =
      cfg.csv_path.empty() ? cfg.difficulties : std::vector<Difficulty>{Difficulty::noise};
  for (Quantity q : cfg.quantities)
    for (int h : cfg.horizons)
      for (int len : cfg.lengths)
        for (Style st : cfg.styles)
          for (Difficulty df : diffs) strata.push_back({q, h, len, st, df});

  if (cfg.count_per_stratum == 0)
    result.warnings.push_back("count_per_stratum is 0: dataset will be empty");

  RenderOptions ropt;
  ropt.height = cfg.image_height;
  ropt.width = cfg.image_width;
  ropt.with_volume = cfg.with_volume;
  ropt.with_moving_average = cfg.with_moving_average;

  int index = 0;
  const int n_train = static_cast<int>(std::lround(cfg.count_per_stratum * cfg.train_fraction));
  for (size_t s = 0; s < strata.size(); ++s) {
    const auto& key = strata[s];
    for (int i = 0; i < cfg.count_per_stratum; ++i) {
      ManifestRecord rec;
      rec.index = index;
      rec.quantity = key.q;
      rec.horizon = key.horizon;
      rec.length = key.length;
      rec.style = key.style;
      rec.difficulty = key.diff;
      rec.frequency_tag = cfg.frequency_tag;
      rec.split = i < n_train ? "train" : "test";
      uint64_t mix = cfg.seed;
      splitmix64(mix);
      rec.seed = mix ^ (static_cast<uint64_t>(s) << 32) ^ static_cast<uint64_t>(i);

      std::vector<float> series;
      if (cfg.csv_path.empty()) {
        rec.regimes = detail::sample_regimes(cfg, key.diff, key.length, i);
        series = record_series(rec);
      } else {
        const long max_start =
            static_cast<long>(csv_series.size()) - (key.length + kMaxHorizon);
        if (max_start < 0)
          throw ConfigError("csv series too short for length " + std::to_string(key.length) +
                            " plus " + std::to_string(kMaxHorizon) + " continuation periods");
        Rng rng = Rng::keyed(rec.seed, 0xc5fu);
        const auto start = static_cast<size_t>(rng.below(static_cast<uint64_t>(max_start + 1)));
        series.assign(csv_series.begin() + static_cast<long>(start),
                      csv_series.begin() + static_cast<long>(start) + key.length + kMaxHorizon);
        rec.series = series;
      }
      rec.label = label_sample(series, key.length - 1, rec.target());

      char name[32];
      std::snprintf(name, sizeof(name), "images/s%06d.pgm", index);
      rec.image_path = name;
      const Image im = render_chart(std::span<const float>(series.data(), static_cast<size_t>(key.length)),
                                    key.style, ropt);
      write_pgm(man.dir / rec.image_path, im);
      man.records.push_back(std::move(rec));
      ++index;
    }
  }

  std::ofstream mf(man.dir / "manifest.jsonl", std::ios::binary);
  if (!mf) throw IoError("cannot write manifest in '" + man.dir.string() + "'");
  nlohmann::json header;
  header["type"] = "header";
  header["global_seed"] = man.global_seed;
  header["total"] = static_cast<int>(man.records.size());
  header["count_per_stratum"] = cfg.count_per_stratum;
  header["strata"] = static_cast<int>(strata.size());
  mf << header.dump() << "\n";
  for (const auto& r : man.records) mf << detail::record_to_json(r).dump() << "\n";
  if (!mf) throw IoError("manifest write failed in '" + man.dir.string() + "'");
  return result;
}

// Load and validate a manifest; every referenced image must exist.
inline DatasetManifest load_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream f(manifest_path);
  if (!f) throw IoError("cannot open manifest: " + manifest_path.string());
  DatasetManifest man;
  man.dir = manifest_path.parent_path();
  std::string line;
  int line_no = 0;
  int declared_total = -1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(manifest_path.string() + ": line " + std::to_string(line_no) +
                        ": invalid JSON: " + e.what());
    }
    if (j.value("type", "") == "header") {
      man.global_seed = j.value("global_seed", 0ull);
      declared_total = j.value("total", -1);
      continue;
    }
    try {
      man.records.push_back(detail::record_from_json(j));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(manifest_path.string() + ": line " + std::to_string(line_no) +
                        ": bad record: " + e.what());
    }
  }
  if (man.records.empty()) throw ConfigError(manifest_path.string() + ": no records");
  if (declared_total >= 0 && declared_total != static_cast<int>(man.records.size()))
    throw ConfigError(manifest_path.string() + ": header total " + std::to_string(declared_total) +
                      " does not match " + std::to_string(man.records.size()) + " records");
  for (const auto& r : man.records)
    if (!std::filesystem::exists(man.dir / r.image_path))
      throw IoError("manifest references missing image: " + (man.dir / r.image_path).string());
  return man;
}

}  // namespace uarpo
