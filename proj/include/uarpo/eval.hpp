#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "uarpo/csv.hpp"
#include "uarpo/dataset.hpp"
#include "uarpo/policy.hpp"
#include "uarpo/rewards.hpp"

namespace uarpo {

// Trend-extension baseline: up iff the series rose over the last k periods.
inline Direction naive_predict(std::span<const float> series, int t, int k) {
  if (k < 1) throw ConfigError("naive_predict: window must be >= 1");
  if (t - k < 0 || t >= static_cast<int>(series.size()))
    throw ConfigError("naive_predict: series too short for window " + std::to_string(k));
  return series[static_cast<size_t>(t)] > series[static_cast<size_t>(t - k)] ? Direction::up
                                                                             : Direction::down;
}

struct EvalRecord {
  int index = 0;
  Quantity quantity = Quantity::price;
  int horizon = 5;
  Direction label = Direction::down;
  std::optional<Direction> prediction;  // best effort
  bool format_valid = false;
  int confidence = 0;  // 0 when invalid
  bool correct = false;  // strict: valid format and matching direction
};

struct EvalReport {
  // [quantity][horizon]; quantity 0 = price, 1 = volatility
  double acc[2][3] = {};
  bool has[2][3] = {};
  int counts[2][3] = {};
  std::string decoding = "greedy";

  static int h_ix(int horizon) { return horizon == 5 ? 0 : horizon == 21 ? 1 : 2; }

  std::optional<double> average(int q) const {
    double sum = 0.0;
    int n = 0;
    for (int h = 0; h < 3; ++h)
      if (has[q][h]) {
        sum += acc[q][h];
        ++n;
      }
    if (n == 0) return std::nullopt;
    return sum / n;
  }
};

namespace detail {

inline EvalReport aggregate(const std::vector<EvalRecord>& records) {
  EvalReport rep;
  int correct[2][3] = {};
  for (const auto& r : records) {
    const int q = r.quantity == Quantity::price ? 0 : 1;
    const int h = EvalReport::h_ix(r.horizon);
    rep.counts[q][h] += 1;
    correct[q][h] += r.correct;
  }
  for (int q = 0; q < 2; ++q)
    for (int h = 0; h < 3; ++h)
      if (rep.counts[q][h] > 0) {
        rep.has[q][h] = true;
        rep.acc[q][h] = 100.0 * correct[q][h] / rep.counts[q][h];
      }
  return rep;
}

}  // namespace detail

// Greedy evaluation over one split. Invalid-format outputs count as
// incorrect with confidence zero, keeping denominators fixed.
inline EvalReport evaluate(const PolicyParams& params, const DatasetManifest& manifest,
                           const std::string& split, std::vector<EvalRecord>* out_records = nullptr,
                           int threads = 0) {
  const auto subset = manifest.split(split);
  if (subset.empty()) throw ConfigError("evaluate: split '" + split + "' is empty");
  std::vector<EvalRecord> records(subset.size());
  const int workers = threads > 0 ? threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::vector<std::thread> pool;
  const int n = static_cast<int>(subset.size());
  const int use = std::max(1, std::min(workers, n));
  auto work = [&](int w) {
    for (int i = w; i < n; i += use) {
      const ManifestRecord& rec = *subset[static_cast<size_t>(i)];
      const Image im = read_pgm(manifest.dir / rec.image_path);
      const Rollout roll = greedy_decode(params, im, rec.target(), params.cfg.max_len);
      const ParsedOutput parsed = parse_output(roll.tokens);
      EvalRecord& er = records[static_cast<size_t>(i)];
      er.index = rec.index;
      er.quantity = rec.quantity;
      er.horizon = rec.horizon;
      er.label = rec.label;
      er.prediction = parsed.direction;
      er.format_valid = parsed.format_valid;
      er.confidence = parsed.format_valid ? *parsed.confidence : 0;
      er.correct = parsed.format_valid && parsed.direction == rec.label;
    }
  };
  if (use == 1) {
    work(0);
  } else {
    for (int w = 0; w < use; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  if (out_records) *out_records = records;
  return detail::aggregate(records);
}

// Naive-baseline evaluation on the same split; window k defaults to each
// record's horizon.
inline EvalReport evaluate_naive(const DatasetManifest& manifest, const std::string& split,
                                 int k_override = 0,
                                 std::vector<EvalRecord>* out_records = nullptr) {
  const auto subset = manifest.split(split);
  if (subset.empty()) throw ConfigError("evaluate: split '" + split + "' is empty");
  std::vector<EvalRecord> records(subset.size());
  for (size_t i = 0; i < subset.size(); ++i) {
    const ManifestRecord& rec = *subset[i];
    const auto series = record_series(rec);
    const int k = k_override > 0 ? k_override : rec.horizon;
    const Direction pred = naive_predict(series, rec.length - 1, k);
    EvalRecord& er = records[i];
    er.index = rec.index;
    er.quantity = rec.quantity;
    er.horizon = rec.horizon;
    er.label = rec.label;
    er.prediction = pred;
    er.format_valid = true;
    er.confidence = 0;
    er.correct = pred == rec.label;
  }
  if (out_records) *out_records = records;
  EvalReport rep = detail::aggregate(records);
  rep.decoding = "naive";
  return rep;
}

struct ConfidenceGroups {
  struct Group {
    int count = 0;
    double mean_confidence = 0.0;
    double accuracy = 0.0;  // percent
  };
  Group low, middle, high;
};

// Tercile split by confidence, sorted descending with ties broken by record
// order; "high" is always the highest-confidence tercile and remainders go
// to the earlier (higher) groups.
inline ConfidenceGroups confidence_grouping(const std::vector<EvalRecord>& records) {
  if (records.size() < 3) throw ConfigError("confidence_grouping: need at least 3 records");
  std::vector<size_t> ix(records.size());
  for (size_t i = 0; i < ix.size(); ++i) ix[i] = i;
  std::stable_sort(ix.begin(), ix.end(), [&](size_t a, size_t b) {
    return records[a].confidence > records[b].confidence;
  });
  const int n = static_cast<int>(records.size());
  const int k = n / 3, r = n % 3;
  const int n_high = k + (r >= 1 ? 1 : 0);
  const int n_mid = k + (r >= 2 ? 1 : 0);
  auto make = [&](int from, int count) {
    ConfidenceGroups::Group g;
    g.count = count;
    int correct = 0;
    double conf = 0.0;
    for (int i = from; i < from + count; ++i) {
      correct += records[ix[static_cast<size_t>(i)]].correct;
      conf += records[ix[static_cast<size_t>(i)]].confidence;
    }
    g.mean_confidence = conf / count;
    g.accuracy = 100.0 * correct / count;
    return g;
  };
  ConfidenceGroups out;
  out.high = make(0, n_high);
  out.middle = make(n_high, n_mid);
  out.low = make(n_high + n_mid, n - n_high - n_mid);
  return out;
}

inline double relative_improvement_pct(double value, double reference) {
  if (reference == 0.0) throw ConfigError("relative_improvement: zero reference");
  return 100.0 * (value - reference) / reference;
}

// No-signal statistic for untrained baselines: parsed predictions are
// scored against labels, unparsed ones impute 0.5. Under a no-signal policy
// this concentrates at 0.5 with variance at most 0.25/n.
inline double no_signal_accuracy(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw ConfigError("no_signal_accuracy: empty records");
  double score = 0.0;
  for (const auto& r : records) {
    if (r.prediction)
      score += *r.prediction == r.label ? 1.0 : 0.0;
    else
      score += 0.5;
  }
  return score / static_cast<double>(records.size());
}

// ---- CSV emission -------------------------------------------------------

namespace detail {

inline std::string pct(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace detail

inline void write_report_csv(const std::filesystem::path& path, const EvalReport& rep) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write report: " + path.string());
  f << "quantity,acc_5,acc_21,acc_63,acc_avg,n_5,n_21,n_63,decoding\n";
  for (int q : {1, 0}) {  // volatility row first, matching the layout
    f << (q == 0 ? "price" : "volatility");
    for (int h = 0; h < 3; ++h) {
      f << ",";
      if (rep.has[q][h]) f << detail::pct(rep.acc[q][h]);
    }
    const auto avg = rep.average(q);
    f << ",";
    if (avg) f << detail::pct(*avg);
    for (int h = 0; h < 3; ++h) f << "," << rep.counts[q][h];
    f << "," << rep.decoding << "\n";
  }
  if (!f) throw IoError("report write failed: " + path.string());
}

inline void write_samples_csv(const std::filesystem::path& path,
                              const std::vector<EvalRecord>& records) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write samples: " + path.string());
  f << "index,quantity,horizon,label,prediction,format_valid,confidence,correct\n";
  for (const auto& r : records) {
    f << r.index << "," << quantity_name(r.quantity) << "," << r.horizon << ","
      << direction_name(r.label) << "," << (r.prediction ? direction_name(*r.prediction) : "")
      << "," << (r.format_valid ? 1 : 0) << "," << r.confidence << "," << (r.correct ? 1 : 0)
      << "\n";
  }
  if (!f) throw IoError("samples write failed: " + path.string());
}

inline void write_groups_csv(const std::filesystem::path& path, const ConfidenceGroups& g) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write groups: " + path.string());
  f << "group,count,mean_confidence,accuracy\n";
  auto row = [&](const char* name, const ConfidenceGroups::Group& gr) {
    f << name << "," << gr.count << "," << detail::pct(gr.mean_confidence) << ","
      << detail::pct(gr.accuracy) << "\n";
  };
  row("low", g.low);
  row("middle", g.middle);
  row("high", g.high);
  if (!f) throw IoError("groups write failed: " + path.string());
}

// ---- metrics-file comparison --------------------------------------------

struct CompareTable {
  std::vector<long> steps;
  std::vector<std::string> run_names;
  // columns[r][row]: value of run r at steps[row], empty when missing
  std::vector<std::vector<std::string>> columns;
};

// Aligns one column from several metrics files on their shared step column.
// Missing steps stay blank; a duplicated step inside one file is an error.
inline CompareTable compare_runs(const std::vector<std::filesystem::path>& files,
                                 const std::string& column = "train_acc") {
  if (files.empty()) throw ConfigError("compare_runs: no input files");
  CompareTable table;
  std::vector<std::map<long, std::string>> per_run;
  for (const auto& path : files) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open: " + path.string());
    std::string line;
    if (!std::getline(f, line)) throw ConfigError(path.string() + ": empty file");
    const auto header = detail::split_csv_line(line);
    int step_ix = -1, col_ix = -1;
    for (size_t i = 0; i < header.size(); ++i) {
      if (header[i] == "step") step_ix = static_cast<int>(i);
      if (header[i] == column) col_ix = static_cast<int>(i);
    }
    if (step_ix < 0) throw ConfigError(path.string() + ": missing column 'step'");
    if (col_ix < 0) throw ConfigError(path.string() + ": missing column '" + column + "'");
    std::map<long, std::string> rows;
    int row_no = 0;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      ++row_no;
      const auto fields = detail::split_csv_line(line);
      if (static_cast<int>(fields.size()) <= std::max(step_ix, col_ix))
        throw ConfigError(path.string() + ": row " + std::to_string(row_no) + ": too few columns");
      long step = 0;
      try {
        step = std::stol(fields[static_cast<size_t>(step_ix)]);
      } catch (const std::logic_error&) {
        throw ConfigError(path.string() + ": row " + std::to_string(row_no) + ": bad step value");
      }
      if (!rows.emplace(step, fields[static_cast<size_t>(col_ix)]).second)
        throw ConfigError(path.string() + ": duplicated step " + std::to_string(step));
    }
    per_run.push_back(std::move(rows));
    std::string name = path.stem().string();
    if (name == "metrics" && path.has_parent_path())
      name = path.parent_path().filename().string();
    while (std::find(table.run_names.begin(), table.run_names.end(), name) != table.run_names.end())
      name += "_";
    table.run_names.push_back(name);
  }
  std::map<long, bool> all_steps;
  for (const auto& rows : per_run)
    for (const auto& [s, v] : rows) all_steps[s] = true;
  for (const auto& [s, unused] : all_steps) table.steps.push_back(s);
  table.columns.resize(per_run.size());
  for (size_t r = 0; r < per_run.size(); ++r) {
    table.columns[r].reserve(table.steps.size());
    for (long s : table.steps) {
      const auto it = per_run[r].find(s);
      table.columns[r].push_back(it == per_run[r].end() ? "" : it->second);
    }
  }
  return table;
}

inline void write_compare_csv(const std::filesystem::path& path, const CompareTable& table) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write comparison: " + path.string());
  f << "step";
  for (const auto& n : table.run_names) f << "," << n;
  f << "\n";
  for (size_t row = 0; row < table.steps.size(); ++row) {
    f << table.steps[row];
    for (const auto& col : table.columns) f << "," << col[row];
    f << "\n";
  }
  if (!f) throw IoError("comparison write failed: " + path.string());
}

}  // namespace uarpo
