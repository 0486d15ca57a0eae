// uarpo: dataset generation, policy fine-tuning, evaluation, run comparison
// and plot emission for the chart trend-prediction lab.
//
// Exit codes: 0 ok, 2 usage/config error, 3 I/O error, 4 numerical failure.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "uarpo/config.hpp"
#include "uarpo/dataset.hpp"
#include "uarpo/eval.hpp"
#include "uarpo/plot.hpp"
#include "uarpo/train.hpp"

namespace fs = std::filesystem;
using namespace uarpo;

namespace {

struct CommonArgs {
  std::string config_path;
  std::string seed;
  std::string out;
  std::vector<std::string> sets;
};

std::string schema_footer() {
  std::string out = "Config keys (file sections or --set key=value):\n";
  for (const auto& k : config_schema()) {
    out += "  ";
    out += k.key;
    out += " (default: ";
    out += k.def[0] ? k.def : "\"\"";
    out += ") - ";
    out += k.doc;
    out += "\n";
  }
  return out;
}

void add_common(CLI::App* cmd, CommonArgs* args) {
  cmd->add_option("--config", args->config_path, "config file (key = value with [sections])");
  cmd->add_option("--seed", args->seed, "override the global seed");
  cmd->add_option("--out", args->out, "override the subcommand's output directory");
  cmd->add_option("--set", args->sets, "override any config key, e.g. --set train.lr=1e-3");
  cmd->footer(schema_footer());
}

RunConfig resolve(const CommonArgs& args, const char* out_key) {
  RunConfig cfg = RunConfig::from_file(args.config_path);
  for (const auto& kv : args.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!args.seed.empty()) cfg.set("seed", args.seed);
  if (!args.out.empty() && out_key) cfg.set(out_key, args.out);
  return cfg;
}

int cmd_gen_data(const CommonArgs& args) {
  const RunConfig cfg = resolve(args, "data.out_dir");
  const GenConfig gen = make_gen_config(cfg);
  const BuildResult built = build_dataset(gen);
  for (const auto& w : built.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "wrote " << built.manifest.records.size() << " samples to " << gen.out_dir << "\n";
  return 0;
}

int cmd_train(const CommonArgs& args) {
  const RunConfig cfg = resolve(args, "train.out_dir");
  TrainConfig tc = make_train_config(cfg);
  const DatasetManifest manifest = load_manifest(fs::path(tc.dataset_dir) / "manifest.jsonl");
  if (tc.model.image_height == 0 || tc.model.image_width == 0) {
    const Image probe = read_pgm(manifest.dir / manifest.records.front().image_path);
    tc.model.image_height = probe.height;
    tc.model.image_width = probe.width;
  }
  const TrainResult res = run_training(tc, manifest);
  std::cout << "trained " << res.steps_completed << " steps; checkpoint "
            << res.final_checkpoint.string() << "; metrics " << res.metrics_path.string() << "\n";
  return 0;
}

int cmd_eval(const CommonArgs& args) {
  const RunConfig cfg = resolve(args, "eval.out_dir");
  const fs::path out_dir = cfg.str("eval.out_dir");
  const DatasetManifest manifest =
      load_manifest(fs::path(cfg.str("eval.dataset")) / "manifest.jsonl");
  const PolicyParams params = load_checkpoint(cfg.str("eval.checkpoint"));
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir.string() + "': " + ec.message());

  std::vector<EvalRecord> records;
  const EvalReport rep = evaluate(params, manifest, cfg.str("eval.split"), &records,
                                  static_cast<int>(cfg.integer("eval.threads")));
  write_report_csv(out_dir / "report.csv", rep);
  write_samples_csv(out_dir / "samples.csv", records);
  write_groups_csv(out_dir / "groups.csv", confidence_grouping(records));
  if (cfg.boolean("eval.naive")) {
    const EvalReport naive = evaluate_naive(manifest, cfg.str("eval.split"),
                                            static_cast<int>(cfg.integer("eval.naive_window")));
    write_report_csv(out_dir / "report_naive.csv", naive);
  }
  std::cout << "evaluated " << records.size() << " samples; reports in " << out_dir.string()
            << "\n";
  return 0;
}

int cmd_compare(const CommonArgs& args, const std::vector<std::string>& files) {
  const RunConfig cfg = resolve(args, nullptr);
  std::vector<fs::path> paths(files.begin(), files.end());
  const CompareTable table = compare_runs(paths, cfg.str("compare.column"));
  const fs::path out =
      args.out.empty() ? fs::path("compare.csv") : fs::path(args.out) / "compare.csv";
  if (out.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(out.parent_path(), ec);
  }
  write_compare_csv(out, table);
  std::cout << "wrote " << out.string() << "\n";
  return 0;
}

int cmd_plot(const CommonArgs& args, const std::string& input) {
  const fs::path out_dir = args.out.empty() ? fs::path("plots") : fs::path(args.out);
  const auto written = plot_csv(input, out_dir);
  for (const auto& p : written) std::cout << "wrote " << p.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uarpo: chart trend-prediction RL lab"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, eval_args, cmp_args, plot_args;
  std::vector<std::string> cmp_files;
  std::string plot_input;

  CLI::App* gen = app.add_subcommand("gen-data", "generate a chart dataset (images + manifest)");
  add_common(gen, &gen_args);
  CLI::App* train = app.add_subcommand("train", "fine-tune the policy on a dataset");
  add_common(train, &train_args);
  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a split");
  add_common(eval_cmd, &eval_args);
  CLI::App* cmp = app.add_subcommand("compare", "align metrics files on the step column");
  add_common(cmp, &cmp_args);
  cmp->add_option("files", cmp_files, "metrics CSV files")->required()->expected(-1);
  CLI::App* plot = app.add_subcommand("plot", "render line plots from a metrics/compare CSV");
  add_common(plot, &plot_args);
  plot->add_option("input", plot_input, "CSV to plot")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_args);
    if (train->parsed()) return cmd_train(train_args);
    if (eval_cmd->parsed()) return cmd_eval(eval_args);
    if (cmp->parsed()) return cmd_compare(cmp_args, cmp_files);
    if (plot->parsed()) return cmd_plot(plot_args, plot_input);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ShapeError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
