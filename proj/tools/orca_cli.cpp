// Experiment front end. Subcommands: generate, train, eval, sweep.
// Exit codes: 0 success, 1 usage or config error, 2 runtime or numeric error.

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "orca/orca.hpp"

namespace {

orca::json load_config_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  orca::json root;
  try {
    root = orca::json::parse(ss.str());
  } catch (const orca::json::parse_error& e) {
    throw std::invalid_argument(std::string("config: not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw std::invalid_argument("config: top level must be an object");
  return root;
}

orca::ExperimentConfig resolve_config(const std::string& config_path,
                                      const std::vector<std::string>& overrides,
                                      long long seed_flag, const std::string& out_flag,
                                      const std::string& format_flag) {
  orca::json root = config_path.empty() ? orca::json::object() : load_config_json(config_path);
  for (const std::string& ov : overrides) orca::apply_override(root, ov);
  if (seed_flag >= 0) root["seed"] = seed_flag;
  if (!out_flag.empty()) root["output"]["dir"] = out_flag;
  if (!format_flag.empty()) root["output"]["format"] = format_flag;
  return orca::parse_experiment_config(root);
}

int cmd_generate(const orca::ExperimentConfig& cfg, const std::string& out_path) {
  orca::OpenWorldDataset ds = orca::build_dataset(cfg);
  orca::write_dataset(out_path, ds);
  std::cout << "wrote " << out_path << ": " << ds.num_rows() << " rows x "
            << ds.num_features() << " features\n";
  std::cout << "  seen classes:";
  for (int c : ds.seen_classes) std::cout << " " << c;
  std::cout << "\n  novel classes:";
  for (int c : ds.novel_classes) std::cout << " " << c;
  std::cout << "\n  labeled rows: " << ds.num_labeled()
            << ", unlabeled rows: " << ds.num_unlabeled() << "\n";
  return 0;
}

int cmd_train(const orca::ExperimentConfig& cfg) {
  orca::RunArtifacts art = orca::run_train(cfg);
  const std::string log_path =
      orca::write_artifacts(art, cfg.output.dir, cfg.output.format);
  std::cout << "trained " << cfg.train.epochs << " epochs; artifacts in " << cfg.output.dir
            << "\n";
  std::cout << "epoch log: " << log_path << "\n";
  std::cout << orca::eval_report_table(art.final_report);
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& dataset_path,
             const std::string& out_dir, double head_count_threshold) {
  orca::Model model = orca::read_model(checkpoint);
  orca::OpenWorldDataset ds = orca::read_dataset(dataset_path);
  orca::EvalReport rep = orca::run_eval(model, ds, head_count_threshold);
  std::cout << orca::eval_report_table(rep);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    orca::detail::write_file_bytes(out_dir + "/eval.json",
                                   orca::eval_report_json(rep) + "\n");
    orca::detail::write_file_bytes(out_dir + "/eval.txt", orca::eval_report_table(rep));
  }
  return 0;
}

int cmd_sweep(const orca::ExperimentConfig& cfg, const std::string& parameter,
              const std::vector<double>& values) {
  orca::SweepResult sweep = orca::run_sweep(cfg, parameter, values);
  std::cout << orca::sweep_table_text(sweep);
  std::filesystem::create_directories(cfg.output.dir);
  const std::string path = cfg.output.dir + (cfg.output.format == "csv" ? "/sweep.csv"
                                                                        : "/sweep.jsonl");
  orca::detail::write_file_bytes(path, cfg.output.format == "csv"
                                           ? orca::sweep_table_csv(sweep)
                                           : orca::sweep_table_jsonl(sweep));
  std::cout << "sweep table: " << path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"open-world semi-supervised learning experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir, format, checkpoint, dataset_path, parameter;
  std::vector<std::string> overrides;
  std::vector<double> values;
  long long seed_flag = -1;
  double head_count_threshold = 0.01;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config (JSON)");
    sub->add_option("--set", overrides, "override a config key, e.g. train.epochs=5");
    sub->add_option("--seed", seed_flag, "override the experiment seed");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--format", format, "metric file format: csv or jsonl");
  };

  CLI::App* gen = app.add_subcommand("generate", "build a dataset file from the config");
  add_common(gen);
  std::string gen_out;
  gen->add_option("--dataset-out", gen_out, "dataset file path")->required();

  CLI::App* train = app.add_subcommand("train", "run the full training loop");
  add_common(train);

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset file");
  eval->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  eval->add_option("--dataset", dataset_path, "dataset file")->required();
  eval->add_option("--out", out_dir, "optional output directory");
  eval->add_option("--head-count-threshold", head_count_threshold,
                   "active-head fraction threshold");

  CLI::App* sweep = app.add_subcommand("sweep", "train once per parameter value");
  add_common(sweep);
  sweep->add_option("--param", parameter, "parameter to sweep")->required();
  sweep->add_option("--values", values, "values to sweep over")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      return cmd_generate(resolve_config(config_path, overrides, seed_flag, out_dir, format),
                          gen_out);
    }
    if (train->parsed()) {
      return cmd_train(resolve_config(config_path, overrides, seed_flag, out_dir, format));
    }
    if (eval->parsed()) {
      return cmd_eval(checkpoint, dataset_path, out_dir, head_count_threshold);
    }
    if (sweep->parsed()) {
      return cmd_sweep(resolve_config(config_path, overrides, seed_flag, out_dir, format),
                       parameter, values);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
