#pragma once

// Experiment orchestration shared by the CLI and the test suites: dataset
// construction from a config, model construction, a full train run with
// artifact emission, standalone evaluation, and parameter sweeps.

#include <filesystem>
#include <iostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "orca/config.hpp"
#include "orca/dataset.hpp"
#include "orca/eval.hpp"
#include "orca/io.hpp"
#include "orca/model.hpp"
#include "orca/objective.hpp"
#include "orca/trainer.hpp"

namespace orca {

// Sub-stream tags hung off the experiment seed.
enum : uint64_t {
  kSeedTagGenerator = 1,
  kSeedTagImbalance = 3,
  kSeedTagModelInit = 4,
};

inline OpenWorldDataset build_dataset(const ExperimentConfig& cfg) {
  if (cfg.dataset.source == DatasetSource::File) return read_dataset(cfg.dataset.file);

  LabeledData raw;
  if (cfg.dataset.source == DatasetSource::Generator) {
    Rng rng(mix_seed(cfg.seed, kSeedTagGenerator));
    const GeneratorConfig& g = cfg.dataset.generator;
    raw = generate_gaussian_mixture(g.num_classes, g.dim, g.per_class, g.separation,
                                    g.cluster_std, rng);
  } else {
    TabularData tab =
        load_tabular_csv(cfg.dataset.csv.path, cfg.dataset.csv.label_column,
                         cfg.dataset.csv.has_header);
    raw.features = std::move(tab.features);
    raw.labels = std::move(tab.labels);
  }
  if (cfg.dataset.imbalance_ratio > 1.0) {
    Rng rng(mix_seed(cfg.seed, kSeedTagImbalance));
    raw = apply_exponential_imbalance(raw.features, raw.labels, cfg.dataset.imbalance_ratio,
                                      rng);
  }
  if (cfg.dataset.standardize) standardize_features(raw.features);
  return apply_open_world_split(raw.features, raw.labels, cfg.dataset.split);
}

inline Model build_model(const ExperimentConfig& cfg, const OpenWorldDataset& ds) {
  ModelConfig mc;
  mc.input_dim = static_cast<int>(ds.num_features());
  mc.hidden_dims = cfg.model.hidden_dims;
  mc.embed_dim = cfg.model.embed_dim;
  mc.num_seen_heads = static_cast<int>(ds.seen_classes.size());
  mc.extra_head_capacity = cfg.model.extra_head_capacity >= 0
                               ? cfg.model.extra_head_capacity
                               : static_cast<int>(ds.novel_classes.size());
  mc.dropout_rate = cfg.model.dropout_rate;
  Rng rng(mix_seed(cfg.seed, kSeedTagModelInit));
  return init_model(mc, rng);
}

struct RunArtifacts {
  ordered_json resolved_config;
  OpenWorldDataset dataset;
  Model model;
  std::vector<EpochLog> logs;
  EvalReport final_report;
};

inline RunArtifacts run_train(const ExperimentConfig& cfg) {
  RunArtifacts art;
  art.resolved_config = resolved_config_json(cfg);
  art.dataset = build_dataset(cfg);
  art.model = build_model(cfg, art.dataset);
  const double threshold = cfg.eval.head_count_threshold;
  EvalHook hook = [&](const Model& m, int) {
    return evaluate_on_unlabeled(m, art.dataset, 1024, threshold);
  };
  art.logs = fit(art.model, art.dataset, cfg.loss, cfg.train, hook);
  art.final_report = evaluate_on_unlabeled(art.model, art.dataset, 1024, threshold);
  return art;
}

// Writes resolved config, checkpoint, epoch log and the final report.
// Returns the epoch-log path.
inline std::string write_artifacts(const RunArtifacts& art, const std::string& out_dir,
                                   const std::string& format) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  detail::write_file_bytes(out_dir + "/resolved_config.json",
                           art.resolved_config.dump(2) + "\n");
  write_model(out_dir + "/model.bin", art.model);
  const std::string log_path =
      out_dir + (format == "csv" ? "/epochs.csv" : "/epochs.jsonl");
  detail::write_file_bytes(log_path, format == "csv" ? epoch_logs_to_csv(art.logs)
                                                     : epoch_logs_to_jsonl(art.logs));
  detail::write_file_bytes(out_dir + "/eval.json", eval_report_json(art.final_report) + "\n");
  detail::write_file_bytes(out_dir + "/eval.txt", eval_report_table(art.final_report));
  return log_path;
}

inline EvalReport run_eval(const Model& model, const OpenWorldDataset& ds,
                           double head_count_threshold = 0.01) {
  if (ds.num_features() != static_cast<size_t>(model.cfg.input_dim))
    throw std::invalid_argument(
        "eval: dataset has " + std::to_string(ds.num_features()) +
        " features but the checkpoint expects " + std::to_string(model.cfg.input_dim));
  if (ds.num_unlabeled() == 0)
    throw std::invalid_argument("eval: dataset has no unlabeled rows to evaluate");
  return evaluate_on_unlabeled(model, ds, 1024, head_count_threshold);
}

struct SweepRow {
  double value = 0.0;
  EvalReport report;
};

struct SweepResult {
  std::string parameter;
  std::vector<SweepRow> rows;
};

inline const std::vector<std::string>& sweepable_parameters() {
  static const std::vector<std::string> names = {
      "lambda", "eta1", "eta2", "s", "fixed_margin", "labeled_fraction",
      "seen_class_fraction"};
  return names;
}

// Applies one sweep value on top of a resolved config document.
inline void apply_sweep_parameter(json& root, const std::string& parameter, double value) {
  if (parameter == "lambda" || parameter == "eta1" || parameter == "eta2" ||
      parameter == "s") {
    root["loss"][parameter] = value;
  } else if (parameter == "fixed_margin") {
    root["loss"]["fixed_margin"] = value;
    root["loss"]["margin_mode"] = "fixed";
  } else if (parameter == "labeled_fraction" || parameter == "seen_class_fraction") {
    root["dataset"]["split"][parameter] = value;
  } else {
    std::string names;
    for (const std::string& n : sweepable_parameters()) names += " " + n;
    throw std::invalid_argument("sweep: unknown parameter '" + parameter +
                                "'; expected one of" + names);
  }
}

// One full train+eval per value, identically seeded apart from the swept
// parameter. Duplicate values are dropped with a warning.
inline SweepResult run_sweep(const ExperimentConfig& cfg, const std::string& parameter,
                             const std::vector<double>& values, std::ostream& warn = std::cerr) {
  if (values.empty()) throw std::invalid_argument("sweep: value list is empty");
  std::vector<double> unique_values;
  for (double v : values) {
    bool dup = false;
    for (double u : unique_values) dup = dup || u == v;
    if (dup) {
      warn << "sweep: duplicate value " << format_g6(v) << " ignored\n";
      continue;
    }
    unique_values.push_back(v);
  }

  const json base = resolved_config_json(cfg);
  SweepResult result;
  result.parameter = parameter;
  for (double v : unique_values) {
    json doc = base;
    apply_sweep_parameter(doc, parameter, v);
    ExperimentConfig run_cfg = parse_experiment_config(doc);
    RunArtifacts art = run_train(run_cfg);
    result.rows.push_back({v, art.final_report});
  }
  return result;
}

inline std::string sweep_table_csv(const SweepResult& sweep) {
  std::string out = sweep.parameter +
                    ",seen_accuracy,novel_accuracy,novel_nmi,all_accuracy,active_novel_heads\n";
  for (const SweepRow& row : sweep.rows) {
    out += format_g6(row.value) + "," + format_g6(row.report.seen_accuracy) + "," +
           format_g6(row.report.novel_accuracy) + "," + format_g6(row.report.novel_nmi) + "," +
           format_g6(row.report.all_accuracy) + "," +
           std::to_string(row.report.active_novel_heads) + "\n";
  }
  return out;
}

inline std::string sweep_table_jsonl(const SweepResult& sweep) {
  std::string out;
  for (const SweepRow& row : sweep.rows) {
    out += "{\"" + sweep.parameter + "\":" + format_g6(row.value) +
           ",\"seen_accuracy\":" + format_g6(row.report.seen_accuracy) +
           ",\"novel_accuracy\":" + format_g6(row.report.novel_accuracy) +
           ",\"novel_nmi\":" + format_g6(row.report.novel_nmi) +
           ",\"all_accuracy\":" + format_g6(row.report.all_accuracy) +
           ",\"active_novel_heads\":" + std::to_string(row.report.active_novel_heads) + "}\n";
  }
  return out;
}

inline std::string sweep_table_text(const SweepResult& sweep) {
  char buf[256];
  std::string out;
  std::snprintf(buf, sizeof(buf), "  %-20s %-8s %-8s %-10s %-8s\n", sweep.parameter.c_str(),
                "Seen", "Novel", "Novel(NMI)", "All");
  out += buf;
  for (const SweepRow& row : sweep.rows) {
    std::snprintf(buf, sizeof(buf), "  %-20s %-8s %-8s %-10s %-8s\n",
                  format_g6(row.value).c_str(), format_g6(row.report.seen_accuracy).c_str(),
                  format_g6(row.report.novel_accuracy).c_str(),
                  format_g6(row.report.novel_nmi).c_str(),
                  format_g6(row.report.all_accuracy).c_str());
    out += buf;
  }
  return out;
}

}  // namespace orca
