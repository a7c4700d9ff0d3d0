#pragma once

// Experiment configuration: a sectioned JSON document that resolves to the
// typed configs of the other modules. Unknown keys are rejected, every field
// has a documented default, and the resolved snapshot re-parses to an
// identical experiment.

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "orca/dataset.hpp"
#include "orca/eval.hpp"
#include "orca/model.hpp"
#include "orca/objective.hpp"
#include "orca/trainer.hpp"

namespace orca {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

struct GeneratorConfig {
  int num_classes = 6;
  int dim = 2;
  int per_class = 200;
  double separation = 8.0;
  double cluster_std = 1.0;
};

struct CsvSourceConfig {
  std::string path;
  std::string label_column = "label";
  bool has_header = true;
};

enum class DatasetSource { Generator, Csv, File };

struct DatasetConfig {
  DatasetSource source = DatasetSource::Generator;
  GeneratorConfig generator;
  CsvSourceConfig csv;
  std::string file;  // pre-built dataset container, already split
  SplitConfig split;
  bool split_seed_explicit = false;
  double imbalance_ratio = 1.0;  // 1 disables subsampling
  bool standardize = false;
};

struct ModelSection {
  std::vector<int> hidden_dims = {64};
  int embed_dim = 16;
  int extra_head_capacity = -1;  // -1: use the dataset's novel-class count
  double dropout_rate = 0.0;
};

struct EvalSection {
  double head_count_threshold = 0.01;
  NmiNormalization nmi_normalization = NmiNormalization::Arithmetic;
};

struct OutputSection {
  std::string dir = "runs/out";
  std::string format = "jsonl";  // or "csv"
};

struct ExperimentConfig {
  uint64_t seed = 1;
  DatasetConfig dataset;
  ModelSection model;
  LossConfig loss;
  TrainConfig train;
  EvalSection eval;
  OutputSection output;
};

namespace cfgdetail {

inline void reject_unknown(const json& obj, const std::string& section,
                           const std::set<std::string>& keys) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!keys.count(it.key()))
      throw std::invalid_argument("config: unknown key " +
                                  (section.empty() ? it.key() : section + "." + it.key()));
}

inline double num(const json& obj, const std::string& section, const std::string& key,
                  double fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number())
    throw std::invalid_argument("config: " + section + "." + key + " must be a number");
  return v.get<double>();
}

inline int integer(const json& obj, const std::string& section, const std::string& key,
                   int fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer())
    throw std::invalid_argument("config: " + section + "." + key + " must be an integer");
  return v.get<int>();
}

inline bool boolean(const json& obj, const std::string& section, const std::string& key,
                    bool fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_boolean())
    throw std::invalid_argument("config: " + section + "." + key + " must be a boolean");
  return v.get<bool>();
}

inline std::string text(const json& obj, const std::string& section, const std::string& key,
                        const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_string())
    throw std::invalid_argument("config: " + section + "." + key + " must be a string");
  return v.get<std::string>();
}

}  // namespace cfgdetail

inline ExperimentConfig parse_experiment_config(const json& root) {
  ExperimentConfig cfg;
  cfgdetail::reject_unknown(
      root, "", {"seed", "dataset", "model", "loss", "train", "eval", "output"});
  if (root.contains("seed")) {
    if (!root.at("seed").is_number_integer() || root.at("seed").get<int64_t>() < 0)
      throw std::invalid_argument("config: seed must be a non-negative integer");
    cfg.seed = root.at("seed").get<uint64_t>();
  }

  if (root.contains("dataset")) {
    const json& d = root.at("dataset");
    cfgdetail::reject_unknown(
        d, "dataset",
        {"generator", "csv", "file", "split", "imbalance_ratio", "standardize"});
    const int sources = static_cast<int>(d.contains("generator")) +
                        static_cast<int>(d.contains("csv")) +
                        static_cast<int>(d.contains("file"));
    if (sources > 1)
      throw std::invalid_argument(
          "config: dataset must have exactly one of generator, csv, file");
    if (d.contains("csv")) {
      cfg.dataset.source = DatasetSource::Csv;
      const json& c = d.at("csv");
      cfgdetail::reject_unknown(c, "dataset.csv", {"path", "label_column", "has_header"});
      cfg.dataset.csv.path = cfgdetail::text(c, "dataset.csv", "path", "");
      if (cfg.dataset.csv.path.empty())
        throw std::invalid_argument("config: dataset.csv.path is required");
      if (c.contains("label_column") && c.at("label_column").is_number_integer())
        cfg.dataset.csv.label_column = std::to_string(c.at("label_column").get<int>());
      else
        cfg.dataset.csv.label_column =
            cfgdetail::text(c, "dataset.csv", "label_column", "label");
      cfg.dataset.csv.has_header = cfgdetail::boolean(c, "dataset.csv", "has_header", true);
    } else if (d.contains("file")) {
      cfg.dataset.source = DatasetSource::File;
      if (!d.at("file").is_string())
        throw std::invalid_argument("config: dataset.file must be a string path");
      cfg.dataset.file = d.at("file").get<std::string>();
    } else {
      cfg.dataset.source = DatasetSource::Generator;
      if (d.contains("generator")) {
        const json& g = d.at("generator");
        cfgdetail::reject_unknown(
            g, "dataset.generator",
            {"num_classes", "dim", "per_class", "separation", "cluster_std"});
        cfg.dataset.generator.num_classes =
            cfgdetail::integer(g, "dataset.generator", "num_classes", 6);
        cfg.dataset.generator.dim = cfgdetail::integer(g, "dataset.generator", "dim", 2);
        cfg.dataset.generator.per_class =
            cfgdetail::integer(g, "dataset.generator", "per_class", 200);
        cfg.dataset.generator.separation =
            cfgdetail::num(g, "dataset.generator", "separation", 8.0);
        cfg.dataset.generator.cluster_std =
            cfgdetail::num(g, "dataset.generator", "cluster_std", 1.0);
        if (cfg.dataset.generator.num_classes < 2)
          throw std::invalid_argument("config: dataset.generator.num_classes must be >= 2");
        if (cfg.dataset.generator.per_class < 1)
          throw std::invalid_argument("config: dataset.generator.per_class must be >= 1");
        if (cfg.dataset.generator.dim < 1)
          throw std::invalid_argument("config: dataset.generator.dim must be >= 1");
        if (cfg.dataset.generator.cluster_std <= 0.0)
          throw std::invalid_argument("config: dataset.generator.cluster_std must be > 0");
        if (cfg.dataset.generator.separation < 0.0)
          throw std::invalid_argument("config: dataset.generator.separation must be >= 0");
      }
    }
    if (d.contains("split")) {
      const json& s = d.at("split");
      cfgdetail::reject_unknown(s, "dataset.split",
                                {"seen_class_fraction", "labeled_fraction", "seed"});
      cfg.dataset.split.seen_class_fraction =
          cfgdetail::num(s, "dataset.split", "seen_class_fraction", 0.5);
      cfg.dataset.split.labeled_fraction =
          cfgdetail::num(s, "dataset.split", "labeled_fraction", 0.5);
      if (cfg.dataset.split.seen_class_fraction <= 0.0 ||
          cfg.dataset.split.seen_class_fraction >= 1.0)
        throw std::invalid_argument(
            "config: dataset.split.seen_class_fraction must be in (0,1)");
      if (cfg.dataset.split.labeled_fraction <= 0.0 ||
          cfg.dataset.split.labeled_fraction >= 1.0)
        throw std::invalid_argument("config: dataset.split.labeled_fraction must be in (0,1)");
      if (s.contains("seed")) {
        if (!s.at("seed").is_number_integer() || s.at("seed").get<int64_t>() < 0)
          throw std::invalid_argument("config: dataset.split.seed must be a non-negative integer");
        cfg.dataset.split.seed = s.at("seed").get<uint64_t>();
        cfg.dataset.split_seed_explicit = true;
      }
    }
    cfg.dataset.imbalance_ratio = cfgdetail::num(d, "dataset", "imbalance_ratio", 1.0);
    if (cfg.dataset.imbalance_ratio < 1.0)
      throw std::invalid_argument("config: dataset.imbalance_ratio must be >= 1");
    cfg.dataset.standardize = cfgdetail::boolean(d, "dataset", "standardize", false);
  }

  if (root.contains("model")) {
    const json& m = root.at("model");
    cfgdetail::reject_unknown(
        m, "model", {"hidden_dims", "embed_dim", "extra_head_capacity", "dropout_rate"});
    if (m.contains("hidden_dims")) {
      if (!m.at("hidden_dims").is_array())
        throw std::invalid_argument("config: model.hidden_dims must be an array of integers");
      cfg.model.hidden_dims.clear();
      for (const json& v : m.at("hidden_dims")) {
        if (!v.is_number_integer() || v.get<int>() < 1)
          throw std::invalid_argument("config: model.hidden_dims entries must be integers >= 1");
        cfg.model.hidden_dims.push_back(v.get<int>());
      }
    }
    cfg.model.embed_dim = cfgdetail::integer(m, "model", "embed_dim", 16);
    if (cfg.model.embed_dim < 1)
      throw std::invalid_argument("config: model.embed_dim must be >= 1");
    cfg.model.extra_head_capacity = cfgdetail::integer(m, "model", "extra_head_capacity", -1);
    cfg.model.dropout_rate = cfgdetail::num(m, "model", "dropout_rate", 0.0);
    if (cfg.model.dropout_rate < 0.0 || cfg.model.dropout_rate >= 1.0)
      throw std::invalid_argument("config: model.dropout_rate must be in [0, 1)");
  }

  if (root.contains("loss")) {
    const json& l = root.at("loss");
    cfgdetail::reject_unknown(l, "loss",
                              {"margin_mode", "fixed_margin", "lambda", "s", "eta_s", "eta1",
                               "eta2", "prior", "pair_eps"});
    const std::string mode = cfgdetail::text(l, "loss", "margin_mode", "adaptive");
    if (mode == "adaptive")
      cfg.loss.margin_mode = MarginMode::Adaptive;
    else if (mode == "fixed")
      cfg.loss.margin_mode = MarginMode::Fixed;
    else if (mode == "zero")
      cfg.loss.margin_mode = MarginMode::Zero;
    else
      throw std::invalid_argument(
          "config: loss.margin_mode must be one of adaptive, fixed, zero");
    cfg.loss.fixed_margin = cfgdetail::num(l, "loss", "fixed_margin", 0.5);
    cfg.loss.lambda = cfgdetail::num(l, "loss", "lambda", 1.0);
    cfg.loss.s = cfgdetail::num(l, "loss", "s", 10.0);
    cfg.loss.eta_s = cfgdetail::num(l, "loss", "eta_s", 1.0);
    cfg.loss.eta1 = cfgdetail::num(l, "loss", "eta1", 1.0);
    cfg.loss.eta2 = cfgdetail::num(l, "loss", "eta2", 1.0);
    cfg.loss.pair_eps = cfgdetail::num(l, "loss", "pair_eps", 1e-12);
    if (l.contains("prior")) {
      const json& p = l.at("prior");
      if (p.is_string()) {
        if (p.get<std::string>() != "uniform")
          throw std::invalid_argument("config: loss.prior must be \"uniform\" or an array");
      } else if (p.is_array()) {
        cfg.loss.prior.clear();
        double sum = 0.0;
        for (const json& v : p) {
          if (!v.is_number() || v.get<double>() < 0.0)
            throw std::invalid_argument("config: loss.prior entries must be numbers >= 0");
          cfg.loss.prior.push_back(v.get<double>());
          sum += v.get<double>();
        }
        if (std::abs(sum - 1.0) > 1e-6)
          throw std::invalid_argument("config: loss.prior must sum to 1");
      } else {
        throw std::invalid_argument("config: loss.prior must be \"uniform\" or an array");
      }
    }
    cfg.loss.validate();
  }

  if (root.contains("train")) {
    const json& t = root.at("train");
    cfgdetail::reject_unknown(
        t, "train",
        {"epochs", "batch_size", "optimizer", "momentum", "weight_decay", "beta1", "beta2",
         "adam_eps", "base_lr", "lr_decay_epochs", "lr_decay_factor"});
    cfg.train.epochs = cfgdetail::integer(t, "train", "epochs", 200);
    cfg.train.batch_size = cfgdetail::integer(t, "train", "batch_size", 512);
    if (cfg.train.batch_size < 2)
      throw std::invalid_argument("config: train.batch_size must be >= 2");
    const std::string opt = cfgdetail::text(t, "train", "optimizer", "sgd_momentum");
    if (opt == "sgd_momentum")
      cfg.train.optimizer = OptimizerKind::SgdMomentum;
    else if (opt == "adam")
      cfg.train.optimizer = OptimizerKind::Adam;
    else
      throw std::invalid_argument("config: train.optimizer must be sgd_momentum or adam");
    cfg.train.momentum = cfgdetail::num(t, "train", "momentum", 0.9);
    cfg.train.weight_decay = cfgdetail::num(
        t, "train", "weight_decay", cfg.train.optimizer == OptimizerKind::Adam ? 0.0 : 5e-4);
    cfg.train.beta1 = cfgdetail::num(t, "train", "beta1", 0.9);
    cfg.train.beta2 = cfgdetail::num(t, "train", "beta2", 0.999);
    cfg.train.adam_eps = cfgdetail::num(t, "train", "adam_eps", 1e-8);
    cfg.train.base_lr = cfgdetail::num(
        t, "train", "base_lr", cfg.train.optimizer == OptimizerKind::Adam ? 1e-3 : 0.1);
    if (t.contains("lr_decay_epochs")) {
      if (!t.at("lr_decay_epochs").is_array())
        throw std::invalid_argument("config: train.lr_decay_epochs must be an array");
      cfg.train.lr_decay_epochs.clear();
      for (const json& v : t.at("lr_decay_epochs")) {
        if (!v.is_number_integer())
          throw std::invalid_argument("config: train.lr_decay_epochs entries must be integers");
        cfg.train.lr_decay_epochs.push_back(v.get<int>());
      }
    }
    cfg.train.lr_decay_factor = cfgdetail::num(t, "train", "lr_decay_factor", 10.0);
    cfg.train.validate();
  }
  cfg.train.seed = mix_seed(cfg.seed, 5);
  if (!cfg.dataset.split_seed_explicit) cfg.dataset.split.seed = mix_seed(cfg.seed, 2);

  if (root.contains("eval")) {
    const json& e = root.at("eval");
    cfgdetail::reject_unknown(e, "eval", {"head_count_threshold", "nmi_normalization"});
    cfg.eval.head_count_threshold = cfgdetail::num(e, "eval", "head_count_threshold", 0.01);
    if (cfg.eval.head_count_threshold < 0.0 || cfg.eval.head_count_threshold > 1.0)
      throw std::invalid_argument("config: eval.head_count_threshold must be in [0, 1]");
    const std::string norm = cfgdetail::text(e, "eval", "nmi_normalization", "arithmetic");
    if (norm == "arithmetic")
      cfg.eval.nmi_normalization = NmiNormalization::Arithmetic;
    else if (norm == "geometric")
      cfg.eval.nmi_normalization = NmiNormalization::Geometric;
    else
      throw std::invalid_argument("config: eval.nmi_normalization must be arithmetic or geometric");
  }

  if (root.contains("output")) {
    const json& o = root.at("output");
    cfgdetail::reject_unknown(o, "output", {"dir", "format"});
    cfg.output.dir = cfgdetail::text(o, "output", "dir", "runs/out");
    cfg.output.format = cfgdetail::text(o, "output", "format", "jsonl");
    if (cfg.output.format != "jsonl" && cfg.output.format != "csv")
      throw std::invalid_argument("config: output.format must be jsonl or csv");
  }
  return cfg;
}

inline ExperimentConfig parse_experiment_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config: not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw std::invalid_argument("config: top level must be an object");
  return parse_experiment_config(root);
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str());
}

// Full snapshot with every default materialized. Parsing the snapshot yields
// an experiment that reproduces the run bit for bit.
inline ordered_json resolved_config_json(const ExperimentConfig& cfg) {
  ordered_json out;
  out["seed"] = cfg.seed;

  ordered_json ds;
  switch (cfg.dataset.source) {
    case DatasetSource::Generator: {
      ordered_json g;
      g["num_classes"] = cfg.dataset.generator.num_classes;
      g["dim"] = cfg.dataset.generator.dim;
      g["per_class"] = cfg.dataset.generator.per_class;
      g["separation"] = cfg.dataset.generator.separation;
      g["cluster_std"] = cfg.dataset.generator.cluster_std;
      ds["generator"] = g;
      break;
    }
    case DatasetSource::Csv: {
      ordered_json c;
      c["path"] = cfg.dataset.csv.path;
      c["label_column"] = cfg.dataset.csv.label_column;
      c["has_header"] = cfg.dataset.csv.has_header;
      ds["csv"] = c;
      break;
    }
    case DatasetSource::File:
      ds["file"] = cfg.dataset.file;
      break;
  }
  if (cfg.dataset.source != DatasetSource::File) {
    ordered_json s;
    s["seen_class_fraction"] = cfg.dataset.split.seen_class_fraction;
    s["labeled_fraction"] = cfg.dataset.split.labeled_fraction;
    s["seed"] = cfg.dataset.split.seed;
    ds["split"] = s;
  }
  ds["imbalance_ratio"] = cfg.dataset.imbalance_ratio;
  ds["standardize"] = cfg.dataset.standardize;
  out["dataset"] = ds;

  ordered_json m;
  m["hidden_dims"] = cfg.model.hidden_dims;
  m["embed_dim"] = cfg.model.embed_dim;
  m["extra_head_capacity"] = cfg.model.extra_head_capacity;
  m["dropout_rate"] = cfg.model.dropout_rate;
  out["model"] = m;

  ordered_json l;
  l["margin_mode"] = cfg.loss.margin_mode == MarginMode::Adaptive ? "adaptive"
                     : cfg.loss.margin_mode == MarginMode::Fixed  ? "fixed"
                                                                  : "zero";
  l["fixed_margin"] = cfg.loss.fixed_margin;
  l["lambda"] = cfg.loss.lambda;
  l["s"] = cfg.loss.s;
  l["eta_s"] = cfg.loss.eta_s;
  l["eta1"] = cfg.loss.eta1;
  l["eta2"] = cfg.loss.eta2;
  if (cfg.loss.prior.empty())
    l["prior"] = "uniform";
  else
    l["prior"] = cfg.loss.prior;
  l["pair_eps"] = cfg.loss.pair_eps;
  out["loss"] = l;

  ordered_json t;
  t["epochs"] = cfg.train.epochs;
  t["batch_size"] = cfg.train.batch_size;
  t["optimizer"] =
      cfg.train.optimizer == OptimizerKind::SgdMomentum ? "sgd_momentum" : "adam";
  t["momentum"] = cfg.train.momentum;
  t["weight_decay"] = cfg.train.weight_decay;
  t["beta1"] = cfg.train.beta1;
  t["beta2"] = cfg.train.beta2;
  t["adam_eps"] = cfg.train.adam_eps;
  t["base_lr"] = cfg.train.base_lr;
  t["lr_decay_epochs"] = cfg.train.lr_decay_epochs;
  t["lr_decay_factor"] = cfg.train.lr_decay_factor;
  out["train"] = t;

  ordered_json e;
  e["head_count_threshold"] = cfg.eval.head_count_threshold;
  e["nmi_normalization"] =
      cfg.eval.nmi_normalization == NmiNormalization::Arithmetic ? "arithmetic" : "geometric";
  out["eval"] = e;

  ordered_json o;
  o["dir"] = cfg.output.dir;
  o["format"] = cfg.output.format;
  out["output"] = o;
  return out;
}

// Dotted-path override, e.g. "train.epochs=5". The value parses as JSON when
// possible and falls back to a plain string.
inline void apply_override(json& root, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::invalid_argument("override must look like section.key=value: " + assignment);
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::parse_error&) {
    parsed = value;  // treat as string
  }
  json* cur = &root;
  size_t begin = 0;
  while (true) {
    const size_t dotpos = path.find('.', begin);
    const std::string key = path.substr(begin, dotpos - begin);
    if (key.empty()) throw std::invalid_argument("override has an empty path segment: " + path);
    if (dotpos == std::string::npos) {
      (*cur)[key] = parsed;
      return;
    }
    if (!cur->contains(key) || !(*cur)[key].is_object()) (*cur)[key] = json::object();
    cur = &(*cur)[key];
    begin = dotpos + 1;
  }
}

}  // namespace orca
