#pragma once

// The training loop: per-epoch uncertainty refresh over the full unlabeled
// set, seeded mini-batch iteration over the union of labeled and unlabeled
// rows, SGD-momentum or Adam updates with step learning-rate decay, and a
// per-epoch evaluation snapshot. Single-threaded and deterministic per seed.

#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "orca/dataset.hpp"
#include "orca/eval.hpp"
#include "orca/matrix.hpp"
#include "orca/model.hpp"
#include "orca/objective.hpp"
#include "orca/rng.hpp"

namespace orca {

enum class OptimizerKind { SgdMomentum, Adam };

struct TrainConfig {
  int epochs = 200;
  int batch_size = 512;
  OptimizerKind optimizer = OptimizerKind::SgdMomentum;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double base_lr = 0.1;
  std::vector<int> lr_decay_epochs = {140, 180};
  double lr_decay_factor = 10.0;
  uint64_t seed = 1;

  void validate() const {
    if (epochs < 0) throw std::invalid_argument("train: epochs must be >= 0");
    if (batch_size < 2) throw std::invalid_argument("train: batch_size must be >= 2");
    if (lr_decay_factor <= 1.0) throw std::invalid_argument("train: lr_decay_factor must be > 1");
    for (size_t i = 1; i < lr_decay_epochs.size(); ++i)
      if (lr_decay_epochs[i] <= lr_decay_epochs[i - 1])
        throw std::invalid_argument("train: lr_decay_epochs must be strictly increasing");
    if (base_lr <= 0.0) throw std::invalid_argument("train: base_lr must be > 0");
    if (momentum < 0.0 || momentum >= 1.0)
      throw std::invalid_argument("train: momentum must be in [0, 1)");
    if (weight_decay < 0.0) throw std::invalid_argument("train: weight_decay must be >= 0");
  }
};

inline double lr_at_epoch(const TrainConfig& cfg, int epoch) {
  if (epoch < 0) throw std::invalid_argument("lr_at_epoch: epoch must be >= 0");
  int decays = 0;
  for (int e : cfg.lr_decay_epochs)
    if (e <= epoch) ++decays;
  return cfg.base_lr / std::pow(cfg.lr_decay_factor, decays);
}

// v <- momentum*v + grad + weight_decay*param; param <- param - lr*v
inline void sgd_momentum_step(std::vector<double>& params, const std::vector<double>& grads,
                              std::vector<double>& velocity, double lr, double momentum,
                              double weight_decay) {
  if (params.size() != grads.size() || params.size() != velocity.size())
    throw std::invalid_argument("sgd_momentum_step: shape mismatch");
  for (size_t i = 0; i < params.size(); ++i) {
    velocity[i] = momentum * velocity[i] + grads[i] + weight_decay * params[i];
    params[i] -= lr * velocity[i];
    assert(std::isfinite(params[i]));
  }
}

// Standard bias-corrected Adam; weight decay enters the gradient (L2 style).
inline void adam_step(std::vector<double>& params, const std::vector<double>& grads,
                      std::vector<double>& m, std::vector<double>& v, double lr, double beta1,
                      double beta2, double eps, int64_t step_index, double weight_decay = 0.0) {
  if (params.size() != grads.size() || params.size() != m.size() || params.size() != v.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  if (step_index < 1) throw std::invalid_argument("adam_step: step_index must be >= 1");
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_index));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_index));
  for (size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i] + weight_decay * params[i];
    m[i] = beta1 * m[i] + (1.0 - beta1) * g;
    v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    params[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    assert(std::isfinite(params[i]));
  }
}

struct EpochLog {
  int epoch = 0;
  double u_bar = 0.0;
  double lr = 0.0;
  double loss_supervised = 0.0;
  double loss_pairwise = 0.0;
  double loss_regularizer = 0.0;
  double loss_total = 0.0;
  double pseudo_label_accuracy = 0.0;
  int64_t pseudo_pair_count = 0;
  int64_t batches_without_labeled = 0;
  int64_t dropped_rows = 0;  // rows lost to a final batch smaller than 2
  EvalReport eval;
};

using EvalHook = std::function<EvalReport(const Model&, int epoch)>;

namespace detail {

struct OptState {
  std::vector<std::vector<double>> slot_a;  // velocity or first moment
  std::vector<std::vector<double>> slot_b;  // second moment (Adam only)
  int64_t step = 0;
};

inline Matrix gather_rows(const Matrix& src, const std::vector<size_t>& rows, size_t begin,
                          size_t count) {
  Matrix out(count, src.cols);
  for (size_t i = 0; i < count; ++i)
    for (size_t j = 0; j < src.cols; ++j) out(i, j) = src(rows[begin + i], j);
  return out;
}

}  // namespace detail

// Default per-epoch snapshot: eval-mode predictions over the unlabeled rows,
// scored with the open-world protocol.
inline EvalReport evaluate_on_unlabeled(const Model& model, const OpenWorldDataset& ds,
                                        size_t batch_size = 1024,
                                        double head_count_threshold = 0.01) {
  const std::vector<size_t> rows = ds.unlabeled_rows();
  if (rows.empty()) throw std::invalid_argument("evaluate_on_unlabeled: no unlabeled rows");
  std::vector<int> preds;
  std::vector<int> labels;
  preds.reserve(rows.size());
  labels.reserve(rows.size());
  for (size_t start = 0; start < rows.size(); start += batch_size) {
    const size_t count = std::min(batch_size, rows.size() - start);
    Matrix batch = detail::gather_rows(ds.features, rows, start, count);
    ForwardTrace t = forward(model, batch, RunMode::Eval);
    std::vector<int> p = predict_heads(t);
    for (size_t i = 0; i < count; ++i) {
      preds.push_back(p[i]);
      labels.push_back(ds.labels[rows[start + i]]);
    }
  }
  return open_world_report(preds, labels, ds.seen_classes, model.cfg.total_heads(),
                           head_count_threshold);
}

// One full training run. Deterministic given train_cfg.seed: uncertainty
// refresh, a seeded shuffle of all rows, then per batch forward -> pair
// construction -> combined loss -> backward -> optimizer step. A trailing
// batch shorter than 2 rows is dropped and accounted in the log.
inline std::vector<EpochLog> fit(Model& model, const OpenWorldDataset& ds,
                                 const LossConfig& loss_cfg, const TrainConfig& train_cfg,
                                 const EvalHook& eval_hook = {}) {
  train_cfg.validate();
  loss_cfg.validate();
  if (ds.num_rows() == 0) throw std::invalid_argument("fit: dataset is empty");
  if (ds.num_labeled() == 0) throw std::invalid_argument("fit: dataset has no labeled rows");
  if (ds.num_unlabeled() == 0) throw std::invalid_argument("fit: dataset has no unlabeled rows");
  if (ds.features.cols != static_cast<size_t>(model.cfg.input_dim))
    throw std::invalid_argument("fit: dataset feature dim " + std::to_string(ds.features.cols) +
                                " does not match model input dim " +
                                std::to_string(model.cfg.input_dim));

  // head targets per row (-1 for unlabeled)
  std::vector<int> head_targets(ds.num_rows(), -1);
  for (size_t i = 0; i < ds.num_rows(); ++i)
    if (ds.labeled_mask[i]) {
      const int h = ds.head_index_of_class(ds.labels[i]);
      if (h < 0) throw std::invalid_argument("fit: labeled row with a non-seen class");
      head_targets[i] = h;
    }

  const std::vector<size_t> unlabeled = ds.unlabeled_rows();
  Matrix unlabeled_features = detail::gather_rows(ds.features, unlabeled, 0, unlabeled.size());

  Rng rng(mix_seed(train_cfg.seed, 101));
  detail::OptState opt;
  const size_t num_tensors = model.layers.size() * 2 + 1;
  opt.slot_a.resize(num_tensors);
  opt.slot_b.resize(num_tensors);

  auto for_each_tensor = [&](auto&& fn) {
    size_t t = 0;
    for (Layer& layer : model.layers) {
      if (layer.trainable) fn(layer.weight.data, t);
      ++t;
      if (layer.trainable) fn(layer.bias, t);
      ++t;
    }
    fn(model.head_weights.data, t);
  };

  std::vector<EpochLog> logs;
  logs.reserve(static_cast<size_t>(train_cfg.epochs));
  std::vector<size_t> order(ds.num_rows());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    log.lr = lr_at_epoch(train_cfg, epoch);

    UncertaintyEstimate unc = estimate_uncertainty(
        model, unlabeled_features, static_cast<size_t>(train_cfg.batch_size), loss_cfg);
    unc.epoch = epoch;
    log.u_bar = unc.u_bar;

    rng.shuffle(order);

    double sum_ls = 0.0, sum_lp = 0.0, sum_r = 0.0, sum_total = 0.0;
    size_t rows_used = 0;
    int64_t pseudo_correct = 0, pseudo_total = 0;

    const size_t bs = static_cast<size_t>(train_cfg.batch_size);
    for (size_t start = 0; start < order.size(); start += bs) {
      const size_t count = std::min(bs, order.size() - start);
      if (count < 2) {
        log.dropped_rows += static_cast<int64_t>(count);
        break;
      }
      Matrix batch = detail::gather_rows(ds.features, order, start, count);
      std::vector<int> targets(count);
      std::vector<uint8_t> mask(count);
      std::vector<int> true_labels(count);
      for (size_t i = 0; i < count; ++i) {
        const size_t row = order[start + i];
        targets[i] = head_targets[row];
        mask[i] = ds.labeled_mask[row];
        true_labels[i] = ds.labels[row];
      }

      ForwardTrace trace = forward(model, batch, RunMode::Train, &rng);
      PairBatch pairs = build_pairs(trace, targets, mask);
      CombinedLoss cl = combined_loss(trace, pairs, targets, mask, unc.u_bar, loss_cfg,
                                      model.cfg.num_seen_heads);
      if (!cl.batch_had_labeled) ++log.batches_without_labeled;
      Gradients grads = backward(model, trace, cl.dlogits);

      opt.step += 1;
      auto grad_of = [&](size_t t) -> const std::vector<double>& {
        if (t + 1 == num_tensors) return grads.head_weights.data;
        const size_t layer = t / 2;
        return t % 2 == 0 ? grads.layer_weights[layer].data : grads.layer_biases[layer];
      };
      for_each_tensor([&](std::vector<double>& params, size_t t) {
        const std::vector<double>& g = grad_of(t);
        if (opt.slot_a[t].empty()) opt.slot_a[t].assign(params.size(), 0.0);
        if (train_cfg.optimizer == OptimizerKind::SgdMomentum) {
          sgd_momentum_step(params, g, opt.slot_a[t], log.lr, train_cfg.momentum,
                            train_cfg.weight_decay);
        } else {
          if (opt.slot_b[t].empty()) opt.slot_b[t].assign(params.size(), 0.0);
          adam_step(params, g, opt.slot_a[t], opt.slot_b[t], log.lr, train_cfg.beta1,
                    train_cfg.beta2, train_cfg.adam_eps, opt.step, train_cfg.weight_decay);
        }
      });

      const double w = static_cast<double>(count);
      sum_ls += cl.supervised * w;
      sum_lp += cl.pairwise * w;
      sum_r += cl.regularizer * w;
      sum_total += cl.total * w;
      rows_used += count;
      const auto [pc, pt] = pseudo_pair_agreement(pairs, true_labels);
      pseudo_correct += pc;
      pseudo_total += pt;
    }

    if (rows_used > 0) {
      log.loss_supervised = sum_ls / static_cast<double>(rows_used);
      log.loss_pairwise = sum_lp / static_cast<double>(rows_used);
      log.loss_regularizer = sum_r / static_cast<double>(rows_used);
      log.loss_total = sum_total / static_cast<double>(rows_used);
    }
    log.pseudo_pair_count = pseudo_total;
    log.pseudo_label_accuracy =
        pseudo_total > 0 ? static_cast<double>(pseudo_correct) / static_cast<double>(pseudo_total)
                         : 0.0;
    log.eval = eval_hook ? eval_hook(model, epoch) : evaluate_on_unlabeled(model, ds);
    logs.push_back(std::move(log));
  }
  return logs;
}

}  // namespace orca
