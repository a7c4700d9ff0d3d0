#pragma once

// Feed-forward backbone (linear / ReLU / optional dropout) with a normalized
// linear classification head: embeddings and head columns are L2-normalized
// so logits are cosine similarities in [-1, 1]. Gradients are hand-derived,
// including the Jacobians of both normalizations.

#include <cassert>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "orca/matrix.hpp"
#include "orca/rng.hpp"

namespace orca {

struct ModelConfig {
  int input_dim = 0;
  std::vector<int> hidden_dims;
  int embed_dim = 16;
  int num_seen_heads = 0;
  int extra_head_capacity = 0;  // heads reserved for novel classes
  double dropout_rate = 0.0;
  double norm_eps = kEps;

  int total_heads() const { return num_seen_heads + extra_head_capacity; }

  void validate() const {
    if (input_dim < 1) throw std::invalid_argument("model: input_dim must be >= 1");
    if (embed_dim < 1) throw std::invalid_argument("model: embed_dim must be >= 1");
    for (int h : hidden_dims)
      if (h < 1) throw std::invalid_argument("model: hidden widths must be >= 1");
    if (num_seen_heads < 0 || extra_head_capacity < 0 || total_heads() < 2)
      throw std::invalid_argument("model: total heads must be >= 2");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
      throw std::invalid_argument("model: dropout_rate must be in [0, 1)");
  }
};

struct Layer {
  Matrix weight;              // out x in
  std::vector<double> bias;   // out
  bool trainable = true;
};

struct Model {
  ModelConfig cfg;
  std::vector<Layer> layers;  // hidden layers then the embedding layer
  Matrix head_weights;        // embed_dim x total_heads, renormalized per forward
};

struct ForwardTrace {
  Matrix input;
  std::vector<Matrix> pre_acts;       // per hidden layer
  std::vector<Matrix> acts;           // post ReLU (+ dropout in train mode)
  std::vector<Matrix> dropout_masks;  // empty in eval mode or at rate 0
  Matrix embed_raw;                   // pre-normalization embeddings
  std::vector<double> embed_norms;
  Matrix embeddings;                  // unit rows
  Matrix head_normed;                 // unit columns
  std::vector<double> head_norms;
  Matrix logits;                      // batch x H, cosine values
  bool train_mode = false;
};

struct Gradients {
  std::vector<Matrix> layer_weights;
  std::vector<std::vector<double>> layer_biases;
  Matrix head_weights;
};

// Fan-scaled uniform init, Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out));
// biases zero. Draw order is fixed (layers first, heads last) for determinism.
inline Model init_model(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  int in_dim = cfg.input_dim;
  std::vector<int> outs = cfg.hidden_dims;
  outs.push_back(cfg.embed_dim);
  for (int out_dim : outs) {
    Layer layer;
    layer.weight = Matrix(out_dim, in_dim);
    layer.bias.assign(static_cast<size_t>(out_dim), 0.0);
    const double a = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
    for (double& w : layer.weight.data) w = rng.uniform(-a, a);
    m.layers.push_back(std::move(layer));
    in_dim = out_dim;
  }
  const int heads = cfg.total_heads();
  m.head_weights = Matrix(cfg.embed_dim, heads);
  const double a = std::sqrt(6.0 / static_cast<double>(cfg.embed_dim + heads));
  for (double& w : m.head_weights.data) w = rng.uniform(-a, a);
  return m;
}

enum class RunMode { Train, Eval };

inline ForwardTrace forward(const Model& model, const Matrix& x, RunMode mode,
                            Rng* rng = nullptr) {
  if (x.cols != static_cast<size_t>(model.cfg.input_dim))
    throw std::invalid_argument("forward: input has " + std::to_string(x.cols) +
                                " features, model expects " +
                                std::to_string(model.cfg.input_dim));
  const bool train = mode == RunMode::Train;
  const double p = model.cfg.dropout_rate;
  if (train && p > 0.0 && rng == nullptr)
    throw std::invalid_argument("forward: train mode with dropout needs an rng");

  ForwardTrace t;
  t.train_mode = train;
  t.input = x;
  const size_t num_hidden = model.layers.size() - 1;
  const Matrix* cur = &t.input;
  for (size_t l = 0; l < num_hidden; ++l) {
    const Layer& layer = model.layers[l];
    Matrix pre = matmul_nt(*cur, layer.weight);
    for (size_t i = 0; i < pre.rows; ++i)
      for (size_t j = 0; j < pre.cols; ++j) pre(i, j) += layer.bias[j];
    Matrix act = pre;
    for (double& v : act.data) v = v > 0.0 ? v : 0.0;
    if (train && p > 0.0) {
      Matrix mask(act.rows, act.cols);
      const double keep_scale = 1.0 / (1.0 - p);
      for (double& v : mask.data) v = rng->next_double() < p ? 0.0 : keep_scale;
      for (size_t i = 0; i < act.data.size(); ++i) act.data[i] *= mask.data[i];
      t.dropout_masks.push_back(std::move(mask));
    }
    t.pre_acts.push_back(std::move(pre));
    t.acts.push_back(std::move(act));
    cur = &t.acts.back();
  }

  const Layer& embed_layer = model.layers.back();
  t.embed_raw = matmul_nt(*cur, embed_layer.weight);
  for (size_t i = 0; i < t.embed_raw.rows; ++i)
    for (size_t j = 0; j < t.embed_raw.cols; ++j) t.embed_raw(i, j) += embed_layer.bias[j];

  t.embeddings = t.embed_raw;
  t.embed_norms = l2_normalize_rows(t.embeddings, model.cfg.norm_eps);

  // head columns renormalized on every forward
  const size_t d = model.head_weights.rows;
  const size_t h = model.head_weights.cols;
  t.head_normed = model.head_weights;
  t.head_norms.assign(h, 0.0);
  for (size_t j = 0; j < h; ++j) {
    double n2 = 0.0;
    for (size_t i = 0; i < d; ++i) n2 += t.head_normed(i, j) * t.head_normed(i, j);
    const double n = std::sqrt(n2);
    t.head_norms[j] = n;
    const double scale = 1.0 / (n > model.cfg.norm_eps ? n : model.cfg.norm_eps);
    for (size_t i = 0; i < d; ++i) t.head_normed(i, j) *= scale;
  }

  t.logits = matmul(t.embeddings, t.head_normed);
  return t;
}

// Argmax head per row, ties to the lowest index.
inline std::vector<int> predict_heads(const ForwardTrace& t) {
  std::vector<int> preds(t.logits.rows);
  for (size_t i = 0; i < t.logits.rows; ++i) {
    const double* row = t.logits.row_ptr(i);
    int best = 0;
    for (size_t j = 1; j < t.logits.cols; ++j)
      if (row[j] > row[best]) best = static_cast<int>(j);
    preds[i] = best;
  }
  return preds;
}

inline bool is_novel_head(const Model& model, int head) {
  return head >= model.cfg.num_seen_heads;
}

// Backpropagates a logit-space gradient through the head and embedding
// normalizations and the backbone. For a row with ||v|| <= eps the forward
// was v/eps, a linear map, so the gradient is the upstream one scaled by 1/eps.
inline Gradients backward(const Model& model, const ForwardTrace& t,
                          const Matrix& dloss_dlogits) {
  if (dloss_dlogits.rows != t.logits.rows || dloss_dlogits.cols != t.logits.cols)
    throw std::invalid_argument("backward: gradient shape does not match trace");

  Gradients g;
  g.layer_weights.resize(model.layers.size());
  g.layer_biases.resize(model.layers.size());

  const double eps = model.cfg.norm_eps;
  const size_t d = model.head_weights.rows;
  const size_t h = model.head_weights.cols;

  // logits = Z * Wn
  Matrix d_embeddings = matmul_nt(dloss_dlogits, t.head_normed);  // batch x D
  Matrix d_head_normed = matmul_tn(t.embeddings, dloss_dlogits);  // D x H

  // column normalization Jacobian: (I - wn wn^T) / ||w||
  g.head_weights = Matrix(d, h);
  for (size_t j = 0; j < h; ++j) {
    const double n = t.head_norms[j];
    if (n > eps) {
      double proj = 0.0;
      for (size_t i = 0; i < d; ++i) proj += d_head_normed(i, j) * t.head_normed(i, j);
      for (size_t i = 0; i < d; ++i)
        g.head_weights(i, j) = (d_head_normed(i, j) - proj * t.head_normed(i, j)) / n;
    } else {
      for (size_t i = 0; i < d; ++i) g.head_weights(i, j) = d_head_normed(i, j) / eps;
    }
  }

  // row normalization Jacobian: (I - z z^T) / ||e||
  Matrix d_embed_raw(d_embeddings.rows, d_embeddings.cols);
  for (size_t i = 0; i < d_embeddings.rows; ++i) {
    const double n = t.embed_norms[i];
    const double* gz = d_embeddings.row_ptr(i);
    const double* z = t.embeddings.row_ptr(i);
    double* out = d_embed_raw.row_ptr(i);
    if (n > eps) {
      const double proj = dot(gz, z, d_embeddings.cols);
      for (size_t j = 0; j < d_embeddings.cols; ++j) out[j] = (gz[j] - proj * z[j]) / n;
    } else {
      for (size_t j = 0; j < d_embeddings.cols; ++j) out[j] = gz[j] / eps;
    }
  }

  // embedding layer
  const size_t num_hidden = model.layers.size() - 1;
  const Matrix& last_act = num_hidden > 0 ? t.acts.back() : t.input;
  g.layer_weights[num_hidden] = matmul_tn(d_embed_raw, last_act);
  g.layer_biases[num_hidden] = column_sums(d_embed_raw);
  Matrix d_act = matmul(d_embed_raw, model.layers[num_hidden].weight);

  // hidden layers in reverse
  for (size_t l = num_hidden; l-- > 0;) {
    if (!t.dropout_masks.empty()) {
      const Matrix& mask = t.dropout_masks[l];
      for (size_t i = 0; i < d_act.data.size(); ++i) d_act.data[i] *= mask.data[i];
    }
    const Matrix& pre = t.pre_acts[l];
    for (size_t i = 0; i < d_act.data.size(); ++i)
      if (pre.data[i] <= 0.0) d_act.data[i] = 0.0;
    const Matrix& below = l > 0 ? t.acts[l - 1] : t.input;
    g.layer_weights[l] = matmul_tn(d_act, below);
    g.layer_biases[l] = column_sums(d_act);
    if (l > 0) d_act = matmul(d_act, model.layers[l].weight);
  }
  return g;
}

}  // namespace orca
