#pragma once

// The training objective: an uncertainty estimate over the unlabeled set, a
// supervised cross-entropy whose target logit carries an additive margin
// (adaptive lambda*u, fixed, or zero), a positive-pair objective over
// ranking-based pseudo-label pairs, a KL regularizer against a prior over
// heads, and the weighted combination with logit-space gradients.
//
// All probabilities come from one softmax layer over the temperature-scaled
// cosine logits. Raw cosines live in [-1, 1]; without the temperature the
// softmax stays so flat that predictions can never approach one-hot and the
// max-entropy regularizer cannot tell a collapsed head assignment from a
// balanced one. The supervised margin is added to the target logit before
// the scaling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "orca/matrix.hpp"
#include "orca/model.hpp"

namespace orca {

enum class MarginMode { Adaptive, Fixed, Zero };

struct LossConfig {
  MarginMode margin_mode = MarginMode::Adaptive;
  double fixed_margin = 0.5;
  double lambda = 1.0;  // uncertainty strength
  double s = 10.0;      // supervised temperature
  double eta_s = 1.0;   // weight of the supervised term (ablation hook)
  double eta1 = 1.0;    // weight of the pairwise term
  double eta2 = 1.0;    // weight of the regularizer
  std::vector<double> prior;  // empty => uniform over heads
  double pair_eps = 1e-12;

  void validate() const {
    if (lambda < 0.0) throw std::invalid_argument("loss: lambda must be >= 0");
    if (s <= 0.0) throw std::invalid_argument("loss: s must be > 0");
    if (eta_s < 0.0 || eta1 < 0.0 || eta2 < 0.0)
      throw std::invalid_argument("loss: term weights must be >= 0");
    if (pair_eps <= 0.0) throw std::invalid_argument("loss: pair_eps must be > 0");
  }

  double margin(double u_bar) const {
    switch (margin_mode) {
      case MarginMode::Adaptive: return lambda * u_bar;
      case MarginMode::Fixed: return fixed_margin;
      case MarginMode::Zero: return 0.0;
    }
    return 0.0;
  }
};

struct UncertaintyEstimate {
  double u_bar = 0.0;
  int epoch = -1;
  std::vector<double> per_instance_max_prob;  // diagnostics
};

// Mean of (1 - max class probability) over probability rows.
inline double mean_uncertainty(const Matrix& probs) {
  if (probs.rows == 0) throw std::invalid_argument("mean_uncertainty: no rows");
  double acc = 0.0;
  for (size_t i = 0; i < probs.rows; ++i) {
    const double* r = probs.row_ptr(i);
    acc += 1.0 - *std::max_element(r, r + probs.cols);
  }
  return acc / static_cast<double>(probs.rows);
}

// u over the full unlabeled set, computed once per epoch from eval-mode
// forward passes with the temperature-scaled softmax.
inline UncertaintyEstimate estimate_uncertainty(const Model& model,
                                                const Matrix& unlabeled_features,
                                                size_t batch_size, const LossConfig& cfg) {
  if (unlabeled_features.rows == 0)
    throw std::invalid_argument("estimate_uncertainty: unlabeled set is empty");
  if (batch_size == 0) throw std::invalid_argument("estimate_uncertainty: batch_size must be >= 1");

  UncertaintyEstimate est;
  est.per_instance_max_prob.reserve(unlabeled_features.rows);
  double acc = 0.0;
  for (size_t start = 0; start < unlabeled_features.rows; start += batch_size) {
    const size_t count = std::min(batch_size, unlabeled_features.rows - start);
    Matrix batch(count, unlabeled_features.cols);
    for (size_t i = 0; i < count; ++i)
      for (size_t j = 0; j < unlabeled_features.cols; ++j)
        batch(i, j) = unlabeled_features(start + i, j);
    ForwardTrace t = forward(model, batch, RunMode::Eval);
    Matrix probs = softmax_rows(t.logits, cfg.s);
    for (size_t i = 0; i < probs.rows; ++i) {
      const double* r = probs.row_ptr(i);
      const double mx = *std::max_element(r, r + probs.cols);
      est.per_instance_max_prob.push_back(mx);
      acc += 1.0 - mx;
    }
  }
  est.u_bar = acc / static_cast<double>(unlabeled_features.rows);
  return est;
}

struct LossValue {
  double loss = 0.0;
  Matrix dlogits;  // gradient in logit space, batch x H
};

// Margin cross-entropy over the labeled rows of a batch. targets[i] is the
// seen-head index for labeled rows and -1 for unlabeled rows (skipped). The
// margin is *added* to the target logit before scaling by s, so a positive
// margin loosens the seen classes rather than tightening them.
inline LossValue supervised_margin_ce(const Matrix& logits, const std::vector<int>& targets,
                                      double u_bar, const LossConfig& cfg,
                                      int num_seen_heads) {
  if (targets.size() != logits.rows)
    throw std::invalid_argument("supervised_margin_ce: targets do not match batch");
  LossValue out;
  out.dlogits = Matrix(logits.rows, logits.cols);
  const double m = cfg.margin(u_bar);
  size_t labeled = 0;
  for (int tgt : targets) {
    if (tgt < 0) continue;
    if (tgt >= num_seen_heads)
      throw std::invalid_argument("supervised_margin_ce: target " + std::to_string(tgt) +
                                  " is not a seen head");
    ++labeled;
  }
  if (labeled == 0) return out;

  const double inv_n = 1.0 / static_cast<double>(labeled);
  std::vector<double> scaled(logits.cols);
  for (size_t i = 0; i < logits.rows; ++i) {
    const int tgt = targets[i];
    if (tgt < 0) continue;
    const double* row = logits.row_ptr(i);
    for (size_t j = 0; j < logits.cols; ++j)
      scaled[j] = cfg.s * (row[j] + (static_cast<int>(j) == tgt ? m : 0.0));
    std::vector<double> p = softmax_stable(scaled);
    out.loss -= std::log(std::max(p[static_cast<size_t>(tgt)], kEps)) * inv_n;
    double* grow = out.dlogits.row_ptr(i);
    for (size_t j = 0; j < logits.cols; ++j) {
      const double indicator = static_cast<int>(j) == tgt ? 1.0 : 0.0;
      grow[j] = cfg.s * (p[j] - indicator) * inv_n;
    }
  }
  return out;
}

enum class PairSource { GroundTruth, Pseudo };

struct PairBatch {
  std::vector<int> partner;         // one partner per batch row, never self
  std::vector<PairSource> source;   // ground-truth for labeled rows, else pseudo
};

// One positive partner per row, ranked by cosine similarity of the batch
// embeddings. Unlabeled rows take their most similar other row. Labeled rows
// take the most similar row sharing their class; when the batch holds no
// same-class peer the globally most similar row is used and tagged pseudo.
// Ties break toward the lowest row index.
inline PairBatch build_pairs(const ForwardTrace& trace, const std::vector<int>& targets,
                             const std::vector<uint8_t>& labeled_mask) {
  const size_t n = trace.embeddings.rows;
  if (n < 2) throw std::invalid_argument("build_pairs: need at least 2 rows");
  if (targets.size() != n || labeled_mask.size() != n)
    throw std::invalid_argument("build_pairs: metadata does not match batch");

  // embeddings are unit rows, so the dot product is the cosine similarity
  Matrix sim = matmul_nt(trace.embeddings, trace.embeddings);

  PairBatch pairs;
  pairs.partner.assign(n, -1);
  pairs.source.assign(n, PairSource::Pseudo);
  for (size_t i = 0; i < n; ++i) {
    const double* srow = sim.row_ptr(i);
    int best_any = -1;
    double best_any_sim = 0.0;
    int best_same = -1;
    double best_same_sim = 0.0;
    for (size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      if (best_any < 0 || srow[j] > best_any_sim) {
        best_any = static_cast<int>(j);
        best_any_sim = srow[j];
      }
      if (labeled_mask[i] && labeled_mask[j] && targets[j] == targets[i]) {
        if (best_same < 0 || srow[j] > best_same_sim) {
          best_same = static_cast<int>(j);
          best_same_sim = srow[j];
        }
      }
    }
    if (labeled_mask[i] && best_same >= 0) {
      pairs.partner[i] = best_same;
      pairs.source[i] = PairSource::GroundTruth;
    } else {
      pairs.partner[i] = best_any;
      pairs.source[i] = PairSource::Pseudo;
    }
  }
  return pairs;
}

// Fraction of pseudo-sourced pairs whose rows share a ground-truth label.
// Returns the (correct, total) counts so epochs can aggregate across batches.
inline std::pair<int64_t, int64_t> pseudo_pair_agreement(const PairBatch& pairs,
                                                         const std::vector<int>& true_labels) {
  int64_t correct = 0, total = 0;
  for (size_t i = 0; i < pairs.partner.size(); ++i) {
    if (pairs.source[i] != PairSource::Pseudo) continue;
    ++total;
    if (true_labels[i] == true_labels[static_cast<size_t>(pairs.partner[i])]) ++correct;
  }
  return {correct, total};
}

struct ProbLoss {
  double loss = 0.0;
  Matrix dprobs;  // gradient with respect to the probability rows
};

// Mean over rows of -log <p_i, p_partner(i)>, inner product clamped below by
// pair_eps. Only positive pairs enter; there is no negative-pair term.
inline ProbLoss pairwise_positive_loss(const Matrix& probs, const PairBatch& pairs,
                                       const LossConfig& cfg) {
  if (pairs.partner.size() != probs.rows)
    throw std::invalid_argument("pairwise_positive_loss: pairs do not match batch");
  ProbLoss out;
  out.dprobs = Matrix(probs.rows, probs.cols);
  const double inv_n = 1.0 / static_cast<double>(probs.rows);
  for (size_t i = 0; i < probs.rows; ++i) {
    const size_t j = static_cast<size_t>(pairs.partner[i]);
    const double* pi = probs.row_ptr(i);
    const double* pj = probs.row_ptr(j);
    const double ip = dot(pi, pj, probs.cols);
    if (ip > cfg.pair_eps) {
      out.loss -= std::log(ip) * inv_n;
      const double scale = inv_n / ip;
      double* gi = out.dprobs.row_ptr(i);
      double* gj = out.dprobs.row_ptr(j);
      for (size_t k = 0; k < probs.cols; ++k) {
        gi[k] -= scale * pj[k];
        gj[k] -= scale * pi[k];
      }
    } else {
      out.loss -= std::log(cfg.pair_eps) * inv_n;  // clamped: locally constant
    }
  }
  return out;
}

inline std::vector<double> resolve_prior(const LossConfig& cfg, size_t num_heads) {
  if (cfg.prior.empty())
    return std::vector<double>(num_heads, 1.0 / static_cast<double>(num_heads));
  if (cfg.prior.size() != num_heads)
    throw std::invalid_argument("prior_regularizer: prior has " +
                                std::to_string(cfg.prior.size()) + " entries, expected " +
                                std::to_string(num_heads));
  return cfg.prior;
}

// KL(mean batch prediction || prior). An empty prior means uniform, the
// maximum-entropy choice.
inline ProbLoss prior_regularizer(const Matrix& probs, const LossConfig& cfg) {
  if (probs.rows == 0) throw std::invalid_argument("prior_regularizer: empty batch");
  const std::vector<double> prior = resolve_prior(cfg, probs.cols);
  const double inv_n = 1.0 / static_cast<double>(probs.rows);
  std::vector<double> mean(probs.cols, 0.0);
  for (size_t i = 0; i < probs.rows; ++i) {
    const double* r = probs.row_ptr(i);
    for (size_t j = 0; j < probs.cols; ++j) mean[j] += r[j] * inv_n;
  }
  ProbLoss out;
  out.loss = kl_divergence(mean, prior);
  out.dprobs = Matrix(probs.rows, probs.cols);
  std::vector<double> dmean(probs.cols);
  for (size_t j = 0; j < probs.cols; ++j)
    dmean[j] = std::log(std::max(mean[j], kEps)) - std::log(std::max(prior[j], kEps)) + 1.0;
  for (size_t i = 0; i < probs.rows; ++i) {
    double* g = out.dprobs.row_ptr(i);
    for (size_t j = 0; j < probs.cols; ++j) g[j] = dmean[j] * inv_n;
  }
  return out;
}

struct CombinedLoss {
  double total = 0.0;
  double supervised = 0.0;
  double pairwise = 0.0;
  double regularizer = 0.0;
  Matrix dlogits;
  bool batch_had_labeled = true;
};

namespace detail {

// Applies the Jacobian of softmax(scale * logits) row-wise:
// dlogit = scale * p .* (g - <g, p>).
inline void add_softmax_backward(Matrix& dlogits, const Matrix& probs, const Matrix& dprobs,
                                 double scale) {
  for (size_t i = 0; i < probs.rows; ++i) {
    const double* p = probs.row_ptr(i);
    const double* g = dprobs.row_ptr(i);
    double* out = dlogits.row_ptr(i);
    const double proj = dot(g, p, probs.cols);
    for (size_t j = 0; j < probs.cols; ++j) out[j] += scale * p[j] * (g[j] - proj);
  }
}

}  // namespace detail

// total = eta_s * L_S + eta1 * L_P + eta2 * R over one forward trace, with the
// summed logit-space gradient. L_S is skipped (and flagged) when the batch has
// no labeled rows.
inline CombinedLoss combined_loss(const ForwardTrace& trace, const PairBatch& pairs,
                                  const std::vector<int>& targets,
                                  const std::vector<uint8_t>& labeled_mask, double u_bar,
                                  const LossConfig& cfg, int num_seen_heads) {
  if (trace.logits.rows < 2)
    throw std::invalid_argument("combined_loss: need at least 2 rows");
  CombinedLoss out;
  out.dlogits = Matrix(trace.logits.rows, trace.logits.cols);

  size_t labeled = 0;
  for (uint8_t m : labeled_mask) labeled += m;
  out.batch_had_labeled = labeled > 0;
  if (labeled > 0) {
    LossValue sup = supervised_margin_ce(trace.logits, targets, u_bar, cfg, num_seen_heads);
    out.supervised = sup.loss;
    for (size_t i = 0; i < out.dlogits.data.size(); ++i)
      out.dlogits.data[i] += cfg.eta_s * sup.dlogits.data[i];
  }

  Matrix probs = softmax_rows(trace.logits, cfg.s);
  ProbLoss pair = pairwise_positive_loss(probs, pairs, cfg);
  ProbLoss reg = prior_regularizer(probs, cfg);
  out.pairwise = pair.loss;
  out.regularizer = reg.loss;

  // both terms share the same softmax, so their probability gradients can be
  // pushed through the Jacobian together
  Matrix dprobs(probs.rows, probs.cols);
  for (size_t i = 0; i < dprobs.data.size(); ++i)
    dprobs.data[i] = cfg.eta1 * pair.dprobs.data[i] + cfg.eta2 * reg.dprobs.data[i];
  detail::add_softmax_backward(out.dlogits, probs, dprobs, cfg.s);

  out.total = cfg.eta_s * out.supervised + cfg.eta1 * out.pairwise + cfg.eta2 * out.regularizer;
  return out;
}

}  // namespace orca
