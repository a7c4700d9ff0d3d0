#pragma once

// Open-world evaluation protocol: minimum-cost assignment, accuracy after
// optimal cluster-to-class matching, normalized mutual information, per-head
// utilization stats, and a Lloyd/k-means++ reference baseline.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "orca/matrix.hpp"
#include "orca/rng.hpp"

namespace orca {

struct Assignment {
  // column per row; -1 marks a row parked on an internal dummy column, which
  // only happens when the input had more rows than columns.
  std::vector<int> col_of_row;
  double total_cost = 0.0;
};

namespace detail {

// Potential-based shortest augmenting path solver, O(n^2 k), requires n <= k.
// Returns the column of each row. Ties fall to the lowest column index by
// scan order, but optimality of the *set* is all callers may rely on.
inline std::vector<int> hungarian_core(const Matrix& cost) {
  const int n = static_cast<int>(cost.rows);
  const int k = static_cast<int>(cost.cols);
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(k + 1, 0.0);
  std::vector<int> match(k + 1, 0), way(k + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(k + 1, inf);
    std::vector<char> used(k + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      int j1 = -1;
      double delta = inf;
      for (int j = 1; j <= k; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= k; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> col_of_row(n, -1);
  for (int j = 1; j <= k; ++j)
    if (match[j] != 0) col_of_row[match[j] - 1] = j - 1;
  return col_of_row;
}

inline double assignment_cost(const Matrix& cost, const std::vector<int>& col_of_row) {
  double acc = 0.0;
  for (size_t i = 0; i < col_of_row.size(); ++i)
    if (col_of_row[i] >= 0) acc += cost(i, static_cast<size_t>(col_of_row[i]));
  return acc;
}

}  // namespace detail

// Minimum-cost injective assignment of rows to columns. Inputs with more rows
// than columns are padded internally with zero-cost dummy columns; rows that
// land on a dummy are reported as unassigned (-1). Among equal-cost optima the
// lexicographically smallest row->column map is returned, fixed row by row.
inline Assignment hungarian_min_cost(const Matrix& cost_in) {
  if (cost_in.rows == 0 || cost_in.cols == 0)
    throw std::invalid_argument("hungarian_min_cost: empty cost matrix");
  const size_t n = cost_in.rows;
  const size_t k_real = cost_in.cols;
  Matrix cost = cost_in;
  if (k_real < n) {
    Matrix padded(n, n, 0.0);
    for (size_t i = 0; i < n; ++i)
      for (size_t j = 0; j < k_real; ++j) padded(i, j) = cost_in(i, j);
    cost = padded;
  }
  const size_t k = cost.cols;

  std::vector<int> best = detail::hungarian_core(cost);
  const double best_cost = detail::assignment_cost(cost, best);
  double scale = 1.0;
  for (double v : cost.data) scale = std::max(scale, std::abs(v));
  const double tol = 1e-9 * scale;

  // Lexicographic refinement: fix rows in order to the smallest column that
  // still permits an optimal completion of the remainder.
  std::vector<int> fixed(n, -1);
  std::vector<char> col_used(k, 0);
  double fixed_cost = 0.0;
  for (size_t r = 0; r < n; ++r) {
    const size_t rem_rows = n - r - 1;
    for (size_t c = 0; c < k; ++c) {
      if (col_used[c]) continue;
      double candidate = fixed_cost + cost(r, c);
      if (rem_rows > 0) {
        std::vector<size_t> sub_cols;
        for (size_t j = 0; j < k; ++j)
          if (!col_used[j] && j != c) sub_cols.push_back(j);
        Matrix sub(rem_rows, sub_cols.size());
        for (size_t i = 0; i < rem_rows; ++i)
          for (size_t j = 0; j < sub_cols.size(); ++j) sub(i, j) = cost(r + 1 + i, sub_cols[j]);
        candidate += detail::assignment_cost(sub, detail::hungarian_core(sub));
      }
      if (candidate <= best_cost + tol) {
        fixed[r] = static_cast<int>(c);
        col_used[c] = 1;
        fixed_cost += cost(r, c);
        break;
      }
    }
    if (fixed[r] < 0) {  // numeric fallback: keep the unrefined optimum
      fixed = best;
      break;
    }
  }

  Assignment out;
  out.col_of_row = fixed;
  for (int& c : out.col_of_row)
    if (c >= static_cast<int>(k_real)) c = -1;
  // Cost summed in row order so an oracle summing the same entries in the
  // same order compares bit-exactly.
  out.total_cost = 0.0;
  for (size_t i = 0; i < n; ++i)
    if (out.col_of_row[i] >= 0) out.total_cost += cost_in(i, static_cast<size_t>(out.col_of_row[i]));
  return out;
}

struct MatchedAccuracy {
  double accuracy = 0.0;
  // matching[p] = label id assigned to prediction id p, -1 when unmatched.
  std::map<int, int> matching;
};

namespace detail {

inline std::vector<int> sorted_unique(const std::vector<int>& xs) {
  std::vector<int> u = xs;
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  return u;
}

}  // namespace detail

// Accuracy under the optimal injective matching of prediction ids to label
// ids (maximum matched count via Hungarian on negated confusion counts).
inline MatchedAccuracy matched_accuracy(const std::vector<int>& preds,
                                        const std::vector<int>& labels) {
  if (preds.size() != labels.size())
    throw std::invalid_argument("matched_accuracy: length mismatch");
  if (preds.empty()) throw std::invalid_argument("matched_accuracy: empty input");
  const std::vector<int> pu = detail::sorted_unique(preds);
  const std::vector<int> lu = detail::sorted_unique(labels);
  std::map<int, size_t> prow, lcol;
  for (size_t i = 0; i < pu.size(); ++i) prow[pu[i]] = i;
  for (size_t i = 0; i < lu.size(); ++i) lcol[lu[i]] = i;
  Matrix counts(pu.size(), lu.size(), 0.0);
  for (size_t i = 0; i < preds.size(); ++i) counts(prow[preds[i]], lcol[labels[i]]) += 1.0;
  Matrix cost = counts;
  for (double& v : cost.data) v = -v;
  Assignment a = hungarian_min_cost(cost);
  MatchedAccuracy out;
  double matched = 0.0;
  for (size_t r = 0; r < pu.size(); ++r) {
    const int c = a.col_of_row[r];
    out.matching[pu[r]] = c >= 0 ? lu[static_cast<size_t>(c)] : -1;
    if (c >= 0) matched += counts(r, static_cast<size_t>(c));
  }
  out.accuracy = matched / static_cast<double>(preds.size());
  return out;
}

enum class NmiNormalization { Arithmetic, Geometric };

// Mutual information of the two partitions normalized by the mean of their
// entropies. Natural logs; the ratio is base-independent.
inline double nmi(const std::vector<int>& preds, const std::vector<int>& labels,
                  NmiNormalization norm = NmiNormalization::Arithmetic) {
  if (preds.size() != labels.size()) throw std::invalid_argument("nmi: length mismatch");
  if (preds.empty()) throw std::invalid_argument("nmi: empty input");
  const double n = static_cast<double>(preds.size());
  std::map<int, double> pa, pb;
  std::map<std::pair<int, int>, double> joint;
  for (size_t i = 0; i < preds.size(); ++i) {
    pa[preds[i]] += 1.0;
    pb[labels[i]] += 1.0;
    joint[{preds[i], labels[i]}] += 1.0;
  }
  double ha = 0.0, hb = 0.0;
  for (const auto& [id, c] : pa) ha -= (c / n) * std::log(c / n);
  for (const auto& [id, c] : pb) hb -= (c / n) * std::log(c / n);
  if (ha <= 0.0 || hb <= 0.0) return 0.0;
  double mi = 0.0;
  for (const auto& [ids, c] : joint)
    mi += (c / n) * std::log(n * c / (pa[ids.first] * pb[ids.second]));
  const double denom =
      norm == NmiNormalization::Arithmetic ? 0.5 * (ha + hb) : std::sqrt(ha * hb);
  return std::clamp(mi / denom, 0.0, 1.0);
}

struct EvalReport {
  double seen_accuracy = 0.0;
  double novel_accuracy = 0.0;
  double novel_nmi = 0.0;
  double all_accuracy = 0.0;
  std::vector<int64_t> head_counts;  // per head, summing to #evaluated rows
  int active_novel_heads = 0;
  int64_t num_evaluated = 0;
};

// The transductive protocol. `preds` are head ids over the evaluated
// (unlabeled) rows, `labels` the ground-truth class ids. Seen classes are
// bound to the first heads in order: head h <-> seen_classes[h]. Seen-class
// accuracy is direct under that binding; novel and all-class accuracy use the
// optimal matching; the joint matching is unconstrained.
inline EvalReport open_world_report(const std::vector<int>& preds,
                                    const std::vector<int>& labels,
                                    const std::vector<int>& seen_classes,
                                    int num_total_heads,
                                    double head_count_threshold = 0.01) {
  if (preds.size() != labels.size())
    throw std::invalid_argument("open_world_report: length mismatch");
  if (preds.empty()) throw std::invalid_argument("open_world_report: no rows to evaluate");
  const int num_seen_heads = static_cast<int>(seen_classes.size());
  if (num_total_heads < num_seen_heads || num_total_heads <= 0)
    throw std::invalid_argument("open_world_report: head counts inconsistent");
  for (int p : preds)
    if (p < 0 || p >= num_total_heads)
      throw std::invalid_argument("open_world_report: prediction outside head range");

  std::map<int, int> head_of_seen_class;
  for (int h = 0; h < num_seen_heads; ++h) head_of_seen_class[seen_classes[h]] = h;

  EvalReport rep;
  rep.head_counts.assign(static_cast<size_t>(num_total_heads), 0);
  rep.num_evaluated = static_cast<int64_t>(preds.size());

  std::vector<int> novel_preds, novel_labels;
  int64_t seen_total = 0, seen_correct = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    rep.head_counts[static_cast<size_t>(preds[i])] += 1;
    auto it = head_of_seen_class.find(labels[i]);
    if (it != head_of_seen_class.end()) {
      ++seen_total;
      if (preds[i] == it->second) ++seen_correct;
    } else {
      novel_preds.push_back(preds[i]);
      novel_labels.push_back(labels[i]);
    }
  }
  rep.seen_accuracy =
      seen_total > 0 ? static_cast<double>(seen_correct) / static_cast<double>(seen_total) : 0.0;
  if (!novel_preds.empty()) {
    rep.novel_accuracy = matched_accuracy(novel_preds, novel_labels).accuracy;
    rep.novel_nmi = nmi(novel_preds, novel_labels);
  }
  rep.all_accuracy = matched_accuracy(preds, labels).accuracy;

  const double min_count = head_count_threshold * static_cast<double>(preds.size());
  for (int h = num_seen_heads; h < num_total_heads; ++h)
    if (static_cast<double>(rep.head_counts[static_cast<size_t>(h)]) >= min_count)
      ++rep.active_novel_heads;
  return rep;
}

struct KMeansResult {
  std::vector<int> assignments;
  double inertia = 0.0;
  std::vector<double> inertia_history;  // one entry per Lloyd assignment pass
};

namespace detail {

inline double sq_dist(const double* a, const double* b, size_t d) {
  double acc = 0.0;
  for (size_t i = 0; i < d; ++i) {
    const double t = a[i] - b[i];
    acc += t * t;
  }
  return acc;
}

inline KMeansResult kmeans_single(const Matrix& x, size_t k, int max_iters, Rng& rng) {
  const size_t n = x.rows, d = x.cols;
  Matrix centers(k, d);

  // k-means++ seeding
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  size_t first = static_cast<size_t>(rng.next_below(n));
  for (size_t j = 0; j < d; ++j) centers(0, j) = x(first, j);
  for (size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq_dist(x.row_ptr(i), centers.row_ptr(c - 1), d));
      total += d2[i];
    }
    size_t pick = 0;
    if (total <= 0.0) {
      pick = static_cast<size_t>(rng.next_below(n));
    } else {
      const double target = rng.next_double() * total;
      double cum = 0.0;
      pick = n - 1;
      for (size_t i = 0; i < n; ++i) {
        cum += d2[i];
        if (cum > target) {
          pick = i;
          break;
        }
      }
    }
    for (size_t j = 0; j < d; ++j) centers(c, j) = x(pick, j);
  }

  KMeansResult res;
  res.assignments.assign(n, -1);
  std::vector<double> best_d2(n, 0.0);
  for (int iter = 0; iter < max_iters; ++iter) {
    // assignment pass (ties to the lowest center index)
    bool changed = false;
    double inertia = 0.0;
    for (size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = sq_dist(x.row_ptr(i), centers.row_ptr(0), d);
      for (size_t c = 1; c < k; ++c) {
        const double dd = sq_dist(x.row_ptr(i), centers.row_ptr(c), d);
        if (dd < bd) {
          bd = dd;
          best = static_cast<int>(c);
        }
      }
      if (res.assignments[i] != best) changed = true;
      res.assignments[i] = best;
      best_d2[i] = bd;
      inertia += bd;
    }
    res.inertia_history.push_back(inertia);
    res.inertia = inertia;
    if (!changed && iter > 0) break;

    // update pass
    Matrix sums(k, d);
    std::vector<size_t> sizes(k, 0);
    for (size_t i = 0; i < n; ++i) {
      const size_t c = static_cast<size_t>(res.assignments[i]);
      sizes[c] += 1;
      for (size_t j = 0; j < d; ++j) sums(c, j) += x(i, j);
    }
    for (size_t c = 0; c < k; ++c) {
      if (sizes[c] == 0) {
        // re-seed an empty cluster from the farthest point
        size_t far = 0;
        double fd = -1.0;
        for (size_t i = 0; i < n; ++i)
          if (best_d2[i] > fd) {
            fd = best_d2[i];
            far = i;
          }
        for (size_t j = 0; j < d; ++j) centers(c, j) = x(far, j);
        best_d2[far] = 0.0;
      } else {
        for (size_t j = 0; j < d; ++j) centers(c, j) = sums(c, j) / static_cast<double>(sizes[c]);
      }
    }
  }
  return res;
}

}  // namespace detail

// Lloyd iterations with k-means++ seeding; best-inertia restart wins, ties to
// the lowest restart index.
inline KMeansResult kmeans(const Matrix& x, size_t k, int max_iters, int restarts, Rng& rng) {
  if (k == 0 || k > x.rows) throw std::invalid_argument("kmeans: k must be in [1, rows]");
  if (max_iters < 1 || restarts < 1)
    throw std::invalid_argument("kmeans: iterations and restarts must be >= 1");
  KMeansResult best;
  bool have = false;
  for (int r = 0; r < restarts; ++r) {
    KMeansResult cur = detail::kmeans_single(x, k, max_iters, rng);
    if (!have || cur.inertia < best.inertia) {
      best = std::move(cur);
      have = true;
    }
  }
  return best;
}

}  // namespace orca
