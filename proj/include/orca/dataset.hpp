#pragma once

// Open-world dataset construction: synthetic Gaussian mixtures, the
// seen/novel + labeled/unlabeled split protocol, long-tailed subsampling and
// CSV ingestion for tabular data.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "orca/matrix.hpp"
#include "orca/rng.hpp"

namespace orca {

struct LabeledData {
  Matrix features;          // n x dim
  std::vector<int> labels;  // dense ids 0..K-1
};

struct SplitConfig {
  double seen_class_fraction = 0.5;
  double labeled_fraction = 0.5;
  uint64_t seed = 0;
};

struct OpenWorldDataset {
  Matrix features;
  std::vector<int> labels;            // ground truth, kept for evaluation only
  std::vector<uint8_t> labeled_mask;  // 1 => row belongs to the labeled set
  std::vector<int> seen_classes;      // ascending
  std::vector<int> novel_classes;     // ascending

  size_t num_rows() const { return features.rows; }
  size_t num_features() const { return features.cols; }

  size_t num_labeled() const {
    size_t n = 0;
    for (uint8_t m : labeled_mask) n += m;
    return n;
  }
  size_t num_unlabeled() const { return labeled_mask.size() - num_labeled(); }

  // Head index bound to a seen class, -1 for novel classes.
  int head_index_of_class(int class_id) const {
    auto it = std::lower_bound(seen_classes.begin(), seen_classes.end(), class_id);
    if (it != seen_classes.end() && *it == class_id)
      return static_cast<int>(it - seen_classes.begin());
    return -1;
  }

  std::vector<size_t> unlabeled_rows() const {
    std::vector<size_t> rows;
    for (size_t i = 0; i < labeled_mask.size(); ++i)
      if (!labeled_mask[i]) rows.push_back(i);
    return rows;
  }
};

// Class means are drawn on a spherical shell and rejection-checked for a
// minimum pairwise distance of separation * cluster_std; the shell radius
// grows until placement succeeds. Points are mean + cluster_std * N(0, I).
inline LabeledData generate_gaussian_mixture(int num_classes, int dim, int per_class,
                                             double separation, double cluster_std,
                                             Rng& rng) {
  if (num_classes < 2)
    throw std::invalid_argument("generate_gaussian_mixture: num_classes must be >= 2");
  if (dim < 1) throw std::invalid_argument("generate_gaussian_mixture: dim must be >= 1");
  if (per_class < 1)
    throw std::invalid_argument("generate_gaussian_mixture: per_class must be >= 1");
  if (separation < 0.0)
    throw std::invalid_argument("generate_gaussian_mixture: separation must be >= 0");
  if (cluster_std <= 0.0)
    throw std::invalid_argument("generate_gaussian_mixture: cluster_std must be > 0");

  const double min_dist = separation * cluster_std;
  double radius = std::max(min_dist, cluster_std);
  std::vector<std::vector<double>> means;
  while (true) {
    means.clear();
    bool ok = true;
    for (int c = 0; c < num_classes && ok; ++c) {
      bool placed = false;
      for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
        std::vector<double> dir(dim);
        double norm = 0.0;
        for (double& v : dir) {
          v = rng.next_normal();
          norm += v * v;
        }
        norm = std::sqrt(norm);
        if (norm <= kEps) continue;
        const double r = radius * rng.uniform(0.8, 1.2);
        for (double& v : dir) v *= r / norm;
        bool far_enough = true;
        for (const auto& m : means) {
          double d2 = 0.0;
          for (int j = 0; j < dim; ++j) {
            const double t = dir[j] - m[j];
            d2 += t * t;
          }
          if (std::sqrt(d2) < min_dist) {
            far_enough = false;
            break;
          }
        }
        if (far_enough) {
          means.push_back(std::move(dir));
          placed = true;
        }
      }
      if (!placed) ok = false;
    }
    if (ok) break;
    radius *= 1.3;
  }

  LabeledData out;
  out.features = Matrix(static_cast<size_t>(num_classes) * per_class, dim);
  out.labels.resize(out.features.rows);
  size_t row = 0;
  for (int c = 0; c < num_classes; ++c) {
    for (int i = 0; i < per_class; ++i, ++row) {
      out.labels[row] = c;
      for (int j = 0; j < dim; ++j)
        out.features(row, j) = means[c][j] + cluster_std * rng.next_normal();
    }
  }
  return out;
}

// Splits classes into seen/novel via a seeded class shuffle, then marks a
// stratified per-class fraction of each seen class as labeled. All novel-class
// rows and the remaining seen-class rows stay unlabeled.
inline OpenWorldDataset apply_open_world_split(const Matrix& features,
                                               const std::vector<int>& labels,
                                               const SplitConfig& cfg) {
  if (features.rows != labels.size())
    throw std::invalid_argument("apply_open_world_split: rows and labels differ");
  if (cfg.seen_class_fraction <= 0.0 || cfg.seen_class_fraction >= 1.0)
    throw std::invalid_argument("apply_open_world_split: seen_class_fraction must be in (0,1)");
  if (cfg.labeled_fraction <= 0.0 || cfg.labeled_fraction >= 1.0)
    throw std::invalid_argument("apply_open_world_split: labeled_fraction must be in (0,1)");

  std::vector<int> classes;
  {
    std::set<int> s(labels.begin(), labels.end());
    classes.assign(s.begin(), s.end());
  }
  if (classes.size() < 2)
    throw std::invalid_argument("apply_open_world_split: need at least 2 classes");

  Rng rng(mix_seed(cfg.seed, 17));
  std::vector<int> order = classes;
  rng.shuffle(order);
  const size_t num_seen = static_cast<size_t>(
      std::ceil(cfg.seen_class_fraction * static_cast<double>(classes.size())));

  OpenWorldDataset ds;
  ds.features = features;
  ds.labels = labels;
  ds.labeled_mask.assign(labels.size(), 0);
  ds.seen_classes.assign(order.begin(), order.begin() + static_cast<long>(num_seen));
  ds.novel_classes.assign(order.begin() + static_cast<long>(num_seen), order.end());
  std::sort(ds.seen_classes.begin(), ds.seen_classes.end());
  std::sort(ds.novel_classes.begin(), ds.novel_classes.end());

  for (int c : ds.seen_classes) {
    std::vector<size_t> rows;
    for (size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == c) rows.push_back(i);
    if (rows.size() < 2) {
      throw std::invalid_argument("apply_open_world_split: seen class " + std::to_string(c) +
                                  " has fewer than 2 rows, cannot split");
    }
    size_t take = static_cast<size_t>(
        std::llround(cfg.labeled_fraction * static_cast<double>(rows.size())));
    take = std::clamp<size_t>(take, 1, rows.size() - 1);
    rng.shuffle(rows);
    for (size_t i = 0; i < take; ++i) ds.labeled_mask[rows[i]] = 1;
  }
  return ds;
}

// Long-tailed subsample: class k of K keeps round(n_k * ratio^(-k/(K-1)))
// rows (at least 1), classes ordered by ascending id. Kept rows preserve
// their original order and values.
inline LabeledData apply_exponential_imbalance(const Matrix& features,
                                               const std::vector<int>& labels,
                                               double imbalance_ratio, Rng& rng) {
  if (features.rows != labels.size())
    throw std::invalid_argument("apply_exponential_imbalance: rows and labels differ");
  if (imbalance_ratio < 1.0)
    throw std::invalid_argument("apply_exponential_imbalance: ratio must be >= 1");

  std::vector<int> classes;
  {
    std::set<int> s(labels.begin(), labels.end());
    classes.assign(s.begin(), s.end());
  }
  const size_t num_classes = classes.size();

  std::vector<char> keep(labels.size(), 0);
  for (size_t k = 0; k < num_classes; ++k) {
    std::vector<size_t> rows;
    for (size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == classes[k]) rows.push_back(i);
    double frac = 1.0;
    if (num_classes > 1)
      frac = std::pow(imbalance_ratio,
                      -static_cast<double>(k) / static_cast<double>(num_classes - 1));
    size_t take = static_cast<size_t>(std::llround(frac * static_cast<double>(rows.size())));
    take = std::clamp<size_t>(take, 1, rows.size());
    if (take < rows.size()) rng.shuffle(rows);
    for (size_t i = 0; i < take; ++i) keep[rows[i]] = 1;
  }

  LabeledData out;
  size_t kept = 0;
  for (char c : keep) kept += static_cast<size_t>(c);
  out.features = Matrix(kept, features.cols);
  out.labels.reserve(kept);
  size_t r = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (!keep[i]) continue;
    for (size_t j = 0; j < features.cols; ++j) out.features(r, j) = features(i, j);
    out.labels.push_back(labels[i]);
    ++r;
  }
  return out;
}

struct TabularData {
  Matrix features;
  std::vector<int> labels;
  std::vector<std::string> label_names;   // dense id -> original label string
  std::vector<std::string> feature_names; // empty when the file has no header
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  cells.push_back(cur);
  for (std::string& c : cells) {
    size_t b = c.find_first_not_of(" \t");
    size_t e = c.find_last_not_of(" \t");
    c = b == std::string::npos ? std::string() : c.substr(b, e - b + 1);
  }
  return cells;
}

inline bool parse_finite_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto res = std::from_chars(first, last, out);
  if (res.ec != std::errc{} || res.ptr != last) return false;
  return std::isfinite(out);
}

}  // namespace detail

// Plain comma-separated UTF-8, no quoting, optional single header row.
// label_column is a header name (requires has_header) or a zero-based index
// as a decimal string. Labels map to dense ids in first-appearance order.
inline TabularData load_tabular_csv(const std::string& path, const std::string& label_column,
                                    bool has_header) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("load_tabular_csv: cannot open " + path);

  std::string line;
  size_t line_no = 0;
  std::vector<std::string> header;
  size_t num_cols = 0;
  long label_idx = -1;

  if (has_header) {
    if (!std::getline(in, line))
      throw std::invalid_argument("load_tabular_csv: file is empty: " + path);
    ++line_no;
    header = detail::split_csv_line(line);
    num_cols = header.size();
  }

  // resolve label column: by header name, else by index
  {
    bool by_name = false;
    if (has_header) {
      for (size_t i = 0; i < header.size(); ++i)
        if (header[i] == label_column) {
          label_idx = static_cast<long>(i);
          by_name = true;
          break;
        }
    }
    if (!by_name) {
      long idx = -1;
      auto res = std::from_chars(label_column.data(),
                                 label_column.data() + label_column.size(), idx);
      if (res.ec == std::errc{} && res.ptr == label_column.data() + label_column.size() &&
          idx >= 0) {
        label_idx = idx;
      } else {
        throw std::invalid_argument("load_tabular_csv: label column '" + label_column +
                                    "' not found");
      }
    }
  }

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  std::vector<std::string> label_names;
  std::map<std::string, int> label_ids;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells = detail::split_csv_line(line);
    if (num_cols == 0) num_cols = cells.size();
    if (cells.size() != num_cols)
      throw std::invalid_argument("load_tabular_csv: line " + std::to_string(line_no) +
                                  " has " + std::to_string(cells.size()) + " cells, expected " +
                                  std::to_string(num_cols));
    if (label_idx >= static_cast<long>(num_cols))
      throw std::invalid_argument("load_tabular_csv: label column index " +
                                  std::to_string(label_idx) + " out of range");
    std::vector<double> feat;
    feat.reserve(num_cols - 1);
    for (size_t c = 0; c < cells.size(); ++c) {
      if (static_cast<long>(c) == label_idx) {
        auto [it, inserted] =
            label_ids.emplace(cells[c], static_cast<int>(label_names.size()));
        if (inserted) label_names.push_back(cells[c]);
        labels.push_back(it->second);
        continue;
      }
      double v = 0.0;
      if (!detail::parse_finite_double(cells[c], v))
        throw std::invalid_argument("load_tabular_csv: cannot parse '" + cells[c] +
                                    "' as a finite number at line " + std::to_string(line_no) +
                                    ", column " + std::to_string(c + 1));
      feat.push_back(v);
    }
    rows.push_back(std::move(feat));
  }
  if (rows.empty()) throw std::invalid_argument("load_tabular_csv: no data rows in " + path);

  TabularData out;
  out.features = Matrix(rows.size(), rows[0].size());
  for (size_t i = 0; i < rows.size(); ++i)
    for (size_t j = 0; j < rows[i].size(); ++j) out.features(i, j) = rows[i][j];
  out.labels = std::move(labels);
  out.label_names = std::move(label_names);
  if (has_header) {
    for (size_t i = 0; i < header.size(); ++i)
      if (static_cast<long>(i) != label_idx) out.feature_names.push_back(header[i]);
  }
  return out;
}

// Optional per-feature z-scoring; features are otherwise used raw.
inline void standardize_features(Matrix& features) {
  for (size_t j = 0; j < features.cols; ++j) {
    double mean = 0.0;
    for (size_t i = 0; i < features.rows; ++i) mean += features(i, j);
    mean /= static_cast<double>(features.rows);
    double var = 0.0;
    for (size_t i = 0; i < features.rows; ++i) {
      const double d = features(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(features.rows);
    const double sd = std::sqrt(var);
    const double scale = sd > kEps ? 1.0 / sd : 1.0;
    for (size_t i = 0; i < features.rows; ++i)
      features(i, j) = (features(i, j) - mean) * scale;
  }
}

}  // namespace orca
