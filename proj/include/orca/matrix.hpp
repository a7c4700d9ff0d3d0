#pragma once

// Dense row-major matrix plus the small set of numerically careful kernels the
// rest of the library is built on: stable softmax, guarded L2 normalization,
// cosine similarity and KL divergence.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace orca {

inline constexpr double kEps = 1e-12;

struct Matrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;  // row-major, rows*cols entries

  Matrix() = default;
  Matrix(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(size_t r, size_t c) { return data[r * cols + c]; }
  double operator()(size_t r, size_t c) const { return data[r * cols + c]; }
  double* row_ptr(size_t r) { return data.data() + r * cols; }
  const double* row_ptr(size_t r) const { return data.data() + r * cols; }

  std::vector<double> row(size_t r) const {
    return std::vector<double>(row_ptr(r), row_ptr(r) + cols);
  }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  bool operator==(const Matrix& o) const {
    return rows == o.rows && cols == o.cols && data == o.data;
  }
};

// a (m x k) * b (k x n) -> m x n
inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw std::invalid_argument("matmul: inner dimensions differ");
  Matrix out(a.rows, b.cols);
  for (size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.row_ptr(i);
    double* orow = out.row_ptr(i);
    for (size_t k = 0; k < a.cols; ++k) {
      const double aik = arow[k];
      const double* brow = b.row_ptr(k);
      for (size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

// a (m x k) * b^T (b is n x k) -> m x n
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols != b.cols) throw std::invalid_argument("matmul_nt: inner dimensions differ");
  Matrix out(a.rows, b.rows);
  for (size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.row_ptr(i);
    for (size_t j = 0; j < b.rows; ++j) {
      const double* brow = b.row_ptr(j);
      double acc = 0.0;
      for (size_t k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
      out(i, j) = acc;
    }
  }
  return out;
}

// a^T (a is k x m) * b (k x n) -> m x n
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows != b.rows) throw std::invalid_argument("matmul_tn: inner dimensions differ");
  Matrix out(a.cols, b.cols);
  for (size_t k = 0; k < a.rows; ++k) {
    const double* arow = a.row_ptr(k);
    const double* brow = b.row_ptr(k);
    for (size_t i = 0; i < a.cols; ++i) {
      const double aki = arow[i];
      double* orow = out.row_ptr(i);
      for (size_t j = 0; j < b.cols; ++j) orow[j] += aki * brow[j];
    }
  }
  return out;
}

inline std::vector<double> column_sums(const Matrix& a) {
  std::vector<double> s(a.cols, 0.0);
  for (size_t i = 0; i < a.rows; ++i) {
    const double* arow = a.row_ptr(i);
    for (size_t j = 0; j < a.cols; ++j) s[j] += arow[j];
  }
  return s;
}

inline double dot(const double* a, const double* b, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

inline double l2_norm(const double* v, size_t n) { return std::sqrt(dot(v, v, n)); }

// Max-subtracted softmax; scaled logits can otherwise overflow exp.
inline std::vector<double> softmax_stable(const std::vector<double>& logits) {
  if (logits.empty()) throw std::invalid_argument("softmax_stable: empty input");
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

// Row-wise softmax of scale * logits.
inline Matrix softmax_rows(const Matrix& logits, double scale = 1.0) {
  if (logits.cols == 0) throw std::invalid_argument("softmax_rows: empty rows");
  Matrix out(logits.rows, logits.cols);
  for (size_t i = 0; i < logits.rows; ++i) {
    const double* in = logits.row_ptr(i);
    double* o = out.row_ptr(i);
    double m = in[0] * scale;
    for (size_t j = 1; j < logits.cols; ++j) m = std::max(m, in[j] * scale);
    double sum = 0.0;
    for (size_t j = 0; j < logits.cols; ++j) {
      o[j] = std::exp(in[j] * scale - m);
      sum += o[j];
    }
    for (size_t j = 0; j < logits.cols; ++j) o[j] /= sum;
  }
  return out;
}

// Unit vector when ||v|| > eps; v/eps in the degenerate case.
inline std::vector<double> l2_normalize(const std::vector<double>& v, double eps = kEps) {
  if (eps <= 0.0) throw std::invalid_argument("l2_normalize: eps must be > 0");
  const double n = l2_norm(v.data(), v.size());
  std::vector<double> out(v.size());
  const double scale = 1.0 / (n > eps ? n : eps);
  for (size_t i = 0; i < v.size(); ++i) out[i] = v[i] * scale;
  return out;
}

// Normalizes each row in place; returns the original row norms.
inline std::vector<double> l2_normalize_rows(Matrix& m, double eps = kEps) {
  std::vector<double> norms(m.rows);
  for (size_t i = 0; i < m.rows; ++i) {
    double* r = m.row_ptr(i);
    const double n = l2_norm(r, m.cols);
    norms[i] = n;
    const double scale = 1.0 / (n > eps ? n : eps);
    for (size_t j = 0; j < m.cols; ++j) r[j] *= scale;
  }
  return norms;
}

// Pairwise cosine similarity of the rows of a (n x d) and b (k x d) -> n x k.
inline Matrix cosine_similarity_matrix(const Matrix& a, const Matrix& b, double eps = kEps) {
  if (a.cols != b.cols)
    throw std::invalid_argument("cosine_similarity_matrix: feature dimensions differ");
  Matrix an = a, bn = b;
  l2_normalize_rows(an, eps);
  l2_normalize_rows(bn, eps);
  Matrix sim = matmul_nt(an, bn);
  for (double& v : sim.data) v = std::clamp(v, -1.0, 1.0);
  return sim;
}

// KL(p || q) with log arguments clamped below by eps; 0*log(0) contributes 0.
inline double kl_divergence(const std::vector<double>& p, const std::vector<double>& q,
                            double eps = kEps) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: length mismatch");
  if (eps <= 0.0) throw std::invalid_argument("kl_divergence: eps must be > 0");
  double acc = 0.0;
  for (size_t i = 0; i < p.size(); ++i)
    acc += p[i] * (std::log(std::max(p[i], eps)) - std::log(std::max(q[i], eps)));
  return acc;
}

}  // namespace orca
