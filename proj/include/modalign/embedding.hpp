#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace modalign {

/// Fixed-dimension real vector. Components are always finite.
class Embedding {
 public:
  Embedding() = default;
  explicit Embedding(std::vector<double> values);

  std::size_t dim() const noexcept { return values_.size(); }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  friend bool operator==(const Embedding&, const Embedding&) = default;

 private:
  std::vector<double> values_;
};

/// Row-major batch of embeddings sharing one dimension, with optional
/// per-row labels (sample ids, category names, ...).
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t rows, std::size_t dim);
  EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<double> data,
                  std::vector<std::string> labels = {});

  static EmbeddingMatrix from_rows(const std::vector<Embedding>& rows,
                                   std::vector<std::string> labels = {});

  std::size_t rows() const noexcept { return rows_; }
  std::size_t dim() const noexcept { return dim_; }
  bool empty() const noexcept { return rows_ == 0; }

  std::span<const double> row(std::size_t i) const;
  std::span<double> row(std::size_t i);
  Embedding embedding(std::size_t i) const;

  std::span<const double> data() const noexcept { return data_; }
  std::span<double> data() noexcept { return data_; }

  bool has_labels() const noexcept { return !labels_.empty(); }
  const std::vector<std::string>& labels() const noexcept { return labels_; }
  const std::string& label(std::size_t i) const { return labels_.at(i); }
  void set_labels(std::vector<std::string> labels);
  void clear_labels() noexcept { labels_.clear(); }

  /// Appends one row. If the matrix is empty its dimension is taken from the row.
  void append_row(std::span<const double> values, std::string label = {});

  /// Copy of the selected rows (labels follow their rows).
  EmbeddingMatrix select_rows(std::span<const std::size_t> indices) const;

  friend bool operator==(const EmbeddingMatrix&, const EmbeddingMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> data_;
  std::vector<std::string> labels_;
};

struct ScoredIndex {
  std::size_t index = 0;
  double score = 0.0;

  friend bool operator==(const ScoredIndex&, const ScoredIndex&) = default;
};

/// Plain dense [rows x cols] row-major block (similarities, gradients).
struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
  double& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
};
using SimilarityMatrix = DenseMatrix;

inline constexpr double kZeroNormThreshold = 1e-12;

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> v);

// Throws ZeroVector when the L2 norm is below kZeroNormThreshold.
void normalize_in_place(std::span<double> v);
Embedding normalize(const Embedding& e);
EmbeddingMatrix normalize_rows(EmbeddingMatrix m);

/// dot(a,b)/(|a||b|), clamped to [-1, 1].
double cosine(std::span<const double> a, std::span<const double> b);
inline double cosine(const Embedding& a, const Embedding& b) {
  return cosine(a.values(), b.values());
}

/// Cosine of every (query, key) pair. Rows may be split across `threads`
/// workers; each entry is computed with the same summation order regardless.
SimilarityMatrix similarity_matrix(const EmbeddingMatrix& queries,
                                   const EmbeddingMatrix& keys,
                                   unsigned threads = 1);

/// Exact top-k by cosine: descending score, ties by ascending row index.
std::vector<ScoredIndex> top_k(std::span<const double> query,
                               const EmbeddingMatrix& keys, std::size_t k);

/// Same ordering rule applied to precomputed scores.
std::vector<ScoredIndex> top_k_scores(std::span<const double> scores,
                                      std::size_t k);

}  // namespace modalign
