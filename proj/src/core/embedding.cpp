#include "modalign/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "modalign/error.hpp"

namespace modalign {

namespace {

void require_finite(std::span<const double> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      fail(ErrorCode::NonFinite, std::string(what) + ": non-finite component at position " +
                                     std::to_string(i));
    }
  }
}

void require_same_dim(std::size_t a, std::size_t b) {
  if (a != b) {
    fail(ErrorCode::DimensionMismatch,
         "dimension mismatch: " + std::to_string(a) + " vs " + std::to_string(b));
  }
}

// Strict total order used by every ranking in the library.
bool ranks_before(const ScoredIndex& a, const ScoredIndex& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.index < b.index;
}

}  // namespace

std::string_view error_code_name(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::EmptyKeys: return "EmptyKeys";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::UnknownSample: return "UnknownSample";
    case ErrorCode::MissingCategory: return "MissingCategory";
    case ErrorCode::NonPositiveTemperature: return "NonPositiveTemperature";
    case ErrorCode::DegenerateBatch: return "DegenerateBatch";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::MissingRelevance: return "MissingRelevance";
    case ErrorCode::EmptyCenterSet: return "EmptyCenterSet";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Format: return "Format";
    case ErrorCode::Numerical: return "Numerical";
  }
  return "Unknown";
}

Embedding::Embedding(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) fail(ErrorCode::InvalidArgument, "embedding must have dim >= 1");
  require_finite(values_, "embedding");
}

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t dim)
    : rows_(rows), dim_(dim), data_(rows * dim, 0.0) {}

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<double> data,
                                 std::vector<std::string> labels)
    : rows_(rows), dim_(dim), data_(std::move(data)) {
  if (data_.size() != rows_ * dim_) {
    fail(ErrorCode::CountMismatch, "matrix data length " + std::to_string(data_.size()) +
                                       " != rows x dim = " + std::to_string(rows_ * dim_));
  }
  require_finite(data_, "embedding matrix");
  set_labels(std::move(labels));
}

EmbeddingMatrix EmbeddingMatrix::from_rows(const std::vector<Embedding>& rows,
                                           std::vector<std::string> labels) {
  EmbeddingMatrix m;
  for (const auto& r : rows) m.append_row(r.values());
  m.set_labels(std::move(labels));
  return m;
}

std::span<const double> EmbeddingMatrix::row(std::size_t i) const {
  if (i >= rows_) fail(ErrorCode::InvalidArgument, "row index out of range");
  return std::span<const double>(data_).subspan(i * dim_, dim_);
}

std::span<double> EmbeddingMatrix::row(std::size_t i) {
  if (i >= rows_) fail(ErrorCode::InvalidArgument, "row index out of range");
  return std::span<double>(data_).subspan(i * dim_, dim_);
}

Embedding EmbeddingMatrix::embedding(std::size_t i) const {
  auto r = row(i);
  return Embedding(std::vector<double>(r.begin(), r.end()));
}

void EmbeddingMatrix::set_labels(std::vector<std::string> labels) {
  if (!labels.empty() && labels.size() != rows_) {
    fail(ErrorCode::CountMismatch, "label count " + std::to_string(labels.size()) +
                                       " != rows " + std::to_string(rows_));
  }
  labels_ = std::move(labels);
}

void EmbeddingMatrix::append_row(std::span<const double> values, std::string label) {
  if (rows_ == 0 && dim_ == 0) dim_ = values.size();
  require_same_dim(dim_, values.size());
  require_finite(values, "embedding row");
  if (rows_ > 0 && has_labels() != !label.empty()) {
    fail(ErrorCode::InvalidArgument, "appended row must match the matrix's labelling");
  }
  data_.insert(data_.end(), values.begin(), values.end());
  if (!label.empty()) labels_.push_back(std::move(label));
  ++rows_;
}

EmbeddingMatrix EmbeddingMatrix::select_rows(std::span<const std::size_t> indices) const {
  EmbeddingMatrix out(indices.size(), dim_);
  std::vector<std::string> labels;
  for (std::size_t r = 0; r < indices.size(); ++r) {
    auto src = row(indices[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
    if (has_labels()) labels.push_back(labels_[indices[r]]);
  }
  out.labels_ = std::move(labels);
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a.size(), b.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

void normalize_in_place(std::span<double> v) {
  const double norm = l2_norm(v);
  if (!(norm >= kZeroNormThreshold)) {
    fail(ErrorCode::ZeroVector, "cannot normalize vector with L2 norm " + std::to_string(norm));
  }
  for (double& x : v) x /= norm;
}

Embedding normalize(const Embedding& e) {
  std::vector<double> v(e.values().begin(), e.values().end());
  normalize_in_place(v);
  return Embedding(std::move(v));
}

EmbeddingMatrix normalize_rows(EmbeddingMatrix m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    try {
      normalize_in_place(m.row(r));
    } catch (const Error& e) {
      fail(e.code(), "row " + std::to_string(r) + ": " + e.what());
    }
  }
  return m;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a.size(), b.size());
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (!(na >= kZeroNormThreshold) || !(nb >= kZeroNormThreshold)) {
    fail(ErrorCode::ZeroVector, "cosine of a zero vector");
  }
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

SimilarityMatrix similarity_matrix(const EmbeddingMatrix& queries, const EmbeddingMatrix& keys,
                                   unsigned threads) {
  require_same_dim(queries.dim(), keys.dim());
  SimilarityMatrix out{queries.rows(), keys.rows(),
                       std::vector<double>(queries.rows() * keys.rows())};

  std::vector<double> key_norms(keys.rows());
  for (std::size_t j = 0; j < keys.rows(); ++j) {
    key_norms[j] = l2_norm(keys.row(j));
    if (!(key_norms[j] >= kZeroNormThreshold)) {
      fail(ErrorCode::ZeroVector, "key row " + std::to_string(j) + " is a zero vector");
    }
  }

  auto fill_rows = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      auto q = queries.row(i);
      const double qn = l2_norm(q);
      if (!(qn >= kZeroNormThreshold)) {
        fail(ErrorCode::ZeroVector, "query row " + std::to_string(i) + " is a zero vector");
      }
      for (std::size_t j = 0; j < keys.rows(); ++j) {
        out.values[i * out.cols + j] =
            std::clamp(dot(q, keys.row(j)) / (qn * key_norms[j]), -1.0, 1.0);
      }
    }
  };

  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(threads, queries.rows()));
  if (workers == 1) {
    fill_rows(0, queries.rows());
    return out;
  }

  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (queries.rows() + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t begin = w * chunk;
      const std::size_t end = std::min(queries.rows(), begin + chunk);
      pool.emplace_back([&, w, begin, end] {
        try {
          fill_rows(begin, end);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<ScoredIndex> top_k_scores(std::span<const double> scores, std::size_t k) {
  if (scores.empty()) fail(ErrorCode::EmptyKeys, "top-k over an empty key set");
  if (k == 0) fail(ErrorCode::InvalidArgument, "k must be >= 1");
  std::vector<ScoredIndex> ranked(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) ranked[i] = {i, scores[i]};
  const std::size_t n = std::min(k, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n), ranked.end(),
                    ranks_before);
  ranked.resize(n);
  return ranked;
}

std::vector<ScoredIndex> top_k(std::span<const double> query, const EmbeddingMatrix& keys,
                               std::size_t k) {
  if (keys.rows() == 0) fail(ErrorCode::EmptyKeys, "top-k over an empty key set");
  require_same_dim(query.size(), keys.dim());
  std::vector<double> scores(keys.rows());
  for (std::size_t j = 0; j < keys.rows(); ++j) scores[j] = cosine(query, keys.row(j));
  return top_k_scores(scores, k);
}

}  // namespace modalign
