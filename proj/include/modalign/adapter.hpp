#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "modalign/embedding.hpp"
#include "modalign/knowledge_base.hpp"

namespace modalign {

/// Affine map from a frozen backbone's embedding space into the shared,
/// text-anchored space: a = normalize(W v + b).
struct LinearAdapter {
  std::string modality;
  std::size_t dim_in = 0;
  std::size_t dim_out = 0;
  std::vector<double> weight;  // row-major [dim_out x dim_in]
  std::vector<double> bias;    // [dim_out]

  static LinearAdapter identity(std::size_t dim, std::string modality = {});
  /// Gaussian weights with stddev 1/sqrt(dim_in), zero bias.
  static LinearAdapter random(std::size_t dim_in, std::size_t dim_out, std::uint64_t seed,
                              std::string modality = {});

  // Throws NonFinite / InvalidArgument.
  void validate() const;

  friend bool operator==(const LinearAdapter&, const LinearAdapter&) = default;
};

enum class Optimizer { Sgd, Adam };

struct TrainConfig {
  double temperature = 0.07;
  double learning_rate = 1e-2;
  std::size_t batch_size = 32;
  std::size_t epochs = 20;
  std::uint64_t seed = 0;
  Optimizer optimizer = Optimizer::Adam;
  bool symmetric_loss = false;

  static constexpr double kAdamBeta1 = 0.9;
  static constexpr double kAdamBeta2 = 0.999;
  static constexpr double kAdamEpsilon = 1e-8;

  void validate() const;

  /// Key-value text file: `key = value` per line, `#` starts a comment.
  static TrainConfig load(const std::filesystem::path& path);
  static TrainConfig parse(std::string_view text);
};

struct TrainingPair {
  std::string sample_id;
  Embedding visual;  // frozen backbone output, before the adapter
  std::size_t text_row = 0;
};

/// Pairs every labelled visual row whose label is listed in `sample_ids` (all
/// rows when empty) with its paired knowledge-base description.
std::vector<TrainingPair> make_training_pairs(const KnowledgeBase& kb,
                                              const EmbeddingMatrix& visual,
                                              std::span<const std::string> sample_ids = {});

struct LossResult {
  double loss = 0.0;
  DenseMatrix gradient;  // d loss / d adapted rows, [B x d]
};

/// In-batch InfoNCE: mean_i -log softmax_j(adapted_i . texts_j / tau)[i].
/// With `symmetric`, the text-to-visual direction is averaged in.
LossResult info_nce_loss(const EmbeddingMatrix& adapted, const EmbeddingMatrix& texts,
                         double temperature, bool symmetric = false);

struct TrainResult {
  LinearAdapter adapter;
  std::vector<double> loss_history;  // mean loss per epoch
};

TrainResult train(std::span<const TrainingPair> pairs, const KnowledgeBase& kb,
                  const TrainConfig& config, const std::optional<LinearAdapter>& init = {});

/// normalize(W v + b) for every row.
EmbeddingMatrix apply(const LinearAdapter& adapter, const EmbeddingMatrix& visual);

struct GradientCheckReport {
  double max_rel_error = 0.0;
  bool pass = false;
  std::size_t parameters_checked = 0;
};

inline constexpr double kGradientCheckStep = 1e-5;
inline constexpr double kGradientCheckTolerance = 1e-3;
inline constexpr double kGradientCheckFloor = 1e-8;

/// Compares analytic d loss / d (W, b) against central differences.
GradientCheckReport gradient_check(const LinearAdapter& adapter, const EmbeddingMatrix& visual,
                                   const EmbeddingMatrix& texts, const TrainConfig& config);
GradientCheckReport gradient_check(const LinearAdapter& adapter,
                                   std::span<const TrainingPair> batch, const KnowledgeBase& kb,
                                   const TrainConfig& config);

/// Random adapter, visual batch and unit text batch drawn from `seed`.
GradientCheckReport gradient_check_random(std::size_t dim_in, std::size_t dim_out,
                                          std::size_t batch, std::uint64_t seed,
                                          const TrainConfig& config);

/// Adapter file: one JSON header line (modality, dim_in, dim_out), a UBEM blob
/// of weight rows, then the bias as a one-row UBEM blob.
void write_adapter(const std::filesystem::path& path, const LinearAdapter& adapter);
LinearAdapter read_adapter(const std::filesystem::path& path);

}  // namespace modalign
