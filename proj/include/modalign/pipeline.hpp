#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "modalign/adapter.hpp"
#include "modalign/centers.hpp"
#include "modalign/datasets.hpp"
#include "modalign/eval.hpp"
#include "modalign/knowledge_base.hpp"

namespace modalign {

inline constexpr const char* kVersion = "0.1.0";

/// Desk-scale stand-in for a multi-modal benchmark. Each class has a center
/// and a few "aspects" (sub-directions); samples and descriptions pick an
/// aspect. Visual samples of modality m are shifted by a fixed offset vector
/// of norm `modality_offset`; text embeddings carry no offset. Noise vectors
/// have expected norm `noise_sigma`.
struct SyntheticSpec {
  std::size_t categories = 20;
  std::size_t modalities = 2;
  std::size_t samples_per_class_per_modality = 20;  // per split (train / test)
  std::size_t dim = 64;
  double class_separation = 1.0;
  double modality_offset = 3.0;
  double noise_sigma = 1.0;
  std::size_t descriptions_per_class = 200;
  std::uint64_t seed = 0;
  std::size_t aspects_per_class = 3;
  double aspect_spread = 0.8;
  std::size_t templates_per_class = 7;

  void validate() const;
};

struct ModalitySplit {
  EmbeddingMatrix visual;           // labels = sample ids
  std::vector<std::string> categories;
};

struct SyntheticModality {
  std::string name;
  ModalitySplit train;
  ModalitySplit test;
};

struct SyntheticBundle {
  std::vector<KnowledgeRecord> records;
  EmbeddingMatrix text_embeddings;  // parallel to records
  EmbeddingMatrix prompts;          // one basic-prompt embedding per category
  EmbeddingMatrix templates;        // several template embeddings per category
  std::vector<SyntheticModality> modalities;
};

std::string modality_name(std::size_t index);
SyntheticBundle generate_synthetic(const SyntheticSpec& spec);

/// Writes the bundle's files plus a `pipeline.json` config referencing them.
void write_bundle(const SyntheticBundle& bundle, const std::filesystem::path& dir,
                  const TrainConfig& train = {}, std::size_t k = kDefaultCenterSize);

/// Mean intra-class cosine split by same / different modality. The gap is
/// same-modality minus cross-modality: positive when embeddings group by
/// modality rather than by class. This is this tool's quantification of
/// modality clustering, not a published metric.
struct AlignmentDiagnostics {
  double intra_class_cross_modal_cosine = 0.0;
  double intra_class_same_modal_cosine = 0.0;
  double modality_gap = 0.0;
  std::size_t cross_modal_pairs = 0;
  std::size_t same_modal_pairs = 0;
};

struct LabeledEmbeddings {
  const EmbeddingMatrix* embeddings = nullptr;
  const std::vector<std::string>* categories = nullptr;
};

AlignmentDiagnostics diagnostics(const std::vector<LabeledEmbeddings>& modalities);
nlohmann::ordered_json to_json(const AlignmentDiagnostics& d);

/// Top-two principal-component coordinates of the stacked rows.
DenseMatrix pca_2d(const std::vector<const EmbeddingMatrix*>& blocks);

struct ModalityInput {
  std::string name;
  std::filesystem::path train_visual;
  std::filesystem::path pairs;
  std::filesystem::path test_visual;
  std::filesystem::path test_labels;
};

struct PipelineConfig {
  std::filesystem::path kb_records;
  std::filesystem::path kb_embeddings;
  std::filesystem::path prompts;
  std::optional<std::filesystem::path> templates;
  std::vector<ModalityInput> modalities;
  std::size_t k = kDefaultCenterSize;
  std::optional<Source> source_filter;
  TrainConfig train;
  std::vector<std::size_t> recall_ks{1, 5, 10, 20};
  bool dump_projection = false;

  /// JSON config; relative paths resolve against the file's directory.
  static PipelineConfig load(const std::filesystem::path& path);
  nlohmann::ordered_json to_json() const;
  /// Fails with a stage-annotated error if an input is missing or malformed.
  void validate() const;
};

struct PipelineResult {
  AlignmentDiagnostics diagnostics_before;
  AlignmentDiagnostics diagnostics_after;
  std::map<std::string, std::vector<double>> loss_history;
  std::map<std::string, double> accuracy;  // "<modality>/<mode>/<pre|post>"
  std::optional<RetrievalReport> retrieval_before;  // modality 0 -> modality 1
  std::optional<RetrievalReport> retrieval_after;
  std::vector<std::filesystem::path> outputs;  // relative to the run directory
};

PipelineResult run_pipeline(const PipelineConfig& config, const std::filesystem::path& out_dir);

}  // namespace modalign
