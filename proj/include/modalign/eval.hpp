#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "modalign/centers.hpp"
#include "modalign/embedding.hpp"

namespace modalign {

struct Prediction {
  std::string sample_id;
  std::string predicted_category;
  double score = 0.0;
  std::map<std::string, double> per_category_scores;

  friend bool operator==(const Prediction&, const Prediction&) = default;
};

enum class ScoringMode { CenterMax, PromptMean };
std::string_view scoring_mode_name(ScoringMode m) noexcept;  // "center_max" | "prompt_mean"

/// Prompt-template embeddings per category (the mean-of-prompts baseline).
using PromptSets = std::map<std::string, EmbeddingMatrix>;

/// Groups rows by label (category name).
PromptSets prompt_sets_from_matrix(const EmbeddingMatrix& m);
/// Uses each center's members as that category's prompt set.
PromptSets prompt_sets_from_centers(const CenterSet& centers);

/// Per category: max cosine over the center's members. Argmax ties go to the
/// lexicographically smallest category.
Prediction score_center_max(std::span<const double> query, const CenterSet& centers);

/// Per category: cosine to the normalized mean of its prompt embeddings.
Prediction score_prompt_mean(std::span<const double> query, const PromptSets& prompt_sets);

struct ClassAccuracy {
  std::size_t correct = 0;
  std::size_t total = 0;
  std::map<std::string, std::size_t> predicted;  // confusion row
};

struct EvalReport {
  ScoringMode mode = ScoringMode::CenterMax;
  std::size_t sample_count = 0;
  std::size_t correct = 0;
  double top1_accuracy = 0.0;
  std::map<std::string, ClassAccuracy> per_class;
};

EvalReport evaluate_classification(const EmbeddingMatrix& queries,
                                   std::span<const std::string> labels,
                                   const CenterSet& centers);
EvalReport evaluate_classification(const EmbeddingMatrix& queries,
                                   std::span<const std::string> labels,
                                   const PromptSets& prompt_sets);

enum class RetrievalDirection { AToB, BToA };
std::string_view retrieval_direction_name(RetrievalDirection d) noexcept;

struct RetrievalReport {
  RetrievalDirection direction = RetrievalDirection::AToB;
  std::size_t query_count = 0;
  std::size_t gallery_count = 0;
  std::map<std::size_t, double> recall_at;
};

/// query id -> relevant gallery ids
using Relevance = std::map<std::string, std::set<std::string>>;

/// Class-level relevance: every gallery item sharing the query's category.
Relevance class_level_relevance(std::span<const std::string> query_ids,
                                std::span<const std::string> query_categories,
                                std::span<const std::string> gallery_ids,
                                std::span<const std::string> gallery_categories);

inline constexpr std::size_t kDefaultRecallKs[] = {1, 5, 10, 20};

/// Queries and gallery carry their ids as row labels. R@k is the fraction of
/// queries whose top-k gallery (cosine, ties by ascending index) hits a
/// relevant id.
RetrievalReport evaluate_retrieval(const EmbeddingMatrix& queries, const EmbeddingMatrix& gallery,
                                   const Relevance& relevance, std::span<const std::size_t> ks,
                                   RetrievalDirection direction = RetrievalDirection::AToB);

// Report JSON. Key order is fixed; metrics are rendered by dump_report with six
// decimals.
nlohmann::ordered_json to_json(const EvalReport& report);
nlohmann::ordered_json to_json(const RetrievalReport& report);

/// Serializes with two-space indent and every floating-point value printed as
/// fixed-point with six decimals.
std::string dump_report(const nlohmann::ordered_json& report);

}  // namespace modalign
