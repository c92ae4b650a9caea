#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "modalign/embedding.hpp"
#include "modalign/knowledge_base.hpp"

namespace modalign {

inline constexpr std::size_t kDefaultCenterSize = 50;

/// The k knowledge-base descriptions of one category that sit closest to the
/// category's basic-prompt embedding, best first.
struct EmbeddingCenter {
  std::string category;
  std::vector<std::size_t> member_rows;
  std::vector<double> member_scores;  // cosine to the prompt embedding
  EmbeddingMatrix member_embeddings;
  std::size_t k_requested = kDefaultCenterSize;

  std::size_t size() const noexcept { return member_rows.size(); }
  friend bool operator==(const EmbeddingCenter&, const EmbeddingCenter&) = default;
};

using PromptEmbeddings = std::map<std::string, Embedding>;

struct CenterSet {
  std::map<std::string, EmbeddingCenter> centers;
  PromptEmbeddings prompt_embeddings;
  std::map<std::string, std::string> prompt_texts;
  std::size_t k = kDefaultCenterSize;
  std::vector<std::string> warnings;

  std::size_t dim() const;
  friend bool operator==(const CenterSet&, const CenterSet&) = default;
};

/// Prompt embeddings keyed by the matrix's row labels (category names).
PromptEmbeddings prompt_embeddings_from_matrix(const EmbeddingMatrix& m);

CenterSet localize(const KnowledgeBase& kb, const PromptEmbeddings& prompts,
                   std::size_t k = kDefaultCenterSize,
                   std::optional<Source> source_filter = {},
                   const PromptSet& prompt_set = {});

/// One center set per k. Members for a smaller k are a prefix of those for a
/// larger k.
std::map<std::size_t, CenterSet> sweep_k(const KnowledgeBase& kb,
                                         const PromptEmbeddings& prompts,
                                         std::span<const std::size_t> k_values,
                                         std::optional<Source> source_filter = {},
                                         const PromptSet& prompt_set = {});

/// Center-set file: one line of JSON (k, categories, member rows and scores),
/// then a UBEM blob of member embeddings (labels = category) and a UBEM blob of
/// prompt embeddings (labels = category).
void write_center_set(const std::filesystem::path& path, const CenterSet& centers);
CenterSet read_center_set(const std::filesystem::path& path);

}  // namespace modalign
