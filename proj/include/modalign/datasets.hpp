#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "modalign/eval.hpp"

namespace modalign {

/// One line of a labels file: {"id": ..., "category": ...}
struct LabelEntry {
  std::string id;
  std::string category;
};

std::vector<LabelEntry> read_labels_jsonl(const std::filesystem::path& path);
std::string labels_to_jsonl(const std::vector<LabelEntry>& labels);

/// Categories for each labelled row of `m`, looked up by the row's id.
std::vector<std::string> categories_for_rows(const EmbeddingMatrix& m,
                                             const std::vector<LabelEntry>& labels);

/// Pairs file: one {"sample_id": ...} per line.
std::vector<std::string> read_pairs_jsonl(const std::filesystem::path& path);
std::string pairs_to_jsonl(const std::vector<std::string>& sample_ids);

/// Relevance file: one {"query": id, "relevant": [gallery ids]} per line.
Relevance read_relevance_jsonl(const std::filesystem::path& path);
std::string relevance_to_jsonl(const Relevance& relevance);

}  // namespace modalign
