#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "modalign/embedding.hpp"

namespace modalign {

/// Which half of the knowledge base a description belongs to: per-category
/// descriptions from a language model, or per-sample descriptions from a
/// multi-modal language model.
enum class Source { LlmCategory, MllmData };

std::string_view source_name(Source s) noexcept;  // "llm_category" | "mllm_data"
std::optional<Source> parse_source(std::string_view name) noexcept;

struct KnowledgeRecord {
  std::string id;
  std::string category;
  std::string description;
  Source source = Source::LlmCategory;
  std::string generator;  // free-form tag, may be empty

  friend bool operator==(const KnowledgeRecord&, const KnowledgeRecord&) = default;
};

/// Prompt templates. The basic template is the one used to localize centers.
struct PromptSet {
  static constexpr std::string_view kPlaceholder = "[Category]";

  std::vector<std::string> templates;
  std::string basic_template = "A photo of a [Category]";

  // Throws InvalidArgument unless the basic template has exactly one placeholder.
  void validate() const;
  std::string fill(std::string_view category) const;
};

struct KnowledgeBaseStats {
  std::size_t records = 0;
  std::size_t dim = 0;
  std::map<Source, std::size_t> per_source;
  std::map<std::string, std::map<Source, std::size_t>> per_category;
};

/// Immutable store of description records and their unit-norm text embeddings,
/// indexed by category and by data-sample id.
class KnowledgeBase {
 public:
  /// Reads JSONL records and a parallel UBEM file (same row order).
  static KnowledgeBase build(const std::filesystem::path& records_file,
                             const std::filesystem::path& embeddings_file);

  /// Validates, normalizes and indexes in-memory parts.
  static KnowledgeBase from_parts(std::vector<KnowledgeRecord> records,
                                  EmbeddingMatrix embeddings);

  /// Writes records.jsonl + embeddings.ubem into `dir`.
  void save(const std::filesystem::path& dir) const;
  static KnowledgeBase load(const std::filesystem::path& dir);

  std::size_t size() const noexcept { return records_.size(); }
  std::size_t dim() const noexcept { return embeddings_.dim(); }
  const std::vector<KnowledgeRecord>& records() const noexcept { return records_; }
  const EmbeddingMatrix& embeddings() const noexcept { return embeddings_; }

  /// Rows of `category` in ascending order; empty when unknown or filtered out.
  std::vector<std::size_t> category_rows(const std::string& category,
                                         std::optional<Source> source_filter = {}) const;

  /// Unit-norm text embedding of the description paired with a data sample.
  Embedding paired_text_embedding(const std::string& sample_id) const;
  std::optional<std::size_t> pair_row(const std::string& sample_id) const;

  std::vector<std::string> categories() const;
  KnowledgeBaseStats stats() const;

  static constexpr const char* kRecordsFile = "records.jsonl";
  static constexpr const char* kEmbeddingsFile = "embeddings.ubem";

 private:
  KnowledgeBase() = default;

  std::vector<KnowledgeRecord> records_;
  EmbeddingMatrix embeddings_;
  std::map<std::string, std::vector<std::size_t>> category_index_;
  std::unordered_map<std::string, std::size_t> pair_index_;
};

std::vector<KnowledgeRecord> read_records_jsonl(const std::filesystem::path& path);
std::string records_to_jsonl(const std::vector<KnowledgeRecord>& records);

}  // namespace modalign
