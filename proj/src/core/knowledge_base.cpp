#include "modalign/knowledge_base.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "json.hpp"
#include "modalign/error.hpp"
#include "modalign/io.hpp"

namespace modalign {

namespace {

// Stored rows are rounded to float32, the storage precision of UBEM, so a
// saved KB reloads to exactly the same values. Rows already unit within the
// tolerance are only rounded, which makes ingest idempotent.
constexpr double kIngestUnitTolerance = 1e-6;

void normalize_for_storage(std::span<double> row, std::size_t r) {
  const double norm = l2_norm(row);
  if (!(norm >= kZeroNormThreshold)) {
    fail(ErrorCode::ZeroVector, "embedding row " + std::to_string(r) + " is a zero vector");
  }
  const double scale = std::abs(norm - 1.0) <= kIngestUnitTolerance ? 1.0 : norm;
  for (double& x : row) x = static_cast<double>(static_cast<float>(x / scale));
}

std::string required_string(const nlohmann::json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    fail(ErrorCode::MalformedRecord, "line " + std::to_string(line) + ": missing string field '" +
                                         key + "'");
  }
  return it->get<std::string>();
}

}  // namespace

std::string_view source_name(Source s) noexcept {
  return s == Source::LlmCategory ? "llm_category" : "mllm_data";
}

std::optional<Source> parse_source(std::string_view name) noexcept {
  if (name == "llm_category") return Source::LlmCategory;
  if (name == "mllm_data") return Source::MllmData;
  return std::nullopt;
}

void PromptSet::validate() const {
  std::size_t count = 0;
  for (auto pos = basic_template.find(kPlaceholder); pos != std::string::npos;
       pos = basic_template.find(kPlaceholder, pos + kPlaceholder.size())) {
    ++count;
  }
  if (count != 1) {
    fail(ErrorCode::InvalidArgument,
         "basic prompt template must contain exactly one [Category] placeholder");
  }
}

std::string PromptSet::fill(std::string_view category) const {
  validate();
  std::string out = basic_template;
  out.replace(out.find(kPlaceholder), kPlaceholder.size(), category);
  return out;
}

std::vector<KnowledgeRecord> read_records_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::vector<KnowledgeRecord> records;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      fail(ErrorCode::MalformedRecord, "line " + std::to_string(line) + ": " + e.what());
    }
    if (!obj.is_object()) {
      fail(ErrorCode::MalformedRecord, "line " + std::to_string(line) + ": not a JSON object");
    }
    KnowledgeRecord rec;
    rec.id = required_string(obj, "id", line);
    rec.category = required_string(obj, "category", line);
    rec.description = required_string(obj, "description", line);
    const auto source = parse_source(required_string(obj, "source", line));
    if (!source) {
      fail(ErrorCode::MalformedRecord,
           "line " + std::to_string(line) + ": source must be llm_category or mllm_data");
    }
    rec.source = *source;
    if (auto g = obj.find("generator"); g != obj.end()) {
      if (!g->is_string()) {
        fail(ErrorCode::MalformedRecord, "line " + std::to_string(line) + ": generator not a string");
      }
      rec.generator = g->get<std::string>();
    }
    if (rec.id.empty() || rec.category.empty()) {
      fail(ErrorCode::MalformedRecord,
           "line " + std::to_string(line) + ": id and category must be non-empty");
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::string records_to_jsonl(const std::vector<KnowledgeRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::ordered_json obj;
    obj["id"] = r.id;
    obj["category"] = r.category;
    obj["description"] = r.description;
    obj["source"] = source_name(r.source);
    if (!r.generator.empty()) obj["generator"] = r.generator;
    out += obj.dump();
    out += '\n';
  }
  return out;
}

KnowledgeBase KnowledgeBase::build(const std::filesystem::path& records_file,
                                   const std::filesystem::path& embeddings_file) {
  auto records = read_records_jsonl(records_file);
  auto embeddings = read_ubem_file(embeddings_file);
  return from_parts(std::move(records), std::move(embeddings));
}

KnowledgeBase KnowledgeBase::from_parts(std::vector<KnowledgeRecord> records,
                                        EmbeddingMatrix embeddings) {
  if (records.size() != embeddings.rows()) {
    fail(ErrorCode::CountMismatch, std::to_string(records.size()) + " records but " +
                                       std::to_string(embeddings.rows()) + " embedding rows");
  }
  if (records.empty()) fail(ErrorCode::CountMismatch, "knowledge base has no records");

  KnowledgeBase kb;
  std::set<std::string> seen;
  std::vector<std::string> ids;
  ids.reserve(records.size());
  for (std::size_t r = 0; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.category.empty()) {
      fail(ErrorCode::MalformedRecord, "record " + std::to_string(r + 1) + ": empty category");
    }
    if (!seen.insert(rec.id).second) fail(ErrorCode::DuplicateId, "duplicate id '" + rec.id + "'");
    normalize_for_storage(embeddings.row(r), r);
    kb.category_index_[rec.category].push_back(r);
    if (rec.source == Source::MllmData) kb.pair_index_.emplace(rec.id, r);
    ids.push_back(rec.id);
  }
  embeddings.set_labels(std::move(ids));
  kb.records_ = std::move(records);
  kb.embeddings_ = std::move(embeddings);
  return kb;
}

void KnowledgeBase::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / kRecordsFile, records_to_jsonl(records_));
  write_ubem_file(dir / kEmbeddingsFile, embeddings_);
}

KnowledgeBase KnowledgeBase::load(const std::filesystem::path& dir) {
  return build(dir / kRecordsFile, dir / kEmbeddingsFile);
}

std::vector<std::size_t> KnowledgeBase::category_rows(const std::string& category,
                                                      std::optional<Source> source_filter) const {
  auto it = category_index_.find(category);
  if (it == category_index_.end()) return {};
  if (!source_filter) return it->second;
  std::vector<std::size_t> out;
  for (std::size_t r : it->second) {
    if (records_[r].source == *source_filter) out.push_back(r);
  }
  return out;
}

std::optional<std::size_t> KnowledgeBase::pair_row(const std::string& sample_id) const {
  auto it = pair_index_.find(sample_id);
  if (it == pair_index_.end()) return std::nullopt;
  return it->second;
}

Embedding KnowledgeBase::paired_text_embedding(const std::string& sample_id) const {
  auto row = pair_row(sample_id);
  if (!row) fail(ErrorCode::UnknownSample, "no paired description for sample '" + sample_id + "'");
  return embeddings_.embedding(*row);
}

std::vector<std::string> KnowledgeBase::categories() const {
  std::vector<std::string> out;
  out.reserve(category_index_.size());
  for (const auto& [name, rows] : category_index_) out.push_back(name);
  return out;
}

KnowledgeBaseStats KnowledgeBase::stats() const {
  KnowledgeBaseStats s;
  s.records = records_.size();
  s.dim = dim();
  for (const auto& rec : records_) {
    ++s.per_source[rec.source];
    ++s.per_category[rec.category][rec.source];
  }
  return s;
}

}  // namespace modalign
