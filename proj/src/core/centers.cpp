#include "modalign/centers.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "modalign/error.hpp"
#include "modalign/io.hpp"

namespace modalign {

std::size_t CenterSet::dim() const {
  if (centers.empty()) return 0;
  return centers.begin()->second.member_embeddings.dim();
}

PromptEmbeddings prompt_embeddings_from_matrix(const EmbeddingMatrix& m) {
  if (!m.has_labels()) {
    fail(ErrorCode::Format, "prompt embeddings need category labels on every row");
  }
  PromptEmbeddings out;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (!out.emplace(m.label(r), m.embedding(r)).second) {
      fail(ErrorCode::DuplicateId, "category '" + m.label(r) + "' has two prompt embeddings");
    }
  }
  return out;
}

CenterSet localize(const KnowledgeBase& kb, const PromptEmbeddings& prompts, std::size_t k,
                   std::optional<Source> source_filter, const PromptSet& prompt_set) {
  if (k == 0) fail(ErrorCode::InvalidArgument, "center size k must be >= 1");
  if (prompts.empty()) fail(ErrorCode::EmptyCenterSet, "no categories to localize");
  prompt_set.validate();

  CenterSet out;
  out.k = k;
  for (const auto& [category, prompt] : prompts) {
    if (prompt.dim() != kb.dim()) {
      fail(ErrorCode::DimensionMismatch, "prompt embedding for '" + category + "' has dim " +
                                             std::to_string(prompt.dim()) + ", KB has " +
                                             std::to_string(kb.dim()));
    }
    const auto rows = kb.category_rows(category, source_filter);
    if (rows.empty()) {
      fail(ErrorCode::MissingCategory, "category '" + category + "' has no knowledge-base rows");
    }
    // Candidate rows are ascending, so local-index ties resolve to KB order.
    const auto candidates = kb.embeddings().select_rows(rows);
    const auto ranked = top_k(prompt.values(), candidates, k);

    EmbeddingCenter center;
    center.category = category;
    center.k_requested = k;
    std::vector<std::size_t> local;
    for (const auto& s : ranked) {
      center.member_rows.push_back(rows[s.index]);
      center.member_scores.push_back(s.score);
      local.push_back(s.index);
    }
    center.member_embeddings = candidates.select_rows(local);
    center.member_embeddings.set_labels(
        std::vector<std::string>(center.member_rows.size(), category));
    if (rows.size() < k) {
      out.warnings.push_back("category '" + category + "' has " + std::to_string(rows.size()) +
                             " descriptions, fewer than k=" + std::to_string(k));
    }
    out.centers.emplace(category, std::move(center));
    out.prompt_embeddings.emplace(category, prompt);
    out.prompt_texts.emplace(category, prompt_set.fill(category));
  }
  return out;
}

std::map<std::size_t, CenterSet> sweep_k(const KnowledgeBase& kb, const PromptEmbeddings& prompts,
                                         std::span<const std::size_t> k_values,
                                         std::optional<Source> source_filter,
                                         const PromptSet& prompt_set) {
  if (k_values.empty()) fail(ErrorCode::InvalidArgument, "k sweep needs at least one value");
  if (std::find(k_values.begin(), k_values.end(), 0u) != k_values.end()) {
    fail(ErrorCode::InvalidArgument, "center size k must be >= 1");
  }
  const std::size_t k_max = *std::max_element(k_values.begin(), k_values.end());
  const CenterSet full = localize(kb, prompts, k_max, source_filter, prompt_set);

  std::map<std::size_t, CenterSet> out;
  for (std::size_t k : k_values) {
    CenterSet set;
    set.k = k;
    set.prompt_embeddings = full.prompt_embeddings;
    set.prompt_texts = full.prompt_texts;
    for (const auto& [category, c] : full.centers) {
      const std::size_t n = std::min(k, c.size());
      std::vector<std::size_t> prefix(n);
      for (std::size_t i = 0; i < n; ++i) prefix[i] = i;
      EmbeddingCenter truncated;
      truncated.category = category;
      truncated.k_requested = k;
      truncated.member_rows.assign(c.member_rows.begin(), c.member_rows.begin() + n);
      truncated.member_scores.assign(c.member_scores.begin(), c.member_scores.begin() + n);
      truncated.member_embeddings = c.member_embeddings.select_rows(prefix);
      if (c.size() < k) {
        set.warnings.push_back("category '" + category + "' has " + std::to_string(c.size()) +
                               " descriptions, fewer than k=" + std::to_string(k));
      }
      set.centers.emplace(category, std::move(truncated));
    }
    out.emplace(k, std::move(set));
  }
  return out;
}

void write_center_set(const std::filesystem::path& path, const CenterSet& set) {
  nlohmann::ordered_json header;
  header["format"] = "modalign-centers";
  header["version"] = 1;
  header["k"] = set.k;
  header["dim"] = set.dim();
  auto& cats = header["categories"] = nlohmann::ordered_json::array();
  EmbeddingMatrix members;
  EmbeddingMatrix prompts;
  for (const auto& [category, c] : set.centers) {
    nlohmann::ordered_json entry;
    entry["category"] = category;
    auto text = set.prompt_texts.find(category);
    entry["prompt"] = text == set.prompt_texts.end() ? "" : text->second;
    entry["k_requested"] = c.k_requested;
    entry["rows"] = c.member_rows;
    entry["scores"] = c.member_scores;
    cats.push_back(std::move(entry));
    for (std::size_t i = 0; i < c.size(); ++i) {
      members.append_row(c.member_embeddings.row(i), category);
    }
    auto p = set.prompt_embeddings.find(category);
    if (p == set.prompt_embeddings.end()) {
      fail(ErrorCode::Format, "center set lacks a prompt embedding for '" + category + "'");
    }
    prompts.append_row(p->second.values(), category);
  }
  header["warnings"] = set.warnings;

  std::ostringstream out(std::ios::binary);
  out << header.dump() << '\n';
  write_ubem(out, members);
  write_ubem(out, prompts);
  write_file_atomic(path, out.str());
}

CenterSet read_center_set(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::string line;
  std::getline(in, line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, path.string() + ": bad center-set header: " + e.what());
  }
  if (header.value("format", "") != "modalign-centers") {
    fail(ErrorCode::Format, path.string() + ": not a center-set file");
  }
  const auto members = read_ubem(in);
  const auto prompts = read_ubem(in);

  CenterSet set;
  try {
    set.k = header.at("k").get<std::size_t>();
    set.warnings = header.value("warnings", std::vector<std::string>{});
    std::size_t offset = 0;
    for (const auto& entry : header.at("categories")) {
      EmbeddingCenter c;
      c.category = entry.at("category").get<std::string>();
      c.k_requested = entry.at("k_requested").get<std::size_t>();
      c.member_rows = entry.at("rows").get<std::vector<std::size_t>>();
      c.member_scores = entry.at("scores").get<std::vector<double>>();
      if (c.member_rows.empty() || c.member_rows.size() != c.member_scores.size() ||
          offset + c.member_rows.size() > members.rows()) {
        fail(ErrorCode::Format, path.string() + ": inconsistent member list for '" +
                                    c.category + "'");
      }
      std::vector<std::size_t> idx(c.member_rows.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = offset + i;
      offset += idx.size();
      c.member_embeddings = members.select_rows(idx);
      set.prompt_texts.emplace(c.category, entry.value("prompt", ""));
      set.centers.emplace(c.category, std::move(c));
    }
    if (offset != members.rows()) {
      fail(ErrorCode::Format, path.string() + ": member blob has extra rows");
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Format, path.string() + ": bad center-set header: " + e.what());
  }
  set.prompt_embeddings = prompt_embeddings_from_matrix(prompts);
  return set;
}

}  // namespace modalign
