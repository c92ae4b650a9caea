#include "modalign/datasets.hpp"

#include <fstream>
#include <stdexcept>
#include <unordered_map>

#include "modalign/error.hpp"

namespace modalign {

namespace {

struct BadField : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename Fn>
void for_each_json_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(nlohmann::json::parse(text));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::MalformedRecord,
           path.string() + " line " + std::to_string(line) + ": " + e.what());
    } catch (const BadField& e) {
      fail(ErrorCode::MalformedRecord,
           path.string() + " line " + std::to_string(line) + ": " + e.what());
    }
  }
}

}  // namespace

std::vector<LabelEntry> read_labels_jsonl(const std::filesystem::path& path) {
  std::vector<LabelEntry> out;
  for_each_json_line(path, [&](const nlohmann::json& j) {
    out.push_back({j.at("id").get<std::string>(), j.at("category").get<std::string>()});
  });
  return out;
}

std::string labels_to_jsonl(const std::vector<LabelEntry>& labels) {
  std::string out;
  for (const auto& l : labels) {
    nlohmann::ordered_json j;
    j["id"] = l.id;
    j["category"] = l.category;
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<std::string> categories_for_rows(const EmbeddingMatrix& m,
                                             const std::vector<LabelEntry>& labels) {
  if (!m.has_labels()) fail(ErrorCode::Format, "embeddings need id labels to attach categories");
  std::unordered_map<std::string, std::string> by_id;
  for (const auto& l : labels) {
    if (!by_id.emplace(l.id, l.category).second) {
      fail(ErrorCode::DuplicateId, "labels file repeats id '" + l.id + "'");
    }
  }
  std::vector<std::string> out;
  out.reserve(m.rows());
  for (const auto& id : m.labels()) {
    auto it = by_id.find(id);
    if (it == by_id.end()) fail(ErrorCode::UnknownLabel, "no category for sample '" + id + "'");
    out.push_back(it->second);
  }
  return out;
}

std::vector<std::string> read_pairs_jsonl(const std::filesystem::path& path) {
  std::vector<std::string> out;
  for_each_json_line(path, [&](const nlohmann::json& j) {
    out.push_back(j.at("sample_id").get<std::string>());
  });
  return out;
}

std::string pairs_to_jsonl(const std::vector<std::string>& sample_ids) {
  std::string out;
  for (const auto& id : sample_ids) {
    nlohmann::ordered_json j;
    j["sample_id"] = id;
    out += j.dump() + "\n";
  }
  return out;
}

Relevance read_relevance_jsonl(const std::filesystem::path& path) {
  Relevance out;
  for_each_json_line(path, [&](const nlohmann::json& j) {
    const auto& relevant = j.at("relevant");
    if (!relevant.is_array()) throw BadField("'relevant' must be an array");
    auto& set = out[j.at("query").get<std::string>()];
    for (const auto& g : relevant) set.insert(g.get<std::string>());
  });
  return out;
}

std::string relevance_to_jsonl(const Relevance& relevance) {
  std::string out;
  for (const auto& [query, items] : relevance) {
    nlohmann::ordered_json j;
    j["query"] = query;
    j["relevant"] = items;
    out += j.dump() + "\n";
  }
  return out;
}

}  // namespace modalign
