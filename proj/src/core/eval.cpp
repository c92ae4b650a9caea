#include "modalign/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "modalign/error.hpp"

namespace modalign {

namespace {

void finish_prediction(Prediction& p) {
  bool first = true;
  for (const auto& [category, score] : p.per_category_scores) {
    if (first || score > p.score) {
      p.predicted_category = category;
      p.score = score;
      first = false;
    }
  }
}

/// Normalized mean of each category's prompt embeddings.
std::map<std::string, std::vector<double>> mean_directions(const PromptSets& prompt_sets) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& [category, prompts] : prompt_sets) {
    if (prompts.rows() == 0) {
      fail(ErrorCode::EmptyCenterSet, "category '" + category + "' has no prompt embeddings");
    }
    std::vector<double> mean(prompts.dim(), 0.0);
    for (std::size_t r = 0; r < prompts.rows(); ++r) {
      auto row = prompts.row(r);
      for (std::size_t c = 0; c < mean.size(); ++c) mean[c] += row[c];
    }
    for (double& x : mean) x /= static_cast<double>(prompts.rows());
    try {
      normalize_in_place(mean);
    } catch (const Error&) {
      fail(ErrorCode::ZeroVector, "mean prompt embedding of '" + category + "' collapses to zero");
    }
    out.emplace(category, std::move(mean));
  }
  return out;
}

Prediction score_against_means(std::span<const double> query,
                               const std::map<std::string, std::vector<double>>& means) {
  if (means.empty()) fail(ErrorCode::EmptyCenterSet, "no categories to score against");
  Prediction p;
  for (const auto& [category, mean] : means) {
    p.per_category_scores.emplace(category, cosine(query, mean));
  }
  finish_prediction(p);
  return p;
}

template <typename Score>
EvalReport evaluate_with(const EmbeddingMatrix& queries, std::span<const std::string> labels,
                         const std::set<std::string>& known, ScoringMode mode, Score&& score) {
  if (labels.size() != queries.rows()) {
    fail(ErrorCode::CountMismatch, std::to_string(labels.size()) + " labels for " +
                                       std::to_string(queries.rows()) + " queries");
  }
  for (const auto& label : labels) {
    if (!known.contains(label)) fail(ErrorCode::UnknownLabel, "label '" + label + "' has no center");
  }
  EvalReport report;
  report.mode = mode;
  for (const auto& category : known) report.per_class[category];
  for (std::size_t r = 0; r < queries.rows(); ++r) {
    const Prediction p = score(queries.row(r));
    auto& cls = report.per_class[labels[r]];
    ++cls.total;
    ++cls.predicted[p.predicted_category];
    if (p.predicted_category == labels[r]) {
      ++cls.correct;
      ++report.correct;
    }
  }
  report.sample_count = queries.rows();
  report.top1_accuracy = report.sample_count == 0
                             ? 0.0
                             : static_cast<double>(report.correct) /
                                   static_cast<double>(report.sample_count);
  return report;
}

void dump_value(const nlohmann::ordered_json& j, std::string& out, int indent) {
  const std::string pad(static_cast<std::size_t>(indent) * 2, ' ');
  const std::string inner(static_cast<std::size_t>(indent + 1) * 2, ' ');
  switch (j.type()) {
    case nlohmann::ordered_json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (const auto& [key, value] : j.items()) {
        if (!first) out += ",\n";
        first = false;
        out += inner + nlohmann::ordered_json(key).dump() + ": ";
        dump_value(value, out, indent + 1);
      }
      out += "\n" + pad + "}";
      return;
    }
    case nlohmann::ordered_json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      out += "[\n";
      bool first = true;
      for (const auto& value : j) {
        if (!first) out += ",\n";
        first = false;
        out += inner;
        dump_value(value, out, indent + 1);
      }
      out += "\n" + pad + "]";
      return;
    }
    case nlohmann::ordered_json::value_t::number_float: {
      const double v = j.get<double>();
      if (!std::isfinite(v)) {
        out += "null";
        return;
      }
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.6f", v == 0.0 ? 0.0 : v);
      out += buf;
      return;
    }
    default:
      out += j.dump();
  }
}

}  // namespace

std::string_view scoring_mode_name(ScoringMode m) noexcept {
  return m == ScoringMode::CenterMax ? "center_max" : "prompt_mean";
}

std::string_view retrieval_direction_name(RetrievalDirection d) noexcept {
  return d == RetrievalDirection::AToB ? "a_to_b" : "b_to_a";
}

PromptSets prompt_sets_from_matrix(const EmbeddingMatrix& m) {
  if (!m.has_labels()) fail(ErrorCode::Format, "prompt embeddings need category labels");
  PromptSets out;
  for (std::size_t r = 0; r < m.rows(); ++r) out[m.label(r)].append_row(m.row(r));
  return out;
}

PromptSets prompt_sets_from_centers(const CenterSet& centers) {
  PromptSets out;
  for (const auto& [category, c] : centers.centers) {
    auto members = c.member_embeddings;
    members.clear_labels();
    out.emplace(category, std::move(members));
  }
  return out;
}

Prediction score_center_max(std::span<const double> query, const CenterSet& centers) {
  if (centers.centers.empty()) fail(ErrorCode::EmptyCenterSet, "center set is empty");
  Prediction p;
  for (const auto& [category, c] : centers.centers) {
    if (c.member_embeddings.rows() == 0) {
      fail(ErrorCode::EmptyCenterSet, "center '" + category + "' has no members");
    }
    if (c.member_embeddings.dim() != query.size()) {
      fail(ErrorCode::DimensionMismatch, "query dim " + std::to_string(query.size()) +
                                             " vs center dim " +
                                             std::to_string(c.member_embeddings.dim()));
    }
    double best = -2.0;
    for (std::size_t m = 0; m < c.member_embeddings.rows(); ++m) {
      best = std::max(best, cosine(query, c.member_embeddings.row(m)));
    }
    p.per_category_scores.emplace(category, best);
  }
  finish_prediction(p);
  return p;
}

Prediction score_prompt_mean(std::span<const double> query, const PromptSets& prompt_sets) {
  return score_against_means(query, mean_directions(prompt_sets));
}

EvalReport evaluate_classification(const EmbeddingMatrix& queries,
                                   std::span<const std::string> labels, const CenterSet& centers) {
  std::set<std::string> known;
  for (const auto& [category, c] : centers.centers) known.insert(category);
  return evaluate_with(queries, labels, known, ScoringMode::CenterMax,
                       [&](std::span<const double> q) { return score_center_max(q, centers); });
}

EvalReport evaluate_classification(const EmbeddingMatrix& queries,
                                   std::span<const std::string> labels,
                                   const PromptSets& prompt_sets) {
  const auto means = mean_directions(prompt_sets);
  std::set<std::string> known;
  for (const auto& [category, m] : means) known.insert(category);
  return evaluate_with(queries, labels, known, ScoringMode::PromptMean,
                       [&](std::span<const double> q) { return score_against_means(q, means); });
}

Relevance class_level_relevance(std::span<const std::string> query_ids,
                                std::span<const std::string> query_categories,
                                std::span<const std::string> gallery_ids,
                                std::span<const std::string> gallery_categories) {
  if (query_ids.size() != query_categories.size() ||
      gallery_ids.size() != gallery_categories.size()) {
    fail(ErrorCode::CountMismatch, "ids and categories must align");
  }
  std::map<std::string, std::set<std::string>> by_category;
  for (std::size_t g = 0; g < gallery_ids.size(); ++g) {
    by_category[gallery_categories[g]].insert(gallery_ids[g]);
  }
  Relevance out;
  for (std::size_t q = 0; q < query_ids.size(); ++q) {
    auto it = by_category.find(query_categories[q]);
    out[query_ids[q]] = it == by_category.end() ? std::set<std::string>{} : it->second;
  }
  return out;
}

RetrievalReport evaluate_retrieval(const EmbeddingMatrix& queries, const EmbeddingMatrix& gallery,
                                   const Relevance& relevance, std::span<const std::size_t> ks,
                                   RetrievalDirection direction) {
  if (queries.dim() != gallery.dim()) {
    fail(ErrorCode::DimensionMismatch, "query dim " + std::to_string(queries.dim()) +
                                           " vs gallery dim " + std::to_string(gallery.dim()));
  }
  if (!queries.has_labels() || !gallery.has_labels()) {
    fail(ErrorCode::Format, "retrieval needs id labels on queries and gallery");
  }
  if (ks.empty() || !std::is_sorted(ks.begin(), ks.end()) || ks.front() == 0) {
    fail(ErrorCode::InvalidArgument, "ks must be non-empty, ascending and >= 1");
  }
  if (gallery.rows() == 0) fail(ErrorCode::EmptyKeys, "gallery is empty");

  std::vector<const std::set<std::string>*> relevant(queries.rows());
  for (std::size_t q = 0; q < queries.rows(); ++q) {
    auto it = relevance.find(queries.label(q));
    if (it == relevance.end() || it->second.empty()) {
      fail(ErrorCode::MissingRelevance, "query '" + queries.label(q) + "' has no relevant items");
    }
    relevant[q] = &it->second;
  }

  std::vector<std::size_t> hits(ks.size(), 0);
  for (std::size_t q = 0; q < queries.rows(); ++q) {
    const auto ranked = top_k(queries.row(q), gallery, ks.back());
    // Rank (0-based) of the first relevant item, or ranked.size() if none.
    std::size_t first_hit = ranked.size();
    for (std::size_t r = 0; r < ranked.size(); ++r) {
      if (relevant[q]->contains(gallery.label(ranked[r].index))) {
        first_hit = r;
        break;
      }
    }
    for (std::size_t i = 0; i < ks.size(); ++i) {
      if (first_hit < ks[i]) ++hits[i];
    }
  }

  RetrievalReport report;
  report.direction = direction;
  report.query_count = queries.rows();
  report.gallery_count = gallery.rows();
  for (std::size_t i = 0; i < ks.size(); ++i) {
    report.recall_at[ks[i]] = queries.rows() == 0 ? 0.0
                                                  : static_cast<double>(hits[i]) /
                                                        static_cast<double>(queries.rows());
  }
  return report;
}

nlohmann::ordered_json to_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["kind"] = "zero_shot_classification";
  j["mode"] = scoring_mode_name(report.mode);
  j["sample_count"] = report.sample_count;
  j["correct"] = report.correct;
  j["top1_accuracy"] = report.top1_accuracy;
  auto& classes = j["per_class"] = nlohmann::ordered_json::object();
  for (const auto& [category, cls] : report.per_class) {
    nlohmann::ordered_json c;
    c["total"] = cls.total;
    c["correct"] = cls.correct;
    c["accuracy"] = cls.total == 0 ? 0.0 : double(cls.correct) / double(cls.total);
    auto& confusion = c["predicted"] = nlohmann::ordered_json::object();
    for (const auto& [predicted, n] : cls.predicted) confusion[predicted] = n;
    classes[category] = std::move(c);
  }
  return j;
}

nlohmann::ordered_json to_json(const RetrievalReport& report) {
  nlohmann::ordered_json j;
  j["kind"] = "cross_modal_retrieval";
  j["direction"] = retrieval_direction_name(report.direction);
  j["query_count"] = report.query_count;
  j["gallery_count"] = report.gallery_count;
  auto& recall = j["recall_at"] = nlohmann::ordered_json::object();
  for (const auto& [k, r] : report.recall_at) recall["R@" + std::to_string(k)] = r;
  return j;
}

std::string dump_report(const nlohmann::ordered_json& report) {
  std::string out;
  dump_value(report, out, 0);
  out += '\n';
  return out;
}

}  // namespace modalign
