#pragma once

#include <string>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "modalign/error.hpp"
#include "modalign/embedding.hpp"
#include "modalign/knowledge_base.hpp"

namespace fixtures {

/// Runs `fn` and returns the code of the modalign::Error it throws.
inline modalign::ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const modalign::Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return modalign::ErrorCode::InvalidArgument;
}

inline modalign::EmbeddingMatrix to_matrix(const oracle::Rows& rows,
                                          std::vector<std::string> labels = {}) {
  modalign::EmbeddingMatrix m;
  for (const auto& r : rows) m.append_row(r);
  if (!labels.empty()) m.set_labels(std::move(labels));
  return m;
}

inline oracle::Rows to_rows(const modalign::EmbeddingMatrix& m) {
  oracle::Rows out;
  for (std::size_t r = 0; r < m.rows(); ++r) out.emplace_back(m.row(r).begin(), m.row(r).end());
  return out;
}

inline oracle::Vec angle(double degrees) {
  const double rad = degrees * 3.14159265358979323846 / 180.0;
  return {std::cos(rad), std::sin(rad)};
}

inline modalign::KnowledgeRecord record(std::string id, std::string category,
                                       modalign::Source source = modalign::Source::LlmCategory) {
  modalign::KnowledgeRecord r;
  r.id = std::move(id);
  r.category = std::move(category);
  r.description = "description of " + r.id;
  r.source = source;
  return r;
}

}  // namespace fixtures
