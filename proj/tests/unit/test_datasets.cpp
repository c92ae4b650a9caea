#include <fstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "modalign/datasets.hpp"
#include "modalign/io.hpp"

using namespace modalign;
using fixtures::code_of;

TEST_CASE("labels round trip and lookup by row id") {
  oracle::TempDir dir;
  const std::vector<LabelEntry> labels{{"b", "dog"}, {"a", "cat"}, {"c", "dog"}};
  std::ofstream(dir / "labels.jsonl") << labels_to_jsonl(labels);
  const auto back = read_labels_jsonl(dir / "labels.jsonl");
  REQUIRE(back.size() == 3);
  CHECK(back[1].id == "a");
  CHECK(back[1].category == "cat");

  const auto m = fixtures::to_matrix({{1, 0}, {0, 1}, {1, 1}}, {"c", "a", "b"});
  CHECK(categories_for_rows(m, back) == std::vector<std::string>{"dog", "cat", "dog"});
  CHECK(code_of([&] { categories_for_rows(fixtures::to_matrix({{1, 0}}), back); }) ==
        ErrorCode::Format);
  CHECK(code_of([&] { categories_for_rows(fixtures::to_matrix({{1, 0}}, {"z"}), back); }) ==
        ErrorCode::UnknownLabel);
  auto dup = labels;
  dup.push_back({"a", "dog"});
  CHECK(code_of([&] { categories_for_rows(m, dup); }) == ErrorCode::DuplicateId);
}

TEST_CASE("pairs round trip and malformed lines") {
  oracle::TempDir dir;
  const std::vector<std::string> ids{"x/1", "x/2", "y/0"};
  std::ofstream(dir / "pairs.jsonl") << pairs_to_jsonl(ids) << "\n";
  CHECK(read_pairs_jsonl(dir / "pairs.jsonl") == ids);
  std::ofstream(dir / "bad.jsonl") << "{\"sample_id\": \"x\"}\n{\"id\": \"y\"}\n";
  try {
    read_pairs_jsonl(dir / "bad.jsonl");
    FAIL("expected MalformedRecord");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MalformedRecord);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK(code_of([&] { read_pairs_jsonl(dir / "missing.jsonl"); }) == ErrorCode::Io);
}

TEST_CASE("relevance round trip merges repeated queries") {
  oracle::TempDir dir;
  const Relevance rel{{"q1", {"g1", "g2"}}, {"q2", {}}};
  std::ofstream(dir / "rel.jsonl") << relevance_to_jsonl(rel);
  CHECK(read_relevance_jsonl(dir / "rel.jsonl") == rel);
  std::ofstream(dir / "split.jsonl") << "{\"query\": \"q\", \"relevant\": [\"a\"]}\n"
                                        "{\"query\": \"q\", \"relevant\": [\"b\"]}\n";
  CHECK(read_relevance_jsonl(dir / "split.jsonl") == Relevance{{"q", {"a", "b"}}});
  std::ofstream(dir / "bad.jsonl") << "{\"query\": \"q\", \"relevant\": \"a\"}\n";
  CHECK(code_of([&] { read_relevance_jsonl(dir / "bad.jsonl"); }) == ErrorCode::MalformedRecord);
}
