#include <fstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "modalign/io.hpp"
#include "modalign/knowledge_base.hpp"

using namespace modalign;
using fixtures::code_of;
using fixtures::record;

namespace {

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

struct SmallKb {
  oracle::TempDir dir;
  std::vector<KnowledgeRecord> records{
      record("dog/llm/0", "dog"), record("dog/llm/1", "dog"), record("cat/llm/0", "cat"),
      record("n01440764_17", "cat", Source::MllmData)};
  oracle::Rows rows;

  SmallKb() {
    std::mt19937_64 rng(2);
    rows = oracle::gaussian_rows(rng, 4, 8);
    write_text(dir / "records.jsonl", records_to_jsonl(records));
    write_ubem_file(dir / "emb.ubem", fixtures::to_matrix(rows));
  }
};

}  // namespace

TEST_CASE("build from four records and a 4x8 matrix") {
  SmallKb f;
  const auto kb = KnowledgeBase::build(f.dir / "records.jsonl", f.dir / "emb.ubem");
  CHECK(kb.size() == 4);
  CHECK(kb.dim() == 8);
  CHECK(kb.categories() == std::vector<std::string>{"cat", "dog"});
  CHECK(kb.category_rows("dog") == std::vector<std::size_t>{0, 1});
  CHECK(kb.category_rows("cat") == std::vector<std::size_t>{2, 3});
  CHECK(kb.category_rows("cat", Source::MllmData) == std::vector<std::size_t>{3});
  CHECK(kb.category_rows("cat", Source::LlmCategory) == std::vector<std::size_t>{2});
  CHECK(kb.records() == f.records);

  const auto stats = kb.stats();
  CHECK(stats.records == 4);
  CHECK(stats.per_source.at(Source::LlmCategory) == 3);
  CHECK(stats.per_category.at("cat").at(Source::MllmData) == 1);
}

TEST_CASE("build errors") {
  SmallKb f;
  write_ubem_file(f.dir / "three.ubem",
                  fixtures::to_matrix(oracle::Rows(f.rows.begin(), f.rows.begin() + 3)));
  CHECK(code_of([&] { KnowledgeBase::build(f.dir / "records.jsonl", f.dir / "three.ubem"); }) ==
        ErrorCode::CountMismatch);

  auto dup = f.records;
  dup[0].id = "n01440764_17";
  dup[3].id = "n01440764_17";
  write_text(f.dir / "dup.jsonl", records_to_jsonl(dup));
  CHECK(code_of([&] { KnowledgeBase::build(f.dir / "dup.jsonl", f.dir / "emb.ubem"); }) ==
        ErrorCode::DuplicateId);

  auto zero_rows = f.rows;
  zero_rows[2].assign(8, 0.0);
  write_ubem_file(f.dir / "zero.ubem", fixtures::to_matrix(zero_rows));
  try {
    KnowledgeBase::build(f.dir / "records.jsonl", f.dir / "zero.ubem");
    FAIL("expected ZeroVector");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ZeroVector);
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
}

TEST_CASE("malformed records report their line number") {
  SmallKb f;
  const auto lines = records_to_jsonl(f.records);
  const std::vector<std::string> bad_third_line{
      "{\"id\": \"x\", \"category\": \"dog\", \"description\": \"d\"}",
      "{\"id\": \"x\", \"category\": \"dog\", \"description\": \"d\", \"source\": \"web\"}",
      "not json",
      "[1, 2]",
      "{\"id\": \"\", \"category\": \"dog\", \"description\": \"d\", \"source\": \"llm_category\"}",
      "{\"id\": 7, \"category\": \"dog\", \"description\": \"d\", \"source\": \"llm_category\"}"};
  for (const auto& bad : bad_third_line) {
    CAPTURE(bad);
    const auto first_two = lines.substr(0, lines.find('\n', lines.find('\n') + 1) + 1);
    write_text(f.dir / "bad.jsonl", first_two + bad + "\n" + "{}\n");
    try {
      read_records_jsonl(f.dir / "bad.jsonl");
      FAIL("expected MalformedRecord");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::MalformedRecord);
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
}

TEST_CASE("category_rows edge cases") {
  std::vector<KnowledgeRecord> recs;
  oracle::Rows rows;
  std::mt19937_64 rng(4);
  for (int i = 0; i < 1000; ++i) {
    recs.push_back(record("airplane/" + std::to_string(i), "airplane"));
    rows.push_back(oracle::gaussian(rng, 4));
  }
  const auto kb = KnowledgeBase::from_parts(recs, fixtures::to_matrix(rows));
  CHECK(kb.category_rows("airplane").size() == 1000);
  CHECK(kb.category_rows("zebra").empty());
  CHECK(kb.category_rows("airplane", Source::MllmData).empty());
}

TEST_CASE("paired_text_embedding") {
  std::vector<KnowledgeRecord> recs;
  oracle::Rows rows;
  std::mt19937_64 rng(8);
  for (int i = 0; i < 10; ++i) {
    recs.push_back(record("s" + std::to_string(i), "c", Source::MllmData));
    rows.push_back(oracle::unit(oracle::gaussian(rng, 6)));
  }
  const auto kb = KnowledgeBase::from_parts(recs, fixtures::to_matrix(rows));
  const auto e = kb.paired_text_embedding("s7");
  for (std::size_t c = 0; c < 6; ++c) {
    CHECK(e[c] == doctest::Approx(static_cast<float>(rows[7][c])).epsilon(1e-6));
  }
  CHECK(kb.pair_row("s7") == 7);
  CHECK(code_of([&] { kb.paired_text_embedding("nope"); }) == ErrorCode::UnknownSample);
}

TEST_CASE("every sample id of a 100-sample synthetic set resolves to its own row") {
  std::vector<KnowledgeRecord> recs;
  oracle::Rows rows;
  std::mt19937_64 rng(9);
  for (int i = 0; i < 100; ++i) {
    recs.push_back(record("img/" + std::to_string(i), "c" + std::to_string(i % 7), Source::MllmData));
    rows.push_back(oracle::gaussian(rng, 5));
  }
  const auto kb = KnowledgeBase::from_parts(recs, fixtures::to_matrix(rows));
  for (std::size_t i = 0; i < recs.size(); ++i) {
    REQUIRE(kb.pair_row(recs[i].id) == i);
    const auto e = kb.paired_text_embedding(recs[i].id);
    const auto row = kb.embeddings().row(i);
    CHECK(std::equal(row.begin(), row.end(), e.values().begin()));
  }
}

TEST_CASE("ingest stores unit-norm rows") {
  SmallKb f;
  const auto kb = KnowledgeBase::build(f.dir / "records.jsonl", f.dir / "emb.ubem");
  for (std::size_t r = 0; r < kb.size(); ++r) CHECK(l2_norm(kb.embeddings().row(r)) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("export then build reproduces the knowledge base") {
  SmallKb f;
  const auto kb = KnowledgeBase::build(f.dir / "records.jsonl", f.dir / "emb.ubem");
  kb.save(f.dir / "kb1");
  const auto again = KnowledgeBase::build(f.dir / "kb1" / KnowledgeBase::kRecordsFile,
                                          f.dir / "kb1" / KnowledgeBase::kEmbeddingsFile);
  again.save(f.dir / "kb2");
  CHECK(again.records() == kb.records());
  CHECK(again.embeddings().data().size() == kb.embeddings().data().size());
  CHECK(std::equal(kb.embeddings().data().begin(), kb.embeddings().data().end(),
                   again.embeddings().data().begin()));
  CHECK(read_file(f.dir / "kb1/embeddings.ubem") == read_file(f.dir / "kb2/embeddings.ubem"));
  CHECK(read_file(f.dir / "kb1/records.jsonl") == read_file(f.dir / "kb2/records.jsonl"));
  const auto loaded = KnowledgeBase::load(f.dir / "kb1");
  CHECK(loaded.records() == kb.records());
}

TEST_CASE("prompt templates") {
  PromptSet p;
  CHECK(p.fill("airplane") == "A photo of a airplane");
  p.basic_template = "no placeholder";
  CHECK(code_of([&] { p.validate(); }) == ErrorCode::InvalidArgument);
  p.basic_template = "[Category] and [Category]";
  CHECK(code_of([&] { p.validate(); }) == ErrorCode::InvalidArgument);
  CHECK(parse_source("mllm_data") == Source::MllmData);
  CHECK_FALSE(parse_source("web").has_value());
  CHECK(source_name(Source::LlmCategory) == "llm_category");
}
