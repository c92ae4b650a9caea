// Randomized invariants. Each property runs over many generated cases from
// fixed seeds, so failures reproduce.
#include <algorithm>
#include <numeric>

#include "doctest.h"
#include "fixtures.hpp"
#include "modalign/adapter.hpp"
#include "modalign/centers.hpp"
#include "modalign/eval.hpp"
#include "modalign/knowledge_base.hpp"

using namespace modalign;

namespace {

constexpr int kTrials = 100;

struct Gen {
  std::mt19937_64 rng;
  explicit Gen(std::uint64_t seed) : rng(seed) {}

  std::size_t size(std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
  oracle::Vec vec(std::size_t dim) { return oracle::gaussian(rng, dim); }
  oracle::Rows rows(std::size_t n, std::size_t dim) { return oracle::gaussian_rows(rng, n, dim); }
  /// Rows drawn from a handful of repeated vectors, so exact ties occur.
  oracle::Rows tied_rows(std::size_t n, std::size_t dim) {
    const auto pool = rows(size(1, 4), dim);
    oracle::Rows out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(pool[size(0, pool.size() - 1)]);
    return out;
  }
};

}  // namespace

TEST_CASE("normalize is idempotent and yields unit norm") {
  Gen g(1);
  for (int t = 0; t < kTrials; ++t) {
    auto v = g.vec(g.size(1, 40));
    for (double& x : v) x *= g.real(1e-3, 1e3);
    const auto once = normalize(Embedding(v));
    const auto twice = normalize(once);
    CHECK(l2_norm(once.values()) == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t i = 0; i < once.dim(); ++i) CHECK(std::abs(once[i] - twice[i]) < 1e-15);
  }
}

TEST_CASE("cosine is symmetric, bounded and scale invariant") {
  Gen g(2);
  for (int t = 0; t < kTrials; ++t) {
    const std::size_t d = g.size(1, 32);
    const auto a = g.vec(d);
    const auto b = g.vec(d);
    const double c = cosine(a, b);
    CHECK(c == cosine(b, a));
    CHECK(c <= 1.0);
    CHECK(c >= -1.0);
    auto scaled = a;
    const double s = g.real(0.01, 100.0);
    for (double& x : scaled) x *= s;
    CHECK(std::abs(cosine(scaled, b) - c) < 1e-12);
    CHECK(std::abs(c - oracle::cos_sim(a, b)) < 1e-12);
  }
}

TEST_CASE("similarity_matrix entries equal scalar cosine for any thread count") {
  Gen g(3);
  for (int t = 0; t < 30; ++t) {
    const std::size_t d = g.size(1, 16);
    const auto q = fixtures::to_matrix(g.rows(g.size(1, 12), d));
    const auto k = fixtures::to_matrix(g.rows(g.size(1, 12), d));
    const auto s = similarity_matrix(q, k, static_cast<unsigned>(g.size(1, 5)));
    for (std::size_t i = 0; i < q.rows(); ++i) {
      for (std::size_t j = 0; j < k.rows(); ++j) CHECK(s.at(i, j) == cosine(q.row(i), k.row(j)));
    }
  }
}

TEST_CASE("top_k is a prefix of the stable full ranking") {
  Gen g(4);
  for (int t = 0; t < kTrials; ++t) {
    const std::size_t d = g.size(1, 8);
    const std::size_t n = g.size(1, 60);
    const auto keys = t % 2 ? g.tied_rows(n, d) : g.rows(n, d);
    const auto m = fixtures::to_matrix(keys);
    const auto q = g.vec(d);
    // The oracle ranks the stored (float32-rounded) rows.
    const auto want = oracle::full_sort(q, fixtures::to_rows(m));
    const std::size_t k = g.size(1, n + 5);
    const auto got = top_k(q, m, k);
    REQUIRE(got.size() == std::min(k, n));
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].index == want[i].first);
      CHECK(got[i].score == want[i].second);
    }
  }
}

TEST_CASE("category_rows partitions the knowledge base by category and source") {
  Gen g(5);
  for (int t = 0; t < 30; ++t) {
    const std::size_t n = g.size(1, 80);
    const std::size_t n_cats = g.size(1, 6);
    std::vector<KnowledgeRecord> recs;
    for (std::size_t i = 0; i < n; ++i) {
      recs.push_back(fixtures::record("r" + std::to_string(i), "c" + std::to_string(g.size(0, n_cats - 1)),
                                      g.size(0, 1) ? Source::LlmCategory : Source::MllmData));
    }
    const auto kb = KnowledgeBase::from_parts(recs, fixtures::to_matrix(g.rows(n, 3)));
    std::vector<int> seen(n, 0);
    for (const auto& c : kb.categories()) {
      const auto all = kb.category_rows(c);
      CHECK(std::is_sorted(all.begin(), all.end()));
      auto llm = kb.category_rows(c, Source::LlmCategory);
      const auto mllm = kb.category_rows(c, Source::MllmData);
      CHECK(llm.size() + mllm.size() == all.size());
      llm.insert(llm.end(), mllm.begin(), mllm.end());
      std::sort(llm.begin(), llm.end());
      CHECK(llm == all);
      for (auto r : all) {
        CHECK(kb.records()[r].category == c);
        ++seen[r];
      }
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int s) { return s == 1; }));
  }
}

TEST_CASE("InfoNCE is non-negative, matches the oracle and is permutation invariant") {
  Gen g(6);
  for (int t = 0; t < kTrials; ++t) {
    const std::size_t b = g.size(2, 12);
    const std::size_t d = g.size(2, 10);
    const auto a = normalize_rows(fixtures::to_matrix(g.rows(b, d)));
    const auto z = normalize_rows(fixtures::to_matrix(g.rows(b, d)));
    const double tau = g.real(0.02, 2.0);
    const bool sym = t % 2 == 1;
    const double loss = info_nce_loss(a, z, tau, sym).loss;
    CHECK(loss >= 0.0);
    CHECK(std::abs(loss - oracle::info_nce(fixtures::to_rows(a), fixtures::to_rows(z), tau, sym)) <
          1e-10);

    std::vector<std::size_t> perm(b);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), g.rng);
    const double permuted = info_nce_loss(a.select_rows(perm), z.select_rows(perm), tau, sym).loss;
    CHECK(std::abs(permuted - loss) < 1e-12);
  }
}

TEST_CASE("adapter output rows are unit norm") {
  Gen g(7);
  for (int t = 0; t < 50; ++t) {
    const std::size_t din = g.size(1, 12);
    const std::size_t dout = g.size(1, 12);
    auto adapter = LinearAdapter::random(din, dout, g.rng());
    for (double& x : adapter.bias) x = g.real(-1, 1);
    const auto out = apply(adapter, fixtures::to_matrix(g.rows(g.size(1, 10), din)));
    for (std::size_t r = 0; r < out.rows(); ++r) {
      CHECK(l2_norm(out.row(r)) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("center-max prediction is invariant to query scale") {
  Gen g(8);
  for (int t = 0; t < kTrials; ++t) {
    const std::size_t d = g.size(2, 8);
    CenterSet set;
    for (std::size_t c = 0; c < g.size(1, 5); ++c) {
      EmbeddingCenter center;
      center.member_embeddings = fixtures::to_matrix(g.rows(g.size(1, 6), d));
      center.member_rows.resize(center.member_embeddings.rows());
      center.member_scores.assign(center.member_embeddings.rows(), 0.0);
      set.centers.emplace("c" + std::to_string(c), std::move(center));
    }
    auto q = g.vec(d);
    const auto base = score_center_max(q, set);
    const double s = g.real(0.001, 1000.0);
    for (double& x : q) x *= s;
    CHECK(score_center_max(q, set).predicted_category == base.predicted_category);
  }
}

TEST_CASE("recall at k is monotone in k and reaches 1 at the gallery size") {
  Gen g(9);
  for (int t = 0; t < 40; ++t) {
    const std::size_t d = g.size(2, 8);
    const std::size_t nq = g.size(1, 15);
    const std::size_t ng = g.size(1, 30);
    const std::size_t n_cats = std::min<std::size_t>(3, ng);
    std::vector<std::string> qid, gid, qcat, gcat;
    for (std::size_t i = 0; i < nq; ++i) {
      qid.push_back("q" + std::to_string(i));
      qcat.push_back("c" + std::to_string(g.size(0, n_cats - 1)));
    }
    for (std::size_t i = 0; i < ng; ++i) {
      gid.push_back("g" + std::to_string(i));
      gcat.push_back("c" + std::to_string(i % n_cats));
    }
    const auto queries = fixtures::to_matrix(g.rows(nq, d), qid);
    const auto gallery = fixtures::to_matrix(t % 2 ? g.tied_rows(ng, d) : g.rows(ng, d), gid);
    const auto rel = class_level_relevance(qid, qcat, gid, gcat);
    std::vector<std::size_t> ks(ng);
    std::iota(ks.begin(), ks.end(), 1);
    const auto r = evaluate_retrieval(queries, gallery, rel, ks);
    double prev = 0.0;
    for (auto k : ks) {
      CHECK(r.recall_at.at(k) >= prev);
      prev = r.recall_at.at(k);
    }
    CHECK(r.recall_at.at(ng) == 1.0);
  }
}
