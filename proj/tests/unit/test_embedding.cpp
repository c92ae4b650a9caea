#include "doctest.h"
#include "fixtures.hpp"
#include "modalign/error.hpp"

using namespace modalign;

using fixtures::code_of;

TEST_CASE("normalize examples") {
  const auto n = normalize(Embedding({3.0, 4.0}));
  CHECK(n[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(n[1] == doctest::Approx(0.8).epsilon(1e-15));

  const auto u = normalize(Embedding({1.0, 0.0, 0.0}));
  CHECK(u == Embedding({1.0, 0.0, 0.0}));

  CHECK(code_of([] { normalize(Embedding({0.0, 0.0})); }) == ErrorCode::ZeroVector);
  CHECK(code_of([] { normalize(Embedding({1e-13, 0.0})); }) == ErrorCode::ZeroVector);
}

TEST_CASE("embedding rejects non-finite and empty input") {
  CHECK(code_of([] { Embedding({1.0, std::nan("")}); }) == ErrorCode::NonFinite);
  CHECK(code_of([] { Embedding({INFINITY}); }) == ErrorCode::NonFinite);
  CHECK(code_of([] { Embedding(std::vector<double>{}); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("cosine examples") {
  CHECK(cosine(Embedding({1.0, 0.0}), Embedding({1.0, 0.0})) == 1.0);
  CHECK(cosine(Embedding({1.0, 0.0}), Embedding({0.0, 1.0})) == 0.0);
  // cos 45 degrees = 1/sqrt(2)
  CHECK(cosine(Embedding({1.0, 1.0}), Embedding({1.0, 0.0})) ==
        doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(code_of([] { cosine(Embedding({1.0, 0.0}), Embedding({1.0, 0.0, 0.0})); }) ==
        ErrorCode::DimensionMismatch);
  CHECK(code_of([] {
          const std::vector<double> z{0.0, 0.0}, a{1.0, 0.0};
          cosine(std::span<const double>(z), std::span<const double>(a));
        }) == ErrorCode::ZeroVector);
}

TEST_CASE("cosine is clamped to [-1, 1]") {
  const std::vector<double> a{0.1, 0.2, 0.3};
  const std::vector<double> b{0.1 * 3, 0.2 * 3, 0.3 * 3};
  const double c = cosine(std::span<const double>(a), std::span<const double>(b));
  CHECK(c <= 1.0);
  CHECK(cosine(std::span<const double>(a), std::span<const double>(a)) <= 1.0);
}

TEST_CASE("similarity_matrix examples") {
  const auto q = fixtures::to_matrix({{0.3, -0.2, 0.9}});
  const auto self = similarity_matrix(q, q);
  REQUIRE(self.rows == 1);
  CHECK(self.at(0, 0) == doctest::Approx(1.0).epsilon(1e-15));

  const auto basis = fixtures::to_matrix({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  const auto eye = similarity_matrix(basis, basis);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) CHECK(eye.at(i, j) == (i == j ? 1.0 : 0.0));
  }

  std::mt19937_64 rng(11);
  const auto qs = oracle::gaussian_rows(rng, 32, 24);
  const auto ks = oracle::gaussian_rows(rng, 64, 24);
  const auto sim = similarity_matrix(fixtures::to_matrix(qs), fixtures::to_matrix(ks), 4);
  for (std::size_t i = 0; i < qs.size(); ++i) {
    for (std::size_t j = 0; j < ks.size(); ++j) {
      CHECK(std::abs(sim.at(i, j) - oracle::cos_sim(qs[i], ks[j])) <= 1e-6);
    }
  }

  CHECK(code_of([&] { similarity_matrix(fixtures::to_matrix({{1, 2}}), basis); }) ==
        ErrorCode::DimensionMismatch);
}

TEST_CASE("similarity_matrix is identical for any thread count") {
  std::mt19937_64 rng(5);
  const auto q = fixtures::to_matrix(oracle::gaussian_rows(rng, 37, 16));
  const auto k = fixtures::to_matrix(oracle::gaussian_rows(rng, 50, 16));
  const auto one = similarity_matrix(q, k, 1);
  for (unsigned threads : {2u, 3u, 8u, 64u}) CHECK(similarity_matrix(q, k, threads).values == one.values);
}

TEST_CASE("top_k examples") {
  std::mt19937_64 rng(3);
  auto keys = oracle::gaussian_rows(rng, 20, 8);
  const auto query = keys[13];

  const auto best = top_k(query, fixtures::to_matrix(keys), 1);
  REQUIRE(best.size() == 1);
  CHECK(best[0].index == 13);
  CHECK(best[0].score == doctest::Approx(1.0).epsilon(1e-15));

  const auto all = top_k(query, fixtures::to_matrix(keys), 100);
  REQUIRE(all.size() == keys.size());
  for (std::size_t i = 1; i < all.size(); ++i) CHECK(all[i - 1].score >= all[i].score);

  const auto big = oracle::gaussian_rows(rng, 1000, 16);
  const auto q = oracle::gaussian(rng, 16);
  const auto got = top_k(q, fixtures::to_matrix(big), 50);
  const auto want = oracle::full_sort(q, big);
  REQUIRE(got.size() == 50);
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(got[i].index == want[i].first);
    CHECK(got[i].score == want[i].second);
  }
}

TEST_CASE("top_k breaks ties by ascending row index") {
  const auto keys = fixtures::to_matrix({{0, 1}, {1, 0}, {0, 2}, {2, 0}, {1, 0}});
  const std::vector<double> q{1.0, 0.0};
  const auto got = top_k(q, keys, 5);
  std::vector<std::size_t> order;
  for (const auto& s : got) order.push_back(s.index);
  CHECK(order == std::vector<std::size_t>{1, 3, 4, 0, 2});
}

TEST_CASE("top_k errors") {
  const std::vector<double> q{1.0, 0.0};
  CHECK(code_of([&] { top_k(q, EmbeddingMatrix(), 3); }) == ErrorCode::EmptyKeys);
  CHECK(code_of([&] { top_k(q, fixtures::to_matrix({{1, 0, 0}}), 3); }) ==
        ErrorCode::DimensionMismatch);
  CHECK(code_of([&] { top_k(q, fixtures::to_matrix({{1, 0}}), 0); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("embedding matrix row operations") {
  EmbeddingMatrix m;
  m.append_row(std::vector<double>{1, 2}, "a");
  m.append_row(std::vector<double>{3, 4}, "b");
  m.append_row(std::vector<double>{5, 6}, "c");
  CHECK(m.rows() == 3);
  CHECK(m.dim() == 2);
  const auto sel = m.select_rows(std::vector<std::size_t>{2, 0});
  CHECK(sel.label(0) == "c");
  CHECK(sel.row(1)[1] == 2.0);
  CHECK(code_of([&] { m.append_row(std::vector<double>{1, 2, 3}, "d"); }) ==
        ErrorCode::DimensionMismatch);
  CHECK(code_of([&] { m.set_labels({"x"}); }) == ErrorCode::CountMismatch);
}
