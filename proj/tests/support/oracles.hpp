#pragma once

// Brute-force reference implementations used to check the library. They are
// written directly from the definitions and share no code with src/.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <unistd.h>

namespace oracle {

using Vec = std::vector<double>;
using Rows = std::vector<Vec>;

inline double cos_sim(const Vec& a, const Vec& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) ab += a[i] * b[i];
  for (std::size_t i = 0; i < a.size(); ++i) aa += a[i] * a[i];
  for (std::size_t i = 0; i < b.size(); ++i) bb += b[i] * b[i];
  const double c = ab / (std::sqrt(aa) * std::sqrt(bb));
  return std::min(1.0, std::max(-1.0, c));
}

inline Vec unit(Vec v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (double& x : v) x /= n;
  return v;
}

/// Every key's index, ordered by a stable full sort on descending score.
inline std::vector<std::pair<std::size_t, double>> full_sort(const Vec& query, const Rows& keys) {
  std::vector<std::pair<std::size_t, double>> all;
  for (std::size_t j = 0; j < keys.size(); ++j) all.emplace_back(j, cos_sim(query, keys[j]));
  std::stable_sort(all.begin(), all.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return all;
}

/// Fraction of queries whose first `k` full-sort results contain a relevant id.
inline double recall_at(const Rows& queries, const std::vector<std::string>& query_ids,
                        const Rows& gallery, const std::vector<std::string>& gallery_ids,
                        const std::map<std::string, std::set<std::string>>& relevance,
                        std::size_t k) {
  std::size_t hits = 0;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto ranked = full_sort(queries[q], gallery);
    const auto& rel = relevance.at(query_ids[q]);
    for (std::size_t r = 0; r < std::min(k, ranked.size()); ++r) {
      if (rel.count(gallery_ids[ranked[r].first])) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(queries.size());
}

/// -1/B * sum_i log( exp(s_ii/t) / sum_j exp(s_ij/t) ), s from raw dot products.
inline double info_nce(const Rows& a, const Rows& z, double t, bool symmetric = false) {
  const std::size_t n = a.size();
  std::vector<std::vector<long double>> s(n, std::vector<long double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      long double d = 0;
      for (std::size_t c = 0; c < a[i].size(); ++c) d += static_cast<long double>(a[i][c]) * z[j][c];
      s[i][j] = d / t;
    }
  }
  auto direction = [&](bool transpose) {
    long double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      long double m = -INFINITY;
      for (std::size_t j = 0; j < n; ++j) m = std::max(m, transpose ? s[j][i] : s[i][j]);
      long double denom = 0;
      for (std::size_t j = 0; j < n; ++j) denom += std::exp((transpose ? s[j][i] : s[i][j]) - m);
      total += -(s[i][i] - m - std::log(denom));
    }
    return total / static_cast<long double>(n);
  };
  const long double forward = direction(false);
  if (!symmetric) return static_cast<double>(forward);
  return static_cast<double>(0.5L * forward + 0.5L * direction(true));
}

struct Gap {
  double cross = 0.0;
  double same = 0.0;
  std::size_t cross_pairs = 0;
  std::size_t same_pairs = 0;
};

/// Exhaustive loop over every unordered pair of same-class rows.
inline Gap modality_gap(const std::vector<Rows>& mods,
                        const std::vector<std::vector<std::string>>& cats) {
  struct Item {
    std::size_t mod;
    const Vec* v;
    const std::string* c;
  };
  std::vector<Item> all;
  for (std::size_t m = 0; m < mods.size(); ++m) {
    for (std::size_t i = 0; i < mods[m].size(); ++i) all.push_back({m, &mods[m][i], &cats[m][i]});
  }
  Gap g;
  for (std::size_t x = 0; x < all.size(); ++x) {
    for (std::size_t y = x + 1; y < all.size(); ++y) {
      if (*all[x].c != *all[y].c) continue;
      const double c = cos_sim(*all[x].v, *all[y].v);
      if (all[x].mod == all[y].mod) {
        g.same += c;
        ++g.same_pairs;
      } else {
        g.cross += c;
        ++g.cross_pairs;
      }
    }
  }
  g.same /= static_cast<double>(g.same_pairs);
  g.cross /= static_cast<double>(g.cross_pairs);
  return g;
}

inline Vec gaussian(std::mt19937_64& rng, std::size_t dim) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec v(dim);
  for (double& x : v) x = n(rng);
  return v;
}

inline Rows gaussian_rows(std::mt19937_64& rng, std::size_t rows, std::size_t dim) {
  Rows out;
  for (std::size_t r = 0; r < rows; ++r) out.push_back(gaussian(rng, dim));
  return out;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("modalign_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace oracle
