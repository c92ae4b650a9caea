#include "modalign/random.hpp"

#include "modalign/embedding.hpp"
#include "modalign/io.hpp"

namespace modalign {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::string_view stage, std::uint64_t index) {
  return splitmix64(splitmix64(base) ^ fnv1a64(stage) ^ splitmix64(index + 0x632be59bd9b4e019ull));
}

std::vector<double> gaussian_vector(Rng& rng, std::size_t dim, double stddev) {
  std::normal_distribution<double> normal(0.0, stddev);
  std::vector<double> v(dim);
  for (double& x : v) x = normal(rng);
  return v;
}

std::vector<double> random_unit_vector(Rng& rng, std::size_t dim) {
  auto v = gaussian_vector(rng, dim);
  normalize_in_place(v);
  return v;
}

}  // namespace modalign
