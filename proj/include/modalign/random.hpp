#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace modalign {

/// Derives an independent stream seed for (stage, index) from a base seed, so
/// that adding a stage or modality never shifts another stage's draws.
std::uint64_t derive_seed(std::uint64_t base, std::string_view stage, std::uint64_t index = 0);

using Rng = std::mt19937_64;

std::vector<double> gaussian_vector(Rng& rng, std::size_t dim, double stddev = 1.0);
std::vector<double> random_unit_vector(Rng& rng, std::size_t dim);

}  // namespace modalign
