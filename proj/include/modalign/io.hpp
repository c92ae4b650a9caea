#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>

#include "modalign/embedding.hpp"

namespace modalign {

// UBEM layout (all integers little-endian):
//   "UBEM" | u16 version=1 | u16 flags | u32 dim | u64 rows
//   rows*dim float32 row-major
//   u8 labels-present | rows * (u32 byte length, UTF-8 bytes)
// The trailing label block may be absent entirely in files written by other
// tools; readers treat end-of-stream at that point as "no labels".
inline constexpr char kUbemMagic[4] = {'U', 'B', 'E', 'M'};
inline constexpr std::uint16_t kUbemVersion = 1;

void write_ubem(std::ostream& out, const EmbeddingMatrix& m);
EmbeddingMatrix read_ubem(std::istream& in);

struct UbemHeader {
  std::uint32_t dim = 0;
  std::uint64_t rows = 0;
};
/// Reads only the fixed-size header of a UBEM file.
UbemHeader read_ubem_header(const std::filesystem::path& path);

void write_ubem_file(const std::filesystem::path& path, const EmbeddingMatrix& m);
EmbeddingMatrix read_ubem_file(const std::filesystem::path& path);

/// Writes to a sibling temp file and renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

/// 64-bit FNV-1a, used for manifest content hashes.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

}  // namespace modalign
