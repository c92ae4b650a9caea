#include "modalign/io.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "modalign/error.hpp"

namespace modalign {

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFFu);
  }
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& in, const char* what) {
  std::array<unsigned char, sizeof(T)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    fail(ErrorCode::Format, std::string("UBEM: truncated while reading ") + what);
  }
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return static_cast<T>(v);
}

}  // namespace

void write_ubem(std::ostream& out, const EmbeddingMatrix& m) {
  if (m.dim() > std::numeric_limits<std::uint32_t>::max()) {
    fail(ErrorCode::Format, "UBEM: dimension exceeds u32");
  }
  out.write(kUbemMagic, 4);
  put_le<std::uint16_t>(out, kUbemVersion);
  put_le<std::uint16_t>(out, 0);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.dim()));
  put_le<std::uint64_t>(out, m.rows());
  for (double v : m.data()) {
    const auto f = static_cast<float>(v);
    if (!std::isfinite(f)) fail(ErrorCode::NonFinite, "UBEM: value not representable as float32");
    put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(f));
  }
  put_le<std::uint8_t>(out, m.has_labels() ? 1 : 0);
  if (m.has_labels()) {
    for (const auto& label : m.labels()) {
      if (label.size() > std::numeric_limits<std::uint32_t>::max()) {
        fail(ErrorCode::Format, "UBEM: label too long");
      }
      put_le<std::uint32_t>(out, static_cast<std::uint32_t>(label.size()));
      out.write(label.data(), static_cast<std::streamsize>(label.size()));
    }
  }
  if (!out) fail(ErrorCode::Io, "UBEM: write failed");
}

EmbeddingMatrix read_ubem(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::string_view(magic, 4) != std::string_view(kUbemMagic, 4)) {
    fail(ErrorCode::Format, "UBEM: bad magic");
  }
  const auto version = get_le<std::uint16_t>(in, "version");
  if (version != kUbemVersion) {
    fail(ErrorCode::Format, "UBEM: unsupported version " + std::to_string(version));
  }
  (void)get_le<std::uint16_t>(in, "flags");
  const auto dim = get_le<std::uint32_t>(in, "dim");
  const auto rows = get_le<std::uint64_t>(in, "rows");
  if (dim == 0 && rows != 0) fail(ErrorCode::Format, "UBEM: zero dimension with rows present");
  if (rows > (std::uint64_t{1} << 40) / std::max<std::uint32_t>(dim, 1)) {
    fail(ErrorCode::Format, "UBEM: implausible matrix size");
  }

  std::vector<double> data(static_cast<std::size_t>(rows) * dim);
  for (std::size_t i = 0; i < data.size(); ++i) {
    data[i] = static_cast<double>(std::bit_cast<float>(get_le<std::uint32_t>(in, "payload")));
    if (!std::isfinite(data[i])) {
      fail(ErrorCode::NonFinite, "UBEM: non-finite value in row " + std::to_string(i / dim));
    }
  }

  std::vector<std::string> labels;
  if (in.peek() != std::char_traits<char>::eof()) {
    const auto present = get_le<std::uint8_t>(in, "label flag");
    if (present > 1) fail(ErrorCode::Format, "UBEM: bad label flag");
    if (present == 1) {
      labels.reserve(rows);
      for (std::uint64_t r = 0; r < rows; ++r) {
        const auto len = get_le<std::uint32_t>(in, "label length");
        std::string label(len, '\0');
        in.read(label.data(), len);
        if (in.gcount() != static_cast<std::streamsize>(len)) {
          fail(ErrorCode::Format, "UBEM: truncated label " + std::to_string(r));
        }
        labels.push_back(std::move(label));
      }
    }
  }
  return EmbeddingMatrix(static_cast<std::size_t>(rows), dim, std::move(data), std::move(labels));
}

UbemHeader read_ubem_header(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::string_view(magic, 4) != std::string_view(kUbemMagic, 4)) {
    fail(ErrorCode::Format, path.string() + ": not a UBEM file");
  }
  if (get_le<std::uint16_t>(in, "version") != kUbemVersion) {
    fail(ErrorCode::Format, path.string() + ": unsupported UBEM version");
  }
  (void)get_le<std::uint16_t>(in, "flags");
  UbemHeader h;
  h.dim = get_le<std::uint32_t>(in, "dim");
  h.rows = get_le<std::uint64_t>(in, "rows");
  return h;
}

void write_ubem_file(const std::filesystem::path& path, const EmbeddingMatrix& m) {
  std::ostringstream out(std::ios::binary);
  write_ubem(out, m);
  write_file_atomic(path, out.str());
}

EmbeddingMatrix read_ubem_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  try {
    return read_ubem(in);
  } catch (const Error& e) {
    fail(e.code(), path.string() + ": " + e.what());
  }
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) fail(ErrorCode::Io, "write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::Io, "rename to " + path.string() + " failed: " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace modalign
