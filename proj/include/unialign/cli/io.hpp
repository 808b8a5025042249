#pragma once

// Embedding file formats.
//
// Binary (UAEB): 16-byte header
//   bytes 0-3   magic "UAEB"
//   bytes 4-5   version (u16, currently 1)
//   bytes 6-7   M (u16)
//   bytes 8-11  B (u32)
//   bytes 12-15 d (u32)
// followed by M row-major B x d blocks of IEEE-754 doubles. All integers and
// doubles are little-endian regardless of the host.
//
// Text: one row per line, whitespace-separated numbers, '#' starts a comment,
// blank lines are skipped. One file holds one modality. Values are written in
// shortest round-trip form so a write/read cycle is bitwise exact.

#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "unialign/error.hpp"
#include "unialign/geometry.hpp"

namespace unialign::io {

namespace fs = std::filesystem;

inline constexpr std::array<char, 4> kMagic{'U', 'A', 'E', 'B'};
inline constexpr std::uint16_t kFormatVersion = 1;
inline constexpr std::size_t kHeaderBytes = 16;

namespace detail {

template <typename T>
void put_le(std::string& out, T value) {
  for (std::size_t k = 0; k < sizeof(T); ++k) out.push_back(static_cast<char>((value >> (8 * k)) & 0xFF));
}

template <typename T>
T get_le(const unsigned char* p) {
  T v = 0;
  for (std::size_t k = 0; k < sizeof(T); ++k) v |= static_cast<T>(p[k]) << (8 * k);
  return v;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  require(!in.bad(), ErrorCode::IoError, "failed reading " + path.string());
  return buf.str();
}

inline void write_file(const fs::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::IoError, "cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorCode::IoError, "failed writing " + path.string());
}

}  // namespace detail

/// Shortest decimal form that parses back to the same double.
inline std::string format_double(double x) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  return std::string(buf.data(), res.ptr);
}

inline std::string encode_uaeb(std::span<const Matrix> blocks) {
  require(!blocks.empty(), ErrorCode::InvalidArgument, "nothing to write");
  require(blocks.size() <= 0xFFFF, ErrorCode::InvalidArgument, "too many modalities for the format");
  const Index b = blocks.front().rows();
  const Index d = blocks.front().cols();
  for (const auto& m : blocks)
    require(m.rows() == b && m.cols() == d, ErrorCode::DimensionMismatch, "blocks differ in shape");
  std::string out(kMagic.begin(), kMagic.end());
  detail::put_le<std::uint16_t>(out, kFormatVersion);
  detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(blocks.size()));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(b));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
  for (const auto& m : blocks)
    for (Index i = 0; i < b; ++i)
      for (Index k = 0; k < d; ++k) detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(m(i, k)));
  return out;
}

inline std::vector<Matrix> decode_uaeb(std::string_view bytes, const std::string& source = "<memory>") {
  require(bytes.size() >= kHeaderBytes, ErrorCode::ParseError, source + ": truncated header");
  require(std::equal(kMagic.begin(), kMagic.end(), bytes.begin()), ErrorCode::ParseError,
          source + ": bad magic, expected UAEB");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const auto version = detail::get_le<std::uint16_t>(p + 4);
  require(version == kFormatVersion, ErrorCode::ParseError,
          source + ": unsupported version " + std::to_string(version));
  const auto num = detail::get_le<std::uint16_t>(p + 6);
  const auto b = detail::get_le<std::uint32_t>(p + 8);
  const auto d = detail::get_le<std::uint32_t>(p + 12);
  const std::uint64_t expected = kHeaderBytes + std::uint64_t{num} * b * d * 8;
  require(bytes.size() == expected, ErrorCode::ParseError,
          source + ": payload is " + std::to_string(bytes.size()) + " bytes, header implies " +
              std::to_string(expected));
  std::vector<Matrix> out;
  const unsigned char* cur = p + kHeaderBytes;
  for (std::uint16_t m = 0; m < num; ++m) {
    Matrix block(static_cast<Index>(b), static_cast<Index>(d));
    for (Index i = 0; i < block.rows(); ++i)
      for (Index k = 0; k < block.cols(); ++k, cur += 8)
        block(i, k) = std::bit_cast<double>(detail::get_le<std::uint64_t>(cur));
    out.push_back(std::move(block));
  }
  return out;
}

inline void write_uaeb(const fs::path& path, std::span<const Matrix> blocks) {
  detail::write_file(path, encode_uaeb(blocks));
}

inline std::vector<Matrix> read_uaeb(const fs::path& path) {
  return decode_uaeb(detail::read_file(path), path.string());
}

inline bool looks_like_uaeb(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::array<char, 4> head{};
  if (!in.read(head.data(), head.size())) return false;
  return head == kMagic;
}

inline std::string encode_text_matrix(const Matrix& m) {
  std::string out;
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index k = 0; k < m.cols(); ++k) {
      if (k) out.push_back(' ');
      out += format_double(m(i, k));
    }
    out.push_back('\n');
  }
  return out;
}

inline Matrix decode_text_matrix(std::string_view text, const std::string& source = "<memory>") {
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    std::vector<double> row;
    std::size_t k = 0;
    std::size_t field = 0;
    while (k < line.size()) {
      while (k < line.size() && (line[k] == ' ' || line[k] == '\t' || line[k] == '\r' || line[k] == ',')) ++k;
      if (k >= line.size()) break;
      std::size_t stop = k;
      while (stop < line.size() && line[stop] != ' ' && line[stop] != '\t' && line[stop] != '\r' && line[stop] != ',') ++stop;
      ++field;
      double v = 0.0;
      const char* first = line.data() + k;
      const char* last = line.data() + stop;
      if (*first == '+') ++first;
      const auto res = std::from_chars(first, last, v);
      require(res.ec == std::errc() && res.ptr == last, ErrorCode::ParseError,
              source + ":" + std::to_string(line_no) + ": field " + std::to_string(field) + " is not a number: '" +
                  std::string(line.substr(k, stop - k)) + "'");
      row.push_back(v);
      k = stop;
    }
    if (row.empty()) continue;
    if (!rows.empty())
      require(row.size() == rows.front().size(), ErrorCode::ParseError,
              source + ":" + std::to_string(line_no) + ": expected " + std::to_string(rows.front().size()) +
                  " fields, found " + std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), ErrorCode::ParseError, source + ": no data rows");
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < rows[i].size(); ++k) m(static_cast<Index>(i), static_cast<Index>(k)) = rows[i][k];
  return m;
}

inline void write_text_matrix(const fs::path& path, const Matrix& m) {
  detail::write_file(path, encode_text_matrix(m));
}

inline Matrix read_text_matrix(const fs::path& path) {
  return decode_text_matrix(detail::read_file(path), path.string());
}

/// Either a single UAEB file holding every modality, or one text or UAEB
/// file per modality (each UAEB then contributes all of its blocks).
inline std::vector<Matrix> load_embeddings(std::span<const std::string> paths) {
  require(!paths.empty(), ErrorCode::InvalidArgument, "no input files given");
  std::vector<Matrix> out;
  for (const auto& p : paths) {
    require(fs::exists(p), ErrorCode::IoError, "no such file: " + p);
    if (looks_like_uaeb(p)) {
      for (auto& m : read_uaeb(p)) out.push_back(std::move(m));
    } else {
      out.push_back(read_text_matrix(p));
    }
  }
  return out;
}

}  // namespace unialign::io
