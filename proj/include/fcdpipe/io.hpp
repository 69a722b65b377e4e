#pragma once

// Binary tensor container, atomic file writes and small CSV helpers.
//
// Container layout:
//   [0,64)   fixed header: magic "FCDTNSR\0", u32 version, u32 reserved,
//            u64 json_length, u64 payload_length, zero padding
//   [64, 64+json_length)            JSON-text header block
//   [64+json_length, ... )          raw little-endian payload

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

namespace fcdpipe {

static_assert(std::endian::native == std::endian::little,
              "container payloads are written in host order and assume a little-endian host");

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::size_t kContainerHeaderSize = 64;
inline constexpr char kContainerMagic[8] = {'F', 'C', 'D', 'T', 'N', 'S', 'R', '\0'};
inline constexpr std::uint32_t kContainerVersion = 1;

namespace detail {

inline void put_u32(char* out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
}
inline void put_u64(char* out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
}
inline std::uint32_t get_u32(const char* in) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(static_cast<unsigned char>(in[i])) << (8 * i);
  return v;
}
inline std::uint64_t get_u64(const char* in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(static_cast<unsigned char>(in[i])) << (8 * i);
  return v;
}

}  // namespace detail

/// Writes `content` to `path` through a sibling temp file and a rename.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Container {
  nlohmann::json header;
  std::string payload;
};

inline std::string serialize_container(const Container& c) {
  const std::string json = c.header.dump();
  std::string out(kContainerHeaderSize, '\0');
  std::memcpy(out.data(), kContainerMagic, sizeof kContainerMagic);
  detail::put_u32(out.data() + 8, kContainerVersion);
  detail::put_u64(out.data() + 16, json.size());
  detail::put_u64(out.data() + 24, c.payload.size());
  out += json;
  out += c.payload;
  return out;
}

inline Container parse_container(std::string_view bytes) {
  if (bytes.size() < kContainerHeaderSize) throw FormatError("container: truncated fixed header");
  if (std::memcmp(bytes.data(), kContainerMagic, sizeof kContainerMagic) != 0)
    throw FormatError("container: bad magic");
  const auto version = detail::get_u32(bytes.data() + 8);
  if (version != kContainerVersion)
    throw FormatError("container: unsupported version " + std::to_string(version));
  const auto json_len = detail::get_u64(bytes.data() + 16);
  const auto payload_len = detail::get_u64(bytes.data() + 24);
  if (bytes.size() - kContainerHeaderSize < json_len)
    throw FormatError("container: truncated header block");
  Container c;
  try {
    c.header = nlohmann::json::parse(bytes.substr(kContainerHeaderSize, json_len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("container: malformed header block: ") + e.what());
  }
  const auto rest = bytes.substr(kContainerHeaderSize + json_len);
  if (rest.size() < payload_len) throw FormatError("container: truncated payload");
  if (rest.size() > payload_len) throw FormatError("container: trailing bytes after payload");
  c.payload.assign(rest);
  return c;
}

inline void write_container(const std::filesystem::path& path, const Container& c) {
  write_file_atomic(path, serialize_container(c));
}

inline Container read_container(const std::filesystem::path& path) {
  return parse_container(read_file(path));
}

// ---------------------------------------------------------------------------
// Text helpers

/// Shortest round-trip decimal representation.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc{}) throw std::runtime_error("format_double failed");
  return std::string(buf, ptr);
}

inline double parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s == "nan" || s == "NaN" || s.empty()) return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw FormatError("not a number: '" + std::string(s) + "'");
  return v;
}

template <typename Int>
Int parse_int(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  Int v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw FormatError("not an integer: '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  if (!out.empty() && !out.back().empty() && out.back().back() == '\r')
    out.back().remove_suffix(1);
  return out;
}

/// Line-by-line reader for headed CSV text; checks the header matches.
class CsvReader {
 public:
  CsvReader(std::string text, std::vector<std::string> expected_header, std::string source)
      : text_(std::move(text)), source_(std::move(source)) {
    std::string_view first;
    if (!next_line(first)) throw FormatError(source_ + ": empty CSV");
    auto cols = split_csv_line(first);
    if (cols.size() != expected_header.size())
      throw FormatError(source_ + ": unexpected CSV header '" + std::string(first) + "'");
    for (std::size_t i = 0; i < cols.size(); ++i)
      if (cols[i] != expected_header[i])
        throw FormatError(source_ + ": unexpected CSV header '" + std::string(first) + "'");
    width_ = cols.size();
  }

  bool next(std::vector<std::string_view>& fields) {
    std::string_view line;
    while (next_line(line)) {
      if (line.empty() || line == "\r") continue;
      fields = split_csv_line(line);
      if (fields.size() != width_)
        throw FormatError(source_ + ":" + std::to_string(line_no_) + ": expected " +
                          std::to_string(width_) + " fields");
      return true;
    }
    return false;
  }

  std::size_t line_number() const { return line_no_; }
  const std::string& source() const { return source_; }

 private:
  bool next_line(std::string_view& line) {
    if (pos_ >= text_.size()) return false;
    const auto nl = text_.find('\n', pos_);
    const auto end = nl == std::string::npos ? text_.size() : nl;
    line = std::string_view(text_).substr(pos_, end - pos_);
    pos_ = end + 1;
    ++line_no_;
    return true;
  }

  std::string text_;
  std::string source_;
  std::size_t pos_ = 0;
  std::size_t line_no_ = 0;
  std::size_t width_ = 0;
};

}  // namespace fcdpipe
