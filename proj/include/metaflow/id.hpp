#pragma once

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace metaflow {

/// 32-bit metadata identifier, displayed dotted-quad like an IPv4 address.
struct MetaDataId {
  std::uint32_t value{0};
  auto operator<=>(const MetaDataId&) const = default;
};

/// FNV-1a over the raw bytes of a path. Stable across runs and platforms.
inline MetaDataId hash_path(std::string_view path) {
  if (path.empty()) throw std::invalid_argument("hash_path: empty path");
  std::uint32_t h = 0x811c9dc5u;
  for (unsigned char c : path) {
    h ^= c;
    h *= 0x01000193u;
  }
  return MetaDataId{h};
}

inline std::string format_id(MetaDataId id) {
  const std::uint32_t v = id.value;
  return std::to_string(v >> 24) + '.' + std::to_string((v >> 16) & 0xff) + '.' +
         std::to_string((v >> 8) & 0xff) + '.' + std::to_string(v & 0xff);
}

/// Parses "a.b.c.d". Throws std::invalid_argument on malformed input.
inline MetaDataId parse_id(std::string_view text) {
  std::uint32_t parts[4];
  int part = 0;
  std::size_t i = 0;
  while (part < 4) {
    if (i >= text.size() || text[i] < '0' || text[i] > '9')
      throw std::invalid_argument("parse_id: bad address '" + std::string(text) + "'");
    std::uint32_t v = 0;
    std::size_t digits = 0;
    while (i < text.size() && text[i] >= '0' && text[i] <= '9') {
      v = v * 10 + static_cast<std::uint32_t>(text[i] - '0');
      ++i;
      if (++digits > 3 || v > 255)
        throw std::invalid_argument("parse_id: octet out of range in '" + std::string(text) + "'");
    }
    parts[part++] = v;
    if (part < 4) {
      if (i >= text.size() || text[i] != '.')
        throw std::invalid_argument("parse_id: bad address '" + std::string(text) + "'");
      ++i;
    }
  }
  if (i != text.size())
    throw std::invalid_argument("parse_id: trailing characters in '" + std::string(text) + "'");
  return MetaDataId{(parts[0] << 24) | (parts[1] << 16) | (parts[2] << 8) | parts[3]};
}

}  // namespace metaflow
