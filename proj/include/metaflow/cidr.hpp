#pragma once

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <tuple>
#include <utility>
#include <vector>

#include "metaflow/id.hpp"

namespace metaflow {

inline constexpr std::uint64_t kIdSpace = 1ull << 32;

/// A power-of-two aligned identifier range, written prefix/length.
struct CidrBlock {
  std::uint32_t prefix{0};
  int length{0};  // 0..32

  std::uint64_t size() const { return kIdSpace >> length; }
  std::uint64_t end() const { return prefix + size(); }  // exclusive, may be 2^32
  bool contains(MetaDataId id) const { return id.value >= prefix && id.value < end(); }

  auto operator<=>(const CidrBlock&) const = default;
};

/// Validating constructor: the low (32-length) bits of prefix must be zero.
inline CidrBlock make_block(std::uint32_t prefix, int length) {
  if (length < 0 || length > 32) throw std::invalid_argument("cidr: length out of range");
  if (length < 32 && (prefix & ((kIdSpace >> length) - 1)) != 0)
    throw std::invalid_argument("cidr: prefix not aligned to length");
  return CidrBlock{prefix, length};
}

/// Halves a block into its two ordered children.
inline std::pair<CidrBlock, CidrBlock> split_block(CidrBlock b) {
  if (b.length >= 32) throw std::invalid_argument("split_block: /32 cannot be split");
  const int len = b.length + 1;
  const std::uint32_t half = static_cast<std::uint32_t>(kIdSpace >> len);
  return {CidrBlock{b.prefix, len}, CidrBlock{b.prefix + half, len}};
}

inline bool block_contains(CidrBlock b, MetaDataId id) { return b.contains(id); }

/// Half-open identifier range [lo, hi_exclusive), hi_exclusive <= 2^32.
struct IdRange {
  std::uint32_t lo{0};
  std::uint64_t hi_exclusive{0};

  std::uint64_t size() const { return hi_exclusive - lo; }
  bool operator==(const IdRange&) const = default;
};

inline IdRange make_range(std::uint32_t lo, std::uint64_t hi_exclusive) {
  if (hi_exclusive <= lo || hi_exclusive > kIdSpace)
    throw std::invalid_argument("range: requires lo < hi_exclusive <= 2^32");
  return IdRange{lo, hi_exclusive};
}

/// Minimal list of disjoint blocks tiling [r.lo, r.hi_exclusive), ascending.
///
/// Greedy: at each step emit the largest block that starts at the cursor,
/// respects the cursor's alignment, and fits in the remaining range.
inline std::vector<CidrBlock> cover_range(IdRange r) {
  std::vector<CidrBlock> out;
  std::uint64_t lo = r.lo;
  while (lo < r.hi_exclusive) {
    const std::uint64_t align = lo == 0 ? kIdSpace : (lo & ~(lo - 1));
    const std::uint64_t remaining = r.hi_exclusive - lo;
    std::uint64_t size = std::min<std::uint64_t>(align, std::bit_floor(remaining));
    out.push_back(CidrBlock{static_cast<std::uint32_t>(lo), 32 - std::countr_zero(size)});
    lo += size;
  }
  return out;
}

inline std::string format_block(CidrBlock b) {
  return format_id(MetaDataId{b.prefix}) + '/' + std::to_string(b.length);
}

/// Parses "a.b.c.d/len"; validates alignment.
inline CidrBlock parse_block(std::string_view text) {
  const auto slash = text.rfind('/');
  if (slash == std::string_view::npos)
    throw std::invalid_argument("parse_block: missing /length in '" + std::string(text) + "'");
  const MetaDataId addr = parse_id(text.substr(0, slash));
  int len = 0;
  const auto digits = text.substr(slash + 1);
  if (digits.empty() || digits.size() > 2)
    throw std::invalid_argument("parse_block: bad length in '" + std::string(text) + "'");
  for (char c : digits) {
    if (c < '0' || c > '9')
      throw std::invalid_argument("parse_block: bad length in '" + std::string(text) + "'");
    len = len * 10 + (c - '0');
  }
  return make_block(addr.value, len);
}

}  // namespace metaflow
