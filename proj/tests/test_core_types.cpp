#include <gtest/gtest.h>

#include <random>
#include <set>

#include "metaflow/cidr.hpp"
#include "metaflow/id.hpp"

using namespace metaflow;

namespace {

// Independent FNV-1a/32 oracle: 64-bit arithmetic with an explicit modulus,
// no shared code with the implementation.
std::uint32_t fnv1a_oracle(const std::string& s) {
  std::uint64_t h = 2166136261ull;
  for (char c : s) {
    h = h ^ static_cast<unsigned char>(c);
    h = (h * 16777619ull) % 4294967296ull;
  }
  return static_cast<std::uint32_t>(h);
}

}  // namespace

TEST(HashPath, MatchesIndependentOracle) {
  for (const std::string s : {"a", "foobar", "/home/user/data.bin", "x",
                              "a/rather/long/path/with/many/segments/file.txt"})
    EXPECT_EQ(hash_path(s).value, fnv1a_oracle(s)) << s;
}

TEST(HashPath, GoldenValues) {
  // frozen from the oracle above
  EXPECT_EQ(hash_path("a").value, 0xe40c292cu);
  EXPECT_EQ(hash_path("foobar").value, 0xbf9cf968u);
}

TEST(HashPath, DeterministicAcrossCalls) {
  EXPECT_EQ(hash_path("x"), hash_path("x"));
}

TEST(HashPath, EmptyPathRejected) {
  EXPECT_THROW(hash_path(""), std::invalid_argument);
}

TEST(HashPath, QuartileDistribution) {
  std::mt19937_64 rng(7);
  const int n = 1000000;
  std::uint64_t quartile[4] = {0, 0, 0, 0};
  for (int i = 0; i < n; ++i) {
    const std::string path = "dir" + std::to_string(rng() % 1000) + "/file" + std::to_string(i);
    quartile[hash_path(path).value >> 30] += 1;
  }
  for (auto q : quartile) {
    const double frac = static_cast<double>(q) / n;
    EXPECT_NEAR(frac, 0.25, 0.01);
  }
}

TEST(IdFormat, RoundTrips) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 1000; ++i) {
    const MetaDataId id{static_cast<std::uint32_t>(rng())};
    EXPECT_EQ(parse_id(format_id(id)), id);
  }
  EXPECT_EQ(format_id(MetaDataId{0x9b45922bu}), "155.69.146.43");
  EXPECT_EQ(parse_id("155.69.146.43").value, 0x9b45922bu);
}

TEST(IdFormat, RejectsMalformed) {
  EXPECT_THROW(parse_id("1.2.3"), std::invalid_argument);
  EXPECT_THROW(parse_id("1.2.3.4.5"), std::invalid_argument);
  EXPECT_THROW(parse_id("256.0.0.1"), std::invalid_argument);
  EXPECT_THROW(parse_id("a.b.c.d"), std::invalid_argument);
  EXPECT_THROW(parse_id(""), std::invalid_argument);
}

TEST(SplitBlock, DottedQuadHalving) {
  const auto [lo, hi] = split_block(parse_block("192.168.100.0/24"));
  EXPECT_EQ(format_block(lo), "192.168.100.0/25");
  EXPECT_EQ(format_block(hi), "192.168.100.128/25");
}

TEST(SplitBlock, WholeSpaceAndLeafLevel) {
  const auto [a, b] = split_block(CidrBlock{0, 0});
  EXPECT_EQ(format_block(a), "0.0.0.0/1");
  EXPECT_EQ(format_block(b), "128.0.0.0/1");
  const auto [c, d] = split_block(parse_block("10.0.0.254/31"));
  EXPECT_EQ(format_block(c), "10.0.0.254/32");
  EXPECT_EQ(format_block(d), "10.0.0.255/32");
  EXPECT_THROW(split_block(parse_block("10.0.0.255/32")), std::invalid_argument);
}

TEST(SplitBlock, ChildrenPartitionParent) {
  std::mt19937_64 rng(3);
  for (int len = 0; len < 32; ++len) {
    for (int rep = 0; rep < 32; ++rep) {
      const std::uint32_t mask = len == 0 ? 0u : ~(~0u >> len);  // keep the top len bits
      const CidrBlock b = make_block(static_cast<std::uint32_t>(rng()) & mask, len);
      const auto [lo, hi] = split_block(b);
      EXPECT_EQ(lo.prefix, b.prefix);
      EXPECT_EQ(lo.end(), hi.prefix);
      EXPECT_EQ(hi.end(), b.end());
      EXPECT_EQ(lo.size() + hi.size(), b.size());
    }
  }
}

TEST(BlockContains, HighHalfRouting) {
  const MetaDataId id = parse_id("155.69.146.43");
  EXPECT_FALSE(block_contains(parse_block("0.0.0.0/1"), id));
  EXPECT_TRUE(block_contains(parse_block("128.0.0.0/1"), id));
  std::mt19937_64 rng(5);
  for (int i = 0; i < 200; ++i) {
    const std::uint32_t x = static_cast<std::uint32_t>(rng());
    EXPECT_TRUE(block_contains(CidrBlock{x, 32}, MetaDataId{x}));
  }
}

TEST(CoverRange, TwoBlockLeftPartition) {
  auto fmt = [](const std::vector<CidrBlock>& v) {
    std::string s;
    for (const auto& b : v) s += format_block(b) + " ";
    return s;
  };
  EXPECT_EQ(fmt(cover_range(make_range(0, 0x60000000ull))), "0.0.0.0/2 64.0.0.0/3 ");
  EXPECT_EQ(fmt(cover_range(make_range(0x60000000u, 0x80000000ull))), "96.0.0.0/3 ");
  EXPECT_EQ(fmt(cover_range(make_range(0, kIdSpace))), "0.0.0.0/0 ");
}

TEST(CoverRange, ExactTilingAgainstIntervalOracle) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 10000; ++i) {
    std::uint64_t a = rng() % kIdSpace;
    std::uint64_t b = rng() % (kIdSpace + 1);
    if (a == b) b = a + 1;
    if (a > b) std::swap(a, b);
    const IdRange r = make_range(static_cast<std::uint32_t>(a), b);
    const auto blocks = cover_range(r);
    // interval oracle: concatenated block ranges tile [lo, hi) in order
    std::uint64_t cursor = r.lo;
    for (const auto& blk : blocks) {
      ASSERT_EQ(blk.prefix, cursor);
      ASSERT_EQ(blk.prefix % blk.size(), 0u) << "misaligned block";
      cursor = blk.end();
    }
    ASSERT_EQ(cursor, r.hi_exclusive);
    // minimality: no two adjacent blocks are siblings of one parent
    for (std::size_t k = 1; k < blocks.size(); ++k) {
      const bool same_len = blocks[k - 1].length == blocks[k].length;
      const bool aligned_pair =
          same_len && blocks[k - 1].prefix % (2 * blocks[k - 1].size()) == 0;
      ASSERT_FALSE(aligned_pair && blocks[k - 1].end() == blocks[k].prefix)
          << "mergeable siblings " << format_block(blocks[k - 1]) << " "
          << format_block(blocks[k]);
    }
  }
}

TEST(CoverRange, SingleIdAndEdges) {
  const auto one = cover_range(make_range(42, 43));
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0], (CidrBlock{42, 32}));
  const auto top = cover_range(make_range(0xffffffffu, kIdSpace));
  ASSERT_EQ(top.size(), 1u);
  EXPECT_EQ(top[0].length, 32);
}

TEST(ParseBlock, ValidatesAlignment) {
  EXPECT_THROW(parse_block("1.2.3.4/8"), std::invalid_argument);
  EXPECT_THROW(parse_block("10.0.0.0"), std::invalid_argument);
  EXPECT_THROW(parse_block("10.0.0.0/33"), std::invalid_argument);
  EXPECT_EQ(parse_block("10.0.0.0/8").size(), 1ull << 24);
}
