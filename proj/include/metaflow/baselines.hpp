#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "metaflow/errors.hpp"
#include "metaflow/id.hpp"

namespace metaflow {

namespace detail {
// clockwise-exclusive-inclusive arc membership on the 32-bit ring: x in (a, b]
inline bool in_arc(std::uint32_t a, std::uint32_t b, std::uint32_t x) {
  if (a < b) return x > a && x <= b;
  if (a > b) return x > a || x <= b;
  return true;  // single node owns everything
}
}  // namespace detail

struct LookupResult {
  int owner{-1};          // node index
  std::vector<int> hops;  // lookup RPCs: the nodes consulted between the
                          // start node and the owner (both excluded)
};

namespace detail {
// splitmix-style avalanche; uniform ring placement from node ordinals
inline std::uint32_t placement_hash(std::uint32_t i) {
  std::uint64_t x = (i + 0x9E3779B9ull) * 0xBF58476D1CE4E5B9ull;
  x ^= x >> 31;
  x *= 0x94D049BB133111EBull;
  x ^= x >> 29;
  return static_cast<std::uint32_t>(x);
}
}  // namespace detail

/// Static Chord ring: nodes placed uniformly at random (hashes of the node
/// ordinal), fingers pointing at successor(n + 2^i). Membership changes
/// rebuild the ring.
class ChordRing {
 public:
  explicit ChordRing(int node_count) {
    if (node_count < 1) throw std::invalid_argument("chord: need at least one node");
    ids_.reserve(static_cast<std::size_t>(node_count));
    std::uint32_t salt = 0;
    for (int i = 0; i < node_count; ++i) {
      std::uint32_t id = detail::placement_hash(static_cast<std::uint32_t>(i));
      while (std::find(ids_.begin(), ids_.end(), id) != ids_.end())
        id = detail::placement_hash(id + ++salt);
      ids_.push_back(id);
    }
    std::sort(ids_.begin(), ids_.end());
    build_fingers();
  }

  explicit ChordRing(std::vector<std::uint32_t> node_ids) : ids_(std::move(node_ids)) {
    if (ids_.empty()) throw std::invalid_argument("chord: need at least one node");
    std::sort(ids_.begin(), ids_.end());
    ids_.erase(std::unique(ids_.begin(), ids_.end()), ids_.end());
    build_fingers();
  }

  std::size_t size() const { return ids_.size(); }
  std::uint32_t id_of(int node) const { return ids_[static_cast<std::size_t>(node)]; }

  /// First node clockwise at or after `id` (brute force over the sorted ring).
  int successor(std::uint32_t id) const {
    auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
    if (it == ids_.end()) it = ids_.begin();
    return static_cast<int>(it - ids_.begin());
  }

  /// A uniformly random identifier inside `node`'s owned arc.
  std::uint32_t id_in_arc(int node, std::uint64_t r) const {
    const std::size_t n = ids_.size();
    const std::uint32_t hi = ids_[static_cast<std::size_t>(node)];
    if (n == 1) return static_cast<std::uint32_t>(r);
    const std::uint32_t lo = ids_[(static_cast<std::size_t>(node) + n - 1) % n];
    const std::uint64_t arc = (static_cast<std::uint64_t>(hi) - lo) & 0xffffffffull;
    return lo + 1 + static_cast<std::uint32_t>(r % arc);
  }

  /// Greedy finger routing from `start`. Nodes keep a two-deep successor
  /// list, so a node resolves ids up to two arcs ahead without forwarding.
  /// The hop list holds the intermediate nodes consulted while resolving
  /// ownership; the mean length is about half of log2(N).
  LookupResult lookup(int start, std::uint32_t id) const {
    LookupResult res;
    int n = start;
    int guard = 0;
    while (local_owner(n, id) < 0) {
      const int next = closest_preceding(n, id);
      if (next == n) break;
      n = next;
      res.hops.push_back(n);
      if (++guard > 64) throw Error("chord: routing did not converge");
    }
    res.owner = local_owner(n, id);
    if (res.owner < 0) res.owner = succ_[static_cast<std::size_t>(n)];
    return res;
  }

 private:
  void build_fingers() {
    const std::size_t n = ids_.size();
    succ_.resize(n);
    for (std::size_t i = 0; i < n; ++i) succ_[i] = static_cast<int>((i + 1) % n);
    fingers_.assign(n, {});
    for (std::size_t i = 0; i < n; ++i) {
      fingers_[i].resize(32);
      for (int k = 0; k < 32; ++k)
        fingers_[i][static_cast<std::size_t>(k)] =
            successor(static_cast<std::uint32_t>(ids_[i] + (1ull << k)));
    }
  }

  // owner of id if n can resolve it from its successor list, else -1
  int local_owner(int n, std::uint32_t id) const {
    int prev = n;
    for (int k = 0; k < 2; ++k) {
      const int s = succ_[static_cast<std::size_t>(prev)];
      if (detail::in_arc(ids_[static_cast<std::size_t>(prev)], ids_[static_cast<std::size_t>(s)],
                         id))
        return s;
      prev = s;
    }
    return -1;
  }

  int closest_preceding(int n, std::uint32_t id) const {
    const auto& f = fingers_[static_cast<std::size_t>(n)];
    for (int k = 31; k >= 0; --k) {
      const int cand = f[static_cast<std::size_t>(k)];
      if (cand != n &&
          detail::in_arc(ids_[static_cast<std::size_t>(n)], id, ids_[static_cast<std::size_t>(cand)]) &&
          ids_[static_cast<std::size_t>(cand)] != id)
        return cand;
    }
    return n;
  }

  std::vector<std::uint32_t> ids_;
  std::vector<int> succ_;
  std::vector<std::vector<int>> fingers_;
};

/// Full membership table replicated everywhere: one remote hop per lookup,
/// zero when the start node already owns the id.
class OneHopDirectory {
 public:
  explicit OneHopDirectory(int node_count) : ring_(node_count) {}

  std::size_t size() const { return ring_.size(); }
  int owner(std::uint32_t id) const { return ring_.successor(id); }

  LookupResult lookup(int start, std::uint32_t id) const {
    LookupResult res;
    res.owner = owner(id);
    if (res.owner != start) res.hops.push_back(res.owner);
    return res;
  }

 private:
  ChordRing ring_;
};

/// Client-side mapping: owner = id mod server count. No lookup hops, total
/// reshuffle on resize.
inline int hash_mod_lookup(MetaDataId id, int server_count) {
  if (server_count < 1) throw std::invalid_argument("hash_mod: server_count must be >= 1");
  return static_cast<int>(id.value % static_cast<std::uint32_t>(server_count));
}

/// Single well-known coordinator that resolves every lookup (and saturates
/// first).
struct CentralCoordinator {
  int server_count{1};
  bool failed{false};

  LookupResult lookup(MetaDataId id) const {
    if (failed) throw CoordinatorDown("central: coordinator is down");
    LookupResult res;
    res.owner = hash_mod_lookup(id, server_count);
    res.hops.push_back(-1);  // the coordinator itself; not a storage node
    return res;
  }
};

}  // namespace metaflow
