#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "metaflow/cidr.hpp"
#include "metaflow/errors.hpp"
#include "metaflow/id.hpp"
#include "metaflow/topology.hpp"

namespace metaflow {

enum class OverlayRole { Root, Inner, Leaf };
enum class OverlayState { Idle, Busy };

struct LeafBlock {
  CidrBlock block;
  std::uint64_t count{0};
};

struct OverlayNode {
  OverlayRole role{OverlayRole::Leaf};
  OverlayState state{OverlayState::Idle};
  std::string name;
  std::vector<int> physical;  // topology node indices backing this logical node
  int parent{-1};
  std::vector<int> children;
  int level{0};  // root = 1
  // leaves only:
  std::vector<LeafBlock> blocks;        // ordered minimal cover of the owned range
  std::vector<std::uint32_t> objects;   // object id multiset
  bool eligible{true};                  // active server, not failed
  bool alive{true};

  bool busy() const { return state == OverlayState::Busy; }
  std::uint64_t object_count() const { return objects.size(); }
  // Leaves always own one contiguous range (splits move a suffix, escalation
  // targets are idle), so the blocks vector tiles a single interval.
  IdRange owned_range() const { return {blocks.front().block.prefix, blocks.back().block.end()}; }
};

struct FlowEntry {
  CidrBlock match;
  std::uint16_t port{9000};
  int target{-1};  // overlay node index
  std::string target_name;
};

inline std::string format_entry(const FlowEntry& e) {
  return format_block(e.match) + ' ' + std::to_string(e.port) + " FORWARD " + e.target_name;
}

struct FlowTable {
  std::vector<FlowEntry> entries;

  /// Longest-prefix match restricted to entries with a matching port.
  /// Returns the entry index or -1 (miss). Length ties cannot occur in
  /// generated tables; asserted here for arbitrary ones.
  int lookup(std::uint32_t dst, std::uint16_t port) const {
    int best = -1;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const auto& e = entries[i];
      if (e.port != port || !e.match.contains(MetaDataId{dst})) continue;
      if (best >= 0) {
        const int blen = entries[static_cast<std::size_t>(best)].match.length;
        if (e.match.length == blen)
          throw Error("flow table: ambiguous LPM (two entries of equal length match)");
        if (e.match.length < blen) continue;
      }
      best = static_cast<int>(i);
    }
    return best;
  }

  std::string serialize() const {
    std::string out;
    for (const auto& e : entries) out += format_entry(e) + '\n';
    return out;
  }
};

struct FlowDelta {
  std::string switch_name;  // display name of the logical node's switches
  std::vector<FlowEntry> added;
  std::vector<FlowEntry> removed;
  std::vector<FlowEntry> retargeted;  // same match, new target
};

struct SplitOutcome {
  MetaDataId partition_value;
  std::vector<CidrBlock> moved_blocks;
  int leaf{-1};
  int new_leaf{-1};
  int iterations{0};
  bool escalated{false};
  std::vector<FlowDelta> deltas;
};

struct ReplacementOutcome {
  int failed_leaf{-1};
  int replacement{-1};  // -1 when the failed leaf was idle (no-op)
  std::vector<CidrBlock> moved_blocks;
  std::vector<FlowDelta> deltas;
};

struct SplitStat {
  double left_fraction{0};
  int iterations{0};
  bool escalated{false};
};

struct OverlayConfig {
  std::uint64_t leaf_capacity{10000};
  double split_lo{0.40};
  double split_hi{0.60};
  std::uint16_t flow_port{9000};
  std::size_t table_capacity{2048};
  bool strict_paper{false};  // disable split escalation beyond siblings
  bool log_inserts{false};
};

/// The controller's logical B-tree over the storage cluster. Single-writer:
/// mutations are serialized through one controller context; read-only queries
/// may run concurrently between mutations.
class OverlayTree {
 public:
  OverlayTree(const Topology& topo, OverlayConfig cfg = {})
      : topo_(topo), cfg_(cfg) {
    const auto violations = validate(topo_);
    if (!violations.empty())
      throw std::invalid_argument("map_topology: invalid topology: " + violations.front());
    build_from_topology();
  }

  const Topology& topology() const { return topo_; }
  const OverlayConfig& config() const { return cfg_; }
  int depth() const { return depth_; }
  int root() const { return root_; }
  const OverlayNode& node(int i) const { return nodes_.at(static_cast<std::size_t>(i)); }
  std::size_t node_count() const { return nodes_.size(); }
  bool bootstrapped() const { return bootstrapped_; }
  const std::vector<std::string>& event_log() const { return log_; }

  std::vector<int> leaves() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].role == OverlayRole::Leaf) out.push_back(static_cast<int>(i));
    return out;
  }

  int leaf_by_name(std::string_view name) const {
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].role == OverlayRole::Leaf && nodes_[i].name == name)
        return static_cast<int>(i);
    return -1;
  }

  /// Partition boundaries between the children of an inner node, in id order.
  std::vector<MetaDataId> partition_values(int inner) const {
    std::vector<std::uint64_t> starts;
    for (int c : node(inner).children)
      for (const auto& r : child_intervals(c)) starts.push_back(r.lo);
    std::sort(starts.begin(), starts.end());
    std::vector<MetaDataId> out;
    for (std::uint64_t s : starts)
      if (s != 0) out.push_back(MetaDataId{static_cast<std::uint32_t>(s)});
    return out;
  }

  /// Activates the first eligible leaf and hands it the whole id space.
  void bootstrap() {
    if (bootstrapped_) throw AlreadyBootstrapped("overlay: already bootstrapped");
    int first = -1;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].role == OverlayRole::Leaf && nodes_[i].eligible) {
        first = static_cast<int>(i);
        break;
      }
    if (first < 0) throw CapacityExhausted("overlay: no eligible leaf to bootstrap");
    auto& leaf = nodes_[static_cast<std::size_t>(first)];
    leaf.blocks = {{CidrBlock{0, 0}, 0}};
    activate(first);
    spans_[0] = Span{kIdSpace, first};
    bootstrapped_ = true;
    log_.push_back("bootstrap leaf=" + leaf.name);
  }

  /// Fixture entry point: assigns explicit blocks per leaf. The union must
  /// tile the whole space exactly once.
  void assign(const std::vector<std::pair<std::string, std::vector<CidrBlock>>>& assignment) {
    if (bootstrapped_) throw AlreadyBootstrapped("overlay: already bootstrapped");
    std::vector<std::pair<CidrBlock, int>> all;
    for (const auto& [name, blocks] : assignment) {
      const int leaf = leaf_by_name(name);
      if (leaf < 0) throw std::invalid_argument("assign: unknown leaf " + name);
      if (blocks.empty()) throw std::invalid_argument("assign: empty block list for " + name);
      auto sorted = blocks;
      std::sort(sorted.begin(), sorted.end());
      for (std::size_t i = 1; i < sorted.size(); ++i)
        if (sorted[i - 1].end() != sorted[i].prefix)
          throw std::invalid_argument("assign: leaf " + name + " blocks are not contiguous");
      auto& n = nodes_[static_cast<std::size_t>(leaf)];
      n.blocks.clear();
      for (const auto& b : sorted) {
        n.blocks.push_back({b, 0});
        all.emplace_back(b, leaf);
      }
      activate(leaf);
    }
    std::sort(all.begin(), all.end());
    std::uint64_t cursor = 0;
    for (const auto& [b, leaf] : all) {
      if (b.prefix != cursor)
        throw std::invalid_argument("assign: blocks do not tile the id space (gap/overlap at " +
                                    format_id(MetaDataId{static_cast<std::uint32_t>(cursor)}) + ")");
      cursor = b.end();
    }
    if (cursor != kIdSpace)
      throw std::invalid_argument("assign: blocks do not reach the end of the id space");
    rebuild_spans();
    bootstrapped_ = true;
    for (const auto& [name, blocks] : assignment)
      log_.push_back("assign leaf=" + name + " blocks=" + std::to_string(blocks.size()));
  }

  /// Owning busy leaf of an identifier (direct span lookup).
  int owner_of(MetaDataId id) const {
    require_bootstrapped();
    auto it = spans_.upper_bound(id.value);
    --it;
    return it->second.leaf;
  }

  /// Structural descent by child partition values; used as the routing oracle.
  int descend(MetaDataId id) const {
    require_bootstrapped();
    int cur = root_;
    while (nodes_[static_cast<std::size_t>(cur)].role != OverlayRole::Leaf) {
      int next = -1;
      for (int c : nodes_[static_cast<std::size_t>(cur)].children) {
        for (const auto& r : child_intervals(c))
          if (id.value >= r.lo && id.value < r.hi_exclusive) {
            if (next >= 0) throw Error("descend: overlapping child partitions");
            next = c;
          }
        }
      if (next < 0) throw Error("descend: uncovered identifier " + format_id(id));
      cur = next;
    }
    return cur;
  }

  /// Inserts an object, splitting the owner if it overflows.
  /// Returns the (possibly new) owning leaf.
  int insert_object(MetaDataId id) {
    require_bootstrapped();
    const int leaf = owner_of(id);
    auto& n = nodes_[static_cast<std::size_t>(leaf)];
    n.objects.push_back(id.value);
    block_of(n, id).count += 1;
    if (cfg_.log_inserts) log_.push_back("insert id=" + format_id(id) + " leaf=" + n.name);
    if (n.object_count() > cfg_.leaf_capacity) {
      split_leaf(leaf);
      return owner_of(id);
    }
    return leaf;
  }

  /// Decrements the object count (deletion keeps blocks as-is; no merging).
  void remove_object(MetaDataId id) {
    require_bootstrapped();
    const int leaf = owner_of(id);
    auto& n = nodes_[static_cast<std::size_t>(leaf)];
    auto it = std::find(n.objects.begin(), n.objects.end(), id.value);
    if (it == n.objects.end()) throw Error("remove_object: no such object " + format_id(id));
    n.objects.erase(it);
    block_of(n, id).count -= 1;
  }

  /// Splits an over-capacity leaf per the 40-60% traversal. The right set
  /// moves to an activated idle sibling, or (unless strict_paper) to the
  /// nearest idle leaf found by walking up the ancestor chain.
  SplitOutcome split_leaf(int leaf) {
    require_bootstrapped();
    auto& donor = nodes_[static_cast<std::size_t>(leaf)];
    if (!donor.busy()) throw std::invalid_argument("split_leaf: leaf is not busy");
    if (donor.object_count() <= cfg_.leaf_capacity)
      throw std::invalid_argument("split_leaf: leaf is not over capacity");

    const std::uint64_t total = donor.object_count();
    std::sort(donor.objects.begin(), donor.objects.end());
    const double lo_limit = cfg_.split_lo * static_cast<double>(total);
    const double hi_limit = cfg_.split_hi * static_cast<double>(total);

    std::vector<LeafBlock> work = donor.blocks;
    std::vector<LeafBlock> left;
    std::uint64_t left_total = 0;
    std::size_t idx = 0;
    int iterations = 0;
    while (idx < work.size()) {
      const LeafBlock b = work[idx];
      const std::uint64_t with = left_total + b.count;
      if (static_cast<double>(with) <= lo_limit) {
        left.push_back(b);
        left_total = with;
        ++idx;
        continue;
      }
      if (static_cast<double>(with) <= hi_limit) {
        left.push_back(b);
        left_total = with;
        ++idx;
        break;  // landed in (lo, hi]
      }
      if (b.block.length == 32) {
        // Unsplittable boundary value. Stop short of it unless that would
        // leave the left set empty, in which case take the hot /32 alone.
        if (!left.empty()) break;
        left.push_back(b);
        left_total = with;
        ++idx;
        break;
      }
      auto [lo_half, hi_half] = split_block(b.block);
      const std::uint64_t lo_count = count_in(donor.objects, lo_half);
      work[idx] = {lo_half, lo_count};
      work.insert(work.begin() + static_cast<std::ptrdiff_t>(idx) + 1,
                  {hi_half, b.count - lo_count});
      ++iterations;
    }
    std::vector<LeafBlock> right(work.begin() + static_cast<std::ptrdiff_t>(idx), work.end());
    // a side with no objects cannot relieve the overflow
    if (left.empty() || right.empty() || left_total == 0 || left_total == total)
      throw UnsplittableHotspot("split_leaf: objects of " + donor.name +
                                " concentrate on a single /32 value");

    SplitOutcome out;
    out.leaf = leaf;
    out.iterations = iterations;
    out.partition_value = MetaDataId{right.front().block.prefix};
    for (const auto& lb : right) out.moved_blocks.push_back(lb.block);

    int recipient = idle_sibling(leaf);
    if (recipient < 0) {
      if (cfg_.strict_paper)
        throw CapacityExhausted("split: no idle sibling; more storage servers should be added");
      out.escalated = true;
      if (migrate_half_group(leaf, out.deltas))  // frees sibling slots
        recipient = idle_sibling(leaf);
      if (recipient < 0) recipient = remote_idle_leaf(leaf);
      if (recipient < 0)
        throw CapacityExhausted(
            "split: no idle leaf available; more storage servers should be added");
    }
    out.new_leaf = recipient;

    const auto affected = affected_inners(leaf, recipient);
    std::vector<std::pair<int, FlowTable>> before;
    for (int n : affected) before.emplace_back(n, build_table(n));

    auto& to = nodes_[static_cast<std::size_t>(recipient)];
    auto& from = nodes_[static_cast<std::size_t>(leaf)];
    from.blocks = left;
    to.blocks = right;
    const auto split_point = std::lower_bound(from.objects.begin(), from.objects.end(),
                                              out.partition_value.value);
    to.objects.assign(split_point, from.objects.end());
    from.objects.erase(split_point, from.objects.end());
    activate(recipient);
    rebuild_spans();

    for (const auto& [n, tbl] : before) {
      FlowDelta d = diff_tables(n, tbl, build_table(n));
      if (!d.added.empty() || !d.removed.empty() || !d.retargeted.empty())
        out.deltas.push_back(std::move(d));
    }
    log_.push_back("split leaf=" + from.name + " partition=" + format_id(out.partition_value) +
                   " to=" + to.name + " moved_blocks=" + std::to_string(out.moved_blocks.size()) +
                   " iterations=" + std::to_string(iterations) +
                   (out.escalated ? " escalated" : ""));
    split_stats_.push_back({static_cast<double>(left_total) / static_cast<double>(total),
                            iterations, out.escalated});
    return out;
  }

  std::uint64_t split_count() const { return split_stats_.size(); }
  const std::vector<SplitStat>& split_stats() const { return split_stats_; }

  /// New storage server under an existing edge switch: idle leaf, no
  /// flow-table change.
  int join_server(const std::string& edge_switch, const std::string& server_name,
                  std::uint32_t addr = 0) {
    const int sw = topo_.index_of(edge_switch);
    if (sw < 0 || topo_.node(sw).kind != NodeKind::Switch ||
        topo_.node(sw).layer != Layer::Edge)
      throw std::invalid_argument("join: unknown edge switch " + edge_switch);
    if (topo_.index_of(server_name) >= 0)
      throw std::invalid_argument("join: duplicate node " + server_name);
    const int inner = overlay_of_switch(sw);
    if (addr == 0) addr = detail::default_server_addr(topo_.server_count());
    const int srv = topo_.add_node({server_name, NodeKind::Server, Layer::Edge, 0,
                                    topo_.node(sw).pod, addr, true});
    topo_.add_link(sw, srv);
    const int leaf = add_node({OverlayRole::Leaf, OverlayState::Idle, server_name, {srv},
                               inner, {}, nodes_[static_cast<std::size_t>(inner)].level + 1});
    switch_to_overlay_[srv] = leaf;
    log_.push_back("join node=" + server_name + " parent=" + edge_switch);
    return leaf;
  }

  /// New edge switch under an aggregation (or core, for two-tier) switch.
  int join_switch(const std::string& parent_switch, const std::string& name) {
    const int psw = topo_.index_of(parent_switch);
    if (psw < 0 || topo_.node(psw).kind != NodeKind::Switch)
      throw std::invalid_argument("join: unknown switch " + parent_switch);
    if (topo_.index_of(name) >= 0) throw std::invalid_argument("join: duplicate node " + name);
    const int inner = overlay_of_switch(psw);
    const int sw = topo_.add_node({name, NodeKind::Switch, Layer::Edge, 2,
                                   topo_.node(psw).pod, 0, true});
    topo_.add_link(psw, sw);
    const int onode = add_node({OverlayRole::Inner, OverlayState::Idle, name, {sw}, inner, {},
                                nodes_[static_cast<std::size_t>(inner)].level + 1});
    switch_to_overlay_[sw] = onode;
    log_.push_back("join node=" + name + " parent=" + parent_switch);
    return onode;
  }

  /// Storage-server failure: an idle sibling inherits the whole block list so
  /// lookups keep resolving (content recovery is out of scope).
  ReplacementOutcome handle_failure(int leaf) {
    auto& failed = nodes_[static_cast<std::size_t>(leaf)];
    if (failed.role != OverlayRole::Leaf) throw std::invalid_argument("failure: not a leaf");
    ReplacementOutcome out;
    out.failed_leaf = leaf;
    if (!failed.busy()) {  // idle node leaves quietly
      failed.alive = false;
      failed.eligible = false;
      log_.push_back("failure leaf=" + failed.name + " idle");
      return out;
    }
    const int parent = failed.parent;
    int replacement = -1;
    for (int c : nodes_[static_cast<std::size_t>(parent)].children) {
      const auto& cand = nodes_[static_cast<std::size_t>(c)];
      if (c != leaf && cand.role == OverlayRole::Leaf && !cand.busy() && cand.eligible &&
          cand.alive) {
        replacement = c;
        break;
      }
    }
    if (replacement < 0)
      throw CapacityExhausted("failure: no idle sibling for " + failed.name +
                              "; more storage servers should be added");
    const auto before = build_table(parent);
    auto& repl = nodes_[static_cast<std::size_t>(replacement)];
    repl.blocks = std::move(failed.blocks);
    repl.objects = std::move(failed.objects);
    failed.blocks.clear();
    failed.objects.clear();
    failed.state = OverlayState::Idle;
    failed.alive = false;
    failed.eligible = false;
    activate(replacement);
    rebuild_spans();
    out.replacement = replacement;
    for (const auto& lb : repl.blocks) out.moved_blocks.push_back(lb.block);
    FlowDelta d = diff_tables(parent, before, build_table(parent));
    if (!d.added.empty() || !d.removed.empty() || !d.retargeted.empty())
      out.deltas.push_back(std::move(d));
    log_.push_back("failure leaf=" + failed.name + " replacement=" + repl.name);
    return out;
  }

  /// Flow table of the logical node backed by a physical switch.
  FlowTable flow_table_for(std::string_view switch_name) const {
    const int sw = topo_.index_of(switch_name);
    if (sw < 0 || topo_.node(sw).kind != NodeKind::Switch)
      throw std::invalid_argument("flow_table_for: unknown switch " + std::string(switch_name));
    if (topo_.app_switch && sw == *topo_.app_switch) return app_table();
    return build_table(overlay_of_switch(sw));
  }

  FlowTable table_of_node(int overlay_node) const { return build_table(overlay_node); }

  int overlay_of_switch(int topo_index) const {
    auto it = switch_to_overlay_.find(topo_index);
    if (it == switch_to_overlay_.end())
      throw std::invalid_argument("switch not mapped: " + topo_.node(topo_index).name);
    return it->second;
  }

  /// Application-cluster rule: everything on the flow port goes to the root.
  FlowTable app_table() const {
    FlowTable t;
    t.entries.push_back({CidrBlock{0, 0}, cfg_.flow_port, root_,
                         nodes_[static_cast<std::size_t>(root_)].name});
    return t;
  }

  /// Text dump of every storage-switch table, switches sorted by name.
  std::string dump_all_tables() const {
    std::vector<int> switches;
    for (std::size_t i = 0; i < topo_.nodes.size(); ++i)
      if (topo_.nodes[i].kind == NodeKind::Switch &&
          (!topo_.app_switch || static_cast<int>(i) != *topo_.app_switch))
        switches.push_back(static_cast<int>(i));
    std::sort(switches.begin(), switches.end(), [&](int a, int b) {
      return topo_.node(a).name < topo_.node(b).name;
    });
    std::string out;
    for (int sw : switches) {
      out += "== " + topo_.node(sw).name + " ==\n";
      out += build_table(overlay_of_switch(sw)).serialize();
    }
    return out;
  }

  /// Per-layer {mean, max} flow-table sizes across physical switches.
  struct LayerCensus {
    double mean{0};
    std::size_t max{0};
    int switches{0};
  };
  std::map<Layer, LayerCensus> flow_table_census() const {
    std::map<Layer, std::vector<std::size_t>> sizes;
    for (std::size_t i = 0; i < topo_.nodes.size(); ++i) {
      const auto& n = topo_.nodes[i];
      if (n.kind != NodeKind::Switch || n.layer == Layer::App) continue;
      sizes[n.layer].push_back(build_table(overlay_of_switch(static_cast<int>(i))).entries.size());
    }
    std::map<Layer, LayerCensus> out;
    for (auto& [layer, v] : sizes) {
      LayerCensus c;
      c.switches = static_cast<int>(v.size());
      for (auto s : v) {
        c.mean += static_cast<double>(s);
        c.max = std::max(c.max, s);
      }
      c.mean /= static_cast<double>(v.size());
      out[layer] = c;
    }
    return out;
  }

  /// State invariants: exact tiling of the id space by busy leaves, counter
  /// consistency, table capacity. Empty result means healthy.
  std::vector<std::string> validate_state() const {
    std::vector<std::string> out;
    if (!bootstrapped_) return out;
    std::vector<std::pair<CidrBlock, int>> all;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const auto& n = nodes_[i];
      if (n.role != OverlayRole::Leaf) continue;
      if (!n.busy()) {
        if (!n.blocks.empty() || !n.objects.empty())
          out.push_back("idle leaf " + n.name + " holds blocks or objects");
        continue;
      }
      std::uint64_t sum = 0;
      for (const auto& lb : n.blocks) {
        all.emplace_back(lb.block, static_cast<int>(i));
        sum += lb.count;
      }
      if (sum != n.object_count())
        out.push_back("leaf " + n.name + " block counters disagree with object multiset");
      for (const auto& lb : n.blocks)
        if (count_in_const(n.objects, lb.block) != lb.count) {
          out.push_back("leaf " + n.name + " per-block counter wrong for " +
                        format_block(lb.block));
          break;
        }
    }
    std::sort(all.begin(), all.end());
    std::uint64_t cursor = 0;
    for (const auto& [b, leaf] : all) {
      if (b.prefix != cursor) {
        out.push_back("coverage break at " +
                      format_id(MetaDataId{static_cast<std::uint32_t>(cursor)}));
        break;
      }
      cursor = b.end();
    }
    if (!all.empty() && cursor != kIdSpace && out.empty())
      out.push_back("coverage stops before the end of the id space");
    for (std::size_t i = 0; i < topo_.nodes.size(); ++i) {
      const auto& n = topo_.nodes[i];
      if (n.kind != NodeKind::Switch || n.layer == Layer::App) continue;
      const auto sz = build_table(overlay_of_switch(static_cast<int>(i))).entries.size();
      if (sz > cfg_.table_capacity)
        out.push_back("switch " + n.name + " table size " + std::to_string(sz) +
                      " exceeds capacity " + std::to_string(cfg_.table_capacity));
    }
    return out;
  }

 private:
  struct Span {
    std::uint64_t end;
    int leaf;
  };

  Topology topo_;
  OverlayConfig cfg_;
  std::vector<OverlayNode> nodes_;
  int root_{-1};
  int depth_{0};
  std::map<int, int> switch_to_overlay_;
  std::map<std::uint64_t, Span> spans_;  // start -> owning busy leaf
  bool bootstrapped_{false};
  std::vector<std::string> log_;
  std::vector<SplitStat> split_stats_;

  void require_bootstrapped() const {
    if (!bootstrapped_) throw Error("overlay: not bootstrapped");
  }

  int add_node(OverlayNode n) {
    const int idx = static_cast<int>(nodes_.size());
    nodes_.push_back(std::move(n));
    if (nodes_.back().parent >= 0)
      nodes_[static_cast<std::size_t>(nodes_.back().parent)].children.push_back(idx);
    return idx;
  }

  void build_from_topology() {
    std::vector<int> cores, aggs, edges;
    for (std::size_t i = 0; i < topo_.nodes.size(); ++i) {
      const auto& n = topo_.nodes[i];
      if (n.kind != NodeKind::Switch) continue;
      if (n.layer == Layer::Core) cores.push_back(static_cast<int>(i));
      if (n.layer == Layer::Aggregation) aggs.push_back(static_cast<int>(i));
      if (n.layer == Layer::Edge) edges.push_back(static_cast<int>(i));
    }
    if (cores.empty()) throw std::invalid_argument("map_topology: no core switch");
    const std::string root_name =
        cores.size() == 1 ? topo_.node(cores[0]).name : std::string("cores");
    root_ = add_node({OverlayRole::Root, OverlayState::Idle, root_name, cores, -1, {}, 1});
    for (int c : cores) switch_to_overlay_[c] = root_;

    std::map<int, int> inner_of_switch;
    if (topo_.kind == TopologyKind::FatTree) {
      // All aggregation switches of a pod collapse into one inner node.
      std::map<int, std::vector<int>> by_pod;
      for (int a : aggs) by_pod[topo_.node(a).pod].push_back(a);
      std::map<int, int> pod_inner;
      for (const auto& [pod, sws] : by_pod) {
        const int n = add_node({OverlayRole::Inner, OverlayState::Idle,
                                "pod" + std::to_string(pod) + "-aggs", sws, root_, {}, 2});
        pod_inner[pod] = n;
        for (int s : sws) switch_to_overlay_[s] = n;
      }
      for (int e : edges) {
        const int n = add_node({OverlayRole::Inner, OverlayState::Idle, topo_.node(e).name,
                                {e}, pod_inner.at(topo_.node(e).pod), {}, 3});
        inner_of_switch[e] = n;
        switch_to_overlay_[e] = n;
      }
      depth_ = 4;
    } else {
      std::map<int, int> agg_inner;
      for (int a : aggs) {
        const int n = add_node({OverlayRole::Inner, OverlayState::Idle, topo_.node(a).name,
                                {a}, root_, {}, 2});
        agg_inner[a] = n;
        switch_to_overlay_[a] = n;
      }
      for (int e : edges) {
        int parent = root_;
        int level = 2;
        for (int nb : topo_.neighbors(e)) {
          const auto& other = topo_.node(nb);
          if (other.kind == NodeKind::Switch && other.layer == Layer::Aggregation) {
            parent = agg_inner.at(nb);
            level = 3;
            break;
          }
        }
        const int n = add_node({OverlayRole::Inner, OverlayState::Idle, topo_.node(e).name,
                                {e}, parent, {}, level});
        inner_of_switch[e] = n;
        switch_to_overlay_[e] = n;
      }
      depth_ = aggs.empty() ? 3 : 4;
    }
    for (std::size_t i = 0; i < topo_.nodes.size(); ++i) {
      const auto& n = topo_.nodes[i];
      if (n.kind != NodeKind::Server) continue;
      int edge = -1;
      for (int nb : topo_.neighbors(static_cast<int>(i)))
        if (topo_.node(nb).kind == NodeKind::Switch) edge = nb;
      const int inner = inner_of_switch.at(edge);
      const int leaf = add_node({OverlayRole::Leaf, OverlayState::Idle, n.name,
                                 {static_cast<int>(i)}, inner, {},
                                 nodes_[static_cast<std::size_t>(inner)].level + 1});
      nodes_[static_cast<std::size_t>(leaf)].eligible = n.active;
      switch_to_overlay_[static_cast<int>(i)] = leaf;
    }
  }

  void activate(int idx) {
    for (int cur = idx; cur >= 0; cur = nodes_[static_cast<std::size_t>(cur)].parent)
      nodes_[static_cast<std::size_t>(cur)].state = OverlayState::Busy;
  }

  LeafBlock& block_of(OverlayNode& leaf, MetaDataId id) {
    auto it = std::upper_bound(leaf.blocks.begin(), leaf.blocks.end(), id.value,
                               [](std::uint32_t v, const LeafBlock& lb) {
                                 return v < lb.block.prefix;
                               });
    if (it == leaf.blocks.begin()) throw Error("block_of: id below leaf range");
    --it;
    if (!it->block.contains(id)) throw Error("block_of: id outside leaf blocks");
    return *it;
  }

  static std::uint64_t count_in(const std::vector<std::uint32_t>& sorted, CidrBlock b) {
    const auto lo = std::lower_bound(sorted.begin(), sorted.end(), b.prefix);
    const auto hi = b.end() >= kIdSpace
                        ? sorted.end()
                        : std::lower_bound(sorted.begin(), sorted.end(),
                                           static_cast<std::uint32_t>(b.end()));
    return static_cast<std::uint64_t>(hi - lo);
  }

  static std::uint64_t count_in_const(const std::vector<std::uint32_t>& objects, CidrBlock b) {
    std::uint64_t n = 0;
    for (auto v : objects) n += b.contains(MetaDataId{v});
    return n;
  }

  int idle_sibling(int leaf) const {
    const int parent = nodes_[static_cast<std::size_t>(leaf)].parent;
    int best = -1;
    for (int c : nodes_[static_cast<std::size_t>(parent)].children) {
      const auto& cand = nodes_[static_cast<std::size_t>(c)];
      if (c != leaf && cand.role == OverlayRole::Leaf && !cand.busy() && cand.eligible &&
          cand.alive && (best < 0 || c < best))
        best = c;
    }
    return best;
  }

  std::vector<int> busy_leaves_by_range(int group, int exclude = -1) const {
    std::vector<int> out;
    for (int c : nodes_[static_cast<std::size_t>(group)].children) {
      const auto& n = nodes_[static_cast<std::size_t>(c)];
      if (c != exclude && n.role == OverlayRole::Leaf && n.busy() && !n.blocks.empty())
        out.push_back(c);
    }
    std::sort(out.begin(), out.end(), [&](int a, int b) {
      return nodes_[static_cast<std::size_t>(a)].blocks.front().block.prefix <
             nodes_[static_cast<std::size_t>(b)].blocks.front().block.prefix;
    });
    return out;
  }

  std::vector<int> idle_slots(int group) const {
    std::vector<int> out;
    for (int c : nodes_[static_cast<std::size_t>(group)].children) {
      const auto& n = nodes_[static_cast<std::size_t>(c)];
      if (n.role == OverlayRole::Leaf && !n.busy() && n.eligible && n.alive) out.push_back(c);
    }
    return out;
  }

  void move_leaf_state(int from_idx, int to_idx) {
    auto& from = nodes_[static_cast<std::size_t>(from_idx)];
    auto& to = nodes_[static_cast<std::size_t>(to_idx)];
    to.blocks = std::move(from.blocks);
    to.objects = std::move(from.objects);
    from.blocks.clear();
    from.objects.clear();
    from.state = OverlayState::Idle;
    activate(to_idx);
    log_.push_back("migrate leaf=" + from.name + " to=" + to.name);
  }

  /// Escalated split support: re-partitions at the parent level by migrating
  /// the upper half of the full group's leaf ranges, leaf for leaf, onto the
  /// idle leaves of another group. The freed leaves turn idle again, so
  /// later overflows in this group split locally. Recipients keep ownership
  /// nested: the range-neighbor group, a group in the same parent scope, and
  /// when the whole scope is full, half of its groups move wholesale to the
  /// emptiest sibling scope first.
  bool migrate_half_group(int donor, std::vector<FlowDelta>& deltas) {
    const int group = nodes_[static_cast<std::size_t>(donor)].parent;
    std::vector<int> movable = busy_leaves_by_range(group, donor);
    if (movable.empty()) return false;  // single-leaf group; island fallback
    const std::size_t half = (movable.size() + 1) / 2;

    std::vector<std::pair<int, FlowTable>> before;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i].role != OverlayRole::Leaf)
        before.emplace_back(static_cast<int>(i), build_table(static_cast<int>(i)));

    int target_group = find_group_slots(group, half);
    if (target_group < 0 && migrate_half_scope(nodes_[static_cast<std::size_t>(group)].parent,
                                               group))
      target_group = find_group_slots(group, 1);
    if (target_group < 0) {  // island fallback: any reachable idle leaf
      int scope = nodes_[static_cast<std::size_t>(group)].parent;
      while (scope >= 0) {
        const int found = descend_to_idle(scope);
        if (found >= 0 && nodes_[static_cast<std::size_t>(found)].parent != group) {
          target_group = nodes_[static_cast<std::size_t>(found)].parent;
          break;
        }
        scope = nodes_[static_cast<std::size_t>(scope)].parent;
      }
    }
    if (target_group < 0) return false;

    const auto slots = idle_slots(target_group);
    const std::size_t k = std::min(slots.size(), half);
    for (std::size_t i = 0; i < k; ++i)
      move_leaf_state(movable[movable.size() - k + i], slots[i]);
    rebuild_spans();
    for (const auto& [n, tbl] : before) {
      FlowDelta d = diff_tables(n, tbl, build_table(n));
      if (!d.added.empty() || !d.removed.empty() || !d.retargeted.empty())
        deltas.push_back(std::move(d));
    }
    return true;
  }

  /// Group (same parent scope as `group`, excluded) able to take `want`
  /// leaves: the range neighbor's group first, then the emptiest.
  int find_group_slots(int group, std::size_t want) const {
    const auto movable = busy_leaves_by_range(group);
    if (!movable.empty()) {
      const std::uint64_t hi =
          nodes_[static_cast<std::size_t>(movable.back())].owned_range().hi_exclusive;
      const std::uint32_t lo =
          nodes_[static_cast<std::size_t>(movable.front())].blocks.front().block.prefix;
      for (const std::uint32_t probe : {static_cast<std::uint32_t>(hi & 0xffffffffull),
                                        static_cast<std::uint32_t>(lo - 1)}) {
        const int nb = neighbor_leaf(probe);
        if (nb < 0) continue;
        const int g = nodes_[static_cast<std::size_t>(nb)].parent;
        if (g != group && nodes_[static_cast<std::size_t>(g)].parent ==
                              nodes_[static_cast<std::size_t>(group)].parent &&
            static_cast<std::size_t>(idle_count(g)) >= want)
          return g;
      }
    }
    const int scope = nodes_[static_cast<std::size_t>(group)].parent;
    if (scope < 0) return -1;
    int best = -1, best_idle = 0;
    for (int g : nodes_[static_cast<std::size_t>(scope)].children) {
      if (g == group || nodes_[static_cast<std::size_t>(g)].role == OverlayRole::Leaf) continue;
      const int idle = idle_count(g);
      if (static_cast<std::size_t>(idle) >= want && idle > best_idle) {
        best = g;
        best_idle = idle;
      }
    }
    return best;
  }

  /// Moves the upper-range half of `scope`'s fully busy groups (excluding
  /// `keep`) wholesale onto the emptiest sibling scope, keeping each moved
  /// group's range in one piece. Frees whole groups inside `scope`.
  bool migrate_half_scope(int scope, int keep) {
    if (scope < 0) return false;
    const int parent = nodes_[static_cast<std::size_t>(scope)].parent;
    if (parent < 0) return false;
    // emptiest sibling scope
    int target_scope = -1, best_idle = 0;
    for (int s : nodes_[static_cast<std::size_t>(parent)].children) {
      if (s == scope) continue;
      int idle = 0, busy_count = 0;
      count_leaves(s, idle, busy_count);
      if (idle > best_idle) {
        best_idle = idle;
        target_scope = s;
      }
    }
    if (target_scope < 0) return false;
    // busy groups of the scope ordered by range
    std::vector<std::pair<std::uint32_t, int>> groups;
    for (int g : nodes_[static_cast<std::size_t>(scope)].children) {
      if (g == keep || nodes_[static_cast<std::size_t>(g)].role == OverlayRole::Leaf) continue;
      const auto busy = busy_leaves_by_range(g);
      if (busy.empty()) continue;
      groups.emplace_back(
          nodes_[static_cast<std::size_t>(busy.front())].blocks.front().block.prefix, g);
    }
    if (groups.empty()) return false;
    std::sort(groups.begin(), groups.end());
    std::size_t take = (groups.size() + 1) / 2;
    // fill the target scope group by group, emptiest slots in index order
    std::vector<int> target_groups;
    for (int g : nodes_[static_cast<std::size_t>(target_scope)].children)
      if (nodes_[static_cast<std::size_t>(g)].role != OverlayRole::Leaf) target_groups.push_back(g);
    std::size_t tg = 0;
    bool moved_any = false;
    for (std::size_t i = groups.size() - take; i < groups.size(); ++i) {
      const auto busy = busy_leaves_by_range(groups[i].second);
      // find a target group with room for the whole batch
      while (tg < target_groups.size() &&
             idle_slots(target_groups[tg]).size() < busy.size())
        ++tg;
      if (tg >= target_groups.size()) break;
      const auto slots = idle_slots(target_groups[tg]);
      for (std::size_t j = 0; j < busy.size(); ++j) move_leaf_state(busy[j], slots[j]);
      moved_any = true;
    }
    if (moved_any) rebuild_spans();
    return moved_any;
  }

  /// Island fallback when a group cannot re-partition: nearest idle leaf by
  /// range adjacency, then the emptiest reachable subtree.
  int remote_idle_leaf(int donor) const {
    const auto& d = nodes_[static_cast<std::size_t>(donor)];
    const std::uint64_t hi = d.owned_range().hi_exclusive;
    const std::uint32_t lo = d.blocks.front().block.prefix;
    for (const std::uint32_t probe :
         {static_cast<std::uint32_t>(hi & 0xffffffffull), static_cast<std::uint32_t>(lo - 1)}) {
      const int nb = neighbor_leaf(probe);
      if (nb < 0) continue;
      const int g = nodes_[static_cast<std::size_t>(nb)].parent;
      if (g == d.parent) continue;
      int best = -1;
      for (int c : nodes_[static_cast<std::size_t>(g)].children) {
        const auto& cand = nodes_[static_cast<std::size_t>(c)];
        if (cand.role == OverlayRole::Leaf && !cand.busy() && cand.eligible && cand.alive &&
            (best < 0 || c < best))
          best = c;
      }
      if (best >= 0) return best;
    }
    int scope = nodes_[static_cast<std::size_t>(d.parent)].parent;
    while (scope >= 0) {
      const int found = descend_to_idle(scope);
      if (found >= 0) return found;
      scope = nodes_[static_cast<std::size_t>(scope)].parent;
    }
    return -1;
  }

  int idle_count(int group) const {
    int n = 0;
    for (int c : nodes_[static_cast<std::size_t>(group)].children) {
      const auto& cand = nodes_[static_cast<std::size_t>(c)];
      if (cand.role == OverlayRole::Leaf && !cand.busy() && cand.eligible && cand.alive) ++n;
    }
    return n;
  }

  int neighbor_leaf(std::uint32_t id) const {
    auto it = spans_.upper_bound(id);
    if (it == spans_.begin()) return -1;
    --it;
    return id < it->second.end ? it->second.leaf : -1;
  }

  int descend_to_idle(int node) const {
    const auto& n = nodes_[static_cast<std::size_t>(node)];
    if (n.role == OverlayRole::Leaf)
      return !n.busy() && n.eligible && n.alive ? node : -1;
    int best_child = -1;
    int best_busy = -1;
    for (int c : n.children) {
      int idle = 0, busy_count = 0;
      count_leaves(c, idle, busy_count);
      if (idle == 0) continue;
      if (best_child < 0 || busy_count < best_busy) {
        best_child = c;
        best_busy = busy_count;
      }
    }
    return best_child < 0 ? -1 : descend_to_idle(best_child);
  }

  void count_leaves(int node, int& idle, int& busy_count) const {
    const auto& n = nodes_[static_cast<std::size_t>(node)];
    if (n.role == OverlayRole::Leaf) {
      if (n.busy())
        ++busy_count;
      else if (n.eligible && n.alive)
        ++idle;
      return;
    }
    for (int c : n.children) count_leaves(c, idle, busy_count);
  }

  std::vector<int> ancestors(int node) const {
    std::vector<int> out;
    for (int cur = nodes_[static_cast<std::size_t>(node)].parent; cur >= 0;
         cur = nodes_[static_cast<std::size_t>(cur)].parent)
      out.push_back(cur);
    return out;
  }

  /// Inner nodes whose tables can change when `a` donates blocks to `b`:
  /// both ancestor chains up to and including the lowest common ancestor.
  std::vector<int> affected_inners(int a, int b) const {
    const auto aa = ancestors(a);
    const auto ab = ancestors(b);
    std::size_t ia = aa.size(), ib = ab.size();
    while (ia > 0 && ib > 0 && aa[ia - 1] == ab[ib - 1]) {
      --ia;
      --ib;
    }
    std::vector<int> out(aa.begin(), aa.begin() + static_cast<std::ptrdiff_t>(ia));
    out.insert(out.end(), ab.begin(), ab.begin() + static_cast<std::ptrdiff_t>(ib));
    if (ia < aa.size()) out.push_back(aa[ia]);  // the LCA itself
    return out;
  }

  void rebuild_spans() {
    spans_.clear();
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      const auto& n = nodes_[i];
      if (n.role == OverlayRole::Leaf && n.busy() && !n.blocks.empty()) {
        const auto r = n.owned_range();
        spans_[r.lo] = Span{r.hi_exclusive, static_cast<int>(i)};
      }
    }
  }

  /// Busy intervals owned by the subtree rooted at `node`, merged.
  std::vector<IdRange> child_intervals(int node) const {
    std::vector<IdRange> raw;
    collect_intervals(node, raw);
    std::sort(raw.begin(), raw.end(),
              [](const IdRange& x, const IdRange& y) { return x.lo < y.lo; });
    std::vector<IdRange> merged;
    for (const auto& r : raw) {
      if (!merged.empty() && merged.back().hi_exclusive == r.lo)
        merged.back().hi_exclusive = r.hi_exclusive;
      else
        merged.push_back(r);
    }
    return merged;
  }

  void collect_intervals(int node, std::vector<IdRange>& out) const {
    const auto& n = nodes_[static_cast<std::size_t>(node)];
    if (n.role == OverlayRole::Leaf) {
      if (n.busy() && !n.blocks.empty()) out.push_back(n.owned_range());
      return;
    }
    for (int c : n.children) collect_intervals(c, out);
  }

  FlowTable build_table(int inner) const {
    const auto& n = nodes_[static_cast<std::size_t>(inner)];
    if (n.role == OverlayRole::Leaf)
      throw std::invalid_argument("flow tables exist only for switches");
    FlowTable t;
    for (int c : n.children) {
      const auto& child = nodes_[static_cast<std::size_t>(c)];
      for (const auto& r : child_intervals(c))
        for (const auto& b : cover_range(r))
          t.entries.push_back({b, cfg_.flow_port, c, child.name});
    }
    // a switch whose subtree owns nothing gets one default route up
    if (t.entries.empty() && bootstrapped_ && n.parent >= 0)
      t.entries.push_back({CidrBlock{0, 0}, cfg_.flow_port, n.parent,
                           nodes_[static_cast<std::size_t>(n.parent)].name});
    std::sort(t.entries.begin(), t.entries.end(), [](const FlowEntry& x, const FlowEntry& y) {
      return std::pair(x.match.prefix, x.match.length) < std::pair(y.match.prefix, y.match.length);
    });
    return t;
  }

  FlowDelta diff_tables(int node, const FlowTable& before, const FlowTable& after) const {
    FlowDelta d;
    d.switch_name = nodes_[static_cast<std::size_t>(node)].name;
    auto find_in = [](const FlowTable& t, CidrBlock m) -> const FlowEntry* {
      for (const auto& e : t.entries)
        if (e.match == m) return &e;
      return nullptr;
    };
    for (const auto& e : after.entries) {
      const FlowEntry* old = find_in(before, e.match);
      if (!old)
        d.added.push_back(e);
      else if (old->target != e.target)
        d.retargeted.push_back(e);
    }
    for (const auto& e : before.entries)
      if (!find_in(after, e.match)) d.removed.push_back(e);
    return d;
  }
};

}  // namespace metaflow
