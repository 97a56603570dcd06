#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "metaflow/id.hpp"

namespace metaflow {

enum class NodeKind { Server, Switch };
enum class Layer { Core, Aggregation, Edge, App };
enum class TopologyKind { TwoTier, ThreeTier, FatTree, Explicit };

inline const char* layer_name(Layer l) {
  switch (l) {
    case Layer::Core: return "core";
    case Layer::Aggregation: return "aggregation";
    case Layer::Edge: return "edge";
    case Layer::App: return "app";
  }
  return "?";
}

struct PhysicalNode {
  std::string name;
  NodeKind kind{NodeKind::Server};
  Layer layer{Layer::Edge};         // switches only
  int port_count{0};                // switches only
  int pod{-1};                      // fat tree only
  std::uint32_t phys_addr{0};       // servers only
  bool active{true};                // inactive servers map to idle leaves
};

/// Storage-cluster tree plus an optional application-cluster attachment.
/// Immutable once built; shareable across threads.
struct Topology {
  TopologyKind kind{TopologyKind::Explicit};
  std::vector<PhysicalNode> nodes;
  std::vector<std::pair<int, int>> links;  // undirected, by node index
  std::optional<int> app_switch;           // forwards port-9000 traffic to the core

  const PhysicalNode& node(int i) const { return nodes.at(static_cast<std::size_t>(i)); }

  int index_of(std::string_view name) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i].name == name) return static_cast<int>(i);
    return -1;
  }

  std::vector<int> neighbors(int i) const {
    std::vector<int> out;
    for (auto [a, b] : links) {
      if (a == i) out.push_back(b);
      if (b == i) out.push_back(a);
    }
    return out;
  }

  int add_node(PhysicalNode n) {
    if (index_of(n.name) >= 0) throw std::invalid_argument("topology: duplicate node " + n.name);
    nodes.push_back(std::move(n));
    return static_cast<int>(nodes.size()) - 1;
  }

  void add_link(int a, int b) { links.emplace_back(a, b); }

  int server_count(bool active_only = false) const {
    int n = 0;
    for (const auto& pn : nodes)
      if (pn.kind == NodeKind::Server && (!active_only || pn.active)) ++n;
    return n;
  }

  int switch_count() const {
    int n = 0;
    for (const auto& pn : nodes)
      if (pn.kind == NodeKind::Switch) ++n;
    return n;
  }
};

namespace detail {
inline std::uint32_t default_server_addr(int server_ordinal) {
  // 10.0.0.0/8 pool, skipping .0 hosts
  return (10u << 24) + static_cast<std::uint32_t>(server_ordinal + 1);
}
}  // namespace detail

/// Tier tree: tiers=3 gives 1 core, core_fanout aggregation switches,
/// core_fanout*agg_fanout edge switches, and edge_fanout servers per edge.
/// tiers=2 omits the aggregation layer: 1 core, core_fanout edge switches,
/// core_fanout*edge_fanout servers; agg_fanout is ignored.
inline Topology build_tier_tree(int core_fanout, int agg_fanout, int edge_fanout, int tiers) {
  if (tiers != 2 && tiers != 3) throw std::invalid_argument("tier tree: tiers must be 2 or 3");
  if (core_fanout < 1 || agg_fanout < 1 || edge_fanout < 1)
    throw std::invalid_argument("tier tree: fanouts must be >= 1");
  Topology t;
  t.kind = tiers == 3 ? TopologyKind::ThreeTier : TopologyKind::TwoTier;
  const int core = t.add_node({"core0", NodeKind::Switch, Layer::Core,
                               core_fanout + 1, -1, 0, true});
  int server_ordinal = 0;
  auto add_edge_with_servers = [&](int parent, int edge_index) {
    const int edge = t.add_node({"edge" + std::to_string(edge_index), NodeKind::Switch,
                                 Layer::Edge, edge_fanout + 1, -1, 0, true});
    t.add_link(parent, edge);
    for (int s = 0; s < edge_fanout; ++s) {
      const int srv = t.add_node({"server" + std::to_string(server_ordinal), NodeKind::Server,
                                  Layer::Edge, 0, -1,
                                  detail::default_server_addr(server_ordinal), true});
      ++server_ordinal;
      t.add_link(edge, srv);
    }
  };
  if (tiers == 2) {
    for (int e = 0; e < core_fanout; ++e) add_edge_with_servers(core, e);
  } else {
    int edge_index = 0;
    for (int a = 0; a < core_fanout; ++a) {
      const int agg = t.add_node({"agg" + std::to_string(a), NodeKind::Switch,
                                  Layer::Aggregation, agg_fanout + 1, -1, 0, true});
      t.add_link(core, agg);
      for (int e = 0; e < agg_fanout; ++e) add_edge_with_servers(agg, edge_index++);
    }
  }
  return t;
}

/// Fat tree with explicit core count. Each pod has n/2 aggregation and n/2
/// edge switches; each edge switch serves n/2 servers. Core switch i links to
/// aggregation switch (i mod n/2) of every pod, so a pod's aggregation layer
/// collectively reaches all cores.
inline Topology build_fat_tree(int n_ports, int pods, int core_count) {
  if (n_ports < 4 || n_ports % 2 != 0)
    throw std::invalid_argument("fat tree: n_ports must be even and >= 4");
  if (pods < 1) throw std::invalid_argument("fat tree: pods must be >= 1");
  if (core_count < 1) throw std::invalid_argument("fat tree: core_count must be >= 1");
  const int half = n_ports / 2;
  Topology t;
  t.kind = TopologyKind::FatTree;
  std::vector<int> cores;
  for (int c = 0; c < core_count; ++c)
    cores.push_back(t.add_node({"core" + std::to_string(c), NodeKind::Switch, Layer::Core,
                                n_ports, -1, 0, true}));
  int server_ordinal = 0;
  for (int p = 0; p < pods; ++p) {
    std::vector<int> aggs;
    for (int a = 0; a < half; ++a) {
      const int agg = t.add_node({"pod" + std::to_string(p) + "-agg" + std::to_string(a),
                                  NodeKind::Switch, Layer::Aggregation, n_ports, p, 0, true});
      aggs.push_back(agg);
    }
    for (std::size_t c = 0; c < cores.size(); ++c)
      t.add_link(cores[c], aggs[c % aggs.size()]);
    for (int e = 0; e < half; ++e) {
      const int edge = t.add_node({"pod" + std::to_string(p) + "-edge" + std::to_string(e),
                                   NodeKind::Switch, Layer::Edge, n_ports, p, 0, true});
      for (int agg : aggs) t.add_link(agg, edge);
      for (int s = 0; s < half; ++s) {
        const int srv = t.add_node({"pod" + std::to_string(p) + "-srv" +
                                        std::to_string(e * half + s),
                                    NodeKind::Server, Layer::Edge, 0, p,
                                    detail::default_server_addr(server_ordinal), true});
        ++server_ordinal;
        t.add_link(edge, srv);
      }
    }
  }
  return t;
}

/// Marks all servers beyond the first `count` inactive (partial clusters).
inline void set_active_servers(Topology& t, int count) {
  int seen = 0;
  for (auto& n : t.nodes)
    if (n.kind == NodeKind::Server) n.active = seen++ < count;
  if (seen < count) throw std::invalid_argument("set_active_servers: only " +
                                                std::to_string(seen) + " servers available");
}

/// Adds the application-cluster switch, linked to the first core switch.
inline int attach_app_switch(Topology& t, const std::string& name = "appsw0") {
  if (t.app_switch) throw std::invalid_argument("topology: app switch already attached");
  int core = -1;
  for (std::size_t i = 0; i < t.nodes.size(); ++i)
    if (t.nodes[i].kind == NodeKind::Switch && t.nodes[i].layer == Layer::Core) {
      core = static_cast<int>(i);
      break;
    }
  if (core < 0) throw std::invalid_argument("topology: no core switch to attach to");
  const int sw = t.add_node({name, NodeKind::Switch, Layer::App, 2, -1, 0, true});
  t.add_link(sw, core);
  t.app_switch = sw;
  return sw;
}

/// Returns human-readable invariant violations; empty means valid.
inline std::vector<std::string> validate(const Topology& t) {
  std::vector<std::string> out;
  if (t.nodes.empty()) {
    out.push_back("topology is empty");
    return out;
  }
  std::vector<std::vector<int>> adj(t.nodes.size());
  for (auto [a, b] : t.links) {
    if (a < 0 || b < 0 || a >= static_cast<int>(t.nodes.size()) ||
        b >= static_cast<int>(t.nodes.size())) {
      out.push_back("link references unknown node");
      continue;
    }
    adj[static_cast<std::size_t>(a)].push_back(b);
    adj[static_cast<std::size_t>(b)].push_back(a);
  }
  for (std::size_t i = 0; i < t.nodes.size(); ++i) {
    const auto& n = t.nodes[i];
    const auto& nb = adj[i];
    if (n.kind == NodeKind::Server) {
      if (nb.size() != 1) {
        out.push_back("server " + n.name + " has " + std::to_string(nb.size()) + " uplinks");
      } else {
        const auto& up = t.nodes[static_cast<std::size_t>(nb[0])];
        if (up.kind != NodeKind::Switch || up.layer != Layer::Edge)
          out.push_back("server " + n.name + " is not attached to an edge switch");
      }
    } else if (n.layer != Layer::Core && n.layer != Layer::App &&
               (t.kind == TopologyKind::TwoTier || t.kind == TopologyKind::ThreeTier)) {
      int uplinks = 0;
      for (int j : nb) {
        const auto& other = t.nodes[static_cast<std::size_t>(j)];
        const bool above = (n.layer == Layer::Edge &&
                            (other.layer == Layer::Aggregation || other.layer == Layer::Core)) ||
                           (n.layer == Layer::Aggregation && other.layer == Layer::Core);
        if (other.kind == NodeKind::Switch && above) ++uplinks;
      }
      if (uplinks != 1)
        out.push_back("switch " + n.name + " has " + std::to_string(uplinks) +
                      " uplinks, expected 1");
    } else if (n.kind == NodeKind::Switch && n.layer == Layer::Edge &&
               t.kind == TopologyKind::FatTree) {
      int agg_links = 0;
      for (int j : nb)
        if (t.nodes[static_cast<std::size_t>(j)].kind == NodeKind::Switch &&
            t.nodes[static_cast<std::size_t>(j)].layer == Layer::Aggregation &&
            t.nodes[static_cast<std::size_t>(j)].pod == n.pod)
          ++agg_links;
      if (agg_links != n.port_count / 2)
        out.push_back("edge switch " + n.name + " links " + std::to_string(agg_links) +
                      " pod aggregation switches, expected " + std::to_string(n.port_count / 2));
    }
    if (n.kind == NodeKind::Switch && n.port_count < 2)
      out.push_back("switch " + n.name + " has port_count < 2");
  }
  // connectivity
  std::vector<char> seen(t.nodes.size(), 0);
  std::queue<int> q;
  q.push(0);
  seen[0] = 1;
  while (!q.empty()) {
    const int v = q.front();
    q.pop();
    for (int j : adj[static_cast<std::size_t>(v)])
      if (!seen[static_cast<std::size_t>(j)]) {
        seen[static_cast<std::size_t>(j)] = 1;
        q.push(j);
      }
  }
  for (std::size_t i = 0; i < t.nodes.size(); ++i)
    if (!seen[i]) out.push_back("node " + t.nodes[i].name + " is unreachable");
  return out;
}

/// Serializes to the [topology] section format understood by the config parser.
inline std::string serialize_topology(const Topology& t) {
  std::string out = "[topology]\n";
  out += "kind = explicit\n";
  for (const auto& n : t.nodes) {
    if (n.kind == NodeKind::Switch && n.layer != Layer::App)
      out += "switch = " + n.name + " " + layer_name(n.layer) +
             (n.pod >= 0 ? " pod=" + std::to_string(n.pod) : "") + "\n";
  }
  for (const auto& n : t.nodes) {
    if (n.kind == NodeKind::Server)
      out += "server = " + n.name + " addr=" + format_id(MetaDataId{n.phys_addr}) +
             (n.active ? "" : " inactive") + "\n";
  }
  for (auto [a, b] : t.links) {
    if (t.app_switch && (a == *t.app_switch || b == *t.app_switch)) continue;
    out += "link = " + t.nodes[static_cast<std::size_t>(a)].name + " " +
           t.nodes[static_cast<std::size_t>(b)].name + "\n";
  }
  if (t.app_switch) out += "app_switch = " + t.nodes[static_cast<std::size_t>(*t.app_switch)].name + "\n";
  return out;
}

}  // namespace metaflow
