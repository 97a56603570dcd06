#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "metaflow/errors.hpp"
#include "metaflow/overlay.hpp"

namespace metaflow {

enum class PacketKind { MetaflowRequest, MetaflowResponse, Other };

struct Packet {
  std::uint32_t src_addr{0};
  std::uint16_t src_port{0};
  std::uint32_t dst_addr{0};  // the MetaDataID for requests
  std::uint16_t dst_port{0};
  PacketKind kind{PacketKind::Other};
  std::uint32_t payload_size{0};
};

struct NatBinding {
  MetaDataId original_dst;
  std::uint32_t server_physical{0};
  std::uint32_t client{0};
  std::uint16_t client_port{0};
  bool retired{false};
};

/// Per-server NAT agent. Rewrites MetaDataID <-> physical address so the
/// server's transport stack accepts MetaFlow packets.
class NatAgent {
 public:
  explicit NatAgent(std::uint32_t server_physical, std::size_t max_bindings = 65536)
      : physical_(server_physical), max_bindings_(max_bindings) {}

  std::uint32_t physical_addr() const { return physical_; }
  std::size_t active_bindings() const { return bindings_.size(); }

  /// Request delivered to the server: dst becomes the physical address and
  /// the original MetaDataID is remembered per (client, client port).
  Packet inbound(const Packet& pkt) {
    if (bindings_.size() >= max_bindings_ &&
        !bindings_.count({pkt.src_addr, pkt.src_port}))
      throw BindingTableFull("nat: binding table full at " + format_id(MetaDataId{physical_}));
    bindings_[{pkt.src_addr, pkt.src_port}] =
        NatBinding{MetaDataId{pkt.dst_addr}, physical_, pkt.src_addr, pkt.src_port};
    Packet out = pkt;
    out.dst_addr = physical_;
    return out;
  }

  /// Response leaving the server: source gets the original MetaDataID back;
  /// the binding retires with the connection.
  Packet outbound(const Packet& response) {
    auto it = bindings_.find({response.dst_addr, response.dst_port});
    if (it == bindings_.end() || it->second.retired)
      throw NoBinding("nat: no binding for client " + format_id(MetaDataId{response.dst_addr}) +
                      ":" + std::to_string(response.dst_port));
    Packet out = response;
    out.src_addr = it->second.original_dst.value;
    bindings_.erase(it);
    return out;
  }

 private:
  std::uint32_t physical_;
  std::size_t max_bindings_;
  std::map<std::pair<std::uint32_t, std::uint16_t>, NatBinding> bindings_;
};

inline int lpm_match(const FlowTable& table, std::uint32_t dst, std::uint16_t port) {
  return table.lookup(dst, port);
}

enum class RouteStatus { Delivered, Miss, NormalTraffic };

struct RoutedPath {
  RouteStatus status{RouteStatus::Miss};
  std::vector<int> hops;      // topology switch indices, in order
  int server{-1};             // topology server index when delivered
  int miss_hop{-1};           // switch where the miss occurred
  struct TraceRow {
    int hop;
    std::string matched;  // prefix/len or "port-rule"
    std::string action;
  };
  std::vector<TraceRow> trace;
};

/// Read-only snapshot of every switch table; swapped in whole between
/// controller mutations.
class TableSnapshot {
 public:
  explicit TableSnapshot(const OverlayTree& tree) : tree_(&tree) {
    const auto& topo = tree.topology();
    tables_.resize(topo.nodes.size());
    for (std::size_t i = 0; i < topo.nodes.size(); ++i) {
      const auto& n = topo.nodes[i];
      if (n.kind != NodeKind::Switch) continue;
      if (topo.app_switch && static_cast<int>(i) == *topo.app_switch)
        tables_[i] = tree.app_table();
      else
        tables_[i] = tree.table_of_node(tree.overlay_of_switch(static_cast<int>(i)));
    }
  }

  const FlowTable& table(int topo_switch) const {
    return tables_[static_cast<std::size_t>(topo_switch)];
  }
  FlowTable& mutable_table(int topo_switch) {  // fault injection in tests
    return tables_[static_cast<std::size_t>(topo_switch)];
  }

  /// Forwards a request hop by hop: the app-cluster port rule first, then
  /// per-switch LPM down the storage tree until a server is reached.
  RoutedPath route_request(const Packet& pkt, bool want_trace = false) const {
    RoutedPath out;
    const auto& topo = tree_->topology();
    if (pkt.kind != PacketKind::MetaflowRequest ||
        pkt.dst_port != tree_->config().flow_port) {
      out.status = RouteStatus::NormalTraffic;  // layer-2/3 forwarding, not ours
      return out;
    }
    int sw = topo.app_switch ? *topo.app_switch : pick_physical(tree_->root(), pkt);
    int guard = 0;
    while (true) {
      if (++guard > 16) throw Error("route_request: forwarding loop");
      out.hops.push_back(sw);
      const auto& tbl = table(sw);
      const int hit = tbl.lookup(pkt.dst_addr, pkt.dst_port);
      if (hit < 0) {
        out.status = RouteStatus::Miss;  // punt to controller, counted by caller
        out.miss_hop = sw;
        return out;
      }
      const auto& entry = tbl.entries[static_cast<std::size_t>(hit)];
      if (want_trace)
        out.trace.push_back({sw, format_block(entry.match), entry.target_name});
      const auto& target = tree_->node(entry.target);
      if (target.role == OverlayRole::Leaf) {
        out.status = RouteStatus::Delivered;
        out.server = target.physical.front();
        return out;
      }
      sw = pick_physical(entry.target, pkt);
    }
  }

  /// One CSV row per hop for debugging.
  static std::string trace_csv(const RoutedPath& path, const Topology& topo) {
    std::string out = "hop,switch,matched,action\n";
    for (std::size_t i = 0; i < path.trace.size(); ++i)
      out += std::to_string(i) + ',' + topo.node(path.trace[i].hop).name + ',' +
             path.trace[i].matched + ',' + path.trace[i].action + '\n';
    return out;
  }

 private:
  /// A logical node backed by several switches (core group, pod aggregation
  /// pair) sprays flows across them by a hash of (src, dst).
  int pick_physical(int overlay_node, const Packet& pkt) const {
    const auto& phys = tree_->node(overlay_node).physical;
    if (phys.size() == 1) return phys.front();
    std::uint64_t h = (static_cast<std::uint64_t>(pkt.src_addr) << 32) | pkt.dst_addr;
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdull;
    h ^= h >> 33;
    return phys[static_cast<std::size_t>(h % phys.size())];
  }

  const OverlayTree* tree_;
  std::vector<FlowTable> tables_;
};

}  // namespace metaflow
