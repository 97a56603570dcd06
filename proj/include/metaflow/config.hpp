#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "metaflow/simengine.hpp"

namespace metaflow {

namespace config_detail {

struct IniLine {
  std::string key, value;
};
using IniDoc = std::vector<std::pair<std::string, std::vector<IniLine>>>;  // section order kept

inline std::string trim(std::string_view s) {
  std::size_t a = 0, b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r')) --b;
  return std::string(s.substr(a, b - a));
}

inline IniDoc parse_ini(std::string_view text) {
  IniDoc doc;
  std::string section;
  std::size_t pos = 0;
  int lineno = 0;
  while (pos <= text.size()) {
    const std::size_t eol = text.find('\n', pos);
    std::string_view raw = text.substr(pos, eol == std::string_view::npos ? text.size() - pos
                                                                          : eol - pos);
    pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
    ++lineno;
    const std::size_t hash = raw.find('#');
    if (hash != std::string_view::npos) raw = raw.substr(0, hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(lineno) + ": bad section header");
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      doc.emplace_back(section, std::vector<IniLine>{});
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    if (doc.empty() || doc.back().first != section) doc.emplace_back(section, std::vector<IniLine>{});
    doc.back().second.push_back(
        {trim(std::string_view(line).substr(0, eq)), trim(std::string_view(line).substr(eq + 1))});
  }
  return doc;
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

inline double to_double(const std::string& v, const std::string& key) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config: bad number for " + key + ": '" + v + "'");
  }
}

inline std::int64_t to_int(const std::string& v, const std::string& key) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer for " + key + ": '" + v + "'");
  }
}

inline bool to_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw ConfigError("config: bad boolean for " + key + ": '" + v + "'");
}

inline LookupService to_service(const std::string& v) {
  if (v == "metaflow") return LookupService::Metaflow;
  if (v == "chord") return LookupService::Chord;
  if (v == "onehop") return LookupService::OneHop;
  if (v == "hashmod") return LookupService::HashMod;
  if (v == "central") return LookupService::Central;
  if (v == "ideal") return LookupService::Ideal;
  throw ConfigError("config: unknown lookup service '" + v + "'");
}

inline StorageProfile to_profile(const std::string& v) {
  if (v == "redis") return StorageProfile::Redis;
  if (v == "leveldb-ssd") return StorageProfile::LevelDbSsd;
  if (v == "leveldb-hdd") return StorageProfile::LevelDbHdd;
  if (v == "mysql") return StorageProfile::Mysql;
  throw ConfigError("config: unknown storage profile '" + v + "'");
}

inline void parse_explicit_node(Topology& topo, const std::string& key, const std::string& value) {
  const auto toks = split_ws(value);
  if (key == "switch") {
    if (toks.size() < 2) throw ConfigError("config: switch needs '<name> <layer>'");
    Layer layer;
    if (toks[1] == "core") layer = Layer::Core;
    else if (toks[1] == "aggregation" || toks[1] == "agg") layer = Layer::Aggregation;
    else if (toks[1] == "edge") layer = Layer::Edge;
    else throw ConfigError("config: unknown switch layer '" + toks[1] + "'");
    PhysicalNode n{toks[0], NodeKind::Switch, layer, 2, -1, 0, true};
    for (std::size_t i = 2; i < toks.size(); ++i)
      if (toks[i].rfind("pod=", 0) == 0) n.pod = static_cast<int>(to_int(toks[i].substr(4), key));
    topo.add_node(std::move(n));
  } else {  // server
    if (toks.empty()) throw ConfigError("config: server needs a name");
    PhysicalNode n{toks[0], NodeKind::Server, Layer::Edge, 0, -1, 0, true};
    for (std::size_t i = 1; i < toks.size(); ++i) {
      if (toks[i].rfind("addr=", 0) == 0) n.phys_addr = parse_id(toks[i].substr(5)).value;
      else if (toks[i] == "inactive") n.active = false;
      else throw ConfigError("config: bad server attribute '" + toks[i] + "'");
    }
    topo.add_node(std::move(n));
  }
}

}  // namespace config_detail

struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<LookupService> service;
  std::optional<StorageProfile> profile;
};

inline ScenarioConfig load_scenario(const std::string& text, const ConfigOverrides& ov = {}) {
  using namespace config_detail;
  const IniDoc doc = parse_ini(text);
  ScenarioConfig cfg;

  // first pass: service/profile so cost overrides layer on top of the profile
  for (const auto& [section, lines] : doc) {
    if (section != "service") continue;
    for (const auto& l : lines) {
      if (l.key == "kind") cfg.service = to_service(l.value);
      else if (l.key == "profile") cfg.profile = to_profile(l.value);
      else throw ConfigError("config: unknown key service." + l.key);
    }
  }
  if (ov.service) cfg.service = *ov.service;
  if (ov.profile) cfg.profile = *ov.profile;
  cfg.cost = profile_cost(cfg.profile);

  Topology explicit_topo;
  std::vector<std::pair<std::string, std::string>> explicit_links;
  std::string app_switch_name;
  bool has_explicit = false;

  for (const auto& [section, lines] : doc) {
    for (const auto& l : lines) {
      const std::string& k = l.key;
      const std::string& v = l.value;
      if (section == "scenario") {
        if (k == "name") cfg.name = v;
        else if (k == "seed") { cfg.seed = static_cast<std::uint64_t>(to_int(v, k)); cfg.seed_set = true; }
        else if (k == "duration_s") cfg.duration_s = to_double(v, k);
        else if (k == "warmup_s") cfg.warmup_s = to_double(v, k);
        else if (k == "latency_clients") cfg.latency_clients = static_cast<int>(to_int(v, k));
        else if (k == "measure_saturation") cfg.measure_saturation = to_bool(v, k);
        else throw ConfigError("config: unknown key scenario." + k);
      } else if (section == "topology") {
        if (k == "kind") {
          if (v == "fat-tree") cfg.topo_kind = TopologyKind::FatTree;
          else if (v == "tier-tree") cfg.topo_kind = TopologyKind::ThreeTier;
          else if (v == "explicit") { cfg.topo_kind = TopologyKind::Explicit; has_explicit = true; }
          else throw ConfigError("config: unknown topology kind '" + v + "'");
        }
        else if (k == "ports") cfg.ports = static_cast<int>(to_int(v, k));
        else if (k == "pods") cfg.pods = static_cast<int>(to_int(v, k));
        else if (k == "cores") cfg.cores = static_cast<int>(to_int(v, k));
        else if (k == "tiers") cfg.tiers = static_cast<int>(to_int(v, k));
        else if (k == "core_fanout") cfg.core_fanout = static_cast<int>(to_int(v, k));
        else if (k == "agg_fanout") cfg.agg_fanout = static_cast<int>(to_int(v, k));
        else if (k == "edge_fanout") cfg.edge_fanout = static_cast<int>(to_int(v, k));
        else if (k == "active_servers") cfg.active_servers = static_cast<int>(to_int(v, k));
        else if (k == "switch" || k == "server") parse_explicit_node(explicit_topo, k, v);
        else if (k == "link") {
          const auto toks = split_ws(v);
          if (toks.size() != 2) throw ConfigError("config: link needs '<a> <b>'");
          explicit_links.emplace_back(toks[0], toks[1]);
        }
        else if (k == "app_switch") app_switch_name = v;
        else throw ConfigError("config: unknown key topology." + k);
      } else if (section == "service") {
        // handled in the first pass
      } else if (section == "cost") {
        if (k == "io_cost") cfg.cost.io_cost = to_double(v, k);
        else if (k == "lookup_hop_cost") cfg.cost.lookup_hop_cost = to_double(v, k);
        else if (k == "nat_cost") cfg.cost.nat_cost = to_double(v, k);
        else if (k == "server_capacity") cfg.cost.server_capacity = to_double(v, k);
        else if (k == "io_latency_us") cfg.cost.io_latency = to_double(v, k) * 1e-6;
        else if (k == "lookup_latency_us") cfg.cost.lookup_latency = to_double(v, k) * 1e-6;
        else if (k == "nat_latency_us") cfg.cost.nat_latency = to_double(v, k) * 1e-6;
        else if (k == "link_latency_us") cfg.cost.link_latency = to_double(v, k) * 1e-6;
        else throw ConfigError("config: unknown key cost." + k);
      } else if (section == "overlay") {
        if (k == "leaf_capacity") cfg.overlay.leaf_capacity = static_cast<std::uint64_t>(to_int(v, k));
        else if (k == "split_lo") cfg.overlay.split_lo = to_double(v, k);
        else if (k == "split_hi") cfg.overlay.split_hi = to_double(v, k);
        else if (k == "flow_port") cfg.overlay.flow_port = static_cast<std::uint16_t>(to_int(v, k));
        else if (k == "table_capacity") cfg.overlay.table_capacity = static_cast<std::size_t>(to_int(v, k));
        else if (k == "strict_paper") cfg.overlay.strict_paper = to_bool(v, k);
        else if (k == "log_inserts") cfg.overlay.log_inserts = to_bool(v, k);
        else if (k == "id_bits") {
          if (to_int(v, k) != 32)
            throw ConfigError("config: only 32-bit identifiers are supported (got id_bits = " + v + ")");
        }
        else if (k == "assign") {
          const auto toks = split_ws(v);
          if (toks.size() < 2) throw ConfigError("config: assign needs '<leaf> <block>...'");
          std::vector<CidrBlock> blocks;
          for (std::size_t i = 1; i < toks.size(); ++i) blocks.push_back(parse_block(toks[i]));
          cfg.assigns.emplace_back(toks[0], std::move(blocks));
        }
        else throw ConfigError("config: unknown key overlay." + k);
      } else if (section == "workload") {
        if (k == "objects") cfg.objects = static_cast<std::uint64_t>(to_int(v, k));
        else if (k == "get_fraction") cfg.get_fraction = to_double(v, k);
        else if (k == "file_object_bytes") cfg.file_object_bytes = static_cast<int>(to_int(v, k));
        else if (k == "dir_object_bytes") cfg.dir_object_bytes = static_cast<int>(to_int(v, k));
        else if (k == "place") {
          const auto toks = split_ws(v);
          if (toks.size() != 3) throw ConfigError("config: place needs '<count> <lo> <hi>'");
          PlaceDirective d;
          d.count = static_cast<std::uint64_t>(to_int(toks[0], k));
          d.lo = parse_id(toks[1]).value;
          const std::string& hi = toks[2];
          d.hi = hi == "end" ? kIdSpace : parse_id(hi).value;
          if (d.hi <= d.lo) throw ConfigError("config: place range is empty");
          cfg.placements.push_back(d);
        }
        else throw ConfigError("config: unknown key workload." + k);
      } else if (section == "dfs") {
        if (k == "data_bandwidth_bytes_s") cfg.data_bandwidth = to_double(v, k);
        else if (k == "md_servers") cfg.dfs_md_servers = static_cast<int>(to_int(v, k));
        else if (k == "rho_cap") cfg.dfs_rho_cap = to_double(v, k);
        else throw ConfigError("config: unknown key dfs." + k);
      } else {
        throw ConfigError("config: unknown section [" + section + "]");
      }
    }
  }

  if (has_explicit) {
    for (const auto& [a, b] : explicit_links) {
      const int ia = explicit_topo.index_of(a), ib = explicit_topo.index_of(b);
      if (ia < 0 || ib < 0) throw ConfigError("config: link references unknown node " +
                                              (ia < 0 ? a : b));
      explicit_topo.add_link(ia, ib);
    }
    for (auto& n : explicit_topo.nodes) {  // port counts from degree
      if (n.kind != NodeKind::Switch) continue;
      int deg = 0;
      for (auto [x, y] : explicit_topo.links)
        deg += (explicit_topo.nodes[static_cast<std::size_t>(x)].name == n.name) +
               (explicit_topo.nodes[static_cast<std::size_t>(y)].name == n.name);
      n.port_count = std::max(2, deg);
    }
    explicit_topo.kind = TopologyKind::Explicit;
    if (!app_switch_name.empty()) attach_app_switch(explicit_topo, app_switch_name);
    cfg.explicit_topo = std::move(explicit_topo);
  } else if (!app_switch_name.empty()) {
    throw ConfigError("config: app_switch is only valid for explicit topologies");
  }

  if (ov.seed) { cfg.seed = *ov.seed; cfg.seed_set = true; }
  return cfg;
}

inline ScenarioConfig load_scenario_file(const std::string& path, const ConfigOverrides& ov = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return load_scenario(buf.str(), ov);
}

/// Sweep support: mutates one scalar knob on a loaded config.
inline void apply_vary(ScenarioConfig& cfg, const std::string& key, const std::string& value) {
  using namespace config_detail;
  if (key == "servers") cfg.active_servers = static_cast<int>(to_int(value, key));
  else if (key == "objects") cfg.objects = static_cast<std::uint64_t>(to_int(value, key));
  else if (key == "clients") cfg.latency_clients = static_cast<int>(to_int(value, key));
  else if (key == "seed") { cfg.seed = static_cast<std::uint64_t>(to_int(value, key)); cfg.seed_set = true; }
  else if (key == "capacity") cfg.overlay.leaf_capacity = static_cast<std::uint64_t>(to_int(value, key));
  else if (key == "service") cfg.service = to_service(value);
  else if (key == "profile") {
    const CostModel fresh = profile_cost(to_profile(value));
    cfg.profile = to_profile(value);
    cfg.cost.io_cost = fresh.io_cost;      // keep calibrated lookup scalar
    cfg.cost.io_latency = fresh.io_latency;
  }
  else throw ConfigError("sweep: unknown vary key '" + key + "'");
}

}  // namespace metaflow
