// metaflow-sim: scenario runner and flow-table inspector.
//
// Subcommands:
//   run          run one scenario, write its CSV + summary
//   sweep        run a cross product of --vary values through a worker pool
//   dump-tables  print every storage switch's flow table for a config
//   validate     check a config's topology and overlay state
//   calibrate    solve the lookup cost scalar against a reduction target

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "metaflow/config.hpp"
#include "metaflow/simengine.hpp"

namespace fs = std::filesystem;
using namespace metaflow;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string out_dir{"."};
  std::int64_t seed{-1};
  std::string service, profile;
};

ConfigOverrides overrides_of(const CommonOpts& o) {
  ConfigOverrides ov;
  if (o.seed >= 0) ov.seed = static_cast<std::uint64_t>(o.seed);
  if (!o.service.empty()) ov.service = config_detail::to_service(o.service);
  if (!o.profile.empty()) ov.profile = config_detail::to_profile(o.profile);
  return ov;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

int worker_count(std::size_t jobs) {
  unsigned n = std::thread::hardware_concurrency();
  if (const char* env = std::getenv("METAFLOW_SIM_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) n = static_cast<unsigned>(v);
  }
  if (n < 1) n = 1;
  return static_cast<int>(std::min<std::size_t>(n, jobs));
}

int cmd_run(const CommonOpts& opts) {
  const ScenarioConfig cfg = load_scenario_file(opts.config_path, overrides_of(opts));
  const MetricsReport report = run_scenario(cfg);
  fs::create_directories(opts.out_dir);
  write_file(fs::path(opts.out_dir) / (cfg.name + ".csv"),
             MetricsReport::csv_header() + "\n" + report.csv_row() + "\n");
  std::cout << report.summary();
  std::cout << "throughput_ops_s=" << report.throughput_ops_s << "\n";
  return 0;
}

int cmd_sweep(const CommonOpts& opts, const std::vector<std::string>& vary) {
  // expand the cross product of key=v1,v2,... specs
  std::vector<std::pair<std::string, std::vector<std::string>>> axes;
  for (const auto& spec : vary) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw ConfigError("sweep: --vary wants key=v1,v2,...");
    std::vector<std::string> values;
    std::string rest = spec.substr(eq + 1);
    std::size_t pos = 0;
    while (pos <= rest.size()) {
      const auto comma = rest.find(',', pos);
      values.push_back(rest.substr(pos, comma == std::string::npos ? rest.size() - pos
                                                                   : comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (values.empty()) throw ConfigError("sweep: empty value list in " + spec);
    axes.emplace_back(spec.substr(0, eq), values);
  }
  std::vector<std::vector<std::pair<std::string, std::string>>> combos{{}};
  for (const auto& [key, values] : axes) {
    std::vector<std::vector<std::pair<std::string, std::string>>> next;
    for (const auto& combo : combos)
      for (const auto& v : values) {
        auto c = combo;
        c.emplace_back(key, v);
        next.push_back(std::move(c));
      }
    combos = std::move(next);
  }

  std::ifstream in(opts.config_path, std::ios::binary);
  if (!in) throw ConfigError("config: cannot open " + opts.config_path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  fs::create_directories(opts.out_dir);
  std::vector<std::string> index_rows(combos.size());
  std::vector<std::string> errors;
  std::mutex err_mu;
  std::atomic<std::size_t> cursor{0};
  auto work = [&]() {
    for (std::size_t i = cursor.fetch_add(1); i < combos.size(); i = cursor.fetch_add(1)) {
      try {
        ConfigOverrides ov = overrides_of(opts);
        for (const auto& [k, v] : combos[i]) {
          if (k == "service") ov.service = config_detail::to_service(v);
          if (k == "profile") ov.profile = config_detail::to_profile(v);
        }
        ScenarioConfig cfg = load_scenario(text, ov);
        std::string tag;
        for (const auto& [k, v] : combos[i]) {
          if (k != "service" && k != "profile") apply_vary(cfg, k, v);
          tag += "_" + k + "-" + v;
        }
        char num[16];
        std::snprintf(num, sizeof num, "%03zu", i);
        cfg.name = "scenario_" + std::string(num) + tag;
        const MetricsReport report = run_scenario(cfg);
        write_file(fs::path(opts.out_dir) / (cfg.name + ".csv"),
                   MetricsReport::csv_header() + "\n" + report.csv_row() + "\n");
        index_rows[i] = cfg.name + ".csv," + report.csv_row();
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(err_mu);
        errors.push_back("combo " + std::to_string(i) + ": " + e.what());
      }
    }
  };
  std::vector<std::thread> pool;
  const int workers = worker_count(combos.size());
  for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (!errors.empty()) {
    for (const auto& e : errors) std::cerr << "error: " << e << "\n";
    return 1;
  }
  std::string index = "file," + MetricsReport::csv_header() + "\n";
  for (const auto& row : index_rows) index += row + "\n";
  write_file(fs::path(opts.out_dir) / "index.csv", index);
  std::cout << "sweep: " << combos.size() << " scenarios -> " << opts.out_dir << "\n";
  return 0;
}

int cmd_dump_tables(const CommonOpts& opts) {
  const ScenarioConfig cfg = load_scenario_file(opts.config_path, overrides_of(opts));
  const Topology topo = build_scenario_topology(cfg);
  OverlayTree tree(topo, cfg.overlay);
  if (!cfg.assigns.empty())
    tree.assign(cfg.assigns);
  else
    tree.bootstrap();
  for (const auto& d : cfg.placements) {
    const std::uint64_t span = d.hi - d.lo;
    for (std::uint64_t i = 0; i < d.count; ++i)
      tree.insert_object(MetaDataId{d.lo + static_cast<std::uint32_t>(i * span / d.count)});
  }
  std::cout << tree.dump_all_tables();
  return 0;
}

int cmd_validate(const CommonOpts& opts) {
  const ScenarioConfig cfg = load_scenario_file(opts.config_path, overrides_of(opts));
  cfg.check();
  const Topology topo = build_scenario_topology(cfg);
  std::vector<std::string> violations = validate(topo);
  if (!cfg.assigns.empty()) {
    OverlayTree tree(topo, cfg.overlay);
    tree.assign(cfg.assigns);
    const auto more = tree.validate_state();
    violations.insert(violations.end(), more.begin(), more.end());
  }
  if (violations.empty()) {
    std::cout << "ok\n";
    return 0;
  }
  for (const auto& v : violations) std::cout << v << "\n";
  return 1;
}

int cmd_calibrate(const CommonOpts& opts, double target) {
  const ScenarioConfig cfg = load_scenario_file(opts.config_path, overrides_of(opts));
  const Topology topo = build_scenario_topology(cfg);
  const int servers = topo.server_count(true);
  const CostModel frozen = calibrate(cfg.cost, servers, target);
  std::cout << "calibrated against chord at " << servers << " servers, target reduction "
            << target << "\n";
  std::cout << "io_cost=" << frozen.io_cost << "\n";
  std::cout << "lookup_hop_cost=" << frozen.lookup_hop_cost << "\n";
  std::cout << "nat_cost=" << frozen.nat_cost << "\n";
  std::cout << "server_capacity=" << frozen.server_capacity << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MetaFlow lookup-service simulator"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::vector<std::string> vary;
  double target = 0.70;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "scenario config file")->required();
    sub->add_option("--out", opts.out_dir, "output directory");
    sub->add_option("--seed", opts.seed, "override the config seed");
    sub->add_option("--service", opts.service, "override the lookup service");
    sub->add_option("--profile", opts.profile, "override the storage profile");
  };
  CLI::App* run = app.add_subcommand("run", "run one scenario");
  add_common(run);
  CLI::App* sweep = app.add_subcommand("sweep", "run a parameter sweep");
  add_common(sweep);
  sweep->add_option("--vary", vary, "key=v1,v2,... (repeatable; cross product)");
  CLI::App* dump = app.add_subcommand("dump-tables", "print per-switch flow tables");
  add_common(dump);
  CLI::App* val = app.add_subcommand("validate", "validate a scenario config");
  add_common(val);
  CLI::App* cal = app.add_subcommand("calibrate", "freeze the lookup cost scalar");
  add_common(cal);
  cal->add_option("--target", target, "target chord throughput reduction");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  try {
    if (!fs::exists(opts.config_path)) {
      std::cerr << "usage error: config file not found: " << opts.config_path << "\n";
      return 2;
    }
    if (run->parsed()) return cmd_run(opts);
    if (sweep->parsed()) return cmd_sweep(opts, vary);
    if (dump->parsed()) return cmd_dump_tables(opts);
    if (val->parsed()) return cmd_validate(opts);
    if (cal->parsed()) return cmd_calibrate(opts, target);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
