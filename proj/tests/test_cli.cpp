// End-to-end checks of the command-line tool: exit codes, artifacts,
// determinism of repeated invocations.

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int exit_code;
  std::string out;
};

CliResult run_cli(const std::string& args) {
  const std::string cmd = std::string(METAFLOW_CLI_BIN) + " " + args + " 2>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) throw std::runtime_error("popen failed");
  std::string out;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, n);
  return {WEXITSTATUS(pclose(pipe)), out};
}

std::string source_path(const std::string& rel) {
  return std::string(METAFLOW_SOURCE_DIR) + "/" + rel;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("metaflow_cli_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run_cli("run").exit_code, 2);  // missing --config
  EXPECT_EQ(run_cli("run --config /nonexistent/f.cfg").exit_code, 2);
  EXPECT_EQ(run_cli("frobnicate --config x").exit_code, 2);  // unknown verb
  EXPECT_EQ(run_cli("run --config x --bogus-flag").exit_code, 2);
}

TEST(Cli, RuntimeErrorsExitOne) {
  const fs::path dir = temp_dir("err");
  const fs::path bad = dir / "bad.cfg";
  std::ofstream(bad) << "[scenario]\nname = broken\n";  // no seed
  EXPECT_EQ(run_cli("run --config " + bad.string()).exit_code, 1);
  std::ofstream(dir / "bad2.cfg") << "[scenario]\nseed = abc\n";
  EXPECT_EQ(run_cli("run --config " + (dir / "bad2.cfg").string()).exit_code, 1);
}

TEST(Cli, ValidateReportsCleanConfigs) {
  const auto ok = run_cli("validate --config " + source_path("configs/partition_demo.cfg"));
  EXPECT_EQ(ok.exit_code, 0);
  EXPECT_EQ(ok.out, "ok\n");
}

TEST(Cli, RunWritesCsvAndSummary) {
  const fs::path dir = temp_dir("run");
  const fs::path cfg = dir / "tiny.cfg";
  std::ofstream(cfg) << "[scenario]\nname = tiny\nseed = 5\nduration_s = 0.05\n"
                        "warmup_s = 0.01\nlatency_clients = 2\n"
                        "[topology]\nkind = fat-tree\nports = 4\npods = 1\ncores = 4\n"
                        "[service]\nkind = hashmod\n"
                        "[cost]\nserver_capacity = 1000\n"
                        "[workload]\nobjects = 500\n";
  const auto res = run_cli("run --config " + cfg.string() + " --out " + dir.string());
  EXPECT_EQ(res.exit_code, 0);
  EXPECT_NE(res.out.find("throughput_ops_s="), std::string::npos);
  const std::string csv = slurp(dir / "tiny.csv");
  EXPECT_NE(csv.find("scenario,service,profile"), std::string::npos);
  EXPECT_NE(csv.find("tiny,hashmod,redis"), std::string::npos);

  // identical command line twice: identical artifacts
  const auto res2 = run_cli("run --config " + cfg.string() + " --out " + dir.string());
  EXPECT_EQ(res2.out, res.out);
  EXPECT_EQ(slurp(dir / "tiny.csv"), csv);
}

TEST(Cli, ServiceAndSeedOverrides) {
  const fs::path dir = temp_dir("ovr");
  const fs::path cfg = dir / "o.cfg";
  std::ofstream(cfg) << "[scenario]\nname = o\nseed = 5\nduration_s = 0.05\nwarmup_s = 0.01\n"
                        "latency_clients = 2\nmeasure_saturation = false\n"
                        "[topology]\nkind = fat-tree\nports = 4\npods = 1\ncores = 4\n"
                        "[service]\nkind = hashmod\n"
                        "[workload]\nobjects = 500\n";
  const auto res = run_cli("run --config " + cfg.string() + " --out " + dir.string() +
                           " --service onehop --seed 99");
  EXPECT_EQ(res.exit_code, 0);
  const std::string csv = slurp(dir / "o.csv");
  EXPECT_NE(csv.find("o,onehop,redis"), std::string::npos);
  EXPECT_NE(csv.find(",99,"), std::string::npos);
}

TEST(Cli, SweepProducesPerScenarioCsvAndIndex) {
  const fs::path dir = temp_dir("sweep");
  const fs::path cfg = dir / "s.cfg";
  std::ofstream(cfg) << "[scenario]\nname = s\nseed = 5\nduration_s = 0.05\nwarmup_s = 0.01\n"
                        "latency_clients = 2\nmeasure_saturation = false\n"
                        "[topology]\nkind = fat-tree\nports = 8\npods = 2\ncores = 8\n"
                        "active_servers = 16\n"
                        "[service]\nkind = hashmod\n"
                        "[workload]\nobjects = 500\n";
  const auto res = run_cli("sweep --config " + cfg.string() + " --out " + dir.string() +
                           " --vary service=hashmod,onehop --vary servers=8,16");
  EXPECT_EQ(res.exit_code, 0);
  int csv_files = 0;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".csv" && e.path().filename() != "index.csv") ++csv_files;
  EXPECT_EQ(csv_files, 4);  // 2 services x 2 sizes
  const std::string index = slurp(dir / "index.csv");
  EXPECT_NE(index.find("service-hashmod"), std::string::npos);
  EXPECT_NE(index.find("service-onehop"), std::string::npos);
  EXPECT_NE(index.find("servers-8"), std::string::npos);
}

TEST(Cli, CalibratePrintsFrozenModel) {
  const fs::path dir = temp_dir("cal");
  const fs::path cfg = dir / "c.cfg";
  std::ofstream(cfg) << "[scenario]\nseed = 5\n"
                        "[topology]\nkind = fat-tree\nports = 8\npods = 2\ncores = 8\n"
                        "active_servers = 16\n";
  const auto res = run_cli("calibrate --config " + cfg.string() + " --target 0.7");
  EXPECT_EQ(res.exit_code, 0);
  EXPECT_NE(res.out.find("lookup_hop_cost="), std::string::npos);
  EXPECT_NE(res.out.find("calibrated against chord at 16 servers"), std::string::npos);
}

TEST(Cli, DumpTablesOnBootstrappedConfig) {
  const fs::path dir = temp_dir("dump");
  const fs::path cfg = dir / "d.cfg";
  std::ofstream(cfg) << "[scenario]\nseed = 5\n"
                        "[topology]\nkind = tier-tree\ntiers = 2\ncore_fanout = 2\n"
                        "edge_fanout = 2\n";
  const auto res = run_cli("dump-tables --config " + cfg.string());
  EXPECT_EQ(res.exit_code, 0);
  EXPECT_NE(res.out.find("== core0 ==\n0.0.0.0/0 9000 FORWARD"), std::string::npos);
}
