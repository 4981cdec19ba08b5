// Command-line front end: graph inspection, data generation, single runs of
// the two decentralized protocols, centralized baselines, and sweeps.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dcp/graph.hpp"
#include "dcp/harness.hpp"
#include "dcp/hdcp.hpp"
#include "dcp/qdcp.hpp"
#include "dcp/quantile.hpp"
#include "dcp/scores.hpp"

namespace {

constexpr const char* kVersion = "0.1.0";

// Exit codes: 0 success, 2 bad usage, 3 unreadable/invalid config,
// 4 data validation failure, 5 runtime failure.
constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitData = 4;
constexpr int kExitRuntime = 5;

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  int log_every = 0;
  bool clip = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool needs_config) {
  auto* config = cmd->add_option("--config", args.config_path, "JSON config path");
  if (needs_config) config->required();
  cmd->add_option("--out", args.out_dir, "output directory (default: env DCP_OUT or '.')");
  cmd->add_option("--set", args.overrides, "config override KEY=VALUE (dot paths allowed)");
  cmd->add_option("--seed", args.seed, "base seed override");
  cmd->add_option("--jobs", args.jobs, "worker threads for sweeps");
  cmd->add_option("--log-every", args.log_every, "trajectory subsampling (0 = off)");
  cmd->add_flag("--clip", args.clip, "clip ingested scores into [0,1] instead of failing");
}

std::filesystem::path resolve_out_dir(const CommonArgs& args) {
  std::string dir = args.out_dir;
  if (dir.empty()) {
    if (const char* env = std::getenv("DCP_OUT")) dir = env;
  }
  if (dir.empty()) dir = ".";
  std::filesystem::create_directories(dir);
  return dir;
}

nlohmann::json load_config(const CommonArgs& args) {
  nlohmann::json j = nlohmann::json::object();
  if (!args.config_path.empty()) {
    std::ifstream in(args.config_path);
    if (!in) throw std::runtime_error("cannot open config " + args.config_path);
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(args.config_path + ": " + e.what());
    }
  }
  for (const std::string& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("override must be KEY=VALUE: " + kv);
    const std::string key = kv.substr(0, eq);
    const std::string raw = kv.substr(eq + 1);
    nlohmann::json value;
    try {
      value = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception&) {
      value = raw;  // plain string
    }
    nlohmann::json* node = &j;
    std::size_t start = 0;
    for (;;) {
      const std::size_t dot = key.find('.', start);
      const std::string part = key.substr(start, dot - start);
      if (dot == std::string::npos) {
        (*node)[part] = value;
        break;
      }
      node = &(*node)[part];
      start = dot + 1;
    }
  }
  if (args.seed) j["base_seed"] = *args.seed;
  return j;
}

void write_manifest(const std::filesystem::path& out_dir, const std::string& subcommand,
                    const nlohmann::json& resolved_config) {
  nlohmann::json manifest;
  manifest["tool"] = "dcpsim";
  manifest["version"] = kVersion;
  manifest["subcommand"] = subcommand;
  manifest["config"] = resolved_config;
  std::ofstream out(out_dir / "manifest.json");
  out << manifest.dump(2) << "\n";
}

dcp::Topology topology_from_config(const nlohmann::json& j, std::uint64_t seed) {
  if (!j.contains("topology_ref")) throw std::runtime_error("config needs a topology_ref");
  const auto& ref = j.at("topology_ref");
  if (ref.is_object() && ref.contains("edges")) return dcp::topology_from_json(ref);
  const dcp::TopologySpec spec = dcp::topology_spec_from_json(ref);
  int num_nodes = 0;
  if (ref.is_object() && ref.contains("K"))
    num_nodes = ref.at("K").get<int>();
  else
    num_nodes = j.at("K").get<int>();
  return spec.build(num_nodes, seed);
}

dcp::SyntheticData data_from_config(const nlohmann::json& j, std::uint64_t seed, bool clip) {
  if (j.contains("data")) {
    const auto& data = j.at("data");
    if (data.contains("synthetic")) {
      dcp::SyntheticConfig cfg = dcp::synthetic_config_from_json(data.at("synthetic"));
      cfg.seed = seed;
      return dcp::generate_synthetic(cfg);
    }
    dcp::IngestOptions opts;
    opts.clip = clip;
    dcp::SyntheticData out;
    out.calibration = dcp::read_calibration_csv(data.at("calibration_csv").get<std::string>(), opts);
    out.tests = dcp::read_test_csv(data.at("test_csv").get<std::string>(), opts);
    return out;
  }
  dcp::SyntheticConfig cfg;
  if (j.contains("K")) cfg.num_devices = j.at("K").get<int>();
  cfg.seed = seed;
  return dcp::generate_synthetic(cfg);
}

int cmd_inspect_graph(const CommonArgs& args, const std::string& kind, int num_nodes,
                      std::uint64_t seed, double edge_prob, int rows, int cols) {
  dcp::TopologySpec spec;
  spec.kind = dcp::graph_kind_from_string(kind);
  spec.edge_prob = edge_prob;
  if (rows > 0 && cols > 0) spec.torus_dims = std::make_pair(rows, cols);
  const dcp::Topology topo = spec.build(num_nodes, seed);
  const dcp::SpectralSummary s = dcp::spectral_summary(topo);
  const dcp::ConsensusMatrix w = dcp::best_constant_consensus(topo);
  std::cout << "kind: " << dcp::to_string(topo.kind) << "\n"
            << "K: " << topo.num_nodes << "\n"
            << "E: " << topo.num_edges() << "\n";
  std::cout << "degrees:";
  for (int d : topo.degrees()) std::cout << " " << d;
  std::cout << "\n";
  std::cout << "spectral_gap: " << w.spectral_gap << "\n"
            << "sigma_min_Mminus: " << s.sigma_min_m_minus << "\n"
            << "sigma_max_Mplus: " << s.sigma_max_m_plus << "\n"
            << "lambda1_L: " << s.lambda1_laplacian << "\n"
            << "lambda_Km1_L: " << s.lambda_km1_laplacian << "\n";
  if (!args.out_dir.empty()) {
    const auto out_dir = resolve_out_dir(args);
    std::ofstream out(out_dir / "topology.json");
    out << dcp::topology_to_json(topo).dump(2) << "\n";
  }
  return 0;
}

int cmd_gen_data(const CommonArgs& args) {
  const nlohmann::json config = load_config(args);
  dcp::SyntheticConfig cfg = config.contains("synthetic")
                                  ? dcp::synthetic_config_from_json(config.at("synthetic"))
                                  : dcp::synthetic_config_from_json(config);
  if (args.seed) cfg.seed = *args.seed;
  const dcp::SyntheticData data = dcp::generate_synthetic(cfg);
  const auto out_dir = resolve_out_dir(args);
  dcp::write_calibration_csv((out_dir / "calibration.csv").string(), data.calibration);
  dcp::write_test_csv((out_dir / "tests.csv").string(), data.tests);
  nlohmann::json resolved;
  resolved["synthetic"] = dcp::synthetic_config_to_json(cfg);
  write_manifest(out_dir, "gen-data", resolved);
  std::cout << "wrote " << (out_dir / "calibration.csv").string() << " ("
            << data.calibration.total() << " scores) and " << (out_dir / "tests.csv").string()
            << " (" << data.tests.size() << " tests)\n";
  return 0;
}

int cmd_run_qdcp(const CommonArgs& args) {
  nlohmann::json config = load_config(args);
  if (args.log_every > 0) config["log_every"] = args.log_every;
  dcp::QdcpConfig cfg = dcp::qdcp_config_from_json(config);
  const std::uint64_t seed = config.value("seed", config.value("base_seed", std::uint64_t{0}));
  const dcp::Topology topo = topology_from_config(config, seed);
  const dcp::SyntheticData data = data_from_config(config, seed, args.clip);
  const dcp::QdcpResult res = dcp::run_qdcp(data.calibration, cfg, topo);
  const dcp::EvalMetrics metrics = dcp::evaluate_threshold(data.tests, res.threshold);

  const auto out_dir = resolve_out_dir(args);
  nlohmann::json out;
  out["threshold"] = res.threshold;
  out["s_bar"] = res.s_bar;
  out["gamma"] = res.gamma;
  out["s0"] = res.s0;
  out["eps_T"] = res.bounds.eps_T;
  out["eps_tilde0"] = res.bounds.eps_tilde0;
  out["delta"] = res.bounds.delta;
  out["b"] = res.bounds.b;
  out["c"] = res.bounds.c;
  out["u0_distance_G"] = res.bounds.u0_distance;
  out["comm_bits"] = res.comm_bits;
  out["averaging_rounds"] = res.averaging_rounds;
  out["coverage"] = metrics.coverage;
  out["norm_set_size"] = metrics.mean_norm_size;
  std::ofstream(out_dir / "qdcp_result.json") << out.dump(2) << "\n";
  if (!res.trajectory.empty()) {
    std::ofstream traj(out_dir / "qdcp_trajectory.csv");
    traj << "t,s_bar,primal_residual,eps_T\n";
    traj.precision(12);
    for (const auto& p : res.trajectory)
      traj << p.t << "," << p.s_bar << "," << p.primal_residual << "," << p.eps_t << "\n";
  }
  config["resolved_s0"] = res.s0;
  write_manifest(out_dir, "run-qdcp", config);
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_run_hdcp(const CommonArgs& args) {
  nlohmann::json config = load_config(args);
  dcp::HdcpConfig cfg = dcp::hdcp_config_from_json(config);
  const std::uint64_t seed = config.value("seed", config.value("base_seed", std::uint64_t{0}));
  const dcp::Topology topo = topology_from_config(config, seed);
  const dcp::SyntheticData data = data_from_config(config, seed, args.clip);
  const dcp::ConsensusMatrix w = dcp::best_constant_consensus(topo);
  const dcp::HdcpResult res = dcp::run_hdcp(data.calibration, cfg, topo, w);

  double coverage = 0.0, size = 0.0, threshold_mean = 0.0;
  for (std::size_t k = 0; k < res.m_alpha.size(); ++k) {
    const dcp::EvalMetrics m =
        dcp::evaluate_quantized_threshold(data.tests, res.m_alpha[k], cfg.num_levels);
    coverage += m.coverage;
    size += m.mean_norm_size;
    threshold_mean += res.thresholds[k];
  }
  const double num = static_cast<double>(res.m_alpha.size());

  const auto out_dir = resolve_out_dir(args);
  std::ofstream per_device(out_dir / "hdcp_devices.csv");
  per_device << "device_id,m_alpha_k,threshold,eps_hdcp\n";
  per_device.precision(12);
  for (std::size_t k = 0; k < res.m_alpha.size(); ++k)
    per_device << k << "," << res.m_alpha[k] << "," << res.thresholds[k] << "," << res.eps << "\n";

  nlohmann::json out;
  out["eps_hdcp"] = res.eps;
  out["target"] = res.target;
  out["spectral_gap"] = w.spectral_gap;
  out["comm_bits"] = res.comm_bits;
  out["coverage"] = coverage / num;
  out["norm_set_size"] = size / num;
  out["threshold_mean"] = threshold_mean / num;
  std::ofstream(out_dir / "hdcp_result.json") << out.dump(2) << "\n";
  write_manifest(out_dir, "run-hdcp", config);
  std::cout << out.dump(2) << "\n";
  return 0;
}

int cmd_run_central(const CommonArgs& args) {
  nlohmann::json config = load_config(args);
  const double alpha = config.value("alpha", 0.1);
  const std::uint64_t seed = config.value("seed", config.value("base_seed", std::uint64_t{0}));
  const dcp::SyntheticData data = data_from_config(config, seed, args.clip);
  const auto rows = dcp::run_centralized_baselines(data.calibration, data.tests, alpha);
  const auto out_dir = resolve_out_dir(args);
  std::ofstream out(out_dir / "central.csv");
  dcp::write_rows_csv(out, rows);
  write_manifest(out_dir, "run-central", config);
  for (const auto& row : rows)
    std::cout << row.method << ": threshold=" << row.threshold_mean
              << " coverage=" << row.coverage << " size=" << row.norm_set_size << "\n";
  return 0;
}

int cmd_sweep(const CommonArgs& args) {
  nlohmann::json config = load_config(args);
  if (args.jobs > 1) config["jobs"] = args.jobs;
  const dcp::ExperimentConfig cfg = dcp::experiment_config_from_json(config);
  const std::vector<dcp::ResultRow> rows = dcp::run_sweep(cfg);
  const auto out_dir = resolve_out_dir(args);
  {
    std::ofstream out(out_dir / "sweep.csv");
    dcp::write_rows_csv(out, rows);
  }
  {
    std::ofstream out(out_dir / "summary.json");
    out << dcp::summarize_rows(rows).dump(2) << "\n";
  }
  write_manifest(out_dir, "sweep", dcp::experiment_config_to_json(cfg));
  int failures = 0;
  for (const auto& row : rows)
    if (!row.error.empty()) ++failures;
  std::cout << "sweep: " << rows.size() << " rows (" << failures << " failed) -> "
            << (out_dir / "sweep.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "dcpsim - decentralized conformal prediction simulator\n"
      "Exit codes: 0 ok, 2 usage, 3 config, 4 data, 5 runtime failure"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string kind = "chain";
  int num_nodes = 20;
  std::uint64_t graph_seed = 0;
  double edge_prob = 0.5;
  int rows = 0, cols = 0;

  auto* inspect = app.add_subcommand("inspect-graph", "print topology and spectral summary");
  inspect->add_option("--kind", kind, "chain|cycle|star|torus|complete|erdos_renyi")->required();
  inspect->add_option("--K", num_nodes, "number of nodes")->required();
  inspect->add_option("--graph-seed", graph_seed, "seed for erdos_renyi");
  inspect->add_option("--edge-prob", edge_prob, "edge probability for erdos_renyi");
  inspect->add_option("--rows", rows, "torus rows");
  inspect->add_option("--cols", cols, "torus cols");
  inspect->add_option("--out", args.out_dir, "write topology.json here");

  CommonArgs gen_args, qdcp_args, hdcp_args, central_args, sweep_args;
  auto* gen = app.add_subcommand("gen-data", "write synthetic calibration/test CSVs");
  add_common(gen, gen_args, false);
  auto* run_q = app.add_subcommand("run-qdcp", "single Q-DCP run");
  add_common(run_q, qdcp_args, true);
  auto* run_h = app.add_subcommand("run-hdcp", "single H-DCP run");
  add_common(run_h, hdcp_args, true);
  auto* run_c = app.add_subcommand("run-central", "centralized split-CP and FCP baselines");
  add_common(run_c, central_args, false);
  auto* sweep = app.add_subcommand("sweep", "cartesian experiment sweep");
  add_common(sweep, sweep_args, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (inspect->parsed())
      return cmd_inspect_graph(args, kind, num_nodes, graph_seed, edge_prob, rows, cols);
    if (gen->parsed()) return cmd_gen_data(gen_args);
    if (run_q->parsed()) return cmd_run_qdcp(qdcp_args);
    if (run_h->parsed()) return cmd_run_hdcp(hdcp_args);
    if (run_c->parsed()) return cmd_run_central(central_args);
    if (sweep->parsed()) return cmd_sweep(sweep_args);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
