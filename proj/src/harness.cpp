#include "dcp/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "dcp/quantile.hpp"

namespace dcp {

std::string to_string(Method m) {
  switch (m) {
    case Method::centralized_cp: return "centralized_cp";
    case Method::fcp: return "fcp";
    case Method::qdcp: return "qdcp";
    case Method::hdcp: return "hdcp";
  }
  throw std::logic_error("unknown Method");
}

Method method_from_string(const std::string& name) {
  if (name == "centralized_cp") return Method::centralized_cp;
  if (name == "fcp") return Method::fcp;
  if (name == "qdcp") return Method::qdcp;
  if (name == "hdcp") return Method::hdcp;
  throw std::invalid_argument("unknown method: " + name);
}

EvalMetrics evaluate_coverage(const std::vector<std::vector<int>>& sets,
                              const std::vector<TestInstance>& tests) {
  if (tests.empty()) throw std::invalid_argument("evaluate_coverage: empty test list");
  if (sets.size() != tests.size())
    throw std::invalid_argument("evaluate_coverage: sets and tests misaligned");
  double hits = 0.0;
  double size = 0.0;
  for (std::size_t i = 0; i < tests.size(); ++i) {
    const auto& set = sets[i];
    if (std::find(set.begin(), set.end(), tests[i].true_label) != set.end()) hits += 1.0;
    size += static_cast<double>(set.size()) /
            static_cast<double>(tests[i].candidate_scores.size());
  }
  return {hits / static_cast<double>(tests.size()), size / static_cast<double>(tests.size())};
}

EvalMetrics evaluate_threshold(const std::vector<TestInstance>& tests, double threshold) {
  if (tests.empty()) throw std::invalid_argument("evaluate_threshold: empty test list");
  double hits = 0.0;
  double size = 0.0;
  for (const auto& t : tests) {
    long in_set = 0;
    for (double s : t.candidate_scores)
      if (s <= threshold) ++in_set;
    if (t.candidate_scores[static_cast<std::size_t>(t.true_label)] <= threshold) hits += 1.0;
    size += static_cast<double>(in_set) / static_cast<double>(t.candidate_scores.size());
  }
  return {hits / static_cast<double>(tests.size()), size / static_cast<double>(tests.size())};
}

EvalMetrics evaluate_quantized_threshold(const std::vector<TestInstance>& tests, int m,
                                         int num_levels) {
  if (tests.empty()) throw std::invalid_argument("evaluate_quantized_threshold: empty test list");
  double hits = 0.0;
  double size = 0.0;
  for (const auto& t : tests) {
    long in_set = 0;
    for (double s : t.candidate_scores)
      if (quantize_level(s, num_levels) <= m) ++in_set;
    if (quantize_level(t.candidate_scores[static_cast<std::size_t>(t.true_label)], num_levels) <=
        m)
      hits += 1.0;
    size += static_cast<double>(in_set) / static_cast<double>(t.candidate_scores.size());
  }
  return {hits / static_cast<double>(tests.size()), size / static_cast<double>(tests.size())};
}

long long comm_load(Method method, int iterations, int float_width, int num_levels) {
  if (float_width != 16 && float_width != 32 && float_width != 64)
    throw std::invalid_argument("comm_load: f must be 16, 32, or 64");
  switch (method) {
    case Method::qdcp: return static_cast<long long>(iterations) * float_width;
    case Method::hdcp:
      return static_cast<long long>(iterations) * static_cast<long long>(num_levels) *
             float_width;
    default: return 0;
  }
}

Topology TopologySpec::build(int num_nodes, std::uint64_t seed) const {
  TopologyParams params;
  params.torus_dims = torus_dims;
  params.edge_prob = edge_prob;
  params.seed = seed;
  return build_topology(kind, num_nodes, params);
}

std::string TopologySpec::label() const {
  std::string name = dcp::to_string(kind);
  if (kind == GraphKind::torus && torus_dims)
    name += "_" + std::to_string(torus_dims->first) + "x" + std::to_string(torus_dims->second);
  return name;
}

TopologySpec topology_spec_from_json(const nlohmann::json& j) {
  TopologySpec spec;
  if (j.is_string()) {
    spec.kind = graph_kind_from_string(j.get<std::string>());
    return spec;
  }
  spec.kind = graph_kind_from_string(j.at("kind").get<std::string>());
  if (j.contains("rows") && j.contains("cols"))
    spec.torus_dims = std::make_pair(j.at("rows").get<int>(), j.at("cols").get<int>());
  spec.edge_prob = j.value("edge_prob", spec.edge_prob);
  return spec;
}

QdcpConfig qdcp_config_from_json(const nlohmann::json& j) {
  QdcpConfig cfg;
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.iterations = j.value("T", cfg.iterations);
  cfg.penalty = j.value("c", cfg.penalty);
  cfg.spectral_penalty = j.value("spectral_penalty", cfg.spectral_penalty);
  if (j.contains("b_grid")) cfg.b_grid = j.at("b_grid").get<std::vector<double>>();
  cfg.kappa = j.value("kappa", cfg.kappa);
  cfg.mu = j.value("mu", cfg.mu);
  cfg.epsilon0 = j.value("epsilon0", cfg.epsilon0);
  const std::string anchor = j.value("s0_mode", std::string("avg_local_quantile"));
  if (anchor == "avg_local_quantile") {
    cfg.anchor_mode = QdcpConfig::AnchorMode::average_local_quantile;
  } else if (anchor == "explicit") {
    cfg.anchor_mode = QdcpConfig::AnchorMode::explicit_value;
    cfg.s0 = j.at("s0").get<double>();
  } else {
    throw std::invalid_argument("qdcp config: unknown s0_mode " + anchor);
  }
  cfg.float_width = j.value("float_width", cfg.float_width);
  const std::string ustar = j.value("u_star_mode", std::string("admm"));
  if (ustar == "admm") {
    cfg.u_star_mode = QdcpConfig::UStarMode::admm;
  } else if (ustar == "kkt") {
    cfg.u_star_mode = QdcpConfig::UStarMode::kkt;
  } else if (ustar == "explicit") {
    cfg.u_star_mode = QdcpConfig::UStarMode::explicit_distance;
    cfg.u0_distance_bound = j.at("u0_distance_bound").get<double>();
  } else {
    throw std::invalid_argument("qdcp config: unknown u_star_mode " + ustar);
  }
  cfg.log_every = j.value("log_every", cfg.log_every);
  return cfg;
}

nlohmann::json qdcp_config_to_json(const QdcpConfig& cfg) {
  nlohmann::json j;
  j["alpha"] = cfg.alpha;
  j["T"] = cfg.iterations;
  j["c"] = cfg.penalty;
  j["spectral_penalty"] = cfg.spectral_penalty;
  j["b_grid"] = cfg.b_grid;
  j["kappa"] = cfg.kappa;
  j["mu"] = cfg.mu;
  j["epsilon0"] = cfg.epsilon0;
  j["s0_mode"] = cfg.anchor_mode == QdcpConfig::AnchorMode::explicit_value
                     ? "explicit"
                     : "avg_local_quantile";
  if (cfg.anchor_mode == QdcpConfig::AnchorMode::explicit_value) j["s0"] = cfg.s0;
  j["float_width"] = cfg.float_width;
  switch (cfg.u_star_mode) {
    case QdcpConfig::UStarMode::admm: j["u_star_mode"] = "admm"; break;
    case QdcpConfig::UStarMode::kkt: j["u_star_mode"] = "kkt"; break;
    case QdcpConfig::UStarMode::explicit_distance:
      j["u_star_mode"] = "explicit";
      j["u0_distance_bound"] = cfg.u0_distance_bound;
      break;
  }
  j["log_every"] = cfg.log_every;
  return j;
}

HdcpConfig hdcp_config_from_json(const nlohmann::json& j) {
  HdcpConfig cfg;
  cfg.alpha = j.value("alpha", cfg.alpha);
  cfg.num_levels = j.value("M", cfg.num_levels);
  cfg.eta = j.value("eta", cfg.eta);
  cfg.iterations = j.value("T", cfg.iterations);
  cfg.float_width = j.value("float_width", cfg.float_width);
  cfg.validate();
  return cfg;
}

nlohmann::json hdcp_config_to_json(const HdcpConfig& cfg) {
  nlohmann::json j;
  j["alpha"] = cfg.alpha;
  j["M"] = cfg.num_levels;
  j["eta"] = cfg.eta;
  j["T"] = cfg.iterations;
  j["float_width"] = cfg.float_width;
  return j;
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  cfg.method = method_from_string(j.at("method").get<std::string>());
  cfg.num_nodes = j.value("K", cfg.num_nodes);
  if (j.contains("topologies"))
    for (const auto& t : j.at("topologies")) cfg.topologies.push_back(topology_spec_from_json(t));
  if (cfg.topologies.empty()) cfg.topologies.push_back(TopologySpec{});
  if (j.contains("data")) {
    const auto& data = j.at("data");
    if (data.contains("synthetic")) {
      cfg.data = synthetic_config_from_json(data.at("synthetic"));
    } else if (data.contains("calibration_csv")) {
      cfg.data_files = std::make_pair(data.at("calibration_csv").get<std::string>(),
                                      data.at("test_csv").get<std::string>());
    } else {
      throw std::invalid_argument("experiment config: data must be synthetic or csv paths");
    }
  }
  cfg.data.num_devices = cfg.num_nodes;
  if (j.contains("alpha_grid")) cfg.alpha_grid = j.at("alpha_grid").get<std::vector<double>>();
  if (j.contains("T_grid")) cfg.t_grid = j.at("T_grid").get<std::vector<int>>();
  if (j.contains("kappa_grid")) cfg.kappa_grid = j.at("kappa_grid").get<std::vector<double>>();
  if (j.contains("mu_grid")) cfg.mu_grid = j.at("mu_grid").get<std::vector<double>>();
  if (j.contains("M_grid")) cfg.m_grid = j.at("M_grid").get<std::vector<int>>();
  if (j.contains("qdcp")) cfg.qdcp = qdcp_config_from_json(j.at("qdcp"));
  if (j.contains("hdcp")) cfg.hdcp = hdcp_config_from_json(j.at("hdcp"));
  cfg.trials = j.value("trials", cfg.trials);
  cfg.base_seed = j.value("base_seed", cfg.base_seed);
  cfg.jobs = j.value("jobs", cfg.jobs);
  if (cfg.trials < 1) throw std::invalid_argument("experiment config: trials must be >= 1");
  if (cfg.alpha_grid.empty()) throw std::invalid_argument("experiment config: empty alpha grid");
  return cfg;
}

nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["method"] = to_string(cfg.method);
  j["K"] = cfg.num_nodes;
  nlohmann::json topos = nlohmann::json::array();
  for (const auto& t : cfg.topologies) {
    nlohmann::json tj;
    tj["kind"] = dcp::to_string(t.kind);
    if (t.torus_dims) {
      tj["rows"] = t.torus_dims->first;
      tj["cols"] = t.torus_dims->second;
    }
    if (t.kind == GraphKind::erdos_renyi) tj["edge_prob"] = t.edge_prob;
    topos.push_back(tj);
  }
  j["topologies"] = topos;
  if (cfg.data_files) {
    j["data"] = {{"calibration_csv", cfg.data_files->first},
                 {"test_csv", cfg.data_files->second}};
  } else {
    j["data"] = {{"synthetic", synthetic_config_to_json(cfg.data)}};
  }
  j["alpha_grid"] = cfg.alpha_grid;
  if (!cfg.t_grid.empty()) j["T_grid"] = cfg.t_grid;
  if (!cfg.kappa_grid.empty()) j["kappa_grid"] = cfg.kappa_grid;
  if (!cfg.mu_grid.empty()) j["mu_grid"] = cfg.mu_grid;
  if (!cfg.m_grid.empty()) j["M_grid"] = cfg.m_grid;
  j["qdcp"] = qdcp_config_to_json(cfg.qdcp);
  j["hdcp"] = hdcp_config_to_json(cfg.hdcp);
  j["trials"] = cfg.trials;
  j["base_seed"] = cfg.base_seed;
  j["jobs"] = cfg.jobs;
  return j;
}

namespace {

struct RowTask {
  std::size_t topology_index;
  double alpha;
  int iterations;
  double kappa;
  double mu;
  int num_levels;
  int trial;
};

EvalMetrics evaluate_hdcp(const HdcpResult& res, const std::vector<TestInstance>& tests,
                          int num_levels) {
  // Every device's set carries the guarantee; average the per-device metrics.
  EvalMetrics acc;
  for (int m : res.m_alpha) {
    const EvalMetrics one = evaluate_quantized_threshold(tests, m, num_levels);
    acc.coverage += one.coverage;
    acc.mean_norm_size += one.mean_norm_size;
  }
  const double k = static_cast<double>(res.m_alpha.size());
  return {acc.coverage / k, acc.mean_norm_size / k};
}

}  // namespace

std::vector<ResultRow> run_sweep(const ExperimentConfig& cfg) {
  std::vector<RowTask> tasks;
  std::vector<int> t_grid = cfg.t_grid;
  if (t_grid.empty())
    t_grid.push_back(cfg.method == Method::hdcp ? cfg.hdcp.iterations : cfg.qdcp.iterations);
  std::vector<double> kappa_grid = cfg.kappa_grid;
  if (kappa_grid.empty()) kappa_grid.push_back(cfg.qdcp.kappa);
  std::vector<double> mu_grid = cfg.mu_grid;
  if (mu_grid.empty()) mu_grid.push_back(cfg.qdcp.mu);
  std::vector<int> m_grid = cfg.m_grid;
  if (m_grid.empty()) m_grid.push_back(cfg.hdcp.num_levels);
  for (std::size_t topo = 0; topo < cfg.topologies.size(); ++topo)
    for (double alpha : cfg.alpha_grid)
      for (int iterations : t_grid)
        for (double kappa : kappa_grid)
          for (double mu : mu_grid)
            for (int num_levels : m_grid)
              for (int trial = 0; trial < cfg.trials; ++trial)
                tasks.push_back({topo, alpha, iterations, kappa, mu, num_levels, trial});

  std::optional<SyntheticData> file_data;
  if (cfg.data_files) {
    SyntheticData loaded;
    loaded.calibration = read_calibration_csv(cfg.data_files->first);
    loaded.tests = read_test_csv(cfg.data_files->second);
    file_data = std::move(loaded);
  }

  std::vector<ResultRow> rows(tasks.size());
  parallel_for(static_cast<int>(tasks.size()), cfg.jobs, [&](int index) {
    const RowTask& task = tasks[static_cast<std::size_t>(index)];
    ResultRow& row = rows[static_cast<std::size_t>(index)];
    const TopologySpec& spec = cfg.topologies[task.topology_index];
    row.method = to_string(cfg.method);
    row.topology = spec.label();
    row.num_nodes = cfg.num_nodes;
    row.alpha = task.alpha;
    row.trial = task.trial;
    const std::uint64_t seed = cfg.base_seed + static_cast<std::uint64_t>(task.trial);
    try {
      SyntheticData data;
      if (file_data) {
        data = *file_data;
      } else {
        SyntheticConfig synth = cfg.data;
        synth.num_devices = cfg.num_nodes;
        synth.seed = seed;
        data = generate_synthetic(synth);
      }
      if (data.calibration.num_devices() != cfg.num_nodes)
        throw std::invalid_argument("data has a different device count than the sweep K");

      switch (cfg.method) {
        case Method::centralized_cp: {
          const double threshold = split_cp_threshold(data.calibration.pooled(), task.alpha);
          const EvalMetrics m = evaluate_threshold(data.tests, threshold);
          row.coverage = m.coverage;
          row.norm_set_size = m.mean_norm_size;
          row.threshold_mean = threshold;
          break;
        }
        case Method::fcp: {
          const double threshold = fcp_centralized_threshold(data.calibration, task.alpha);
          const EvalMetrics m = evaluate_threshold(data.tests, threshold);
          row.coverage = m.coverage;
          row.norm_set_size = m.mean_norm_size;
          row.threshold_mean = threshold;
          break;
        }
        case Method::qdcp: {
          QdcpConfig qcfg = cfg.qdcp;
          qcfg.alpha = task.alpha;
          qcfg.iterations = task.iterations;
          qcfg.kappa = task.kappa;
          qcfg.mu = task.mu;
          const Topology topo = spec.build(cfg.num_nodes, seed);
          const QdcpResult res = run_qdcp(data.calibration, qcfg, topo);
          const EvalMetrics m = evaluate_threshold(data.tests, res.threshold);
          row.coverage = m.coverage;
          row.norm_set_size = m.mean_norm_size;
          row.threshold_mean = res.threshold;
          row.iterations = task.iterations;
          row.kappa = qcfg.kappa;
          row.mu = qcfg.mu;
          row.epsilon0 = qcfg.epsilon0;
          row.float_width = qcfg.float_width;
          row.comm_bits = res.comm_bits;
          break;
        }
        case Method::hdcp: {
          HdcpConfig hcfg = cfg.hdcp;
          hcfg.alpha = task.alpha;
          hcfg.iterations = task.iterations;
          hcfg.num_levels = task.num_levels;
          const Topology topo = spec.build(cfg.num_nodes, seed);
          const ConsensusMatrix w = best_constant_consensus(topo);
          const HdcpResult res = run_hdcp(data.calibration, hcfg, topo, w);
          const EvalMetrics m = evaluate_hdcp(res, data.tests, hcfg.num_levels);
          row.coverage = m.coverage;
          row.norm_set_size = m.mean_norm_size;
          double acc = 0.0;
          for (double t : res.thresholds) acc += t;
          row.threshold_mean = acc / static_cast<double>(res.thresholds.size());
          row.iterations = task.iterations;
          row.num_levels = hcfg.num_levels;
          row.float_width = hcfg.float_width;
          row.comm_bits = res.comm_bits;
          break;
        }
      }
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  });
  return rows;
}

std::vector<ResultRow> run_centralized_baselines(const CalibrationData& cal,
                                                 const std::vector<TestInstance>& tests,
                                                 double alpha) {
  std::vector<ResultRow> rows(2);
  rows[0].method = "centralized_cp";
  rows[1].method = "fcp";
  for (auto& row : rows) {
    row.topology = "-";
    row.num_nodes = cal.num_devices();
    row.alpha = alpha;
  }
  const double split = split_cp_threshold(cal.pooled(), alpha);
  const EvalMetrics ms = evaluate_threshold(tests, split);
  rows[0].coverage = ms.coverage;
  rows[0].norm_set_size = ms.mean_norm_size;
  rows[0].threshold_mean = split;
  const double fcp = fcp_centralized_threshold(cal, alpha);
  const EvalMetrics mf = evaluate_threshold(tests, fcp);
  rows[1].coverage = mf.coverage;
  rows[1].norm_set_size = mf.mean_norm_size;
  rows[1].threshold_mean = fcp;
  return rows;
}

const char* const kResultCsvHeader =
    "method,topology,K,alpha,T,M,kappa,mu,epsilon0,f,trial,coverage,norm_set_size,comm_bits,"
    "threshold_mean,error";

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

void write_rows_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << kResultCsvHeader << "\n";
  for (const auto& r : rows) {
    out << r.method << "," << r.topology << "," << r.num_nodes << "," << format_double(r.alpha)
        << ",";
    if (r.iterations > 0) out << r.iterations;
    out << ",";
    if (r.num_levels > 0) out << r.num_levels;
    out << ",";
    if (r.kappa > 0) out << format_double(r.kappa);
    out << ",";
    if (r.mu > 0) out << format_double(r.mu);
    out << ",";
    if (r.epsilon0 > 0) out << format_double(r.epsilon0);
    out << ",";
    if (r.float_width > 0) out << r.float_width;
    out << "," << r.trial << "," << format_double(r.coverage) << ","
        << format_double(r.norm_set_size) << "," << r.comm_bits << ","
        << format_double(r.threshold_mean) << "," << r.error << "\n";
  }
}

namespace {

struct Stats {
  double mean = 0.0, stddev = 0.0, lo95 = 0.0, hi95 = 0.0;
};

Stats stats_of(std::vector<double> values) {
  Stats s;
  const double n = static_cast<double>(values.size());
  for (double v : values) s.mean += v;
  s.mean /= n;
  for (double v : values) s.stddev += (v - s.mean) * (v - s.mean);
  s.stddev = values.size() > 1 ? std::sqrt(s.stddev / (n - 1.0)) : 0.0;
  std::sort(values.begin(), values.end());
  auto percentile = [&](double p) {
    const double idx = p * (n - 1.0);
    const std::size_t lo = static_cast<std::size_t>(idx);
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = idx - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
  };
  s.lo95 = percentile(0.025);
  s.hi95 = percentile(0.975);
  return s;
}

}  // namespace

nlohmann::json summarize_rows(const std::vector<ResultRow>& rows) {
  std::map<std::string, std::vector<const ResultRow*>> groups;
  for (const auto& r : rows) {
    if (!r.error.empty()) continue;
    std::ostringstream key;
    key << r.method << "|" << r.topology << "|" << format_double(r.alpha) << "|" << r.iterations
        << "|" << r.num_levels << "|" << r.float_width;
    groups[key.str()].push_back(&r);
  }
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [key, members] : groups) {
    std::vector<double> coverage, size;
    for (const ResultRow* r : members) {
      coverage.push_back(r->coverage);
      size.push_back(r->norm_set_size);
    }
    const Stats cs = stats_of(coverage);
    const Stats ss = stats_of(size);
    nlohmann::json entry;
    entry["method"] = members.front()->method;
    entry["topology"] = members.front()->topology;
    entry["alpha"] = members.front()->alpha;
    entry["T"] = members.front()->iterations;
    entry["M"] = members.front()->num_levels;
    entry["f"] = members.front()->float_width;
    entry["trials"] = members.size();
    entry["comm_bits"] = members.front()->comm_bits;
    entry["coverage"] = {{"mean", cs.mean}, {"std", cs.stddev}, {"band95", {cs.lo95, cs.hi95}}};
    entry["norm_set_size"] = {{"mean", ss.mean}, {"std", ss.stddev}, {"band95", {ss.lo95, ss.hi95}}};
    out.push_back(entry);
  }
  return out;
}

void parallel_for(int count, int jobs, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, count));
  if (jobs == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  workers.reserve(static_cast<std::size_t>(jobs));
  for (int w = 0; w < jobs; ++w) {
    workers.emplace_back([&]() {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace dcp
