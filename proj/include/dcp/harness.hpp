#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dcp/graph.hpp"
#include "dcp/hdcp.hpp"
#include "dcp/qdcp.hpp"
#include "dcp/scores.hpp"

namespace dcp {

enum class Method { centralized_cp, fcp, qdcp, hdcp };

std::string to_string(Method m);
Method method_from_string(const std::string& name);

struct EvalMetrics {
  double coverage = 0.0;
  double mean_norm_size = 0.0;
};

/// Fraction of tests whose true label is in its set, and mean |set|/|Y|.
EvalMetrics evaluate_coverage(const std::vector<std::vector<int>>& sets,
                              const std::vector<TestInstance>& tests);

/// Metrics for the set {y : s(X,y) <= threshold} without materializing sets.
EvalMetrics evaluate_threshold(const std::vector<TestInstance>& tests, double threshold);

/// Metrics for the quantized set {y : quantize(s(X,y), M) <= m/M}.
EvalMetrics evaluate_quantized_threshold(const std::vector<TestInstance>& tests, int m,
                                         int num_levels);

/// Per-device total in bits: T*f for Q-DCP, T*M*f for H-DCP, 0 otherwise.
long long comm_load(Method method, int iterations, int float_width, int num_levels = 0);

/// Topology recipe a sweep row instantiates (Erdos-Renyi draws fresh edges
/// per trial from the trial seed).
struct TopologySpec {
  GraphKind kind = GraphKind::chain;
  std::optional<std::pair<int, int>> torus_dims;
  double edge_prob = 0.5;

  Topology build(int num_nodes, std::uint64_t seed) const;
  std::string label() const;
};

TopologySpec topology_spec_from_json(const nlohmann::json& j);

struct ExperimentConfig {
  Method method = Method::hdcp;
  int num_nodes = 20;
  std::vector<TopologySpec> topologies;
  SyntheticConfig data;
  std::optional<std::pair<std::string, std::string>> data_files;  // calibration, tests
  std::vector<double> alpha_grid = {0.1};
  std::vector<int> t_grid;
  // Ablation grids; empty means "use the method config's single value".
  std::vector<double> kappa_grid;
  std::vector<double> mu_grid;
  std::vector<int> m_grid;
  QdcpConfig qdcp;
  HdcpConfig hdcp;
  int trials = 10;
  std::uint64_t base_seed = 0;
  int jobs = 1;
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg);

QdcpConfig qdcp_config_from_json(const nlohmann::json& j);
nlohmann::json qdcp_config_to_json(const QdcpConfig& cfg);
HdcpConfig hdcp_config_from_json(const nlohmann::json& j);
nlohmann::json hdcp_config_to_json(const HdcpConfig& cfg);

struct ResultRow {
  std::string method;
  std::string topology;
  int num_nodes = 0;
  double alpha = 0.0;
  int iterations = 0;   // 0 for centralized methods
  int num_levels = 0;   // 0 unless H-DCP
  double kappa = 0.0, mu = 0.0, epsilon0 = 0.0;  // Q-DCP only
  int float_width = 0;
  int trial = 0;
  double coverage = 0.0;
  double norm_set_size = 0.0;
  long long comm_bits = 0;
  double threshold_mean = 0.0;
  std::string error;  // empty on success
};

/// Cartesian sweep over topologies x alpha grid x T grid x trials. Each trial
/// reseeds the data with base_seed + trial; failures are recorded per row and
/// the sweep continues. Row order is the configuration order, independent of
/// scheduling.
std::vector<ResultRow> run_sweep(const ExperimentConfig& cfg);

/// Split CP and FCP rows on already-materialized data.
std::vector<ResultRow> run_centralized_baselines(const CalibrationData& cal,
                                                 const std::vector<TestInstance>& tests,
                                                 double alpha);

extern const char* const kResultCsvHeader;
void write_rows_csv(std::ostream& out, const std::vector<ResultRow>& rows);

/// Per-configuration mean/std and empirical 95% band across trials.
nlohmann::json summarize_rows(const std::vector<ResultRow>& rows);

/// Runs fn(0..count-1) on `jobs` threads; exceptions propagate.
void parallel_for(int count, int jobs, const std::function<void(int)>& fn);

}  // namespace dcp
