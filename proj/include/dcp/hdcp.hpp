#pragma once

#include <span>
#include <vector>

#include "dcp/graph.hpp"
#include "dcp/linalg.hpp"
#include "dcp/scores.hpp"

namespace dcp {

struct HdcpConfig {
  double alpha = 0.1;
  int num_levels = 1000;  // M
  double eta = 1.0;       // consensus rate, in (0,1]
  int iterations = 150;   // T
  int float_width = 64;

  void validate() const;
};

/// Row k holds device k's running histogram estimate x_k; initialized to
/// (K*n_k/n) * p_k so the row mean equals the global histogram.
struct HistogramState {
  Matrix x;  // K x M

  std::vector<double> column_means() const;
};

HistogramState hdcp_initial_state(const CalibrationData& cal, int num_levels);

/// One synchronous linear consensus round:
/// x_k <- x_k + eta * sum_j W_kj (x_j - x_k), with each neighbor value
/// rounded to the wire width before use.
void consensus_step(HistogramState& state, const ConsensusMatrix& w, const Topology& topo,
                    double eta, int float_width);

/// K*sqrt(2KM)*(1-eta*rho)^T / n * sqrt(max_k n_k^2 + (1/K) sum_j n_j^2).
double epsilon_hdcp(int num_nodes, int num_levels, long n, const std::vector<int>& device_sizes,
                    double eta, double rho, int iterations);

/// Smallest level m whose prefix sum reaches (1-alpha)(1+K/n) + eps; clamps
/// to M when the target exceeds 1 or when no prefix reaches it.
int select_quantile_index(std::span<const double> histogram, double alpha, int num_nodes, long n,
                          double eps);

struct HdcpResult {
  std::vector<int> m_alpha;        // per device, 1..M
  std::vector<double> thresholds;  // m_alpha / M
  double eps = 0.0;
  double target = 0.0;  // (1-alpha)(1+K/n)
  long long comm_bits = 0;
  std::vector<double> global_histogram;      // exact p (simulator view)
  std::vector<double> consensus_error_sq;    // sum_k ||x_k^(t) - p||^2 per round
  HistogramState state;                      // final x
};

/// Algorithm: local histograms, T consensus rounds, the epsilon margin from
/// the spectral gap, and one quantile index per device. Per-device
/// communication is T*M*f bits.
HdcpResult run_hdcp(const CalibrationData& cal, const HdcpConfig& cfg, const Topology& topo,
                    const ConsensusMatrix& w);

/// Labels whose quantized candidate score is at most m_k/M.
std::vector<int> hdcp_prediction_set(const TestInstance& test, int m_k, int num_levels);

struct AveragingResult {
  double value = 0.0;  // mean of the final node values
  int rounds = 0;
  double spread = 0.0;  // final max-min disagreement
};

/// Scalar fast-averaging pass used by the Q-DCP postprocessing step. Runs
/// until the node spread drops below tol, progress stalls (possible at
/// narrow wire widths), or the round cap is hit.
AveragingResult distributed_average(std::vector<double> values, const ConsensusMatrix& w,
                                    const Topology& topo, double eta, int float_width,
                                    double tol = 1e-9, int max_rounds = 100000);

}  // namespace dcp
