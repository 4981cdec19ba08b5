#pragma once

#include <functional>
#include <span>
#include <vector>

#include "dcp/graph.hpp"
#include "dcp/quantile.hpp"
#include "dcp/scores.hpp"

namespace dcp {

struct QdcpConfig {
  double alpha = 0.1;
  int iterations = 1500;  // T
  double penalty = 1.0;   // ADMM c
  // When set, c is retuned per b-grid point to 2*sqrt(b)*L/(sigma_min*sigma_max),
  // the value that maximizes the second term of the rate parameter.
  bool spectral_penalty = false;
  std::vector<double> b_grid = {1.1, 1.5, 2.0, 4.0, 8.0};
  double kappa = 2000.0;
  double mu = 2000.0;
  double epsilon0 = 0.1;

  enum class AnchorMode { average_local_quantile, explicit_value };
  AnchorMode anchor_mode = AnchorMode::average_local_quantile;
  double s0 = 0.0;  // used when anchor_mode == explicit_value

  int float_width = 64;

  // How the reference optimum u* = (z*, lambda*) for the eps_T bound is
  // obtained. `admm` reruns the protocol to near-convergence (the default
  // oracle); `kkt` builds the same point analytically from the pooled
  // minimizer; `explicit_distance` trusts a caller-supplied bound on
  // ||u(0) - u*||_G.
  enum class UStarMode { admm, kkt, explicit_distance };
  UStarMode u_star_mode = UStarMode::admm;
  double u0_distance_bound = 0.0;

  int log_every = 0;  // 0 disables trajectory logging
};

struct QdcpState {
  std::vector<double> s;        // per node
  std::vector<double> z;        // per edge
  std::vector<double> lambda1;  // per edge, tail block
  std::vector<double> lambda2;  // per edge, head block
  int iteration = 0;
};

QdcpState qdcp_initial_state(const Topology& topo);

/// Incident edges of each node, split by whether the node is the edge tail
/// (the smaller endpoint) or head.
struct NodeEdges {
  std::vector<int> tail_edges;
  std::vector<int> head_edges;
};

std::vector<NodeEdges> build_node_edges(const Topology& topo);

/// Root of rho'_k(x) + c*d_k*x + r_k = 0 for one node; strictly increasing in
/// x, solved by safeguarded Newton to |residual| <= 1e-10*(1+n_k).
double qdcp_node_solve(std::span<const double> scores, const PinballParams& pin,
                       double c_times_degree, double offset, double warm_start);

/// Synchronous s-update: each node reads its own scores plus the z/lambda
/// entries of its incident edges.
void qdcp_s_update(QdcpState& state, const CalibrationData& cal,
                   const std::vector<NodeEdges>& node_edges, const PinballParams& pin, double c);

/// z_q = (c*(s_i + s_j) + lambda1_q + lambda2_q) / (2c), with the s values
/// rounded to the wire width.
void qdcp_z_update(QdcpState& state, const Topology& topo, double c, int float_width);

/// lambda1_q += c*(s_i - z_q); lambda2_q += c*(s_j - z_q).
void qdcp_lambda_update(QdcpState& state, const Topology& topo, double c, int float_width);

/// ||A s + B z||_2 evaluated with full-precision s (simulator view).
double qdcp_primal_residual(const QdcpState& state, const Topology& topo);

/// sqrt(c*||z||^2 + ||lambda_tilde||^2 / c).
double g_norm(double c, std::span<const double> z, std::span<const double> lambda_tilde);

/// Rate parameter of the linear-convergence bound for given (c, b).
double qdcp_delta(const SpectralSummary& spectral, double c, double b, double smoothness,
                  double mu);

struct DeltaChoice {
  double delta = 0.0;
  double b = 0.0;
  double c = 0.0;
};

/// Maximizes delta over the configured b grid (and retunes c when
/// spectral_penalty is set).
DeltaChoice qdcp_best_delta(const SpectralSummary& spectral, const QdcpConfig& cfg,
                            double smoothness);

struct UStar {
  std::vector<double> z;
  std::vector<double> lambda_tilde;
  double s_hat = 0.0;  // minimizer of the smoothed decentralized problem
};

/// Oracle reference optimum from running ADMM to near-convergence.
UStar qdcp_u_star_reference(const CalibrationData& cal, const Topology& topo,
                            const PinballParams& pin, double c, double primal_tol = 1e-10,
                            double change_tol = 1e-12, long max_iterations = 100000);

/// Analytic optimum: z* = s_hat * 1 with s_hat the pooled smoothed minimizer
/// (with K regularizer copies), and the dual solving M_minus * lambda = -grad
/// in the range space of M_minus^T, which is where ADMM's duals live when
/// initialized at zero.
UStar qdcp_u_star_kkt(const CalibrationData& cal, const Topology& topo, const PinballParams& pin);

/// Convergence-error bound sqrt(1/(K*mu)) * (1+delta)^(-(T-1)/2) * u0_distance.
double qdcp_epsilon_T(double delta, double u0_distance, int num_nodes, double mu, int T);

struct QdcpTrajectoryPoint {
  int t = 0;
  double s_bar = 0.0;  // exact mean of node estimates
  double primal_residual = 0.0;
  double eps_t = 0.0;
};

struct QdcpBounds {
  double delta = 0.0;
  double b = 0.0;
  double c = 0.0;
  double eps_T = 0.0;
  double eps_tilde0 = 0.0;
  double u0_distance = 0.0;
  UStar u_star;
};

struct QdcpResult {
  double threshold = 0.0;  // s_bar + eps_T + eps_tilde0
  double s_bar = 0.0;      // after the final distributed averaging
  double s_bar_exact = 0.0;
  double gamma = 0.0;
  double s0 = 0.0;  // resolved anchor
  QdcpBounds bounds;
  long long comm_bits = 0;
  int averaging_rounds = 0;
  double averaging_spread = 0.0;
  std::vector<QdcpTrajectoryPoint> trajectory;
  QdcpState state;
};

using QdcpObserver = std::function<void(int t, const QdcpState&)>;

/// Algorithm: T rounds of s/z/lambda updates from zero initialization, a
/// distributed-averaging pass over the final node estimates, and the
/// threshold s_bar + eps_T + eps_tilde0. Per-device communication is T*f bits
/// (averaging rounds are reported separately).
QdcpResult run_qdcp(const CalibrationData& cal, const QdcpConfig& cfg, const Topology& topo,
                    const QdcpObserver& observer = {});

/// Labels whose candidate score is at most the threshold; every label when
/// the threshold is the +inf sentinel.
std::vector<int> qdcp_prediction_set(const TestInstance& test, double threshold);

}  // namespace dcp
