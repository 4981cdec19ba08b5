#include "dcp/qdcp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "dcp/hdcp.hpp"
#include "dcp/wire.hpp"

namespace dcp {

QdcpState qdcp_initial_state(const Topology& topo) {
  QdcpState state;
  state.s.assign(static_cast<std::size_t>(topo.num_nodes), 0.0);
  state.z.assign(topo.edges.size(), 0.0);
  state.lambda1.assign(topo.edges.size(), 0.0);
  state.lambda2.assign(topo.edges.size(), 0.0);
  return state;
}

std::vector<NodeEdges> build_node_edges(const Topology& topo) {
  std::vector<NodeEdges> ne(static_cast<std::size_t>(topo.num_nodes));
  for (int q = 0; q < topo.num_edges(); ++q) {
    ne[static_cast<std::size_t>(topo.edges[static_cast<std::size_t>(q)].first)]
        .tail_edges.push_back(q);
    ne[static_cast<std::size_t>(topo.edges[static_cast<std::size_t>(q)].second)]
        .head_edges.push_back(q);
  }
  return ne;
}

double qdcp_node_solve(std::span<const double> scores, const PinballParams& pin,
                       double c_times_degree, double offset, double warm_start) {
  auto f = [&](double x) {
    return smoothed_pinball_derivative(x, scores, pin) + c_times_degree * x + offset;
  };
  auto df = [&](double x) {
    return smoothed_pinball(x, scores, pin).second + c_times_degree;
  };
  const double tol = 1e-10 * (1.0 + static_cast<double>(scores.size()));

  // Warm starts from the previous round usually land within a few Newton
  // steps; fall back to the bracketed solver when they do not.
  double x = warm_start;
  for (int it = 0; it < 10; ++it) {
    const auto [first, second] = smoothed_pinball_slope(x, scores, pin);
    const double fx = first + c_times_degree * x + offset;
    if (std::abs(fx) <= tol) return x;
    const double step = fx / (second + c_times_degree);
    if (!std::isfinite(step) || std::abs(step) > 1.0) break;
    x -= step;
  }

  const auto [min_it, max_it] = std::minmax_element(scores.begin(), scores.end());
  double lo = std::min({*min_it - 1.0, pin.s0, warm_start});
  double hi = std::max({*max_it + 1.0, pin.s0, warm_start});
  // The edge offsets can push the root outside the score range; expand until
  // the bracket straddles the sign change.
  double step = hi - lo;
  int guard = 0;
  while (f(lo) > 0.0) {
    lo -= step;
    step *= 2.0;
    if (++guard > 200) throw std::runtime_error("qdcp_node_solve: bracket expansion failed (low)");
  }
  step = hi - lo;
  guard = 0;
  while (f(hi) < 0.0) {
    hi += step;
    step *= 2.0;
    if (++guard > 200) throw std::runtime_error("qdcp_node_solve: bracket expansion failed (high)");
  }
  return solve_increasing_root(f, df, lo, hi, warm_start, tol);
}

void qdcp_s_update(QdcpState& state, const CalibrationData& cal,
                   const std::vector<NodeEdges>& node_edges, const PinballParams& pin, double c) {
  const int num_nodes = static_cast<int>(state.s.size());
  for (int k = 0; k < num_nodes; ++k) {
    const NodeEdges& ne = node_edges[static_cast<std::size_t>(k)];
    double offset = 0.0;
    for (int q : ne.tail_edges) offset += state.lambda1[static_cast<std::size_t>(q)] -
                                          c * state.z[static_cast<std::size_t>(q)];
    for (int q : ne.head_edges) offset += state.lambda2[static_cast<std::size_t>(q)] -
                                          c * state.z[static_cast<std::size_t>(q)];
    const double degree = static_cast<double>(ne.tail_edges.size() + ne.head_edges.size());
    try {
      state.s[static_cast<std::size_t>(k)] =
          qdcp_node_solve(cal.per_device[static_cast<std::size_t>(k)], pin, c * degree, offset,
                          state.s[static_cast<std::size_t>(k)]);
    } catch (const std::exception& e) {
      throw std::runtime_error("s-update failed at node " + std::to_string(k) + ": " + e.what());
    }
  }
}

void qdcp_z_update(QdcpState& state, const Topology& topo, double c, int float_width) {
  for (std::size_t q = 0; q < topo.edges.size(); ++q) {
    const auto [i, j] = topo.edges[q];
    const double si = round_to_width(state.s[static_cast<std::size_t>(i)], float_width);
    const double sj = round_to_width(state.s[static_cast<std::size_t>(j)], float_width);
    state.z[q] = (c * (si + sj) + state.lambda1[q] + state.lambda2[q]) / (2.0 * c);
  }
}

void qdcp_lambda_update(QdcpState& state, const Topology& topo, double c, int float_width) {
  for (std::size_t q = 0; q < topo.edges.size(); ++q) {
    const auto [i, j] = topo.edges[q];
    const double si = round_to_width(state.s[static_cast<std::size_t>(i)], float_width);
    const double sj = round_to_width(state.s[static_cast<std::size_t>(j)], float_width);
    state.lambda1[q] += c * (si - state.z[q]);
    state.lambda2[q] += c * (sj - state.z[q]);
  }
}

double qdcp_primal_residual(const QdcpState& state, const Topology& topo) {
  double acc = 0.0;
  for (std::size_t q = 0; q < topo.edges.size(); ++q) {
    const auto [i, j] = topo.edges[q];
    const double ri = state.s[static_cast<std::size_t>(i)] - state.z[q];
    const double rj = state.s[static_cast<std::size_t>(j)] - state.z[q];
    acc += ri * ri + rj * rj;
  }
  return std::sqrt(acc);
}

double g_norm(double c, std::span<const double> z, std::span<const double> lambda_tilde) {
  double zz = 0.0;
  for (double v : z) zz += v * v;
  double ll = 0.0;
  for (double v : lambda_tilde) ll += v * v;
  return std::sqrt(c * zz + ll / c);
}

double qdcp_delta(const SpectralSummary& spectral, double c, double b, double smoothness,
                  double mu) {
  const double smax2 = spectral.sigma_max_m_plus * spectral.sigma_max_m_plus;
  const double smin2 = spectral.sigma_min_m_minus * spectral.sigma_min_m_minus;
  const double first = (b - 1.0) * smin2 / (b * smax2);
  const double second = mu / (c / 4.0 * smax2 + b / c * smoothness * smoothness / smin2);
  return std::min(first, second);
}

DeltaChoice qdcp_best_delta(const SpectralSummary& spectral, const QdcpConfig& cfg,
                            double smoothness) {
  if (cfg.b_grid.empty()) throw std::invalid_argument("qdcp: empty b grid");
  DeltaChoice best;
  best.delta = -1.0;
  for (double b : cfg.b_grid) {
    if (!(b > 1.0)) throw std::invalid_argument("qdcp: every b must exceed 1");
    double c = cfg.penalty;
    if (cfg.spectral_penalty)
      c = 2.0 * std::sqrt(b) * smoothness /
          (spectral.sigma_min_m_minus * spectral.sigma_max_m_plus);
    const double delta = qdcp_delta(spectral, c, b, smoothness, cfg.mu);
    if (delta > best.delta) best = {delta, b, c};
  }
  return best;
}

double qdcp_epsilon_T(double delta, double u0_distance, int num_nodes, double mu, int T) {
  if (T < 1) throw std::invalid_argument("qdcp_epsilon_T: T must be >= 1");
  if (!(mu > 0.0)) throw std::invalid_argument("qdcp_epsilon_T: mu must be > 0");
  const double decay = std::pow(1.0 + delta, -0.5 * static_cast<double>(T - 1));
  return std::sqrt(1.0 / (static_cast<double>(num_nodes) * mu)) * decay * u0_distance;
}

UStar qdcp_u_star_reference(const CalibrationData& cal, const Topology& topo,
                            const PinballParams& pin, double c, double primal_tol,
                            double change_tol, long max_iterations) {
  QdcpState state = qdcp_initial_state(topo);
  const std::vector<NodeEdges> node_edges = build_node_edges(topo);
  std::vector<double> prev_s = state.s;
  for (long t = 0; t < max_iterations; ++t) {
    qdcp_s_update(state, cal, node_edges, pin, c);
    qdcp_z_update(state, topo, c, 64);
    qdcp_lambda_update(state, topo, c, 64);
    double change = 0.0;
    for (std::size_t k = 0; k < state.s.size(); ++k)
      change = std::max(change, std::abs(state.s[k] - prev_s[k]));
    prev_s = state.s;
    if (t > 0 && change <= change_tol && qdcp_primal_residual(state, topo) <= primal_tol) {
      UStar u;
      u.z = state.z;
      u.lambda_tilde = state.lambda1;
      u.s_hat = std::accumulate(state.s.begin(), state.s.end(), 0.0) /
                static_cast<double>(state.s.size());
      return u;
    }
  }
  throw std::runtime_error(
      "qdcp_u_star_reference: no convergence within the iteration cap; "
      "consider a larger penalty c or regularization mu");
}

UStar qdcp_u_star_kkt(const CalibrationData& cal, const Topology& topo,
                      const PinballParams& pin) {
  const int num_nodes = topo.num_nodes;
  // The decentralized objective carries one mu-regularizer per device, so the
  // pooled problem uses K*mu.
  PinballParams pooled = pin;
  pooled.mu = pin.mu * static_cast<double>(num_nodes);
  const std::vector<double> all = cal.pooled();
  const double s_hat = centralized_smoothed_minimizer(all, pooled);

  std::vector<double> grad(static_cast<std::size_t>(num_nodes));
  for (int k = 0; k < num_nodes; ++k)
    grad[static_cast<std::size_t>(k)] =
        smoothed_pinball_derivative(s_hat, cal.per_device[static_cast<std::size_t>(k)], pin);

  // Solve M_minus * lambda = -grad with lambda in range(M_minus^T):
  // lambda = -M_minus^T L^+ grad, using M_minus M_minus^T = L.
  const std::vector<double> y = solve_spd_pseudo(laplacian(topo), grad);
  UStar u;
  u.s_hat = s_hat;
  u.z.assign(topo.edges.size(), s_hat);
  u.lambda_tilde.resize(topo.edges.size());
  for (std::size_t q = 0; q < topo.edges.size(); ++q) {
    const auto [i, j] = topo.edges[q];
    u.lambda_tilde[q] =
        -(y[static_cast<std::size_t>(i)] - y[static_cast<std::size_t>(j)]);
  }
  return u;
}

namespace {

double clamped_local_quantile(std::span<const double> scores, double gamma) {
  const double q = empirical_quantile(scores, gamma);
  if (std::isfinite(q)) return q;
  return *std::max_element(scores.begin(), scores.end());
}

double resolve_anchor(const CalibrationData& cal, const QdcpConfig& cfg, double gamma) {
  if (cfg.anchor_mode == QdcpConfig::AnchorMode::explicit_value) return cfg.s0;
  // Average of local quantiles; the preliminary averaging pass carries
  // negligible error, so the exact mean stands in for it.
  double acc = 0.0;
  for (const auto& dev : cal.per_device) acc += clamped_local_quantile(dev, gamma);
  return acc / static_cast<double>(cal.num_devices());
}

}  // namespace

QdcpResult run_qdcp(const CalibrationData& cal, const QdcpConfig& cfg, const Topology& topo,
                    const QdcpObserver& observer) {
  cal.validate();
  if (cal.num_devices() != topo.num_nodes)
    throw std::invalid_argument("run_qdcp: device count must match the topology");
  if (cfg.iterations < 1) throw std::invalid_argument("run_qdcp: T must be >= 1");
  const int num_nodes = topo.num_nodes;
  const long n = cal.total();
  const double gamma =
      (1.0 - cfg.alpha) * (1.0 + static_cast<double>(num_nodes) / static_cast<double>(n));

  QdcpResult result;
  result.gamma = gamma;
  if (gamma >= 1.0) {
    // The target rank exceeds n: mirror the empirical-quantile sentinel and
    // return the full-set threshold without running the protocol.
    result.threshold = std::numeric_limits<double>::infinity();
    result.s_bar = result.s_bar_exact = std::numeric_limits<double>::infinity();
    return result;
  }

  PinballParams pin;
  pin.gamma = gamma;
  pin.kappa = cfg.kappa;
  pin.mu = cfg.mu;
  pin.epsilon0 = cfg.epsilon0;
  pin.s0 = resolve_anchor(cal, cfg, gamma);
  pin.validate();
  if (!(pin.mu > 0.0)) throw std::invalid_argument("run_qdcp: mu must be > 0");
  result.s0 = pin.s0;

  long max_nk = 0;
  for (const auto& dev : cal.per_device)
    max_nk = std::max(max_nk, static_cast<long>(dev.size()));
  const double smoothness = smoothness_constant(max_nk, pin);

  DeltaChoice choice;
  choice.c = cfg.penalty;
  double u0_distance = 0.0;
  UStar u_star;
  if (num_nodes > 1) {
    const SpectralSummary spectral = spectral_summary(topo);
    choice = qdcp_best_delta(spectral, cfg, smoothness);
    switch (cfg.u_star_mode) {
      case QdcpConfig::UStarMode::admm:
        u_star = qdcp_u_star_reference(cal, topo, pin, choice.c);
        u0_distance = g_norm(choice.c, u_star.z, u_star.lambda_tilde);
        break;
      case QdcpConfig::UStarMode::kkt:
        u_star = qdcp_u_star_kkt(cal, topo, pin);
        u0_distance = g_norm(choice.c, u_star.z, u_star.lambda_tilde);
        break;
      case QdcpConfig::UStarMode::explicit_distance:
        u0_distance = cfg.u0_distance_bound;
        break;
    }
  } else {
    u_star.s_hat = centralized_smoothed_minimizer(cal.per_device[0], pin);
  }

  result.bounds.delta = choice.delta;
  result.bounds.b = choice.b;
  result.bounds.c = choice.c;
  result.bounds.u0_distance = u0_distance;
  result.bounds.u_star = u_star;
  result.bounds.eps_tilde0 = epsilon_tilde_0(n, pin);

  QdcpState state = qdcp_initial_state(topo);
  const std::vector<NodeEdges> node_edges = build_node_edges(topo);
  for (int t = 1; t <= cfg.iterations; ++t) {
    qdcp_s_update(state, cal, node_edges, pin, choice.c);
    qdcp_z_update(state, topo, choice.c, cfg.float_width);
    qdcp_lambda_update(state, topo, choice.c, cfg.float_width);
    state.iteration = t;
    if (observer) observer(t, state);
    if (cfg.log_every > 0 && (t % cfg.log_every == 0 || t == cfg.iterations)) {
      QdcpTrajectoryPoint point;
      point.t = t;
      point.s_bar = std::accumulate(state.s.begin(), state.s.end(), 0.0) /
                    static_cast<double>(num_nodes);
      point.primal_residual = qdcp_primal_residual(state, topo);
      point.eps_t = num_nodes > 1
                        ? qdcp_epsilon_T(choice.delta, u0_distance, num_nodes, pin.mu, t)
                        : 0.0;
      result.trajectory.push_back(point);
    }
  }

  result.s_bar_exact = std::accumulate(state.s.begin(), state.s.end(), 0.0) /
                       static_cast<double>(num_nodes);
  if (num_nodes > 1) {
    const ConsensusMatrix w = best_constant_consensus(topo);
    const AveragingResult avg =
        distributed_average(state.s, w, topo, 1.0, cfg.float_width);
    result.s_bar = avg.value;
    result.averaging_rounds = avg.rounds;
    result.averaging_spread = avg.spread;
    result.bounds.eps_T =
        qdcp_epsilon_T(choice.delta, u0_distance, num_nodes, pin.mu, cfg.iterations);
  } else {
    result.s_bar = state.s[0];
    result.bounds.eps_T = 0.0;  // no consensus error without edges
  }
  result.threshold = result.s_bar + result.bounds.eps_T + result.bounds.eps_tilde0;
  result.comm_bits = static_cast<long long>(cfg.iterations) * cfg.float_width;
  result.state = std::move(state);
  return result;
}

std::vector<int> qdcp_prediction_set(const TestInstance& test, double threshold) {
  std::vector<int> labels;
  for (std::size_t y = 0; y < test.candidate_scores.size(); ++y)
    if (test.candidate_scores[y] <= threshold) labels.push_back(static_cast<int>(y));
  return labels;
}

}  // namespace dcp
