#include "dcp/hdcp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dcp/wire.hpp"

namespace dcp {

void HdcpConfig::validate() const {
  if (num_levels < 1) throw std::invalid_argument("hdcp: M must be >= 1");
  if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("hdcp: eta must be in (0,1]");
  if (iterations < 0) throw std::invalid_argument("hdcp: T must be >= 0");
}

std::vector<double> HistogramState::column_means() const {
  std::vector<double> means(x.cols(), 0.0);
  for (std::size_t k = 0; k < x.rows(); ++k)
    for (std::size_t m = 0; m < x.cols(); ++m) means[m] += x(k, m);
  for (double& v : means) v /= static_cast<double>(x.rows());
  return means;
}

HistogramState hdcp_initial_state(const CalibrationData& cal, int num_levels) {
  cal.validate();
  const int num_nodes = cal.num_devices();
  const double n = static_cast<double>(cal.total());
  HistogramState state;
  state.x = Matrix(static_cast<std::size_t>(num_nodes), static_cast<std::size_t>(num_levels));
  for (int k = 0; k < num_nodes; ++k) {
    const auto& dev = cal.per_device[static_cast<std::size_t>(k)];
    const std::vector<double> hist = local_histogram(dev, num_levels);
    const double scale = static_cast<double>(num_nodes) * static_cast<double>(dev.size()) / n;
    for (int m = 0; m < num_levels; ++m)
      state.x(static_cast<std::size_t>(k), static_cast<std::size_t>(m)) =
          scale * hist[static_cast<std::size_t>(m)];
  }
  return state;
}

void consensus_step(HistogramState& state, const ConsensusMatrix& w, const Topology& topo,
                    double eta, int float_width) {
  const std::size_t num_nodes = state.x.rows();
  const std::size_t num_levels = state.x.cols();
  if (w.w.rows() != num_nodes)
    throw std::invalid_argument("consensus_step: W size does not match state");
  Matrix next = state.x;
  for (auto [i, j] : topo.edges) {
    const double wij = w.w(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    if (wij == 0.0) continue;
    for (std::size_t m = 0; m < num_levels; ++m) {
      const double xi = state.x(static_cast<std::size_t>(i), m);
      const double xj = state.x(static_cast<std::size_t>(j), m);
      // Each endpoint sees the other's value through the wire.
      next(static_cast<std::size_t>(i), m) += eta * wij * (round_to_width(xj, float_width) - xi);
      next(static_cast<std::size_t>(j), m) += eta * wij * (round_to_width(xi, float_width) - xj);
    }
  }
  state.x = std::move(next);
}

double epsilon_hdcp(int num_nodes, int num_levels, long n, const std::vector<int>& device_sizes,
                    double eta, double rho, int iterations) {
  if (!(rho > 0.0 && rho <= 1.0)) throw std::invalid_argument("epsilon_hdcp: rho must be in (0,1]");
  if (!(eta > 0.0 && eta <= 1.0)) throw std::invalid_argument("epsilon_hdcp: eta must be in (0,1]");
  double max_sq = 0.0;
  double sum_sq = 0.0;
  for (int n_k : device_sizes) {
    const double sq = static_cast<double>(n_k) * static_cast<double>(n_k);
    max_sq = std::max(max_sq, sq);
    sum_sq += sq;
  }
  const double k = static_cast<double>(num_nodes);
  const double decay = std::pow(1.0 - eta * rho, iterations);
  return k * std::sqrt(2.0 * k * static_cast<double>(num_levels)) * decay /
         static_cast<double>(n) * std::sqrt(max_sq + sum_sq / k);
}

int select_quantile_index(std::span<const double> histogram, double alpha, int num_nodes, long n,
                          double eps) {
  const int num_levels = static_cast<int>(histogram.size());
  const double target =
      (1.0 - alpha) * (1.0 + static_cast<double>(num_nodes) / static_cast<double>(n)) + eps;
  if (target > 1.0) return num_levels;
  double prefix = 0.0;
  for (int m = 0; m < num_levels; ++m) {
    prefix += histogram[static_cast<std::size_t>(m)];
    if (prefix >= target) return m + 1;
  }
  // Consensus noise can leave the total below the target; clamp conservatively.
  return num_levels;
}

HdcpResult run_hdcp(const CalibrationData& cal, const HdcpConfig& cfg, const Topology& topo,
                    const ConsensusMatrix& w) {
  cfg.validate();
  cal.validate();
  if (cal.num_devices() != topo.num_nodes)
    throw std::invalid_argument("run_hdcp: device count must match the topology");
  const int num_nodes = topo.num_nodes;
  const long n = cal.total();

  HdcpResult result;
  result.target =
      (1.0 - cfg.alpha) * (1.0 + static_cast<double>(num_nodes) / static_cast<double>(n));
  HistogramState state = hdcp_initial_state(cal, cfg.num_levels);
  result.global_histogram = state.column_means();

  auto error_sq = [&]() {
    double acc = 0.0;
    for (std::size_t k = 0; k < state.x.rows(); ++k)
      for (std::size_t m = 0; m < state.x.cols(); ++m) {
        const double d = state.x(k, m) - result.global_histogram[m];
        acc += d * d;
      }
    return acc;
  };

  result.consensus_error_sq.reserve(static_cast<std::size_t>(cfg.iterations) + 1);
  result.consensus_error_sq.push_back(error_sq());
  for (int t = 0; t < cfg.iterations; ++t) {
    consensus_step(state, w, topo, cfg.eta, cfg.float_width);
    result.consensus_error_sq.push_back(error_sq());
  }

  std::vector<int> sizes;
  sizes.reserve(static_cast<std::size_t>(num_nodes));
  for (const auto& dev : cal.per_device) sizes.push_back(static_cast<int>(dev.size()));
  result.eps = num_nodes > 1
                   ? epsilon_hdcp(num_nodes, cfg.num_levels, n, sizes, cfg.eta,
                                  w.spectral_gap, cfg.iterations)
                   : 0.0;  // single device: no consensus error exists

  result.m_alpha.resize(static_cast<std::size_t>(num_nodes));
  result.thresholds.resize(static_cast<std::size_t>(num_nodes));
  std::vector<double> row(static_cast<std::size_t>(cfg.num_levels));
  for (int k = 0; k < num_nodes; ++k) {
    for (int m = 0; m < cfg.num_levels; ++m)
      row[static_cast<std::size_t>(m)] =
          state.x(static_cast<std::size_t>(k), static_cast<std::size_t>(m));
    const int idx = select_quantile_index(row, cfg.alpha, num_nodes, n, result.eps);
    result.m_alpha[static_cast<std::size_t>(k)] = idx;
    result.thresholds[static_cast<std::size_t>(k)] =
        static_cast<double>(idx) / static_cast<double>(cfg.num_levels);
  }
  result.comm_bits = static_cast<long long>(cfg.iterations) *
                     static_cast<long long>(cfg.num_levels) * cfg.float_width;
  result.state = std::move(state);
  return result;
}

std::vector<int> hdcp_prediction_set(const TestInstance& test, int m_k, int num_levels) {
  if (m_k < 1 || m_k > num_levels)
    throw std::invalid_argument("hdcp_prediction_set: index outside 1..M");
  const double threshold = static_cast<double>(m_k) / static_cast<double>(num_levels);
  std::vector<int> labels;
  for (std::size_t y = 0; y < test.candidate_scores.size(); ++y)
    if (quantize_score(test.candidate_scores[y], num_levels) <= threshold)
      labels.push_back(static_cast<int>(y));
  return labels;
}

AveragingResult distributed_average(std::vector<double> values, const ConsensusMatrix& w,
                                    const Topology& topo, double eta, int float_width,
                                    double tol, int max_rounds) {
  AveragingResult out;
  auto spread = [&]() {
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    return *hi - *lo;
  };
  out.spread = spread();
  double best = out.spread;
  int stalled = 0;
  std::vector<double> next(values.size());
  while (out.spread > tol && out.rounds < max_rounds) {
    next = values;
    for (auto [i, j] : topo.edges) {
      const double wij = w.w(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
      if (wij == 0.0) continue;
      const double vi = values[static_cast<std::size_t>(i)];
      const double vj = values[static_cast<std::size_t>(j)];
      next[static_cast<std::size_t>(i)] += eta * wij * (round_to_width(vj, float_width) - vi);
      next[static_cast<std::size_t>(j)] += eta * wij * (round_to_width(vi, float_width) - vj);
    }
    values.swap(next);
    ++out.rounds;
    out.spread = spread();
    // Narrow wire widths bottom out above tol; stop once progress stalls.
    if (out.spread < best) {
      best = out.spread;
      stalled = 0;
    } else if (++stalled > 100) {
      break;
    }
  }
  double acc = 0.0;
  for (double v : values) acc += v;
  out.value = acc / static_cast<double>(values.size());
  return out;
}

}  // namespace dcp
