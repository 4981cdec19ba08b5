#include "dcp/quantile.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace dcp {

void PinballParams::validate() const {
  if (!(gamma > 0.0 && gamma < 1.0))
    throw std::invalid_argument("pinball params: gamma must be in (0,1)");
  if (!(kappa > 0.0)) throw std::invalid_argument("pinball params: kappa must be > 0");
  if (!(mu >= 0.0)) throw std::invalid_argument("pinball params: mu must be >= 0");
  if (!(epsilon0 >= 0.0)) throw std::invalid_argument("pinball params: epsilon0 must be >= 0");
}

double smoothness_constant(long n, const PinballParams& params) {
  return static_cast<double>(n) * params.kappa / 4.0 + params.mu;
}

double empirical_quantile(std::span<const double> scores, double gamma) {
  if (scores.empty()) throw std::invalid_argument("empirical_quantile: empty input");
  if (!(gamma > 0.0)) throw std::invalid_argument("empirical_quantile: gamma must be > 0");
  const double n = static_cast<double>(scores.size());
  const double raw = gamma * n;
  long rank = static_cast<long>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
  if (rank < 1) rank = 1;
  if (rank > static_cast<long>(scores.size()))
    return std::numeric_limits<double>::infinity();
  std::vector<double> sorted(scores.begin(), scores.end());
  std::nth_element(sorted.begin(), sorted.begin() + (rank - 1), sorted.end());
  return sorted[static_cast<std::size_t>(rank - 1)];
}

double pinball_loss(double s, std::span<const double> scores, double gamma) {
  double above = 0.0;
  double below = 0.0;
  for (double v : scores) {
    if (v > s)
      above += v - s;
    else
      below += s - v;
  }
  return gamma * above + (1.0 - gamma) * below;
}

double smooth_relu(double x, double kappa) {
  if (!(kappa > 0.0)) throw std::invalid_argument("smooth_relu: kappa must be > 0");
  const double t = kappa * x;
  if (t >= 0.0) return x + std::log1p(std::exp(-t)) / kappa;
  return std::log1p(std::exp(t)) / kappa;
}

namespace {

// Logistic sigmoid, overflow-safe on both sides.
inline double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace

LossEvaluation smoothed_pinball(double s, std::span<const double> scores,
                                const PinballParams& params) {
  const double gamma = params.gamma;
  const double kappa = params.kappa;
  LossEvaluation out;
  for (double v : scores) {
    const double d = v - s;
    out.value += gamma * smooth_relu(d, kappa) + (1.0 - gamma) * smooth_relu(-d, kappa);
    const double sig = sigmoid(kappa * d);
    out.first += (1.0 - gamma) - sig;
    out.second += kappa * sig * (1.0 - sig);
  }
  const double anchor = s - params.s0;
  out.value += 0.5 * params.mu * anchor * anchor;
  out.first += params.mu * anchor;
  out.second += params.mu;
  return out;
}

double smoothed_pinball_derivative(double s, std::span<const double> scores,
                                   const PinballParams& params) {
  double acc = 0.0;
  for (double v : scores) acc += (1.0 - params.gamma) - sigmoid(params.kappa * (v - s));
  return acc + params.mu * (s - params.s0);
}

std::pair<double, double> smoothed_pinball_slope(double s, std::span<const double> scores,
                                                 const PinballParams& params) {
  double first = 0.0;
  double curv = 0.0;
  for (double v : scores) {
    const double sig = sigmoid(params.kappa * (v - s));
    first += (1.0 - params.gamma) - sig;
    curv += sig * (1.0 - sig);
  }
  return {first + params.mu * (s - params.s0), params.kappa * curv + params.mu};
}

double centralized_smoothed_minimizer(std::span<const double> scores,
                                      const PinballParams& params) {
  params.validate();
  if (!(params.mu > 0.0))
    throw std::invalid_argument("centralized_smoothed_minimizer: mu must be > 0 for uniqueness");
  if (scores.empty())
    throw std::invalid_argument("centralized_smoothed_minimizer: empty input");
  const auto [min_it, max_it] = std::minmax_element(scores.begin(), scores.end());
  const double lo = std::min(*min_it - 1.0, params.s0);
  const double hi = std::max(*max_it + 1.0, params.s0);
  const double tol = 1e-10 * (1.0 + static_cast<double>(scores.size()));
  auto deriv = [&](double s) { return smoothed_pinball_derivative(s, scores, params); };
  auto curv = [&](double s) { return smoothed_pinball(s, scores, params).second; };
  return solve_increasing_root(deriv, curv, lo, hi, 0.5 * (lo + hi), tol);
}

double epsilon_tilde_0(long n, const PinballParams& params) {
  if (!(params.mu > 0.0)) throw std::invalid_argument("epsilon_tilde_0: mu must be > 0");
  if (!(params.kappa > 0.0)) throw std::invalid_argument("epsilon_tilde_0: kappa must be > 0");
  const double bias = 2.0 * static_cast<double>(n) * std::log(2.0) / (params.mu * params.kappa);
  return std::sqrt(bias + params.epsilon0 * params.epsilon0);
}

double fcp_centralized_threshold(const CalibrationData& cal, double alpha) {
  const std::vector<double> pooled = cal.pooled();
  const double n = static_cast<double>(pooled.size());
  const double k = static_cast<double>(cal.num_devices());
  return empirical_quantile(pooled, (1.0 - alpha) * (1.0 + k / n));
}

double split_cp_threshold(std::span<const double> scores, double alpha) {
  const double n = static_cast<double>(scores.size());
  return empirical_quantile(scores, (1.0 - alpha) * (1.0 + 1.0 / n));
}

}  // namespace dcp
