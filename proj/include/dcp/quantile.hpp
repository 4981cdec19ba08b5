#pragma once

#include <span>
#include <vector>

#include "dcp/scores.hpp"

namespace dcp {

struct PinballParams {
  double gamma = 0.9;     // quantile level, in (0,1)
  double kappa = 2000.0;  // smoothing sharpness, > 0
  double mu = 2000.0;     // regularization strength, >= 0
  double s0 = 0.0;        // regularization anchor
  double epsilon0 = 0.1;  // assumed |s0 - s*| bound, >= 0

  void validate() const;
};

/// Smoothness constant of the smoothed/regularized pinball loss over n
/// scores: L = n*kappa/4 + mu.
double smoothness_constant(long n, const PinballParams& params);

/// ceil(gamma*n)-th smallest score; +inf sentinel when the rank exceeds n
/// (the prediction set then covers every label). The rank is computed with a
/// small relative tolerance so that an exactly-integer gamma*n is not pushed
/// up by its binary representation.
double empirical_quantile(std::span<const double> scores, double gamma);

/// gamma * sum ReLU(S_i - s) + (1-gamma) * sum ReLU(s - S_i).
double pinball_loss(double s, std::span<const double> scores, double gamma);

/// Softplus upper bound of ReLU: g(x) = x + log(1 + exp(-kappa*x))/kappa,
/// evaluated through log1p on the side that cannot overflow.
double smooth_relu(double x, double kappa);

struct LossEvaluation {
  double value = 0.0;
  double first = 0.0;
  double second = 0.0;
};

/// Smoothed pinball loss with the mu/2 (s - s0)^2 regularizer, plus its first
/// two derivatives. The second derivative is >= mu everywhere.
LossEvaluation smoothed_pinball(double s, std::span<const double> scores,
                                const PinballParams& params);

/// Derivative only (one sigmoid per score); used by the hot solver paths.
double smoothed_pinball_derivative(double s, std::span<const double> scores,
                                   const PinballParams& params);

/// First and second derivative in a single pass over the scores.
std::pair<double, double> smoothed_pinball_slope(double s, std::span<const double> scores,
                                                 const PinballParams& params);

/// Unique minimizer of the smoothed loss (mu > 0), found by safeguarded
/// Newton with a bisection fallback; stationarity residual <= 1e-10*(1+n).
double centralized_smoothed_minimizer(std::span<const double> scores,
                                      const PinballParams& params);

/// sqrt(2 n log2 / (mu kappa) + epsilon0^2): bound on |s_hat - s*|.
double epsilon_tilde_0(long n, const PinballParams& params);

/// Pooled empirical (1-alpha)(1+K/n)-quantile.
double fcp_centralized_threshold(const CalibrationData& cal, double alpha);

/// Split CP on pooled scores: empirical (1-alpha)(1+1/n)-quantile.
double split_cp_threshold(std::span<const double> scores, double alpha);

/// Safeguarded Newton for a strictly increasing scalar function. The bracket
/// [lo, hi] must contain a sign change; Newton steps leaving the bracket fall
/// back to bisection. Converges when |f| <= tol.
template <class F, class DF>
double solve_increasing_root(F f, DF df, double lo, double hi, double initial, double tol,
                             int max_iterations = 200);

}  // namespace dcp

#include "dcp/quantile_impl.hpp"
