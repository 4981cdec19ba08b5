#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "dcp/graph.hpp"
#include "dcp/hdcp.hpp"
#include "dcp/qdcp.hpp"
#include "dcp/quantile.hpp"

using dcp::CalibrationData;
using dcp::GraphKind;
using dcp::PinballParams;
using dcp::QdcpConfig;
using dcp::QdcpState;
using dcp::Topology;

namespace {

CalibrationData random_calibration(int num_devices, int per_device, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  CalibrationData cal;
  cal.per_device.resize(static_cast<std::size_t>(num_devices));
  for (auto& dev : cal.per_device) {
    dev.resize(static_cast<std::size_t>(per_device));
    for (double& s : dev) s = unif(rng);
  }
  return cal;
}

PinballParams test_params(double gamma = 0.8, double kappa = 100.0, double mu = 20.0,
                          double s0 = 0.5) {
  PinballParams p;
  p.gamma = gamma;
  p.kappa = kappa;
  p.mu = mu;
  p.s0 = s0;
  return p;
}

// Augmented Lagrangian evaluated from the dense incidence matrices.
double augmented_lagrangian(const std::vector<double>& s, const QdcpState& state,
                            const CalibrationData& cal, const Topology& topo,
                            const PinballParams& pin, double c) {
  double value = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k)
    value += dcp::smoothed_pinball(s[k], cal.per_device[k], pin).value;
  for (std::size_t q = 0; q < topo.edges.size(); ++q) {
    const auto [i, j] = topo.edges[q];
    const double r1 = s[static_cast<std::size_t>(i)] - state.z[q];
    const double r2 = s[static_cast<std::size_t>(j)] - state.z[q];
    value += state.lambda1[q] * r1 + state.lambda2[q] * r2 + 0.5 * c * (r1 * r1 + r2 * r2);
  }
  return value;
}

}  // namespace

TEST_CASE("s-update solves the round subproblem (2-node brute force)") {
  const Topology topo = dcp::build_topology(GraphKind::chain, 2);
  CalibrationData cal;
  cal.per_device = {{0.3}, {0.8}};
  const PinballParams pin = test_params();
  const double c = 1.7;

  QdcpState state = dcp::qdcp_initial_state(topo);
  state.z = {0.4};
  state.lambda1 = {0.2};
  state.lambda2 = {-0.1};

  QdcpState updated = state;
  dcp::qdcp_s_update(updated, cal, dcp::build_node_edges(topo), pin, c);

  // Golden-section minimization per coordinate of the dense Lagrangian.
  std::vector<double> brute = {0.0, 0.0};
  for (int k = 0; k < 2; ++k) {
    double lo = -3.0, hi = 4.0;
    const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
    while (hi - lo > 1e-12) {
      const double x1 = hi - phi * (hi - lo);
      const double x2 = lo + phi * (hi - lo);
      std::vector<double> sa = brute, sb = brute;
      sa[static_cast<std::size_t>(k)] = x1;
      sb[static_cast<std::size_t>(k)] = x2;
      if (augmented_lagrangian(sa, state, cal, topo, pin, c) <
          augmented_lagrangian(sb, state, cal, topo, pin, c))
        hi = x2;
      else
        lo = x1;
    }
    brute[static_cast<std::size_t>(k)] = 0.5 * (lo + hi);
  }
  CHECK(updated.s[0] == doctest::Approx(brute[0]).epsilon(1e-7));
  CHECK(updated.s[1] == doctest::Approx(brute[1]).epsilon(1e-7));
}

TEST_CASE("s-update satisfies the stationarity system") {
  const Topology topo = dcp::build_topology(GraphKind::cycle, 6);
  const CalibrationData cal = random_calibration(6, 12, 5);
  const PinballParams pin = test_params(0.85, 300.0, 40.0, 0.6);
  const double c = 0.8;
  QdcpState state = dcp::qdcp_initial_state(topo);
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> unif(-0.5, 0.5);
  for (double& v : state.z) v = unif(rng);
  for (double& v : state.lambda1) v = unif(rng);
  for (double& v : state.lambda2) v = unif(rng);

  const auto node_edges = dcp::build_node_edges(topo);
  dcp::qdcp_s_update(state, cal, node_edges, pin, c);

  for (int k = 0; k < 6; ++k) {
    double residual =
        dcp::smoothed_pinball_derivative(state.s[static_cast<std::size_t>(k)],
                                         cal.per_device[static_cast<std::size_t>(k)], pin);
    for (int q : node_edges[static_cast<std::size_t>(k)].tail_edges)
      residual += state.lambda1[static_cast<std::size_t>(q)] +
                  c * (state.s[static_cast<std::size_t>(k)] - state.z[static_cast<std::size_t>(q)]);
    for (int q : node_edges[static_cast<std::size_t>(k)].head_edges)
      residual += state.lambda2[static_cast<std::size_t>(q)] +
                  c * (state.s[static_cast<std::size_t>(k)] - state.z[static_cast<std::size_t>(q)]);
    CHECK(std::abs(residual) <= 1e-8);
  }
}

TEST_CASE("s-update for a node ignores non-incident state (poison audit)") {
  const Topology topo = dcp::build_topology(GraphKind::chain, 4);
  const CalibrationData cal = random_calibration(4, 7, 8);
  const PinballParams pin = test_params();
  const double c = 1.2;
  QdcpState clean = dcp::qdcp_initial_state(topo);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> unif(-0.3, 0.3);
  for (double& v : clean.z) v = unif(rng);
  for (double& v : clean.lambda1) v = unif(rng);
  for (double& v : clean.lambda2) v = unif(rng);
  const auto node_edges = dcp::build_node_edges(topo);

  QdcpState reference = clean;
  dcp::qdcp_s_update(reference, cal, node_edges, pin, c);

  const double nan = std::numeric_limits<double>::quiet_NaN();
  // Node 1 of the chain touches edges 0 and 1 only.
  const int node = 1;
  QdcpState poisoned = clean;
  poisoned.z[2] = nan;
  poisoned.lambda1[2] = nan;
  poisoned.lambda2[2] = nan;
  CalibrationData poisoned_cal = cal;
  for (int k = 0; k < 4; ++k)
    if (k != node)
      for (double& s : poisoned_cal.per_device[static_cast<std::size_t>(k)]) s = nan;

  const dcp::NodeEdges& ne = node_edges[static_cast<std::size_t>(node)];
  double offset = 0.0;
  for (int q : ne.tail_edges)
    offset += poisoned.lambda1[static_cast<std::size_t>(q)] -
              c * poisoned.z[static_cast<std::size_t>(q)];
  for (int q : ne.head_edges)
    offset += poisoned.lambda2[static_cast<std::size_t>(q)] -
              c * poisoned.z[static_cast<std::size_t>(q)];
  const double degree = static_cast<double>(ne.tail_edges.size() + ne.head_edges.size());
  const double solved =
      dcp::qdcp_node_solve(poisoned_cal.per_device[static_cast<std::size_t>(node)], pin,
                           c * degree, offset, 0.0);
  CHECK(std::isfinite(solved));
  CHECK(solved == reference.s[static_cast<std::size_t>(node)]);
}

TEST_CASE("z-update closed form") {
  const Topology topo = dcp::build_topology(GraphKind::chain, 2);
  QdcpState state = dcp::qdcp_initial_state(topo);
  state.s = {1.0, 3.0};
  dcp::qdcp_z_update(state, topo, 1.0, 64);
  CHECK(state.z[0] == doctest::Approx(2.0));

  SUBCASE("matches the generic matrix formula on random instances") {
    const Topology big = dcp::build_topology(GraphKind::torus, 12);
    QdcpState st = dcp::qdcp_initial_state(big);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    for (double& v : st.s) v = unif(rng);
    for (double& v : st.lambda1) v = unif(rng);
    for (double& v : st.lambda2) v = unif(rng);
    const double c = 2.3;
    QdcpState closed = st;
    dcp::qdcp_z_update(closed, big, c, 64);
    // z = -(c B^T B)^{-1} B^T (c A s + lambda), B = [-I; -I].
    const dcp::IncidenceMatrices inc = dcp::incidence(big);
    const std::vector<double> a1s = inc.a1 * st.s;
    const std::vector<double> a2s = inc.a2 * st.s;
    for (std::size_t q = 0; q < big.edges.size(); ++q) {
      const double rhs =
          (c * a1s[q] + st.lambda1[q]) + (c * a2s[q] + st.lambda2[q]);
      CHECK(closed.z[q] == doctest::Approx(rhs / (2.0 * c)).epsilon(1e-10));
    }
  }

  SUBCASE("perturbing any z coordinate increases the Lagrangian") {
    const Topology graph = dcp::build_topology(GraphKind::cycle, 5);
    const CalibrationData cal = random_calibration(5, 3, 21);
    const PinballParams pin = test_params();
    QdcpState st = dcp::qdcp_initial_state(graph);
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> unif(-0.4, 0.4);
    for (double& v : st.s) v = unif(rng);
    for (double& v : st.lambda1) v = unif(rng);
    for (double& v : st.lambda2) v = unif(rng);
    const double c = 1.4;
    dcp::qdcp_z_update(st, graph, c, 64);
    const double base = augmented_lagrangian(st.s, st, cal, graph, pin, c);
    for (std::size_t q = 0; q < st.z.size(); ++q) {
      for (double eps : {1e-4, -1e-4}) {
        QdcpState bumped = st;
        bumped.z[q] += eps;
        CHECK(augmented_lagrangian(st.s, bumped, cal, graph, pin, c) >= base);
      }
    }
  }
}

TEST_CASE("lambda-update") {
  const Topology topo = dcp::build_topology(GraphKind::chain, 2);

  SUBCASE("hand step from zero") {
    QdcpState state = dcp::qdcp_initial_state(topo);
    state.s = {0.0, 1.0};
    state.z = {0.5};
    dcp::qdcp_lambda_update(state, topo, 1.0, 64);
    CHECK(state.lambda1[0] == doctest::Approx(-0.5));
    CHECK(state.lambda2[0] == doctest::Approx(0.5));
  }

  SUBCASE("fixed at exact consensus") {
    QdcpState state = dcp::qdcp_initial_state(topo);
    state.s = {0.7, 0.7};
    state.z = {0.7};
    state.lambda1 = {0.25};
    state.lambda2 = {-0.25};
    dcp::qdcp_lambda_update(state, topo, 2.0, 64);
    CHECK(state.lambda1[0] == doctest::Approx(0.25));
    CHECK(state.lambda2[0] == doctest::Approx(-0.25));
  }
}

TEST_CASE("lambda blocks stay antisymmetric along a run") {
  const Topology topo = dcp::build_topology(GraphKind::torus, 9);
  const CalibrationData cal = random_calibration(9, 6, 33);
  QdcpConfig cfg;
  cfg.alpha = 0.2;
  cfg.iterations = 400;
  cfg.kappa = 200.0;
  cfg.mu = 50.0;
  cfg.penalty = 1.0;
  cfg.u_star_mode = QdcpConfig::UStarMode::kkt;
  double worst = 0.0;
  dcp::run_qdcp(cal, cfg, topo, [&](int, const QdcpState& st) {
    for (std::size_t q = 0; q < st.lambda1.size(); ++q)
      worst = std::max(worst, std::abs(st.lambda1[q] + st.lambda2[q]));
  });
  CHECK(worst <= 1e-9);
}

TEST_CASE("z closed-form state invariant holds right after the z-update") {
  const Topology topo = dcp::build_topology(GraphKind::cycle, 7);
  const CalibrationData cal = random_calibration(7, 5, 44);
  const PinballParams pin = test_params();
  const double c = 0.9;
  QdcpState state = dcp::qdcp_initial_state(topo);
  const auto node_edges = dcp::build_node_edges(topo);
  for (int t = 0; t < 5; ++t) {
    dcp::qdcp_s_update(state, cal, node_edges, pin, c);
    dcp::qdcp_z_update(state, topo, c, 64);
    for (std::size_t q = 0; q < topo.edges.size(); ++q) {
      const auto [i, j] = topo.edges[q];
      const double expected = (c * (state.s[static_cast<std::size_t>(i)] +
                                    state.s[static_cast<std::size_t>(j)]) +
                               state.lambda1[q] + state.lambda2[q]) /
                              (2.0 * c);
      CHECK(state.z[q] == doctest::Approx(expected).epsilon(1e-12));
    }
    dcp::qdcp_lambda_update(state, topo, c, 64);
  }
}

TEST_CASE("delta arithmetic") {
  const Topology edge = dcp::build_topology(GraphKind::chain, 2);
  const dcp::SpectralSummary spectral = dcp::spectral_summary(edge);

  SUBCASE("hand-checked two-node value") {
    // sigma_min^2 = sigma_max^2 = 2; first = 0.5, second = 1/(0.5 + 4).
    const double delta = dcp::qdcp_delta(spectral, 1.0, 2.0, 2.0, 1.0);
    CHECK(delta == doctest::Approx(std::min(0.5, 1.0 / 4.5)).epsilon(1e-10));
  }
  SUBCASE("vanishing mu kills delta") {
    CHECK(dcp::qdcp_delta(spectral, 1.0, 2.0, 2.0, 1e-12) <= 1e-12);
  }
  SUBCASE("b near one kills the first term") {
    CHECK(dcp::qdcp_delta(spectral, 1.0, 1.0 + 1e-9, 2.0, 1.0) <= 1.01e-9);
  }
  SUBCASE("grid maximization picks the best b") {
    QdcpConfig cfg;
    cfg.b_grid = {1.5, 2.0, 4.0};
    cfg.mu = 1.0;
    cfg.penalty = 1.0;
    const dcp::DeltaChoice choice = dcp::qdcp_best_delta(spectral, cfg, 2.0);
    double best = -1.0;
    for (double b : cfg.b_grid) best = std::max(best, dcp::qdcp_delta(spectral, 1.0, b, 2.0, 1.0));
    CHECK(choice.delta == doctest::Approx(best));
  }
}

TEST_CASE("epsilon_T formula") {
  CHECK(dcp::qdcp_epsilon_T(0.3, 2.0, 4, 25.0, 1) ==
        doctest::Approx(std::sqrt(1.0 / 100.0) * 2.0));
  CHECK(dcp::qdcp_epsilon_T(0.5, 0.0, 4, 25.0, 17) == 0.0);
  const double e5 = dcp::qdcp_epsilon_T(0.2, 1.0, 3, 10.0, 5);
  const double e6 = dcp::qdcp_epsilon_T(0.2, 1.0, 3, 10.0, 6);
  CHECK(e6 / e5 == doctest::Approx(1.0 / std::sqrt(1.2)).epsilon(1e-12));
  CHECK_THROWS(dcp::qdcp_epsilon_T(0.2, 1.0, 3, 10.0, 0));
}

TEST_CASE("reference optimum: symmetric instance and centralized agreement") {
  const Topology topo = dcp::build_topology(GraphKind::cycle, 4);
  CalibrationData cal;
  cal.per_device.assign(4, {0.2, 0.5, 0.8});
  PinballParams pin = test_params(0.75, 80.0, 30.0, 0.0);
  // Anchor at the common local minimizer so the fixed point is symmetric.
  PinballParams probe = pin;
  probe.mu = pin.mu * 4.0;
  CalibrationData pooled_cal;
  pooled_cal.per_device = {cal.pooled()};
  pin.s0 = dcp::centralized_smoothed_minimizer(cal.per_device[0], pin);
  probe.s0 = pin.s0;

  const dcp::UStar u = dcp::qdcp_u_star_reference(cal, topo, pin, 1.0);
  const double pooled_min = dcp::centralized_smoothed_minimizer(pooled_cal.per_device[0], probe);
  CHECK(u.s_hat == doctest::Approx(pooled_min).epsilon(1e-8));
  for (double z : u.z) CHECK(z == doctest::Approx(u.s_hat).epsilon(1e-8));
  for (double l : u.lambda_tilde) CHECK(l == doctest::Approx(0.0).epsilon(1e-7));
}

TEST_CASE("analytic u* agrees with the ADMM reference") {
  const Topology topo = dcp::build_topology(GraphKind::torus, 6);
  const CalibrationData cal = random_calibration(6, 9, 55);
  const PinballParams pin = test_params(0.9, 150.0, 60.0, 0.55);
  const dcp::UStar ref = dcp::qdcp_u_star_reference(cal, topo, pin, 2.0);
  const dcp::UStar kkt = dcp::qdcp_u_star_kkt(cal, topo, pin);
  CHECK(ref.s_hat == doctest::Approx(kkt.s_hat).epsilon(1e-7));
  for (std::size_t q = 0; q < ref.z.size(); ++q) {
    CHECK(ref.z[q] == doctest::Approx(kkt.z[q]).epsilon(1e-6));
    CHECK(ref.lambda_tilde[q] == doctest::Approx(kkt.lambda_tilde[q]).epsilon(1e-5));
  }
}

TEST_CASE("per-step G-norm contraction at the proven rate") {
  const Topology topo = dcp::build_topology(GraphKind::cycle, 8);
  const CalibrationData cal = random_calibration(8, 10, 66);
  QdcpConfig cfg;
  cfg.alpha = 0.15;
  cfg.iterations = 120;
  cfg.kappa = 200.0;
  cfg.mu = 200.0;
  cfg.spectral_penalty = true;
  cfg.u_star_mode = QdcpConfig::UStarMode::kkt;

  const long n = cal.total();
  PinballParams pin = test_params(
      (1.0 - cfg.alpha) * (1.0 + 8.0 / static_cast<double>(n)), cfg.kappa, cfg.mu, 0.0);
  long max_nk = 10;
  const double smoothness = dcp::smoothness_constant(max_nk, pin);
  const dcp::SpectralSummary spectral = dcp::spectral_summary(topo);
  const dcp::DeltaChoice choice = dcp::qdcp_best_delta(spectral, cfg, smoothness);

  // Recreate the anchor run_qdcp resolves so u* matches the run.
  double anchor = 0.0;
  for (const auto& dev : cal.per_device) anchor += dcp::empirical_quantile(dev, pin.gamma);
  anchor /= 8.0;
  pin.s0 = anchor;
  cfg.anchor_mode = QdcpConfig::AnchorMode::explicit_value;
  cfg.s0 = anchor;

  const dcp::UStar u_star = dcp::qdcp_u_star_kkt(cal, topo, pin);
  std::vector<double> distances;
  dcp::run_qdcp(cal, cfg, topo, [&](int, const QdcpState& st) {
    std::vector<double> dz(st.z.size()), dl(st.z.size());
    for (std::size_t q = 0; q < st.z.size(); ++q) {
      dz[q] = st.z[q] - u_star.z[q];
      dl[q] = st.lambda1[q] - u_star.lambda_tilde[q];
    }
    distances.push_back(dcp::g_norm(choice.c, dz, dl));
  });
  REQUIRE(distances.size() >= 2);
  const double rate = 1.0 / std::sqrt(1.0 + choice.delta);
  for (std::size_t t = 0; t + 1 < distances.size(); ++t) {
    if (distances[t] < 1e-10) break;
    CHECK(distances[t + 1] <= distances[t] * rate * (1.0 + 1e-9) + 1e-14);
  }
}

TEST_CASE("run_qdcp: complete graph converges and the bound chain holds") {
  const Topology topo = dcp::build_topology(GraphKind::complete, 6);
  const CalibrationData cal = random_calibration(6, 20, 77);
  QdcpConfig cfg;
  cfg.alpha = 0.1;
  cfg.iterations = 600;
  cfg.kappa = 500.0;
  cfg.mu = 500.0;
  cfg.spectral_penalty = true;
  cfg.u_star_mode = QdcpConfig::UStarMode::kkt;
  cfg.log_every = 20;
  const dcp::QdcpResult res = dcp::run_qdcp(cal, cfg, topo);

  CHECK(std::abs(res.s_bar_exact - res.bounds.u_star.s_hat) <= res.bounds.eps_T + 1e-12);
  CHECK(res.threshold ==
        doctest::Approx(res.s_bar + res.bounds.eps_T + res.bounds.eps_tilde0));
  CHECK(res.comm_bits == 600LL * 64LL);
  CHECK(res.averaging_spread <= 1e-9);
  CHECK(std::abs(res.s_bar - res.s_bar_exact) <= 1e-8);
  // Trajectory eps_t must bound |s_bar(t) - s_hat| at every logged t.
  for (const auto& p : res.trajectory)
    CHECK(std::abs(p.s_bar - res.bounds.u_star.s_hat) <= p.eps_t + 1e-12);
}

TEST_CASE("run_qdcp bound validity against the unsmoothed quantile") {
  // With Assumption 4.1 enforced through an oracle epsilon0, the threshold
  // dominates the exact pooled quantile.
  for (std::uint64_t seed : {1, 2, 3}) {
    const Topology topo = dcp::build_topology(GraphKind::cycle, 5);
    const CalibrationData cal = random_calibration(5, 16, 100 + seed);
    QdcpConfig cfg;
    cfg.alpha = 0.1;
    cfg.iterations = 200;
    cfg.kappa = 2000.0;
    cfg.mu = 2000.0;
    cfg.u_star_mode = QdcpConfig::UStarMode::kkt;
    cfg.log_every = 10;
    const double gamma =
        (1.0 - cfg.alpha) * (1.0 + 5.0 / static_cast<double>(cal.total()));
    const double s_star = dcp::empirical_quantile(cal.pooled(), gamma);

    // Resolve the anchor the same way the run does, then make epsilon0 honest.
    double anchor = 0.0;
    for (const auto& dev : cal.per_device) {
      const double q = dcp::empirical_quantile(dev, gamma);
      anchor += std::isfinite(q) ? q : *std::max_element(dev.begin(), dev.end());
    }
    anchor /= 5.0;
    cfg.epsilon0 = std::abs(anchor - s_star) * (1.0 + 1e-9) + 1e-12;

    const dcp::QdcpResult res = dcp::run_qdcp(cal, cfg, topo);
    CHECK(res.threshold >= s_star);
    for (const auto& p : res.trajectory)
      CHECK(std::abs(p.s_bar - s_star) <= p.eps_t + res.bounds.eps_tilde0 + 1e-12);
  }
}

TEST_CASE("linear convergence slope and primal residual decay") {
  const Topology topo = dcp::build_topology(GraphKind::cycle, 8);
  const CalibrationData cal = random_calibration(8, 10, 200);
  QdcpConfig cfg;
  cfg.alpha = 0.2;
  cfg.iterations = 300;
  cfg.kappa = 200.0;
  cfg.mu = 200.0;
  cfg.spectral_penalty = true;
  cfg.u_star_mode = QdcpConfig::UStarMode::kkt;
  cfg.log_every = 1;

  PinballParams pin = test_params(
      (1.0 - cfg.alpha) * (1.0 + 8.0 / static_cast<double>(cal.total())), cfg.kappa, cfg.mu, 0.0);
  double anchor = 0.0;
  for (const auto& dev : cal.per_device) anchor += dcp::empirical_quantile(dev, pin.gamma);
  anchor /= 8.0;
  pin.s0 = anchor;
  cfg.anchor_mode = QdcpConfig::AnchorMode::explicit_value;
  cfg.s0 = anchor;

  const dcp::UStar u_star = dcp::qdcp_u_star_kkt(cal, topo, pin);
  const dcp::SpectralSummary spectral = dcp::spectral_summary(topo);
  const dcp::DeltaChoice choice =
      dcp::qdcp_best_delta(spectral, cfg, dcp::smoothness_constant(10, pin));

  std::vector<double> log_dist;
  std::vector<double> primal;
  const dcp::QdcpResult res = dcp::run_qdcp(cal, cfg, topo, [&](int, const QdcpState& st) {
    std::vector<double> dz(st.z.size()), dl(st.z.size());
    for (std::size_t q = 0; q < st.z.size(); ++q) {
      dz[q] = st.z[q] - u_star.z[q];
      dl[q] = st.lambda1[q] - u_star.lambda_tilde[q];
    }
    log_dist.push_back(std::log(std::max(dcp::g_norm(choice.c, dz, dl), 1e-300)));
  });

  // Least-squares slope over the second half must be at least as steep as
  // -log(1+delta)/2 per iteration.
  const std::size_t start = log_dist.size() / 2;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  double count = 0;
  for (std::size_t t = start; t < log_dist.size(); ++t) {
    if (log_dist[t] < std::log(1e-11)) break;
    const double x = static_cast<double>(t);
    sx += x;
    sy += log_dist[t];
    sxx += x * x;
    sxy += x * log_dist[t];
    count += 1.0;
  }
  REQUIRE(count >= 10);
  const double slope = (count * sxy - sx * sy) / (count * sxx - sx * sx);
  CHECK(slope <= -0.5 * std::log1p(choice.delta) + 1e-6);

  for (const auto& p : res.trajectory) primal.push_back(p.primal_residual);
  const std::size_t burn = primal.size() / 4;
  for (std::size_t t = burn; t + 1 < primal.size(); ++t)
    CHECK(primal[t + 1] <= primal[t] * (1.0 + 1e-9) + 1e-13);
}

TEST_CASE("run_qdcp single-node degenerate case") {
  Topology solo;
  solo.num_nodes = 1;
  solo.kind = GraphKind::chain;
  CalibrationData cal;
  cal.per_device = {{0.1, 0.4, 0.2, 0.8, 0.6}};
  QdcpConfig cfg;
  cfg.alpha = 0.2;
  cfg.iterations = 1;
  cfg.kappa = 500.0;
  cfg.mu = 100.0;
  const dcp::QdcpResult res = dcp::run_qdcp(cal, cfg, solo);
  PinballParams pin = test_params(res.gamma, cfg.kappa, cfg.mu, res.s0);
  pin.epsilon0 = cfg.epsilon0;
  const double direct = dcp::centralized_smoothed_minimizer(cal.per_device[0], pin);
  CHECK(res.s_bar == doctest::Approx(direct).epsilon(1e-8));
  CHECK(res.bounds.eps_T == 0.0);
  CHECK(res.threshold == doctest::Approx(direct + res.bounds.eps_tilde0));
}

TEST_CASE("paper-default configuration completes quickly") {
  // K=20, n_k=50, alpha=0.1, kappa=mu=2000, T=1500, eps0=0.1.
  dcp::SyntheticConfig synth;
  synth.num_devices = 20;
  synth.per_device_size = 50;
  synth.num_tests = 1;
  synth.seed = 42;
  const dcp::SyntheticData data = dcp::generate_synthetic(synth);
  const Topology topo = dcp::build_topology(GraphKind::torus, 20);
  QdcpConfig cfg;
  cfg.alpha = 0.1;
  cfg.iterations = 1500;
  cfg.kappa = 2000.0;
  cfg.mu = 2000.0;
  cfg.epsilon0 = 0.1;
  cfg.u_star_mode = QdcpConfig::UStarMode::kkt;
  const dcp::QdcpResult res = dcp::run_qdcp(data.calibration, cfg, topo);
  CHECK(std::isfinite(res.threshold));
  CHECK(res.gamma == doctest::Approx(0.9 * 1.02));
  CHECK(res.bounds.eps_tilde0 >= 0.1);
  CHECK(res.comm_bits == 1500LL * 64LL);
}

TEST_CASE("prediction sets from a threshold") {
  dcp::TestInstance test;
  test.candidate_scores = {0.2, 0.5, 0.9};
  test.true_label = 0;
  CHECK(dcp::qdcp_prediction_set(test, std::numeric_limits<double>::infinity()).size() == 3);
  CHECK(dcp::qdcp_prediction_set(test, 0.1).empty());
  const std::vector<int> expected = {0, 1};
  CHECK(dcp::qdcp_prediction_set(test, 0.5) == expected);
}

TEST_CASE("distributed averaging reaches the mean") {
  const Topology topo = dcp::build_topology(GraphKind::chain, 10);
  const dcp::ConsensusMatrix w = dcp::best_constant_consensus(topo);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> values(10);
  double mean = 0.0;
  for (double& v : values) {
    v = unif(rng);
    mean += v;
  }
  mean /= 10.0;
  const dcp::AveragingResult res = dcp::distributed_average(values, w, topo, 1.0, 64);
  CHECK(res.spread <= 1e-9);
  CHECK(res.value == doctest::Approx(mean).epsilon(1e-9));
  CHECK(res.rounds > 0);
}
