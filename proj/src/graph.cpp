#include "dcp/graph.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <random>
#include <set>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace dcp {

std::string to_string(GraphKind kind) {
  switch (kind) {
    case GraphKind::chain: return "chain";
    case GraphKind::cycle: return "cycle";
    case GraphKind::star: return "star";
    case GraphKind::torus: return "torus";
    case GraphKind::complete: return "complete";
    case GraphKind::erdos_renyi: return "erdos_renyi";
  }
  throw std::logic_error("unknown GraphKind");
}

GraphKind graph_kind_from_string(const std::string& name) {
  if (name == "chain") return GraphKind::chain;
  if (name == "cycle") return GraphKind::cycle;
  if (name == "star") return GraphKind::star;
  if (name == "torus") return GraphKind::torus;
  if (name == "complete") return GraphKind::complete;
  if (name == "erdos_renyi") return GraphKind::erdos_renyi;
  throw std::invalid_argument("unknown topology kind: " + name);
}

std::vector<int> Topology::degrees() const {
  std::vector<int> deg(num_nodes, 0);
  for (auto [i, j] : edges) {
    ++deg[i];
    ++deg[j];
  }
  return deg;
}

std::vector<std::vector<int>> Topology::adjacency_lists() const {
  std::vector<std::vector<int>> adj(num_nodes);
  for (auto [i, j] : edges) {
    adj[i].push_back(j);
    adj[j].push_back(i);
  }
  return adj;
}

namespace {

bool is_connected(int num_nodes, const std::vector<std::pair<int, int>>& edges) {
  if (num_nodes <= 0) return false;
  std::vector<std::vector<int>> adj(num_nodes);
  for (auto [i, j] : edges) {
    adj[i].push_back(j);
    adj[j].push_back(i);
  }
  std::vector<char> seen(num_nodes, 0);
  std::queue<int> queue;
  queue.push(0);
  seen[0] = 1;
  int visited = 1;
  while (!queue.empty()) {
    const int u = queue.front();
    queue.pop();
    for (int v : adj[u]) {
      if (!seen[v]) {
        seen[v] = 1;
        ++visited;
        queue.push(v);
      }
    }
  }
  return visited == num_nodes;
}

std::pair<int, int> default_torus_dims(int num_nodes) {
  // Most-square factorization with both factors >= 2.
  for (int r = static_cast<int>(std::sqrt(static_cast<double>(num_nodes))); r >= 2; --r) {
    if (num_nodes % r == 0 && num_nodes / r >= 2) return {r, num_nodes / r};
  }
  throw std::invalid_argument("torus: K = " + std::to_string(num_nodes) +
                              " has no factorization rows x cols with rows, cols >= 2");
}

}  // namespace

Topology Topology::from_edges(int num_nodes, std::vector<std::pair<int, int>> edges,
                              GraphKind kind, std::optional<std::uint64_t> seed) {
  // A single node with no edges is admitted as the degenerate network.
  if (num_nodes < 1) throw std::invalid_argument("topology: K must be >= 1");
  for (auto& [i, j] : edges) {
    if (i == j) throw std::invalid_argument("topology: self-loop rejected");
    if (i > j) std::swap(i, j);
    if (i < 0 || j >= num_nodes) throw std::invalid_argument("topology: node index out of range");
  }
  std::sort(edges.begin(), edges.end());
  if (std::adjacent_find(edges.begin(), edges.end()) != edges.end())
    throw std::invalid_argument("topology: duplicate edge rejected");
  if (!is_connected(num_nodes, edges))
    throw std::invalid_argument("topology: graph is not connected");
  Topology topo;
  topo.num_nodes = num_nodes;
  topo.edges = std::move(edges);
  topo.kind = kind;
  topo.seed = seed;
  return topo;
}

Topology build_topology(GraphKind kind, int num_nodes, const TopologyParams& params) {
  if (num_nodes < 2) throw std::invalid_argument("build_topology: K must be >= 2");
  std::vector<std::pair<int, int>> edges;
  switch (kind) {
    case GraphKind::chain:
      for (int i = 0; i + 1 < num_nodes; ++i) edges.emplace_back(i, i + 1);
      break;
    case GraphKind::cycle:
      for (int i = 0; i + 1 < num_nodes; ++i) edges.emplace_back(i, i + 1);
      edges.emplace_back(0, num_nodes - 1);
      break;
    case GraphKind::star:
      for (int i = 1; i < num_nodes; ++i) edges.emplace_back(0, i);
      break;
    case GraphKind::complete:
      for (int i = 0; i < num_nodes; ++i)
        for (int j = i + 1; j < num_nodes; ++j) edges.emplace_back(i, j);
      break;
    case GraphKind::torus: {
      auto [rows, cols] = params.torus_dims ? *params.torus_dims : default_torus_dims(num_nodes);
      if (rows < 2 || cols < 2)
        throw std::invalid_argument("torus: rows and cols must both be >= 2");
      if (rows * cols != num_nodes)
        throw std::invalid_argument("torus: rows * cols must equal K");
      // Wrap-around 4-neighbor grid; a length-2 dimension would otherwise
      // produce each wrap edge twice, so deduplicate through a set.
      std::set<std::pair<int, int>> unique_edges;
      auto id = [cols = cols](int r, int c) { return r * cols + c; };
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
          int a = id(r, c);
          int b = id((r + 1) % rows, c);
          unique_edges.insert({std::min(a, b), std::max(a, b)});
          b = id(r, (c + 1) % cols);
          unique_edges.insert({std::min(a, b), std::max(a, b)});
        }
      }
      edges.assign(unique_edges.begin(), unique_edges.end());
      break;
    }
    case GraphKind::erdos_renyi: {
      if (!(params.edge_prob > 0.0 && params.edge_prob <= 1.0))
        throw std::invalid_argument("erdos_renyi: edge_prob must be in (0, 1]");
      std::mt19937_64 rng(params.seed);
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      for (int attempt = 0; attempt < params.max_connect_attempts; ++attempt) {
        edges.clear();
        for (int i = 0; i < num_nodes; ++i)
          for (int j = i + 1; j < num_nodes; ++j)
            if (unif(rng) < params.edge_prob) edges.emplace_back(i, j);
        if (is_connected(num_nodes, edges))
          return Topology::from_edges(num_nodes, std::move(edges), kind, params.seed);
      }
      throw std::runtime_error("erdos_renyi: no connected sample after " +
                               std::to_string(params.max_connect_attempts) + " attempts");
    }
  }
  std::optional<std::uint64_t> seed;
  return Topology::from_edges(num_nodes, std::move(edges), kind, seed);
}

nlohmann::json topology_to_json(const Topology& topo) {
  nlohmann::json j;
  j["kind"] = to_string(topo.kind);
  j["K"] = topo.num_nodes;
  nlohmann::json edges = nlohmann::json::array();
  for (auto [a, b] : topo.edges) edges.push_back({a, b});
  j["edges"] = edges;
  if (topo.seed) j["seed"] = *topo.seed;
  return j;
}

Topology topology_from_json(const nlohmann::json& j) {
  const GraphKind kind = graph_kind_from_string(j.at("kind").get<std::string>());
  const int num_nodes = j.at("K").get<int>();
  std::vector<std::pair<int, int>> edges;
  for (const auto& e : j.at("edges")) edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
  std::optional<std::uint64_t> seed;
  if (j.contains("seed")) seed = j.at("seed").get<std::uint64_t>();
  return Topology::from_edges(num_nodes, std::move(edges), kind, seed);
}

IncidenceMatrices incidence(const Topology& topo) {
  const std::size_t num_edges = topo.edges.size();
  const std::size_t num_nodes = static_cast<std::size_t>(topo.num_nodes);
  IncidenceMatrices inc;
  inc.a1 = Matrix(num_edges, num_nodes);
  inc.a2 = Matrix(num_edges, num_nodes);
  for (std::size_t q = 0; q < num_edges; ++q) {
    inc.a1(q, topo.edges[q].first) = 1.0;
    inc.a2(q, topo.edges[q].second) = 1.0;
  }
  inc.m_plus = Matrix(num_nodes, num_edges);
  inc.m_minus = Matrix(num_nodes, num_edges);
  for (std::size_t q = 0; q < num_edges; ++q) {
    const auto [i, j] = topo.edges[q];
    inc.m_plus(i, q) = 1.0;
    inc.m_plus(j, q) = 1.0;
    inc.m_minus(i, q) = 1.0;
    inc.m_minus(j, q) = -1.0;
  }
  return inc;
}

Matrix laplacian(const Topology& topo) {
  const std::size_t n = static_cast<std::size_t>(topo.num_nodes);
  Matrix lap(n, n);
  for (auto [i, j] : topo.edges) {
    lap(i, i) += 1.0;
    lap(j, j) += 1.0;
    lap(i, j) -= 1.0;
    lap(j, i) -= 1.0;
  }
  return lap;
}

ConsensusMatrix best_constant_consensus(const Topology& topo) {
  if (topo.num_nodes == 1) {
    ConsensusMatrix cm;
    cm.w = Matrix::identity(1);
    cm.spectral_gap = 1.0;
    return cm;
  }
  const Matrix lap = laplacian(topo);
  const std::vector<double> ev = symmetric_eigenvalues(lap);
  const std::size_t n = ev.size();
  const double lambda1 = ev.front();
  const double lambda_km1 = ev[n - 2];  // second smallest
  if (lambda_km1 <= 1e-9)
    throw std::runtime_error("best_constant_consensus: vanishing algebraic connectivity");
  const double a = 2.0 / (lambda1 + lambda_km1);

  ConsensusMatrix cm;
  cm.w = Matrix(n, n);
  const std::vector<int> deg = topo.degrees();
  for (std::size_t k = 0; k < n; ++k) cm.w(k, k) = 1.0 - deg[k] * a;
  for (auto [i, j] : topo.edges) {
    cm.w(i, j) = a;
    cm.w(j, i) = a;
  }

  // |lambda_2| taken as the largest non-principal magnitude; for the best
  // constant weight the second-largest and smallest eigenvalues tie in
  // magnitude, so this matches 1 - |lambda_2(W)|.
  const std::vector<double> wev = symmetric_eigenvalues(cm.w);
  double mag = 0.0;
  for (std::size_t i = 1; i < wev.size(); ++i) mag = std::max(mag, std::abs(wev[i]));
  cm.spectral_gap = 1.0 - mag;
  return cm;
}

SpectralSummary spectral_summary(const Topology& topo) {
  const IncidenceMatrices inc = incidence(topo);
  SpectralSummary s;
  auto [sp_max, sp_min] = singular_values(inc.m_plus);
  (void)sp_min;
  auto [sm_max, sm_min] = singular_values(inc.m_minus);
  (void)sm_max;
  s.sigma_max_m_plus = sp_max;
  s.sigma_min_m_minus = sm_min;
  const std::vector<double> lev = symmetric_eigenvalues(laplacian(topo));
  s.lambda1_laplacian = lev.front();
  s.lambda_km1_laplacian = lev[lev.size() - 2];
  s.lambda2_w_abs = 1.0 - best_constant_consensus(topo).spectral_gap;
  return s;
}

}  // namespace dcp
