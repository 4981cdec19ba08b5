#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "dcp/linalg.hpp"

namespace dcp {

enum class GraphKind { chain, cycle, star, torus, complete, erdos_renyi };

std::string to_string(GraphKind kind);
GraphKind graph_kind_from_string(const std::string& name);

struct TopologyParams {
  double edge_prob = 0.5;                               // erdos_renyi only
  std::uint64_t seed = 0;                               // erdos_renyi only
  std::optional<std::pair<int, int>> torus_dims;        // (rows, cols), both >= 2
  int max_connect_attempts = 1000;                      // erdos_renyi resampling cap
};

/// Undirected connected graph with a fixed edge indexing. Edges are stored as
/// (i, j) with i < j, sorted lexicographically; the edge index q is the list
/// position.
struct Topology {
  int num_nodes = 0;
  std::vector<std::pair<int, int>> edges;
  GraphKind kind = GraphKind::chain;
  std::optional<std::uint64_t> seed;

  int num_edges() const { return static_cast<int>(edges.size()); }
  std::vector<int> degrees() const;
  std::vector<std::vector<int>> adjacency_lists() const;

  /// Validates and normalizes an edge list (sorting, i<j, no self-loops or
  /// duplicates, connectivity).
  static Topology from_edges(int num_nodes, std::vector<std::pair<int, int>> edges,
                             GraphKind kind, std::optional<std::uint64_t> seed = std::nullopt);
};

Topology build_topology(GraphKind kind, int num_nodes, const TopologyParams& params = {});

nlohmann::json topology_to_json(const Topology& topo);
Topology topology_from_json(const nlohmann::json& j);

/// A1/A2 are ExK with one unit entry per row: A1[q,i] = A2[q,j] = 1 for edge
/// q = (i, j). M_plus = A1^T + A2^T and M_minus = A1^T - A2^T are KxE.
struct IncidenceMatrices {
  Matrix a1, a2;
  Matrix m_plus, m_minus;
};

IncidenceMatrices incidence(const Topology& topo);

Matrix laplacian(const Topology& topo);

struct ConsensusMatrix {
  Matrix w;             // KxK, symmetric, rows sum to 1
  double spectral_gap;  // 1 - |lambda_2(W)|, in (0, 1]
};

/// Constant edge weight a = 2 / (lambda_1(L) + lambda_{K-1}(L)).
ConsensusMatrix best_constant_consensus(const Topology& topo);

struct SpectralSummary {
  double sigma_max_m_plus = 0.0;
  double sigma_min_m_minus = 0.0;
  double lambda1_laplacian = 0.0;
  double lambda_km1_laplacian = 0.0;
  double lambda2_w_abs = 0.0;
};

SpectralSummary spectral_summary(const Topology& topo);

}  // namespace dcp
