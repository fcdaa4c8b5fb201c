#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "dualgan/common.hpp"

namespace dualgan::rcc {

struct KnnGraph {
  // undirected edges stored once with first < second
  std::vector<std::pair<Index, Index>> edges;
  std::vector<double> edge_weights;  // filled by edge_weights()
  Index node_count = 0;
};

struct RccConfig {
  Index graph_k = 10;
  std::optional<double> lambda;        // nullopt = auto balance
  std::optional<double> delta;         // nullopt = auto from representative space
  double mu_decay = 0.5;
  Index mu_update_period = 4;
  Index max_outer_iters = 100;
  double convergence_tol = 1e-5;
  Index min_cluster_size = 5;          // smaller clusters get merged
};

struct Clustering {
  Matrix representatives;              // n x d
  std::vector<Index> labels;           // contiguous ids starting at 0
  Index cluster_count = 0;
  std::vector<double> objective_trace; // one value per outer iteration
  std::vector<double> mu_trace;        // continuation value per outer iteration
};

KnnGraph mutual_knn_graph(const Matrix& X, Index graph_k);

// omega_pq = n / (|E| * sqrt(deg_p * deg_q))
void compute_edge_weights(KnnGraph& graph);

// Geman-McClure penalized representatives with mu continuation; returns the
// optimized U and the per-outer-iteration objective values.
std::pair<Matrix, std::vector<double>> optimize_representatives(
    const Matrix& X, const KnnGraph& graph, const RccConfig& config,
    std::vector<double>* mu_trace = nullptr);

// Connected components of the graph restricted to edges with ||u_p - u_q|| < delta.
Clustering extract_clusters(const Matrix& U, const KnnGraph& graph, double delta);

Clustering cluster(const Matrix& X, const RccConfig& config = {});

// Clusters below min_size are absorbed into the cluster with the nearest
// centroid (in X-space); labels stay contiguous.
void merge_small_clusters(Clustering& clustering, const Matrix& X, Index min_size);

std::vector<std::vector<Index>> cluster_members(const Clustering& clustering);

}  // namespace dualgan::rcc
