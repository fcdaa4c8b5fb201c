#include "dualgan/rcc.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace dualgan::rcc {
namespace {

double geman_mcclure(double y, double mu) { return mu * y * y / (mu + y * y); }

double objective(const Matrix& X, const Matrix& U, const KnnGraph& graph, double lambda,
                 double mu) {
  double data_term = 0.5 * (X - U).squaredNorm();
  double pair_term = 0.0;
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    const auto [p, q] = graph.edges[e];
    const double y = (U.row(p) - U.row(q)).norm();
    pair_term += graph.edge_weights[e] * geman_mcclure(y, mu);
  }
  return data_term + 0.5 * lambda * pair_term;
}

struct DisjointSet {
  std::vector<Index> parent;
  explicit DisjointSet(Index n) : parent(static_cast<std::size_t>(n)) {
    std::iota(parent.begin(), parent.end(), Index{0});
  }
  Index find(Index x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  }
  void unite(Index a, Index b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
  }
};

}  // namespace

KnnGraph mutual_knn_graph(const Matrix& X, Index graph_k) {
  const Index n = X.rows();
  if (n < 2) throw DegenerateInputError("mutual_knn_graph: need at least 2 points");
  if (graph_k < 1) throw ConfigError("mutual_knn_graph: graph_k must be >= 1");
  const Index k = std::min(graph_k, n - 1);

  // pairwise squared distances, ties broken by lower index
  Matrix sq_norms = X.rowwise().squaredNorm();
  std::vector<std::vector<Index>> neighbors(static_cast<std::size_t>(n));
  std::vector<std::pair<double, Index>> cand;
  for (Index i = 0; i < n; ++i) {
    cand.clear();
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d2 = (X.row(i) - X.row(j)).squaredNorm();
      cand.emplace_back(d2, j);
    }
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
    auto& nb = neighbors[static_cast<std::size_t>(i)];
    for (Index t = 0; t < k; ++t) nb.push_back(cand[static_cast<std::size_t>(t)].second);
    std::sort(nb.begin(), nb.end());
  }

  KnnGraph graph;
  graph.node_count = n;
  for (Index i = 0; i < n; ++i) {
    for (Index j : neighbors[static_cast<std::size_t>(i)]) {
      if (j <= i) continue;
      const auto& nbj = neighbors[static_cast<std::size_t>(j)];
      if (std::binary_search(nbj.begin(), nbj.end(), i)) graph.edges.emplace_back(i, j);
    }
  }
  return graph;
}

void compute_edge_weights(KnnGraph& graph) {
  graph.edge_weights.clear();
  if (graph.edges.empty()) return;
  std::vector<Index> degree(static_cast<std::size_t>(graph.node_count), 0);
  for (const auto& [p, q] : graph.edges) {
    ++degree[static_cast<std::size_t>(p)];
    ++degree[static_cast<std::size_t>(q)];
  }
  const double n = static_cast<double>(graph.node_count);
  const double ne = static_cast<double>(graph.edges.size());
  graph.edge_weights.reserve(graph.edges.size());
  for (const auto& [p, q] : graph.edges) {
    const double dp = static_cast<double>(degree[static_cast<std::size_t>(p)]);
    const double dq = static_cast<double>(degree[static_cast<std::size_t>(q)]);
    graph.edge_weights.push_back(n / (ne * std::sqrt(dp * dq)));
  }
}

std::pair<Matrix, std::vector<double>> optimize_representatives(
    const Matrix& X, const KnnGraph& graph, const RccConfig& config,
    std::vector<double>* mu_trace) {
  const Index n = X.rows();
  if (graph.node_count != n)
    throw ShapeError("optimize_representatives: graph/data size mismatch");
  Matrix U = X;
  std::vector<double> trace;
  if (graph.edges.empty()) {
    trace.push_back(0.0);
    if (mu_trace) mu_trace->push_back(0.0);
    return {U, trace};
  }

  // continuation: mu starts at 3 * (max edge length)^2, floored at delta_x^2 / 2
  // where delta_x is half the mean mutual-kNN edge length in data space
  double max_edge_sq = 0.0;
  double mean_edge = 0.0;
  for (const auto& [p, q] : graph.edges) {
    const double d2 = (X.row(p) - X.row(q)).squaredNorm();
    max_edge_sq = std::max(max_edge_sq, d2);
    mean_edge += std::sqrt(d2);
  }
  mean_edge /= static_cast<double>(graph.edges.size());
  const double delta_x = 0.5 * mean_edge;
  const double mu_floor = std::max(delta_x * delta_x / 2.0, 1e-12);
  double mu = std::max(3.0 * max_edge_sq, mu_floor);

  double lambda;
  if (config.lambda) {
    lambda = *config.lambda;
  } else {
    double data_scale = X.rowwise().squaredNorm().mean();
    double pair_scale = 0.0;
    for (std::size_t e = 0; e < graph.edges.size(); ++e) {
      const auto& [p, q] = graph.edges[e];
      pair_scale += graph.edge_weights[e] * (X.row(p) - X.row(q)).squaredNorm();
    }
    pair_scale /= static_cast<double>(graph.edges.size());
    lambda = pair_scale > 0.0 ? data_scale / pair_scale : 1.0;
  }

  using Sparse = Eigen::SparseMatrix<double>;
  std::vector<Eigen::Triplet<double>> triplets;
  double prev_obj = std::numeric_limits<double>::infinity();
  for (Index outer = 0; outer < config.max_outer_iters; ++outer) {
    // line-process step: l_pq = (mu / (mu + y^2))^2 closed form
    // U-step: (I + lambda * L) U = X with L the weighted Laplacian
    triplets.clear();
    for (Index i = 0; i < n; ++i) triplets.emplace_back(i, i, 1.0);
    for (std::size_t e = 0; e < graph.edges.size(); ++e) {
      const auto& [p, q] = graph.edges[e];
      const double y2 = (U.row(p) - U.row(q)).squaredNorm();
      const double lp = (mu / (mu + y2)) * (mu / (mu + y2));
      const double w = lambda * graph.edge_weights[e] * lp;
      triplets.emplace_back(p, p, w);
      triplets.emplace_back(q, q, w);
      triplets.emplace_back(p, q, -w);
      triplets.emplace_back(q, p, -w);
    }
    Sparse A(n, n);
    A.setFromTriplets(triplets.begin(), triplets.end());
    Eigen::ConjugateGradient<Sparse, Eigen::Lower | Eigen::Upper> cg;
    cg.setTolerance(1e-8);
    cg.setMaxIterations(500);
    cg.compute(A);
    U = cg.solveWithGuess(X, U);

    const double obj = objective(X, U, graph, lambda, mu);
    if (!std::isfinite(obj)) throw NumericError("optimize_representatives: non-finite objective");
    trace.push_back(obj);
    if (mu_trace) mu_trace->push_back(mu);

    const bool mu_frozen = mu <= mu_floor;
    if (std::isfinite(prev_obj) && mu_frozen &&
        std::abs(prev_obj - obj) <= config.convergence_tol * std::max(1.0, std::abs(prev_obj)))
      break;
    prev_obj = obj;
    if ((outer + 1) % config.mu_update_period == 0)
      mu = std::max(mu * config.mu_decay, mu_floor);
  }
  return {U, trace};
}

Clustering extract_clusters(const Matrix& U, const KnnGraph& graph, double delta) {
  const Index n = U.rows();
  DisjointSet ds(n);
  for (const auto& [p, q] : graph.edges)
    if ((U.row(p) - U.row(q)).norm() < delta) ds.unite(p, q);

  Clustering out;
  out.representatives = U;
  out.labels.assign(static_cast<std::size_t>(n), -1);
  std::vector<Index> root_label(static_cast<std::size_t>(n), -1);
  Index next = 0;
  for (Index i = 0; i < n; ++i) {
    const Index r = ds.find(i);
    if (root_label[static_cast<std::size_t>(r)] < 0) root_label[static_cast<std::size_t>(r)] = next++;
    out.labels[static_cast<std::size_t>(i)] = root_label[static_cast<std::size_t>(r)];
  }
  out.cluster_count = next;
  return out;
}

Clustering cluster(const Matrix& X, const RccConfig& config) {
  const Index n = X.rows();
  if (n < 1) throw DegenerateInputError("cluster: empty input");
  if (n == 1) {
    Clustering out;
    out.representatives = X;
    out.labels = {0};
    out.cluster_count = 1;
    out.objective_trace = {0.0};
    return out;
  }
  KnnGraph graph = mutual_knn_graph(X, config.graph_k);
  compute_edge_weights(graph);
  std::vector<double> mu_trace;
  auto [U, trace] = optimize_representatives(X, graph, config, &mu_trace);

  double delta;
  if (config.delta) {
    delta = *config.delta;
  } else {
    // half the mean mutual-kNN edge length in data space: safely above the
    // contracted within-cluster edge lengths and below separation distances
    double sum = 0.0;
    Index count = 0;
    for (const auto& [p, q] : graph.edges) {
      sum += (X.row(p) - X.row(q)).norm();
      ++count;
    }
    delta = count > 0 ? 0.5 * sum / static_cast<double>(count) : 0.0;
  }
  Clustering out = extract_clusters(U, graph, delta);
  out.objective_trace = std::move(trace);
  out.mu_trace = std::move(mu_trace);
  if (config.min_cluster_size > 1) merge_small_clusters(out, X, config.min_cluster_size);
  return out;
}

void merge_small_clusters(Clustering& clustering, const Matrix& X, Index min_size) {
  const Index n = static_cast<Index>(clustering.labels.size());
  for (;;) {
    const Index k = clustering.cluster_count;
    if (k <= 1) return;
    std::vector<Index> sizes(static_cast<std::size_t>(k), 0);
    Matrix centroids = Matrix::Zero(k, X.cols());
    for (Index i = 0; i < n; ++i) {
      const Index c = clustering.labels[static_cast<std::size_t>(i)];
      ++sizes[static_cast<std::size_t>(c)];
      centroids.row(c) += X.row(i);
    }
    for (Index c = 0; c < k; ++c)
      centroids.row(c) /= static_cast<double>(sizes[static_cast<std::size_t>(c)]);

    // merge the smallest undersized cluster into its nearest-centroid neighbor;
    // when no cluster reaches the floor there is no valid merge target, so the
    // clustering is kept as-is
    bool any_full = false;
    for (Index c = 0; c < k; ++c)
      if (sizes[static_cast<std::size_t>(c)] >= min_size) any_full = true;
    if (!any_full) return;
    Index victim = -1;
    for (Index c = 0; c < k; ++c)
      if (sizes[static_cast<std::size_t>(c)] < min_size &&
          (victim < 0 || sizes[static_cast<std::size_t>(c)] < sizes[static_cast<std::size_t>(victim)]))
        victim = c;
    if (victim < 0) return;

    Index target = -1;
    double best = std::numeric_limits<double>::infinity();
    for (Index c = 0; c < k; ++c) {
      if (c == victim) continue;
      const double d = (centroids.row(c) - centroids.row(victim)).squaredNorm();
      if (d < best) {
        best = d;
        target = c;
      }
    }
    for (auto& label : clustering.labels) {
      if (label == victim) label = target;
      if (label > victim) --label;
    }
    clustering.cluster_count = k - 1;
  }
}

std::vector<std::vector<Index>> cluster_members(const Clustering& clustering) {
  std::vector<std::vector<Index>> members(static_cast<std::size_t>(clustering.cluster_count));
  for (std::size_t i = 0; i < clustering.labels.size(); ++i)
    members[static_cast<std::size_t>(clustering.labels[i])].push_back(static_cast<Index>(i));
  return members;
}

}  // namespace dualgan::rcc
