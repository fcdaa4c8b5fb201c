#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dualgan/common.hpp"
#include "dualgan/data_io.hpp"
#include "dualgan/detectors.hpp"

namespace dualgan::evalbench {

// Mann-Whitney AUC: probability a random anomaly outscores a random normal,
// ties counted one half. Labels: 0 = anomaly, 1 = normal.
double roc_auc(const Vector& outlier_scores, const std::vector<int>& ground_truth);

// Distance to the k-th nearest training neighbor.
Vector knn_score(const Matrix& train, const Matrix& test, Index k);
// Standard reachability-distance local outlier factor against training data.
Vector lof_score(const Matrix& train, const Matrix& test, Index k);
// Distance to the nearest of k learned centroids (Lloyd with restarts).
Vector kmeans_score(const Matrix& train, const Matrix& test, Index k, std::uint64_t seed = 0);

struct BaselineResult {
  Index best_k = 0;
  double auc = 0.0;
};

// Exhaustive search over the protocol ranges (log-spaced above 50 candidates):
// knn/lof k in [2, ceil(n/10)], kmeans k in [1, ceil(n/100)].
BaselineResult best_baseline(const data_io::LabeledTable& train, const data_io::LabeledTable& test,
                             const std::string& method, std::uint64_t seed = 0);

struct BenchResult {
  std::string dataset;
  std::string method;
  std::uint64_t seed = 0;
  double ratio = -1.0;  // identified-anomaly ratio; -1 = dataset's own flags
  std::optional<double> auc;
  double seconds = 0.0;
  std::string error;  // non-empty when the cell failed
};

struct BenchSummary {
  // per (dataset, method): mean AUC over seeds; NaN when all cells failed
  std::vector<std::string> datasets;
  std::vector<std::string> methods;
  Matrix mean_auc;           // datasets x methods
  std::vector<double> average_rank;  // per method, rank 1 = best, ties averaged
  Index failed_cells = 0;
};

struct NamedDataset {
  std::string name;
  data_io::LabeledTable train;
  data_io::LabeledTable test;
};

// Runs one cell: fit on the train split (baselines use the oracle k search)
// and report test AUC.
BenchResult run_cell(const NamedDataset& dataset, const std::string& method, std::uint64_t seed,
                     const detectors::FitConfig& base_config);

std::vector<BenchResult> run_benchmark(const std::vector<NamedDataset>& datasets,
                                       const std::vector<std::string>& methods,
                                       const std::vector<std::uint64_t>& seeds,
                                       const detectors::FitConfig& base_config);

BenchSummary summarize(const std::vector<BenchResult>& results);

// Re-samples the identified flags at each ratio and fits each method.
std::vector<BenchResult> ratio_sweep(const NamedDataset& dataset,
                                     const std::vector<std::string>& methods,
                                     const std::vector<double>& ratios,
                                     const std::vector<std::uint64_t>& seeds,
                                     const detectors::FitConfig& base_config);

std::string results_to_csv(const std::vector<BenchResult>& results, bool include_timings = false);
std::string summary_to_json(const BenchSummary& summary);

bool is_gan_method(const std::string& method);

}  // namespace dualgan::evalbench
