#include "dualgan/evalbench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"

namespace dualgan::evalbench {
namespace {

std::vector<double> average_ranks_ascending(const std::vector<double>& values) {
  // rank 1 = smallest value; ties averaged
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
    i = j + 1;
  }
  return ranks;
}

Matrix pairwise_sq_dist(const Matrix& A, const Matrix& B) {
  Matrix d2 = -2.0 * A * B.transpose();
  d2.colwise() += A.rowwise().squaredNorm();
  d2.rowwise() += B.rowwise().squaredNorm().transpose();
  return d2.cwiseMax(0.0);
}

// k smallest entries of a row (excluding excluded_col if >= 0), ties by index
void k_smallest(const Vector& dists, Index k, Index excluded_col,
                std::vector<Index>& out_idx) {
  std::vector<std::pair<double, Index>> cand;
  cand.reserve(static_cast<std::size_t>(dists.size()));
  for (Index j = 0; j < dists.size(); ++j)
    if (j != excluded_col) cand.emplace_back(dists[j], j);
  const Index kk = std::min<Index>(k, static_cast<Index>(cand.size()));
  std::partial_sort(cand.begin(), cand.begin() + kk, cand.end());
  out_idx.clear();
  for (Index t = 0; t < kk; ++t) out_idx.push_back(cand[static_cast<std::size_t>(t)].second);
}

std::vector<Index> candidate_ks(Index lo, Index hi) {
  std::vector<Index> ks;
  if (hi < lo) hi = lo;
  const Index count = hi - lo + 1;
  if (count <= 50) {
    for (Index k = lo; k <= hi; ++k) ks.push_back(k);
  } else {
    // log-spaced grid of 50 candidates, deduplicated
    for (int t = 0; t < 50; ++t) {
      const double f = static_cast<double>(t) / 49.0;
      const Index k = static_cast<Index>(std::llround(
          std::exp(std::log(static_cast<double>(lo)) +
                   f * (std::log(static_cast<double>(hi)) - std::log(static_cast<double>(lo))))));
      if (ks.empty() || ks.back() != k) ks.push_back(k);
    }
  }
  return ks;
}

}  // namespace

double roc_auc(const Vector& outlier_scores, const std::vector<int>& ground_truth) {
  const Index n = outlier_scores.size();
  if (static_cast<Index>(ground_truth.size()) != n)
    throw ShapeError("roc_auc: score/label length mismatch");
  Index n_anom = 0, n_norm = 0;
  for (int y : ground_truth) (y == 0 ? n_anom : n_norm) += 1;
  if (n_anom == 0 || n_norm == 0)
    throw DegenerateInputError("roc_auc: both classes must be present");

  // rank-sum formulation with average ranks for ties
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return outlier_scores[a] < outlier_scores[b];
  });
  double anom_rank_sum = 0.0;
  Index i = 0;
  while (i < n) {
    Index j = i;
    while (j + 1 < n &&
           outlier_scores[order[static_cast<std::size_t>(j + 1)]] ==
               outlier_scores[order[static_cast<std::size_t>(i)]])
      ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Index t = i; t <= j; ++t)
      if (ground_truth[static_cast<std::size_t>(order[static_cast<std::size_t>(t)])] == 0)
        anom_rank_sum += avg;
    i = j + 1;
  }
  const double na = static_cast<double>(n_anom);
  const double nn = static_cast<double>(n_norm);
  return (anom_rank_sum - na * (na + 1.0) / 2.0) / (na * nn);
}

Vector knn_score(const Matrix& train, const Matrix& test, Index k) {
  if (k < 1 || k >= train.rows()) throw ConfigError("knn_score: k out of range");
  const Matrix d2 = pairwise_sq_dist(test, train);
  Vector scores(test.rows());
  std::vector<double> row(static_cast<std::size_t>(train.rows()));
  for (Index i = 0; i < test.rows(); ++i) {
    for (Index j = 0; j < train.rows(); ++j) row[static_cast<std::size_t>(j)] = d2(i, j);
    std::nth_element(row.begin(), row.begin() + (k - 1), row.end());
    scores[i] = std::sqrt(row[static_cast<std::size_t>(k - 1)]);
  }
  return scores;
}

Vector lof_score(const Matrix& train, const Matrix& test, Index k) {
  const Index n = train.rows();
  if (k < 1 || k >= n) throw ConfigError("lof_score: k out of range");

  const Matrix train_d2 = pairwise_sq_dist(train, train);
  std::vector<std::vector<Index>> train_nn(static_cast<std::size_t>(n));
  Vector k_dist(n);  // distance to the k-th neighbor among training rows
  std::vector<Index> idx;
  for (Index i = 0; i < n; ++i) {
    k_smallest(train_d2.row(i).transpose(), k, i, idx);
    train_nn[static_cast<std::size_t>(i)] = idx;
    k_dist[i] = std::sqrt(train_d2(i, idx.back()));
  }
  // local reachability density of every training row
  Vector lrd(n);
  for (Index i = 0; i < n; ++i) {
    double sum = 0.0;
    for (Index j : train_nn[static_cast<std::size_t>(i)])
      sum += std::max(k_dist[j], std::sqrt(train_d2(i, j)));
    lrd[i] = sum > 0.0 ? static_cast<double>(train_nn[static_cast<std::size_t>(i)].size()) / sum
                       : std::numeric_limits<double>::infinity();
  }

  const Matrix test_d2 = pairwise_sq_dist(test, train);
  Vector scores(test.rows());
  for (Index i = 0; i < test.rows(); ++i) {
    k_smallest(test_d2.row(i).transpose(), k, -1, idx);
    double reach_sum = 0.0;
    double lrd_sum = 0.0;
    for (Index j : idx) {
      reach_sum += std::max(k_dist[j], std::sqrt(test_d2(i, j)));
      lrd_sum += lrd[j];
    }
    const double kk = static_cast<double>(idx.size());
    if (reach_sum <= 0.0) {
      scores[i] = 1.0;  // coincident with a dense training core
    } else {
      const double lrd_test = kk / reach_sum;
      scores[i] = (lrd_sum / kk) / lrd_test;
    }
  }
  return scores;
}

Vector kmeans_score(const Matrix& train, const Matrix& test, Index k, std::uint64_t seed) {
  const Index n = train.rows();
  if (k < 1 || k > n) throw ConfigError("kmeans_score: k out of range");
  Rng rng(seed);
  Matrix best_centroids;
  double best_inertia = std::numeric_limits<double>::infinity();
  for (int restart = 0; restart < 10; ++restart) {
    const auto init = rng.sample_without_replacement(n, k);
    Matrix centroids = rows_of(train, init);
    std::vector<Index> labels(static_cast<std::size_t>(n), 0);
    for (int iter = 0; iter < 100; ++iter) {
      const Matrix d2 = pairwise_sq_dist(train, centroids);
      bool changed = false;
      for (Index i = 0; i < n; ++i) {
        Index arg = 0;
        d2.row(i).minCoeff(&arg);
        if (labels[static_cast<std::size_t>(i)] != arg) {
          labels[static_cast<std::size_t>(i)] = arg;
          changed = true;
        }
      }
      Matrix sums = Matrix::Zero(k, train.cols());
      std::vector<Index> counts(static_cast<std::size_t>(k), 0);
      for (Index i = 0; i < n; ++i) {
        sums.row(labels[static_cast<std::size_t>(i)]) += train.row(i);
        ++counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])];
      }
      for (Index c = 0; c < k; ++c)
        if (counts[static_cast<std::size_t>(c)] > 0)
          centroids.row(c) = sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
      if (!changed && iter > 0) break;
    }
    double inertia = 0.0;
    const Matrix d2 = pairwise_sq_dist(train, centroids);
    for (Index i = 0; i < n; ++i) inertia += d2.row(i).minCoeff();
    if (inertia < best_inertia) {
      best_inertia = inertia;
      best_centroids = centroids;
    }
  }
  const Matrix d2 = pairwise_sq_dist(test, best_centroids);
  Vector scores(test.rows());
  for (Index i = 0; i < test.rows(); ++i) scores[i] = std::sqrt(d2.row(i).minCoeff());
  return scores;
}

BaselineResult best_baseline(const data_io::LabeledTable& train, const data_io::LabeledTable& test,
                             const std::string& method, std::uint64_t seed) {
  if (!test.ground_truth) throw ConfigError("best_baseline: test ground truth required");
  const Index n = train.row_count();
  std::vector<Index> ks;
  if (method == "knn" || method == "lof") {
    ks = candidate_ks(2, (n + 9) / 10);
  } else if (method == "kmeans") {
    ks = candidate_ks(1, (n + 99) / 100);
  } else {
    throw ConfigError("best_baseline: unknown method " + method);
  }

  BaselineResult best;
  best.auc = -1.0;
  for (Index k : ks) {
    if (k >= n && method != "kmeans") continue;
    if (k > n) continue;
    Vector scores;
    if (method == "knn") {
      scores = knn_score(train.features, test.features, k);
    } else if (method == "lof") {
      scores = lof_score(train.features, test.features, k);
    } else {
      scores = kmeans_score(train.features, test.features, k, seed);
    }
    const double auc = roc_auc(scores, *test.ground_truth);
    if (auc > best.auc) {
      best.auc = auc;
      best.best_k = k;
    }
  }
  if (best.auc < 0.0) throw ConfigError("best_baseline: no admissible k in range");
  return best;
}

bool is_gan_method(const std::string& method) {
  return method == "dual_gan" || method == "rcc_dual_gan" || method == "mo_gan" ||
         method == "sup_gan" || method == "sup_rcc_gan";
}

BenchResult run_cell(const NamedDataset& dataset, const std::string& method, std::uint64_t seed,
                     const detectors::FitConfig& base_config) {
  BenchResult cell;
  cell.dataset = dataset.name;
  cell.method = method;
  cell.seed = seed;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    if (!dataset.test.ground_truth)
      throw ConfigError("benchmark: test split needs ground truth");
    if (is_gan_method(method)) {
      detectors::FitConfig config = base_config;
      config.mode = detectors::parse_mode(method);
      config.seed = seed;
      const data_io::Scaler scaler = data_io::fit_scaler(dataset.train);
      const data_io::LabeledTable train_scaled = data_io::apply_scaler(scaler, dataset.train);
      detectors::FitResult fit = detectors::fit(train_scaled, config);
      fit.model.scaler = scaler;
      const Matrix test_scaled = data_io::apply_scaler(scaler, dataset.test.features);
      const Vector scores = detectors::score(fit.model, test_scaled).scores;
      cell.auc = roc_auc(scores, *dataset.test.ground_truth);
    } else {
      const BaselineResult best = best_baseline(dataset.train, dataset.test, method, seed);
      cell.auc = best.auc;
    }
  } catch (const std::exception& e) {
    cell.error = e.what();
  }
  cell.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return cell;
}

std::vector<BenchResult> run_benchmark(const std::vector<NamedDataset>& datasets,
                                       const std::vector<std::string>& methods,
                                       const std::vector<std::uint64_t>& seeds,
                                       const detectors::FitConfig& base_config) {
  std::vector<BenchResult> results;
  for (const auto& dataset : datasets)
    for (const auto& method : methods)
      for (std::uint64_t seed : seeds)
        results.push_back(run_cell(dataset, method, seed, base_config));
  return results;
}

BenchSummary summarize(const std::vector<BenchResult>& results) {
  BenchSummary summary;
  for (const auto& r : results) {
    if (std::find(summary.datasets.begin(), summary.datasets.end(), r.dataset) ==
        summary.datasets.end())
      summary.datasets.push_back(r.dataset);
    if (std::find(summary.methods.begin(), summary.methods.end(), r.method) ==
        summary.methods.end())
      summary.methods.push_back(r.method);
    if (!r.error.empty()) ++summary.failed_cells;
  }
  const Index nd = static_cast<Index>(summary.datasets.size());
  const Index nm = static_cast<Index>(summary.methods.size());
  summary.mean_auc = Matrix::Constant(nd, nm, std::numeric_limits<double>::quiet_NaN());
  for (Index di = 0; di < nd; ++di) {
    for (Index mi = 0; mi < nm; ++mi) {
      double sum = 0.0;
      Index count = 0;
      for (const auto& r : results) {
        if (r.dataset != summary.datasets[static_cast<std::size_t>(di)] ||
            r.method != summary.methods[static_cast<std::size_t>(mi)] || !r.auc)
          continue;
        sum += *r.auc;
        ++count;
      }
      if (count > 0) summary.mean_auc(di, mi) = sum / static_cast<double>(count);
    }
  }
  // per-dataset ranks on -AUC (rank 1 = best), averaged over datasets
  summary.average_rank.assign(static_cast<std::size_t>(nm), 0.0);
  std::vector<Index> rank_counts(static_cast<std::size_t>(nm), 0);
  for (Index di = 0; di < nd; ++di) {
    std::vector<double> neg_auc;
    std::vector<Index> present;
    for (Index mi = 0; mi < nm; ++mi) {
      if (std::isnan(summary.mean_auc(di, mi))) continue;
      neg_auc.push_back(-summary.mean_auc(di, mi));
      present.push_back(mi);
    }
    const auto ranks = average_ranks_ascending(neg_auc);
    for (std::size_t t = 0; t < present.size(); ++t) {
      summary.average_rank[static_cast<std::size_t>(present[t])] += ranks[t];
      ++rank_counts[static_cast<std::size_t>(present[t])];
    }
  }
  for (std::size_t mi = 0; mi < summary.average_rank.size(); ++mi)
    summary.average_rank[mi] = rank_counts[mi] > 0
        ? summary.average_rank[mi] / static_cast<double>(rank_counts[mi])
        : std::numeric_limits<double>::quiet_NaN();
  return summary;
}

std::vector<BenchResult> ratio_sweep(const NamedDataset& dataset,
                                     const std::vector<std::string>& methods,
                                     const std::vector<double>& ratios,
                                     const std::vector<std::uint64_t>& seeds,
                                     const detectors::FitConfig& base_config) {
  if (!dataset.train.ground_truth)
    throw ConfigError("ratio_sweep: train ground truth required");
  std::vector<BenchResult> results;
  for (double ratio : ratios) {
    for (const auto& method : methods) {
      for (std::uint64_t seed : seeds) {
        NamedDataset cell_ds;
        cell_ds.name = dataset.name;
        cell_ds.train = data_io::sample_identified(dataset.train, ratio, seed ^ 0x5eed);
        cell_ds.test = dataset.test;
        BenchResult cell = run_cell(cell_ds, method, seed, base_config);
        cell.ratio = ratio;
        results.push_back(std::move(cell));
      }
    }
  }
  return results;
}

std::string results_to_csv(const std::vector<BenchResult>& results, bool include_timings) {
  std::ostringstream out;
  out << "dataset,method,seed,ratio,auc,seconds\n";
  char buf[64];
  for (const auto& r : results) {
    out << r.dataset << ',' << r.method << ',' << r.seed << ',';
    if (r.ratio >= 0.0) {
      std::snprintf(buf, sizeof(buf), "%.17g", r.ratio);
      out << buf;
    }
    out << ',';
    if (r.auc) {
      std::snprintf(buf, sizeof(buf), "%.17g", *r.auc);
      out << buf;
    }
    out << ',';
    if (include_timings) {
      std::snprintf(buf, sizeof(buf), "%.3f", r.seconds);
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

std::string summary_to_json(const BenchSummary& summary) {
  nlohmann::json j;
  j["datasets"] = summary.datasets;
  j["methods"] = summary.methods;
  j["failed_cells"] = summary.failed_cells;
  j["note"] = "adoa is not included; external method";
  nlohmann::json mean = nlohmann::json::object();
  for (std::size_t di = 0; di < summary.datasets.size(); ++di) {
    nlohmann::json row = nlohmann::json::object();
    for (std::size_t mi = 0; mi < summary.methods.size(); ++mi) {
      const double v = summary.mean_auc(static_cast<Index>(di), static_cast<Index>(mi));
      if (!std::isnan(v)) row[summary.methods[mi]] = v;
    }
    mean[summary.datasets[di]] = std::move(row);
  }
  j["mean_auc"] = std::move(mean);
  nlohmann::json ranks = nlohmann::json::object();
  for (std::size_t mi = 0; mi < summary.methods.size(); ++mi)
    if (!std::isnan(summary.average_rank[mi])) ranks[summary.methods[mi]] = summary.average_rank[mi];
  j["average_rank"] = std::move(ranks);
  return j.dump(2) + "\n";
}

}  // namespace dualgan::evalbench
