// Acceptance checks for the detector suite: one PASS/FAIL line per criterion.
// Exits nonzero when any criterion fails.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "dualgan/data_io.hpp"
#include "dualgan/detectors.hpp"
#include "dualgan/evalbench.hpp"
#include "dualgan/gan.hpp"
#include "dualgan/indicators.hpp"
#include "dualgan/nn.hpp"
#include "dualgan/rcc.hpp"

using namespace dualgan;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(int criterion, bool pass, const std::string& detail) {
  std::cout << "CRITERION " << criterion << ": " << (pass ? "PASS" : "FAIL") << " - " << detail
            << std::endl;
  if (!pass) ++failures;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", x);
  return buf;
}

struct SeedRun {
  double auc = 0.0;
  bool group_separated = false;
  double seconds = 0.0;
};

struct Bench {
  data_io::SyntheticSpec spec;
  data_io::LabeledTable train, test;
  data_io::Scaler scaler;
  data_io::LabeledTable train_scaled;
  Matrix test_scaled;
  std::vector<bool> test_is_group;   // dense group-anomaly rows
  std::vector<bool> test_is_normal;  // ground-truth normals

  Bench() {
    spec.seed = 7;
    auto pair = data_io::gen_synthetic(spec);
    train = pair.first;
    test = pair.second;
    scaler = data_io::fit_scaler(train);
    train_scaled = data_io::apply_scaler(scaler, train);
    test_scaled = data_io::apply_scaler(scaler, test.features);
    const Index n = test.row_count();
    test_is_group.assign(static_cast<std::size_t>(n), false);
    test_is_normal.assign(static_cast<std::size_t>(n), false);
    for (Index i = 0; i < n; ++i) {
      if ((*test.ground_truth)[static_cast<std::size_t>(i)] == 1) {
        test_is_normal[static_cast<std::size_t>(i)] = true;
        continue;
      }
      for (const auto& blob : spec.group_anomaly_clusters) {
        const double dx = test.features(i, 0) - blob.cx;
        const double dy = test.features(i, 1) - blob.cy;
        if (std::sqrt(dx * dx + dy * dy) < 0.1) test_is_group[static_cast<std::size_t>(i)] = true;
      }
    }
  }

  SeedRun run(detectors::Mode mode, std::uint64_t seed) const {
    detectors::FitConfig config;
    config.mode = mode;
    config.seed = seed;
    const auto t0 = std::chrono::steady_clock::now();
    const detectors::FitResult fit = detectors::fit(train_scaled, config);
    SeedRun out;
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const Vector scores = detectors::score(fit.model, test_scaled).scores;
    out.auc = evalbench::roc_auc(scores, *test.ground_truth);
    std::vector<double> group_scores, normal_scores;
    for (Index i = 0; i < scores.size(); ++i) {
      if (test_is_group[static_cast<std::size_t>(i)]) group_scores.push_back(scores(i));
      if (test_is_normal[static_cast<std::size_t>(i)]) normal_scores.push_back(scores(i));
    }
    out.group_separated = median(group_scores) > median(normal_scores);
    return out;
  }
};

const std::vector<std::uint64_t> kSeeds = {1, 2, 3, 4, 5};

// ---- criterion 5: module-level property checks ----

// Reject batches with near-zero ReLU pre-activations; finite differences are
// ill-defined across the kink.
bool away_from_kinks(const nn::Mlp& mlp, const Matrix& X, double margin) {
  Matrix a = X;
  for (std::size_t l = 0; l < mlp.layer_count(); ++l) {
    const Matrix z = (a * mlp.weights[l].transpose()).rowwise() + mlp.biases[l].transpose();
    if (l + 1 < mlp.layer_count() && z.cwiseAbs().minCoeff() < margin) return false;
    a = l + 1 < mlp.layer_count() ? z.cwiseMax(0.0) : z;
  }
  return true;
}

bool prop_gradients() {
  Rng rng(42);
  for (const auto& dims : std::vector<std::vector<Index>>{{3, 4, 1}, {2, 2, 2, 1}}) {
    nn::Mlp mlp = nn::init_mlp(dims, nn::InitScheme::kVarianceScaling, rng);
    Matrix X(5, dims.front());
    do {
      for (Index i = 0; i < 5; ++i)
        for (Index j = 0; j < dims.front(); ++j) X(i, j) = rng.uniform();
    } while (!away_from_kinks(mlp, X, 1e-3));
    Vector t(5), w(5);
    for (Index i = 0; i < 5; ++i) {
      t(i) = rng.uniform() < 0.5 ? 0.0 : 1.0;
      w(i) = 0.5 + rng.uniform();
    }
    nn::ForwardCache cache;
    nn::forward(mlp, X, cache);
    const nn::Gradients grads = nn::backprop_bce(mlp, cache, t, w);
    const double h = 1e-5;
    for (std::size_t l = 0; l < mlp.layer_count(); ++l)
      for (Index r = 0; r < mlp.weights[l].rows(); ++r)
        for (Index c = 0; c < mlp.weights[l].cols(); ++c) {
          const double saved = mlp.weights[l](r, c);
          mlp.weights[l](r, c) = saved + h;
          const double up = nn::bce_loss(nn::forward(mlp, X).col(0), t, w);
          mlp.weights[l](r, c) = saved - h;
          const double down = nn::bce_loss(nn::forward(mlp, X).col(0), t, w);
          mlp.weights[l](r, c) = saved;
          const double fd = (up - down) / (2.0 * h);
          if (std::abs(grads.d_weights[l](r, c) - fd) > 1e-4 * std::max(1.0, std::abs(fd)))
            return false;
        }
  }
  return true;
}

bool prop_step_losses() {
  Rng rng(8);
  nn::Mlp d = nn::init_mlp({3, 6, 1}, nn::InitScheme::kVarianceScaling, rng);
  nn::AdamState adam = nn::make_adam(d, 1e-3);
  Matrix real(7, 3), fake(6, 3), pool(4, 3);
  for (Matrix* m : {&real, &fake, &pool})
    for (Index i = 0; i < m->rows(); ++i)
      for (Index j = 0; j < 3; ++j) (*m)(i, j) = rng.uniform();
  auto loss_real = [](const nn::Mlp& mlp, const Matrix& X) {
    return -nn::forward(mlp, X).col(0).array().log().sum();
  };
  auto loss_fake = [](const nn::Mlp& mlp, const Matrix& X) {
    return -(1.0 - nn::forward(mlp, X).col(0).array()).log().sum();
  };
  const nn::Mlp frozen = d;
  const double mo = gan::mo_discriminator_step(d, real, {fake}, adam);
  const double mo_expect = loss_real(frozen, real) + loss_fake(frozen, fake);
  if (std::abs(mo - mo_expect) > 1e-9 * std::abs(mo_expect)) return false;
  const nn::Mlp frozen2 = d;
  const double ov = gan::overall_discriminator_step(d, real, fake, pool, adam);
  const double ov_expect =
      loss_real(frozen2, real) + loss_fake(frozen2, fake) + loss_fake(frozen2, pool);
  return std::abs(ov - ov_expect) <= 1e-9 * std::abs(ov_expect);
}

bool prop_roc_auc() {
  Rng rng(5);
  for (int trial = 0; trial < 1000; ++trial) {
    const Index n = 4 + static_cast<Index>(rng.below(30));
    Vector s(n);
    std::vector<int> labels(static_cast<std::size_t>(n), 1);
    for (Index i = 0; i < n; ++i) s(i) = static_cast<double>(rng.below(8)) / 7.0;
    for (Index i = 0; i < n; ++i)
      if (rng.uniform() < 0.4) labels[static_cast<std::size_t>(i)] = 0;
    labels[0] = 0;
    labels[1] = 1;
    double wins = 0.0;
    Index pairs = 0;
    for (Index a = 0; a < n; ++a) {
      if (labels[static_cast<std::size_t>(a)] != 0) continue;
      for (Index b = 0; b < n; ++b) {
        if (labels[static_cast<std::size_t>(b)] != 1) continue;
        ++pairs;
        wins += s(a) > s(b) ? 1.0 : (s(a) == s(b) ? 0.5 : 0.0);
      }
    }
    const double oracle = wins / static_cast<double>(pairs);
    if (std::abs(evalbench::roc_auc(s, labels) - oracle) > 1e-12) return false;
  }
  return true;
}

bool prop_average_position() {
  Rng rng(6);
  for (int trial = 0; trial < 1000; ++trial) {
    const Index n = 2 + static_cast<Index>(rng.below(25));
    Vector outputs(n);
    for (Index i = 0; i < n; ++i) outputs(i) = static_cast<double>(rng.below(5)) / 4.0;
    std::vector<bool> flags(static_cast<std::size_t>(n), false);
    for (Index i = 0; i < n; ++i)
      if (rng.uniform() < 0.3) flags[static_cast<std::size_t>(i)] = true;
    flags[0] = true;
    // brute-force ranks with averaged ties
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    std::sort(order.begin(), order.end(),
              [&](Index a, Index b) { return outputs(a) < outputs(b); });
    std::vector<double> rank(static_cast<std::size_t>(n));
    std::size_t i = 0;
    while (i < order.size()) {
      std::size_t j = i;
      while (j < order.size() && outputs(order[j]) == outputs(order[i])) ++j;
      const double avg = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
      for (std::size_t k = i; k < j; ++k) rank[static_cast<std::size_t>(order[k])] = avg;
      i = j;
    }
    double sum = 0.0;
    Index count = 0;
    for (Index r = 0; r < n; ++r)
      if (flags[static_cast<std::size_t>(r)]) {
        sum += rank[static_cast<std::size_t>(r)];
        ++count;
      }
    const double oracle = sum / (static_cast<double>(count) * static_cast<double>(n));
    if (std::abs(indicators::average_position(outputs, flags) - oracle) > 1e-12) return false;
  }
  return true;
}

bool prop_extract_clusters() {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    const Index n = 2 + static_cast<Index>(rng.below(18));
    Matrix U(n, 2);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < 2; ++j) U(i, j) = rng.uniform();
    rcc::KnnGraph g;
    g.node_count = n;
    for (Index p = 0; p < n; ++p)
      for (Index q = p + 1; q < n; ++q)
        if (rng.uniform() < 0.15) g.edges.push_back({p, q});
    const double delta = rng.uniform();
    const rcc::Clustering c = rcc::extract_clusters(U, g, delta);
    // union-find oracle
    std::vector<Index> parent(static_cast<std::size_t>(n));
    std::iota(parent.begin(), parent.end(), Index{0});
    std::function<Index(Index)> find = [&](Index a) {
      while (parent[static_cast<std::size_t>(a)] != a) a = parent[static_cast<std::size_t>(a)];
      return a;
    };
    for (const auto& [p, q] : g.edges)
      if ((U.row(p) - U.row(q)).norm() < delta)
        parent[static_cast<std::size_t>(find(p))] = find(q);
    std::set<std::pair<Index, Index>> mapping;
    for (Index i = 0; i < n; ++i)
      mapping.insert({c.labels[static_cast<std::size_t>(i)], find(i)});
    std::set<Index> lhs, rhs;
    for (const auto& [a, b] : mapping) {
      lhs.insert(a);
      rhs.insert(b);
    }
    if (mapping.size() != lhs.size() || mapping.size() != rhs.size()) return false;
  }
  return true;
}

bool prop_rcc_trace() {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    Matrix X(30, 2);
    for (Index i = 0; i < 30; ++i)
      for (Index j = 0; j < 2; ++j) X(i, j) = rng.uniform();
    rcc::KnnGraph g = rcc::mutual_knn_graph(X, 4);
    rcc::compute_edge_weights(g);
    auto [U, trace] = rcc::optimize_representatives(X, g, rcc::RccConfig{});
    for (std::size_t i = 1; i < trace.size(); ++i)
      if (trace[i] > trace[i - 1] + 1e-9) return false;
  }
  return true;
}

bool prop_nnr() {
  indicators::NnrParams params;
  int mixed = 0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    Rng rng(1000 + trial);
    Matrix A(500, 1), B(500, 1);
    for (Index i = 0; i < 500; ++i) A(i, 0) = rng.uniform();
    for (Index i = 0; i < 500; ++i) B(i, 0) = rng.uniform();
    if (indicators::nnr(A, B, params, trial).nash) ++mixed;
  }
  if (mixed < 95) return false;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    Rng rng(7000 + trial);
    Matrix A(200, 2), B(200, 2);
    for (Index i = 0; i < 200; ++i)
      for (Index j = 0; j < 2; ++j) {
        A(i, j) = rng.uniform(0.0, 0.1);
        B(i, j) = rng.uniform(0.9, 1.0);
      }
    if (indicators::nnr(A, B, params, trial).nash) return false;
  }
  return true;
}

// ---- criterion 6: CLI byte determinism ----

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

bool cli_deterministic(std::string& detail) {
  const std::string cli = DUALGAN_CLI_PATH;
  const fs::path dir =
      fs::temp_directory_path() / ("dualgan_accept_" + std::to_string(::getpid()));
  fs::create_directories(dir / "a");
  fs::create_directories(dir / "b");
  const std::string config_path = (dir / "config.json").string();
  {
    std::ofstream cfg(config_path);
    cfg << "{\"max_iters\": 60}\n";
  }
  auto run = [&](const std::string& args) {
    const std::string cmd = cli + " " + args + " >/dev/null 2>&1";
    return std::system(cmd.c_str()) == 0;
  };
  bool ok = true;
  for (const char* side : {"a", "b"}) {
    const std::string out = (dir / side).string();
    ok = ok && run("synth --out " + out + " --seed 3");
    ok = ok && run("fit --train " + out + "/train.csv --mode dual_gan --config " + config_path +
                   " --model " + out + "/model.json --report " + out + "/report.json --seed 3");
    ok = ok && run("score --model " + out + "/model.json --data " + out + "/test.csv --out " +
                   out + "/scores.csv");
  }
  if (!ok) {
    detail = "a CLI command exited nonzero";
    fs::remove_all(dir);
    return false;
  }
  for (const char* file : {"train.csv", "test.csv", "model.json", "report.json", "scores.csv"}) {
    if (read_file(dir / "a" / file) != read_file(dir / "b" / file)) {
      detail = std::string(file) + " differs between identical invocations";
      fs::remove_all(dir);
      return false;
    }
  }
  detail = "synth/fit/score outputs byte-identical across repeated runs, seed 3";
  fs::remove_all(dir);
  return true;
}

// ---- criterion 7: clustering sanity ----

bool rcc_sanity(std::string& detail) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(seed);
    Matrix X(100, 2);
    for (Index i = 0; i < 100; ++i) {
      const bool left = i < 50;
      X(i, 0) = (left ? 0.25 : 0.75) + 0.02 * rng.normal();
      X(i, 1) = 0.5 + 0.02 * rng.normal();
    }
    const rcc::Clustering c = rcc::cluster(X, rcc::RccConfig{});
    if (c.cluster_count != 2) {
      detail = "two-blob run found " + std::to_string(c.cluster_count) + " clusters, seed " +
               std::to_string(seed);
      return false;
    }
    for (Index i = 0; i < 100; ++i)
      if (c.labels[static_cast<std::size_t>(i)] != c.labels[static_cast<std::size_t>(i < 50 ? 0 : 50)]) {
        detail = "label disagreement at row " + std::to_string(i) + ", seed " +
                 std::to_string(seed);
        return false;
      }
  }
  Rng rng(77);
  Matrix big(1000, 10);
  for (Index i = 0; i < 1000; ++i) {
    const Index center = i % 5;
    for (Index j = 0; j < 10; ++j)
      big(i, j) = 0.15 + 0.17 * static_cast<double>(center) + 0.02 * rng.normal();
  }
  const auto t0 = std::chrono::steady_clock::now();
  rcc::cluster(big, rcc::RccConfig{});
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs > 60.0) {
    detail = "1000x10 clustering took " + fmt(secs) + "s";
    return false;
  }
  detail = "two blobs resolved 10/10 seeds; 1000x10-d clustering in " + fmt(secs) + "s";
  return true;
}

}  // namespace

int main() {
  Bench bench;

  std::vector<double> dual_aucs, rcc_aucs;
  std::vector<SeedRun> rcc_runs, mo_runs;
  double max_fit_seconds = 0.0;
  for (std::uint64_t seed : kSeeds) {
    const SeedRun d = bench.run(detectors::Mode::kDualGan, seed);
    const SeedRun r = bench.run(detectors::Mode::kRccDualGan, seed);
    dual_aucs.push_back(d.auc);
    rcc_aucs.push_back(r.auc);
    rcc_runs.push_back(r);
    max_fit_seconds = std::max({max_fit_seconds, d.seconds, r.seconds});
  }
  const double dual_median = median(dual_aucs);
  const double rcc_median = median(rcc_aucs);
  report(1,
         dual_median >= 0.97 && rcc_median >= 0.97 && max_fit_seconds <= 300.0,
         "synthetic 5-seed median AUC: dual_gan " + fmt(dual_median) + ", rcc_dual_gan " +
             fmt(rcc_median) + " (need >= 0.97); slowest fit " + fmt(max_fit_seconds) + "s");

  int rcc_sep = 0, mo_sep = 0;
  for (std::uint64_t seed : kSeeds) mo_runs.push_back(bench.run(detectors::Mode::kMoGan, seed));
  for (const SeedRun& r : rcc_runs) rcc_sep += r.group_separated ? 1 : 0;
  for (const SeedRun& r : mo_runs) mo_sep += r.group_separated ? 1 : 0;
  report(2, rcc_sep >= 4 && mo_sep < 4,
         "group-anomaly median OS above normal: rcc_dual_gan " + std::to_string(rcc_sep) +
             "/5 seeds (need >= 4), mo_gan " + std::to_string(mo_sep) + "/5 (must fail the check)");

  data_io::LabeledTable knn_train = bench.train;
  const evalbench::BaselineResult knn =
      evalbench::best_baseline(knn_train, bench.test, "knn");
  report(3, knn.auc <= rcc_median - 0.15,
         "oracle kNN AUC " + fmt(knn.auc) + " vs rcc_dual_gan median " + fmt(rcc_median) +
             " (need gap >= 0.15)");

  evalbench::NamedDataset sweep_ds{"synthetic", bench.train, bench.test};
  const std::vector<evalbench::BenchResult> sweep = evalbench::ratio_sweep(
      sweep_ds, {"dual_gan", "rcc_dual_gan"}, {0.0, 0.1}, kSeeds, detectors::FitConfig{});
  bool sweep_ok = true;
  std::string sweep_detail;
  for (const std::string& method : {"dual_gan", "rcc_dual_gan"}) {
    std::vector<double> at0, at01;
    for (const auto& cell : sweep) {
      if (cell.method != method || !cell.auc) continue;
      (cell.ratio == 0.0 ? at0 : at01).push_back(*cell.auc);
    }
    const double m0 = median(at0), m01 = median(at01);
    sweep_ok = sweep_ok && m01 >= m0 && at0.size() == 5 && at01.size() == 5;
    sweep_detail += method + " " + fmt(m0) + "@0 -> " + fmt(m01) + "@0.1; ";
  }
  report(4, sweep_ok, "5-seed median AUC at identified ratio 0.1 vs 0: " + sweep_detail);

  const bool props = prop_gradients() && prop_step_losses() && prop_roc_auc() &&
                     prop_average_position() && prop_extract_clusters() && prop_rcc_trace() &&
                     prop_nnr();
  report(5, props,
         "property suite: gradients vs finite differences, step losses vs re-evaluation, "
         "roc_auc and AP vs brute-force oracles, cluster extraction vs union-find, "
         "non-increasing RCC objective, NNR Monte-Carlo bounds");

  std::string cli_detail;
  const bool cli_ok = cli_deterministic(cli_detail);
  report(6, cli_ok, "CLI determinism: " + cli_detail);

  std::string rcc_detail;
  const bool rcc_ok = rcc_sanity(rcc_detail);
  report(7, rcc_ok, "RCC sanity: " + rcc_detail);

  return failures == 0 ? 0 : 1;
}
