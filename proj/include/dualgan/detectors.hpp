#pragma once

#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dualgan/common.hpp"
#include "dualgan/data_io.hpp"
#include "dualgan/gan.hpp"
#include "dualgan/indicators.hpp"
#include "dualgan/nn.hpp"
#include "dualgan/rcc.hpp"

namespace dualgan::detectors {

enum class Mode { kDualGan, kRccDualGan, kMoGan, kSupGan, kSupRccGan };

std::string mode_name(Mode mode);
Mode parse_mode(const std::string& name);

struct FitConfig {
  Mode mode = Mode::kRccDualGan;
  Index k = 5;                    // MO-mode sub-generator count
  Index max_iters = 1000;
  indicators::NnrParams nnr;
  rcc::RccConfig rcc;
  std::optional<Index> total_unlabeled_pool;  // N_u; default ceil(0.2 (n-l))
  std::optional<Index> total_anomaly_pool;    // N_a; default max(l, ceil(0.5 (n-l)))
  Index batch_size = 500;
  double discriminator_lr = 1e-3;
  // Unset means per-mode default: 1e-4 in mo_gan (its scoring discriminator
  // must stay ahead of the sub-generators), 1e-3 elsewhere.
  std::optional<double> generator_lr;
  Index overall_d_steps = 1;  // overall-D updates per outer iteration
  Index nnr_check_period = 10;
  Index ap_warmup = 20;           // iterations before AP checkpointing starts
  bool refresh_partition = true;  // MO mode: re-partition by output every iteration
  std::uint64_t seed = 0;
};

struct NnrRecord {
  Index iteration;
  gan::Role role;
  Index generator_id;
  double nnr_value;
  bool nash;
};

struct FitReport {
  std::vector<double> ap_trace;              // one entry per checkpointed iteration
  std::vector<Index> ap_iterations;
  std::vector<double> overall_d_loss_trace;  // one per iteration
  std::vector<std::vector<double>> unlabeled_d_loss;  // per sub-GAN
  std::vector<std::vector<double>> unlabeled_g_loss;
  std::vector<std::vector<double>> anomaly_d_loss;
  std::vector<std::vector<double>> anomaly_g_loss;
  std::vector<NnrRecord> nnr_history;
  std::vector<std::string> warnings;
  Index unlabeled_cluster_count = 0;
  Index anomaly_cluster_count = 0;
  double wall_clock_seconds = 0.0;  // not serialized unless timings requested
};

struct TrainedModel {
  nn::Mlp best_discriminator;
  double best_ap = 1.0;
  Index best_iteration = -1;
  std::string selection_metric = "ap";  // "ap" | "accuracy" | "last_iteration"
  data_io::Scaler scaler;
  Mode mode = Mode::kRccDualGan;
  std::uint64_t seed = 0;
  int format_version = 1;
};

struct ScoreVector {
  Vector scores;  // OS(x) = 1 - D'(x), per row
};

struct FitResult {
  TrainedModel model;
  FitReport report;
};

// Inputs are feature matrices already scaled into [0,1]^d.
FitResult fit_rcc_dual_gan(const Matrix& unlabeled, const Matrix& identified,
                           const FitConfig& config);
FitResult fit_dual_gan(const Matrix& unlabeled, const Matrix& identified,
                       const FitConfig& config);
FitResult fit_mo_gan(const Matrix& data, const std::vector<bool>* identified_flags,
                     const FitConfig& config);
FitResult fit_sup_gan(const Matrix& unlabeled, const Matrix& identified,
                      const FitConfig& config, bool use_rcc);

// Dispatch on config.mode over a scaled table with identified flags.
FitResult fit(const data_io::LabeledTable& scaled_table, const FitConfig& config);

ScoreVector score(const TrainedModel& model, const Matrix& scaled_features);

struct BestSnapshot {
  nn::Mlp discriminator;
  double ap = std::numeric_limits<double>::infinity();
  Index iteration = -1;
};

// Strict-less comparison; ties keep the earlier snapshot.
void checkpoint_if_better(const nn::Mlp& current, double current_ap, Index iteration,
                          BestSnapshot& best);

}  // namespace dualgan::detectors
