#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dualgan/common.hpp"

namespace dualgan::data_io {

// Row-major feature table with optional ground truth (0 = anomaly, 1 = normal)
// and per-row identified-anomaly flags.
struct LabeledTable {
  Matrix features;
  std::vector<std::string> feature_names;
  std::vector<std::string> row_ids;
  std::optional<std::vector<int>> ground_truth;
  std::vector<bool> identified;

  Index row_count() const { return features.rows(); }
  Index dim() const { return features.cols(); }
  Index identified_count() const {
    return static_cast<Index>(std::count(identified.begin(), identified.end(), true));
  }
  Index anomaly_count() const {
    if (!ground_truth) return 0;
    return static_cast<Index>(std::count(ground_truth->begin(), ground_truth->end(), 0));
  }
};

struct Scaler {
  Vector feature_min;
  Vector feature_max;
};

struct SyntheticSpec {
  struct Blob {
    double cx, cy;    // center
    double sigma;     // isotropic stddev
    Index count;
  };
  std::vector<Blob> normal_clusters = {{0.3, 0.3, 0.05, 200}, {0.7, 0.7, 0.05, 200}};
  // Large enough that the capped neighbor search of the kNN baseline
  // (k up to n/10) stays inside a group cluster and cannot flag it.
  std::vector<Blob> group_anomaly_clusters = {{0.25, 0.75, 0.02, 60}, {0.75, 0.25, 0.02, 60}};
  Index train_discrete_anomalies = 2;
  Index test_discrete_anomalies = 5;
  Index identified_count = 5;
  double discrete_exclusion_radius = 0.15;  // around every cluster center
  std::uint64_t seed = 0;
};

LabeledTable load_csv(const std::string& path);
void save_csv(const LabeledTable& table, const std::string& path);

Scaler fit_scaler(const LabeledTable& table);
LabeledTable apply_scaler(const Scaler& scaler, const LabeledTable& table);
Matrix apply_scaler(const Scaler& scaler, const Matrix& features);

// Stratified 2:1 split; per-class train share is ceil(2 n_c / 3).
std::pair<LabeledTable, LabeledTable> split_train_test(const LabeledTable& table,
                                                       std::uint64_t seed);

// Flags ceil(ratio * #anomalies) anomalies as identified, uniformly at random.
LabeledTable sample_identified(const LabeledTable& train_table, double ratio,
                               std::uint64_t seed);

std::pair<LabeledTable, LabeledTable> gen_synthetic(const SyntheticSpec& spec);

LabeledTable select_rows(const LabeledTable& table, const std::vector<Index>& idx);

// write-to-temp then atomic rename
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace dualgan::data_io
