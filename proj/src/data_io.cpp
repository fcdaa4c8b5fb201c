#include "dualgan/data_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace dualgan::data_io {
namespace {

std::vector<std::string> split_line(const std::string& line, char sep = ',') {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, sep)) cells.push_back(cell);
  if (!line.empty() && line.back() == sep) cells.emplace_back();
  return cells;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& cell, Index row, const std::string& column) {
  const std::string t = trim(cell);
  try {
    std::size_t pos = 0;
    const double v = std::stod(t, &pos);
    if (pos != t.size()) throw std::invalid_argument(t);
    return v;
  } catch (const std::exception&) {
    throw FormatError("row " + std::to_string(row) + ": non-numeric value '" + cell +
                      "' in column " + column);
  }
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

LabeledTable load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty file: " + path);
  const std::vector<std::string> header = split_line(line);

  int label_col = -1, ident_col = -1, id_col = -1;
  std::vector<int> feature_cols;
  LabeledTable table;
  for (int c = 0; c < static_cast<int>(header.size()); ++c) {
    const std::string name = trim(header[static_cast<std::size_t>(c)]);
    if (name == "label") {
      label_col = c;
    } else if (name == "ident") {
      ident_col = c;
    } else if (name == "id") {
      id_col = c;
    } else {
      feature_cols.push_back(c);
      table.feature_names.push_back(name);
    }
  }
  if (feature_cols.empty()) throw FormatError("no feature columns in " + path);

  std::vector<std::vector<double>> rows;
  std::vector<int> labels;
  Index row_number = 0;
  while (std::getline(in, line)) {
    ++row_number;
    if (trim(line).empty()) continue;
    const std::vector<std::string> cells = split_line(line);
    if (cells.size() != header.size())
      throw FormatError("row " + std::to_string(row_number) + ": expected " +
                        std::to_string(header.size()) + " cells, got " +
                        std::to_string(cells.size()));
    std::vector<double> feat;
    feat.reserve(feature_cols.size());
    for (std::size_t fc = 0; fc < feature_cols.size(); ++fc)
      feat.push_back(parse_double(cells[static_cast<std::size_t>(feature_cols[fc])], row_number,
                                  table.feature_names[fc]));
    rows.push_back(std::move(feat));

    int label = -1;
    if (label_col >= 0) {
      const double v = parse_double(cells[static_cast<std::size_t>(label_col)], row_number, "label");
      if (v != 0.0 && v != 1.0)
        throw FormatError("row " + std::to_string(row_number) + ": label must be 0 or 1");
      label = static_cast<int>(v);
    }
    labels.push_back(label);

    bool ident = false;
    if (ident_col >= 0) {
      const double v = parse_double(cells[static_cast<std::size_t>(ident_col)], row_number, "ident");
      if (v != 0.0 && v != 1.0)
        throw FormatError("row " + std::to_string(row_number) + ": ident must be 0 or 1");
      ident = (v == 1.0);
    }
    if (ident && label == 1)
      throw FormatError("row " + std::to_string(row_number) +
                        ": ident=1 conflicts with label=1 (identified rows are anomalies)");
    table.identified.push_back(ident);

    table.row_ids.push_back(id_col >= 0 ? trim(cells[static_cast<std::size_t>(id_col)])
                                        : std::to_string(row_number - 1));
  }
  const Index n = static_cast<Index>(rows.size());
  table.features.resize(n, static_cast<Index>(feature_cols.size()));
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < table.features.cols(); ++j)
      table.features(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  if (label_col >= 0) table.ground_truth = std::move(labels);
  return table;
}

void save_csv(const LabeledTable& table, const std::string& path) {
  std::ostringstream out;
  for (std::size_t j = 0; j < table.feature_names.size(); ++j) {
    if (j) out << ',';
    out << table.feature_names[j];
  }
  if (table.ground_truth) out << ",label";
  out << ",ident\n";
  for (Index i = 0; i < table.row_count(); ++i) {
    for (Index j = 0; j < table.dim(); ++j) {
      if (j) out << ',';
      out << format_double(table.features(i, j));
    }
    if (table.ground_truth) out << ',' << (*table.ground_truth)[static_cast<std::size_t>(i)];
    out << ',' << (table.identified[static_cast<std::size_t>(i)] ? 1 : 0) << '\n';
  }
  write_file_atomic(path, out.str());
}

Scaler fit_scaler(const LabeledTable& table) {
  if (table.row_count() < 1) throw DegenerateInputError("fit_scaler: empty table");
  Scaler scaler;
  scaler.feature_min = table.features.colwise().minCoeff().transpose();
  scaler.feature_max = table.features.colwise().maxCoeff().transpose();
  return scaler;
}

Matrix apply_scaler(const Scaler& scaler, const Matrix& features) {
  if (features.cols() != scaler.feature_min.size())
    throw ShapeError("apply_scaler: dimension mismatch");
  Matrix out(features.rows(), features.cols());
  for (Index j = 0; j < features.cols(); ++j) {
    const double lo = scaler.feature_min[j];
    const double hi = scaler.feature_max[j];
    if (hi > lo) {
      out.col(j) = ((features.col(j).array() - lo) / (hi - lo)).min(1.0).max(0.0);
    } else {
      out.col(j).setConstant(0.5);  // constant feature
    }
  }
  return out;
}

LabeledTable apply_scaler(const Scaler& scaler, const LabeledTable& table) {
  LabeledTable out = table;
  out.features = apply_scaler(scaler, table.features);
  return out;
}

LabeledTable select_rows(const LabeledTable& table, const std::vector<Index>& idx) {
  LabeledTable out;
  out.feature_names = table.feature_names;
  out.features = rows_of(table.features, idx);
  if (table.ground_truth) {
    out.ground_truth.emplace();
    out.ground_truth->reserve(idx.size());
    for (Index i : idx) out.ground_truth->push_back((*table.ground_truth)[static_cast<std::size_t>(i)]);
  }
  // row_ids / identified may be absent on tables built in code
  for (Index i : idx) {
    if (!table.identified.empty())
      out.identified.push_back(table.identified[static_cast<std::size_t>(i)]);
    if (!table.row_ids.empty()) out.row_ids.push_back(table.row_ids[static_cast<std::size_t>(i)]);
  }
  if (out.identified.empty()) out.identified.assign(idx.size(), false);
  return out;
}

std::pair<LabeledTable, LabeledTable> split_train_test(const LabeledTable& table,
                                                       std::uint64_t seed) {
  if (!table.ground_truth)
    throw ConfigError("split_train_test: ground truth labels required");
  Rng rng(seed);
  std::vector<Index> train_idx, test_idx;
  for (int cls : {1, 0}) {
    std::vector<Index> members;
    for (Index i = 0; i < table.row_count(); ++i)
      if ((*table.ground_truth)[static_cast<std::size_t>(i)] == cls) members.push_back(i);
    if (members.empty()) continue;
    if (members.size() < 3)
      std::cerr << "warning key=small_class class=" << cls << " size=" << members.size()
                << " msg=best-effort stratification\n";
    const Index nc = static_cast<Index>(members.size());
    const Index train_count = (2 * nc + 2) / 3;  // ceil(2 nc / 3)
    std::vector<Index> perm = rng.sample_without_replacement(nc, nc);
    for (Index t = 0; t < nc; ++t) {
      const Index row = members[static_cast<std::size_t>(perm[static_cast<std::size_t>(t)])];
      (t < train_count ? train_idx : test_idx).push_back(row);
    }
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return {select_rows(table, train_idx), select_rows(table, test_idx)};
}

LabeledTable sample_identified(const LabeledTable& train_table, double ratio,
                               std::uint64_t seed) {
  if (!train_table.ground_truth)
    throw ConfigError("sample_identified: ground truth labels required");
  if (ratio < 0.0 || ratio > 1.0)
    throw ConfigError("sample_identified: ratio must be in [0,1]");
  LabeledTable out = train_table;
  std::fill(out.identified.begin(), out.identified.end(), false);
  std::vector<Index> anomalies;
  for (Index i = 0; i < out.row_count(); ++i)
    if ((*out.ground_truth)[static_cast<std::size_t>(i)] == 0) anomalies.push_back(i);
  const Index target = static_cast<Index>(
      std::ceil(ratio * static_cast<double>(anomalies.size()) - 1e-12));
  Rng rng(seed);
  const auto picks =
      rng.sample_without_replacement(static_cast<Index>(anomalies.size()), target);
  for (Index p : picks) out.identified[static_cast<std::size_t>(anomalies[static_cast<std::size_t>(p)])] = true;
  return out;
}

namespace {

void append_blob(std::vector<std::array<double, 2>>& pts, std::vector<int>& labels,
                 const SyntheticSpec::Blob& blob, int label, Rng& rng) {
  for (Index i = 0; i < blob.count; ++i) {
    const double x = std::clamp(blob.cx + blob.sigma * rng.normal(), 0.0, 1.0);
    const double y = std::clamp(blob.cy + blob.sigma * rng.normal(), 0.0, 1.0);
    pts.push_back({x, y});
    labels.push_back(label);
  }
}

void append_discrete(std::vector<std::array<double, 2>>& pts, std::vector<int>& labels,
                     const SyntheticSpec& spec, Index count, Rng& rng) {
  std::vector<std::array<double, 2>> centers;
  for (const auto& b : spec.normal_clusters) centers.push_back({b.cx, b.cy});
  for (const auto& b : spec.group_anomaly_clusters) centers.push_back({b.cx, b.cy});
  const double r2 = spec.discrete_exclusion_radius * spec.discrete_exclusion_radius;
  for (Index i = 0; i < count; ++i) {
    for (;;) {
      const double x = rng.uniform();
      const double y = rng.uniform();
      bool clear = true;
      for (const auto& c : centers) {
        const double dx = x - c[0], dy = y - c[1];
        if (dx * dx + dy * dy < r2) {
          clear = false;
          break;
        }
      }
      if (clear) {
        pts.push_back({x, y});
        labels.push_back(0);
        break;
      }
    }
  }
}

LabeledTable to_table(const std::vector<std::array<double, 2>>& pts,
                      const std::vector<int>& labels) {
  LabeledTable table;
  table.feature_names = {"f1", "f2"};
  table.features.resize(static_cast<Index>(pts.size()), 2);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    table.features(static_cast<Index>(i), 0) = pts[i][0];
    table.features(static_cast<Index>(i), 1) = pts[i][1];
  }
  table.ground_truth = labels;
  table.identified.assign(pts.size(), false);
  for (std::size_t i = 0; i < pts.size(); ++i) table.row_ids.push_back(std::to_string(i));
  return table;
}

}  // namespace

std::pair<LabeledTable, LabeledTable> gen_synthetic(const SyntheticSpec& spec) {
  Rng rng(spec.seed);
  Rng train_rng = rng.fork(1);
  Rng test_rng = rng.fork(2);

  std::vector<std::array<double, 2>> train_pts, test_pts;
  std::vector<int> train_labels, test_labels;
  for (const auto& b : spec.normal_clusters) append_blob(train_pts, train_labels, b, 1, train_rng);
  for (const auto& b : spec.group_anomaly_clusters)
    append_blob(train_pts, train_labels, b, 0, train_rng);
  append_discrete(train_pts, train_labels, spec, spec.train_discrete_anomalies, train_rng);

  for (const auto& b : spec.normal_clusters) append_blob(test_pts, test_labels, b, 1, test_rng);
  for (const auto& b : spec.group_anomaly_clusters)
    append_blob(test_pts, test_labels, b, 0, test_rng);
  append_discrete(test_pts, test_labels, spec, spec.test_discrete_anomalies, test_rng);

  LabeledTable train = to_table(train_pts, train_labels);
  LabeledTable test = to_table(test_pts, test_labels);

  std::vector<Index> anomalies;
  for (Index i = 0; i < train.row_count(); ++i)
    if ((*train.ground_truth)[static_cast<std::size_t>(i)] == 0) anomalies.push_back(i);
  const Index want = std::min<Index>(spec.identified_count, static_cast<Index>(anomalies.size()));
  const auto picks = train_rng.sample_without_replacement(static_cast<Index>(anomalies.size()), want);
  for (Index p : picks)
    train.identified[static_cast<std::size_t>(anomalies[static_cast<std::size_t>(p)])] = true;
  return {std::move(train), std::move(test)};
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write to " + tmp.string());
    out << contents;
    if (!out) throw FormatError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp);
    throw FormatError("cannot rename " + tmp.string() + " to " + path + ": " + ec.message());
  }
}

}  // namespace dualgan::data_io
