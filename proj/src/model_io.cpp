#include "dualgan/model_io.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace dualgan::data_io {
namespace {

using nlohmann::json;
using nn_t = dualgan::nn::Mlp;

constexpr int kFormatVersion = 1;

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

json mlp_to_json(const nn_t& mlp) {
  json j;
  j["layer_dims"] = mlp.dims;
  j["output_activation"] =
      mlp.output_activation == nn::OutputActivation::kSigmoid ? "sigmoid" : "identity";
  json weights = json::array();
  json biases = json::array();
  for (std::size_t layer = 0; layer < mlp.layer_count(); ++layer) {
    json w = json::array();  // row-major
    const Matrix& wm = mlp.weights[layer];
    for (Index r = 0; r < wm.rows(); ++r)
      for (Index c = 0; c < wm.cols(); ++c) w.push_back(wm(r, c));
    weights.push_back(std::move(w));
    json b = json::array();
    for (Index r = 0; r < mlp.biases[layer].size(); ++r) b.push_back(mlp.biases[layer][r]);
    biases.push_back(std::move(b));
  }
  j["weights"] = std::move(weights);
  j["biases"] = std::move(biases);
  return j;
}

nn_t mlp_from_json(const json& j) {
  nn_t mlp;
  mlp.dims = j.at("layer_dims").get<std::vector<Index>>();
  if (mlp.dims.size() < 2) throw FormatError("model: layer_dims too short");
  const std::string act = j.at("output_activation").get<std::string>();
  mlp.output_activation =
      act == "sigmoid" ? nn::OutputActivation::kSigmoid : nn::OutputActivation::kIdentity;
  const json& weights = j.at("weights");
  const json& biases = j.at("biases");
  if (weights.size() + 1 != mlp.dims.size() || biases.size() != weights.size())
    throw FormatError("model: weight/bias layer count mismatch");
  for (std::size_t layer = 0; layer + 1 < mlp.dims.size(); ++layer) {
    const Index rows = mlp.dims[layer + 1];
    const Index cols = mlp.dims[layer];
    const json& w = weights[layer];
    if (static_cast<Index>(w.size()) != rows * cols)
      throw FormatError("model: weight matrix size mismatch at layer " + std::to_string(layer));
    Matrix wm(rows, cols);
    for (Index r = 0; r < rows; ++r)
      for (Index c = 0; c < cols; ++c)
        wm(r, c) = w[static_cast<std::size_t>(r * cols + c)].get<double>();
    mlp.weights.push_back(std::move(wm));
    const json& b = biases[layer];
    if (static_cast<Index>(b.size()) != rows)
      throw FormatError("model: bias size mismatch at layer " + std::to_string(layer));
    Vector bv(rows);
    for (Index r = 0; r < rows; ++r) bv[r] = b[static_cast<std::size_t>(r)].get<double>();
    mlp.biases.push_back(std::move(bv));
  }
  return mlp;
}

json payload_json(const detectors::TrainedModel& model) {
  json j;
  j["format_version"] = kFormatVersion;
  j["mode"] = detectors::mode_name(model.mode);
  j["seed"] = model.seed;
  j["best_ap"] = model.best_ap;
  j["best_iteration"] = model.best_iteration;
  j["selection_metric"] = model.selection_metric;
  json scaler;
  scaler["min"] = std::vector<double>(model.scaler.feature_min.data(),
                                      model.scaler.feature_min.data() + model.scaler.feature_min.size());
  scaler["max"] = std::vector<double>(model.scaler.feature_max.data(),
                                      model.scaler.feature_max.data() + model.scaler.feature_max.size());
  j["scaler"] = std::move(scaler);
  j["discriminator"] = mlp_to_json(model.best_discriminator);
  return j;
}

}  // namespace

std::string model_to_json(const detectors::TrainedModel& model) {
  json j = payload_json(model);
  const std::string payload = j.dump();
  j["checksum"] = fnv1a64(payload);
  return j.dump(2) + "\n";
}

detectors::TrainedModel model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("model: invalid JSON: ") + e.what());
  }
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kFormatVersion)
      throw FormatError("model: unsupported format_version " + std::to_string(version));

    const std::uint64_t stored = j.at("checksum").get<std::uint64_t>();
    json payload = j;
    payload.erase("checksum");
    if (fnv1a64(payload.dump()) != stored) throw FormatError("model: checksum mismatch");

    detectors::TrainedModel model;
    model.format_version = version;
    model.mode = detectors::parse_mode(j.at("mode").get<std::string>());
    model.seed = j.at("seed").get<std::uint64_t>();
    model.best_ap = j.at("best_ap").get<double>();
    model.best_iteration = j.at("best_iteration").get<Index>();
    model.selection_metric = j.at("selection_metric").get<std::string>();
    const auto mins = j.at("scaler").at("min").get<std::vector<double>>();
    const auto maxs = j.at("scaler").at("max").get<std::vector<double>>();
    model.scaler.feature_min = Eigen::Map<const Vector>(mins.data(), static_cast<Index>(mins.size()));
    model.scaler.feature_max = Eigen::Map<const Vector>(maxs.data(), static_cast<Index>(maxs.size()));
    model.best_discriminator = mlp_from_json(j.at("discriminator"));
    return model;
  } catch (const json::exception& e) {
    throw FormatError(std::string("model: missing or malformed field: ") + e.what());
  }
}

void save_model(const detectors::TrainedModel& model, const std::string& path) {
  write_file_atomic(path, model_to_json(model));
}

detectors::TrainedModel load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open model file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

std::string report_to_json(const detectors::FitReport& report, bool include_timings) {
  json j;
  j["ap_trace"] = report.ap_trace;
  j["ap_iterations"] = report.ap_iterations;
  j["overall_d_loss"] = report.overall_d_loss_trace;
  j["unlabeled_d_loss"] = report.unlabeled_d_loss;
  j["unlabeled_g_loss"] = report.unlabeled_g_loss;
  j["anomaly_d_loss"] = report.anomaly_d_loss;
  j["anomaly_g_loss"] = report.anomaly_g_loss;
  j["unlabeled_cluster_count"] = report.unlabeled_cluster_count;
  j["anomaly_cluster_count"] = report.anomaly_cluster_count;
  json nnr = json::array();
  for (const auto& rec : report.nnr_history) {
    json r;
    r["iteration"] = rec.iteration;
    r["side"] = rec.role == gan::Role::kUnlabeled ? "unlabeled" : "anomaly";
    r["generator"] = rec.generator_id;
    r["nnr"] = rec.nnr_value;
    r["nash"] = rec.nash;
    nnr.push_back(std::move(r));
  }
  j["nnr_history"] = std::move(nnr);
  j["warnings"] = report.warnings;
  if (include_timings) j["wall_clock_seconds"] = report.wall_clock_seconds;
  return j.dump(2) + "\n";
}

void save_report(const detectors::FitReport& report, const std::string& path,
                 bool include_timings) {
  write_file_atomic(path, report_to_json(report, include_timings));
}

}  // namespace dualgan::data_io
