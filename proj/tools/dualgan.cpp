// Command-line front door: synth / fit / score / cluster / bench / sweep.
// Exit codes: 0 success, 2 usage or format error, 3 benchmark completed with
// failed cells.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "dualgan/data_io.hpp"
#include "dualgan/detectors.hpp"
#include "dualgan/evalbench.hpp"
#include "dualgan/model_io.hpp"
#include "dualgan/rcc.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dualgan;

void check_keys(const json& j, const std::vector<std::string>& allowed,
                const std::string& scope) {
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ConfigError("unknown config key: " + (scope.empty() ? key : scope + "." + key));
  }
}

detectors::FitConfig parse_fit_config(const json& j) {
  detectors::FitConfig config;
  check_keys(j, {"mode", "k", "max_iters", "batch_size", "discriminator_lr", "generator_lr",
                 "overall_d_steps", "nnr_check_period", "ap_warmup", "refresh_partition", "seed",
                 "total_unlabeled_pool", "total_anomaly_pool", "nnr", "rcc"},
             "");
  if (j.contains("mode")) config.mode = detectors::parse_mode(j["mode"].get<std::string>());
  if (j.contains("k")) config.k = j["k"].get<Index>();
  if (j.contains("max_iters")) config.max_iters = j["max_iters"].get<Index>();
  if (j.contains("batch_size")) config.batch_size = j["batch_size"].get<Index>();
  if (j.contains("discriminator_lr")) config.discriminator_lr = j["discriminator_lr"].get<double>();
  if (j.contains("generator_lr")) config.generator_lr = j["generator_lr"].get<double>();
  if (j.contains("overall_d_steps")) config.overall_d_steps = j["overall_d_steps"].get<Index>();
  if (j.contains("nnr_check_period")) config.nnr_check_period = j["nnr_check_period"].get<Index>();
  if (j.contains("ap_warmup")) config.ap_warmup = j["ap_warmup"].get<Index>();
  if (j.contains("refresh_partition")) config.refresh_partition = j["refresh_partition"].get<bool>();
  if (j.contains("seed")) config.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("total_unlabeled_pool"))
    config.total_unlabeled_pool = j["total_unlabeled_pool"].get<Index>();
  if (j.contains("total_anomaly_pool"))
    config.total_anomaly_pool = j["total_anomaly_pool"].get<Index>();
  if (j.contains("nnr")) {
    const json& n = j["nnr"];
    check_keys(n, {"p", "q", "tau1", "tau2"}, "nnr");
    if (n.contains("p")) config.nnr.p = n["p"].get<Index>();
    if (n.contains("q")) config.nnr.q = n["q"].get<Index>();
    if (n.contains("tau1")) config.nnr.tau1 = n["tau1"].get<double>();
    if (n.contains("tau2")) config.nnr.tau2 = n["tau2"].get<double>();
  }
  if (j.contains("rcc")) {
    const json& r = j["rcc"];
    check_keys(r, {"graph_k", "lambda", "delta", "mu_decay", "mu_update_period",
                   "max_outer_iters", "convergence_tol", "min_cluster_size"},
               "rcc");
    if (r.contains("graph_k")) config.rcc.graph_k = r["graph_k"].get<Index>();
    if (r.contains("lambda")) config.rcc.lambda = r["lambda"].get<double>();
    if (r.contains("delta")) config.rcc.delta = r["delta"].get<double>();
    if (r.contains("mu_decay")) config.rcc.mu_decay = r["mu_decay"].get<double>();
    if (r.contains("mu_update_period"))
      config.rcc.mu_update_period = r["mu_update_period"].get<Index>();
    if (r.contains("max_outer_iters")) config.rcc.max_outer_iters = r["max_outer_iters"].get<Index>();
    if (r.contains("convergence_tol")) config.rcc.convergence_tol = r["convergence_tol"].get<double>();
    if (r.contains("min_cluster_size")) config.rcc.min_cluster_size = r["min_cluster_size"].get<Index>();
  }
  return config;
}

detectors::FitConfig load_fit_config(const std::string& path) {
  if (path.empty()) return {};
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + ": invalid JSON: " + e.what());
  }
  return parse_fit_config(j);
}

std::uint64_t env_seed_fallback() {
  if (const char* env = std::getenv("DUALGAN_SEED")) return std::strtoull(env, nullptr, 10);
  return 0;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) seeds.push_back(std::strtoull(item.c_str(), nullptr, 10));
  if (seeds.empty()) throw ConfigError("empty seed list");
  return seeds;
}

std::vector<double> parse_ratio_list(const std::string& text) {
  std::vector<double> ratios;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) ratios.push_back(std::stod(item));
  if (ratios.empty()) throw ConfigError("empty ratio list");
  return ratios;
}

int cmd_synth(const std::string& out_dir, std::uint64_t seed, const std::string& spec_path) {
  data_io::SyntheticSpec spec;
  spec.seed = seed;
  if (!spec_path.empty()) {
    std::ifstream in(spec_path);
    if (!in) throw ConfigError("cannot open spec file: " + spec_path);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw ConfigError(std::string("bad spec file: ") + e.what());
    }
    check_keys(j, {"normal_clusters", "group_anomaly_clusters", "train_discrete_anomalies",
                   "test_discrete_anomalies", "identified_count", "discrete_exclusion_radius",
                   "seed"},
               "");
    auto parse_blobs = [](const json& arr) {
      std::vector<data_io::SyntheticSpec::Blob> blobs;
      for (const auto& b : arr)
        blobs.push_back({b.at("cx").get<double>(), b.at("cy").get<double>(),
                         b.at("sigma").get<double>(), b.at("count").get<Index>()});
      return blobs;
    };
    if (j.contains("normal_clusters")) spec.normal_clusters = parse_blobs(j["normal_clusters"]);
    if (j.contains("group_anomaly_clusters"))
      spec.group_anomaly_clusters = parse_blobs(j["group_anomaly_clusters"]);
    if (j.contains("train_discrete_anomalies"))
      spec.train_discrete_anomalies = j["train_discrete_anomalies"].get<Index>();
    if (j.contains("test_discrete_anomalies"))
      spec.test_discrete_anomalies = j["test_discrete_anomalies"].get<Index>();
    if (j.contains("identified_count")) spec.identified_count = j["identified_count"].get<Index>();
    if (j.contains("discrete_exclusion_radius"))
      spec.discrete_exclusion_radius = j["discrete_exclusion_radius"].get<double>();
    if (j.contains("seed")) spec.seed = j["seed"].get<std::uint64_t>();
  }
  const auto [train, test] = data_io::gen_synthetic(spec);
  fs::create_directories(out_dir);
  data_io::save_csv(train, (fs::path(out_dir) / "train.csv").string());
  data_io::save_csv(test, (fs::path(out_dir) / "test.csv").string());
  std::cerr << "synth train_rows=" << train.row_count() << " test_rows=" << test.row_count()
            << " identified=" << train.identified_count() << "\n";
  return 0;
}

int cmd_fit(const std::string& train_path, const std::string& mode, const std::string& config_path,
            const std::string& model_out, const std::string& report_out, std::uint64_t seed,
            bool seed_given, bool timings) {
  detectors::FitConfig config = load_fit_config(config_path);
  if (!mode.empty()) config.mode = detectors::parse_mode(mode);
  if (seed_given) config.seed = seed;

  data_io::LabeledTable table = data_io::load_csv(train_path);
  if (table.row_count() == 0) throw FormatError("empty training file: " + train_path);
  const bool sup_mode =
      config.mode == detectors::Mode::kSupGan || config.mode == detectors::Mode::kSupRccGan;
  if (sup_mode && table.identified_count() == 0)
    throw ConfigError("supervised modes require identified anomalies (ident column)");

  const data_io::Scaler scaler = data_io::fit_scaler(table);
  const data_io::LabeledTable scaled = data_io::apply_scaler(scaler, table);
  detectors::FitResult result = detectors::fit(scaled, config);
  result.model.scaler = scaler;
  for (const auto& w : result.report.warnings) std::cerr << "warning " << w << "\n";
  if (!model_out.empty()) data_io::save_model(result.model, model_out);
  if (!report_out.empty()) data_io::save_report(result.report, report_out, timings);
  std::cerr << "fit mode=" << detectors::mode_name(config.mode) << " best_iteration="
            << result.model.best_iteration << " best_ap=" << result.model.best_ap
            << " selection=" << result.model.selection_metric << "\n";
  return 0;
}

int cmd_score(const std::string& model_path, const std::string& data_path,
              const std::string& out_path) {
  const detectors::TrainedModel model = data_io::load_model(model_path);
  const data_io::LabeledTable table = data_io::load_csv(data_path);
  if (table.row_count() == 0) throw FormatError("empty data file: " + data_path);
  const Matrix scaled = data_io::apply_scaler(model.scaler, table.features);
  const Vector scores = detectors::score(model, scaled).scores;
  std::ostringstream out;
  out << "row_id,os\n";
  char buf[32];
  for (Index i = 0; i < scores.size(); ++i) {
    std::snprintf(buf, sizeof(buf), "%.17g", scores[i]);
    out << table.row_ids[static_cast<std::size_t>(i)] << ',' << buf << '\n';
  }
  data_io::write_file_atomic(out_path, out.str());
  return 0;
}

int cmd_cluster(const std::string& data_path, const std::string& out_path,
                const std::string& config_path) {
  const detectors::FitConfig config = load_fit_config(config_path);
  const data_io::LabeledTable table = data_io::load_csv(data_path);
  if (table.row_count() == 0) throw FormatError("empty data file: " + data_path);
  const data_io::Scaler scaler = data_io::fit_scaler(table);
  const Matrix scaled = data_io::apply_scaler(scaler, table.features);
  const rcc::Clustering clustering = rcc::cluster(scaled, config.rcc);
  std::ostringstream out;
  out << "row,cluster\n";
  for (std::size_t i = 0; i < clustering.labels.size(); ++i)
    out << i << ',' << clustering.labels[i] << '\n';
  data_io::write_file_atomic(out_path, out.str());
  std::cerr << "cluster rows=" << table.row_count() << " k=" << clustering.cluster_count << "\n";
  return 0;
}

evalbench::NamedDataset load_dataset_pair(const std::string& train_path, std::uint64_t seed) {
  // A companion test.csv next to train.csv is used when present; otherwise the
  // file is split 2:1 with the cell seed.
  evalbench::NamedDataset ds;
  const fs::path tp(train_path);
  ds.name = tp.stem().string() == "train" ? tp.parent_path().filename().string()
                                          : tp.stem().string();
  const fs::path test_path = tp.parent_path() / "test.csv";
  if (tp.filename() == "train.csv" && fs::exists(test_path)) {
    ds.train = data_io::load_csv(train_path);
    ds.test = data_io::load_csv(test_path.string());
  } else {
    const data_io::LabeledTable all = data_io::load_csv(train_path);
    std::tie(ds.train, ds.test) = data_io::split_train_test(all, seed ^ 0x517137);
  }
  return ds;
}

std::vector<std::string> parse_method_list(const std::string& text) {
  std::vector<std::string> methods;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "adoa")
      throw ConfigError("adoa is an external method and is not implemented");
    if (!evalbench::is_gan_method(item) && item != "knn" && item != "lof" && item != "kmeans")
      throw ConfigError("unknown method: " + item);
    methods.push_back(item);
  }
  if (methods.empty()) throw ConfigError("empty method list");
  return methods;
}

int cmd_bench(const std::string& datasets_glob, const std::string& methods_text,
              const std::string& seeds_text, const std::string& out_dir,
              const std::string& config_path, bool timings) {
  const auto methods = parse_method_list(methods_text);
  const auto seeds = parse_seed_list(seeds_text);
  const detectors::FitConfig base_config = load_fit_config(config_path);

  std::vector<std::string> train_files;
  const fs::path glob(datasets_glob);
  if (fs::is_directory(glob)) {
    for (const auto& entry : fs::recursive_directory_iterator(glob))
      if (entry.path().filename() == "train.csv") train_files.push_back(entry.path().string());
    std::sort(train_files.begin(), train_files.end());
  } else if (fs::exists(glob)) {
    train_files.push_back(glob.string());
  }
  if (train_files.empty()) throw ConfigError("no datasets found at: " + datasets_glob);

  std::vector<evalbench::NamedDataset> datasets;
  for (const auto& f : train_files) datasets.push_back(load_dataset_pair(f, seeds.front()));

  const auto results = evalbench::run_benchmark(datasets, methods, seeds, base_config);
  const auto summary = evalbench::summarize(results);
  fs::create_directories(out_dir);
  data_io::write_file_atomic((fs::path(out_dir) / "results.csv").string(),
                             evalbench::results_to_csv(results, timings));
  data_io::write_file_atomic((fs::path(out_dir) / "summary.json").string(),
                             evalbench::summary_to_json(summary));
  for (const auto& r : results)
    if (!r.error.empty())
      std::cerr << "warning key=cell_failed dataset=" << r.dataset << " method=" << r.method
                << " seed=" << r.seed << " error=\"" << r.error << "\"\n";
  return summary.failed_cells > 0 ? 3 : 0;
}

int cmd_sweep(const std::string& dataset_path, const std::string& methods_text,
              const std::string& ratios_text, const std::string& seeds_text,
              const std::string& out_dir, const std::string& config_path, bool timings) {
  const auto methods = parse_method_list(methods_text);
  const auto ratios = parse_ratio_list(ratios_text);
  const auto seeds = parse_seed_list(seeds_text);
  const detectors::FitConfig base_config = load_fit_config(config_path);
  const evalbench::NamedDataset dataset = load_dataset_pair(dataset_path, seeds.front());

  const auto results = evalbench::ratio_sweep(dataset, methods, ratios, seeds, base_config);
  fs::create_directories(out_dir);
  data_io::write_file_atomic((fs::path(out_dir) / "sweep.csv").string(),
                             evalbench::results_to_csv(results, timings));
  Index failed = 0;
  for (const auto& r : results)
    if (!r.error.empty()) {
      ++failed;
      std::cerr << "warning key=cell_failed ratio=" << r.ratio << " method=" << r.method
                << " seed=" << r.seed << " error=\"" << r.error << "\"\n";
    }
  return failed > 0 ? 3 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised outlier detection with Dual-GAN and RCC-Dual-GAN"};
  app.require_subcommand(1);

  std::string out_dir, spec_path, config_path, train_path, mode, model_out, report_out;
  std::string model_path, data_path, out_path, datasets_glob, methods_text, seeds_text, ratios_text;
  std::string dataset_path;
  std::uint64_t seed = env_seed_fallback();
  bool timings = false;

  auto* synth = app.add_subcommand("synth", "Generate the synthetic train/test CSV pair");
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_option("--seed", seed, "random seed (fallback: DUALGAN_SEED env)");
  synth->add_option("--spec", spec_path, "JSON spec overriding the default geometry");

  auto* fit = app.add_subcommand("fit", "Train a detector on a training CSV");
  fit->add_option("--train", train_path, "training CSV")->required();
  fit->add_option("--mode", mode,
                  "dual_gan | rcc_dual_gan | mo_gan | sup_gan | sup_rcc_gan");
  fit->add_option("--config", config_path, "JSON config file (CLI flags take precedence)");
  fit->add_option("--model", model_out, "output model JSON");
  fit->add_option("--report", report_out, "output fit-report JSON");
  auto* fit_seed = fit->add_option("--seed", seed, "random seed");
  fit->add_flag("--timings", timings, "include wall-clock in the report (breaks byte determinism)");

  auto* score = app.add_subcommand("score", "Score a CSV with a trained model");
  score->add_option("--model", model_path, "model JSON")->required();
  score->add_option("--data", data_path, "data CSV")->required();
  score->add_option("--out", out_path, "output scores CSV (row_id,os)")->required();

  auto* cluster = app.add_subcommand("cluster", "Export the RCC clustering of a CSV");
  cluster->add_option("--data", data_path, "data CSV")->required();
  cluster->add_option("--out", out_path, "output CSV (row,cluster)")->required();
  cluster->add_option("--config", config_path, "JSON config file");

  auto* bench = app.add_subcommand("bench", "Benchmark methods over datasets");
  bench->add_option("--datasets", datasets_glob, "dataset dir (train.csv/test.csv pairs) or CSV")
      ->required();
  bench->add_option("--methods", methods_text, "comma-separated method list")->required();
  bench->add_option("--seeds", seeds_text, "comma-separated seed list")->required();
  bench->add_option("--out", out_dir, "output directory")->required();
  bench->add_option("--config", config_path, "JSON config file");
  bench->add_flag("--timings", timings, "fill the seconds column");

  auto* sweep = app.add_subcommand("sweep", "Identification-ratio sweep on one dataset");
  sweep->add_option("--dataset", dataset_path, "train CSV")->required();
  sweep->add_option("--methods", methods_text, "comma-separated method list")->required();
  sweep->add_option("--ratios", ratios_text, "comma-separated ratios in [0,1]")->required();
  sweep->add_option("--seeds", seeds_text, "comma-separated seed list")->required();
  sweep->add_option("--out", out_dir, "output directory")->required();
  sweep->add_option("--config", config_path, "JSON config file");
  sweep->add_flag("--timings", timings, "fill the seconds column");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) return cmd_synth(out_dir, seed, spec_path);
    if (fit->parsed())
      return cmd_fit(train_path, mode, config_path, model_out, report_out, seed,
                     fit_seed->count() > 0 || std::getenv("DUALGAN_SEED") != nullptr, timings);
    if (score->parsed()) return cmd_score(model_path, data_path, out_path);
    if (cluster->parsed()) return cmd_cluster(data_path, out_path, config_path);
    if (bench->parsed())
      return cmd_bench(datasets_glob, methods_text, seeds_text, out_dir, config_path, timings);
    if (sweep->parsed())
      return cmd_sweep(dataset_path, methods_text, ratios_text, seeds_text, out_dir, config_path,
                       timings);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
