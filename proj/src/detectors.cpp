#include "dualgan/detectors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace dualgan::detectors {
namespace {

using nn::Mlp;

std::vector<Index> discriminator_dims(Index d, Index reference_count) {
  return {d, std::min<Index>(std::max<Index>(reference_count, 2), 1000), 10, 1};
}

Mlp make_generator(Index d, Rng& rng) {
  return nn::init_mlp({d, d, d}, nn::InitScheme::kOrthogonal, rng,
                      nn::OutputActivation::kSigmoid);
}

Mlp make_discriminator(Index d, Index reference_count, Rng& rng) {
  return nn::init_mlp(discriminator_dims(d, reference_count), nn::InitScheme::kVarianceScaling,
                      rng, nn::OutputActivation::kSigmoid);
}

// min(batch_size, subset) rows without replacement; singleton subsets are
// duplicated so adversarial batches always hold at least two rows
Matrix sample_subset_batch(const Matrix& X, const std::vector<Index>& subset, Index batch_size,
                           Rng& rng) {
  const Index sz = static_cast<Index>(subset.size());
  if (sz == 0) throw DegenerateInputError("sample_subset_batch: empty subset");
  if (sz == 1) {
    Matrix out(2, X.cols());
    out.row(0) = X.row(subset[0]);
    out.row(1) = X.row(subset[0]);
    return out;
  }
  const Index m = std::min(batch_size, sz);
  const auto picks = rng.sample_without_replacement(sz, m);
  Matrix out(m, X.cols());
  for (Index i = 0; i < m; ++i)
    out.row(i) = X.row(subset[static_cast<std::size_t>(picks[static_cast<std::size_t>(i)])]);
  return out;
}

Matrix sample_rows(const Matrix& X, Index batch_size, Rng& rng) {
  if (X.rows() <= batch_size) return X;
  const auto picks = rng.sample_without_replacement(X.rows(), batch_size);
  return rows_of(X, picks);
}

Matrix vstack(const Matrix& a, const Matrix& b) {
  if (a.rows() == 0) return b;
  if (b.rows() == 0) return a;
  Matrix out(a.rows() + b.rows(), a.cols());
  out.topRows(a.rows()) = a;
  out.bottomRows(b.rows()) = b;
  return out;
}

// mo_gan scores with the adversarially trained discriminator itself, so its
// generators move slowly enough for the discriminator to keep a density
// estimate; the other modes score with a separate overall discriminator and
// want generators that actually reach the data.
constexpr double kDefaultGeneratorLr = 1e-3;
constexpr double kMoGanGeneratorLr = 1e-4;

void validate_config(const FitConfig& config) {
  if (config.max_iters < 1) throw ConfigError("fit: max_iters must be >= 1");
  if (config.discriminator_lr <= 0.0 ||
      (config.generator_lr && *config.generator_lr <= 0.0))
    throw ConfigError("fit: learning rates must be positive");
  if (config.k < 1) throw ConfigError("fit: k must be >= 1");
  if (config.batch_size < 1) throw ConfigError("fit: batch_size must be >= 1");
  if (config.overall_d_steps < 1) throw ConfigError("fit: overall_d_steps must be >= 1");
}

// Pool-size defaults. A modest unlabeled pool keeps the overall discriminator
// confident on dense regions, while a large anomaly pool gives the few
// identified anomalies enough mass to carve their neighborhoods out.
Index default_anomaly_pool(Index unlabeled_count, Index identified_count) {
  const Index half =
      static_cast<Index>(std::ceil(0.5 * static_cast<double>(unlabeled_count)));
  return std::max(identified_count, half);
}

Index default_unlabeled_pool(Index unlabeled_count) {
  return std::max<Index>(
      1, static_cast<Index>(std::ceil(0.2 * static_cast<double>(unlabeled_count))));
}

// Subsets of a clustering as index lists, for the GanGroup assignment.
gan::SubsetAssignment assignment_from_clusters(const rcc::Clustering& clustering) {
  gan::SubsetAssignment assignment;
  assignment.subsets = rcc::cluster_members(clustering);
  return assignment;
}

struct ApContext {
  Matrix all_rows;                  // unlabeled rows then identified rows
  std::vector<bool> identified_flags;
};

ApContext make_ap_context(const Matrix& unlabeled, const Matrix& identified) {
  ApContext ctx;
  ctx.all_rows = vstack(unlabeled, identified);
  ctx.identified_flags.assign(static_cast<std::size_t>(ctx.all_rows.rows()), false);
  for (Index i = unlabeled.rows(); i < ctx.all_rows.rows(); ++i)
    ctx.identified_flags[static_cast<std::size_t>(i)] = true;
  return ctx;
}

void run_ap_checkpoint(const Mlp& overall, const ApContext& ctx, Index iteration,
                       const FitConfig& config, FitReport& report, BestSnapshot& best) {
  if (iteration <= config.ap_warmup) return;
  const Vector outputs = nn::forward(overall, ctx.all_rows).col(0);
  const double ap = indicators::average_position(outputs, ctx.identified_flags);
  report.ap_trace.push_back(ap);
  report.ap_iterations.push_back(iteration);
  checkpoint_if_better(overall, ap, iteration, best);
}

TrainedModel finalize_model(const Mlp& last_discriminator, const BestSnapshot& best,
                            Index last_iteration, const FitConfig& config,
                            FitReport& report) {
  TrainedModel model;
  model.mode = config.mode;
  model.seed = config.seed;
  if (best.iteration >= 0) {
    model.best_discriminator = best.discriminator;
    model.best_ap = best.ap;
    model.best_iteration = best.iteration;
    model.selection_metric = "ap";
  } else {
    model.best_discriminator = last_discriminator;
    model.best_ap = 1.0;
    model.best_iteration = last_iteration;
    model.selection_metric = "last_iteration";
    report.warnings.push_back("key=model_selection value=last_iteration");
  }
  return model;
}

}  // namespace

std::string mode_name(Mode mode) {
  switch (mode) {
    case Mode::kDualGan: return "dual_gan";
    case Mode::kRccDualGan: return "rcc_dual_gan";
    case Mode::kMoGan: return "mo_gan";
    case Mode::kSupGan: return "sup_gan";
    case Mode::kSupRccGan: return "sup_rcc_gan";
  }
  throw ConfigError("mode_name: unknown mode");
}

Mode parse_mode(const std::string& name) {
  if (name == "dual_gan") return Mode::kDualGan;
  if (name == "rcc_dual_gan") return Mode::kRccDualGan;
  if (name == "mo_gan") return Mode::kMoGan;
  if (name == "sup_gan") return Mode::kSupGan;
  if (name == "sup_rcc_gan") return Mode::kSupRccGan;
  throw ConfigError("unknown mode: " + name);
}

void checkpoint_if_better(const Mlp& current, double current_ap, Index iteration,
                          BestSnapshot& best) {
  if (current_ap < best.ap) {
    best.discriminator = current;
    best.ap = current_ap;
    best.iteration = iteration;
  }
}

FitResult fit_rcc_dual_gan(const Matrix& unlabeled, const Matrix& identified,
                           const FitConfig& config) {
  validate_config(config);
  const Index n_u = unlabeled.rows();
  const Index l = identified.rows();
  if (n_u == 0) throw DegenerateInputError("fit_rcc_dual_gan: empty unlabeled set");
  const Index d = unlabeled.cols();
  const auto start_time = std::chrono::steady_clock::now();

  FitResult result;
  FitReport& report = result.report;
  Rng rng(config.seed);

  const rcc::Clustering clustering_u = rcc::cluster(unlabeled, config.rcc);
  report.unlabeled_cluster_count = clustering_u.cluster_count;

  gan::GanGroup group_u;
  group_u.role = gan::Role::kUnlabeled;
  group_u.assignment = assignment_from_clusters(clustering_u);
  for (const auto& subset : group_u.assignment.subsets) {
    group_u.generators.push_back(make_generator(d, rng));
    group_u.discriminators.push_back(
        make_discriminator(d, static_cast<Index>(subset.size()), rng));
    group_u.generator_adam.push_back(nn::make_adam(
        group_u.generators.back(), config.generator_lr.value_or(kDefaultGeneratorLr)));
    group_u.discriminator_adam.push_back(
        nn::make_adam(group_u.discriminators.back(), config.discriminator_lr));
    group_u.nash_reached.push_back(false);
  }

  gan::GanGroup group_a;
  group_a.role = gan::Role::kAnomaly;
  if (l > 0) {
    const rcc::Clustering clustering_a = rcc::cluster(identified, config.rcc);
    report.anomaly_cluster_count = clustering_a.cluster_count;
    group_a.assignment = assignment_from_clusters(clustering_a);
    for (const auto& subset : group_a.assignment.subsets) {
      group_a.generators.push_back(make_generator(d, rng));
      group_a.discriminators.push_back(
          make_discriminator(d, static_cast<Index>(subset.size()), rng));
      group_a.generator_adam.push_back(nn::make_adam(
          group_a.generators.back(), config.generator_lr.value_or(kDefaultGeneratorLr)));
      group_a.discriminator_adam.push_back(
          nn::make_adam(group_a.discriminators.back(), config.discriminator_lr));
      group_a.nash_reached.push_back(false);
    }
  } else {
    report.warnings.push_back("key=no_identified_anomalies fallback=unsupervised");
  }
  const Index k_u = group_u.generator_count();
  const Index k_a = group_a.generator_count();

  Mlp overall = make_discriminator(d, n_u + l, rng);
  nn::AdamState overall_adam = nn::make_adam(overall, config.discriminator_lr);

  const Index pool_u_total = config.total_unlabeled_pool.value_or(default_unlabeled_pool(n_u));
  const Index pool_a_total =
      l > 0 ? config.total_anomaly_pool.value_or(default_anomaly_pool(n_u, l)) : 0;
  // scale the per-iteration pool with the unlabeled batch fraction
  const Index m_u = std::min(config.batch_size, n_u);
  const Index pool_u_iter = std::max<Index>(
      k_u, static_cast<Index>(std::llround(static_cast<double>(pool_u_total) *
                                           static_cast<double>(m_u) /
                                           static_cast<double>(n_u))));

  report.unlabeled_d_loss.resize(static_cast<std::size_t>(k_u));
  report.unlabeled_g_loss.resize(static_cast<std::size_t>(k_u));
  report.anomaly_d_loss.resize(static_cast<std::size_t>(k_a));
  report.anomaly_g_loss.resize(static_cast<std::size_t>(k_a));

  const ApContext ap_ctx = make_ap_context(unlabeled, identified);
  BestSnapshot best;

  for (Index it = 1; it <= config.max_iters; ++it) {
    for (Index j = 0; j < k_u; ++j) {
      const auto& subset = group_u.assignment.subsets[static_cast<std::size_t>(j)];
      if ((it - 1) % config.nnr_check_period == 0) {
        const Matrix z = gan::sample_noise(rng, config.nnr.p, d);
        const Matrix fresh = nn::forward(group_u.generators[static_cast<std::size_t>(j)], z);
        const Matrix subset_rows = rows_of(unlabeled, subset);
        const auto res = indicators::nnr(fresh, subset_rows, config.nnr, rng.next_u64());
        group_u.nash_reached[static_cast<std::size_t>(j)] = res.nash;
        report.nnr_history.push_back({it, gan::Role::kUnlabeled, j, res.nnr_value, res.nash});
      }
      if (group_u.nash_reached[static_cast<std::size_t>(j)]) continue;
      const Matrix real = sample_subset_batch(unlabeled, subset, config.batch_size, rng);
      const Matrix z = gan::sample_noise(rng, real.rows(), d);
      const auto [dl, gl] = gan::mgan_step(group_u.generators[static_cast<std::size_t>(j)],
                                           group_u.discriminators[static_cast<std::size_t>(j)],
                                           real, z,
                                           group_u.generator_adam[static_cast<std::size_t>(j)],
                                           group_u.discriminator_adam[static_cast<std::size_t>(j)]);
      report.unlabeled_d_loss[static_cast<std::size_t>(j)].push_back(dl);
      report.unlabeled_g_loss[static_cast<std::size_t>(j)].push_back(gl);
    }

    // anomaly-side sub-GANs keep training for all iterations
    for (Index j = 0; j < k_a; ++j) {
      const auto& subset = group_a.assignment.subsets[static_cast<std::size_t>(j)];
      const Matrix real = sample_subset_batch(identified, subset, config.batch_size, rng);
      const Matrix z = gan::sample_noise(rng, real.rows(), d);
      const auto [dl, gl] = gan::mgan_step(group_a.generators[static_cast<std::size_t>(j)],
                                           group_a.discriminators[static_cast<std::size_t>(j)],
                                           real, z,
                                           group_a.generator_adam[static_cast<std::size_t>(j)],
                                           group_a.discriminator_adam[static_cast<std::size_t>(j)]);
      report.anomaly_d_loss[static_cast<std::size_t>(j)].push_back(dl);
      report.anomaly_g_loss[static_cast<std::size_t>(j)].push_back(gl);
    }

    const gan::PotentialOutlierPool pool_u =
        gan::generate_pool(group_u.generators, gan::rcc_budgets(k_u, pool_u_iter),
                           gan::Role::kUnlabeled, rng);
    Matrix pool = pool_u.samples;
    if (k_a > 0) {
      const gan::PotentialOutlierPool pool_a =
          gan::generate_pool(group_a.generators, gan::rcc_budgets(k_a, pool_a_total),
                             gan::Role::kAnomaly, rng);
      pool = vstack(pool, pool_a.samples);
    }
    double overall_loss = 0.0;
    for (Index s = 0; s < config.overall_d_steps; ++s) {
      const Matrix unlabeled_batch = sample_rows(unlabeled, config.batch_size, rng);
      overall_loss =
          gan::overall_discriminator_step(overall, unlabeled_batch, identified, pool, overall_adam);
    }
    report.overall_d_loss_trace.push_back(overall_loss);

    if (l > 0) run_ap_checkpoint(overall, ap_ctx, it, config, report, best);
  }

  result.model = finalize_model(overall, best, config.max_iters, config, report);
  result.report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return result;
}

FitResult fit_dual_gan(const Matrix& unlabeled, const Matrix& identified,
                       const FitConfig& config) {
  validate_config(config);
  const Index n_u = unlabeled.rows();
  const Index l = identified.rows();
  if (n_u == 0) throw DegenerateInputError("fit_dual_gan: empty unlabeled set");
  const Index d = unlabeled.cols();
  const auto start_time = std::chrono::steady_clock::now();

  FitResult result;
  FitReport& report = result.report;
  Rng rng(config.seed);

  const Index k = std::min(config.k, n_u);
  const Index k_a = l > 0 ? std::min(config.k, l) : 0;
  report.unlabeled_cluster_count = k;
  report.anomaly_cluster_count = k_a;

  Mlp d_u = make_discriminator(d, n_u, rng);
  nn::AdamState d_u_adam = nn::make_adam(d_u, config.discriminator_lr);
  std::vector<Mlp> g_u;
  std::vector<nn::AdamState> g_u_adam;
  std::vector<bool> nash_u(static_cast<std::size_t>(k), false);
  for (Index j = 0; j < k; ++j) {
    g_u.push_back(make_generator(d, rng));
    g_u_adam.push_back(nn::make_adam(g_u.back(), config.generator_lr.value_or(kDefaultGeneratorLr)));
  }

  Mlp d_a;
  nn::AdamState d_a_adam;
  std::vector<Mlp> g_a;
  std::vector<nn::AdamState> g_a_adam;
  if (l > 0) {
    d_a = make_discriminator(d, l, rng);
    d_a_adam = nn::make_adam(d_a, config.discriminator_lr);
    for (Index j = 0; j < k_a; ++j) {
      g_a.push_back(make_generator(d, rng));
      g_a_adam.push_back(nn::make_adam(g_a.back(), config.generator_lr.value_or(kDefaultGeneratorLr)));
    }
  } else {
    report.warnings.push_back("key=no_identified_anomalies fallback=unsupervised");
  }

  Mlp overall = make_discriminator(d, n_u + l, rng);
  nn::AdamState overall_adam = nn::make_adam(overall, config.discriminator_lr);

  const Index pool_u_total = config.total_unlabeled_pool.value_or(default_unlabeled_pool(n_u));
  const Index pool_a_total =
      l > 0 ? config.total_anomaly_pool.value_or(default_anomaly_pool(n_u, l)) : 0;
  const Index m_u = std::min(config.batch_size, n_u);
  const Index pool_u_iter = std::max<Index>(
      k, static_cast<Index>(std::llround(static_cast<double>(pool_u_total) *
                                         static_cast<double>(m_u) /
                                         static_cast<double>(n_u))));

  report.unlabeled_d_loss.resize(static_cast<std::size_t>(k));
  report.unlabeled_g_loss.resize(static_cast<std::size_t>(k));
  report.anomaly_d_loss.resize(static_cast<std::size_t>(k_a));
  report.anomaly_g_loss.resize(static_cast<std::size_t>(k_a));

  const ApContext ap_ctx = make_ap_context(unlabeled, identified);
  BestSnapshot best;
  gan::SubsetAssignment assign_u, assign_a;

  for (Index it = 1; it <= config.max_iters; ++it) {
    const Vector outputs_u = nn::forward(d_u, unlabeled).col(0);
    if (it == 1 || config.refresh_partition) assign_u = gan::partition_by_output(outputs_u, k);

    for (Index j = 0; j < k; ++j) {
      if ((it - 1) % config.nnr_check_period == 0) {
        const Matrix z = gan::sample_noise(rng, config.nnr.p, d);
        const Matrix fresh = nn::forward(g_u[static_cast<std::size_t>(j)], z);
        const Matrix subset_rows = rows_of(unlabeled, assign_u.subsets[static_cast<std::size_t>(j)]);
        const auto res = indicators::nnr(fresh, subset_rows, config.nnr, rng.next_u64());
        nash_u[static_cast<std::size_t>(j)] = res.nash;
        report.nnr_history.push_back({it, gan::Role::kUnlabeled, j, res.nnr_value, res.nash});
      }
    }

    // shared-discriminator step over real rows plus every generator's fakes
    {
      const Matrix real = sample_rows(unlabeled, config.batch_size, rng);
      const Index per_gen = (real.rows() + k - 1) / k;
      std::vector<Matrix> fakes;
      for (Index j = 0; j < k; ++j)
        fakes.push_back(nn::forward(g_u[static_cast<std::size_t>(j)],
                                    gan::sample_noise(rng, per_gen, d)));
      const double dl = gan::mo_discriminator_step(d_u, real, fakes, d_u_adam);
      for (Index j = 0; j < k; ++j)
        report.unlabeled_d_loss[static_cast<std::size_t>(j)].push_back(dl);
    }
    for (Index j = 0; j < k; ++j) {
      if (nash_u[static_cast<std::size_t>(j)]) continue;
      Vector subset_outputs(static_cast<Index>(assign_u.subsets[static_cast<std::size_t>(j)].size()));
      for (Index t = 0; t < subset_outputs.size(); ++t)
        subset_outputs[t] = outputs_u[assign_u.subsets[static_cast<std::size_t>(j)][static_cast<std::size_t>(t)]];
      const double t_j = gan::representative_statistic(subset_outputs);
      const Matrix z = gan::sample_noise(rng, m_u, d);
      report.unlabeled_g_loss[static_cast<std::size_t>(j)].push_back(
          gan::mo_generator_step(g_u[static_cast<std::size_t>(j)], d_u, z, t_j,
                                 g_u_adam[static_cast<std::size_t>(j)]));
    }

    if (l > 0) {
      const Vector outputs_a = nn::forward(d_a, identified).col(0);
      if (it == 1 || config.refresh_partition) assign_a = gan::partition_by_output(outputs_a, k_a);
      {
        const Index m_a = std::min(config.batch_size, l);
        const Matrix real = sample_rows(identified, config.batch_size, rng);
        const Index per_gen = (m_a + k_a - 1) / k_a;
        std::vector<Matrix> fakes;
        for (Index j = 0; j < k_a; ++j)
          fakes.push_back(nn::forward(g_a[static_cast<std::size_t>(j)],
                                      gan::sample_noise(rng, per_gen, d)));
        const double dl = gan::mo_discriminator_step(d_a, real, fakes, d_a_adam);
        for (Index j = 0; j < k_a; ++j)
          report.anomaly_d_loss[static_cast<std::size_t>(j)].push_back(dl);
      }
      for (Index j = 0; j < k_a; ++j) {
        Vector subset_outputs(static_cast<Index>(assign_a.subsets[static_cast<std::size_t>(j)].size()));
        for (Index t = 0; t < subset_outputs.size(); ++t)
          subset_outputs[t] = outputs_a[assign_a.subsets[static_cast<std::size_t>(j)][static_cast<std::size_t>(t)]];
        const double t_j = gan::representative_statistic(subset_outputs);
        const Matrix z = gan::sample_noise(rng, std::max<Index>(l, 2), d);
        report.anomaly_g_loss[static_cast<std::size_t>(j)].push_back(
            gan::mo_generator_step(g_a[static_cast<std::size_t>(j)], d_a, z, t_j,
                                   g_a_adam[static_cast<std::size_t>(j)]));
      }
    }

    Matrix pool =
        gan::generate_pool(g_u, gan::umo_budgets(assign_u, unlabeled, pool_u_iter),
                           gan::Role::kUnlabeled, rng)
            .samples;
    if (l > 0) {
      const gan::Budget budget_a = k_a > 1
          ? gan::umo_budgets(assign_a, identified, pool_a_total)
          : gan::rcc_budgets(1, pool_a_total);
      pool = vstack(pool, gan::generate_pool(g_a, budget_a, gan::Role::kAnomaly, rng).samples);
    }
    double overall_loss = 0.0;
    for (Index s = 0; s < config.overall_d_steps; ++s) {
      const Matrix unlabeled_batch = sample_rows(unlabeled, config.batch_size, rng);
      overall_loss =
          gan::overall_discriminator_step(overall, unlabeled_batch, identified, pool, overall_adam);
    }
    report.overall_d_loss_trace.push_back(overall_loss);

    if (l > 0) run_ap_checkpoint(overall, ap_ctx, it, config, report, best);
  }

  result.model = finalize_model(overall, best, config.max_iters, config, report);
  result.report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return result;
}

FitResult fit_mo_gan(const Matrix& data, const std::vector<bool>* identified_flags,
                     const FitConfig& config) {
  validate_config(config);
  const Index n = data.rows();
  if (n == 0) throw DegenerateInputError("fit_mo_gan: empty input");
  const Index d = data.cols();
  const auto start_time = std::chrono::steady_clock::now();

  FitResult result;
  FitReport& report = result.report;
  Rng rng(config.seed);

  const Index k = std::min(config.k, n);
  report.unlabeled_cluster_count = k;

  // one discriminator plays both the sub-GAN opponent and the scorer
  Mlp disc = make_discriminator(d, n, rng);
  nn::AdamState disc_adam = nn::make_adam(disc, config.discriminator_lr);
  std::vector<Mlp> gens;
  std::vector<nn::AdamState> gen_adam;
  std::vector<bool> nash(static_cast<std::size_t>(k), false);
  for (Index j = 0; j < k; ++j) {
    gens.push_back(make_generator(d, rng));
    gen_adam.push_back(nn::make_adam(gens.back(), config.generator_lr.value_or(kMoGanGeneratorLr)));
  }

  report.unlabeled_d_loss.resize(static_cast<std::size_t>(k));
  report.unlabeled_g_loss.resize(static_cast<std::size_t>(k));

  const bool select_by_ap =
      identified_flags != nullptr &&
      std::count(identified_flags->begin(), identified_flags->end(), true) > 0;
  BestSnapshot best;
  gan::SubsetAssignment assign;
  const Index m = std::min(config.batch_size, n);

  for (Index it = 1; it <= config.max_iters; ++it) {
    const Vector outputs = nn::forward(disc, data).col(0);
    if (it == 1 || config.refresh_partition) assign = gan::partition_by_output(outputs, k);

    for (Index j = 0; j < k; ++j) {
      if ((it - 1) % config.nnr_check_period == 0) {
        const Matrix z = gan::sample_noise(rng, config.nnr.p, d);
        const Matrix fresh = nn::forward(gens[static_cast<std::size_t>(j)], z);
        const Matrix subset_rows = rows_of(data, assign.subsets[static_cast<std::size_t>(j)]);
        const auto res = indicators::nnr(fresh, subset_rows, config.nnr, rng.next_u64());
        nash[static_cast<std::size_t>(j)] = res.nash;
        report.nnr_history.push_back({it, gan::Role::kUnlabeled, j, res.nnr_value, res.nash});
      }
    }
    {
      const Matrix real = sample_rows(data, config.batch_size, rng);
      const Index per_gen = (real.rows() + k - 1) / k;
      std::vector<Matrix> fakes;
      for (Index j = 0; j < k; ++j)
        fakes.push_back(nn::forward(gens[static_cast<std::size_t>(j)],
                                    gan::sample_noise(rng, per_gen, d)));
      const double dl = gan::mo_discriminator_step(disc, real, fakes, disc_adam);
      report.overall_d_loss_trace.push_back(dl);
      for (Index j = 0; j < k; ++j)
        report.unlabeled_d_loss[static_cast<std::size_t>(j)].push_back(dl);
    }
    for (Index j = 0; j < k; ++j) {
      if (nash[static_cast<std::size_t>(j)]) continue;
      Vector subset_outputs(static_cast<Index>(assign.subsets[static_cast<std::size_t>(j)].size()));
      for (Index t = 0; t < subset_outputs.size(); ++t)
        subset_outputs[t] = outputs[assign.subsets[static_cast<std::size_t>(j)][static_cast<std::size_t>(t)]];
      const double t_j = gan::representative_statistic(subset_outputs);
      const Matrix z = gan::sample_noise(rng, m, d);
      report.unlabeled_g_loss[static_cast<std::size_t>(j)].push_back(
          gan::mo_generator_step(gens[static_cast<std::size_t>(j)], disc, z, t_j,
                                 gen_adam[static_cast<std::size_t>(j)]));
    }

    if (select_by_ap && it > config.ap_warmup) {
      const Vector d_out = nn::forward(disc, data).col(0);
      const double ap = indicators::average_position(d_out, *identified_flags);
      report.ap_trace.push_back(ap);
      report.ap_iterations.push_back(it);
      checkpoint_if_better(disc, ap, it, best);
    }
  }

  result.model = finalize_model(disc, best, config.max_iters, config, report);
  result.report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return result;
}

FitResult fit_sup_gan(const Matrix& unlabeled, const Matrix& identified,
                      const FitConfig& config, bool use_rcc) {
  validate_config(config);
  const Index n_u = unlabeled.rows();
  const Index l = identified.rows();
  if (l < 1) throw ConfigError("fit_sup_gan: at least one identified anomaly required");
  if (n_u == 0) throw DegenerateInputError("fit_sup_gan: empty unlabeled set");
  const Index d = unlabeled.cols();
  const auto start_time = std::chrono::steady_clock::now();

  FitResult result;
  FitReport& report = result.report;
  Rng rng(config.seed);

  gan::SubsetAssignment assign_a;
  if (use_rcc && l >= 2) {
    const rcc::Clustering clustering_a = rcc::cluster(identified, config.rcc);
    assign_a = assignment_from_clusters(clustering_a);
  } else {
    assign_a.subsets.resize(1);
    for (Index i = 0; i < l; ++i) assign_a.subsets[0].push_back(i);
  }
  const Index k_a = static_cast<Index>(assign_a.subsets.size());
  report.anomaly_cluster_count = k_a;

  std::vector<Mlp> gens;
  std::vector<Mlp> discs;
  std::vector<nn::AdamState> gen_adam, disc_adam;
  for (Index j = 0; j < k_a; ++j) {
    gens.push_back(make_generator(d, rng));
    discs.push_back(make_discriminator(
        d, static_cast<Index>(assign_a.subsets[static_cast<std::size_t>(j)].size()), rng));
    gen_adam.push_back(nn::make_adam(gens.back(), config.generator_lr.value_or(kDefaultGeneratorLr)));
    disc_adam.push_back(nn::make_adam(discs.back(), config.discriminator_lr));
  }

  Mlp classifier = make_discriminator(d, n_u + l, rng);
  nn::AdamState classifier_adam = nn::make_adam(classifier, config.discriminator_lr);

  const Index pool_total = config.total_anomaly_pool.value_or(default_anomaly_pool(n_u, l));
  report.anomaly_d_loss.resize(static_cast<std::size_t>(k_a));
  report.anomaly_g_loss.resize(static_cast<std::size_t>(k_a));

  const Matrix all_real = [&] {
    Matrix m2(n_u + l, d);
    m2.topRows(n_u) = unlabeled;
    m2.bottomRows(l) = identified;
    return m2;
  }();
  Vector real_targets = Vector::Zero(n_u + l);
  real_targets.head(n_u).setOnes();

  BestSnapshot best;  // ap field reused for -accuracy so strict-less keeps ties earlier
  for (Index it = 1; it <= config.max_iters; ++it) {
    if (pool_total > 0) {
      for (Index j = 0; j < k_a; ++j) {
        const Matrix real =
            sample_subset_batch(identified, assign_a.subsets[static_cast<std::size_t>(j)],
                                config.batch_size, rng);
        const Matrix z = gan::sample_noise(rng, real.rows(), d);
        const auto [dl, gl] =
            gan::mgan_step(gens[static_cast<std::size_t>(j)], discs[static_cast<std::size_t>(j)],
                           real, z, gen_adam[static_cast<std::size_t>(j)],
                           disc_adam[static_cast<std::size_t>(j)]);
        report.anomaly_d_loss[static_cast<std::size_t>(j)].push_back(dl);
        report.anomaly_g_loss[static_cast<std::size_t>(j)].push_back(gl);
      }
    }
    Matrix pool(0, d);
    if (pool_total > 0)
      pool = gan::generate_pool(gens, gan::rcc_budgets(k_a, pool_total), gan::Role::kAnomaly, rng)
                 .samples;
    const Matrix unlabeled_batch = sample_rows(unlabeled, config.batch_size, rng);
    report.overall_d_loss_trace.push_back(gan::overall_discriminator_step(
        classifier, unlabeled_batch, identified, pool, classifier_adam));

    // training accuracy on the real rows drives model selection
    const Vector p = nn::forward(classifier, all_real).col(0);
    Index correct = 0;
    for (Index i = 0; i < p.size(); ++i)
      if ((p[i] > 0.5) == (real_targets[i] > 0.5)) ++correct;
    const double accuracy = static_cast<double>(correct) / static_cast<double>(p.size());
    report.ap_trace.push_back(accuracy);
    report.ap_iterations.push_back(it);
    checkpoint_if_better(classifier, -accuracy, it, best);
  }

  result.model.best_discriminator = best.discriminator;
  result.model.best_ap = -best.ap;  // stored as accuracy
  result.model.best_iteration = best.iteration;
  result.model.selection_metric = "accuracy";
  result.model.mode = config.mode;
  result.model.seed = config.seed;
  result.report.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return result;
}

FitResult fit(const data_io::LabeledTable& scaled_table, const FitConfig& config) {
  std::vector<Index> unlabeled_idx, identified_idx;
  for (Index i = 0; i < scaled_table.row_count(); ++i)
    (scaled_table.identified[static_cast<std::size_t>(i)] ? identified_idx : unlabeled_idx)
        .push_back(i);
  const Matrix unlabeled = rows_of(scaled_table.features, unlabeled_idx);
  const Matrix identified = rows_of(scaled_table.features, identified_idx);

  switch (config.mode) {
    case Mode::kDualGan:
      return fit_dual_gan(unlabeled, identified, config);
    case Mode::kRccDualGan:
      return fit_rcc_dual_gan(unlabeled, identified, config);
    case Mode::kMoGan: {
      const bool any =
          std::count(scaled_table.identified.begin(), scaled_table.identified.end(), true) > 0;
      return fit_mo_gan(scaled_table.features, any ? &scaled_table.identified : nullptr, config);
    }
    case Mode::kSupGan:
      return fit_sup_gan(unlabeled, identified, config, /*use_rcc=*/false);
    case Mode::kSupRccGan:
      return fit_sup_gan(unlabeled, identified, config, /*use_rcc=*/true);
  }
  throw ConfigError("fit: unknown mode");
}

ScoreVector score(const TrainedModel& model, const Matrix& scaled_features) {
  if (scaled_features.cols() != model.best_discriminator.input_dim())
    throw ShapeError("score: feature dimension does not match the model");
  ScoreVector sv;
  sv.scores = Vector::Ones(scaled_features.rows()) -
              nn::forward(model.best_discriminator, scaled_features).col(0);
  return sv;
}

}  // namespace dualgan::detectors
