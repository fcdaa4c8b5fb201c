#include "dualgan/gan.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dualgan::gan {
namespace {

double clamp_prob(double p) { return std::clamp(p, kProbEps, 1.0 - kProbEps); }

Matrix vstack(const Matrix& a, const Matrix& b) {
  if (a.rows() == 0) return b;
  if (b.rows() == 0) return a;
  Matrix out(a.rows() + b.rows(), a.cols());
  out.topRows(a.rows()) = a;
  out.bottomRows(b.rows()) = b;
  return out;
}

}  // namespace

Matrix sample_noise(Rng& rng, Index count, Index dim) {
  Matrix z(count, dim);
  for (Index i = 0; i < count; ++i)
    for (Index j = 0; j < dim; ++j) z(i, j) = rng.uniform();
  return z;
}

SubsetAssignment partition_by_output(const Vector& discriminator_outputs, Index k) {
  const Index n = discriminator_outputs.size();
  if (k < 1) throw ConfigError("partition_by_output: k must be >= 1");
  if (n < k) throw ConfigError("partition_by_output: fewer rows than subsets");

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return discriminator_outputs[a] < discriminator_outputs[b];
  });

  SubsetAssignment assignment;
  assignment.subsets.resize(static_cast<std::size_t>(k));
  const Index base = n / k;
  const Index extra = n % k;
  Index pos = 0;
  for (Index j = 0; j < k; ++j) {
    const Index size = base + (j < extra ? 1 : 0);
    auto& subset = assignment.subsets[static_cast<std::size_t>(j)];
    subset.assign(order.begin() + pos, order.begin() + pos + size);
    pos += size;
  }
  return assignment;
}

double representative_statistic(const Vector& outputs_on_subset) {
  if (outputs_on_subset.size() == 0)
    throw DegenerateInputError("representative_statistic: empty subset");
  return clamp_prob(outputs_on_subset.minCoeff());
}

double mo_discriminator_step(nn::Mlp& discriminator, const Matrix& real_batch,
                             const std::vector<Matrix>& generated_batches,
                             nn::AdamState& adam) {
  if (real_batch.rows() == 0) throw DegenerateInputError("mo_discriminator_step: empty real batch");
  Matrix all = real_batch;
  for (const Matrix& g : generated_batches) all = vstack(all, g);
  Vector targets = Vector::Zero(all.rows());
  targets.head(real_batch.rows()).setOnes();

  nn::ForwardCache cache;
  const Matrix p = nn::forward(discriminator, all, cache);
  const double loss = nn::bce_loss(p.col(0), targets);
  if (!std::isfinite(loss)) throw NumericError("mo_discriminator_step: non-finite loss");
  nn::Gradients grads = nn::backprop_bce(discriminator, cache, targets);
  nn::adam_step(discriminator, grads, adam);
  return loss;
}

double mo_generator_step(nn::Mlp& generator, const nn::Mlp& discriminator,
                         const Matrix& noise_batch, double t_statistic, nn::AdamState& adam) {
  if (t_statistic <= 0.0 || t_statistic >= 1.0)
    throw ConfigError("mo_generator_step: T must lie in (0,1)");
  nn::ForwardCache gen_cache, disc_cache;
  const Matrix fake = nn::forward(generator, noise_batch, gen_cache);
  const Matrix p = nn::forward(discriminator, fake, disc_cache);
  const Vector targets = Vector::Constant(p.rows(), t_statistic);
  const double loss = nn::bce_loss(p.col(0), targets);
  if (!std::isfinite(loss)) throw NumericError("mo_generator_step: non-finite loss");
  nn::Gradients disc_grads = nn::backprop_bce(discriminator, disc_cache, targets);
  nn::Gradients gen_grads = nn::backprop_output_grad(generator, gen_cache, disc_grads.d_input);
  nn::adam_step(generator, gen_grads, adam);
  return loss;
}

std::pair<double, double> mgan_step(nn::Mlp& generator, nn::Mlp& discriminator,
                                    const Matrix& real_subset_batch, const Matrix& noise_batch,
                                    nn::AdamState& generator_adam,
                                    nn::AdamState& discriminator_adam) {
  if (real_subset_batch.rows() == 0) throw DegenerateInputError("mgan_step: empty subset batch");

  const Matrix fake = nn::forward(generator, noise_batch);
  const double d_loss =
      mo_discriminator_step(discriminator, real_subset_batch, {fake}, discriminator_adam);

  // non-saturating generator objective: -sum log D(G(z))
  nn::ForwardCache gen_cache, disc_cache;
  const Matrix fake2 = nn::forward(generator, noise_batch, gen_cache);
  const Matrix p = nn::forward(discriminator, fake2, disc_cache);
  const Vector targets = Vector::Ones(p.rows());
  const double g_loss = nn::bce_loss(p.col(0), targets);
  if (!std::isfinite(g_loss)) throw NumericError("mgan_step: non-finite generator loss");
  nn::Gradients disc_grads = nn::backprop_bce(discriminator, disc_cache, targets);
  nn::Gradients gen_grads = nn::backprop_output_grad(generator, gen_cache, disc_grads.d_input);
  nn::adam_step(generator, gen_grads, generator_adam);
  return {d_loss, g_loss};
}

Budget umo_budgets(const SubsetAssignment& assignment, const Matrix& table, Index total) {
  const Index k = static_cast<Index>(assignment.subsets.size());
  if (k == 0) throw DegenerateInputError("umo_budgets: no subsets");
  Budget budget;
  budget.per_generator_counts.assign(static_cast<std::size_t>(k), 0);
  if (total == 0) return budget;

  std::vector<double> dispersion(static_cast<std::size_t>(k), 0.0);
  double disp_sum = 0.0;
  for (Index j = 0; j < k; ++j) {
    const auto& subset = assignment.subsets[static_cast<std::size_t>(j)];
    if (subset.empty()) continue;
    Vector centroid = Vector::Zero(table.cols());
    for (Index i : subset) centroid += table.row(i).transpose();
    centroid /= static_cast<double>(subset.size());
    double mean_dist = 0.0;
    for (Index i : subset) mean_dist += (table.row(i).transpose() - centroid).norm();
    dispersion[static_cast<std::size_t>(j)] = mean_dist / static_cast<double>(subset.size());
    disp_sum += dispersion[static_cast<std::size_t>(j)];
  }
  if (disp_sum <= 0.0)
    return rcc_budgets(k, total);  // all subsets equally concentrated

  std::vector<double> raw(static_cast<std::size_t>(k));
  Index assigned = 0;
  for (Index j = 0; j < k; ++j) {
    raw[static_cast<std::size_t>(j)] =
        static_cast<double>(total) * dispersion[static_cast<std::size_t>(j)] / disp_sum;
    budget.per_generator_counts[static_cast<std::size_t>(j)] =
        static_cast<Index>(std::floor(raw[static_cast<std::size_t>(j)]));
    assigned += budget.per_generator_counts[static_cast<std::size_t>(j)];
  }
  // remainder to the most dispersed subsets
  std::vector<Index> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return dispersion[static_cast<std::size_t>(a)] > dispersion[static_cast<std::size_t>(b)];
  });
  for (Index t = 0; assigned < total; ++t) {
    ++budget.per_generator_counts[static_cast<std::size_t>(order[static_cast<std::size_t>(t % static_cast<std::size_t>(k))])];
    ++assigned;
  }
  // every generator emits at least one sample (taken from the largest count)
  if (total >= k) {
    for (Index j = 0; j < k; ++j) {
      auto& cj = budget.per_generator_counts[static_cast<std::size_t>(j)];
      if (cj >= 1) continue;
      auto donor = std::max_element(budget.per_generator_counts.begin(),
                                    budget.per_generator_counts.end());
      if (*donor > 1) {
        --(*donor);
        ++cj;
      }
    }
  }
  return budget;
}

Budget rcc_budgets(Index cluster_count, Index total) {
  if (cluster_count < 1) throw ConfigError("rcc_budgets: cluster_count must be >= 1");
  Budget budget;
  budget.per_generator_counts.resize(static_cast<std::size_t>(cluster_count));
  const Index base = total / cluster_count;
  const Index extra = total % cluster_count;
  for (Index j = 0; j < cluster_count; ++j)
    budget.per_generator_counts[static_cast<std::size_t>(j)] = base + (j < extra ? 1 : 0);
  return budget;
}

PotentialOutlierPool generate_pool(const std::vector<nn::Mlp>& generators, const Budget& budget,
                                   Role role, Rng& rng) {
  if (budget.per_generator_counts.size() != generators.size())
    throw ConfigError("generate_pool: budget/generator count mismatch");
  PotentialOutlierPool pool;
  const Index total = budget.total();
  const Index dim = generators.empty() ? 0 : generators.front().output_dim();
  pool.samples.resize(total, dim);
  pool.tags.reserve(static_cast<std::size_t>(total));
  Index row = 0;
  for (std::size_t j = 0; j < generators.size(); ++j) {
    const Index count = budget.per_generator_counts[j];
    if (count == 0) continue;
    const Matrix z = sample_noise(rng, count, generators[j].input_dim());
    pool.samples.middleRows(row, count) = nn::forward(generators[j], z);
    for (Index i = 0; i < count; ++i) pool.tags.push_back({role, static_cast<Index>(j)});
    row += count;
  }
  return pool;
}

double overall_discriminator_step(nn::Mlp& discriminator, const Matrix& unlabeled_batch,
                                  const Matrix& identified_anomaly_batch,
                                  const Matrix& pool_batch, nn::AdamState& adam) {
  if (unlabeled_batch.rows() == 0)
    throw DegenerateInputError("overall_discriminator_step: empty unlabeled batch");
  Matrix all = vstack(vstack(unlabeled_batch, identified_anomaly_batch), pool_batch);
  Vector targets = Vector::Zero(all.rows());
  targets.head(unlabeled_batch.rows()).setOnes();

  nn::ForwardCache cache;
  const Matrix p = nn::forward(discriminator, all, cache);
  const double loss = nn::bce_loss(p.col(0), targets);
  if (!std::isfinite(loss)) throw NumericError("overall_discriminator_step: non-finite loss");
  nn::Gradients grads = nn::backprop_bce(discriminator, cache, targets);
  nn::adam_step(discriminator, grads, adam);
  return loss;
}

}  // namespace dualgan::gan
