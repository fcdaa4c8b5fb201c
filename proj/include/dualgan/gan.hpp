#pragma once

#include <utility>
#include <vector>

#include "dualgan/common.hpp"
#include "dualgan/nn.hpp"

namespace dualgan::gan {

enum class Role { kUnlabeled, kAnomaly };

struct SubsetAssignment {
  std::vector<std::vector<Index>> subsets;  // index lists over the source table
};

// Sub-generators plus either one shared discriminator (MO mode) or one
// discriminator per generator (RCC mode).
struct GanGroup {
  std::vector<nn::Mlp> generators;
  std::vector<nn::Mlp> discriminators;
  std::vector<nn::AdamState> generator_adam;
  std::vector<nn::AdamState> discriminator_adam;
  SubsetAssignment assignment;
  std::vector<bool> nash_reached;
  Role role = Role::kUnlabeled;
  bool shared_discriminator = false;

  Index generator_count() const { return static_cast<Index>(generators.size()); }
};

struct Budget {
  std::vector<Index> per_generator_counts;

  Index total() const {
    Index sum = 0;
    for (Index c : per_generator_counts) sum += c;
    return sum;
  }
};

struct PoolTag {
  Role role;
  Index generator_id;
};

struct PotentialOutlierPool {
  Matrix samples;
  std::vector<PoolTag> tags;  // one per row
};

// Noise prior p_z: uniform on [0,1)^dim.
Matrix sample_noise(Rng& rng, Index count, Index dim);

// Sort indices ascending by discriminator output (stable index tie-break) and
// slice into k contiguous groups whose sizes differ by at most one.
SubsetAssignment partition_by_output(const Vector& discriminator_outputs, Index k);

// Minimum output on the subset, clamped into [eps, 1-eps].
double representative_statistic(const Vector& outputs_on_subset);

// One Adam step on the shared discriminator against real rows (target 1) and
// every generated batch (target 0). Returns the pre-step loss.
double mo_discriminator_step(nn::Mlp& discriminator, const Matrix& real_batch,
                             const std::vector<Matrix>& generated_batches,
                             nn::AdamState& adam);

// One Adam step on one sub-generator with the T-weighted soft-target loss;
// the discriminator is read-only here. Returns the pre-step loss.
double mo_generator_step(nn::Mlp& generator, const nn::Mlp& discriminator,
                         const Matrix& noise_batch, double t_statistic, nn::AdamState& adam);

// One paired sub-GAN update: discriminator BCE step on its own subset, then a
// non-saturating generator step through the updated discriminator.
std::pair<double, double> mgan_step(nn::Mlp& generator, nn::Mlp& discriminator,
                                    const Matrix& real_subset_batch, const Matrix& noise_batch,
                                    nn::AdamState& generator_adam,
                                    nn::AdamState& discriminator_adam);

// Generation counts proportional to subset dispersion (mean distance to the
// subset centroid), each at least 1, summing exactly to total.
Budget umo_budgets(const SubsetAssignment& assignment, const Matrix& table, Index total);

// Equal counts with the remainder assigned to the lowest cluster ids.
Budget rcc_budgets(Index cluster_count, Index total);

PotentialOutlierPool generate_pool(const std::vector<nn::Mlp>& generators, const Budget& budget,
                                   Role role, Rng& rng);

// One Adam step on the overall discriminator: unlabeled rows target 1,
// identified anomalies and pool rows target 0. Returns the pre-step loss.
double overall_discriminator_step(nn::Mlp& discriminator, const Matrix& unlabeled_batch,
                                  const Matrix& identified_anomaly_batch,
                                  const Matrix& pool_batch, nn::AdamState& adam);

}  // namespace dualgan::gan
