#include "dualgan/indicators.hpp"

#include <algorithm>
#include <numeric>

namespace dualgan::indicators {

NnrResult nnr(const Matrix& sample_set, const Matrix& reference_set, const NnrParams& params,
              std::uint64_t rng_seed) {
  const Index na = sample_set.rows();
  const Index nb = reference_set.rows();
  if (na < 1 || nb < 1) throw DegenerateInputError("nnr: both sets must be non-empty");
  if (sample_set.cols() != reference_set.cols()) throw ShapeError("nnr: dimension mismatch");

  Rng rng(rng_seed);
  const std::vector<Index> picks = rng.sample_without_replacement(na, params.p);

  // neighbor pool = A u B minus the query itself; ties broken by pool index
  // (A rows first, then B rows)
  std::vector<std::pair<double, Index>> cand;
  Index mixed = 0;
  for (Index pick : picks) {
    cand.clear();
    const auto query = sample_set.row(pick);
    for (Index i = 0; i < na; ++i) {
      if (i == pick) continue;
      cand.emplace_back((sample_set.row(i) - query).squaredNorm(), i);
    }
    for (Index i = 0; i < nb; ++i)
      cand.emplace_back((reference_set.row(i) - query).squaredNorm(), na + i);
    const Index q = std::min<Index>(params.q, static_cast<Index>(cand.size()));
    std::partial_sort(cand.begin(), cand.begin() + q, cand.end());
    Index in_b = 0;
    for (Index t = 0; t < q; ++t)
      if (cand[static_cast<std::size_t>(t)].second >= na) ++in_b;
    const double nnr_i = static_cast<double>(in_b) / static_cast<double>(q);
    // Inclusive at tau1: with q neighbors and tau1 = 0.5 a strict comparison
    // would demand a majority from B even when the pool is perfectly mixed
    // (an even q then mixes barely a third of the time), which contradicts
    // the intended "same distribution => mixed" reading.
    if (nnr_i >= params.tau1) ++mixed;
  }
  NnrResult result;
  result.nnr_value = static_cast<double>(mixed) / static_cast<double>(picks.size());
  result.nash = result.nnr_value > params.tau2;
  return result;
}

double average_position(const Vector& discriminator_outputs,
                        const std::vector<bool>& identified_flags) {
  const Index n = discriminator_outputs.size();
  if (static_cast<Index>(identified_flags.size()) != n)
    throw ShapeError("average_position: flag/output length mismatch");
  if (!discriminator_outputs.allFinite())
    throw NumericError("average_position: non-finite outputs");
  const Index l = static_cast<Index>(
      std::count(identified_flags.begin(), identified_flags.end(), true));
  if (l == 0) throw DegenerateInputError("average_position: no identified anomalies");

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return discriminator_outputs[a] < discriminator_outputs[b];
  });

  // average ranks over tie groups, 1-based
  std::vector<double> rank(static_cast<std::size_t>(n));
  Index i = 0;
  while (i < n) {
    Index j = i;
    while (j + 1 < n &&
           discriminator_outputs[order[static_cast<std::size_t>(j + 1)]] ==
               discriminator_outputs[order[static_cast<std::size_t>(i)]])
      ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Index t = i; t <= j; ++t) rank[static_cast<std::size_t>(order[static_cast<std::size_t>(t)])] = avg;
    i = j + 1;
  }

  double sum = 0.0;
  for (Index r = 0; r < n; ++r)
    if (identified_flags[static_cast<std::size_t>(r)]) sum += rank[static_cast<std::size_t>(r)];
  return sum / static_cast<double>(l) / static_cast<double>(n);
}

}  // namespace dualgan::indicators
