#pragma once

#include "dualgan/common.hpp"

namespace dualgan::indicators {

struct NnrParams {
  Index p = 100;    // number of sampled points (capped at |A|)
  Index q = 10;     // neighbors inspected per sampled point
  double tau1 = 0.5;
  double tau2 = 0.4;
};

struct NnrResult {
  double nnr_value = 0.0;  // fraction of sampled points deemed mixed
  bool nash = false;       // nnr_value > tau2
};

// Two-sample mixing statistic: sample min(p,|A|) rows of A, count what
// fraction of each row's q nearest neighbors in (A u B) \ {self} fall in B.
NnrResult nnr(const Matrix& sample_set, const Matrix& reference_set, const NnrParams& params,
              std::uint64_t rng_seed);

// Mean ascending rank (ties averaged) of identified anomalies under D(x),
// normalized by n. Lower means the model ranks identified anomalies lowest.
double average_position(const Vector& discriminator_outputs,
                        const std::vector<bool>& identified_flags);

}  // namespace dualgan::indicators
