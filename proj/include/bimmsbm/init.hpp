#pragma once
// Warm starts from a single-membership Bernoulli latent block model.

#include <cstdint>
#include <vector>

#include "bimmsbm/estep.hpp"

namespace bimmsbm {

struct InitAssignment {
  std::vector<std::uint32_t> labels1, labels2;
  Matrix row_mix;      // N1 x K1
  Matrix col_mix;      // N2 x K2
  Matrix block_probs;  // K1 x K2 smoothed block densities
  double objective = 0.0;
  /// Objective after each half-step of the winning restart.
  std::vector<double> trace;
};

struct InitOptions {
  int restarts = 5;
  int max_sweeps = 100;
  double hard_weight = 0.8;
};

/// Classification EM: rows to their best group given column labels and block
/// means, then columns, then means p = (links + 1) / (dyads + 2). The winner
/// over `restarts` seeded starts maximises
/// sum over blocks of (L+1) log p + (n-L+1) log(1-p), which never decreases
/// across half-steps. Holdout dyads are ignored. Throws ValidationError if
/// k exceeds the node count.
InitAssignment init_coclustering(const BipartiteNetwork& net, std::size_t k1, std::size_t k2, std::uint64_t seed,
                                 const InitOptions& opts = {});

/// Block objective for given labels (exposed for tests).
double coclustering_objective(const BipartiteNetwork& net, const std::vector<std::uint32_t>& labels1,
                              const std::vector<std::uint32_t>& labels2, std::size_t k1, std::size_t k2);

/// Soft relaxation of hard labels: `hard_weight` on the label, the rest
/// spread evenly (all mass on the label when k = 1).
Matrix soften_labels(const std::vector<std::uint32_t>& labels, std::size_t k, double hard_weight);

/// phi_pq,gh proportional to row_mix[p][g] col_mix[q][h] and counts from those
/// tables. In sparse mode no tables are kept and the counts are
/// n_p * row_mix[p], which is what the tables would sum to.
VariationalState seed_variational_state(const InitAssignment& init, const BipartiteNetwork& net, bool dense,
                                        std::size_t memory_cap = PhiTable::kDefaultMemoryCap);

/// B = logit(block_probs), beta intercepts = log of the mean soft membership,
/// remaining coefficients and gamma zero.
ModelParams initial_params(const InitAssignment& init, const BipartiteNetwork& net);

}  // namespace bimmsbm
