#pragma once
// Stochastic variational EM: focal-node subsampling, weighted intermediate
// counts, online count averaging and the Robbins-Monro schedules. Batch mode
// runs full sweeps with line-searched M-steps instead.

#include <cstdint>
#include <optional>
#include <vector>

#include "bimmsbm/init.hpp"
#include "bimmsbm/mstep.hpp"
#include "bimmsbm/rng.hpp"
#include "bimmsbm/uncertainty.hpp"

namespace bimmsbm {

struct FitConfig {
  std::size_t k1 = 2, k2 = 2;
  double tau = 1.0;
  double kappa = 0.75;
  std::size_t m_sets = 10;
  std::size_t max_iter = 20000;
  double conv_tol = 1e-6;
  std::size_t elbo_window = 20;
  std::uint64_t seed = 0;
  bool batch_mode = false;
  std::size_t se_samples = 100;
  bool compute_se = false;
  double learn_rate = 0.1;
  int init_restarts = 5;
  std::size_t memory_cap = PhiTable::kDefaultMemoryCap;
  std::size_t threads = 1;
  BatchMstepOptions mstep;

  /// Throws ValidationError when tau <= 0, kappa outside (0.5, 1], M < 1 or
  /// another field is out of range.
  void validate() const;
};

/// rho_t = (tau + t)^(-kappa).
double step_size(std::size_t t, double tau, double kappa);

/// Per-node quantities of the sampling scheme, fixed for a network and M.
/// Nodes are indexed family1 first (0..N1-1), then family2 (N1..N1+N2-1).
struct SamplingDesign {
  std::size_t m_sets = 10;
  std::vector<std::size_t> links, nonlinks, set_size;  // set_size = ceil(nonlinks / M)
  double nonempty_prob = 0.0;  // P(a draw yields a non-empty set)

  static SamplingDesign make(const BipartiteNetwork& net, std::size_t m_sets);
  std::size_t node_count() const { return links.size(); }
  /// Expected multiplicity of the dyad in one non-empty subsample.
  double expected_count(const BipartiteNetwork& net, Dyad d) const;
  /// Inverse-inclusion weight of the focal node's counts for the given set.
  double focal_weight(std::size_t node, bool link_set) const;
};

struct Subnetwork {
  std::size_t focal_node = 0;  // design index (family1 first)
  Family focal_family = Family::one;
  std::uint32_t focal = 0;  // index within its family
  std::vector<Dyad> dyads;           // distinct dyads
  std::vector<double> multiplicity;  // draws per dyad (non-link sets sample with replacement)
  bool is_link_set = false;
  double weight1 = 1.0;  // N2 / |V2^t|
  double weight2 = 1.0;  // N1 / |V1^t|
  double focal_weight = 1.0;

  bool empty() const { return dyads.empty(); }
};

/// Focal node uniform over both families; the link set with probability
/// 1/(M+1), otherwise ceil(non-links/M) non-links drawn with replacement.
/// Holdout dyads are never drawn. May return an empty set.
Subnetwork sample_subnetwork(const BipartiteNetwork& net, const SamplingDesign& design, Rng& rng);
/// Same, for a given focal node.
Subnetwork sample_subnetwork_for(const BipartiteNetwork& net, const SamplingDesign& design, std::size_t node,
                                 Rng& rng);

enum class CountWeighting {
  inclusion,  // focal node by inverse inclusion probability
  plain,      // N_other / |V^t| on both sides
};

/// Rows of C-hat for the nodes touched by the subnetwork.
struct IntermediateCounts {
  std::vector<std::uint32_t> nodes1, nodes2;
  Matrix rows1, rows2;  // one row per listed node
};

/// Requires phi for every dyad in `subnet`. The focal node's row estimates
/// its full count row; partner rows are N_other-scaled single-dyad marginals.
IntermediateCounts intermediate_counts(const BipartiteNetwork& net, const Subnetwork& subnet,
                                       const VariationalState& state, const SamplingDesign& design,
                                       CountWeighting weighting = CountWeighting::inclusion);

/// (1 - rho) c_prev + rho c_hat. Throws ValidationError if rho is not in (0, 1].
Matrix online_count_update(const Matrix& c_prev, const Matrix& c_hat, std::size_t t, double tau, double kappa);

struct FitResult {
  ModelParams params;
  PriorSpec priors;
  Matrix pi_hat, psi_hat;
  Matrix c1, c2;
  std::vector<double> elbo_trace;
  std::optional<SEResult> se;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Runs init_coclustering unless `init_params` is given. Throws
/// DivergenceError with the iteration index on a non-finite bound.
FitResult fit(const BipartiteNetwork& net, const FitConfig& config, const PriorSpec& priors,
              const std::optional<ModelParams>& init_params = std::nullopt);

/// Full-sweep E-step: every table updated against frozen counts, then the
/// move is kept only if it does not lower the bound, backing off along the
/// segment to the old tables (counts are linear in phi) when it does.
/// Returns the accepted fraction of the move (0 if none).
double batch_estep(const BipartiteNetwork& net, const ModelParams& params, const PriorSpec& priors,
                   const DirichletConcentrations& conc, VariationalState& state, const DyadSelection& sel,
                   std::size_t threads = 1);

}  // namespace bimmsbm
