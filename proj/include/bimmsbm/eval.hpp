#pragma once
// Link prediction, label alignment, membership recovery and
// posterior-predictive goodness of fit.

#include <cstdint>
#include <string>
#include <vector>

#include "bimmsbm/svi.hpp"

namespace bimmsbm {

/// What prediction and replication need from a fit.
struct FittedModel {
  ModelParams params;
  Matrix pi_hat, psi_hat;

  static FittedModel from(const FitResult& r) { return {r.params, r.pi_hat, r.psi_hat}; }
};

/// Mann-Whitney form, ties counted 1/2. Throws ValidationError unless both
/// classes are present and the lengths agree.
double auroc(std::span<const double> scores, std::span<const int> labels);

/// sum_gh pi_pg psi_qh logistic(B_gh + d . gamma).
double predict_score(const FittedModel& model, std::uint32_t p, std::uint32_t q, std::span<const double> d);
/// Scores using the network's dyadic covariates. Throws ValidationError for
/// nodes outside the fitted model.
std::vector<double> predict_edges(const BipartiteNetwork& net, const FittedModel& model, std::span<const Dyad> dyads);

struct ColumnAlignment {
  std::vector<std::size_t> perm;  // perm[k] = estimated column matched to true column k
  double cost = 0.0;              // sum of (1 - correlation) over matched columns
};

struct Alignment {
  std::vector<std::size_t> perm1, perm2;
  double cost = 0.0;
};

/// Pearson correlation; NaN if either side has zero variance.
double pearson(std::span<const double> a, std::span<const double> b);

/// Exhaustive search over permutations (K <= 8). Zero-variance pairs cost 1.
ColumnAlignment align_columns(const Matrix& true_mix, const Matrix& est_mix);
Alignment align_labels(const Matrix& true1, const Matrix& est1, const Matrix& true2, const Matrix& est2);

struct Recovery {
  double mean_correlation = 0.0;
  std::vector<double> correlations;  // per true column after alignment (NaN if excluded)
  std::size_t excluded = 0;          // zero-variance columns
};
Recovery membership_recovery(const Matrix& true_mix, const Matrix& est_mix);

/// Frequency table of one statistic on the observed network and replicates.
struct DistributionTable {
  std::string statistic, family;
  std::vector<std::string> bins;
  std::vector<double> observed;
  Matrix replicates;  // replicate x bin

  /// Share of occupied bins (observed or any replicate non-zero) whose
  /// observed value lies in the central `level` band of the replicates.
  double coverage(double level = 0.9) const;
};

struct GofReport {
  DistributionTable degree1, degree2;
  DistributionTable shared1, shared2;
  DistributionTable geodesics;
  std::size_t replicate_count = 0;
};

// Raw statistics (exposed for tests).
std::vector<std::size_t> degrees(const BipartiteNetwork& net, Family family);
/// Shared-partner count of every unordered same-family pair.
std::vector<std::int64_t> shared_partner_counts(const BipartiteNetwork& net, Family family);
/// BFS distance between every unordered node pair of the bipartite graph
/// (family1 nodes first); -1 when unreachable.
std::vector<int> geodesic_distances(const BipartiteNetwork& net);

/// Replicates use the observed covariates, the fitted memberships and
/// coefficients; replicate r draws from substream ("gof", r) of `seed`.
GofReport gof(const BipartiteNetwork& net, const FittedModel& model, std::size_t replicates, std::uint64_t seed,
              std::size_t threads = 1);

struct SelectKCell {
  std::size_t k1 = 0, k2 = 0;
  double auroc = 0.0;  // NaN when the fit failed
  std::string error;
};

struct SelectKResult {
  std::vector<SelectKCell> cells;
  std::size_t best_k1 = 0, best_k2 = 0;
};

/// Fits every (k1, k2) on training dyads and scores the holdout; an existing
/// holdout mask is used as is, otherwise `holdout_fraction` is split off.
/// Best = highest AUROC, ties to smaller k1 + k2 then smaller k1.
SelectKResult select_k(const BipartiteNetwork& net, const std::vector<std::size_t>& k1_range,
                       const std::vector<std::size_t>& k2_range, const FitConfig& config, const PriorSpec* priors,
                       double holdout_fraction = 0.2);

// CSV renderings.
std::string memberships_csv(const std::vector<std::string>& ids, const Matrix& mix);
std::string distribution_csv(const std::vector<const DistributionTable*>& tables);
std::string grid_csv(const SelectKResult& r);

}  // namespace bimmsbm
