#pragma once
// Variational state and the closed-form update of the per-dyad joint
// membership tables phi_pq (K1 x K2, row-major: cell g * K2 + h).

#include <cstdint>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bimmsbm/bigraph.hpp"
#include "bimmsbm/model.hpp"

namespace bimmsbm {

/// Storage for phi tables. Dense mode holds a slot for every dyad (batch
/// EM); sparse mode holds only the dyads inserted since the last clear()
/// (the current subsample in stochastic mode).
class PhiTable {
 public:
  static constexpr std::size_t kDefaultMemoryCap = 100'000'000;

  PhiTable() = default;
  /// Throws ValidationError when N1*N2*K1*K2 exceeds `memory_cap` entries.
  static PhiTable dense(std::size_t n1, std::size_t n2, std::size_t k1, std::size_t k2,
                        std::size_t memory_cap = kDefaultMemoryCap);
  static PhiTable sparse(std::size_t n1, std::size_t n2, std::size_t k1, std::size_t k2);

  bool is_dense() const { return dense_; }
  std::size_t k1() const { return k1_; }
  std::size_t k2() const { return k2_; }
  std::size_t cells() const { return k1_ * k2_; }

  bool contains(Dyad d) const;
  /// Throws std::out_of_range if absent.
  std::span<const double> get(Dyad d) const;
  /// Slot for `d`, created (and marked present) if needed.
  std::span<double> slot(Dyad d);
  void clear();
  std::size_t size() const;

 private:
  std::uint64_t key(Dyad d) const { return std::uint64_t{d.p} * n2_ + d.q; }

  bool dense_ = false;
  std::size_t n1_ = 0, n2_ = 0, k1_ = 0, k2_ = 0;
  std::vector<double> values_;
  std::vector<std::uint8_t> present_;             // dense
  std::unordered_map<std::uint64_t, std::size_t> index_;  // sparse: key -> slot offset
};

struct VariationalState {
  std::size_t k1 = 0, k2 = 0;
  PhiTable phi;
  Matrix c1;  // N1 x K1 expected counts C_pg
  Matrix c2;  // N2 x K2 expected counts C_qh

  static VariationalState make(std::size_t n1, std::size_t n2, std::size_t k1, std::size_t k2, bool dense,
                               std::size_t memory_cap = PhiTable::kDefaultMemoryCap);
};

/// Hard assignments, 0-based groups, indexed p * N2 + q.
struct LatentAssignments {
  std::size_t n1 = 0, n2 = 0;
  std::vector<std::uint32_t> z, u;
  std::uint32_t z_at(std::uint32_t p, std::uint32_t q) const { return z[std::size_t{p} * n2 + q]; }
  std::uint32_t u_at(std::uint32_t p, std::uint32_t q) const { return u[std::size_t{p} * n2 + q]; }
};

/// Row (g) and column (h) marginals of a joint table.
void phi_marginals(std::span<const double> phi, std::size_t k1, std::size_t k2, std::span<double> row,
                   std::span<double> col);

/// C'_p. and C'_.q: the stored counts minus the dyad's own marginals when its
/// table is present, floored at zero.
std::pair<Vector, Vector> marginal_counts_excluding(const VariationalState& state, Dyad d);

/// phi_pq,gh proportional to (a_pg + C'_pg)(a_qh + C'_qh) theta^y (1-theta)^(1-y),
/// normalised in log space. Writes into `out` (K1*K2). Throws NumericalError
/// if every cell underflows.
void update_phi(const BipartiteNetwork& net, const ModelParams& params, const DirichletConcentrations& conc,
                const VariationalState& state, Dyad d, std::span<double> out);
std::vector<double> update_phi(const BipartiteNetwork& net, const ModelParams& params,
                               const DirichletConcentrations& conc, const VariationalState& state, Dyad d);

/// The part of the lower bound that moves with phi_pq alone, with the count
/// factors linearised at C': sum phi (log(a+C'_p) + log(a+C'_q) + loglik) - sum phi log phi.
/// update_phi is its exact maximiser over the simplex.
double restricted_objective(const BipartiteNetwork& net, const ModelParams& params,
                            const DirichletConcentrations& conc, const VariationalState& state, Dyad d,
                            std::span<const double> phi);

/// n_i x K matrix of the node's per-dyad group marginals over its observed
/// dyads (partner order). Tables absent from `state` are recomputed with
/// update_phi against the current counts.
Matrix incident_marginals(const BipartiteNetwork& net, const ModelParams& params, const DirichletConcentrations& conc,
                          const VariationalState& state, Family family, std::uint32_t node);

/// Zeroes c1/c2 and re-accumulates the marginals of every dyad in `dyads`
/// (in the given order).
void recompute_global_counts(VariationalState& state, std::span<const Dyad> dyads);

struct MixedMemberships {
  Matrix pi_hat;   // N1 x K1
  Matrix psi_hat;  // N2 x K2
};

/// (C_pg + a_pg) / (sum_g C_pg + xi_p); the denominator uses the row's own
/// count total, which equals N2 in batch mode without holdout.
MixedMemberships posterior_mixed_memberships(const DirichletConcentrations& conc, const VariationalState& state);

/// log f(Y, Z, U | B, beta, gamma) with the mixed memberships integrated out
/// (Dirichlet-multinomial count terms). Holdout dyads are skipped.
double collapsed_log_joint(const BipartiteNetwork& net, const ModelParams& params, const LatentAssignments& zu);

}  // namespace bimmsbm
