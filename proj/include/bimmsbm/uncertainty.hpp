#pragma once
// Curvature-based standard errors for gamma, beta1 and beta2.

#include <cstdint>
#include <optional>
#include <vector>

#include "bimmsbm/estep.hpp"
#include "bimmsbm/rng.hpp"

namespace bimmsbm {

/// Weight on d d^T in the gamma Hessian.
enum class HessianWeight {
  exact,      // E_phi[theta (1 - theta)], the derivative of grad_gamma
  theta_bar,  // tb (1 - tb), tb = logistic(E_phi[B] + d . gamma)
};

struct SEResult {
  Vector se_gamma;
  Matrix se_beta1;  // K1 x J1
  Matrix se_beta2;  // K2 x J2
  Matrix hessian_gamma;
  Matrix hessian_beta1;  // (K1 J1) x (K1 J1), index g * J1 + j
  Matrix hessian_beta2;
  std::vector<double> theta_bar;  // per observed dyad, (p, q) order
  bool gamma_ok = true, beta1_ok = true, beta2_ok = true;
};

/// Tables absent from `state` are recomputed on the fly. If `theta_bar` is
/// given it receives logistic(E_phi[B] + d . gamma) per observed dyad.
Matrix hessian_gamma(const BipartiteNetwork& net, const ModelParams& params, const PriorSpec& priors,
                     const DirichletConcentrations& conc, const VariationalState& state,
                     HessianWeight weight = HessianWeight::exact, std::vector<double>* theta_bar = nullptr);

/// `s` sums of independent Bernoulli(probs[i]) draws.
std::vector<int> sample_poisson_binomial(std::span<const double> probs, std::size_t s, Rng& rng);

/// Same-group blocks average digamma/trigamma terms over `s` Poisson-binomial
/// count draws per node and group; cross-group blocks use
/// trigamma(xi) - trigamma(xi + n). Draws use per-node substreams of `seed`.
Matrix hessian_beta(const BipartiteNetwork& net, const ModelParams& params, const PriorSpec& priors,
                    const DirichletConcentrations& conc, const VariationalState& state, Family family, std::size_t s,
                    std::uint64_t seed);

/// sqrt(diag((-H)^-1)). One diagonal jitter of 1e-8 * ||H|| is tried when
/// -H is not positive definite; nullopt if that fails too.
std::optional<Vector> se_from_hessian(const Matrix& h);

SEResult standard_errors(const BipartiteNetwork& net, const ModelParams& params, const PriorSpec& priors,
                         const DirichletConcentrations& conc, const VariationalState& state, std::size_t s,
                         std::uint64_t seed, HessianWeight weight = HessianWeight::exact);

}  // namespace bimmsbm
