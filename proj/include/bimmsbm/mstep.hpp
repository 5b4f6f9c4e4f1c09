#pragma once
// Lower bound evaluation, analytic gradients and the hyperparameter updates.

#include <functional>
#include <vector>

#include "bimmsbm/estep.hpp"

namespace bimmsbm {

/// Dyads entering the dyad-level sums, with optional weights (empty = 1).
struct DyadSelection {
  std::vector<Dyad> dyads;
  std::vector<double> weights;

  static DyadSelection all_observed(const BipartiteNetwork& net);
  double weight(std::size_t i) const { return weights.empty() ? 1.0 : weights[i]; }
  double total_weight() const;
};

struct ElboBreakdown {
  double total = 0.0;
  double likelihood_term = 0.0;
  double dirichlet_term1 = 0.0;
  double dirichlet_term2 = 0.0;
  double prior_term = 0.0;
  double entropy_term = 0.0;
};

struct GradientSet {
  Matrix grad_b;
  Vector grad_gamma;
  Matrix grad_beta1;
  Matrix grad_beta2;
};

// Components, exposed so that block line searches only touch what moves.
double likelihood_term(const BipartiteNetwork& net, const ModelParams& params, const VariationalState& state,
                       const DyadSelection& sel);
/// Sum over the family's nodes of the Dirichlet-multinomial count terms at
/// the expected counts; n_p is the node's observed-dyad count.
double dirichlet_term(const BipartiteNetwork& net, const DirichletConcentrations& conc, const VariationalState& state,
                      Family family);
/// Gaussian log-penalty without normalising constants (0 at the prior mean).
double prior_term(const ModelParams& params, const PriorSpec& priors);
double prior_term_bg(const ModelParams& params, const PriorSpec& priors);
double prior_term_beta(const ModelParams& params, const PriorSpec& priors, Family family);
double entropy_term(const VariationalState& state, const DyadSelection& sel);

/// Throws NumericalError if a component is not finite.
ElboBreakdown elbo(const BipartiteNetwork& net, const ModelParams& params, const PriorSpec& priors,
                   const DirichletConcentrations& conc, const VariationalState& state, const DyadSelection& sel);

Matrix grad_b(const BipartiteNetwork& net, const ModelParams& params, const PriorSpec& priors,
              const VariationalState& state, const DyadSelection& sel);
Vector grad_gamma(const BipartiteNetwork& net, const ModelParams& params, const PriorSpec& priors,
                  const VariationalState& state, const DyadSelection& sel);
/// How E[psi(a + C)] is evaluated in the beta gradient.
enum class CountExpectation {
  zeroth_order,  // psi(a + E[C]); the exact derivative of dirichlet_term
  exact,         // sum over the Poisson-binomial pmf of C (needs every phi)
};

/// Derivative of dirichlet_term + the beta penalty, given the counts.
Matrix grad_beta(const BipartiteNetwork& net, const ModelParams& params, const PriorSpec& priors,
                 const DirichletConcentrations& conc, const VariationalState& state, Family family,
                 CountExpectation mode = CountExpectation::zeroth_order);

/// pmf of a sum of independent Bernoulli(p_i), by dynamic programming.
std::vector<double> poisson_binomial_pmf(std::span<const double> probs);
GradientSet gradients(const BipartiteNetwork& net, const ModelParams& params, const PriorSpec& priors,
                      const DirichletConcentrations& conc, const VariationalState& state, const DyadSelection& sel);

/// lambda + step * gradient for every block. Throws NumericalError on a
/// non-finite result and std::invalid_argument if step <= 0.
ModelParams mstep_update(const ModelParams& params, const GradientSet& grads, double step);

// Generic ascent machinery.

struct LineSearchResult {
  bool accepted = false;
  double step = 0.0;
  double value = 0.0;
};

/// Tries f(step0), f(step0/2), ... (at most `max_halvings` halvings) and
/// accepts the first value > f0, else the first value equal to f0.
LineSearchResult backtracking_line_search(const std::function<double(double)>& f_at_step, double f0, double step0,
                                          int max_halvings = 20);

struct AscentOptions {
  int max_steps = 200;
  int max_halvings = 20;
  double grad_tol = 0.0;  // stop once max |grad| is below this
  double scale = 1.0;     // search direction = scale * grad
};

struct AscentResult {
  Vector x;
  double value = 0.0;
  double step = 0.0;  // last accepted step
  int steps = 0;
  bool converged = false;
};

/// Backtracking gradient ascent. Each accepted step doubles the next trial
/// step; stops at max_steps, on a failed line search, or at grad_tol.
AscentResult gradient_ascent(const std::function<double(const Vector&)>& f,
                             const std::function<Vector(const Vector&)>& grad, Vector x0, double step0,
                             const AscentOptions& opts);

/// Initial trial steps carried across EM iterations, one per block.
struct StepMemory {
  double bg = 1.0;
  double beta1 = 1.0;
  double beta2 = 1.0;
};

struct BatchMstepOptions {
  int inner_steps = 5;
  int max_halvings = 20;
};

/// Line-searched ascent on {B, gamma}, beta1 and beta2 in turn. The lower
/// bound is separable across the three blocks given (phi, C), so each block
/// search is monotone for the full bound. Returns the updated concentrations.
DirichletConcentrations batch_mstep(const BipartiteNetwork& net, ModelParams& params, const PriorSpec& priors,
                                    const VariationalState& state, const DyadSelection& sel, StepMemory& memory,
                                    const BatchMstepOptions& opts = {});

// Flattening helpers for block searches.
Vector pack_bg(const ModelParams& params);
void unpack_bg(const Vector& v, ModelParams& params);

}  // namespace bimmsbm
