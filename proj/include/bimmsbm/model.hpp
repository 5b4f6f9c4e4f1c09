#pragma once
// Model parameters, Gaussian priors and the dyad-level tie probability.

#include <nlohmann/json.hpp>

#include <cmath>
#include <span>

#include "bimmsbm/bigraph.hpp"
#include "bimmsbm/types.hpp"

namespace bimmsbm {

/// Floor/ceiling applied to every tie probability before taking logs.
inline constexpr double kProbEps = 1e-12;

inline double logistic(double eta) {
  return eta >= 0 ? 1.0 / (1.0 + std::exp(-eta)) : std::exp(eta) / (1.0 + std::exp(eta));
}

inline double clamp_prob(double p) { return p < kProbEps ? kProbEps : (p > 1.0 - kProbEps ? 1.0 - kProbEps : p); }

inline double logit(double p) { return std::log(p / (1.0 - p)); }

struct ModelParams {
  std::size_t k1 = 0, k2 = 0;
  Matrix b;      // K1 x K2, log-odds
  Vector gamma;  // J_d
  Matrix beta1;  // K1 x J1x
  Matrix beta2;  // K2 x J2x

  static ModelParams zeros(std::size_t k1, std::size_t k2, std::size_t j1, std::size_t j2, std::size_t jd);
  /// Throws ValidationError on shape mismatch or non-finite entries.
  void validate() const;
  void check_compatible(const BipartiteNetwork& net) const;
};

/// Gaussian penalties. B carries a per-cell mean and SD; the coefficient
/// blocks share one mean/SD each.
struct PriorSpec {
  Matrix mu_b, sigma_b;  // K1 x K2
  double mu_gamma = 0.0, sigma_gamma = 5.0;
  double mu_beta1 = 0.0, sigma_beta1 = 5.0;
  double mu_beta2 = 0.0, sigma_beta2 = 5.0;

  static PriorSpec defaults(std::size_t k1, std::size_t k2, double sigma_b = 5.0);
  void validate(std::size_t k1, std::size_t k2) const;
};

struct DirichletConcentrations {
  Matrix alpha1;  // N1 x K1, exp(x_p . beta1_g)
  Vector xi1;     // row sums
  Matrix alpha2;  // N2 x K2
  Vector xi2;
};

/// Throws NumericalError when some concentration is not finite and positive.
DirichletConcentrations compute_concentrations(const ModelParams& params, const BipartiteNetwork& net);

/// Clamped logistic(B_gh + d . gamma).
double edge_probability(const ModelParams& params, std::size_t g, std::size_t h, std::span<const double> d);

/// K1 x K2 tie probabilities for one dyad.
struct DyadPrediction {
  Matrix theta;
};
DyadPrediction predict_dyad(const ModelParams& params, std::span<const double> d);

nlohmann::json to_json(const ModelParams& params, const PriorSpec& priors);
ModelParams params_from_json(const nlohmann::json& j);
PriorSpec priors_from_json(const nlohmann::json& j, std::size_t k1, std::size_t k2);

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);
nlohmann::json vector_to_json(const Vector& v);
Vector vector_from_json(const nlohmann::json& j);

}  // namespace bimmsbm
