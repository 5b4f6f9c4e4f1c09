#pragma once
// Draws networks from the generative process and the calibration scenarios.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>

#include "bimmsbm/estep.hpp"
#include "bimmsbm/rng.hpp"

namespace bimmsbm {

struct ScenarioSpec {
  std::string name;  // easy | medium | hard
  std::string size;  // small | large
  std::size_t n1 = 0, n2 = 0;
  Matrix blockmodel_probs;  // K x K, probability scale
  Matrix monadic_coefs;     // rows (intercept, slope), columns groups; both families
  double monadic_sd = 1.5;
  double dyadic_sd = 1.0;

  /// B = logit(probs), beta = monadic_coefs^T for both families, gamma = 0.
  ModelParams params() const;
};

/// Throws ValidationError on an unknown name or size.
ScenarioSpec scenario(const std::string& name, const std::string& size);

struct SimulationTruth {
  ModelParams params;
  Matrix pi, psi;  // drawn mixed memberships
  LatentAssignments zu;
};

struct SimulatedNetwork {
  BipartiteNetwork net;
  SimulationTruth truth;
};

/// Dirichlet draw that stays accurate for concentrations far below 1
/// (gamma variates are formed in log space).
Vector sample_dirichlet(std::span<const double> alpha, Rng& rng);

/// One draw of memberships, latent groups and edges for the given
/// covariates. `pi`/`psi` are drawn from the concentrations unless supplied.
SimulatedNetwork simulate_with_covariates(const ModelParams& params, const NetworkData& covariates,
                                          std::uint64_t seed, const Matrix* pi = nullptr,
                                          const Matrix* psi = nullptr);

/// Scenario network: one monadic predictor per family plus intercept and one
/// dyadic predictor, drawn from the scenario's normals.
SimulatedNetwork simulate_network(const ScenarioSpec& spec, std::uint64_t seed);

/// Network of the given size from explicit parameters; non-intercept
/// covariates are drawn N(0, monadic_sd) and N(0, dyadic_sd).
SimulatedNetwork simulate_network(const ModelParams& params, std::size_t n1, std::size_t n2, std::uint64_t seed,
                                  double monadic_sd = 1.5, double dyadic_sd = 1.0);

nlohmann::json truth_to_json(const SimulationTruth& truth, const std::string& scenario_name = "");
SimulationTruth truth_from_json(const nlohmann::json& j);

}  // namespace bimmsbm
