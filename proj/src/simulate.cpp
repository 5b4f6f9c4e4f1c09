#include "bimmsbm/simulate.hpp"

#include <cmath>
#include <random>

namespace bimmsbm {

namespace {

using Idx = Eigen::Index;

std::uint32_t draw_categorical(std::span<const double> probs, Rng& rng) {
  const double u = uniform01(rng);
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    acc += probs[i];
    if (u < acc) return static_cast<std::uint32_t>(i);
  }
  return static_cast<std::uint32_t>(probs.size() - 1);
}

std::vector<std::string> make_ids(const char* prefix, std::size_t n) {
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = prefix + std::to_string(i + 1);
  return ids;
}

NetworkData random_covariates(std::size_t n1, std::size_t n2, std::size_t j1, std::size_t j2, std::size_t jd,
                              double monadic_sd, double dyadic_sd, std::uint64_t seed) {
  NetworkData data;
  data.ids1 = make_ids("s", n1);
  data.ids2 = make_ids("b", n2);
  auto rng = make_rng(seed, "sim-covariates");
  std::normal_distribution<double> mono(0.0, monadic_sd), dyad(0.0, dyadic_sd);
  data.x = Matrix::Ones(static_cast<Idx>(n1), static_cast<Idx>(j1));
  data.w = Matrix::Ones(static_cast<Idx>(n2), static_cast<Idx>(j2));
  for (Idx r = 0; r < data.x.rows(); ++r)
    for (Idx c = 1; c < data.x.cols(); ++c) data.x(r, c) = mono(rng);
  for (Idx r = 0; r < data.w.rows(); ++r)
    for (Idx c = 1; c < data.w.cols(); ++c) data.w(r, c) = mono(rng);
  data.d = DyadicCovariates(n1, n2, jd);
  for (std::uint32_t p = 0; p < n1; ++p)
    for (std::uint32_t q = 0; q < n2; ++q)
      for (auto& v : data.d.at(p, q)) v = dyad(rng);
  for (std::size_t c = 1; c < j1; ++c) data.x_names.push_back("x" + std::to_string(c));
  for (std::size_t c = 1; c < j2; ++c) data.w_names.push_back("w" + std::to_string(c));
  for (std::size_t c = 0; c < jd; ++c) data.d_names.push_back("d" + std::to_string(c + 1));
  return data;
}

Matrix draw_memberships(const Matrix& alpha, Rng& rng) {
  Matrix out(alpha.rows(), alpha.cols());
  for (Idx r = 0; r < alpha.rows(); ++r) out.row(r) = sample_dirichlet(row_span(alpha, r), rng).transpose();
  return out;
}

Matrix concentrations(const Matrix& design, const Matrix& beta) {
  Matrix a = (design * beta.transpose()).array().exp().matrix();
  if (!a.allFinite() || !(a.array() > 0).all())
    throw NumericalError("non-finite Dirichlet concentration in simulation");
  return a;
}

}  // namespace

ModelParams ScenarioSpec::params() const {
  const auto k = static_cast<std::size_t>(blockmodel_probs.rows());
  auto p = ModelParams::zeros(k, k, 2, 2, 1);
  p.b = blockmodel_probs.unaryExpr([](double v) { return logit(clamp_prob(v)); });
  p.beta1 = monadic_coefs.transpose();
  p.beta2 = monadic_coefs.transpose();
  return p;
}

ScenarioSpec scenario(const std::string& name, const std::string& size) {
  ScenarioSpec s;
  s.name = name;
  s.size = size;
  if (size == "small") {
    s.n1 = 100;
    s.n2 = 200;
  } else if (size == "large") {
    s.n1 = 1000;
    s.n2 = 2000;
  } else {
    throw ValidationError("unknown scenario size '" + size + "' (expected small or large)");
  }
  s.blockmodel_probs.resize(2, 2);
  s.monadic_coefs.resize(2, 2);
  if (name == "easy") {
    s.blockmodel_probs << 0.85, 0.01, 0.01, 0.99;
    s.monadic_coefs << -4.50, -4.50, 0.00, 0.00;
  } else if (name == "medium") {
    s.blockmodel_probs << 0.65, 0.35, 0.20, 0.75;
    s.monadic_coefs << 0.05, 0.75, -0.75, -1.00;
  } else if (name == "hard") {
    s.blockmodel_probs << 0.65, 0.40, 0.50, 0.45;
    s.monadic_coefs << 0.00, 0.00, -0.75, -1.00;
  } else {
    throw ValidationError("unknown scenario '" + name + "' (expected easy, medium or hard)");
  }
  return s;
}

Vector sample_dirichlet(std::span<const double> alpha, Rng& rng) {
  // log G with G ~ Gamma(a): log Gamma(a + 1) + log(U) / a
  Vector lg(static_cast<Idx>(alpha.size()));
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    std::gamma_distribution<double> gd(alpha[i] + 1.0, 1.0);
    const double g = gd(rng);
    double u = uniform01(rng);
    if (u <= 0.0) u = 0x1.0p-53;
    lg(static_cast<Idx>(i)) = std::log(g) + std::log(u) / alpha[i];
  }
  const double m = lg.maxCoeff();
  Vector out = (lg.array() - m).exp().matrix();
  return out / out.sum();
}

SimulatedNetwork simulate_with_covariates(const ModelParams& params, const NetworkData& covariates,
                                          std::uint64_t seed, const Matrix* pi, const Matrix* psi) {
  const auto n1 = covariates.ids1.size(), n2 = covariates.ids2.size();
  SimulationTruth truth;
  truth.params = params;
  if (pi) {
    truth.pi = *pi;
  } else {
    auto rng = make_rng(seed, "sim-memberships", 1);
    truth.pi = draw_memberships(concentrations(covariates.x, params.beta1), rng);
  }
  if (psi) {
    truth.psi = *psi;
  } else {
    auto rng = make_rng(seed, "sim-memberships", 2);
    truth.psi = draw_memberships(concentrations(covariates.w, params.beta2), rng);
  }
  truth.zu.n1 = n1;
  truth.zu.n2 = n2;
  truth.zu.z.resize(n1 * n2);
  truth.zu.u.resize(n1 * n2);

  NetworkData data = covariates;
  data.edges.clear();
  for (std::uint32_t p = 0; p < n1; ++p) {
    auto rng = make_rng(seed, "sim-dyads", p);
    for (std::uint32_t q = 0; q < n2; ++q) {
      const auto g = draw_categorical(row_span(truth.pi, p), rng);
      const auto h = draw_categorical(row_span(truth.psi, q), rng);
      truth.zu.z[std::size_t{p} * n2 + q] = g;
      truth.zu.u[std::size_t{p} * n2 + q] = h;
      const double theta = edge_probability(params, g, h, covariates.d.at(p, q));
      if (uniform01(rng) < theta) data.edges.push_back({p, q});
    }
  }
  return {BipartiteNetwork(std::move(data)), std::move(truth)};
}

SimulatedNetwork simulate_network(const ScenarioSpec& spec, std::uint64_t seed) {
  const auto params = spec.params();
  const auto cov = random_covariates(spec.n1, spec.n2, 2, 2, 1, spec.monadic_sd, spec.dyadic_sd, seed);
  return simulate_with_covariates(params, cov, seed);
}

SimulatedNetwork simulate_network(const ModelParams& params, std::size_t n1, std::size_t n2, std::uint64_t seed,
                                  double monadic_sd, double dyadic_sd) {
  params.validate();
  if (n1 == 0 || n2 == 0) throw ValidationError("node counts must be positive");
  const auto cov = random_covariates(n1, n2, static_cast<std::size_t>(params.beta1.cols()),
                                     static_cast<std::size_t>(params.beta2.cols()),
                                     static_cast<std::size_t>(params.gamma.size()), monadic_sd, dyadic_sd, seed);
  return simulate_with_covariates(params, cov, seed);
}

nlohmann::json truth_to_json(const SimulationTruth& truth, const std::string& scenario_name) {
  nlohmann::json j;
  if (!scenario_name.empty()) j["scenario"] = scenario_name;
  auto params = to_json(truth.params, PriorSpec::defaults(truth.params.k1, truth.params.k2));
  params.erase("priors");
  j["params"] = std::move(params);
  j["pi"] = matrix_to_json(truth.pi);
  j["psi"] = matrix_to_json(truth.psi);
  auto grid = [&](const std::vector<std::uint32_t>& v) {
    auto rows = nlohmann::json::array();
    for (std::size_t p = 0; p < truth.zu.n1; ++p)
      rows.push_back(std::vector<std::uint32_t>(v.begin() + static_cast<std::ptrdiff_t>(p * truth.zu.n2),
                                                v.begin() + static_cast<std::ptrdiff_t>((p + 1) * truth.zu.n2)));
    return rows;
  };
  j["z"] = grid(truth.zu.z);
  j["u"] = grid(truth.zu.u);
  return j;
}

SimulationTruth truth_from_json(const nlohmann::json& j) {
  try {
    SimulationTruth t;
    t.params = params_from_json(j.at("params"));
    t.pi = matrix_from_json(j.at("pi"));
    t.psi = matrix_from_json(j.at("psi"));
    const auto& z = j.at("z");
    t.zu.n1 = z.size();
    t.zu.n2 = t.zu.n1 ? z[0].size() : 0;
    for (const auto& row : z)
      for (const auto& v : row) t.zu.z.push_back(v.get<std::uint32_t>());
    for (const auto& row : j.at("u"))
      for (const auto& v : row) t.zu.u.push_back(v.get<std::uint32_t>());
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed truth JSON: ") + e.what());
  }
}

}  // namespace bimmsbm
