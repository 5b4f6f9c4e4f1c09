#pragma once
// Seeded random instances shared by the unit and acceptance tests.

#include <cstdint>
#include <random>
#include <vector>

#include "bimmsbm/mstep.hpp"
#include "oracle/oracles.hpp"

namespace testing {

using namespace bimmsbm;

struct Instance {
  BipartiteNetwork net;
  ModelParams params;
  PriorSpec priors;
  VariationalState state;

  DirichletConcentrations conc() const { return compute_concentrations(params, net); }
  DyadSelection sel() const { return DyadSelection::all_observed(net); }
  double elbo_total() const { return elbo(net, params, priors, conc(), state, sel()).total; }
};

struct InstanceShape {
  std::size_t n1_max = 5, n2_max = 7, k_max = 3, j1 = 2, j2 = 2, jd = 2;
  double density = 0.4;
  double holdout = 0.0;
};

inline Instance random_instance(std::uint64_t seed, const InstanceShape& shape = {}) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const auto pick = [&](std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(rng() % (hi - lo + 1));
  };
  const std::size_t n1 = pick(2, shape.n1_max), n2 = pick(2, shape.n2_max);
  const std::size_t k1 = pick(1, shape.k_max), k2 = pick(1, shape.k_max);

  NetworkData data;
  for (std::size_t p = 0; p < n1; ++p) data.ids1.push_back("r" + std::to_string(p));
  for (std::size_t q = 0; q < n2; ++q) data.ids2.push_back("c" + std::to_string(q));
  data.x = Matrix::Ones(static_cast<Eigen::Index>(n1), static_cast<Eigen::Index>(shape.j1));
  data.w = Matrix::Ones(static_cast<Eigen::Index>(n2), static_cast<Eigen::Index>(shape.j2));
  for (Eigen::Index r = 0; r < data.x.rows(); ++r)
    for (Eigen::Index c = 1; c < data.x.cols(); ++c) data.x(r, c) = normal(rng);
  for (Eigen::Index r = 0; r < data.w.rows(); ++r)
    for (Eigen::Index c = 1; c < data.w.cols(); ++c) data.w(r, c) = normal(rng);
  data.d = DyadicCovariates(n1, n2, shape.jd);
  for (std::uint32_t p = 0; p < n1; ++p)
    for (std::uint32_t q = 0; q < n2; ++q) {
      for (auto& v : data.d.at(p, q)) v = normal(rng);
      if (unif(rng) < shape.density) data.edges.push_back({p, q});
    }
  Instance inst;
  inst.net = BipartiteNetwork(std::move(data));
  if (shape.holdout > 0.0) {
    std::vector<std::uint8_t> mask(n1 * n2, 0);
    for (auto& m : mask) m = unif(rng) < shape.holdout ? 1 : 0;
    mask[0] = 0;
    inst.net = inst.net.with_holdout(mask);
  }

  auto& pm = inst.params;
  pm = ModelParams::zeros(k1, k2, shape.j1, shape.j2, shape.jd);
  for (Eigen::Index i = 0; i < pm.b.size(); ++i) pm.b.data()[i] = normal(rng);
  for (Eigen::Index i = 0; i < pm.gamma.size(); ++i) pm.gamma(i) = 0.5 * normal(rng);
  for (Eigen::Index i = 0; i < pm.beta1.size(); ++i) pm.beta1.data()[i] = 0.4 * normal(rng);
  for (Eigen::Index i = 0; i < pm.beta2.size(); ++i) pm.beta2.data()[i] = 0.4 * normal(rng);

  auto& pr = inst.priors;
  pr = PriorSpec::defaults(k1, k2);
  for (Eigen::Index i = 0; i < pr.mu_b.size(); ++i) {
    pr.mu_b.data()[i] = 0.3 * normal(rng);
    pr.sigma_b.data()[i] = 1.0 + 2.0 * unif(rng);
  }
  pr.mu_gamma = 0.2 * normal(rng);
  pr.sigma_gamma = 1.0 + 2.0 * unif(rng);
  pr.mu_beta1 = 0.2 * normal(rng);
  pr.sigma_beta1 = 1.0 + 2.0 * unif(rng);
  pr.mu_beta2 = 0.2 * normal(rng);
  pr.sigma_beta2 = 1.0 + 2.0 * unif(rng);

  inst.state = VariationalState::make(n1, n2, k1, k2, true);
  std::exponential_distribution<double> ex(1.0);
  const auto dyads = inst.net.observed_dyads();
  for (const auto& d : dyads) {
    auto slot = inst.state.phi.slot(d);
    double tot = 0;
    for (auto& v : slot) tot += v = ex(rng) + 1e-3;
    for (auto& v : slot) v /= tot;
  }
  recompute_global_counts(inst.state, dyads);
  return inst;
}

/// Copies the instance into raw arrays for the oracles.
inline oracle::Problem to_problem(const Instance& inst) {
  const auto& net = inst.net;
  oracle::Problem pr;
  pr.n1 = net.n1();
  pr.n2 = net.n2();
  pr.k1 = inst.params.k1;
  pr.k2 = inst.params.k2;
  pr.j1 = net.j1();
  pr.j2 = net.j2();
  pr.jd = net.jd();
  pr.y.resize(pr.n1 * pr.n2);
  pr.d.resize(pr.n1 * pr.n2 * pr.jd);
  pr.phi.assign(pr.n1 * pr.n2 * pr.k1 * pr.k2, 0.0);
  if (net.has_holdout()) pr.mask = net.holdout_mask();
  for (std::uint32_t p = 0; p < pr.n1; ++p)
    for (std::uint32_t q = 0; q < pr.n2; ++q) {
      pr.y[p * pr.n2 + q] = net.y(p, q);
      const auto d = net.d(p, q);
      for (std::size_t j = 0; j < pr.jd; ++j) pr.d[(p * pr.n2 + q) * pr.jd + j] = d[j];
      if (inst.state.phi.contains({p, q})) {
        const auto f = inst.state.phi.get({p, q});
        for (std::size_t c = 0; c < f.size(); ++c) pr.phi[(p * pr.n2 + q) * pr.k1 * pr.k2 + c] = f[c];
      }
    }
  for (Eigen::Index r = 0; r < net.x().rows(); ++r)
    for (Eigen::Index c = 0; c < net.x().cols(); ++c) pr.x.push_back(net.x()(r, c));
  for (Eigen::Index r = 0; r < net.w().rows(); ++r)
    for (Eigen::Index c = 0; c < net.w().cols(); ++c) pr.w.push_back(net.w()(r, c));
  const auto flat = [](const auto& m) { return std::vector<double>(m.data(), m.data() + m.size()); };
  pr.b = flat(inst.params.b);
  pr.gamma = flat(inst.params.gamma);
  pr.beta1 = flat(inst.params.beta1);
  pr.beta2 = flat(inst.params.beta2);
  pr.mu_b = flat(inst.priors.mu_b);
  pr.sigma_b = flat(inst.priors.sigma_b);
  pr.mu_gamma = inst.priors.mu_gamma;
  pr.sigma_gamma = inst.priors.sigma_gamma;
  pr.mu_beta1 = inst.priors.mu_beta1;
  pr.sigma_beta1 = inst.priors.sigma_beta1;
  pr.mu_beta2 = inst.priors.mu_beta2;
  pr.sigma_beta2 = inst.priors.sigma_beta2;
  return pr;
}

/// Max relative error between an analytic gradient and five-point differences
/// of `f` over every coordinate of `coords`.
template <class Coords, class F>
double fd_check(Coords& coords, const Eigen::Ref<const Eigen::VectorXd>& analytic, F&& f, double h = 1e-5) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < coords.size(); ++i) {
    const double x0 = coords.data()[i];
    const double fd = oracle::derivative(
        [&](double v) {
          coords.data()[i] = v;
          return f();
        },
        x0, h * std::max(1.0, std::abs(x0)));
    coords.data()[i] = x0;
    worst = std::max(worst, oracle::rel_err(analytic(i), fd));
  }
  return worst;
}

inline Eigen::VectorXd flat(const Matrix& m) { return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size()); }

}  // namespace testing
