#include "bimmsbm/mstep.hpp"

#include <boost/math/special_functions/digamma.hpp>

#include <cmath>
#include <limits>
#include <stdexcept>

#include "bimmsbm/simd.hpp"

namespace bimmsbm {

namespace {

using Idx = Eigen::Index;

double dyad_dot_gamma(const BipartiteNetwork& net, const ModelParams& params, Dyad d) {
  const auto dv = net.d(d.p, d.q);
  return dv.empty() ? 0.0 : simd::dot(dv, as_span(params.gamma));
}

double sq_penalty(double v, double mu, double sigma) {
  const double z = (v - mu) / sigma;
  return -0.5 * z * z;
}

std::size_t observed_of(const BipartiteNetwork& net, Family f, std::uint32_t i) {
  return f == Family::one ? net.observed1(i) : net.observed2(i);
}

}  // namespace

DyadSelection DyadSelection::all_observed(const BipartiteNetwork& net) { return {net.observed_dyads(), {}}; }

double DyadSelection::total_weight() const {
  if (weights.empty()) return static_cast<double>(dyads.size());
  double s = 0.0;
  for (double w : weights) s += w;
  return s;
}

double likelihood_term(const BipartiteNetwork& net, const ModelParams& params, const VariationalState& state,
                       const DyadSelection& sel) {
  const std::size_t k1 = state.k1, k2 = state.k2;
  std::vector<double> ll(k1 * k2);
  double total = 0.0;
  for (std::size_t i = 0; i < sel.dyads.size(); ++i) {
    const auto d = sel.dyads[i];
    const auto phi = state.phi.get(d);
    const int y = net.y(d.p, d.q);
    const double dg = dyad_dot_gamma(net, params, d);
    for (std::size_t g = 0; g < k1; ++g)
      for (std::size_t h = 0; h < k2; ++h) {
        const double theta = clamp_prob(logistic(params.b(static_cast<Idx>(g), static_cast<Idx>(h)) + dg));
        ll[g * k2 + h] = y ? std::log(theta) : std::log1p(-theta);
      }
    total += sel.weight(i) * simd::dot(phi, ll);
  }
  return total;
}

double dirichlet_term(const BipartiteNetwork& net, const DirichletConcentrations& conc, const VariationalState& state,
                      Family family) {
  const bool one = family == Family::one;
  const Matrix& c = one ? state.c1 : state.c2;
  const Matrix& alpha = one ? conc.alpha1 : conc.alpha2;
  const Vector& xi = one ? conc.xi1 : conc.xi2;
  double s = 0.0;
  for (Idx r = 0; r < c.rows(); ++r) {
    const double n = static_cast<double>(observed_of(net, family, static_cast<std::uint32_t>(r)));
    s += std::lgamma(xi(r)) - std::lgamma(xi(r) + n);
    for (Idx g = 0; g < c.cols(); ++g) s += std::lgamma(alpha(r, g) + c(r, g)) - std::lgamma(alpha(r, g));
  }
  return s;
}

double prior_term_bg(const ModelParams& params, const PriorSpec& priors) {
  double s = 0.0;
  for (Idx g = 0; g < params.b.rows(); ++g)
    for (Idx h = 0; h < params.b.cols(); ++h)
      s += sq_penalty(params.b(g, h), priors.mu_b(g, h), priors.sigma_b(g, h));
  for (Idx j = 0; j < params.gamma.size(); ++j) s += sq_penalty(params.gamma(j), priors.mu_gamma, priors.sigma_gamma);
  return s;
}

double prior_term_beta(const ModelParams& params, const PriorSpec& priors, Family family) {
  const bool one = family == Family::one;
  const Matrix& beta = one ? params.beta1 : params.beta2;
  const double mu = one ? priors.mu_beta1 : priors.mu_beta2;
  const double sigma = one ? priors.sigma_beta1 : priors.sigma_beta2;
  double s = 0.0;
  for (Idx i = 0; i < beta.size(); ++i) s += sq_penalty(beta.data()[i], mu, sigma);
  return s;
}

double prior_term(const ModelParams& params, const PriorSpec& priors) {
  return prior_term_bg(params, priors) + prior_term_beta(params, priors, Family::one) +
         prior_term_beta(params, priors, Family::two);
}

double entropy_term(const VariationalState& state, const DyadSelection& sel) {
  double total = 0.0;
  for (std::size_t i = 0; i < sel.dyads.size(); ++i) {
    double h = 0.0;
    for (double v : state.phi.get(sel.dyads[i]))
      if (v > 0.0) h -= v * std::log(v);
    total += sel.weight(i) * h;
  }
  return total;
}

ElboBreakdown elbo(const BipartiteNetwork& net, const ModelParams& params, const PriorSpec& priors,
                   const DirichletConcentrations& conc, const VariationalState& state, const DyadSelection& sel) {
  ElboBreakdown e;
  e.likelihood_term = likelihood_term(net, params, state, sel);
  e.dirichlet_term1 = dirichlet_term(net, conc, state, Family::one);
  e.dirichlet_term2 = dirichlet_term(net, conc, state, Family::two);
  e.prior_term = prior_term(params, priors);
  e.entropy_term = entropy_term(state, sel);
  e.total = e.likelihood_term + e.dirichlet_term1 + e.dirichlet_term2 + e.prior_term + e.entropy_term;
  if (!std::isfinite(e.total)) throw NumericalError("non-finite lower bound component");
  return e;
}

Matrix grad_b(const BipartiteNetwork& net, const ModelParams& params, const PriorSpec& priors,
              const VariationalState& state, const DyadSelection& sel) {
  Matrix g = Matrix::Zero(params.b.rows(), params.b.cols());
  for (std::size_t i = 0; i < sel.dyads.size(); ++i) {
    const auto d = sel.dyads[i];
    const auto phi = state.phi.get(d);
    const int y = net.y(d.p, d.q);
    const double dg = dyad_dot_gamma(net, params, d);
    const double w = sel.weight(i);
    for (std::size_t c = 0; c < phi.size(); ++c)
      g.data()[c] += w * phi[c] * (y - clamp_prob(logistic(params.b.data()[c] + dg)));
  }
  g.array() -= (params.b - priors.mu_b).array() / priors.sigma_b.array().square();
  return g;
}

Vector grad_gamma(const BipartiteNetwork& net, const ModelParams& params, const PriorSpec& priors,
                  const VariationalState& state, const DyadSelection& sel) {
  Vector g = Vector::Zero(params.gamma.size());
  if (g.size() == 0) return g;
  for (std::size_t i = 0; i < sel.dyads.size(); ++i) {
    const auto d = sel.dyads[i];
    const auto phi = state.phi.get(d);
    const int y = net.y(d.p, d.q);
    const double dg = dyad_dot_gamma(net, params, d);
    double r = 0.0;
    for (std::size_t c = 0; c < phi.size(); ++c) r += phi[c] * (y - clamp_prob(logistic(params.b.data()[c] + dg)));
    simd::axpy(sel.weight(i) * r, net.d(d.p, d.q), as_span(g));
  }
  g.array() -= (params.gamma.array() - priors.mu_gamma) / (priors.sigma_gamma * priors.sigma_gamma);
  return g;
}

std::vector<double> poisson_binomial_pmf(std::span<const double> probs) {
  std::vector<double> pmf(probs.size() + 1, 0.0);
  pmf[0] = 1.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double pr = probs[i];
    for (std::size_t k = i + 1; k > 0; --k) pmf[k] = pmf[k] * (1.0 - pr) + pmf[k - 1] * pr;
    pmf[0] *= 1.0 - pr;
  }
  return pmf;
}

Matrix grad_beta(const BipartiteNetwork& net, const ModelParams& params, const PriorSpec& priors,
                 const DirichletConcentrations& conc, const VariationalState& state, Family family,
                 CountExpectation mode) {
  using boost::math::digamma;
  const bool one = family == Family::one;
  const Matrix& design = one ? net.x() : net.w();
  const Matrix& beta = one ? params.beta1 : params.beta2;
  const Matrix& c = one ? state.c1 : state.c2;
  const Matrix& alpha = one ? conc.alpha1 : conc.alpha2;
  const Vector& xi = one ? conc.xi1 : conc.xi2;
  const double mu = one ? priors.mu_beta1 : priors.mu_beta2;
  const double sigma = one ? priors.sigma_beta1 : priors.sigma_beta2;

  Matrix g = Matrix::Zero(beta.rows(), beta.cols());
  for (Idx r = 0; r < design.rows(); ++r) {
    const double n = static_cast<double>(observed_of(net, family, static_cast<std::uint32_t>(r)));
    const double norm = n > 0 ? digamma(xi(r)) - digamma(xi(r) + n) : 0.0;
    Matrix marg;
    if (mode == CountExpectation::exact)
      marg = incident_marginals(net, params, conc, state, family, static_cast<std::uint32_t>(r));
    for (Idx k = 0; k < beta.rows(); ++k) {
      const double a = alpha(r, k);
      double cnt = 0.0;
      if (mode == CountExpectation::exact) {
        const Vector probs = marg.col(k);
        const auto pmf = poisson_binomial_pmf(as_span(probs));
        for (std::size_t m = 1; m < pmf.size(); ++m) cnt += pmf[m] * (digamma(a + static_cast<double>(m)) - digamma(a));
      } else if (c(r, k) > 0) {
        cnt = digamma(a + c(r, k)) - digamma(a);
      }
      simd::axpy(a * (cnt + norm), row_span(design, r), row_span(g, k));
    }
  }
  g.array() -= (beta.array() - mu) / (sigma * sigma);
  return g;
}

GradientSet gradients(const BipartiteNetwork& net, const ModelParams& params, const PriorSpec& priors,
                      const DirichletConcentrations& conc, const VariationalState& state, const DyadSelection& sel) {
  return {grad_b(net, params, priors, state, sel), grad_gamma(net, params, priors, state, sel),
          grad_beta(net, params, priors, conc, state, Family::one),
          grad_beta(net, params, priors, conc, state, Family::two)};
}

ModelParams mstep_update(const ModelParams& params, const GradientSet& grads, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("step must be positive");
  ModelParams out = params;
  out.b += step * grads.grad_b;
  out.gamma += step * grads.grad_gamma;
  out.beta1 += step * grads.grad_beta1;
  out.beta2 += step * grads.grad_beta2;
  if (!out.b.allFinite() || !out.gamma.allFinite() || !out.beta1.allFinite() || !out.beta2.allFinite())
    throw NumericalError("non-finite parameter update");
  return out;
}

LineSearchResult backtracking_line_search(const std::function<double(double)>& f_at_step, double f0, double step0,
                                          int max_halvings) {
  double s = step0;
  LineSearchResult tie{false, 0.0, f0};
  for (int k = 0; k <= max_halvings; ++k, s *= 0.5) {
    const double v = f_at_step(s);
    if (!std::isfinite(v)) continue;
    if (v > f0) return {true, s, v};
    if (v == f0 && !tie.accepted) tie = {true, s, v};
  }
  return tie;
}

AscentResult gradient_ascent(const std::function<double(const Vector&)>& f,
                             const std::function<Vector(const Vector&)>& grad, Vector x0, double step0,
                             const AscentOptions& opts) {
  AscentResult res;
  res.x = std::move(x0);
  res.value = f(res.x);
  double trial = step0;
  for (; res.steps < opts.max_steps; ++res.steps) {
    const Vector g = grad(res.x);
    if (g.size() == 0 || g.cwiseAbs().maxCoeff() <= opts.grad_tol) {
      res.converged = true;
      break;
    }
    const Vector dir = opts.scale * g;
    const auto ls = backtracking_line_search([&](double s) { return f(res.x + s * dir); }, res.value, trial,
                                             opts.max_halvings);
    if (!ls.accepted) break;
    res.x += ls.step * dir;
    res.value = ls.value;
    res.step = ls.step;
    trial = 2.0 * ls.step;
  }
  return res;
}

Vector pack_bg(const ModelParams& params) {
  Vector v(params.b.size() + params.gamma.size());
  v.head(params.b.size()) = Eigen::Map<const Vector>(params.b.data(), params.b.size());
  v.tail(params.gamma.size()) = params.gamma;
  return v;
}

void unpack_bg(const Vector& v, ModelParams& params) {
  Eigen::Map<Vector>(params.b.data(), params.b.size()) = v.head(params.b.size());
  params.gamma = v.tail(params.gamma.size());
}

namespace {

constexpr double kMinusInf = -std::numeric_limits<double>::infinity();

Vector flat(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }
void set_flat(Matrix& m, const Vector& v) { Eigen::Map<Vector>(m.data(), m.size()) = v; }

}  // namespace

DirichletConcentrations batch_mstep(const BipartiteNetwork& net, ModelParams& params, const PriorSpec& priors,
                                    const VariationalState& state, const DyadSelection& sel, StepMemory& memory,
                                    const BatchMstepOptions& opts) {
  AscentOptions ao;
  ao.max_steps = opts.inner_steps;
  ao.max_halvings = opts.max_halvings;

  {  // B and gamma
    ModelParams trial = params;
    const auto f = [&](const Vector& v) {
      unpack_bg(v, trial);
      return likelihood_term(net, trial, state, sel) + prior_term_bg(trial, priors);
    };
    const auto g = [&](const Vector& v) {
      unpack_bg(v, trial);
      Vector out(v.size());
      const Matrix gb = grad_b(net, trial, priors, state, sel);
      out.head(gb.size()) = flat(gb);
      out.tail(trial.gamma.size()) = grad_gamma(net, trial, priors, state, sel);
      return out;
    };
    ao.scale = 1.0 / std::max(1.0, sel.total_weight());
    const auto r = gradient_ascent(f, g, pack_bg(params), memory.bg, ao);
    unpack_bg(r.x, params);
    if (r.step > 0) memory.bg = 2.0 * r.step;
  }

  for (Family fam : {Family::one, Family::two}) {
    const bool one = fam == Family::one;
    Matrix& target = one ? params.beta1 : params.beta2;
    ModelParams trial = params;
    Matrix& tb = one ? trial.beta1 : trial.beta2;
    const auto f = [&](const Vector& v) {
      set_flat(tb, v);
      try {
        const auto conc = compute_concentrations(trial, net);
        return dirichlet_term(net, conc, state, fam) + prior_term_beta(trial, priors, fam);
      } catch (const NumericalError&) {
        return kMinusInf;
      }
    };
    const auto g = [&](const Vector& v) {
      set_flat(tb, v);
      const auto conc = compute_concentrations(trial, net);
      return flat(grad_beta(net, trial, priors, conc, state, fam));
    };
    ao.scale = 1.0 / static_cast<double>(std::max<std::size_t>(1, one ? net.n1() : net.n2()));
    double& mem = one ? memory.beta1 : memory.beta2;
    const auto r = gradient_ascent(f, g, flat(target), mem, ao);
    set_flat(target, r.x);
    if (r.step > 0) mem = 2.0 * r.step;
  }
  return compute_concentrations(params, net);
}

}  // namespace bimmsbm
