#include "bimmsbm/svi.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "parallel.hpp"

namespace bimmsbm {

namespace {

using Idx = Eigen::Index;

bool is_nonlink_dyad(const BipartiteNetwork& net, Dyad d) {
  return !net.is_holdout(d.p, d.q) && net.y(d.p, d.q) == 0;
}

}  // namespace

void FitConfig::validate() const {
  if (k1 == 0 || k2 == 0) throw ValidationError("k1 and k2 must be positive");
  if (!(tau > 0.0)) throw ValidationError("tau must be positive");
  if (!(kappa > 0.5 && kappa <= 1.0)) throw ValidationError("kappa must be in (0.5, 1]");
  if (m_sets < 1) throw ValidationError("m_sets must be at least 1");
  if (!(conv_tol >= 0.0)) throw ValidationError("conv_tol must be non-negative");
  if (elbo_window < 1) throw ValidationError("elbo_window must be at least 1");
  if (!(learn_rate > 0.0)) throw ValidationError("learn_rate must be positive");
  if (init_restarts < 1) throw ValidationError("init_restarts must be at least 1");
  if (se_samples < 1) throw ValidationError("se_samples must be at least 1");
  if (threads < 1) throw ValidationError("threads must be at least 1");
}

double step_size(std::size_t t, double tau, double kappa) { return std::pow(tau + static_cast<double>(t), -kappa); }

// ---------------------------------------------------------------------------
// Sampling

SamplingDesign SamplingDesign::make(const BipartiteNetwork& net, std::size_t m_sets) {
  if (m_sets < 1) throw ValidationError("m_sets must be at least 1");
  SamplingDesign s;
  s.m_sets = m_sets;
  const std::size_t n = net.n1() + net.n2();
  s.links.resize(n);
  s.nonlinks.resize(n);
  s.set_size.resize(n);
  for (std::uint32_t p = 0; p < net.n1(); ++p) {
    std::size_t l = 0;
    for (auto q : net.edges().neighbors1(p)) l += !net.is_holdout(p, q);
    s.links[p] = l;
    s.nonlinks[p] = net.observed1(p) - l;
  }
  for (std::uint32_t q = 0; q < net.n2(); ++q) {
    std::size_t l = 0;
    for (auto p : net.edges().neighbors2(q)) l += !net.is_holdout(p, q);
    s.links[net.n1() + q] = l;
    s.nonlinks[net.n1() + q] = net.observed2(q) - l;
  }
  const double m = static_cast<double>(m_sets);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s.set_size[i] = (s.nonlinks[i] + m_sets - 1) / m_sets;
    total += (s.links[i] > 0 ? 1.0 / (m + 1.0) : 0.0) + (s.nonlinks[i] > 0 ? m / (m + 1.0) : 0.0);
  }
  s.nonempty_prob = n ? total / static_cast<double>(n) : 0.0;
  return s;
}

double SamplingDesign::expected_count(const BipartiteNetwork& net, Dyad d) const {
  const double m = static_cast<double>(m_sets);
  const bool link = net.y(d.p, d.q) == 1;
  const auto rate = [&](std::size_t i) {
    if (link) return 1.0 / (m + 1.0);
    return nonlinks[i] ? (m / (m + 1.0)) * static_cast<double>(set_size[i]) / static_cast<double>(nonlinks[i]) : 0.0;
  };
  const double n = static_cast<double>(node_count());
  return (rate(d.p) + rate(net.n1() + d.q)) / (n * nonempty_prob);
}

double SamplingDesign::focal_weight(std::size_t node, bool link_set) const {
  const double m = static_cast<double>(m_sets);
  const double p1 = links[node] ? 1.0 / (m + 1.0) : 0.0;
  const double p0 = nonlinks[node] ? m / (m + 1.0) : 0.0;
  const double pne = p1 + p0;
  if (link_set) return p1 > 0 ? pne / p1 : 0.0;
  if (p0 == 0) return 0.0;
  return (pne / p0) * static_cast<double>(nonlinks[node]) / static_cast<double>(set_size[node]);
}

Subnetwork sample_subnetwork_for(const BipartiteNetwork& net, const SamplingDesign& design, std::size_t node,
                                 Rng& rng) {
  Subnetwork sub;
  sub.focal_node = node;
  const bool one = node < net.n1();
  sub.focal_family = one ? Family::one : Family::two;
  const auto idx = static_cast<std::uint32_t>(one ? node : node - net.n1());
  sub.focal = idx;
  const auto pair = [&](std::uint32_t other) { return one ? Dyad{idx, other} : Dyad{other, idx}; };
  const double m = static_cast<double>(design.m_sets);
  sub.is_link_set = uniform01(rng) < 1.0 / (m + 1.0);

  std::map<std::uint32_t, double> picked;
  if (sub.is_link_set) {
    for (auto o : one ? net.edges().neighbors1(idx) : net.edges().neighbors2(idx))
      if (!net.is_holdout(pair(o).p, pair(o).q)) picked[o] += 1.0;
  } else if (design.nonlinks[node] > 0) {
    const std::size_t others = one ? net.n2() : net.n1();
    for (std::size_t draw = 0; draw < design.set_size[node]; ++draw) {
      for (;;) {
        const auto o = static_cast<std::uint32_t>(uniform_index(rng, others));
        if (is_nonlink_dyad(net, pair(o))) {
          picked[o] += 1.0;
          break;
        }
      }
    }
  }
  for (const auto& [o, mult] : picked) {
    sub.dyads.push_back(pair(o));
    sub.multiplicity.push_back(mult);
  }
  const double distinct = std::max<double>(1.0, static_cast<double>(sub.dyads.size()));
  sub.weight1 = one ? static_cast<double>(net.n2()) / distinct : static_cast<double>(net.n2());
  sub.weight2 = one ? static_cast<double>(net.n1()) : static_cast<double>(net.n1()) / distinct;
  sub.focal_weight = sub.empty() ? 0.0 : design.focal_weight(node, sub.is_link_set);
  return sub;
}

Subnetwork sample_subnetwork(const BipartiteNetwork& net, const SamplingDesign& design, Rng& rng) {
  if (design.node_count() == 0) throw ValidationError("network has no nodes");
  return sample_subnetwork_for(net, design, uniform_index(rng, design.node_count()), rng);
}

IntermediateCounts intermediate_counts(const BipartiteNetwork& net, const Subnetwork& subnet,
                                       const VariationalState& state, const SamplingDesign& /*design*/,
                                       CountWeighting weighting) {
  IntermediateCounts out;
  const bool one = subnet.focal_family == Family::one;
  const auto focal = subnet.focal;
  const std::size_t nd = subnet.dyads.size();
  const auto k1 = static_cast<Idx>(state.k1), k2 = static_cast<Idx>(state.k2);
  Vector row(k1), col(k2);
  Vector focal_row = Vector::Zero(one ? k1 : k2);
  Matrix partners(static_cast<Idx>(nd), one ? k2 : k1);

  const bool plain = weighting == CountWeighting::plain;
  for (std::size_t i = 0; i < nd; ++i) {
    const auto d = subnet.dyads[i];
    phi_marginals(state.phi.get(d), state.k1, state.k2, as_span(row), as_span(col));
    const double mult = plain ? 1.0 : subnet.multiplicity[i];
    focal_row += mult * (one ? row : col);
    // partner side: |V^t| = 1 on the focal side, so the scale is N_other
    const double scale = plain ? (one ? subnet.weight2 : subnet.weight1)
                               : static_cast<double>(one ? net.observed2(d.q) : net.observed1(d.p));
    partners.row(static_cast<Idx>(i)) = scale * (one ? col : row).transpose();
  }
  focal_row *= plain ? (one ? subnet.weight1 : subnet.weight2) : subnet.focal_weight;

  std::vector<std::uint32_t> partner_ids(nd);
  for (std::size_t i = 0; i < nd; ++i) partner_ids[i] = one ? subnet.dyads[i].q : subnet.dyads[i].p;
  if (one) {
    out.nodes1 = {focal};
    out.rows1 = focal_row.transpose();
    out.nodes2 = std::move(partner_ids);
    out.rows2 = std::move(partners);
  } else {
    out.nodes2 = {focal};
    out.rows2 = focal_row.transpose();
    out.nodes1 = std::move(partner_ids);
    out.rows1 = std::move(partners);
  }
  return out;
}

Matrix online_count_update(const Matrix& c_prev, const Matrix& c_hat, std::size_t t, double tau, double kappa) {
  const double rho = step_size(t, tau, kappa);
  if (!(rho > 0.0 && rho <= 1.0)) throw ValidationError("count step size outside (0, 1]; check tau and t");
  return (1.0 - rho) * c_prev + rho * c_hat;
}

// ---------------------------------------------------------------------------
// Batch E-step

double batch_estep(const BipartiteNetwork& net, const ModelParams& params, const PriorSpec& priors,
                   const DirichletConcentrations& conc, VariationalState& state, const DyadSelection& sel,
                   std::size_t threads) {
  if (!state.phi.is_dense()) throw std::invalid_argument("batch_estep needs dense phi storage");
  const std::size_t cells = state.k1 * state.k2;
  const double old_total = elbo(net, params, priors, conc, state, sel).total;

  VariationalState prop = state;
  detail::parallel_for(sel.dyads.size(), threads,
                       [&](std::size_t i) { update_phi(net, params, conc, state, sel.dyads[i], prop.phi.slot(sel.dyads[i])); });
  recompute_global_counts(prop, sel.dyads);
  const double new_total = elbo(net, params, priors, conc, prop, sel).total;
  if (new_total >= old_total) {
    state = std::move(prop);
    return 1.0;
  }

  // The likelihood term is linear in phi; entropy and count terms are not.
  const double lik_old = likelihood_term(net, params, state, sel);
  const double lik_new = likelihood_term(net, params, prop, sel);
  const double prior = prior_term(params, priors);
  VariationalState counts_only = VariationalState::make(0, 0, state.k1, state.k2, false);
  std::vector<double> mix(cells);
  double s = 0.5;
  for (int k = 0; k < 20; ++k, s *= 0.5) {
    counts_only.c1 = (1.0 - s) * state.c1 + s * prop.c1;
    counts_only.c2 = (1.0 - s) * state.c2 + s * prop.c2;
    double ent = 0.0;
    for (std::size_t i = 0; i < sel.dyads.size(); ++i) {
      const auto a = state.phi.get(sel.dyads[i]);
      const auto b = prop.phi.get(sel.dyads[i]);
      double h = 0.0;
      for (std::size_t c = 0; c < cells; ++c) {
        const double v = (1.0 - s) * a[c] + s * b[c];
        if (v > 0.0) h -= v * std::log(v);
      }
      ent += sel.weight(i) * h;
    }
    const double total = (1.0 - s) * lik_old + s * lik_new + ent + prior +
                         dirichlet_term(net, conc, counts_only, Family::one) +
                         dirichlet_term(net, conc, counts_only, Family::two);
    if (total >= old_total) {
      for (const auto& d : sel.dyads) {
        auto dst = state.phi.slot(d);
        const auto b = prop.phi.get(d);
        for (std::size_t c = 0; c < cells; ++c) dst[c] = (1.0 - s) * dst[c] + s * b[c];
      }
      recompute_global_counts(state, sel.dyads);
      return s;
    }
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Driver

namespace {

double window_mean(const std::vector<double>& v, std::size_t begin, std::size_t end) {
  return std::accumulate(v.begin() + static_cast<std::ptrdiff_t>(begin), v.begin() + static_cast<std::ptrdiff_t>(end), 0.0) /
         static_cast<double>(end - begin);
}

bool relative_change_below(double prev, double cur, double tol) {
  return std::abs(cur - prev) <= tol * std::max(std::abs(prev), 1e-300);
}

void clamp_row(Matrix& c, Idx r, double cap) {
  for (Idx g = 0; g < c.cols(); ++g) c(r, g) = std::clamp(c(r, g), 0.0, cap);
}

void finalize(FitResult& res, const BipartiteNetwork& net, const FitConfig& config, const ModelParams& params,
              const DirichletConcentrations& conc, const VariationalState& state) {
  res.params = params;
  const auto mm = posterior_mixed_memberships(conc, state);
  res.pi_hat = mm.pi_hat;
  res.psi_hat = mm.psi_hat;
  res.c1 = state.c1;
  res.c2 = state.c2;
  res.iterations = res.elbo_trace.size();
  if (config.compute_se)
    res.se = standard_errors(net, params, res.priors, conc, state, config.se_samples, derive_seed(config.seed, "se"));
}

}  // namespace

FitResult fit(const BipartiteNetwork& net, const FitConfig& config, const PriorSpec& priors,
              const std::optional<ModelParams>& init_params) {
  config.validate();
  priors.validate(config.k1, config.k2);
  if (net.observed_count() == 0) throw ValidationError("network has no observed dyads");

  FitResult res;
  res.priors = priors;

  ModelParams params;
  InitAssignment init;
  if (init_params) {
    params = *init_params;
    params.check_compatible(net);
    if (params.k1 != config.k1 || params.k2 != config.k2)
      throw ValidationError("initial parameters do not match k1/k2");
    init.row_mix = Matrix::Constant(static_cast<Idx>(net.n1()), static_cast<Idx>(config.k1), 1.0 / static_cast<double>(config.k1));
    init.col_mix = Matrix::Constant(static_cast<Idx>(net.n2()), static_cast<Idx>(config.k2), 1.0 / static_cast<double>(config.k2));
  } else {
    InitOptions io;
    io.restarts = config.init_restarts;
    init = init_coclustering(net, config.k1, config.k2, derive_seed(config.seed, "init"), io);
    params = initial_params(init, net);
  }
  auto state = seed_variational_state(init, net, config.batch_mode, config.memory_cap);
  auto conc = compute_concentrations(params, net);

  if (config.batch_mode) {
    const auto sel = DyadSelection::all_observed(net);
    StepMemory memory;
    double prev = elbo(net, params, priors, conc, state, sel).total;
    for (std::size_t it = 1; it <= config.max_iter; ++it) {
      double cur = 0.0;
      try {
        batch_estep(net, params, priors, conc, state, sel, config.threads);
        conc = batch_mstep(net, params, priors, state, sel, memory, config.mstep);
        cur = elbo(net, params, priors, conc, state, sel).total;
      } catch (const NumericalError& e) {
        throw DivergenceError(std::string("fit diverged: ") + e.what(), it);
      }
      res.elbo_trace.push_back(cur);
      spdlog::debug("batch iteration {}: elbo {:.10g}", it, cur);
      if (relative_change_below(prev, cur, config.conv_tol)) {
        res.converged = true;
        break;
      }
      prev = cur;
    }
    finalize(res, net, config, params, conc, state);
    return res;
  }

  const auto design = SamplingDesign::make(net, config.m_sets);
  if (!(design.nonempty_prob > 0.0)) throw ValidationError("no dyads available for subsampling");
  auto rng = make_rng(config.seed, "svi");
  std::vector<std::size_t> touched1(net.n1(), 0), touched2(net.n2(), 0);
  const double n_obs = static_cast<double>(net.observed_count());
  const std::size_t win = config.elbo_window;

  for (std::size_t it = 1; it <= config.max_iter; ++it) {
    Subnetwork sub;
    do {
      sub = sample_subnetwork(net, design, rng);
    } while (sub.empty());

    double estimate = 0.0;
    try {
      state.phi.clear();
      for (const auto& d : sub.dyads) update_phi(net, params, conc, state, d, state.phi.slot(d));

      const auto ic = intermediate_counts(net, sub, state, design);
      for (std::size_t i = 0; i < ic.nodes1.size(); ++i) {
        const auto p = ic.nodes1[i];
        const double rho = step_size(++touched1[p], config.tau, config.kappa);
        state.c1.row(p) = (1.0 - rho) * state.c1.row(p) + rho * ic.rows1.row(static_cast<Idx>(i));
        clamp_row(state.c1, p, static_cast<double>(net.observed1(p)));
      }
      for (std::size_t i = 0; i < ic.nodes2.size(); ++i) {
        const auto q = ic.nodes2[i];
        const double rho = step_size(++touched2[q], config.tau, config.kappa);
        state.c2.row(q) = (1.0 - rho) * state.c2.row(q) + rho * ic.rows2.row(static_cast<Idx>(i));
        clamp_row(state.c2, q, static_cast<double>(net.observed2(q)));
      }

      DyadSelection sel{sub.dyads, {}};
      sel.weights.resize(sub.dyads.size());
      for (std::size_t i = 0; i < sub.dyads.size(); ++i)
        sel.weights[i] = sub.multiplicity[i] / design.expected_count(net, sub.dyads[i]);

      const double rho_l = config.learn_rate * step_size(it, config.tau, config.kappa);
      GradientSet g;
      g.grad_b = grad_b(net, params, priors, state, sel) / n_obs;
      g.grad_gamma = grad_gamma(net, params, priors, state, sel) / n_obs;
      g.grad_beta1 = grad_beta(net, params, priors, conc, state, Family::one) / static_cast<double>(net.n1());
      g.grad_beta2 = grad_beta(net, params, priors, conc, state, Family::two) / static_cast<double>(net.n2());
      params = mstep_update(params, g, rho_l);
      conc = compute_concentrations(params, net);
      estimate = elbo(net, params, priors, conc, state, sel).total;
    } catch (const NumericalError& e) {
      throw DivergenceError(std::string("fit diverged: ") + e.what(), it);
    }
    res.elbo_trace.push_back(estimate);
    if (it % 1000 == 0) spdlog::debug("svi iteration {}: elbo estimate {:.6g}", it, estimate);

    const auto& tr = res.elbo_trace;
    if (tr.size() >= 2 * win) {
      const double prev = window_mean(tr, tr.size() - 2 * win, tr.size() - win);
      const double cur = window_mean(tr, tr.size() - win, tr.size());
      if (relative_change_below(prev, cur, config.conv_tol)) {
        res.converged = true;
        break;
      }
    }
  }
  finalize(res, net, config, params, conc, state);
  return res;
}

}  // namespace bimmsbm
