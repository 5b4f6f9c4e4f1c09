#include "bimmsbm/init.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "bimmsbm/rng.hpp"

namespace bimmsbm {

namespace {

using Idx = Eigen::Index;

// Holdout partners per node, so that observed trial counts per block can be
// formed without touching every dyad.
struct HoldoutIndex {
  std::vector<std::vector<std::uint32_t>> by_row, by_col;

  explicit HoldoutIndex(const BipartiteNetwork& net) : by_row(net.n1()), by_col(net.n2()) {
    for (const auto& d : net.holdout_dyads()) {
      by_row[d.p].push_back(d.q);
      by_col[d.q].push_back(d.p);
    }
  }
};

struct BlockStats {
  Matrix links, trials;
};

BlockStats block_stats(const BipartiteNetwork& net, const HoldoutIndex& hold, const std::vector<std::uint32_t>& z,
                       const std::vector<std::uint32_t>& u, std::size_t k1, std::size_t k2) {
  BlockStats s{Matrix::Zero(static_cast<Idx>(k1), static_cast<Idx>(k2)),
               Matrix::Zero(static_cast<Idx>(k1), static_cast<Idx>(k2))};
  std::vector<double> size1(k1, 0.0), size2(k2, 0.0);
  for (auto g : z) size1[g] += 1.0;
  for (auto h : u) size2[h] += 1.0;
  for (std::size_t g = 0; g < k1; ++g)
    for (std::size_t h = 0; h < k2; ++h) s.trials(static_cast<Idx>(g), static_cast<Idx>(h)) = size1[g] * size2[h];
  for (std::uint32_t p = 0; p < net.n1(); ++p) {
    for (auto q : net.edges().neighbors1(p))
      if (!net.is_holdout(p, q)) s.links(z[p], u[q]) += 1.0;
    for (auto q : hold.by_row[p]) s.trials(z[p], u[q]) -= 1.0;
  }
  return s;
}

Matrix smoothed(const BlockStats& s) { return (s.links.array() + 1.0) / (s.trials.array() + 2.0); }

double objective_of(const BlockStats& s) {
  const Matrix p = smoothed(s);
  double v = 0.0;
  for (Idx i = 0; i < p.size(); ++i) {
    const double l = s.links.data()[i], n = s.trials.data()[i], pr = p.data()[i];
    v += (l + 1.0) * std::log(pr) + (n - l + 1.0) * std::log1p(-pr);
  }
  return v;
}

// One half-step: reassign every node of `family` given the other side's
// labels and the block probabilities. Returns whether any label changed.
bool reassign(const BipartiteNetwork& net, const HoldoutIndex& hold, Family family, std::vector<std::uint32_t>& own,
              const std::vector<std::uint32_t>& other, std::size_t k_own, std::size_t k_other, const Matrix& probs) {
  const bool one = family == Family::one;
  const std::size_t n = own.size();
  std::vector<double> other_size(k_other, 0.0);
  for (auto h : other) other_size[h] += 1.0;
  // log p and log(1-p) oriented as [own group][other group]
  Matrix lp(static_cast<Idx>(k_own), static_cast<Idx>(k_other)), lq(static_cast<Idx>(k_own), static_cast<Idx>(k_other));
  for (std::size_t g = 0; g < k_own; ++g)
    for (std::size_t h = 0; h < k_other; ++h) {
      const double pr = one ? probs(static_cast<Idx>(g), static_cast<Idx>(h)) : probs(static_cast<Idx>(h), static_cast<Idx>(g));
      lp(static_cast<Idx>(g), static_cast<Idx>(h)) = std::log(pr);
      lq(static_cast<Idx>(g), static_cast<Idx>(h)) = std::log1p(-pr);
    }

  std::vector<double> fit(n);
  std::vector<double> links(k_other), trials(k_other);
  bool changed = false;
  for (std::uint32_t i = 0; i < n; ++i) {
    std::fill(links.begin(), links.end(), 0.0);
    trials = other_size;
    const auto nb = one ? net.edges().neighbors1(i) : net.edges().neighbors2(i);
    for (auto o : nb) {
      const bool held = one ? net.is_holdout(i, o) : net.is_holdout(o, i);
      if (!held) links[other[o]] += 1.0;
    }
    for (auto o : one ? hold.by_row[i] : hold.by_col[i]) trials[other[o]] -= 1.0;
    std::uint32_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::uint32_t g = 0; g < k_own; ++g) {
      double sc = 0.0;
      for (std::size_t h = 0; h < k_other; ++h)
        sc += links[h] * lp(g, static_cast<Idx>(h)) + (trials[h] - links[h]) * lq(g, static_cast<Idx>(h));
      if (sc > best_score) {
        best_score = sc;
        best = g;
      }
    }
    fit[i] = best_score;
    if (own[i] != best) {
      own[i] = best;
      changed = true;
    }
  }

  // Reseed empty groups with the worst-fitting node of a group of size > 1.
  for (;;) {
    std::vector<std::size_t> size(k_own, 0);
    for (auto g : own) ++size[g];
    const auto empty = std::find(size.begin(), size.end(), 0);
    if (empty == size.end()) break;
    std::size_t worst = n;
    for (std::size_t i = 0; i < n; ++i)
      if (size[own[i]] > 1 && (worst == n || fit[i] < fit[worst])) worst = i;
    own[worst] = static_cast<std::uint32_t>(empty - size.begin());
    fit[worst] = std::numeric_limits<double>::infinity();
    changed = true;
  }
  return changed;
}

std::vector<std::uint32_t> random_labels(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::uint32_t> labels(n);
  for (auto& l : labels) l = static_cast<std::uint32_t>(uniform_index(rng, k));
  // guarantee every group is used: k distinct random nodes get groups 0..k-1
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + uniform_index(rng, n - i);
    std::swap(order[i], order[j]);
    labels[order[i]] = static_cast<std::uint32_t>(i);
  }
  return labels;
}

}  // namespace

double coclustering_objective(const BipartiteNetwork& net, const std::vector<std::uint32_t>& labels1,
                              const std::vector<std::uint32_t>& labels2, std::size_t k1, std::size_t k2) {
  return objective_of(block_stats(net, HoldoutIndex(net), labels1, labels2, k1, k2));
}

Matrix soften_labels(const std::vector<std::uint32_t>& labels, std::size_t k, double hard_weight) {
  const double rest = k > 1 ? (1.0 - hard_weight) / static_cast<double>(k - 1) : 0.0;
  const double top = k > 1 ? hard_weight : 1.0;
  Matrix m = Matrix::Constant(static_cast<Idx>(labels.size()), static_cast<Idx>(k), rest);
  for (std::size_t i = 0; i < labels.size(); ++i) m(static_cast<Idx>(i), labels[i]) = top;
  return m;
}

InitAssignment init_coclustering(const BipartiteNetwork& net, std::size_t k1, std::size_t k2, std::uint64_t seed,
                                 const InitOptions& opts) {
  if (k1 == 0 || k2 == 0) throw ValidationError("group counts must be positive");
  if (k1 > net.n1() || k2 > net.n2()) throw ValidationError("more groups than nodes");
  if (opts.restarts < 1) throw ValidationError("restarts must be at least 1");
  if (!(opts.hard_weight > 0.0 && opts.hard_weight <= 1.0)) throw ValidationError("hard weight must be in (0, 1]");
  const HoldoutIndex hold(net);

  InitAssignment best;
  best.objective = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < opts.restarts; ++r) {
    auto rng = make_rng(seed, "init", static_cast<std::uint64_t>(r));
    auto z = random_labels(net.n1(), k1, rng);
    auto u = random_labels(net.n2(), k2, rng);
    Matrix probs = smoothed(block_stats(net, hold, z, u, k1, k2));
    std::vector<double> trace;
    double obj = objective_of(block_stats(net, hold, z, u, k1, k2));
    for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
      bool changed = reassign(net, hold, Family::one, z, u, k1, k2, probs);
      auto stats = block_stats(net, hold, z, u, k1, k2);
      probs = smoothed(stats);
      trace.push_back(objective_of(stats));
      changed = reassign(net, hold, Family::two, u, z, k2, k1, probs) || changed;
      stats = block_stats(net, hold, z, u, k1, k2);
      probs = smoothed(stats);
      obj = objective_of(stats);
      trace.push_back(obj);
      if (!changed) break;
    }
    if (obj > best.objective) {
      best.labels1 = std::move(z);
      best.labels2 = std::move(u);
      best.block_probs = probs;
      best.objective = obj;
      best.trace = std::move(trace);
    }
  }
  best.row_mix = soften_labels(best.labels1, k1, opts.hard_weight);
  best.col_mix = soften_labels(best.labels2, k2, opts.hard_weight);
  return best;
}

VariationalState seed_variational_state(const InitAssignment& init, const BipartiteNetwork& net, bool dense,
                                        std::size_t memory_cap) {
  const auto k1 = static_cast<std::size_t>(init.row_mix.cols());
  const auto k2 = static_cast<std::size_t>(init.col_mix.cols());
  auto state = VariationalState::make(net.n1(), net.n2(), k1, k2, dense, memory_cap);
  if (dense) {
    const auto dyads = net.observed_dyads();
    for (const auto& d : dyads) {
      auto slot = state.phi.slot(d);
      for (std::size_t g = 0; g < k1; ++g)
        for (std::size_t h = 0; h < k2; ++h)
          slot[g * k2 + h] = init.row_mix(d.p, static_cast<Idx>(g)) * init.col_mix(d.q, static_cast<Idx>(h));
      double total = 0.0;
      for (double v : slot) total += v;
      for (double& v : slot) v /= total;
    }
    recompute_global_counts(state, dyads);
  } else {
    for (std::uint32_t p = 0; p < net.n1(); ++p)
      state.c1.row(p) = static_cast<double>(net.observed1(p)) * init.row_mix.row(p) / init.row_mix.row(p).sum();
    for (std::uint32_t q = 0; q < net.n2(); ++q)
      state.c2.row(q) = static_cast<double>(net.observed2(q)) * init.col_mix.row(q) / init.col_mix.row(q).sum();
  }
  return state;
}

ModelParams initial_params(const InitAssignment& init, const BipartiteNetwork& net) {
  const auto k1 = static_cast<std::size_t>(init.row_mix.cols());
  const auto k2 = static_cast<std::size_t>(init.col_mix.cols());
  auto params = ModelParams::zeros(k1, k2, net.j1(), net.j2(), net.jd());
  params.b = init.block_probs.unaryExpr([](double p) { return logit(clamp_prob(p)); });
  const Vector m1 = init.row_mix.colwise().mean().transpose();
  const Vector m2 = init.col_mix.colwise().mean().transpose();
  for (Idx g = 0; g < m1.size(); ++g) params.beta1(g, 0) = std::log(m1(g));
  for (Idx h = 0; h < m2.size(); ++h) params.beta2(h, 0) = std::log(m2(h));
  return params;
}

}  // namespace bimmsbm
