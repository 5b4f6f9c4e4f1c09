#include <doctest.h>

#include <cmath>
#include <map>

#include "bimmsbm/eval.hpp"
#include "bimmsbm/simulate.hpp"
#include "bimmsbm/svi.hpp"
#include "support.hpp"

using namespace bimmsbm;

namespace {

// Node 0 of family 1 has 5 ties among 100 family-2 nodes.
BipartiteNetwork star() {
  NetworkData nd;
  nd.ids1 = {"a", "b"};
  for (int q = 0; q < 100; ++q) nd.ids2.push_back("c" + std::to_string(q));
  for (std::uint32_t q = 0; q < 5; ++q) nd.edges.push_back({0, q});
  nd.edges.push_back({1, 7});
  return BipartiteNetwork(std::move(nd));
}

}  // namespace

TEST_CASE("step size schedule") {
  CHECK(step_size(15, 1.0, 0.75) == doctest::Approx(0.125).epsilon(1e-12));
  CHECK(step_size(0, 1.0, 0.75) == 1.0);
  double prev = 1.0;
  for (std::size_t t = 1; t < 50; ++t) {
    const double r = step_size(t, 1.0, 0.75);
    CHECK(r < prev);
    prev = r;
  }
}

TEST_CASE("config validation") {
  FitConfig c;
  CHECK_NOTHROW(c.validate());
  auto bad = c;
  bad.tau = 0.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = c;
  bad.kappa = 0.5;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad.kappa = 1.0;
  CHECK_NOTHROW(bad.validate());
  bad = c;
  bad.m_sets = 0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("subnetwork sizes for a degree-5 node with 95 non-links") {
  const auto net = star();
  const auto design = SamplingDesign::make(net, 10);
  CHECK(design.links[0] == 5);
  CHECK(design.nonlinks[0] == 95);
  CHECK(design.set_size[0] == 10);
  auto rng = make_rng(1, "star");
  int link_sets = 0, nonlink_sets = 0;
  for (int i = 0; i < 400; ++i) {
    const auto sub = sample_subnetwork_for(net, design, 0, rng);
    double draws = 0;
    for (double m : sub.multiplicity) draws += m;
    if (sub.is_link_set) {
      ++link_sets;
      CHECK(sub.dyads.size() == 5);
      CHECK(draws == 5.0);
      for (const auto& d : sub.dyads) CHECK(net.y(d.p, d.q) == 1);
    } else {
      ++nonlink_sets;
      CHECK(draws == 10.0);
      for (const auto& d : sub.dyads) CHECK(net.y(d.p, d.q) == 0);
    }
  }
  CHECK(link_sets > 10);
  CHECK(nonlink_sets > 300);
}

TEST_CASE("holdout dyads are never sampled") {
  const auto base = star();
  std::vector<std::uint8_t> mask(base.n1() * base.n2(), 0);
  for (std::size_t q = 0; q < 100; q += 2) mask[q] = 1;
  const auto net = base.with_holdout(mask);
  const auto design = SamplingDesign::make(net, 4);
  auto rng = make_rng(2, "holdout");
  for (int i = 0; i < 300; ++i)
    for (const auto& d : sample_subnetwork_for(net, design, 0, rng).dyads) CHECK_FALSE(net.is_holdout(d.p, d.q));
}

TEST_CASE("expected dyad multiplicity matches simulation") {
  const auto inst = testing::random_instance(77, {.n1_max = 6, .n2_max = 8});
  const auto& net = inst.net;
  const auto design = SamplingDesign::make(net, 3);
  auto rng = make_rng(3, "mult");
  std::map<Dyad, double> total;
  const int draws = 200000;
  int kept = 0;
  while (kept < draws) {
    const auto sub = sample_subnetwork(net, design, rng);
    if (sub.empty()) continue;
    ++kept;
    for (std::size_t i = 0; i < sub.dyads.size(); ++i) total[sub.dyads[i]] += sub.multiplicity[i];
  }
  for (const auto& d : net.observed_dyads()) {
    const double want = design.expected_count(net, d);
    CHECK(total[d] / draws == doctest::Approx(want).epsilon(0.03));
  }
}

TEST_CASE("focal count row is unbiased for the full row") {
  const auto inst = testing::random_instance(91, {.n1_max = 6, .n2_max = 30});
  const auto& net = inst.net;
  const auto design = SamplingDesign::make(net, 4);
  auto state = inst.state;
  auto rng = make_rng(4, "focal");
  const std::uint32_t p = 0;
  Vector acc = Vector::Zero(static_cast<Eigen::Index>(inst.params.k1));
  int kept = 0;
  while (kept < 100000) {
    const auto sub = sample_subnetwork_for(net, design, p, rng);
    if (sub.empty()) continue;
    ++kept;
    const auto ic = intermediate_counts(net, sub, state, design);
    REQUIRE(ic.nodes1 == std::vector<std::uint32_t>{p});
    acc += ic.rows1.row(0).transpose();
  }
  acc /= kept;
  for (Eigen::Index g = 0; g < acc.size(); ++g) CHECK(acc(g) == doctest::Approx(state.c1(p, g)).epsilon(0.03));
}

TEST_CASE("online count update") {
  Matrix a(2, 2), b(2, 2);
  a << 1, 2, 3, 4;
  b << 5, 6, 7, 8;
  CHECK(online_count_update(a, a, 7, 1.0, 0.75) == a);
  const double rho = step_size(3, 1.0, 0.75);
  const Matrix m = online_count_update(a, b, 3, 1.0, 0.75);
  CHECK(m(1, 0) == doctest::Approx((1 - rho) * 3 + rho * 7));
  CHECK(online_count_update(a, b, 0, 1.0, 0.75) == b);
  CHECK_THROWS_AS(online_count_update(a, b, 0, 0.5, 0.75), ValidationError);
}

TEST_CASE("batch E-step never lowers the bound") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto inst = testing::random_instance(800 + seed);
    const auto conc = inst.conc();
    const auto sel = inst.sel();
    double prev = inst.elbo_total();
    for (int it = 0; it < 4; ++it) {
      const double frac = batch_estep(inst.net, inst.params, inst.priors, conc, inst.state, sel);
      CHECK(frac >= 0.0);
      CHECK(frac <= 1.0);
      const double cur = inst.elbo_total();
      CHECK(cur >= prev - 1e-9 * std::abs(prev));
      prev = cur;
    }
  }
  auto sparse = testing::random_instance(1);
  sparse.state = VariationalState::make(sparse.net.n1(), sparse.net.n2(), sparse.params.k1, sparse.params.k2, false);
  CHECK_THROWS_AS(batch_estep(sparse.net, sparse.params, sparse.priors, sparse.conc(), sparse.state, sparse.sel()),
                  std::invalid_argument);
}

TEST_CASE("batch fit: monotone trace, determinism, zero iterations") {
  const auto sim = simulate_network(scenario("easy", "small"), 5);
  FitConfig c;
  c.k1 = c.k2 = 2;
  c.batch_mode = true;
  c.max_iter = 15;
  c.seed = 9;
  const auto pr = PriorSpec::defaults(2, 2);
  const auto r = fit(sim.net, c, pr);
  REQUIRE(r.elbo_trace.size() >= 2);
  for (std::size_t i = 1; i < r.elbo_trace.size(); ++i)
    CHECK(r.elbo_trace[i] >= r.elbo_trace[i - 1] - 1e-9 * std::abs(r.elbo_trace[i - 1]));
  const auto r2 = fit(sim.net, c, pr);
  CHECK(r2.elbo_trace == r.elbo_trace);
  CHECK(r2.params.b == r.params.b);

  c.max_iter = 0;
  const auto r0 = fit(sim.net, c, pr);
  CHECK(r0.iterations == 0);
  CHECK(r0.pi_hat.rows() == static_cast<Eigen::Index>(sim.net.n1()));
}

TEST_CASE("stochastic fit recovers easy-scenario memberships") {
  const auto sim = simulate_network(scenario("easy", "small"), 11);
  FitConfig c;
  c.k1 = c.k2 = 2;
  c.max_iter = 20000;
  c.seed = 3;
  const auto r = fit(sim.net, c, PriorSpec::defaults(2, 2));
  const double rec = 0.5 * (membership_recovery(sim.truth.pi, r.pi_hat).mean_correlation +
                            membership_recovery(sim.truth.psi, r.psi_hat).mean_correlation);
  CHECK(rec >= 0.9);
  CHECK(r.elbo_trace.size() == r.iterations);
  const auto again = fit(sim.net, c, PriorSpec::defaults(2, 2));
  CHECK(again.pi_hat == r.pi_hat);
}

TEST_CASE("fit rejects incompatible warm starts") {
  const auto sim = simulate_network(scenario("easy", "small"), 1);
  FitConfig c;
  c.k1 = c.k2 = 2;
  c.max_iter = 2;
  auto p = sim.truth.params;
  CHECK_NOTHROW(fit(sim.net, c, PriorSpec::defaults(2, 2), p));
  c.k1 = 3;
  CHECK_THROWS_AS(fit(sim.net, c, PriorSpec::defaults(3, 2), p), ValidationError);
}
