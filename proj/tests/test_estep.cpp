#include <doctest.h>

#include <cmath>
#include <random>

#include "bimmsbm/estep.hpp"
#include "support.hpp"

using namespace bimmsbm;

namespace {

BipartiteNetwork grid(std::size_t n1, std::size_t n2, std::vector<Dyad> edges, std::size_t jd = 0) {
  NetworkData d;
  for (std::size_t p = 0; p < n1; ++p) d.ids1.push_back("a" + std::to_string(p));
  for (std::size_t q = 0; q < n2; ++q) d.ids2.push_back("b" + std::to_string(q));
  d.edges = std::move(edges);
  d.d = DyadicCovariates(n1, n2, jd);
  return BipartiteNetwork(std::move(d));
}

void fill_uniform(VariationalState& st, const std::vector<Dyad>& dyads) {
  for (const auto& d : dyads)
    for (auto& v : st.phi.slot(d)) v = 1.0 / static_cast<double>(st.k1 * st.k2);
}

}  // namespace

TEST_CASE("phi table storage") {
  auto dense = PhiTable::dense(3, 4, 2, 2);
  CHECK(dense.is_dense());
  CHECK_FALSE(dense.contains({1, 2}));
  dense.slot({1, 2})[3] = 0.5;
  CHECK(dense.contains({1, 2}));
  CHECK(dense.get({1, 2})[3] == 0.5);
  CHECK(dense.size() == 1);
  dense.clear();
  CHECK(dense.size() == 0);
  CHECK_THROWS_AS(dense.get({1, 2}), std::out_of_range);

  auto sparse = PhiTable::sparse(1000, 1000, 3, 3);
  sparse.slot({999, 998})[0] = 1.0;
  CHECK(sparse.contains({999, 998}));
  CHECK_FALSE(sparse.contains({0, 0}));
  CHECK(sparse.get({999, 998}).size() == 9);

  CHECK_THROWS_AS(PhiTable::dense(10000, 10000, 2, 2, 1000), ValidationError);
}

TEST_CASE("marginal counts excluding a dyad") {
  const auto net = grid(1, 3, {});
  auto st = VariationalState::make(1, 3, 2, 2, true);
  const std::vector<Dyad> all = {{0, 0}, {0, 1}, {0, 2}};
  fill_uniform(st, all);
  recompute_global_counts(st, all);
  const auto [row, col] = marginal_counts_excluding(st, {0, 1});
  CHECK(row(0) == doctest::Approx(1.0));
  CHECK(row(1) == doctest::Approx(1.0));
  CHECK(col(0) == doctest::Approx(0.0));
  CHECK(col(1) == doctest::Approx(0.0));

  SUBCASE("flooring at zero") {
    auto s2 = VariationalState::make(1, 1, 2, 1, true);
    auto f = s2.phi.slot({0, 0});
    f[0] = 0.4;
    f[1] = 0.6;
    s2.c1 << 0.3, 0.6;
    s2.c2 << 1.0;
    const auto [r2, c2] = marginal_counts_excluding(s2, {0, 0});
    CHECK(r2(0) == 0.0);
  }
}

TEST_CASE("update_phi examples") {
  SUBCASE("single cell") {
    const auto net = grid(2, 2, {{0, 0}});
    const auto params = ModelParams::zeros(1, 1, 1, 1, 0);
    auto st = VariationalState::make(2, 2, 1, 1, true);
    const auto phi = update_phi(net, params, compute_concentrations(params, net), st, {0, 0});
    CHECK(phi == std::vector<double>{1.0});
  }
  SUBCASE("two-cell ratio") {
    const auto net = grid(1, 1, {{0, 0}});
    auto params = ModelParams::zeros(2, 1, 1, 1, 0);
    params.b(0, 0) = std::log(0.8 / 0.2);
    params.b(1, 0) = std::log(0.2 / 0.8);
    auto st = VariationalState::make(1, 1, 2, 1, true);
    const auto phi = update_phi(net, params, compute_concentrations(params, net), st, {0, 0});
    CHECK(phi[0] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(phi[1] == doctest::Approx(0.2).epsilon(1e-12));
  }
  SUBCASE("scaling the count factors uniformly leaves phi unchanged") {
    // with no stored table for the dyad, C' = C, so doubling alpha and C
    // doubles every (alpha + C') factor
    const auto inst = testing::random_instance(21);
    const Dyad d = inst.net.observed_dyads().front();
    auto st = inst.state;
    st.phi.clear();
    const auto base = update_phi(inst.net, inst.params, inst.conc(), st, d);
    auto conc = inst.conc();
    conc.alpha1 *= 2.0;
    conc.alpha2 *= 2.0;
    st.c1 *= 2.0;
    st.c2 *= 2.0;
    const auto scaled = update_phi(inst.net, inst.params, conc, st, d);
    double s = 0;
    for (std::size_t i = 0; i < base.size(); ++i) {
      CHECK(scaled[i] == doctest::Approx(base[i]).epsilon(1e-12));
      s += base[i];
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("holdout dyad is refused") {
    const auto net = grid(2, 2, {}).with_holdout({1, 0, 0, 0});
    const auto params = ModelParams::zeros(1, 1, 1, 1, 0);
    auto st = VariationalState::make(2, 2, 1, 1, true);
    CHECK_THROWS(update_phi(net, params, compute_concentrations(params, net), st, {0, 0}));
  }
}

TEST_CASE("update_phi survives extreme log weights") {
  const auto net = grid(1, 1, {{0, 0}});
  auto params = ModelParams::zeros(2, 2, 1, 1, 0);
  params.b << 800, -800, -800, -800;
  auto st = VariationalState::make(1, 1, 2, 2, true);
  const auto phi = update_phi(net, params, compute_concentrations(params, net), st, {0, 0});
  double s = 0;
  for (double v : phi) {
    CHECK(std::isfinite(v));
    s += v;
  }
  CHECK(s == doctest::Approx(1.0));
  CHECK(phi[0] > 0.99);
}

TEST_CASE("update_phi maximizes the restricted objective") {
  std::mt19937_64 rng(77);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto inst = testing::random_instance(100 + seed);
    const auto conc = inst.conc();
    for (const auto& d : inst.net.observed_dyads()) {
      const auto best = update_phi(inst.net, inst.params, conc, inst.state, d);
      const double f0 = restricted_objective(inst.net, inst.params, conc, inst.state, d, best);
      for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> dir(best.size());
        double mean = 0;
        for (auto& v : dir) mean += v = nd(rng);
        mean /= static_cast<double>(dir.size());
        double norm = 0;
        for (auto& v : dir) norm += (v -= mean) * v;
        norm = std::sqrt(norm);
        if (norm == 0) continue;
        std::vector<double> pert(best.size());
        bool inside = true;
        for (std::size_t i = 0; i < pert.size(); ++i) {
          pert[i] = best[i] + 1e-3 * dir[i] / norm;
          inside = inside && pert[i] >= 0;
        }
        if (!inside) continue;
        CHECK(restricted_objective(inst.net, inst.params, conc, inst.state, d, pert) <= f0 + 1e-12);
      }
    }
  }
}

TEST_CASE("global counts") {
  SUBCASE("uniform phi on 1x2") {
    auto st = VariationalState::make(1, 2, 2, 1, true);
    const std::vector<Dyad> all = {{0, 0}, {0, 1}};
    fill_uniform(st, all);
    recompute_global_counts(st, all);
    CHECK(st.c1(0, 0) == doctest::Approx(1.0));
    CHECK(st.c1(0, 1) == doctest::Approx(1.0));
  }
  SUBCASE("one-hot phi gives incidence tallies") {
    auto st = VariationalState::make(2, 3, 2, 3, true);
    std::vector<Dyad> all;
    for (std::uint32_t p = 0; p < 2; ++p)
      for (std::uint32_t q = 0; q < 3; ++q) {
        all.push_back({p, q});
        auto f = st.phi.slot({p, q});
        std::fill(f.begin(), f.end(), 0.0);
        f[p * 3 + q] = 1.0;
      }
    recompute_global_counts(st, all);
    CHECK(st.c1(0, 0) == 3.0);
    CHECK(st.c1(1, 1) == 3.0);
    CHECK(st.c2(2, 2) == 2.0);
    CHECK(st.c2(0, 1) == 0.0);
  }
  SUBCASE("row sums equal incident observed dyads; exclusion round-trip") {
    testing::InstanceShape shape;
    shape.holdout = 0.3;
    const auto inst = testing::random_instance(5, shape);
    for (std::uint32_t p = 0; p < inst.net.n1(); ++p)
      CHECK(inst.state.c1.row(p).sum() == doctest::Approx(static_cast<double>(inst.net.observed1(p))));
    for (std::uint32_t q = 0; q < inst.net.n2(); ++q)
      CHECK(inst.state.c2.row(q).sum() == doctest::Approx(static_cast<double>(inst.net.observed2(q))));
    for (const auto& d : inst.net.observed_dyads()) {
      auto [row, col] = marginal_counts_excluding(inst.state, d);
      Vector own_r(static_cast<Eigen::Index>(inst.state.k1)), own_c(static_cast<Eigen::Index>(inst.state.k2));
      phi_marginals(inst.state.phi.get(d), inst.state.k1, inst.state.k2, as_span(own_r), as_span(own_c));
      CHECK(((row + own_r).transpose() - inst.state.c1.row(d.p)).cwiseAbs().maxCoeff() < 1e-10);
      CHECK(((col + own_c).transpose() - inst.state.c2.row(d.q)).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("posterior mixed memberships") {
  const auto net = grid(1, 4, {});
  auto params = ModelParams::zeros(2, 1, 1, 1, 0);
  const auto conc = compute_concentrations(params, net);
  auto st = VariationalState::make(1, 4, 2, 1, true);
  SUBCASE("empty counts give the prior") {
    st.c1.setZero();
    const auto mm = posterior_mixed_memberships(conc, st);
    CHECK(mm.pi_hat(0, 0) == doctest::Approx(0.5));
  }
  SUBCASE("direct arithmetic") {
    st.c1 << 3, 1;
    const auto mm = posterior_mixed_memberships(conc, st);
    CHECK(mm.pi_hat(0, 0) == doctest::Approx(2.0 / 3.0));
    CHECK(mm.pi_hat(0, 1) == doctest::Approx(1.0 / 3.0));
  }
  SUBCASE("large concentrations approach prior proportions") {
    params.beta1 << 12.0, 12.0 + std::log(3.0);
    const auto big = compute_concentrations(params, net);
    st.c1 << 4, 0;
    const auto mm = posterior_mixed_memberships(big, st);
    CHECK(mm.pi_hat(0, 0) == doctest::Approx(0.25).epsilon(1e-4));
  }
  SUBCASE("rows sum to one") {
    const auto inst = testing::random_instance(9);
    const auto mm = posterior_mixed_memberships(inst.conc(), inst.state);
    CHECK((mm.pi_hat.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-10);
    CHECK((mm.psi_hat.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("incident marginals recompute missing tables") {
  const auto inst = testing::random_instance(31);
  const auto conc = inst.conc();
  auto sparse_state = inst.state;
  sparse_state.phi.clear();
  const auto m = incident_marginals(inst.net, inst.params, conc, sparse_state, Family::one, 0);
  CHECK(static_cast<std::size_t>(m.rows()) == inst.net.observed1(0));
  for (Eigen::Index r = 0; r < m.rows(); ++r) CHECK(m.row(r).sum() == doctest::Approx(1.0));
}

TEST_CASE("collapsed log joint matches the straight-line oracle") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto inst = testing::random_instance(200 + seed);
    const auto pr = testing::to_problem(inst);
    std::mt19937_64 rng(seed);
    LatentAssignments zu;
    zu.n1 = pr.n1;
    zu.n2 = pr.n2;
    std::vector<int> z, u;
    for (std::size_t i = 0; i < pr.n1 * pr.n2; ++i) {
      z.push_back(static_cast<int>(rng() % pr.k1));
      u.push_back(static_cast<int>(rng() % pr.k2));
      zu.z.push_back(static_cast<std::uint32_t>(z.back()));
      zu.u.push_back(static_cast<std::uint32_t>(u.back()));
    }
    CHECK(collapsed_log_joint(inst.net, inst.params, zu) ==
          doctest::Approx(oracle::collapsed_log_joint(pr, z, u)).epsilon(1e-12));
  }
}
