#include <doctest.h>

#include <cmath>

#include "bimmsbm/simulate.hpp"

using namespace bimmsbm;

TEST_CASE("scenario tables") {
  const auto easy = scenario("easy", "small");
  CHECK(easy.n1 == 100);
  CHECK(easy.n2 == 200);
  CHECK(easy.blockmodel_probs(0, 0) == 0.85);
  CHECK(easy.blockmodel_probs(0, 1) == 0.01);
  CHECK(easy.blockmodel_probs(1, 0) == 0.01);
  CHECK(easy.blockmodel_probs(1, 1) == 0.99);

  const auto med = scenario("medium", "large");
  CHECK(med.n1 == 1000);
  CHECK(med.n2 == 2000);
  Matrix bm(2, 2), mc(2, 2);
  bm << 0.65, 0.35, 0.20, 0.75;
  mc << 0.05, 0.75, -0.75, -1.00;
  CHECK(med.blockmodel_probs == bm);
  CHECK(med.monadic_coefs == mc);

  const auto hard = scenario("hard", "small");
  Matrix hb(2, 2);
  hb << 0.65, 0.40, 0.50, 0.45;
  CHECK(hard.blockmodel_probs == hb);
  CHECK(hard.monadic_sd == 1.5);

  CHECK_THROWS_AS(scenario("trivial", "small"), ValidationError);
  CHECK_THROWS_AS(scenario("easy", "medium"), ValidationError);
}

TEST_CASE("scenario parameters") {
  const auto s = scenario("medium", "small");
  const auto p = s.params();
  CHECK(p.b(1, 0) == doctest::Approx(std::log(0.2 / 0.8)));
  CHECK(p.beta1 == s.monadic_coefs.transpose());
  CHECK(p.beta2 == p.beta1);
  REQUIRE(p.gamma.size() == 1);
  CHECK(p.gamma(0) == 0.0);
}

TEST_CASE("saturated probability gives a complete network") {
  auto p = ModelParams::zeros(1, 1, 1, 1, 0);
  p.b(0, 0) = 1e4;
  const auto sim = simulate_network(p, 6, 9, 1);
  CHECK(sim.net.edges().edge_count() == 54);
}

TEST_CASE("density at probability one half") {
  auto p = ModelParams::zeros(2, 3, 2, 2, 1);
  const std::size_t n1 = 60, n2 = 80;
  const auto sim = simulate_network(p, n1, n2, 7);
  const double n = static_cast<double>(n1 * n2);
  const double links = static_cast<double>(sim.net.edges().edge_count());
  CHECK(std::abs(links - 0.5 * n) < 3.0 * std::sqrt(n * 0.25));
}

TEST_CASE("same seed, same draw") {
  const auto spec = scenario("easy", "small");
  const auto a = simulate_network(spec, 3);
  const auto b = simulate_network(spec, 3);
  CHECK(a.net.edges().edges() == b.net.edges().edges());
  CHECK(a.net.x() == b.net.x());
  CHECK(a.truth.pi == b.truth.pi);
  CHECK(a.truth.zu.z == b.truth.zu.z);
  const auto c = simulate_network(spec, 4);
  CHECK(a.net.edges().edges() != c.net.edges().edges());
}

TEST_CASE("drawn network shape and covariates") {
  const auto sim = simulate_network(scenario("easy", "small"), 2);
  const auto& net = sim.net;
  CHECK(net.n1() == 100);
  CHECK(net.n2() == 200);
  CHECK(net.j1() == 2);
  CHECK(net.jd() == 1);
  CHECK((net.x().col(0).array() == 1.0).all());
  const Vector x = net.x().col(1);
  const double sd = std::sqrt((x.array() - x.mean()).square().sum() / (x.size() - 1));
  CHECK(sd == doctest::Approx(1.5).epsilon(0.2));
  for (Eigen::Index r = 0; r < sim.truth.pi.rows(); ++r) CHECK(sim.truth.pi.row(r).sum() == doctest::Approx(1.0));
  for (Eigen::Index r = 0; r < sim.truth.psi.rows(); ++r) CHECK(sim.truth.psi.row(r).sum() == doctest::Approx(1.0));
}

TEST_CASE("cell edge frequencies match the block probabilities") {
  const auto spec = scenario("medium", "small");
  const auto sim = simulate_network(spec, 8);
  Matrix links = Matrix::Zero(2, 2), dyads = Matrix::Zero(2, 2);
  for (std::uint32_t p = 0; p < sim.net.n1(); ++p)
    for (std::uint32_t q = 0; q < sim.net.n2(); ++q) {
      const auto g = sim.truth.zu.z_at(p, q), h = sim.truth.zu.u_at(p, q);
      dyads(g, h) += 1;
      links(g, h) += sim.net.y(p, q);
    }
  for (Eigen::Index g = 0; g < 2; ++g)
    for (Eigen::Index h = 0; h < 2; ++h) {
      // gamma = 0, so theta is the table value
      const double th = spec.blockmodel_probs(g, h), n = dyads(g, h);
      REQUIRE(n > 100);
      CHECK(std::abs(links(g, h) / n - th) < 3.0 * std::sqrt(th * (1 - th) / n));
    }
}

TEST_CASE("Dirichlet draws") {
  auto rng = make_rng(5, "dir");
  const std::vector<double> alpha = {0.01, 0.5, 2.0};
  Vector mean = Vector::Zero(3);
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const auto v = sample_dirichlet(alpha, rng);
    CHECK(v.sum() == doctest::Approx(1.0));
    CHECK((v.array() >= 0).all());
    mean += v;
  }
  mean /= n;
  const double xi = 2.51;
  for (int k = 0; k < 3; ++k) {
    const double m = alpha[k] / xi, var = m * (1 - m) / (xi + 1);
    CHECK(std::abs(mean(k) - m) < 4.0 * std::sqrt(var / n));
  }
  // concentrations far below one stay finite and normalised
  const auto tiny = sample_dirichlet(std::vector<double>{1e-4, 1e-4}, rng);
  CHECK(std::isfinite(tiny(0)));
  CHECK(tiny.sum() == doctest::Approx(1.0));
}

TEST_CASE("supplied memberships are used as is") {
  const auto base = simulate_network(scenario("easy", "small"), 9);
  NetworkData cov;
  cov.ids1 = base.net.ids1();
  cov.ids2 = base.net.ids2();
  cov.x = base.net.x();
  cov.w = base.net.w();
  cov.d = base.net.dyadic();
  const auto r = simulate_with_covariates(base.truth.params, cov, 1, &base.truth.pi, &base.truth.psi);
  CHECK(r.truth.pi == base.truth.pi);
  CHECK(r.net.x() == base.net.x());
}

TEST_CASE("truth JSON round-trips") {
  const auto sim = simulate_network(scenario("hard", "small"), 6);
  const auto j = truth_to_json(sim.truth, "hard");
  CHECK(j.at("scenario") == "hard");
  const auto back = truth_from_json(nlohmann::json::parse(j.dump()));
  CHECK(back.pi == sim.truth.pi);
  CHECK(back.psi == sim.truth.psi);
  CHECK(back.zu.z == sim.truth.zu.z);
  CHECK(back.zu.u == sim.truth.zu.u);
  CHECK(back.params.b == sim.truth.params.b);
}
