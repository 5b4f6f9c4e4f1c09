#include "bimmsbm/uncertainty.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>

#include "bimmsbm/simd.hpp"

namespace bimmsbm {

namespace {

using Idx = Eigen::Index;

}  // namespace

Matrix hessian_gamma(const BipartiteNetwork& net, const ModelParams& params, const PriorSpec& priors,
                     const DirichletConcentrations& conc, const VariationalState& state, HessianWeight weight,
                     std::vector<double>* theta_bar) {
  const auto jd = static_cast<Idx>(net.jd());
  Matrix h = Matrix::Zero(jd, jd);
  if (theta_bar) theta_bar->clear();
  std::vector<double> buf(state.k1 * state.k2);
  for (const auto& d : net.observed_dyads()) {
    std::span<const double> phi;
    if (state.phi.contains(d)) {
      phi = state.phi.get(d);
    } else {
      update_phi(net, params, conc, state, d, buf);
      phi = buf;
    }
    const auto dv = net.d(d.p, d.q);
    const double dg = dv.empty() ? 0.0 : simd::dot(dv, as_span(params.gamma));
    const double eta_bar = simd::dot(phi, as_span(params.b)) + dg;
    const double tb = clamp_prob(logistic(eta_bar));
    if (theta_bar) theta_bar->push_back(tb);
    if (jd == 0) continue;
    double w = 0.0;
    if (weight == HessianWeight::theta_bar) {
      w = tb * (1.0 - tb);
    } else {
      for (std::size_t c = 0; c < phi.size(); ++c) {
        const double th = clamp_prob(logistic(params.b.data()[c] + dg));
        w += phi[c] * th * (1.0 - th);
      }
    }
    simd::rank1_update(-w, dv, dv, as_span(h));
  }
  h.diagonal().array() -= 1.0 / (priors.sigma_gamma * priors.sigma_gamma);
  return h;
}

namespace {

/// Sample mean of f(C) corrected with the control variates C - mu and
/// (C - mu)^2 - var, whose expectations are zero (regression estimator).
double control_variate_mean(const std::vector<double>& f, const std::vector<int>& draws, const Vector& probs) {
  const double mu = probs.sum();
  const double var = (probs.array() * (1.0 - probs.array())).sum();
  const auto n = static_cast<Idx>(f.size());
  Eigen::MatrixXd t(n, 2);
  Eigen::VectorXd y(n);
  for (Idx i = 0; i < n; ++i) {
    const double c = draws[static_cast<std::size_t>(i)] - mu;
    t(i, 0) = c;
    t(i, 1) = c * c - var;
    y(i) = f[static_cast<std::size_t>(i)];
  }
  const double fbar = y.mean();
  if (n < 3) return fbar;
  const Eigen::RowVector2d tbar = t.colwise().mean();
  const Eigen::MatrixXd tc = t.rowwise() - tbar;
  const Eigen::Matrix2d cov = tc.transpose() * tc;
  const Eigen::Vector2d cross = tc.transpose() * (y.array() - fbar).matrix();
  // C constant: nothing to regress on
  if (cov(0, 0) <= 1e-12 * static_cast<double>(n)) return fbar;
  Eigen::Vector2d b = Eigen::Vector2d::Zero();
  const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
  if (det > 1e-10 * cov(0, 0) * cov(1, 1)) {
    b(0) = (cov(1, 1) * cross(0) - cov(0, 1) * cross(1)) / det;
    b(1) = (cov(0, 0) * cross(1) - cov(1, 0) * cross(0)) / det;
  } else {
    // collinear regressors when C takes two values
    b(0) = cross(0) / cov(0, 0);
  }
  if (!b.allFinite()) return fbar;
  return fbar - (tbar * b).value();
}

}  // namespace

std::vector<int> sample_poisson_binomial(std::span<const double> probs, std::size_t s, Rng& rng) {
  std::vector<int> out(s, 0);
  for (auto& v : out)
    for (double p : probs)
      if (uniform01(rng) < p) ++v;
  return out;
}

Matrix hessian_beta(const BipartiteNetwork& net, const ModelParams& params, const PriorSpec& priors,
                    const DirichletConcentrations& conc, const VariationalState& state, Family family, std::size_t s,
                    std::uint64_t seed) {
  using boost::math::digamma;
  using boost::math::trigamma;
  const bool one = family == Family::one;
  const Matrix& design = one ? net.x() : net.w();
  const Matrix& alpha = one ? conc.alpha1 : conc.alpha2;
  const Vector& xi = one ? conc.xi1 : conc.xi2;
  const double sigma = one ? priors.sigma_beta1 : priors.sigma_beta2;
  const Idx k = alpha.cols(), j = design.cols();
  if (s == 0) throw ValidationError("se_samples must be positive");

  Matrix h = Matrix::Zero(k * j, k * j);
  Vector a_same(k);
  for (Idx r = 0; r < design.rows(); ++r) {
    const auto node = static_cast<std::uint32_t>(r);
    const double n = static_cast<double>(one ? net.observed1(node) : net.observed2(node));
    if (n == 0) continue;
    const Matrix marg = incident_marginals(net, params, conc, state, family, node);
    auto rng = make_rng(seed, one ? "se-beta1" : "se-beta2", node);
    const double norm1 = digamma(xi(r)) - digamma(xi(r) + n);
    const double norm2 = trigamma(xi(r)) - trigamma(xi(r) + n);
    for (Idx g = 0; g < k; ++g) {
      const double a = alpha(r, g);
      const Vector probs = marg.col(g);
      const auto draws = sample_poisson_binomial(as_span(probs), s, rng);
      const double psi_a = digamma(a), tri_a = trigamma(a);
      std::vector<double> f(s);
      for (std::size_t i = 0; i < s; ++i) {
        const int c = draws[i];
        f[i] = c == 0 ? 0.0 : a * (digamma(a + c) - psi_a) + a * a * (trigamma(a + c) - tri_a);
      }
      a_same(g) = a * norm1 + a * a * norm2 + control_variate_mean(f, draws, probs);
    }
    const auto x = row_span(design, r);
    for (Idx g = 0; g < k; ++g)
      for (Idx g2 = 0; g2 < k; ++g2) {
        const double w = g == g2 ? a_same(g) : alpha(r, g) * alpha(r, g2) * norm2;
        for (Idx a1 = 0; a1 < j; ++a1)
          for (Idx a2 = 0; a2 < j; ++a2) h(g * j + a1, g2 * j + a2) += w * x[a1] * x[a2];
      }
  }
  h.diagonal().array() -= 1.0 / (sigma * sigma);
  return h;
}

std::optional<Vector> se_from_hessian(const Matrix& h) {
  if (h.rows() == 0) return Vector{};
  Eigen::MatrixXd a = -h;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) {
    a.diagonal().array() += 1e-8 * h.norm();
    llt.compute(a);
    if (llt.info() != Eigen::Success) return std::nullopt;
  }
  const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(a.rows(), a.cols()));
  Vector se = inv.diagonal().cwiseMax(0.0).cwiseSqrt();
  if (!se.allFinite()) return std::nullopt;
  return se;
}

namespace {

Matrix reshape(const Vector& v, Idx rows, Idx cols) {
  Matrix m(rows, cols);
  for (Idx i = 0; i < v.size(); ++i) m.data()[i] = v(i);
  return m;
}

}  // namespace

SEResult standard_errors(const BipartiteNetwork& net, const ModelParams& params, const PriorSpec& priors,
                         const DirichletConcentrations& conc, const VariationalState& state, std::size_t s,
                         std::uint64_t seed, HessianWeight weight) {
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  SEResult r;
  r.hessian_gamma = hessian_gamma(net, params, priors, conc, state, weight, &r.theta_bar);
  r.hessian_beta1 = hessian_beta(net, params, priors, conc, state, Family::one, s, seed);
  r.hessian_beta2 = hessian_beta(net, params, priors, conc, state, Family::two, s, seed);

  const auto sg = se_from_hessian(r.hessian_gamma);
  r.gamma_ok = sg.has_value();
  r.se_gamma = sg ? *sg : Vector::Constant(static_cast<Idx>(net.jd()), nan);

  const auto b1 = se_from_hessian(r.hessian_beta1);
  r.beta1_ok = b1.has_value();
  r.se_beta1 = b1 ? reshape(*b1, params.beta1.rows(), params.beta1.cols())
                  : Matrix::Constant(params.beta1.rows(), params.beta1.cols(), nan);
  const auto b2 = se_from_hessian(r.hessian_beta2);
  r.beta2_ok = b2.has_value();
  r.se_beta2 = b2 ? reshape(*b2, params.beta2.rows(), params.beta2.cols())
                  : Matrix::Constant(params.beta2.rows(), params.beta2.cols(), nan);
  return r;
}

}  // namespace bimmsbm
