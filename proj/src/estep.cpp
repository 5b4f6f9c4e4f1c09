#include "bimmsbm/estep.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bimmsbm/simd.hpp"

namespace bimmsbm {

// ---------------------------------------------------------------------------
// PhiTable

PhiTable PhiTable::dense(std::size_t n1, std::size_t n2, std::size_t k1, std::size_t k2, std::size_t memory_cap) {
  const double entries = static_cast<double>(n1) * static_cast<double>(n2) * static_cast<double>(k1 * k2);
  if (entries > static_cast<double>(memory_cap))
    throw ValidationError("batch mode needs " + std::to_string(static_cast<std::uint64_t>(entries)) +
                          " phi entries, above the memory cap of " + std::to_string(memory_cap) +
                          "; use stochastic mode");
  PhiTable t;
  t.dense_ = true;
  t.n1_ = n1;
  t.n2_ = n2;
  t.k1_ = k1;
  t.k2_ = k2;
  t.values_.assign(n1 * n2 * k1 * k2, 0.0);
  t.present_.assign(n1 * n2, 0);
  return t;
}

PhiTable PhiTable::sparse(std::size_t n1, std::size_t n2, std::size_t k1, std::size_t k2) {
  PhiTable t;
  t.n1_ = n1;
  t.n2_ = n2;
  t.k1_ = k1;
  t.k2_ = k2;
  return t;
}

bool PhiTable::contains(Dyad d) const {
  if (dense_) return present_[key(d)] != 0;
  return index_.count(key(d)) != 0;
}

std::span<const double> PhiTable::get(Dyad d) const {
  const auto k = key(d);
  if (dense_) {
    if (!present_[k]) throw std::out_of_range("phi table absent for dyad");
    return {values_.data() + k * cells(), cells()};
  }
  auto it = index_.find(k);
  if (it == index_.end()) throw std::out_of_range("phi table absent for dyad");
  return {values_.data() + it->second, cells()};
}

std::span<double> PhiTable::slot(Dyad d) {
  const auto k = key(d);
  if (dense_) {
    present_[k] = 1;
    return {values_.data() + k * cells(), cells()};
  }
  auto [it, inserted] = index_.emplace(k, values_.size());
  if (inserted) values_.resize(values_.size() + cells(), 0.0);
  return {values_.data() + it->second, cells()};
}

void PhiTable::clear() {
  if (dense_) {
    std::fill(present_.begin(), present_.end(), 0);
  } else {
    index_.clear();
    values_.clear();
  }
}

std::size_t PhiTable::size() const {
  if (dense_) return static_cast<std::size_t>(std::count(present_.begin(), present_.end(), 1));
  return index_.size();
}

VariationalState VariationalState::make(std::size_t n1, std::size_t n2, std::size_t k1, std::size_t k2, bool dense,
                                        std::size_t memory_cap) {
  VariationalState s;
  s.k1 = k1;
  s.k2 = k2;
  s.phi = dense ? PhiTable::dense(n1, n2, k1, k2, memory_cap) : PhiTable::sparse(n1, n2, k1, k2);
  s.c1 = Matrix::Zero(static_cast<Eigen::Index>(n1), static_cast<Eigen::Index>(k1));
  s.c2 = Matrix::Zero(static_cast<Eigen::Index>(n2), static_cast<Eigen::Index>(k2));
  return s;
}

// ---------------------------------------------------------------------------

void phi_marginals(std::span<const double> phi, std::size_t k1, std::size_t k2, std::span<double> row,
                   std::span<double> col) {
  std::fill(col.begin(), col.end(), 0.0);
  for (std::size_t g = 0; g < k1; ++g) {
    const auto cells = phi.subspan(g * k2, k2);
    row[g] = simd::sum(cells);
    simd::axpy(1.0, cells, col);
  }
}

std::pair<Vector, Vector> marginal_counts_excluding(const VariationalState& state, Dyad d) {
  Vector row = state.c1.row(d.p).transpose();
  Vector col = state.c2.row(d.q).transpose();
  if (state.phi.contains(d)) {
    Vector own_row(static_cast<Eigen::Index>(state.k1)), own_col(static_cast<Eigen::Index>(state.k2));
    phi_marginals(state.phi.get(d), state.k1, state.k2, as_span(own_row), as_span(own_col));
    row -= own_row;
    col -= own_col;
  }
  return {row.cwiseMax(0.0), col.cwiseMax(0.0)};
}

namespace {

// log of the unnormalised update, cell by cell
void log_weights(const BipartiteNetwork& net, const ModelParams& params, const DirichletConcentrations& conc,
                 const VariationalState& state, Dyad d, std::span<double> out) {
  const auto [cp, cq] = marginal_counts_excluding(state, d);
  const std::size_t k1 = state.k1, k2 = state.k2;
  const int y = net.y(d.p, d.q);
  const auto dv = net.d(d.p, d.q);
  const double dg = dv.empty() ? 0.0 : simd::dot(dv, as_span(params.gamma));
  for (std::size_t g = 0; g < k1; ++g) {
    const double lp = std::log(conc.alpha1(d.p, static_cast<Eigen::Index>(g)) + cp(static_cast<Eigen::Index>(g)));
    for (std::size_t h = 0; h < k2; ++h) {
      const double lq =
          std::log(conc.alpha2(d.q, static_cast<Eigen::Index>(h)) + cq(static_cast<Eigen::Index>(h)));
      const double theta = clamp_prob(logistic(params.b(static_cast<Eigen::Index>(g), static_cast<Eigen::Index>(h)) + dg));
      out[g * k2 + h] = lp + lq + (y ? std::log(theta) : std::log1p(-theta));
    }
  }
}

}  // namespace

void update_phi(const BipartiteNetwork& net, const ModelParams& params, const DirichletConcentrations& conc,
                const VariationalState& state, Dyad d, std::span<double> out) {
  if (net.is_holdout(d.p, d.q)) throw std::invalid_argument("update_phi called on a holdout dyad");
  log_weights(net, params, conc, state, d, out);
  const double m = simd::max(out);
  if (!std::isfinite(m)) throw NumericalError("phi update: every cell underflowed (corrupt state)");
  for (auto& v : out) v = std::exp(v - m);
  const double total = simd::sum(out);
  if (!(total > 0.0) || !std::isfinite(total)) throw NumericalError("phi update: normaliser not finite");
  simd::scale(1.0 / total, out);
}

std::vector<double> update_phi(const BipartiteNetwork& net, const ModelParams& params,
                               const DirichletConcentrations& conc, const VariationalState& state, Dyad d) {
  std::vector<double> out(state.k1 * state.k2);
  update_phi(net, params, conc, state, d, out);
  return out;
}

double restricted_objective(const BipartiteNetwork& net, const ModelParams& params,
                            const DirichletConcentrations& conc, const VariationalState& state, Dyad d,
                            std::span<const double> phi) {
  std::vector<double> lw(state.k1 * state.k2);
  log_weights(net, params, conc, state, d, lw);
  double value = 0.0;
  for (std::size_t i = 0; i < lw.size(); ++i)
    if (phi[i] > 0.0) value += phi[i] * (lw[i] - std::log(phi[i]));
  return value;
}

Matrix incident_marginals(const BipartiteNetwork& net, const ModelParams& params, const DirichletConcentrations& conc,
                          const VariationalState& state, Family family, std::uint32_t node) {
  const bool one = family == Family::one;
  const std::size_t partners = one ? net.n2() : net.n1();
  const std::size_t k = one ? state.k1 : state.k2;
  Matrix out(static_cast<Eigen::Index>(one ? net.observed1(node) : net.observed2(node)), static_cast<Eigen::Index>(k));
  std::vector<double> buf(state.k1 * state.k2), row(state.k1), col(state.k2);
  Eigen::Index r = 0;
  for (std::uint32_t o = 0; o < partners; ++o) {
    const Dyad d = one ? Dyad{node, o} : Dyad{o, node};
    if (net.is_holdout(d.p, d.q)) continue;
    std::span<const double> phi;
    if (state.phi.contains(d)) {
      phi = state.phi.get(d);
    } else {
      update_phi(net, params, conc, state, d, buf);
      phi = buf;
    }
    phi_marginals(phi, state.k1, state.k2, row, col);
    const auto& src = one ? row : col;
    for (std::size_t g = 0; g < k; ++g) out(r, static_cast<Eigen::Index>(g)) = src[g];
    ++r;
  }
  return out;
}

void recompute_global_counts(VariationalState& state, std::span<const Dyad> dyads) {
  state.c1.setZero();
  state.c2.setZero();
  std::vector<double> row(state.k1), col(state.k2);
  for (const auto& d : dyads) {
    phi_marginals(state.phi.get(d), state.k1, state.k2, row, col);
    simd::axpy(1.0, row, row_span(state.c1, d.p));
    simd::axpy(1.0, col, row_span(state.c2, d.q));
  }
}

namespace {

Matrix predictive(const Matrix& counts, const Matrix& alpha, const Vector& xi) {
  Matrix out(counts.rows(), counts.cols());
  for (Eigen::Index r = 0; r < counts.rows(); ++r) {
    const double denom = counts.row(r).sum() + xi(r);
    out.row(r) = (counts.row(r) + alpha.row(r)) / denom;
  }
  return out;
}

}  // namespace

MixedMemberships posterior_mixed_memberships(const DirichletConcentrations& conc, const VariationalState& state) {
  return {predictive(state.c1, conc.alpha1, conc.xi1), predictive(state.c2, conc.alpha2, conc.xi2)};
}

double collapsed_log_joint(const BipartiteNetwork& net, const ModelParams& params, const LatentAssignments& zu) {
  if (zu.n1 != net.n1() || zu.n2 != net.n2()) throw ValidationError("assignments do not match the network");
  const auto conc = compute_concentrations(params, net);
  Matrix c1 = Matrix::Zero(static_cast<Eigen::Index>(net.n1()), static_cast<Eigen::Index>(params.k1));
  Matrix c2 = Matrix::Zero(static_cast<Eigen::Index>(net.n2()), static_cast<Eigen::Index>(params.k2));
  double loglik = 0.0;
  for (const auto& d : net.observed_dyads()) {
    const auto g = zu.z_at(d.p, d.q), h = zu.u_at(d.p, d.q);
    if (g >= params.k1 || h >= params.k2) throw ValidationError("assignment out of range");
    const double theta = edge_probability(params, g, h, net.d(d.p, d.q));
    loglik += net.y(d.p, d.q) ? std::log(theta) : std::log1p(-theta);
    c1(d.p, g) += 1.0;
    c2(d.q, h) += 1.0;
  }
  const auto dm = [](const Matrix& c, const Matrix& alpha, const Vector& xi) {
    double s = 0.0;
    for (Eigen::Index r = 0; r < c.rows(); ++r) {
      s += std::lgamma(xi(r)) - std::lgamma(xi(r) + c.row(r).sum());
      for (Eigen::Index g = 0; g < c.cols(); ++g) s += std::lgamma(alpha(r, g) + c(r, g)) - std::lgamma(alpha(r, g));
    }
    return s;
  };
  return loglik + dm(c1, conc.alpha1, conc.xi1) + dm(c2, conc.alpha2, conc.xi2);
}

}  // namespace bimmsbm
