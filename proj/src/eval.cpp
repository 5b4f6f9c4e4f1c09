#include "bimmsbm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <sstream>

#include "bimmsbm/io.hpp"
#include "bimmsbm/simd.hpp"
#include "bimmsbm/simulate.hpp"
#include "parallel.hpp"

namespace bimmsbm {

namespace {

using Idx = Eigen::Index;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ValidationError("auroc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // midranks over tie groups
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) {
        rank_sum += mid;
        ++n_pos;
      }
    i = j;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw ValidationError("auroc needs at least one positive and one negative label");
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double predict_score(const FittedModel& model, std::uint32_t p, std::uint32_t q, std::span<const double> d) {
  const auto& params = model.params;
  const double dg = d.empty() ? 0.0 : simd::dot(d, as_span(params.gamma));
  double s = 0.0;
  for (Idx g = 0; g < params.b.rows(); ++g)
    for (Idx h = 0; h < params.b.cols(); ++h)
      s += model.pi_hat(p, g) * model.psi_hat(q, h) * clamp_prob(logistic(params.b(g, h) + dg));
  return s;
}

std::vector<double> predict_edges(const BipartiteNetwork& net, const FittedModel& model, std::span<const Dyad> dyads) {
  if (static_cast<std::size_t>(model.pi_hat.rows()) < net.n1() ||
      static_cast<std::size_t>(model.psi_hat.rows()) < net.n2())
    throw ValidationError("unknown node: network larger than the fitted model");
  std::vector<double> out;
  out.reserve(dyads.size());
  for (const auto& d : dyads) out.push_back(predict_score(model, d.p, d.q, net.d(d.p, d.q)));
  return out;
}

double pearson(std::span<const double> a, std::span<const double> b) {
  const std::size_t n = a.size();
  if (n == 0 || b.size() != n) return kNaN;
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return kNaN;
  return sab / std::sqrt(saa * sbb);
}

namespace {

std::vector<double> column(const Matrix& m, Idx c) {
  std::vector<double> v(static_cast<std::size_t>(m.rows()));
  for (Idx r = 0; r < m.rows(); ++r) v[static_cast<std::size_t>(r)] = m(r, c);
  return v;
}

}  // namespace

ColumnAlignment align_columns(const Matrix& true_mix, const Matrix& est_mix) {
  const auto k = static_cast<std::size_t>(true_mix.cols());
  if (static_cast<std::size_t>(est_mix.cols()) != k || true_mix.rows() != est_mix.rows())
    throw ValidationError("alignment needs matching shapes");
  if (k > 8) throw ValidationError("alignment supports at most 8 groups");
  Matrix cost(static_cast<Idx>(k), static_cast<Idx>(k));
  for (std::size_t i = 0; i < k; ++i) {
    const auto t = column(true_mix, static_cast<Idx>(i));
    for (std::size_t j = 0; j < k; ++j) {
      const double r = pearson(t, column(est_mix, static_cast<Idx>(j)));
      cost(static_cast<Idx>(i), static_cast<Idx>(j)) = std::isnan(r) ? 1.0 : 1.0 - r;
    }
  }
  std::vector<std::size_t> perm(k);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  ColumnAlignment best{perm, std::numeric_limits<double>::infinity()};
  do {
    double c = 0.0;
    for (std::size_t i = 0; i < k; ++i) c += cost(static_cast<Idx>(i), static_cast<Idx>(perm[i]));
    if (c < best.cost - 1e-15) best = {perm, c};
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

Alignment align_labels(const Matrix& true1, const Matrix& est1, const Matrix& true2, const Matrix& est2) {
  const auto a = align_columns(true1, est1);
  const auto b = align_columns(true2, est2);
  return {a.perm, b.perm, a.cost + b.cost};
}

Recovery membership_recovery(const Matrix& true_mix, const Matrix& est_mix) {
  const auto al = align_columns(true_mix, est_mix);
  Recovery r;
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t k = 0; k < al.perm.size(); ++k) {
    const double c = pearson(column(true_mix, static_cast<Idx>(k)), column(est_mix, static_cast<Idx>(al.perm[k])));
    r.correlations.push_back(c);
    if (std::isnan(c)) {
      ++r.excluded;
    } else {
      total += c;
      ++used;
    }
  }
  r.mean_correlation = used ? total / static_cast<double>(used) : kNaN;
  return r;
}

// ---------------------------------------------------------------------------
// Goodness of fit

namespace {

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// Bins of width w over [0, 20 w) plus an overflow bin; optionally an
// "inf" bin for negative (unreachable) values. Geodesics start at 1.
struct Binner {
  std::int64_t width = 1, first = 0, count = 20;
  bool with_inf = false;

  static Binner for_max(std::int64_t max_value, std::int64_t first = 0, bool with_inf = false) {
    Binner b;
    b.first = first;
    const std::int64_t span = std::max<std::int64_t>(0, max_value - first) + 1;
    b.width = (span + 19) / 20;
    b.with_inf = with_inf;
    return b;
  }
  std::size_t size() const { return static_cast<std::size_t>(count + 1 + (with_inf ? 1 : 0)); }
  std::size_t index(std::int64_t v) const {
    if (v < 0) return static_cast<std::size_t>(count + 1);  // inf bin
    const std::int64_t i = (v - first) / width;
    return static_cast<std::size_t>(std::clamp<std::int64_t>(i, 0, count));
  }
  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    for (std::int64_t i = 0; i < count; ++i) {
      const auto lo = first + i * width;
      out.push_back(width == 1 ? std::to_string(lo) : std::to_string(lo) + "-" + std::to_string(lo + width - 1));
    }
    out.push_back(">=" + std::to_string(first + count * width));
    if (with_inf) out.push_back("inf");
    return out;
  }
  template <class T>
  std::vector<double> histogram(const std::vector<T>& values) const {
    std::vector<double> h(size(), 0.0);
    for (auto v : values) h[index(static_cast<std::int64_t>(v))] += 1.0;
    return h;
  }
};

template <class T>
DistributionTable make_table(std::string statistic, std::string family, const Binner& binner,
                             const std::vector<T>& observed, const std::vector<std::vector<T>>& reps) {
  DistributionTable t;
  t.statistic = std::move(statistic);
  t.family = std::move(family);
  t.bins = binner.labels();
  t.observed = binner.histogram(observed);
  t.replicates.resize(static_cast<Idx>(reps.size()), static_cast<Idx>(binner.size()));
  for (std::size_t r = 0; r < reps.size(); ++r) {
    const auto h = binner.histogram(reps[r]);
    for (std::size_t b = 0; b < h.size(); ++b) t.replicates(static_cast<Idx>(r), static_cast<Idx>(b)) = h[b];
  }
  return t;
}

template <class T>
std::int64_t max_of(const std::vector<T>& v) {
  std::int64_t m = 0;
  for (auto x : v) m = std::max<std::int64_t>(m, static_cast<std::int64_t>(x));
  return m;
}

NetworkData covariates_of(const BipartiteNetwork& net) {
  NetworkData d;
  d.ids1 = net.ids1();
  d.ids2 = net.ids2();
  d.x = net.x();
  d.w = net.w();
  d.d = net.dyadic();
  d.x_names = net.x_names();
  d.w_names = net.w_names();
  d.d_names = net.d_names();
  return d;
}

}  // namespace

double DistributionTable::coverage(double level) const {
  const double lo_q = (1.0 - level) / 2.0, hi_q = 1.0 - lo_q;
  std::size_t occupied = 0, inside = 0;
  for (std::size_t b = 0; b < observed.size(); ++b) {
    std::vector<double> col(static_cast<std::size_t>(replicates.rows()));
    bool any = observed[b] > 0;
    for (Idx r = 0; r < replicates.rows(); ++r) {
      col[static_cast<std::size_t>(r)] = replicates(r, static_cast<Idx>(b));
      any = any || col[static_cast<std::size_t>(r)] > 0;
    }
    if (!any || col.empty()) continue;
    ++occupied;
    if (observed[b] >= quantile(col, lo_q) && observed[b] <= quantile(col, hi_q)) ++inside;
  }
  return occupied ? static_cast<double>(inside) / static_cast<double>(occupied) : 1.0;
}

std::vector<std::size_t> degrees(const BipartiteNetwork& net, Family family) {
  const bool one = family == Family::one;
  std::vector<std::size_t> d(one ? net.n1() : net.n2());
  for (std::uint32_t i = 0; i < d.size(); ++i) d[i] = one ? net.edges().degree1(i) : net.edges().degree2(i);
  return d;
}

std::vector<std::int64_t> shared_partner_counts(const BipartiteNetwork& net, Family family) {
  const auto proj = project_unipartite(net, family);
  std::vector<std::int64_t> out;
  out.reserve(proj.n * (proj.n - (proj.n > 0)) / 2);
  for (std::size_t i = 0; i < proj.n; ++i)
    for (std::size_t j = i + 1; j < proj.n; ++j) out.push_back(proj.at(i, j));
  return out;
}

std::vector<int> geodesic_distances(const BipartiteNetwork& net) {
  const std::size_t n1 = net.n1(), n = n1 + net.n2();
  std::vector<int> out;
  out.reserve(n * (n - (n > 0)) / 2);
  std::vector<int> dist(n);
  std::vector<std::uint32_t> queue(n);
  for (std::size_t s = 0; s < n; ++s) {
    std::fill(dist.begin(), dist.end(), -1);
    dist[s] = 0;
    std::size_t head = 0, tail = 0;
    queue[tail++] = static_cast<std::uint32_t>(s);
    while (head < tail) {
      const auto v = queue[head++];
      const auto visit = [&](std::size_t w) {
        if (dist[w] < 0) {
          dist[w] = dist[v] + 1;
          queue[tail++] = static_cast<std::uint32_t>(w);
        }
      };
      if (v < n1) {
        for (auto q : net.edges().neighbors1(v)) visit(n1 + q);
      } else {
        for (auto p : net.edges().neighbors2(static_cast<std::uint32_t>(v - n1))) visit(p);
      }
    }
    for (std::size_t t = s + 1; t < n; ++t) out.push_back(dist[t]);
  }
  return out;
}

GofReport gof(const BipartiteNetwork& net, const FittedModel& model, std::size_t replicates, std::uint64_t seed,
              std::size_t threads) {
  if (replicates == 0) throw ValidationError("gof needs at least one replicate");
  model.params.check_compatible(net);
  const auto cov = covariates_of(net);

  struct Stats {
    std::vector<std::size_t> deg1, deg2;
    std::vector<std::int64_t> sp1, sp2;
    std::vector<int> geo;
  };
  const auto stats_of = [](const BipartiteNetwork& g) {
    return Stats{degrees(g, Family::one), degrees(g, Family::two), shared_partner_counts(g, Family::one),
                 shared_partner_counts(g, Family::two), geodesic_distances(g)};
  };
  const Stats obs = stats_of(net);
  std::vector<Stats> reps(replicates);
  detail::parallel_for(replicates, threads, [&](std::size_t r) {
    const auto sim = simulate_with_covariates(model.params, cov, derive_seed(seed, "gof", r), &model.pi_hat,
                                              &model.psi_hat);
    reps[r] = stats_of(sim.net);
  });

  const auto collect = [&](auto member) {
    using T = typename std::decay_t<decltype(obs.*member)>::value_type;
    std::vector<std::vector<T>> out;
    out.reserve(reps.size());
    for (const auto& s : reps) out.push_back(s.*member);
    return out;
  };
  GofReport rep;
  rep.replicate_count = replicates;
  rep.degree1 = make_table("degree", "family1", Binner::for_max(max_of(obs.deg1)), obs.deg1, collect(&Stats::deg1));
  rep.degree2 = make_table("degree", "family2", Binner::for_max(max_of(obs.deg2)), obs.deg2, collect(&Stats::deg2));
  rep.shared1 =
      make_table("shared_partners", "family1", Binner::for_max(max_of(obs.sp1)), obs.sp1, collect(&Stats::sp1));
  rep.shared2 =
      make_table("shared_partners", "family2", Binner::for_max(max_of(obs.sp2)), obs.sp2, collect(&Stats::sp2));
  rep.geodesics =
      make_table("geodesic", "all", Binner::for_max(max_of(obs.geo), 1, true), obs.geo, collect(&Stats::geo));
  return rep;
}

// ---------------------------------------------------------------------------
// Model selection

SelectKResult select_k(const BipartiteNetwork& net, const std::vector<std::size_t>& k1_range,
                       const std::vector<std::size_t>& k2_range, const FitConfig& config, const PriorSpec* priors,
                       double holdout_fraction) {
  if (k1_range.empty() || k2_range.empty()) throw ValidationError("select-k needs non-empty ranges");
  const BipartiteNetwork train = net.has_holdout() ? net : split_holdout(net, holdout_fraction, derive_seed(config.seed, "holdout"));
  const auto held = train.holdout_dyads();
  std::vector<int> labels;
  labels.reserve(held.size());
  for (const auto& d : held) labels.push_back(train.y(d.p, d.q));

  SelectKResult res;
  double best = -1.0;
  for (auto k1 : k1_range)
    for (auto k2 : k2_range) {
      SelectKCell cell{k1, k2, kNaN, ""};
      try {
        FitConfig c = config;
        c.k1 = k1;
        c.k2 = k2;
        c.compute_se = false;
        const auto pr = priors ? *priors : PriorSpec::defaults(k1, k2);
        const auto fitted = fit(train, c, pr);
        const auto scores = predict_edges(train, FittedModel::from(fitted), held);
        cell.auroc = auroc(scores, labels);
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
      if (!std::isnan(cell.auroc)) {
        const auto size = k1 + k2;
        const auto best_size = res.best_k1 + res.best_k2;
        if (cell.auroc > best || (cell.auroc == best && (size < best_size || (size == best_size && k1 < res.best_k1)))) {
          best = cell.auroc;
          res.best_k1 = k1;
          res.best_k2 = k2;
        }
      }
      res.cells.push_back(std::move(cell));
    }
  return res;
}

// ---------------------------------------------------------------------------
// CSV

std::string memberships_csv(const std::vector<std::string>& ids, const Matrix& mix) {
  std::ostringstream os;
  os << "id";
  for (Idx g = 0; g < mix.cols(); ++g) os << ",group" << (g + 1);
  os << '\n';
  for (Idx r = 0; r < mix.rows(); ++r) {
    os << io::csv_escape(ids[static_cast<std::size_t>(r)]);
    for (Idx g = 0; g < mix.cols(); ++g) os << ',' << io::format_double(mix(r, g));
    os << '\n';
  }
  return os.str();
}

std::string distribution_csv(const std::vector<const DistributionTable*>& tables) {
  std::ostringstream os;
  os << "statistic,family,bin,observed,replicate_mean,q05,q50,q95\n";
  for (const auto* t : tables) {
    for (std::size_t b = 0; b < t->bins.size(); ++b) {
      std::vector<double> col(static_cast<std::size_t>(t->replicates.rows()));
      for (Idx r = 0; r < t->replicates.rows(); ++r) col[static_cast<std::size_t>(r)] = t->replicates(r, static_cast<Idx>(b));
      const double mean = col.empty() ? kNaN : std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(col.size());
      os << t->statistic << ',' << t->family << ',' << io::csv_escape(t->bins[b]) << ','
         << io::format_double(t->observed[b]) << ',' << io::format_double(mean) << ','
         << io::format_double(col.empty() ? kNaN : quantile(col, 0.05)) << ','
         << io::format_double(col.empty() ? kNaN : quantile(col, 0.5)) << ','
         << io::format_double(col.empty() ? kNaN : quantile(col, 0.95)) << '\n';
    }
  }
  return os.str();
}

std::string grid_csv(const SelectKResult& r) {
  std::ostringstream os;
  os << "k1,k2,auroc,error\n";
  for (const auto& c : r.cells)
    os << c.k1 << ',' << c.k2 << ',' << (std::isnan(c.auroc) ? std::string("NA") : io::format_double(c.auroc)) << ','
       << io::csv_escape(c.error) << '\n';
  return os.str();
}

}  // namespace bimmsbm
