#include "bimmsbm/bigraph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "bimmsbm/io.hpp"
#include "bimmsbm/rng.hpp"

namespace bimmsbm {

// ---------------------------------------------------------------------------
// EdgeStore

EdgeStore::EdgeStore(std::size_t n1, std::size_t n2, std::vector<Dyad> edges) : n1_(n1), n2_(n2) {
  std::sort(edges.begin(), edges.end());
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (edges[i].p >= n1 || edges[i].q >= n2) throw ValidationError("edge refers to a node out of range");
    if (i > 0 && edges[i] == edges[i - 1]) throw ValidationError("duplicate edge");
  }
  offsets1_.assign(n1 + 1, 0);
  offsets2_.assign(n2 + 1, 0);
  for (const auto& e : edges) {
    ++offsets1_[e.p + 1];
    ++offsets2_[e.q + 1];
  }
  std::partial_sum(offsets1_.begin(), offsets1_.end(), offsets1_.begin());
  std::partial_sum(offsets2_.begin(), offsets2_.end(), offsets2_.begin());
  adj1_.resize(edges.size());
  adj2_.resize(edges.size());
  std::vector<std::size_t> fill1(offsets1_.begin(), offsets1_.end() - 1);
  std::vector<std::size_t> fill2(offsets2_.begin(), offsets2_.end() - 1);
  // edges sorted by (p, q): both adjacency lists come out sorted
  for (const auto& e : edges) {
    adj1_[fill1[e.p]++] = e.q;
    adj2_[fill2[e.q]++] = e.p;
  }
  const double cells = static_cast<double>(n1) * static_cast<double>(n2);
  if (cells > 0 && static_cast<double>(edges.size()) / cells >= kDenseThreshold) {
    bitmap_.assign(n1 * n2, 0);
    for (const auto& e : edges) bitmap_[std::size_t{e.p} * n2 + e.q] = 1;
  }
}

bool EdgeStore::has_edge(std::uint32_t p, std::uint32_t q) const {
  if (!bitmap_.empty()) return bitmap_[std::size_t{p} * n2_ + q] != 0;
  const auto nb = neighbors1(p);
  return std::binary_search(nb.begin(), nb.end(), q);
}

std::span<const std::uint32_t> EdgeStore::neighbors1(std::uint32_t p) const {
  return {adj1_.data() + offsets1_[p], offsets1_[p + 1] - offsets1_[p]};
}

std::span<const std::uint32_t> EdgeStore::neighbors2(std::uint32_t q) const {
  return {adj2_.data() + offsets2_[q], offsets2_[q + 1] - offsets2_[q]};
}

std::vector<Dyad> EdgeStore::edges() const {
  std::vector<Dyad> out;
  out.reserve(adj1_.size());
  for (std::uint32_t p = 0; p < n1_; ++p)
    for (auto q : neighbors1(p)) out.push_back({p, q});
  return out;
}

// ---------------------------------------------------------------------------
// BipartiteNetwork

namespace {

void check_unique(const std::vector<std::string>& ids, const char* family) {
  std::unordered_map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (!seen.emplace(ids[i], i).second)
      throw ValidationError(std::string("duplicate node id '") + ids[i] + "' in " + family);
}

void check_design(const Matrix& m, std::size_t n, const char* family) {
  if (static_cast<std::size_t>(m.rows()) != n)
    throw ValidationError(std::string("dimension mismatch: ") + family + " covariate rows");
  if (m.cols() < 1) throw ValidationError(std::string(family) + " covariates need an intercept column");
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    if (m(r, 0) != 1.0) throw ValidationError(std::string(family) + " covariates: first column must be 1");
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      if (!std::isfinite(m(r, c))) throw ValidationError(std::string(family) + " covariates: non-finite value");
  }
}

}  // namespace

BipartiteNetwork::BipartiteNetwork(NetworkData data)
    : ids1_(std::move(data.ids1)),
      ids2_(std::move(data.ids2)),
      x_(std::move(data.x)),
      w_(std::move(data.w)),
      d_(std::move(data.d)),
      x_names_(std::move(data.x_names)),
      w_names_(std::move(data.w_names)),
      d_names_(std::move(data.d_names)) {
  check_unique(ids1_, "family1");
  check_unique(ids2_, "family2");
  if (x_.size() == 0) x_ = Matrix::Ones(static_cast<Eigen::Index>(n1()), 1);
  if (w_.size() == 0) w_ = Matrix::Ones(static_cast<Eigen::Index>(n2()), 1);
  check_design(x_, n1(), "family1");
  check_design(w_, n2(), "family2");
  if (d_.values().empty() && d_.jd() == 0) d_ = DyadicCovariates(n1(), n2(), 0);
  if (d_.values().size() != n1() * n2() * d_.jd()) throw ValidationError("dimension mismatch: dyadic covariates");
  if (!x_names_.empty() && x_names_.size() + 1 != j1()) throw ValidationError("dimension mismatch: family1 names");
  if (!w_names_.empty() && w_names_.size() + 1 != j2()) throw ValidationError("dimension mismatch: family2 names");
  if (!d_names_.empty() && d_names_.size() != jd()) throw ValidationError("dimension mismatch: dyadic names");
  for (double v : d_.values())
    if (!std::isfinite(v)) throw ValidationError("dyadic covariates: non-finite value");
  edges_ = EdgeStore(n1(), n2(), std::move(data.edges));
  recount_observed();
}

void BipartiteNetwork::recount_observed() {
  observed1_.assign(n1(), n2());
  observed2_.assign(n2(), n1());
  if (holdout_.empty()) return;
  for (std::uint32_t p = 0; p < n1(); ++p)
    for (std::uint32_t q = 0; q < n2(); ++q)
      if (holdout_[std::size_t{p} * n2() + q]) {
        --observed1_[p];
        --observed2_[q];
      }
}

std::size_t BipartiteNetwork::observed_count() const {
  return std::accumulate(observed1_.begin(), observed1_.end(), std::size_t{0});
}

std::vector<Dyad> BipartiteNetwork::observed_dyads() const {
  std::vector<Dyad> out;
  out.reserve(observed_count());
  for (std::uint32_t p = 0; p < n1(); ++p)
    for (std::uint32_t q = 0; q < n2(); ++q)
      if (!is_holdout(p, q)) out.push_back({p, q});
  return out;
}

std::vector<Dyad> BipartiteNetwork::holdout_dyads() const {
  std::vector<Dyad> out;
  for (std::uint32_t p = 0; p < n1(); ++p)
    for (std::uint32_t q = 0; q < n2(); ++q)
      if (is_holdout(p, q)) out.push_back({p, q});
  return out;
}

BipartiteNetwork BipartiteNetwork::with_holdout(std::vector<std::uint8_t> mask) const {
  if (!mask.empty() && mask.size() != dyad_count()) throw ValidationError("holdout mask has wrong size");
  BipartiteNetwork copy = *this;
  copy.holdout_ = std::move(mask);
  copy.recount_observed();
  return copy;
}

std::optional<std::uint32_t> BipartiteNetwork::index1(const std::string& id) const {
  auto it = std::find(ids1_.begin(), ids1_.end(), id);
  if (it == ids1_.end()) return std::nullopt;
  return static_cast<std::uint32_t>(it - ids1_.begin());
}

std::optional<std::uint32_t> BipartiteNetwork::index2(const std::string& id) const {
  auto it = std::find(ids2_.begin(), ids2_.end(), id);
  if (it == ids2_.end()) return std::nullopt;
  return static_cast<std::uint32_t>(it - ids2_.begin());
}

// ---------------------------------------------------------------------------
// CSV ingestion

namespace {

struct Monadic {
  std::vector<std::string> ids;
  std::vector<std::string> names;
  Matrix design;  // with intercept
};

Monadic read_monadic(const std::filesystem::path& path) {
  const auto table = io::read_csv(path);
  if (table.header.empty() || table.header[0] != "id")
    throw ValidationError(table.source + ": header must start with 'id'");
  Monadic m;
  m.names.assign(table.header.begin() + 1, table.header.end());
  const auto n = static_cast<Eigen::Index>(table.rows.size());
  const auto j = static_cast<Eigen::Index>(table.header.size());
  m.design = Matrix::Ones(n, j);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    m.ids.push_back(table.rows[r][0]);
    if (m.ids.back().empty()) throw ValidationError(table.source + ": malformed row (empty id)");
    for (Eigen::Index c = 1; c < j; ++c)
      m.design(static_cast<Eigen::Index>(r), c) = io::parse_double(table.rows[r][c], table, r);
  }
  return m;
}

std::unordered_map<std::string, std::uint32_t> index_of(const std::vector<std::string>& ids, const char* family) {
  std::unordered_map<std::string, std::uint32_t> idx;
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (!idx.emplace(ids[i], static_cast<std::uint32_t>(i)).second)
      throw ValidationError(std::string("duplicate node id '") + ids[i] + "' in " + family);
  return idx;
}

std::uint32_t lookup(const std::unordered_map<std::string, std::uint32_t>& idx, const std::string& id,
                     const io::CsvTable& table, std::size_t row, const char* family) {
  auto it = idx.find(id);
  if (it == idx.end())
    throw ValidationError(table.source + ":" + std::to_string(table.line_numbers[row]) + ": unknown node '" + id +
                          "' (" + family + ")");
  return it->second;
}

void check_pair_header(const io::CsvTable& table) {
  if (table.header.size() < 2 || table.header[0] != "family1_id" || table.header[1] != "family2_id")
    throw ValidationError(table.source + ": header must start with 'family1_id,family2_id'");
}

}  // namespace

BipartiteNetwork load_network(const NetworkPaths& paths) {
  NetworkData data;
  auto m1 = read_monadic(paths.family1);
  auto m2 = read_monadic(paths.family2);
  const auto idx1 = index_of(m1.ids, "family1");
  const auto idx2 = index_of(m2.ids, "family2");
  const std::size_t n1 = m1.ids.size(), n2 = m2.ids.size();

  const auto et = io::read_csv(paths.edges);
  check_pair_header(et);
  if (et.header.size() != 3 || et.header[2] != "y")
    throw ValidationError(et.source + ": header must be 'family1_id,family2_id,y'");
  std::unordered_map<std::uint64_t, int> seen;
  for (std::size_t r = 0; r < et.rows.size(); ++r) {
    const auto p = lookup(idx1, et.rows[r][0], et, r, "family1");
    const auto q = lookup(idx2, et.rows[r][1], et, r, "family2");
    const auto& yv = et.rows[r][2];
    int y;
    if (yv == "1") {
      y = 1;
    } else if (yv == "0") {
      y = 0;
    } else {
      const double v = io::parse_double(yv, et, r);
      if (v != 0.0 && v != 1.0)
        throw ValidationError(et.source + ":" + std::to_string(et.line_numbers[r]) + ": non-binary edge value '" +
                              yv + "'");
      y = static_cast<int>(v);
    }
    const std::uint64_t key = std::uint64_t{p} * n2 + q;
    auto [it, inserted] = seen.emplace(key, y);
    if (!inserted) {
      if (it->second != y)
        throw ValidationError(et.source + ":" + std::to_string(et.line_numbers[r]) + ": conflicting duplicate dyad");
      continue;
    }
    if (y == 1) data.edges.push_back({p, q});
  }

  if (paths.dyadic) {
    const auto dt = io::read_csv(*paths.dyadic);
    check_pair_header(dt);
    data.d_names.assign(dt.header.begin() + 2, dt.header.end());
    data.d = DyadicCovariates(n1, n2, data.d_names.size());
    std::vector<std::uint8_t> filled(n1 * n2, 0);
    for (std::size_t r = 0; r < dt.rows.size(); ++r) {
      const auto p = lookup(idx1, dt.rows[r][0], dt, r, "family1");
      const auto q = lookup(idx2, dt.rows[r][1], dt, r, "family2");
      if (filled[std::size_t{p} * n2 + q]++)
        throw ValidationError(dt.source + ":" + std::to_string(dt.line_numbers[r]) + ": duplicate dyadic row");
      auto dst = data.d.at(p, q);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = io::parse_double(dt.rows[r][j + 2], dt, r);
    }
  } else {
    data.d = DyadicCovariates(n1, n2, 0);
  }

  data.ids1 = std::move(m1.ids);
  data.ids2 = std::move(m2.ids);
  data.x = std::move(m1.design);
  data.w = std::move(m2.design);
  data.x_names = std::move(m1.names);
  data.w_names = std::move(m2.names);
  return BipartiteNetwork(std::move(data));
}

namespace {

std::string monadic_csv(const std::vector<std::string>& ids, const std::vector<std::string>& names, const Matrix& m) {
  std::ostringstream out;
  out << "id";
  for (Eigen::Index c = 1; c < m.cols(); ++c) {
    const auto idx = static_cast<std::size_t>(c - 1);
    out << ',' << io::csv_escape(idx < names.size() ? names[idx] : "cov" + std::to_string(c));
  }
  out << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    out << io::csv_escape(ids[static_cast<std::size_t>(r)]);
    for (Eigen::Index c = 1; c < m.cols(); ++c) out << ',' << io::format_double(m(r, c));
    out << '\n';
  }
  return out.str();
}

}  // namespace

void save_network(const BipartiteNetwork& net, const NetworkPaths& paths) {
  std::ostringstream e;
  e << "family1_id,family2_id,y\n";
  for (const auto& d : net.edges().edges())
    e << io::csv_escape(net.ids1()[d.p]) << ',' << io::csv_escape(net.ids2()[d.q]) << ",1\n";
  io::write_file_atomic(paths.edges, e.str());
  io::write_file_atomic(paths.family1, monadic_csv(net.ids1(), net.x_names(), net.x()));
  io::write_file_atomic(paths.family2, monadic_csv(net.ids2(), net.w_names(), net.w()));
  if (paths.dyadic) {
    std::ostringstream d;
    d << "family1_id,family2_id";
    for (std::size_t j = 0; j < net.jd(); ++j)
      d << ',' << io::csv_escape(j < net.d_names().size() ? net.d_names()[j] : "dcov" + std::to_string(j + 1));
    d << '\n';
    for (std::uint32_t p = 0; p < net.n1(); ++p)
      for (std::uint32_t q = 0; q < net.n2(); ++q) {
        const auto v = net.d(p, q);
        if (std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; })) continue;
        d << io::csv_escape(net.ids1()[p]) << ',' << io::csv_escape(net.ids2()[q]);
        for (double x : v) d << ',' << io::format_double(x);
        d << '\n';
      }
    io::write_file_atomic(*paths.dyadic, d.str());
  }
}

// ---------------------------------------------------------------------------

Projection project_unipartite(const BipartiteNetwork& net, Family family) {
  const auto& es = net.edges();
  Projection proj;
  const bool one = family == Family::one;
  proj.n = one ? net.n1() : net.n2();
  proj.counts.assign(proj.n * proj.n, 0);
  const std::size_t others = one ? net.n2() : net.n1();
  for (std::uint32_t o = 0; o < others; ++o) {
    const auto nb = one ? es.neighbors2(o) : es.neighbors1(o);
    for (auto a : nb)
      for (auto b : nb) ++proj.counts[std::size_t{a} * proj.n + b];
  }
  return proj;
}

BipartiteNetwork split_holdout(const BipartiteNetwork& net, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ValidationError("holdout fraction must lie in (0, 1)");
  const std::size_t total = net.dyad_count();
  const auto count = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(total)));
  std::vector<std::uint32_t> order(total);
  std::iota(order.begin(), order.end(), 0u);
  Rng rng = make_rng(seed, "holdout");
  // partial Fisher-Yates: the first `count` slots are a uniform sample
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + uniform_index(rng, total - i);
    std::swap(order[i], order[j]);
  }
  std::vector<std::uint8_t> mask(total, 0);
  for (std::size_t i = 0; i < count; ++i) mask[order[i]] = 1;
  return net.with_holdout(std::move(mask));
}

DyadTable load_dyad_table(const std::filesystem::path& path, const std::vector<std::string>& ids1,
                          const std::vector<std::string>& ids2) {
  const auto table = io::read_csv(path);
  check_pair_header(table);
  const auto idx1 = index_of(ids1, "family1");
  const auto idx2 = index_of(ids2, "family2");
  DyadTable out;
  out.d_names.assign(table.header.begin() + 2, table.header.end());
  out.d = DyadicCovariates(table.rows.size(), 1, out.d_names.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto p = lookup(idx1, table.rows[r][0], table, r, "family1");
    const auto q = lookup(idx2, table.rows[r][1], table, r, "family2");
    out.dyads.push_back({p, q});
    out.ids1.push_back(table.rows[r][0]);
    out.ids2.push_back(table.rows[r][1]);
    auto dst = out.d.at(static_cast<std::uint32_t>(r), 0);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] = io::parse_double(table.rows[r][j + 2], table, r);
  }
  return out;
}

}  // namespace bimmsbm
