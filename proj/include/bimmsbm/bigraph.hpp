#pragma once
// Bipartite network data model and CSV ingestion.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bimmsbm/types.hpp"

namespace bimmsbm {

/// Binary N1 x N2 edge set. Adjacency lists are always kept (sampling and
/// graph traversal need them); a dense bitmap is added when the density is at
/// least `kDenseThreshold`. `has_edge` hides which backend answers.
class EdgeStore {
 public:
  static constexpr double kDenseThreshold = 0.05;

  EdgeStore() = default;
  /// `edges` may be in any order; duplicates are rejected.
  EdgeStore(std::size_t n1, std::size_t n2, std::vector<Dyad> edges);

  bool has_edge(std::uint32_t p, std::uint32_t q) const;
  std::span<const std::uint32_t> neighbors1(std::uint32_t p) const;
  std::span<const std::uint32_t> neighbors2(std::uint32_t q) const;
  std::size_t degree1(std::uint32_t p) const { return offsets1_[p + 1] - offsets1_[p]; }
  std::size_t degree2(std::uint32_t q) const { return offsets2_[q + 1] - offsets2_[q]; }
  std::size_t edge_count() const { return adj1_.size(); }
  bool is_dense() const { return !bitmap_.empty(); }
  /// Edges sorted by (p, q).
  std::vector<Dyad> edges() const;

 private:
  std::size_t n1_ = 0, n2_ = 0;
  std::vector<std::size_t> offsets1_{0}, offsets2_{0};
  std::vector<std::uint32_t> adj1_, adj2_;
  std::vector<std::uint8_t> bitmap_;
};

/// Dense N1 x N2 x J_d array of dyadic covariates.
class DyadicCovariates {
 public:
  DyadicCovariates() = default;
  DyadicCovariates(std::size_t n1, std::size_t n2, std::size_t jd)
      : n2_(n2), jd_(jd), values_(n1 * n2 * jd, 0.0) {}

  std::size_t jd() const { return jd_; }
  std::span<const double> at(std::uint32_t p, std::uint32_t q) const {
    return {values_.data() + (std::size_t{p} * n2_ + q) * jd_, jd_};
  }
  std::span<double> at(std::uint32_t p, std::uint32_t q) {
    return {values_.data() + (std::size_t{p} * n2_ + q) * jd_, jd_};
  }
  const std::vector<double>& values() const { return values_; }

 private:
  std::size_t n2_ = 0, jd_ = 0;
  std::vector<double> values_;
};

struct NetworkData {
  std::vector<std::string> ids1, ids2;
  std::vector<Dyad> edges;
  Matrix x;  // N1 x J1x, first column = 1
  Matrix w;  // N2 x J2x, first column = 1
  DyadicCovariates d;
  std::vector<std::string> x_names, w_names, d_names;  // covariate names, intercept excluded
};

class BipartiteNetwork {
 public:
  BipartiteNetwork() = default;
  /// Validates dimensions, the intercept columns and id uniqueness.
  explicit BipartiteNetwork(NetworkData data);

  std::size_t n1() const { return ids1_.size(); }
  std::size_t n2() const { return ids2_.size(); }
  std::size_t dyad_count() const { return n1() * n2(); }
  std::size_t j1() const { return static_cast<std::size_t>(x_.cols()); }
  std::size_t j2() const { return static_cast<std::size_t>(w_.cols()); }
  std::size_t jd() const { return d_.jd(); }

  int y(std::uint32_t p, std::uint32_t q) const { return edges_.has_edge(p, q) ? 1 : 0; }
  const EdgeStore& edges() const { return edges_; }
  const Matrix& x() const { return x_; }
  const Matrix& w() const { return w_; }
  const DyadicCovariates& dyadic() const { return d_; }
  std::span<const double> d(std::uint32_t p, std::uint32_t q) const { return d_.at(p, q); }
  const std::vector<std::string>& ids1() const { return ids1_; }
  const std::vector<std::string>& ids2() const { return ids2_; }
  const std::vector<std::string>& x_names() const { return x_names_; }
  const std::vector<std::string>& w_names() const { return w_names_; }
  const std::vector<std::string>& d_names() const { return d_names_; }

  bool has_holdout() const { return !holdout_.empty(); }
  bool is_holdout(std::uint32_t p, std::uint32_t q) const {
    return !holdout_.empty() && holdout_[std::size_t{p} * n2() + q] != 0;
  }
  const std::vector<std::uint8_t>& holdout_mask() const { return holdout_; }
  /// Number of non-holdout dyads incident to the node.
  std::size_t observed1(std::uint32_t p) const { return observed1_[p]; }
  std::size_t observed2(std::uint32_t q) const { return observed2_[q]; }
  std::size_t observed_count() const;
  /// Non-holdout dyads in (p, q) order.
  std::vector<Dyad> observed_dyads() const;
  std::vector<Dyad> holdout_dyads() const;

  /// Copy with the given mask (empty clears it).
  BipartiteNetwork with_holdout(std::vector<std::uint8_t> mask) const;

  std::optional<std::uint32_t> index1(const std::string& id) const;
  std::optional<std::uint32_t> index2(const std::string& id) const;

 private:
  void recount_observed();

  std::vector<std::string> ids1_, ids2_;
  EdgeStore edges_;
  Matrix x_, w_;
  DyadicCovariates d_;
  std::vector<std::string> x_names_, w_names_, d_names_;
  std::vector<std::uint8_t> holdout_;
  std::vector<std::size_t> observed1_, observed2_;
};

/// Shared-partner counts Y Y^T (family one) or Y^T Y (family two).
struct Projection {
  std::size_t n = 0;
  std::vector<std::int64_t> counts;  // n x n, row-major
  std::int64_t at(std::size_t i, std::size_t j) const { return counts[i * n + j]; }
  bool operator==(const Projection&) const = default;
};

struct NetworkPaths {
  std::filesystem::path edges, family1, family2;
  std::optional<std::filesystem::path> dyadic;
};

BipartiteNetwork load_network(const NetworkPaths& paths);
void save_network(const BipartiteNetwork& net, const NetworkPaths& paths);

Projection project_unipartite(const BipartiteNetwork& net, Family family = Family::one);

/// Marks floor(fraction * N1 * N2) dyads, drawn without replacement.
BipartiteNetwork split_holdout(const BipartiteNetwork& net, double fraction, std::uint64_t seed);

/// Dyads listed in a `family1_id,family2_id,<cov...>` file, for scoring.
struct DyadTable {
  std::vector<Dyad> dyads;
  std::vector<std::string> ids1, ids2;
  DyadicCovariates d;  // indexed as (row, 0)
  std::vector<std::string> d_names;
};
DyadTable load_dyad_table(const std::filesystem::path& path, const std::vector<std::string>& ids1,
                          const std::vector<std::string>& ids2);

}  // namespace bimmsbm
