#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sparse_ips/random.hpp"

namespace sparse_ips {

using Vertex = std::uint32_t;

/// Upper bound on vertices any generator will build.
inline constexpr std::size_t kDefaultVertexCap = 50'000'000;

/// Finite simple undirected graph in CSR form with an optional root.
/// Immutable after construction.
class RootedGraph {
 public:
  RootedGraph() = default;

  /// Builds from an edge list. Throws InvalidInput on self-loops, duplicate
  /// edges, out-of-range endpoints or an out-of-range root.
  static RootedGraph from_edges(std::size_t n,
                                std::span<const std::pair<Vertex, Vertex>> edges,
                                std::optional<Vertex> root = std::nullopt);

  std::size_t num_vertices() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t num_edges() const { return targets_.size() / 2; }
  std::span<const Vertex> neighbors(Vertex v) const {
    return {targets_.data() + offsets_[v], targets_.data() + offsets_[v + 1]};
  }
  std::size_t degree(Vertex v) const { return offsets_[v + 1] - offsets_[v]; }
  std::size_t max_degree() const;
  double mean_degree() const;
  std::optional<Vertex> root() const { return root_; }
  bool has_edge(Vertex u, Vertex v) const;
  bool is_tree() const;  // connected and acyclic

  RootedGraph with_root(Vertex r) const;

  /// BFS distances from `source`; unreachable vertices get SIZE_MAX.
  std::vector<std::size_t> distances_from(Vertex source) const;

  /// Edge list with u < v, sorted.
  std::vector<std::pair<Vertex, Vertex>> edges() const;

  /// Whether the UGW sampler stopped early because of truncation.
  bool truncated() const { return truncated_; }
  void set_truncated(bool t) { truncated_ = t; }

 private:
  std::vector<std::size_t> offsets_;
  std::vector<Vertex> targets_;
  std::optional<Vertex> root_;
  bool truncated_ = false;
};

/// Probability distribution on {0, 1, ..., k_max}.
class OffspringDistribution {
 public:
  explicit OffspringDistribution(std::vector<double> probs);

  static OffspringDistribution dirac(std::size_t k);
  /// Poisson(c) truncated at k_max and renormalized.
  static OffspringDistribution poisson(double c, std::size_t k_max = 40);

  const std::vector<double>& probs() const { return probs_; }
  std::size_t k_max() const { return probs_.size() - 1; }
  double operator[](std::size_t k) const { return k < probs_.size() ? probs_[k] : 0.0; }
  double mean() const;

 private:
  std::vector<double> probs_;
};

/// Size-biased shift rho_hat(k) = (k+1) rho(k+1) / mean(rho).
/// Throws InvalidInput when rho has zero mean.
OffspringDistribution hat_rho(const OffspringDistribution& rho);

struct UgwTruncation {
  std::size_t max_depth = 12;
  std::size_t max_vertices = 1'000'000;
};

// Generators. All roots default to vertex 0 except gen_erdos_renyi, whose
// root is drawn uniformly.
RootedGraph gen_erdos_renyi(std::size_t n, double p, Stream& rng,
                            std::size_t vertex_cap = kDefaultVertexCap);
RootedGraph gen_complete(std::size_t n, std::size_t vertex_cap = kDefaultVertexCap);
RootedGraph gen_cycle(std::size_t n, std::size_t vertex_cap = kDefaultVertexCap);
RootedGraph gen_path(std::size_t n, std::size_t vertex_cap = kDefaultVertexCap);
/// Root with `kappa` children, every other internal vertex with kappa - 1,
/// down to `depth` generations. Vertices are numbered in BFS order.
RootedGraph gen_regular_tree(std::size_t kappa, std::size_t depth,
                             std::size_t vertex_cap = kDefaultVertexCap);
RootedGraph sample_ugw(const OffspringDistribution& rho, const UgwTruncation& trunc,
                       Stream& rng);

/// Induced subgraph on vertices within distance r of v, rooted at v.
/// Vertices are relabeled in BFS order so the root becomes 0.
RootedGraph ball(const RootedGraph& g, Vertex v, std::size_t r);

/// Component containing a uniformly chosen vertex, rooted there.
RootedGraph connected_component_of_uniform_root(const RootedGraph& g, Stream& rng);
RootedGraph connected_component(const RootedGraph& g, Vertex v);

/// Canonical encoding of a connected rooted graph up to rooted isomorphism.
struct NeighborhoodClass {
  std::string canonical_code;
  std::size_t radius = 0;  // eccentricity of the root

  friend bool operator==(const NeighborhoodClass&, const NeighborhoodClass&) = default;
  friend auto operator<=>(const NeighborhoodClass& a, const NeighborhoodClass& b) {
    return a.canonical_code <=> b.canonical_code;
  }
};

/// Largest non-tree graph accepted by canonical_code.
inline constexpr std::size_t kIsomorphismSizeCap = 32;

/// Trees use AHU bottom-up labeling; other graphs (up to the size cap) use
/// colour refinement plus individualization backtracking. Throws
/// InvalidInput for disconnected or rootless graphs and SizeCapExceeded for
/// large non-trees.
NeighborhoodClass canonical_code(const RootedGraph& g);

struct NeighborhoodFrequency {
  double frequency = 0.0;
  RootedGraph representative;
};

/// Empirical distribution of the isomorphism class of B_r(g, v) over all v.
std::map<std::string, NeighborhoodFrequency> local_nbhd_distribution(const RootedGraph& g,
                                                                     std::size_t r);

std::vector<double> degree_distribution(const RootedGraph& g);

// Edge-list text: header "n <count> root <index>" (index -1 when unrooted),
// then one "u v" line per edge with u < v.
void write_edge_list(std::ostream& os, const RootedGraph& g);
RootedGraph read_edge_list(std::istream& is);

}  // namespace sparse_ips
