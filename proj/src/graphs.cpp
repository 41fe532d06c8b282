#include "sparse_ips/graphs.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>

#include "sparse_ips/errors.hpp"

namespace sparse_ips {

namespace {

void check_cap(std::size_t n, std::size_t cap, const char* what) {
  if (n > cap) {
    throw SizeCapExceeded(std::string(what) + ": vertex count " + std::to_string(n) +
                          " exceeds cap " + std::to_string(cap));
  }
}

// Inverse-CDF sampler over {0..k_max}.
class DiscreteSampler {
 public:
  explicit DiscreteSampler(const std::vector<double>& probs) : cdf_(probs.size()) {
    std::partial_sum(probs.begin(), probs.end(), cdf_.begin());
  }
  std::size_t operator()(Stream& rng) const {
    const double u = rng.uniform() * cdf_.back();
    const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    return std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
  }

 private:
  std::vector<double> cdf_;
};

}  // namespace

// ---------------------------------------------------------------------------
// RootedGraph

RootedGraph RootedGraph::from_edges(std::size_t n,
                                    std::span<const std::pair<Vertex, Vertex>> edges,
                                    std::optional<Vertex> root) {
  if (root && *root >= n) {
    throw InvalidInput("root " + std::to_string(*root) + " out of range for n = " +
                       std::to_string(n));
  }
  RootedGraph g;
  g.root_ = root;
  g.offsets_.assign(n + 1, 0);
  for (const auto& [u, v] : edges) {
    if (u >= n || v >= n) throw InvalidInput("edge endpoint out of range");
    if (u == v) throw InvalidInput("self-loop at vertex " + std::to_string(u));
    ++g.offsets_[u + 1];
    ++g.offsets_[v + 1];
  }
  std::partial_sum(g.offsets_.begin(), g.offsets_.end(), g.offsets_.begin());
  g.targets_.resize(g.offsets_[n]);
  std::vector<std::size_t> fill(g.offsets_.begin(), g.offsets_.end() - 1);
  for (const auto& [u, v] : edges) {
    g.targets_[fill[u]++] = v;
    g.targets_[fill[v]++] = u;
  }
  for (std::size_t v = 0; v < n; ++v) {
    auto first = g.targets_.begin() + static_cast<std::ptrdiff_t>(g.offsets_[v]);
    auto last = g.targets_.begin() + static_cast<std::ptrdiff_t>(g.offsets_[v + 1]);
    std::sort(first, last);
    if (std::adjacent_find(first, last) != last) {
      throw InvalidInput("duplicate edge at vertex " + std::to_string(v));
    }
  }
  return g;
}

std::size_t RootedGraph::max_degree() const {
  std::size_t m = 0;
  for (std::size_t v = 0; v < num_vertices(); ++v) m = std::max(m, degree(static_cast<Vertex>(v)));
  return m;
}

double RootedGraph::mean_degree() const {
  return num_vertices() == 0 ? 0.0
                             : static_cast<double>(targets_.size()) /
                                   static_cast<double>(num_vertices());
}

bool RootedGraph::has_edge(Vertex u, Vertex v) const {
  const auto nb = neighbors(u);
  return std::binary_search(nb.begin(), nb.end(), v);
}

bool RootedGraph::is_tree() const {
  const std::size_t n = num_vertices();
  if (n == 0 || num_edges() != n - 1) return false;
  const auto dist = distances_from(0);
  return std::none_of(dist.begin(), dist.end(),
                      [](std::size_t d) { return d == std::numeric_limits<std::size_t>::max(); });
}

RootedGraph RootedGraph::with_root(Vertex r) const {
  if (r >= num_vertices()) throw InvalidInput("root out of range");
  RootedGraph g = *this;
  g.root_ = r;
  return g;
}

std::vector<std::size_t> RootedGraph::distances_from(Vertex source) const {
  constexpr auto kInf = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> dist(num_vertices(), kInf);
  std::vector<Vertex> queue{source};
  dist[source] = 0;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const Vertex u = queue[head];
    for (Vertex w : neighbors(u)) {
      if (dist[w] == kInf) {
        dist[w] = dist[u] + 1;
        queue.push_back(w);
      }
    }
  }
  return dist;
}

std::vector<std::pair<Vertex, Vertex>> RootedGraph::edges() const {
  std::vector<std::pair<Vertex, Vertex>> out;
  out.reserve(num_edges());
  for (Vertex u = 0; u < num_vertices(); ++u) {
    for (Vertex v : neighbors(u)) {
      if (u < v) out.emplace_back(u, v);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Offspring distributions

OffspringDistribution::OffspringDistribution(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.empty()) throw InvalidInput("offspring distribution is empty");
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw InvalidInput("negative or non-finite probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-12) {
    throw InvalidInput("offspring probabilities sum to " + std::to_string(sum));
  }
}

OffspringDistribution OffspringDistribution::dirac(std::size_t k) {
  std::vector<double> p(k + 1, 0.0);
  p[k] = 1.0;
  return OffspringDistribution(std::move(p));
}

OffspringDistribution OffspringDistribution::poisson(double c, std::size_t k_max) {
  if (!(c >= 0.0)) throw InvalidInput("Poisson parameter must be nonnegative");
  std::vector<double> p(k_max + 1);
  double sum = 0.0;
  for (std::size_t k = 0; k <= k_max; ++k) {
    const double kd = static_cast<double>(k);
    p[k] = c == 0.0 ? (k == 0 ? 1.0 : 0.0) : std::exp(kd * std::log(c) - c - std::lgamma(kd + 1.0));
    sum += p[k];
  }
  for (double& x : p) x /= sum;
  return OffspringDistribution(std::move(p));
}

double OffspringDistribution::mean() const {
  double m = 0.0;
  for (std::size_t k = 0; k < probs_.size(); ++k) m += static_cast<double>(k) * probs_[k];
  return m;
}

OffspringDistribution hat_rho(const OffspringDistribution& rho) {
  const double m = rho.mean();
  if (!(m > 0.0) || !std::isfinite(m)) {
    throw InvalidInput("hat_rho requires a distribution with finite positive mean");
  }
  const std::size_t kmax = rho.k_max();
  std::vector<double> out(std::max<std::size_t>(kmax, 1), 0.0);
  for (std::size_t k = 0; k + 1 <= kmax; ++k) {
    out[k] = static_cast<double>(k + 1) * rho[k + 1] / m;
  }
  // Absorb rounding so the result passes the simplex check.
  double sum = std::accumulate(out.begin(), out.end(), 0.0);
  for (double& x : out) x /= sum;
  return OffspringDistribution(std::move(out));
}

// ---------------------------------------------------------------------------
// Generators

RootedGraph gen_erdos_renyi(std::size_t n, double p, Stream& rng, std::size_t vertex_cap) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("edge probability must lie in [0, 1]");
  check_cap(n, vertex_cap, "gen_erdos_renyi");
  std::vector<std::pair<Vertex, Vertex>> edges;
  if (p == 1.0) {
    for (Vertex u = 0; u < n; ++u)
      for (Vertex v = u + 1; v < n; ++v) edges.emplace_back(u, v);
  } else if (p > 0.0 && n > 1) {
    // Batagelj-Brandes geometric skipping over the lower triangle.
    edges.reserve(static_cast<std::size_t>(p * static_cast<double>(n) * static_cast<double>(n - 1) / 2 * 1.1) + 16);
    const double log_q = std::log1p(-p);
    std::int64_t v = 1;
    std::int64_t w = -1;
    const auto nn = static_cast<std::int64_t>(n);
    while (v < nn) {
      const double skip = std::floor(std::log(rng.uniform_open0()) / log_q);
      w += 1 + static_cast<std::int64_t>(std::min(skip, 1.0e18));
      while (w >= v && v < nn) {
        w -= v;
        ++v;
      }
      if (v < nn) edges.emplace_back(static_cast<Vertex>(w), static_cast<Vertex>(v));
    }
  }
  std::optional<Vertex> root;
  if (n > 0) root = static_cast<Vertex>(rng.below(n));
  return RootedGraph::from_edges(n, edges, root);
}

RootedGraph gen_complete(std::size_t n, std::size_t vertex_cap) {
  if (n < 1) throw InvalidInput("gen_complete requires n >= 1");
  check_cap(n, vertex_cap, "gen_complete");
  std::vector<std::pair<Vertex, Vertex>> edges;
  for (Vertex u = 0; u < n; ++u)
    for (Vertex v = u + 1; v < n; ++v) edges.emplace_back(u, v);
  return RootedGraph::from_edges(n, edges, Vertex{0});
}

RootedGraph gen_cycle(std::size_t n, std::size_t vertex_cap) {
  if (n < 3) throw InvalidInput("gen_cycle requires n >= 3 for a simple graph");
  check_cap(n, vertex_cap, "gen_cycle");
  std::vector<std::pair<Vertex, Vertex>> edges;
  for (Vertex u = 0; u < n; ++u) edges.emplace_back(u, static_cast<Vertex>((u + 1) % n));
  return RootedGraph::from_edges(n, edges, Vertex{0});
}

RootedGraph gen_path(std::size_t n, std::size_t vertex_cap) {
  if (n < 1) throw InvalidInput("gen_path requires n >= 1");
  check_cap(n, vertex_cap, "gen_path");
  std::vector<std::pair<Vertex, Vertex>> edges;
  for (Vertex u = 0; u + 1 < n; ++u) edges.emplace_back(u, u + 1);
  return RootedGraph::from_edges(n, edges, Vertex{0});
}

RootedGraph gen_regular_tree(std::size_t kappa, std::size_t depth, std::size_t vertex_cap) {
  if (kappa < 2) throw InvalidInput("gen_regular_tree requires kappa >= 2");
  // 1 + kappa * sum_{g<depth} (kappa-1)^g, computed with overflow guard.
  std::size_t total = 1;
  std::size_t level = kappa;
  for (std::size_t d = 1; d <= depth; ++d) {
    total += level;
    check_cap(total, vertex_cap, "gen_regular_tree");
    if (d < depth) {
      if (level > vertex_cap / (kappa - 1)) check_cap(vertex_cap + 1, vertex_cap, "gen_regular_tree");
      level *= kappa - 1;
    }
  }
  std::vector<std::pair<Vertex, Vertex>> edges;
  edges.reserve(total - 1);
  Vertex next = 1;
  std::size_t gen_begin = 0, gen_end = 1;
  for (std::size_t d = 1; d <= depth; ++d) {
    for (std::size_t u = gen_begin; u < gen_end; ++u) {
      const std::size_t children = (d == 1) ? kappa : kappa - 1;
      for (std::size_t c = 0; c < children; ++c) edges.emplace_back(static_cast<Vertex>(u), next++);
    }
    gen_begin = gen_end;
    gen_end = next;
  }
  return RootedGraph::from_edges(total, edges, Vertex{0});
}

RootedGraph sample_ugw(const OffspringDistribution& rho, const UgwTruncation& trunc, Stream& rng) {
  if (trunc.max_vertices == 0) throw InvalidInput("UGW truncation needs max_vertices >= 1");
  const DiscreteSampler root_sampler(rho.probs());
  std::optional<DiscreteSampler> child_sampler;
  if (rho.mean() > 0.0) child_sampler.emplace(hat_rho(rho).probs());

  std::vector<std::pair<Vertex, Vertex>> edges;
  std::vector<std::size_t> depth_of{0};
  bool truncated = false;
  std::size_t count = 1;
  for (std::size_t head = 0; head < depth_of.size(); ++head) {
    const std::size_t d = depth_of[head];
    std::size_t k = 0;
    if (d == 0) {
      k = root_sampler(rng);
    } else if (child_sampler) {
      k = (*child_sampler)(rng);
    }
    if (k == 0) continue;
    if (d >= trunc.max_depth) {
      truncated = true;
      continue;
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (count >= trunc.max_vertices) {
        truncated = true;
        break;
      }
      edges.emplace_back(static_cast<Vertex>(head), static_cast<Vertex>(count));
      depth_of.push_back(d + 1);
      ++count;
    }
  }
  RootedGraph g = RootedGraph::from_edges(count, edges, Vertex{0});
  g.set_truncated(truncated);
  return g;
}

// ---------------------------------------------------------------------------
// Local structure

namespace {

RootedGraph induced_bfs(const RootedGraph& g, Vertex v, std::size_t r) {
  constexpr auto kNone = std::numeric_limits<std::uint32_t>::max();
  std::vector<std::uint32_t> label(g.num_vertices(), kNone);
  std::vector<Vertex> order{v};
  std::vector<std::size_t> dist{0};
  label[v] = 0;
  for (std::size_t head = 0; head < order.size(); ++head) {
    if (dist[head] == r) continue;
    for (Vertex w : g.neighbors(order[head])) {
      if (label[w] == kNone) {
        label[w] = static_cast<std::uint32_t>(order.size());
        order.push_back(w);
        dist.push_back(dist[head] + 1);
      }
    }
  }
  std::vector<std::pair<Vertex, Vertex>> edges;
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (Vertex w : g.neighbors(order[i])) {
      if (label[w] != kNone && i < label[w]) edges.emplace_back(static_cast<Vertex>(i), label[w]);
    }
  }
  return RootedGraph::from_edges(order.size(), edges, Vertex{0});
}

}  // namespace

RootedGraph ball(const RootedGraph& g, Vertex v, std::size_t r) {
  if (v >= g.num_vertices()) throw InvalidInput("ball centre out of range");
  return induced_bfs(g, v, r);
}

RootedGraph connected_component(const RootedGraph& g, Vertex v) {
  if (v >= g.num_vertices()) throw InvalidInput("vertex out of range");
  return induced_bfs(g, v, std::numeric_limits<std::size_t>::max());
}

RootedGraph connected_component_of_uniform_root(const RootedGraph& g, Stream& rng) {
  if (g.num_vertices() == 0) throw InvalidInput("empty graph has no uniform root");
  return connected_component(g, static_cast<Vertex>(rng.below(g.num_vertices())));
}

// ---------------------------------------------------------------------------
// Canonical codes

namespace {

std::string tree_code(const RootedGraph& g, Vertex root) {
  const std::size_t n = g.num_vertices();
  std::vector<Vertex> order{root};
  std::vector<Vertex> parent(n, root);
  std::vector<bool> seen(n, false);
  seen[root] = true;
  order.reserve(n);
  for (std::size_t head = 0; head < order.size(); ++head) {
    const Vertex u = order[head];
    for (Vertex w : g.neighbors(u)) {
      if (!seen[w]) {
        seen[w] = true;
        parent[w] = u;
        order.push_back(w);
      }
    }
  }
  std::vector<std::vector<std::string>> child_codes(n);
  std::string root_code;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Vertex u = *it;
    auto& kids = child_codes[u];
    std::sort(kids.begin(), kids.end());
    std::string code = "(";
    for (auto& k : kids) code += k;
    code += ')';
    kids.clear();
    kids.shrink_to_fit();
    if (u == root) {
      root_code = std::move(code);
    } else {
      child_codes[parent[u]].push_back(std::move(code));
    }
  }
  return root_code;
}

class GeneralCanonizer {
 public:
  explicit GeneralCanonizer(const RootedGraph& g) : g_(g), n_(g.num_vertices()) {}

  std::string run(Vertex root) {
    std::vector<int> colour(n_, 1);
    colour[root] = 0;
    search(colour);
    return best_;
  }

 private:
  static constexpr std::size_t kNodeBudget = 2'000'000;

  // Equitable refinement; new colours are ranks of (old colour, sorted
  // neighbour colours), so the result is labeling-invariant and preserves the
  // relative order of existing cells.
  void refine(std::vector<int>& colour) const {
    std::size_t cells = count_cells(colour);
    while (true) {
      std::vector<std::pair<std::vector<int>, Vertex>> sig(n_);
      for (Vertex v = 0; v < n_; ++v) {
        std::vector<int> s{colour[v]};
        for (Vertex w : g_.neighbors(v)) s.push_back(colour[w]);
        std::sort(s.begin() + 1, s.end());
        sig[v] = {std::move(s), v};
      }
      std::sort(sig.begin(), sig.end());
      int rank = -1;
      for (std::size_t i = 0; i < n_; ++i) {
        if (i == 0 || sig[i].first != sig[i - 1].first) ++rank;
        colour[sig[i].second] = rank;
      }
      const std::size_t new_cells = static_cast<std::size_t>(rank + 1);
      if (new_cells == cells) return;
      cells = new_cells;
    }
  }

  static std::size_t count_cells(const std::vector<int>& colour) {
    std::vector<int> c = colour;
    std::sort(c.begin(), c.end());
    return static_cast<std::size_t>(std::unique(c.begin(), c.end()) - c.begin());
  }

  void search(std::vector<int> colour) {
    if (++nodes_ > kNodeBudget) {
      throw SizeCapExceeded("canonical_code: backtracking budget exhausted");
    }
    refine(colour);
    // Smallest colour class with more than one vertex.
    std::vector<std::size_t> size(n_, 0);
    for (int c : colour) ++size[static_cast<std::size_t>(c)];
    int target = -1;
    for (std::size_t c = 0; c < n_; ++c) {
      if (size[c] > 1) {
        target = static_cast<int>(c);
        break;
      }
    }
    if (target < 0) {
      leaf(colour);
      return;
    }
    for (Vertex v = 0; v < n_; ++v) {
      if (colour[v] != target) continue;
      std::vector<int> next(n_);
      for (Vertex u = 0; u < n_; ++u) next[u] = 2 * colour[u] + 1;
      next[v] = 2 * colour[v];
      search(std::move(next));
    }
  }

  void leaf(const std::vector<int>& colour) {
    std::vector<Vertex> at(n_);
    for (Vertex v = 0; v < n_; ++v) at[static_cast<std::size_t>(colour[v])] = v;
    std::string code;
    code.reserve(n_ * (n_ - 1) / 2);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = i + 1; j < n_; ++j) code += g_.has_edge(at[i], at[j]) ? '1' : '0';
    if (best_.empty() || code < best_) best_ = std::move(code);
  }

  const RootedGraph& g_;
  std::size_t n_;
  std::string best_;
  std::size_t nodes_ = 0;
};

}  // namespace

NeighborhoodClass canonical_code(const RootedGraph& g) {
  if (!g.root()) throw InvalidInput("canonical_code requires a rooted graph");
  const Vertex root = *g.root();
  const auto dist = g.distances_from(root);
  std::size_t ecc = 0;
  for (std::size_t d : dist) {
    if (d == std::numeric_limits<std::size_t>::max()) {
      throw InvalidInput("canonical_code requires a connected graph");
    }
    ecc = std::max(ecc, d);
  }
  NeighborhoodClass out;
  out.radius = ecc;
  if (g.num_edges() + 1 == g.num_vertices()) {
    out.canonical_code = "T" + tree_code(g, root);
    return out;
  }
  if (g.num_vertices() > kIsomorphismSizeCap) {
    throw SizeCapExceeded("canonical_code: non-tree with " + std::to_string(g.num_vertices()) +
                          " vertices exceeds cap " + std::to_string(kIsomorphismSizeCap));
  }
  GeneralCanonizer canon(g);
  out.canonical_code = "G" + std::to_string(g.num_vertices()) + ":" + canon.run(root);
  return out;
}

std::map<std::string, NeighborhoodFrequency> local_nbhd_distribution(const RootedGraph& g,
                                                                     std::size_t r) {
  std::map<std::string, std::size_t> counts;
  std::map<std::string, RootedGraph> reps;
  const std::size_t n = g.num_vertices();
  for (Vertex v = 0; v < n; ++v) {
    RootedGraph b = ball(g, v, r);
    auto cls = canonical_code(b);
    auto [it, inserted] = counts.try_emplace(cls.canonical_code, 0);
    ++it->second;
    if (inserted) reps.emplace(cls.canonical_code, std::move(b));
  }
  std::map<std::string, NeighborhoodFrequency> out;
  for (auto& [code, c] : counts) {
    out.emplace(code, NeighborhoodFrequency{static_cast<double>(c) / static_cast<double>(n),
                                            std::move(reps.at(code))});
  }
  return out;
}

std::vector<double> degree_distribution(const RootedGraph& g) {
  std::vector<double> out(g.max_degree() + 1, 0.0);
  const std::size_t n = g.num_vertices();
  for (Vertex v = 0; v < n; ++v) out[g.degree(v)] += 1.0;
  for (double& x : out) x /= static_cast<double>(n);
  return out;
}

// ---------------------------------------------------------------------------
// Edge-list text

void write_edge_list(std::ostream& os, const RootedGraph& g) {
  os << "n " << g.num_vertices() << " root ";
  if (g.root()) {
    os << *g.root();
  } else {
    os << -1;
  }
  os << '\n';
  for (const auto& [u, v] : g.edges()) os << u << ' ' << v << '\n';
}

RootedGraph read_edge_list(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw InvalidInput("edge list: missing header");
  std::istringstream hs(header);
  std::string tag_n, tag_root;
  long long n = -1, root = -2;
  if (!(hs >> tag_n >> n >> tag_root >> root) || tag_n != "n" || tag_root != "root" || n < 0 ||
      root < -1) {
    throw InvalidInput("edge list: malformed header '" + header + "'");
  }
  std::vector<std::pair<Vertex, Vertex>> edges;
  std::string line;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    long long u = -1, v = -1;
    std::string extra;
    if (!(ls >> u >> v) || (ls >> extra) || u < 0 || v < 0 || u >= v) {
      throw InvalidInput("edge list: malformed edge on line " + std::to_string(lineno));
    }
    edges.emplace_back(static_cast<Vertex>(u), static_cast<Vertex>(v));
  }
  std::optional<Vertex> r;
  if (root >= 0) r = static_cast<Vertex>(root);
  return RootedGraph::from_edges(static_cast<std::size_t>(n), edges, r);
}

}  // namespace sparse_ips
