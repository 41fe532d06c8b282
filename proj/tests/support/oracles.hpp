#pragma once

// Independent reference computations used by the unit and acceptance tests.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "sparse_ips/graphs.hpp"

namespace oracles {

using sparse_ips::RootedGraph;
using sparse_ips::Vertex;

/// Law at time t of the binary voter model on g started from i.i.d.
/// Bernoulli(p), via the dense generator on {0,1}^n and a matrix
/// exponential. Configuration index: bit v holds the state of vertex v.
inline std::vector<double> voter_law_expm(const RootedGraph& g, double p, double t) {
  const std::size_t n = g.num_vertices();
  const std::size_t states = std::size_t{1} << n;
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(states, states);
  for (std::size_t c = 0; c < states; ++c) {
    for (Vertex v = 0; v < n; ++v) {
      const auto nb = g.neighbors(v);
      if (nb.empty()) continue;
      const std::size_t xv = (c >> v) & 1;
      std::size_t disagree = 0;
      for (Vertex u : nb) disagree += ((c >> u) & 1) != xv;
      const double rate = static_cast<double>(disagree) / static_cast<double>(nb.size());
      if (rate == 0.0) continue;
      q(c, c ^ (std::size_t{1} << v)) += rate;
      q(c, c) -= rate;
    }
  }
  Eigen::RowVectorXd p0(states);
  for (std::size_t c = 0; c < states; ++c) {
    const int ones = __builtin_popcountll(c);
    p0(c) = std::pow(p, ones) * std::pow(1.0 - p, static_cast<double>(n) - ones);
  }
  const Eigen::MatrixXd m = (q * t).exp();
  const Eigen::RowVectorXd pt = p0 * m;
  return {pt.data(), pt.data() + states};
}

/// All connected simple graphs on 1..max_n vertices, one per isomorphism
/// class (unrooted), identified by the sorted multiset of rooted codes.
inline std::vector<RootedGraph> connected_graphs_up_to(std::size_t max_n) {
  std::vector<RootedGraph> out;
  for (std::size_t n = 1; n <= max_n; ++n) {
    std::vector<std::pair<Vertex, Vertex>> pairs;
    for (Vertex u = 0; u < n; ++u)
      for (Vertex v = u + 1; v < n; ++v) pairs.emplace_back(u, v);
    std::set<std::string> seen;
    for (std::size_t mask = 0; mask < (std::size_t{1} << pairs.size()); ++mask) {
      std::vector<std::pair<Vertex, Vertex>> edges;
      for (std::size_t i = 0; i < pairs.size(); ++i)
        if ((mask >> i) & 1) edges.push_back(pairs[i]);
      auto g = RootedGraph::from_edges(n, edges, Vertex{0});
      const auto d = g.distances_from(0);
      bool connected = true;
      for (auto x : d) connected = connected && x != SIZE_MAX;
      if (!connected) continue;
      std::multiset<std::string> codes;
      for (Vertex r = 0; r < n; ++r)
        codes.insert(sparse_ips::canonical_code(g.with_root(r)).canonical_code);
      std::string key;
      for (const auto& c : codes) key += c + "|";
      if (seen.insert(key).second) out.push_back(g);
    }
  }
  return out;
}

/// E[f(y, Z_1, ..., Z_{kappa-1})] for i.i.d. Z_i ~ nu, by enumeration of
/// every tuple. f receives the neighbour state counts.
inline double enumerate_neighbour_expectation(
    std::size_t kappa, int y, std::span<const double> nu,
    const std::function<double(const std::vector<int>&)>& f) {
  const std::size_t s = nu.size();
  const std::size_t others = kappa - 1;
  std::size_t tuples = 1;
  for (std::size_t i = 0; i < others; ++i) tuples *= s;
  double total = 0.0;
  for (std::size_t code = 0; code < tuples; ++code) {
    std::vector<int> counts(s, 0);
    counts[static_cast<std::size_t>(y)] += 1;
    double w = 1.0;
    std::size_t c = code;
    for (std::size_t i = 0; i < others; ++i) {
      const std::size_t z = c % s;
      c /= s;
      counts[z] += 1;
      w *= nu[z];
    }
    total += w * f(counts);
  }
  return total;
}

}  // namespace oracles
