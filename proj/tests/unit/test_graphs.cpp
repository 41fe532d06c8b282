#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "sparse_ips/errors.hpp"
#include "sparse_ips/graphs.hpp"

using namespace sparse_ips;

namespace {

double tv_against_poisson(const std::vector<double>& freq, double c) {
  double tv = 0.0, pk = std::exp(-c), tail = 1.0;
  const std::size_t kmax = std::max<std::size_t>(freq.size(), 40);
  for (std::size_t k = 0; k < kmax; ++k) {
    const double f = k < freq.size() ? freq[k] : 0.0;
    tv += std::abs(f - pk);
    tail -= pk;
    pk *= c / static_cast<double>(k + 1);
  }
  return 0.5 * (tv + std::max(0.0, tail));
}

RootedGraph relabel(const RootedGraph& g, Stream& rng) {
  std::vector<Vertex> perm(g.num_vertices());
  std::iota(perm.begin(), perm.end(), Vertex{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<std::pair<Vertex, Vertex>> edges;
  for (auto [u, v] : g.edges()) edges.emplace_back(perm[u], perm[v]);
  return RootedGraph::from_edges(g.num_vertices(), edges, perm[*g.root()]);
}

}  // namespace

TEST_CASE("rooted graph rejects malformed edge lists") {
  const std::vector<std::pair<Vertex, Vertex>> loop{{1, 1}};
  CHECK_THROWS_AS(RootedGraph::from_edges(3, loop), InvalidInput);
  const std::vector<std::pair<Vertex, Vertex>> dup{{0, 1}, {1, 0}};
  CHECK_THROWS_AS(RootedGraph::from_edges(3, dup), InvalidInput);
  const std::vector<std::pair<Vertex, Vertex>> far{{0, 5}};
  CHECK_THROWS_AS(RootedGraph::from_edges(3, far), InvalidInput);
  CHECK_THROWS_AS(RootedGraph::from_edges(3, {}, Vertex{3}), InvalidInput);
}

TEST_CASE("erdos renyi edge counts") {
  Stream rng(7);
  CHECK(gen_erdos_renyi(10, 0.0, rng).num_edges() == 0);
  CHECK(gen_erdos_renyi(5, 1.0, rng).num_edges() == 10);

  double mean = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Stream r(100 + s);
    const auto g = gen_erdos_renyi(1000, 2.0 / 1000, r);
    CHECK(g.root().has_value());
    mean += g.mean_degree() / 20.0;
  }
  CHECK(mean >= 1.7);
  CHECK(mean <= 2.3);
}

TEST_CASE("deterministic generators") {
  const auto t1 = gen_regular_tree(3, 1);
  CHECK(t1.num_vertices() == 4);
  CHECK(t1.degree(*t1.root()) == 3);

  const auto t9 = gen_regular_tree(3, 9);
  CHECK(t9.num_vertices() == 1 + 3 * ((1u << 9) - 1));
  CHECK(t9.is_tree());

  const auto c12 = gen_cycle(12);
  for (Vertex v = 0; v < 12; ++v) CHECK(c12.degree(v) == 2);

  CHECK(gen_complete(5).num_edges() == 10);
  CHECK_THROWS_AS(gen_regular_tree(3, 30, 1000), SizeCapExceeded);
}

TEST_CASE("hat_rho examples") {
  SUBCASE("poisson is a fixed point") {
    for (double c : {0.5, 1.0, 2.0}) {
      const auto rho = OffspringDistribution::poisson(c, 40);
      const auto hat = hat_rho(rho);
      for (std::size_t k = 0; k <= 40; ++k) CHECK(std::abs(hat[k] - rho[k]) <= 1e-9);
    }
  }
  SUBCASE("dirac shifts down by one") {
    const auto hat = hat_rho(OffspringDistribution::dirac(3));
    CHECK(hat[2] == doctest::Approx(1.0));
    CHECK(hat[3] == 0.0);
  }
  SUBCASE("hand value") {
    const auto hat = hat_rho(OffspringDistribution({0.0, 0.5, 0.5}));
    CHECK(hat[0] == doctest::Approx(1.0 / 3).epsilon(1e-12));
    CHECK(hat[1] == doctest::Approx(2.0 / 3).epsilon(1e-12));
  }
  SUBCASE("zero mean is rejected") {
    CHECK_THROWS_AS(hat_rho(OffspringDistribution::dirac(0)), InvalidInput);
  }
  CHECK_THROWS_AS(OffspringDistribution({0.5, 0.6}), InvalidInput);
}

TEST_CASE("ugw sampling") {
  Stream rng(11);
  const auto iso = sample_ugw(OffspringDistribution::dirac(0), {}, rng);
  CHECK(iso.num_vertices() == 1);
  CHECK(iso.num_edges() == 0);

  SUBCASE("dirac offspring gives the regular tree") {
    for (std::size_t d : {1, 3, 5}) {
      const auto u = sample_ugw(OffspringDistribution::dirac(3), {d, 1'000'000}, rng);
      CHECK(canonical_code(u) == canonical_code(gen_regular_tree(3, d)));
    }
  }

  SUBCASE("subcritical trees die out") {
    const auto rho = OffspringDistribution::poisson(0.5);
    std::size_t extinct = 0;
    for (std::uint64_t s = 0; s < 10000; ++s) {
      Stream r(5, s);
      const auto t = sample_ugw(rho, {30, 1'000'000}, r);
      extinct += !t.truncated();
    }
    CHECK(static_cast<double>(extinct) / 10000.0 >= 0.99);
  }

  SUBCASE("truncation is flagged") {
    const auto t = sample_ugw(OffspringDistribution::dirac(3), {4, 10}, rng);
    CHECK(t.truncated());
    CHECK(t.num_vertices() <= 10);
  }
}

TEST_CASE("balls") {
  const auto c12 = gen_cycle(12);
  const auto b0 = ball(c12, 4, 0);
  CHECK(b0.num_vertices() == 1);
  const auto b2 = ball(c12, 4, 2);
  CHECK(b2.num_vertices() == 5);
  CHECK(b2.num_edges() == 4);
  CHECK(canonical_code(b2) == canonical_code(gen_path(5).with_root(2)));

  const auto k5 = gen_complete(5);
  CHECK(ball(k5, 2, 1).num_edges() == 10);

  SUBCASE("monotone in r and stabilizes at the component") {
    Stream rng(3);
    const auto g = gen_erdos_renyi(200, 1.5 / 200, rng);
    const auto comp = connected_component(g, 0);
    std::size_t prev = 0;
    for (std::size_t r = 0; r < 220; ++r) {
      const std::size_t sz = ball(g, 0, r).num_vertices();
      CHECK(sz >= prev);
      prev = sz;
    }
    CHECK(prev == comp.num_vertices());
  }
}

TEST_CASE("canonical codes") {
  SUBCASE("root position matters") {
    const auto p = gen_path(5);
    CHECK(canonical_code(p.with_root(0)) != canonical_code(p.with_root(2)));
    const std::vector<std::pair<Vertex, Vertex>> star{{0, 1}, {0, 2}, {0, 3}};
    const auto s = RootedGraph::from_edges(4, star, Vertex{0});
    CHECK(canonical_code(s) != canonical_code(s.with_root(1)));
  }

  SUBCASE("invariant under random relabeling of trees") {
    Stream rng(21);
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t n = 2 + rng.below(63);
      std::vector<std::pair<Vertex, Vertex>> edges;
      for (Vertex v = 1; v < n; ++v) edges.emplace_back(static_cast<Vertex>(rng.below(v)), v);
      const auto t = RootedGraph::from_edges(n, edges, static_cast<Vertex>(rng.below(n)));
      CHECK(canonical_code(relabel(t, rng)) == canonical_code(t));
    }
  }

  SUBCASE("general graphs") {
    Stream rng(4);
    const std::vector<std::pair<Vertex, Vertex>> paw{{0, 1}, {1, 2}, {2, 0}, {2, 3}};
    const auto g = RootedGraph::from_edges(4, paw, Vertex{0});
    for (int i = 0; i < 20; ++i) CHECK(canonical_code(relabel(g, rng)) == canonical_code(g));
    CHECK(canonical_code(g) != canonical_code(g.with_root(2)));
    CHECK(canonical_code(g) != canonical_code(g.with_root(3)));
    CHECK(canonical_code(g).canonical_code != canonical_code(gen_cycle(4)).canonical_code);
  }

  SUBCASE("errors") {
    CHECK_THROWS_AS(canonical_code(RootedGraph::from_edges(2, {}, Vertex{0})), InvalidInput);
    CHECK_THROWS_AS(canonical_code(gen_complete(40)), SizeCapExceeded);
  }
}

TEST_CASE("neighbourhood distributions") {
  const auto cyc = local_nbhd_distribution(gen_cycle(20), 2);
  REQUIRE(cyc.size() == 1);
  CHECK(cyc.begin()->second.frequency == doctest::Approx(1.0));
  CHECK(cyc.begin()->second.representative.num_vertices() == 5);

  CHECK(local_nbhd_distribution(gen_complete(4), 1).size() == 1);

  Stream rng(8);
  const auto g = gen_erdos_renyi(300, 2.0 / 300, rng);
  double total = 0.0;
  for (const auto& [code, f] : local_nbhd_distribution(g, 1)) total += f.frequency;
  CHECK(std::abs(total - 1.0) <= 1e-12);

  SUBCASE("root degree approaches Poisson") {
    double tv_small = 0.0, tv_large = 0.0;
    for (std::uint64_t s = 0; s < 10; ++s) {
      Stream a(200, s), b(201, s);
      tv_small += tv_against_poisson(degree_distribution(gen_erdos_renyi(100, 0.02, a)), 2.0);
      tv_large += tv_against_poisson(degree_distribution(gen_erdos_renyi(5000, 2.0 / 5000, b)), 2.0);
    }
    CHECK(tv_large < tv_small);
  }
}

TEST_CASE("uniform-root components") {
  Stream rng(9);
  const auto c = gen_cycle(7);
  CHECK(connected_component_of_uniform_root(c, rng).num_vertices() == 7);
  CHECK(connected_component_of_uniform_root(RootedGraph::from_edges(6, {}), rng).num_vertices() == 1);

  std::vector<std::pair<Vertex, Vertex>> edges;
  for (Vertex v = 2; v < 10; ++v) edges.emplace_back(v - 1, v);
  const auto g = RootedGraph::from_edges(10, edges);
  std::size_t big = 0;
  for (int i = 0; i < 10000; ++i) big += connected_component_of_uniform_root(g, rng).num_vertices() == 9;
  CHECK(std::abs(big / 10000.0 - 0.9) <= 0.03);
}

TEST_CASE("edge list round trip") {
  Stream rng(12);
  const auto g = gen_erdos_renyi(50, 0.08, rng);
  std::stringstream ss;
  write_edge_list(ss, g);
  const auto h = read_edge_list(ss);
  CHECK(h.num_vertices() == g.num_vertices());
  CHECK(h.edges() == g.edges());
  CHECK(h.root() == g.root());

  std::stringstream unrooted;
  write_edge_list(unrooted, RootedGraph::from_edges(3, {}));
  CHECK(unrooted.str().rfind("n 3 root -1", 0) == 0);
  CHECK_FALSE(read_edge_list(unrooted).root().has_value());

  std::stringstream bad("n 3 root 0\n0 7\n");
  CHECK_THROWS_AS(read_edge_list(bad), InvalidInput);
}
