#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "sparse_ips/diffusion_dynamics.hpp"
#include "sparse_ips/errors.hpp"

using namespace sparse_ips;

namespace {

struct Moments {
  double mean = 0.0;
  double var = 0.0;
  std::size_t n = 0;
};

template <class F>
Moments moments(std::size_t n, F&& sample) {
  Moments m;
  m.n = n;
  double s = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = sample(i);
    s += x;
    s2 += x * x;
  }
  m.mean = s / static_cast<double>(n);
  m.var = (s2 - s * m.mean) / static_cast<double>(n - 1);
  return m;
}

// Standard error of a sample variance for roughly Gaussian data.
double var_se(const Moments& m) { return m.var * std::sqrt(2.0 / static_cast<double>(m.n - 1)); }

}  // namespace

TEST_CASE("zero drift gives Brownian motion") {
  SimulationOptions opts;
  opts.seed = 2;
  const std::size_t reps = 10'000;
  const auto m = DiffusionModel::pairwise([](double, double, double) { return 0.0; });
  const auto ens = simulate_diffusion(gen_cycle(5), m, DiffusionInitial::fixed({0, 0, 0, 0, 0}), 1.0,
                                      0.01, reps, opts, 50);
  REQUIRE(ens.grid().size() == 3);
  for (std::size_t k : {1, 2}) {
    const double t = ens.grid()[k];
    for (Vertex v = 0; v < 5; ++v) {
      const auto mo = moments(reps, [&](std::size_t r) { return ens.value(r, k, v); });
      CHECK(std::abs(mo.var - t) <= 3 * var_se(mo));
    }
  }
}

TEST_CASE("Ornstein-Uhlenbeck stationary variance") {
  SimulationOptions opts;
  opts.seed = 4;
  const std::size_t reps = 20'000;
  const auto m = DiffusionModel::pairwise([](double, double x, double) { return -x; });
  const auto ens = simulate_diffusion(RootedGraph::from_edges(1, {}), m, DiffusionInitial::fixed({0.0}), 5.0,
                                      0.01, reps, opts, 500);
  const auto mo = moments(reps, [&](std::size_t r) { return ens.value(r, ens.grid().size() - 1, 0); });
  CHECK(std::abs(mo.var - 0.5) <= 0.05);
}

TEST_CASE("consensus drift on K_n leaves the average Brownian") {
  SimulationOptions opts;
  opts.seed = 6;
  const std::size_t reps = 10'000, n = 5;
  const auto m = DiffusionModel::pairwise([](double, double x, double y) { return y - x; });
  const auto ens = simulate_diffusion(gen_complete(n), m,
                                      DiffusionInitial::iid([](Stream& s) { return s.normal(); }), 1.0, 0.01,
                                      reps, opts, 100);
  const auto avg = [&](std::size_t r, std::size_t k) {
    double s = 0.0;
    for (Vertex v = 0; v < n; ++v) s += ens.value(r, k, v);
    return s / n;
  };
  const auto m0 = moments(reps, [&](std::size_t r) { return avg(r, 0); });
  const auto m1 = moments(reps, [&](std::size_t r) { return avg(r, 1) - avg(r, 0); });
  CHECK(std::abs(m0.var - 1.0 / n) <= 3 * var_se(m0));
  CHECK(std::abs(m1.var - 1.0 / n) <= 3 * var_se(m1));
}

TEST_CASE("antisymmetric drift conserves the mean") {
  SimulationOptions opts;
  opts.seed = 10;
  const std::size_t reps = 10'000;
  const auto g = gen_regular_tree(3, 2);
  const auto m = DiffusionModel::pairwise([](double, double x, double y) { return std::sin(y - x); }, 1.0);
  const auto ens = simulate_diffusion(g, m, DiffusionInitial::iid([](Stream& s) { return 2.0 * s.uniform(); }),
                                      1.0, 0.01, reps, opts, 100);
  // For a regular graph the drift sum cancels edge by edge; on the tree the
  // degree weights differ, so compare the degree-weighted sum.
  const auto weighted = [&](std::size_t r, std::size_t k) {
    double s = 0.0;
    for (Vertex v = 0; v < g.num_vertices(); ++v) s += static_cast<double>(g.degree(v)) * ens.value(r, k, v);
    return s;
  };
  const auto d = moments(reps, [&](std::size_t r) { return weighted(r, 1) - weighted(r, 0); });
  CHECK(std::abs(d.mean) <= 3 * std::sqrt(d.var / reps));

  const auto ring = simulate_diffusion(gen_cycle(8), m, DiffusionInitial::iid([](Stream& s) { return s.normal(); }),
                                       1.0, 0.01, reps, opts, 100);
  const auto dr = moments(reps, [&](std::size_t r) {
    double s = 0.0;
    for (Vertex v = 0; v < 8; ++v) s += ring.value(r, 1, v) - ring.value(r, 0, v);
    return s;
  });
  CHECK(std::abs(dr.mean) <= 3 * std::sqrt(dr.var / reps));
}

TEST_CASE("exchangeable vertices on a cycle") {
  SimulationOptions opts;
  opts.seed = 12;
  const std::size_t reps = 10'000;
  const auto m = DiffusionModel::pairwise([](double, double x, double y) { return std::tanh(y) - 0.5 * x; });
  const auto ens = simulate_diffusion(gen_cycle(6), m, DiffusionInitial::iid([](Stream& s) { return s.normal(); }),
                                      1.0, 0.01, reps, opts, 100);
  std::vector<Moments> mo;
  for (Vertex v = 0; v < 6; ++v) mo.push_back(moments(reps, [&](std::size_t r) { return ens.value(r, 1, v); }));
  for (Vertex u = 0; u < 6; ++u)
    for (Vertex v = u + 1; v < 6; ++v)
      CHECK(std::abs(mo[u].mean - mo[v].mean) <= 3 * std::sqrt((mo[u].var + mo[v].var) / reps));
}

TEST_CASE("first-order weak error in the step size") {
  // Mean of the OU process from x0 = 1 at t = 1; successive differences of
  // the estimates for dt, dt/2, dt/4 should shrink by a factor near 2.
  const std::size_t n = 2000, reps = 2000;
  const auto m = DiffusionModel::pairwise([](double, double x, double) { return -x; });
  const auto g = RootedGraph::from_edges(n, {});
  const auto xi = DiffusionInitial::fixed(std::vector<double>(n, 1.0));
  std::vector<double> means;
  for (double dt : {0.2, 0.1, 0.05}) {
    SimulationOptions opts;
    opts.seed = 77;
    const auto steps = static_cast<std::size_t>(std::llround(1.0 / dt));
    const auto ens = simulate_diffusion(g, m, xi, 1.0, dt, reps, opts, steps);
    double s = 0.0;
    for (std::size_t r = 0; r < reps; ++r)
      for (Vertex v = 0; v < n; ++v) s += ens.value(r, 1, v);
    means.push_back(s / static_cast<double>(n * reps));
  }
  const double ratio = (means[1] - means[0]) / (means[2] - means[1]);
  CHECK(ratio >= 1.5);
  CHECK(ratio <= 2.5);
}

TEST_CASE("errors") {
  SimulationOptions opts;
  const auto blowup = DiffusionModel::pairwise(
      [](double t, double, double) { return t > 0.05 ? std::numeric_limits<double>::quiet_NaN() : 0.0; });
  try {
    simulate_diffusion(gen_cycle(3), blowup, DiffusionInitial::fixed({0, 0, 0}), 1.0, 0.01, 2, opts);
    FAIL("expected a numerical error");
  } catch (const NumericalError& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
  const auto bounded = DiffusionModel::pairwise([](double, double x, double) { return -x; }, 0.5);
  CHECK_THROWS_AS(simulate_diffusion(gen_cycle(3), bounded, DiffusionInitial::fixed({5, 5, 5}), 1.0, 0.01, 2, opts),
                  NumericalError);
  CHECK_THROWS_AS(simulate_diffusion(gen_cycle(3), bounded, DiffusionInitial::fixed({0, 0, 0}), 1.0, 0.0, 2, opts),
                  InvalidInput);
}

TEST_CASE("thread-independent output and csv") {
  const auto m = DiffusionModel::pairwise([](double, double x, double y) { return std::sin(y - x); });
  const auto xi = DiffusionInitial::iid([](Stream& s) { return s.normal(); });
  SimulationOptions one, many;
  one.threads = 1;
  many.threads = 4;
  const auto a = simulate_diffusion(gen_cycle(4), m, xi, 0.5, 0.1, 16, one);
  const auto b = simulate_diffusion(gen_cycle(4), m, xi, 0.5, 0.1, 16, many);
  std::ostringstream sa, sb;
  write_diffusion_csv(sa, a);
  write_diffusion_csv(sb, b);
  CHECK(sa.str() == sb.str());
  CHECK(sa.str().rfind("replica,vertex,t,value\n", 0) == 0);
  CHECK(a.grid_index(0.26) == 3);
}
