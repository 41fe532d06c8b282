#include "sparse_ips/observables.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <ostream>
#include <unordered_map>

#include "sparse_ips/csv.hpp"
#include "sparse_ips/errors.hpp"

namespace sparse_ips {

namespace {

constexpr double kZ = 1.96;

}  // namespace

ProportionEstimate proportion_ci(std::size_t successes, std::size_t n) {
  if (n == 0) throw InvalidInput("proportion of an empty sample");
  if (successes > n) throw InvalidInput("more successes than trials");
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  if (n >= 1000) return {p, kZ * std::sqrt(p * (1.0 - p) / nn)};
  const double z2 = kZ * kZ;
  const double denom = 1.0 + z2 / nn;
  const double centre = (p + z2 / (2.0 * nn)) / denom;
  const double hw = kZ / denom * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn));
  return {p, std::max(centre + hw - p, p - (centre - hw))};
}

TimeSeriesWithCI proportion_series(std::vector<double> grid, std::span<const std::size_t> successes,
                                   std::size_t replicas) {
  if (grid.size() != successes.size()) throw InvalidInput("grid and counts differ in length");
  TimeSeriesWithCI s;
  s.grid = std::move(grid);
  s.replicas = replicas;
  for (std::size_t c : successes) {
    const auto e = proportion_ci(c, replicas);
    s.mean.push_back(e.mean);
    s.halfwidth.push_back(e.halfwidth);
  }
  return s;
}

void write_series_csv(std::ostream& os, const TimeSeriesWithCI& s) {
  os << "t,mean,halfwidth\n";
  for (std::size_t k = 0; k < s.grid.size(); ++k) {
    os << format_double(s.grid[k]) << ',' << format_double(s.mean[k]) << ','
       << format_double(s.halfwidth[k]) << '\n';
  }
}

std::vector<double> empirical_measure(std::span<const State> config, std::size_t num_states) {
  if (config.empty()) throw InvalidInput("empirical measure of an empty configuration");
  std::vector<double> mu(num_states, 0.0);
  for (State s : config) {
    if (s < 0 || static_cast<std::size_t>(s) >= num_states) throw InvalidInput("state out of range");
    mu[static_cast<std::size_t>(s)] += 1.0;
  }
  for (double& x : mu) x /= static_cast<double>(config.size());
  return mu;
}

std::vector<double> empirical_measure(const JumpTrajectoryEnsemble& ens, double t,
                                      std::optional<std::size_t> replica) {
  if (ens.num_replicas() == 0) throw InvalidInput("empty ensemble");
  State max_state = 0;
  for (std::size_t r = 0; r < ens.num_replicas(); ++r) {
    for (Vertex v = 0; v < ens.num_vertices(); ++v) {
      max_state = std::max(max_state, ens.initial_state(r, v));
      for (const auto& e : ens.events(r, v)) max_state = std::max(max_state, e.new_state);
    }
  }
  const auto S = static_cast<std::size_t>(max_state) + 1;
  if (replica) {
    if (*replica >= ens.num_replicas()) throw InvalidInput("replica index out of range");
    return empirical_measure(ens.configuration_at(*replica, t), S);
  }
  std::vector<double> mu(S, 0.0);
  for (std::size_t r = 0; r < ens.num_replicas(); ++r) {
    const auto m = empirical_measure(ens.configuration_at(r, t), S);
    for (std::size_t s = 0; s < S; ++s) mu[s] += m[s];
  }
  for (double& x : mu) x /= static_cast<double>(ens.num_replicas());
  return mu;
}

double total_variation(std::span<const double> mu, std::span<const double> nu) {
  const std::size_t n = std::max(mu.size(), nu.size());
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double a = i < mu.size() ? mu[i] : 0.0;
    const double b = i < nu.size() ? nu[i] : 0.0;
    s += std::abs(a - b);
  }
  return 0.5 * s;
}

namespace {

struct Quantile {
  std::vector<double> values;
  std::vector<double> cum;  // cum[i] = mass of values[0..i]
};

Quantile sorted_quantile(const RealSamples& s) {
  if (s.values.empty()) throw InvalidInput("empty sample");
  if (!s.weights.empty() && s.weights.size() != s.values.size()) {
    throw InvalidInput("weights and values differ in length");
  }
  std::vector<std::size_t> idx(s.values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return s.values[a] < s.values[b]; });
  Quantile q;
  double total = 0.0;
  for (std::size_t i : idx) {
    const double w = s.weights.empty() ? 1.0 : s.weights[i];
    if (!(w >= 0.0) || !std::isfinite(s.values[i])) throw InvalidInput("bad sample or weight");
    total += w;
    q.values.push_back(s.values[i]);
    q.cum.push_back(total);
  }
  if (!(total > 0.0)) throw InvalidInput("zero total weight");
  for (double& c : q.cum) c /= total;
  q.cum.back() = 1.0;
  return q;
}

double wasserstein_real(const RealSamples& a, const RealSamples& b, double p) {
  const auto qa = sorted_quantile(a);
  const auto qb = sorted_quantile(b);
  std::size_t i = 0, j = 0;
  double u = 0.0, acc = 0.0;
  while (i < qa.values.size() && j < qb.values.size()) {
    const double next = std::min(qa.cum[i], qb.cum[j]);
    acc += (next - u) * std::pow(std::abs(qa.values[i] - qb.values[j]), p);
    u = next;
    if (qa.cum[i] <= next) ++i;
    if (qb.cum[j] <= next) ++j;
  }
  return std::pow(acc, 1.0 / p);
}

}  // namespace

double wasserstein(const Distribution& mu, const Distribution& nu, double p) {
  if (!(p >= 1.0)) throw InvalidInput("wasserstein order must be at least 1");
  if (mu.index() != nu.index()) throw InvalidInput("distributions live on different ground spaces");
  if (const auto* a = std::get_if<DiscreteLaw>(&mu)) {
    const auto& b = std::get<DiscreteLaw>(nu);
    if (a->probs.size() != b.probs.size()) throw InvalidInput("discrete laws differ in support size");
    return std::pow(total_variation(a->probs, b.probs), 1.0 / p);
  }
  return wasserstein_real(std::get<RealSamples>(mu), std::get<RealSamples>(nu), p);
}

std::size_t root_agreement_count(const RootedGraph& g, std::span<const State> config) {
  const Vertex o = *g.root();
  std::size_t k = 0;
  for (Vertex u : g.neighbors(o)) k += config[u] == config[o];
  return k;
}

TimeSeriesWithCI root_agreement_curve(const JumpTrajectoryEnsemble& ens, std::size_t kappa,
                                      std::size_t k, std::span<const double> grid) {
  const auto& g = ens.graph();
  if (!g.root()) throw InvalidInput("agreement curve needs a rooted graph");
  const std::size_t deg = g.degree(*g.root());
  if (deg == 0) throw InvalidInput("root is isolated; agreement is undefined");
  if (deg != kappa) throw InvalidInput("root degree differs from kappa");
  if (k > kappa) throw InvalidInput("k exceeds kappa");
  if (ens.num_replicas() == 0) throw InvalidInput("empty ensemble");
  std::vector<std::size_t> hits(grid.size(), 0);
  const Vertex o = *g.root();
  for (std::size_t r = 0; r < ens.num_replicas(); ++r) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const State so = ens.state_at(r, o, grid[i]);
      std::size_t agree = 0;
      for (Vertex u : g.neighbors(o)) agree += ens.state_at(r, u, grid[i]) == so;
      hits[i] += agree == k;
    }
  }
  return proportion_series({grid.begin(), grid.end()}, hits, ens.num_replicas());
}

CorrelationProfile correlation_decay_profile(const RootedGraph& g,
                                             const std::vector<std::vector<double>>& values,
                                             std::size_t max_dist) {
  const std::size_t R = values.size();
  const std::size_t n = g.num_vertices();
  if (R < 2) throw InvalidInput("correlation profile needs at least two replicas");
  std::vector<double> mean(n, 0.0);
  for (const auto& row : values) {
    if (row.size() != n) throw InvalidInput("replica row has the wrong length");
    for (std::size_t v = 0; v < n; ++v) mean[v] += row[v];
  }
  for (double& m : mean) m /= static_cast<double>(R);

  // Pairs (u, v) with u <= v at each distance, found by truncated BFS.
  std::vector<std::vector<std::pair<Vertex, Vertex>>> pairs(max_dist + 1);
  std::vector<std::size_t> dist(n, SIZE_MAX);
  std::vector<Vertex> queue, touched;
  for (Vertex s = 0; s < n; ++s) {
    queue.assign(1, s);
    touched.assign(1, s);
    dist[s] = 0;
    for (std::size_t h = 0; h < queue.size(); ++h) {
      const Vertex x = queue[h];
      if (x >= s) pairs[dist[x]].emplace_back(s, x);
      if (dist[x] == max_dist) continue;
      for (Vertex y : g.neighbors(x)) {
        if (dist[y] == SIZE_MAX) {
          dist[y] = dist[x] + 1;
          queue.push_back(y);
          touched.push_back(y);
        }
      }
    }
    for (Vertex x : touched) dist[x] = SIZE_MAX;
  }

  CorrelationProfile out;
  const double rr = static_cast<double>(R);
  std::vector<double> z(R);
  for (std::size_t d = 0; d <= max_dist; ++d) {
    if (pairs[d].empty()) continue;
    for (std::size_t r = 0; r < R; ++r) {
      double s = 0.0;
      for (const auto& [u, v] : pairs[d]) s += (values[r][u] - mean[u]) * (values[r][v] - mean[v]);
      z[r] = s / static_cast<double>(pairs[d].size());
    }
    double zm = 0.0;
    for (double x : z) zm += x;
    zm /= rr;
    double zv = 0.0;
    for (double x : z) zv += (x - zm) * (x - zm);
    zv /= rr - 1.0;
    const double unbias = rr / (rr - 1.0);
    out.distance.push_back(d);
    out.covariance.push_back(zm * unbias);
    out.std_error.push_back(std::sqrt(zv / rr) * unbias);
    out.pairs.push_back(pairs[d].size());
  }
  return out;
}

CorrelationProfile correlation_decay_profile(const JumpTrajectoryEnsemble& ens, double t,
                                             std::size_t max_dist) {
  std::vector<std::vector<double>> values(ens.num_replicas());
  for (std::size_t r = 0; r < ens.num_replicas(); ++r) {
    const auto c = ens.configuration_at(r, t);
    values[r].assign(c.begin(), c.end());
  }
  return correlation_decay_profile(ens.graph(), values, max_dist);
}

CorrelationProfile correlation_decay_profile(const DiffusionPathEnsemble& ens, double t,
                                             std::size_t max_dist) {
  const std::size_t k = ens.grid_index(t);
  std::vector<std::vector<double>> values(ens.num_replicas());
  for (std::size_t r = 0; r < ens.num_replicas(); ++r) {
    const auto s = ens.snapshot(r, k);
    values[r].assign(s.begin(), s.end());
  }
  return correlation_decay_profile(ens.graph(), values, max_dist);
}

CmiResult plugin_cmi(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b,
                     std::span<const std::uint64_t> c, std::size_t alphabet_a,
                     std::size_t alphabet_b, std::size_t alphabet_c) {
  const std::size_t M = a.size();
  if (M == 0 || b.size() != M || c.size() != M) throw InvalidInput("symbol streams differ in length");
  std::unordered_map<std::uint64_t, std::size_t> nabc, nac, nbc, nc;
  for (std::size_t i = 0; i < M; ++i) {
    if (a[i] >= alphabet_a || b[i] >= alphabet_b || c[i] >= alphabet_c) {
      throw InvalidInput("symbol outside its alphabet");
    }
    const std::uint64_t ac = a[i] * alphabet_c + c[i];
    const std::uint64_t bc = b[i] * alphabet_c + c[i];
    ++nabc[(a[i] * alphabet_b + b[i]) * alphabet_c + c[i]];
    ++nac[ac];
    ++nbc[bc];
    ++nc[c[i]];
  }
  // Sum in key order so the result does not depend on hash iteration order.
  std::vector<std::pair<std::uint64_t, std::size_t>> cells(nabc.begin(), nabc.end());
  std::sort(cells.begin(), cells.end());
  const double m = static_cast<double>(M);
  double cmi = 0.0;
  for (const auto& [key, n] : cells) {
    const std::uint64_t ci = key % alphabet_c;
    const std::uint64_t ab = key / alphabet_c;
    const std::uint64_t bi = ab % alphabet_b;
    const std::uint64_t ai = ab / alphabet_b;
    const double pabc = static_cast<double>(n);
    const double pc = static_cast<double>(nc[ci]);
    const double pac = static_cast<double>(nac[ai * alphabet_c + ci]);
    const double pbc = static_cast<double>(nbc[bi * alphabet_c + ci]);
    cmi += pabc / m * std::log2(pabc * pc / (pac * pbc));
  }
  CmiResult r;
  r.cmi_bits = std::max(0.0, cmi);
  r.cells = alphabet_a * alphabet_b * alphabet_c;
  r.samples = M;
  r.bias_bound = static_cast<double>(r.cells - 1) / (2.0 * m * std::log(2.0));
  r.samples_per_cell = m / static_cast<double>(r.cells);
  return r;
}

namespace {

std::vector<Vertex> path_order(const RootedGraph& g) {
  if (g.num_vertices() != 5 || g.num_edges() != 4 || !g.is_tree() || g.max_degree() > 2) {
    throw InvalidInput("diagnostic needs a path on 5 vertices");
  }
  // Walk the path from the endpoint with the smaller index.
  Vertex start = 0;
  while (g.degree(start) != 1) ++start;
  std::vector<Vertex> order{start};
  while (order.size() < 5) {
    for (Vertex u : g.neighbors(order.back())) {
      if (order.size() < 2 || u != order[order.size() - 2]) {
        order.push_back(u);
        break;
      }
    }
  }
  return order;
}

}  // namespace

MrfDiagnostic cmi_2mrf_diagnostic(const RootedGraph& path, std::span<const State> states,
                                  std::size_t num_times, std::size_t num_states) {
  if (num_times == 0 || num_times > 3) throw InvalidInput("diagnostic uses between 1 and 3 time points");
  if (num_states < 2) throw InvalidInput("diagnostic needs at least two states");
  const auto order = path_order(path);
  if (states.empty() || states.size() % (5 * num_times) != 0) {
    throw InvalidInput("state array does not match the path and time grid");
  }
  const std::size_t M = states.size() / (5 * num_times);
  const auto S = static_cast<std::uint64_t>(num_states);
  std::uint64_t A = 1;
  for (std::size_t i = 0; i < num_times; ++i) A *= S;

  std::vector<std::uint64_t> a(M), b2(M), c2(M), b1(M), c1(M);
  std::array<std::uint64_t, 5> sym{};
  for (std::size_t r = 0; r < M; ++r) {
    for (std::size_t p = 0; p < 5; ++p) {
      std::uint64_t code = 0;
      for (std::size_t i = 0; i < num_times; ++i) {
        const State s = states[(r * num_times + i) * 5 + order[p]];
        if (s < 0 || static_cast<std::uint64_t>(s) >= S) throw InvalidInput("state out of range");
        code = code * S + static_cast<std::uint64_t>(s);
      }
      sym[p] = code;
    }
    a[r] = sym[0];
    c1[r] = sym[1];
    c2[r] = sym[1] * A + sym[2];
    b2[r] = sym[3] * A + sym[4];
    b1[r] = (sym[2] * A + sym[3]) * A + sym[4];
  }
  MrfDiagnostic d;
  d.second_order = plugin_cmi(a, b2, c2, A, A * A, A * A);
  d.first_order = plugin_cmi(a, b1, c1, A, A * A * A, A);
  return d;
}

MrfDiagnostic cmi_2mrf_diagnostic(const JumpTrajectoryEnsemble& ens,
                                  std::span<const double> time_points) {
  if (time_points.empty() || time_points.size() > 3) {
    throw InvalidInput("diagnostic uses between 1 and 3 time points");
  }
  const std::size_t T = time_points.size();
  std::vector<State> states(ens.num_replicas() * T * 5);
  State max_state = 1;
  for (std::size_t r = 0; r < ens.num_replicas(); ++r) {
    for (std::size_t i = 0; i < T; ++i) {
      for (Vertex v = 0; v < std::min<std::size_t>(5, ens.num_vertices()); ++v) {
        const State s = ens.state_at(r, v, time_points[i]);
        states[(r * T + i) * 5 + v] = s;
        max_state = std::max(max_state, s);
      }
    }
  }
  return cmi_2mrf_diagnostic(ens.graph(), states, T, static_cast<std::size_t>(max_state) + 1);
}

}  // namespace sparse_ips
