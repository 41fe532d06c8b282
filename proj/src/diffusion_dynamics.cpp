#include "sparse_ips/diffusion_dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "sparse_ips/csv.hpp"
#include "sparse_ips/errors.hpp"
#include "sparse_ips/parallel.hpp"

namespace sparse_ips {

DiffusionModel DiffusionModel::pairwise(PairwiseFn beta, double bound) {
  if (!beta) throw InvalidInput("pairwise diffusion model needs a potential");
  DiffusionModel m;
  m.beta_ = std::move(beta);
  m.bound_ = bound;
  return m;
}

DiffusionModel DiffusionModel::general(MeasureDriftFn b, double bound) {
  if (!b) throw InvalidInput("diffusion model needs a drift");
  DiffusionModel m;
  m.general_ = std::move(b);
  m.bound_ = bound;
  return m;
}

double DiffusionModel::drift(double t, double x, std::span<const double> nu) const {
  double b;
  if (beta_) {
    double s = 0.0;
    for (double y : nu) s += beta_(t, x, y);
    b = nu.empty() ? 0.0 : s / static_cast<double>(nu.size());
  } else {
    b = general_(t, x, nu);
  }
  if (std::abs(b) > bound_) {
    throw NumericalError("drift " + format_double(b) + " exceeds declared bound " +
                         format_double(bound_) + " at t=" + format_double(t) +
                         ", x=" + format_double(x));
  }
  return b;
}

DiffusionInitial DiffusionInitial::fixed(std::vector<double> values) {
  DiffusionInitial d;
  d.fixed_ = std::move(values);
  return d;
}

DiffusionInitial DiffusionInitial::iid(Sampler sampler) {
  DiffusionInitial d;
  d.sampler_ = std::move(sampler);
  return d;
}

double DiffusionInitial::draw(std::uint64_t seed, std::size_t replica, Vertex v) const {
  if (sampler_) {
    Stream rng(seed, replica, v, stream_tag::kInitial);
    return sampler_(rng);
  }
  return fixed_.at(v);
}

std::size_t DiffusionPathEnsemble::grid_index(double t) const {
  const auto it = std::lower_bound(grid_.begin(), grid_.end(), t);
  if (it == grid_.end()) return grid_.size() - 1;
  const auto k = static_cast<std::size_t>(it - grid_.begin());
  if (k > 0 && std::abs(grid_[k - 1] - t) < std::abs(grid_[k] - t)) return k - 1;
  return k;
}

DiffusionPathEnsemble simulate_diffusion(const RootedGraph& g, const DiffusionModel& m,
                                         const DiffusionInitial& xi, double horizon, double dt,
                                         std::size_t replicas, const SimulationOptions& options,
                                         std::size_t record_stride) {
  if (!(dt > 0.0) || !(horizon > 0.0)) throw InvalidInput("diffusion needs dt > 0 and horizon > 0");
  if (record_stride == 0) throw InvalidInput("record_stride must be positive");
  const auto steps = static_cast<std::size_t>(std::llround(horizon / dt));
  const std::size_t n = g.num_vertices();
  std::vector<double> grid;
  for (std::size_t k = 0; k <= steps; ++k) {
    if (k % record_stride == 0 || k == steps) grid.push_back(static_cast<double>(k) * dt);
  }
  std::vector<std::vector<double>> values(replicas);
  const double sqdt = std::sqrt(dt);

  parallel_for(replicas, options.threads, [&](std::size_t r) {
    std::vector<double> cur(n), next(n), nu;
    std::vector<Stream> rngs;
    rngs.reserve(n);
    for (Vertex v = 0; v < n; ++v) {
      cur[v] = xi.draw(options.seed, r, v);
      if (!std::isfinite(cur[v])) throw NumericalError("non-finite initial value");
      rngs.emplace_back(options.seed, r, v, stream_tag::kDynamics);
    }
    auto& out = values[r];
    out.reserve(grid.size() * n);
    out.insert(out.end(), cur.begin(), cur.end());
    for (std::size_t k = 0; k < steps; ++k) {
      const double t = static_cast<double>(k) * dt;
      for (Vertex v = 0; v < n; ++v) {
        const auto nb = g.neighbors(v);
        nu.clear();
        if (nb.empty()) {
          nu.push_back(cur[v]);
        } else {
          for (Vertex u : nb) nu.push_back(cur[u]);
        }
        next[v] = cur[v] + m.drift(t, cur[v], nu) * dt + sqdt * rngs[v].normal();
        if (!std::isfinite(next[v])) {
          throw NumericalError("non-finite value at step " + std::to_string(k + 1) + ", vertex " +
                               std::to_string(v));
        }
      }
      std::swap(cur, next);
      if ((k + 1) % record_stride == 0 || k + 1 == steps) out.insert(out.end(), cur.begin(), cur.end());
    }
  });
  return DiffusionPathEnsemble(g, std::move(grid), std::move(values));
}

void write_diffusion_csv(std::ostream& os, const DiffusionPathEnsemble& ens) {
  os << "replica,vertex,t,value\n";
  for (std::size_t r = 0; r < ens.num_replicas(); ++r) {
    for (std::size_t k = 0; k < ens.grid().size(); ++k) {
      for (Vertex v = 0; v < ens.num_vertices(); ++v) {
        os << r << ',' << v << ',' << format_double(ens.grid()[k]) << ','
           << format_double(ens.value(r, k, v)) << '\n';
      }
    }
  }
}

}  // namespace sparse_ips
