#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <limits>
#include <span>
#include <vector>

#include "sparse_ips/graphs.hpp"
#include "sparse_ips/jump_dynamics.hpp"
#include "sparse_ips/random.hpp"

namespace sparse_ips {

/// Pairwise potential beta(t, x, y).
using PairwiseFn = std::function<double(double t, double x, double y)>;
/// General drift b(t, x, nu) with nu given as equally weighted samples.
using MeasureDriftFn = std::function<double(double t, double x, std::span<const double> nu)>;

/// Scalar diffusion with unit diffusion coefficient. The drift of a particle
/// at x whose neighbourhood (or population) has empirical law nu is either
/// the nu-average of a pairwise potential or a general functional of nu.
class DiffusionModel {
 public:
  static DiffusionModel pairwise(PairwiseFn beta,
                                 double bound = std::numeric_limits<double>::infinity());
  static DiffusionModel general(MeasureDriftFn b,
                                double bound = std::numeric_limits<double>::infinity());

  /// b(t, x, nu). Throws NumericalError if |b| exceeds the declared bound.
  double drift(double t, double x, std::span<const double> nu) const;
  bool is_pairwise() const { return static_cast<bool>(beta_); }
  /// Requires is_pairwise().
  double beta(double t, double x, double y) const { return beta_(t, x, y); }
  double bound() const { return bound_; }

 private:
  PairwiseFn beta_;
  MeasureDriftFn general_;
  double bound_ = std::numeric_limits<double>::infinity();
};

/// Initial values: fixed per vertex, or i.i.d. from a sampler.
class DiffusionInitial {
 public:
  using Sampler = std::function<double(Stream&)>;
  static DiffusionInitial fixed(std::vector<double> values);
  static DiffusionInitial iid(Sampler sampler);
  double draw(std::uint64_t seed, std::size_t replica, Vertex v) const;

 private:
  std::vector<double> fixed_;
  Sampler sampler_;
};

/// Grid-sampled paths: values(r)[k * n + v] is vertex v at grid[k].
class DiffusionPathEnsemble {
 public:
  DiffusionPathEnsemble(RootedGraph graph, std::vector<double> grid,
                        std::vector<std::vector<double>> values)
      : graph_(std::move(graph)), grid_(std::move(grid)), values_(std::move(values)) {}

  const RootedGraph& graph() const { return graph_; }
  const std::vector<double>& grid() const { return grid_; }
  std::size_t num_replicas() const { return values_.size(); }
  std::size_t num_vertices() const { return graph_.num_vertices(); }
  double value(std::size_t r, std::size_t k, Vertex v) const {
    return values_[r][k * num_vertices() + v];
  }
  std::span<const double> snapshot(std::size_t r, std::size_t k) const {
    return {values_[r].data() + k * num_vertices(), num_vertices()};
  }
  /// Index of the grid point closest to t.
  std::size_t grid_index(double t) const;

 private:
  RootedGraph graph_;
  std::vector<double> grid_;
  std::vector<std::vector<double>> values_;
};

/// Euler-Maruyama for dX_v = b(t, X_v, nu_v) dt + dW_v where nu_v is the
/// empirical law of the neighbours of v (delta at X_v for isolated v).
/// Values are recorded every `record_stride` steps. Throws NumericalError on
/// a non-finite value, naming the step.
DiffusionPathEnsemble simulate_diffusion(const RootedGraph& g, const DiffusionModel& m,
                                         const DiffusionInitial& xi, double horizon, double dt,
                                         std::size_t replicas, const SimulationOptions& options,
                                         std::size_t record_stride = 1);

/// CSV: "replica,vertex,t,value".
void write_diffusion_csv(std::ostream& os, const DiffusionPathEnsemble& ens);

}  // namespace sparse_ips
