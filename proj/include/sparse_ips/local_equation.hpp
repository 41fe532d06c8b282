#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "sparse_ips/diffusion_dynamics.hpp"
#include "sparse_ips/jump_dynamics.hpp"
#include "sparse_ips/jump_model.hpp"
#include "sparse_ips/observables.hpp"

namespace sparse_ips {

/// Law of (X_o, X_1, ..., X_kappa) on X^{kappa+1} along a time grid.
/// Configuration index: x_o * S^kappa + x_1 * S^(kappa-1) + ... + x_kappa.
struct LocalEqJointLaw {
  std::size_t kappa = 0;
  std::size_t num_states = 0;
  std::vector<double> grid;
  std::vector<std::vector<double>> values;

  std::size_t num_configs() const;
  std::vector<State> decode(std::size_t index) const;
  std::size_t encode(std::span<const State> config) const;

  std::vector<double> root_marginal(std::size_t k) const;
  /// P(root agrees with exactly `agree` leaves) at grid index k.
  double agreement_probability(std::size_t k, std::size_t agree) const;
  std::vector<double> agreement_curve(std::size_t agree) const;
};

/// Closure rates gamma_j(t, x, y) on a time grid: the rate at which a leaf in
/// state x jumps by j while its parent (the root) is in state y.
struct GammaTable {
  std::size_t num_jumps = 0;
  std::size_t num_states = 0;
  std::vector<double> grid;
  /// values[k][(j * S + x) * S + y].
  std::vector<std::vector<double>> values;
  /// Entries whose conditioning event was (numerically) empty.
  std::vector<std::vector<std::uint8_t>> fallback;

  double at(std::size_t k, std::size_t j, State x, State y) const {
    return values[k][(j * num_states + static_cast<std::size_t>(x)) * num_states +
                     static_cast<std::size_t>(y)];
  }
  std::size_t fallback_count() const;
};

/// Largest absolute entry-wise difference; grids and shapes must match.
double sup_distance(const GammaTable& a, const GammaTable& b);

/// Conditional probability mass below which a closure entry uses the
/// fallback rule.
inline constexpr double kConditioningFloor = 1e-12;

/// E[r_j(t, x, theta)] where theta holds one neighbour in state y and
/// kappa - 1 i.i.d. draws from nu (the closure under independence).
double independent_closure_rate(const JumpModel& m, std::size_t kappa, double t, std::size_t j,
                                State x, State y, std::span<const double> nu);

struct LocalEqSolution {
  LocalEqJointLaw law;
  GammaTable gamma;
};

/// Closed master equation on X^{kappa+1}: the root jumps at its exact rate
/// given the leaves, each leaf at gamma_j(t, x_k, x_o) with
///   gamma_j(t, x, y) = E[ r_j(t, X_o, theta_o) | X_o = x, X_1 = y ]
/// computed from the current law (pooled over exchangeable leaves). A
/// conditioning event below kConditioningFloor keeps the previous grid value,
/// or the independent closure rate at the first grid point, and is flagged.
/// RK4 with clip-and-renormalize; records every `record_stride` steps.
LocalEqSolution solve_local_eq_ode(const JumpModel& m, std::size_t kappa,
                                   std::span<const double> mu0, double horizon, double dt,
                                   std::size_t record_stride = 1);

struct LocalEqMcOptions {
  std::size_t replicas = 100'000;
  std::size_t max_iters = 50;
  double tol = 0.005;
  double damping = 0.5;  // weight on the old table
  SimulationOptions sim;
};

struct LocalEqMcResult {
  GammaTable gamma;
  LocalEqJointLaw law;
  bool converged = false;
  std::size_t iterations = 0;
  std::vector<double> sup_changes;
  /// Replica count behind each joint-law estimate.
  std::size_t replicas = 0;
};

/// Self-consistent Monte Carlo: simulate the (kappa+1)-particle system with
/// leaves driven by the current table (piecewise constant between grid
/// points), re-estimate the table from the root's realized rates, damp and
/// repeat until the sup change is at most tol. Every iteration reuses the
/// same random streams. The first table is the independent closure under
/// the mean-field flow (or mu0 when the model has no mean-field rates).
LocalEqMcResult simulate_local_eq_fixed_point(const JumpModel& m, std::size_t kappa,
                                              std::span<const double> mu0, double horizon,
                                              double dt, const LocalEqMcOptions& options);

struct DiffusionLocalEqOptions {
  std::size_t replicas = 100'000;
  std::size_t bins = 32;
  std::size_t max_iters = 20;
  double tol = 0.02;
  double damping = 0.5;
  SimulationOptions sim;
  std::size_t record_stride = 1;
};

/// Binned closure at one time step: values[bx * B + by] approximates
/// gamma(x, y) with x the coordinate of the conditioning vertex and y that of
/// its neighbour.
struct BinnedClosure {
  std::vector<double> edges_x;  // B - 1 interior edges
  std::vector<double> edges_y;
  std::vector<double> centre_x;  // cell centroids, indexed like values
  std::vector<double> centre_y;
  std::vector<double> values;
  std::size_t bins = 0;

  double lookup(double x, double y) const;
};

struct DiffusionLocalEqResult {
  std::size_t kappa = 0;
  std::vector<double> grid;
  /// samples[k][r * (kappa + 1) + i], i = 0 for the root.
  std::vector<std::vector<double>> samples;
  /// Closure used in the final pass, one per Euler step.
  std::vector<BinnedClosure> closure;
  bool converged = false;
  std::size_t iterations = 0;
  std::vector<double> sup_changes;
  std::size_t empty_bin_fallbacks = 0;

  std::vector<double> root_samples(std::size_t k) const;
};

/// Markovian local equation for a pairwise diffusion on the kappa-regular
/// tree: the root has drift (1/kappa) sum_k beta(x_o, x_k); leaf k has drift
///   (1/kappa) [ beta(x_k, x_o) + (kappa - 1) gamma_t(x_k, x_o) ],
/// where gamma_t(x, y) approximates E[beta(X_o, X_j) | X_o = x, X_i = y] for
/// distinct leaves i, j, estimated by binned regression on equal-probability
/// bins and iterated with damping. Empty bins take the nearest populated bin
/// and are counted.
DiffusionLocalEqResult markovian_local_eq_diffusion(const DiffusionModel& m, std::size_t kappa,
                                                    const DiffusionInitial::Sampler& mu0_sampler,
                                                    double horizon, double dt,
                                                    const DiffusionLocalEqOptions& options);

/// Root agreement curve from direct simulation on gen_regular_tree(kappa,
/// depth), evaluated on `grid`. Streams, so large ensembles are fine.
TimeSeriesWithCI direct_tree_baseline(const JumpModel& m, std::size_t kappa, std::size_t depth,
                                      std::span<const double> mu0, std::span<const double> grid,
                                      std::size_t agree, std::size_t replicas,
                                      const SimulationOptions& options);

// CSV: "t,j,x,y,rate" and "t,config,probability".
void write_gamma_csv(std::ostream& os, const GammaTable& g);
void write_joint_law_csv(std::ostream& os, const LocalEqJointLaw& law);

}  // namespace sparse_ips
