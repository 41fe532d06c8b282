#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "sparse_ips/diffusion_dynamics.hpp"
#include "sparse_ips/jump_dynamics.hpp"
#include "sparse_ips/jump_model.hpp"

namespace sparse_ips {

/// Time-indexed probability vectors over a finite state space (the jump
/// case of a measure flow).
struct SimplexFlow {
  std::vector<double> grid;
  std::vector<std::vector<double>> values;

  /// Index of the grid point nearest to t.
  std::size_t index_of(double t) const;
  const std::vector<double>& at(double t) const { return values[index_of(t)]; }
};

/// Time-indexed weighted samples on the real line (the diffusion case).
/// Empty weights mean equal weights.
struct SampleFlow {
  std::vector<double> grid;
  std::vector<std::vector<double>> samples;
  std::vector<std::vector<double>> weights;

  std::size_t index_of(double t) const;
  double mean(std::size_t k) const;
  double variance(std::size_t k) const;
};

/// Simplex entries below -kSimplexViolation before clipping abort the solve.
inline constexpr double kSimplexViolation = 1e-6;

/// Forward equation of the mean-field jump process,
///   d mu(x)/dt = sum_j [ mu(x-j) r_j(t, x-j, mu) - mu(x) r_j(t, x, mu) ],
/// using the model's normalized (mean-field) rates, integrated with RK4 and
/// clipped/renormalized after every step. Records every `record_stride`
/// steps. Throws StepSizeError when a step leaves the simplex by more than
/// kSimplexViolation.
SimplexFlow solve_mf_master(const JumpModel& m, std::span<const double> mu0, double horizon,
                            double dt, std::size_t record_stride = 1);

/// N-particle approximation of the nonlinear jump process: particle i jumps
/// at rate r_j(t, x_i, mu_N) with the empirical law mu_N frozen over each
/// window of length dt. Returns the empirical flow at window boundaries.
SimplexFlow simulate_nonlinear_jump(const JumpModel& m, std::span<const double> mu0,
                                    double horizon, std::size_t particles, double dt,
                                    const SimulationOptions& options);

/// N-particle Euler-Maruyama scheme for the McKean-Vlasov diffusion with
/// drift b(t, x_i, mu_N(t)).
SampleFlow solve_mckean_vlasov_diffusion(const DiffusionModel& m,
                                         const DiffusionInitial::Sampler& mu0_sampler,
                                         double horizon, std::size_t particles, double dt,
                                         const SimulationOptions& options,
                                         std::size_t record_stride = 1);

/// P(root agrees with exactly k of kappa neighbours) when root and
/// neighbours are i.i.d. with law mu.
double independent_agreement_probability(std::span<const double> mu, std::size_t kappa,
                                         std::size_t k);

/// The same statistic along a flow.
std::vector<double> mf_agreement_statistic(const SimplexFlow& flow, std::size_t kappa,
                                           std::size_t k);

// CSV: "t,state,probability" and "t,sample,value,weight".
void write_simplex_flow_csv(std::ostream& os, const SimplexFlow& flow);
void write_sample_flow_csv(std::ostream& os, const SampleFlow& flow);

}  // namespace sparse_ips
