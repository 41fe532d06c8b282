#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "sparse_ips/diffusion_dynamics.hpp"
#include "sparse_ips/graphs.hpp"
#include "sparse_ips/jump_dynamics.hpp"

namespace sparse_ips {

/// Time series of a proportion with 95% confidence half-widths.
struct TimeSeriesWithCI {
  std::vector<double> grid;
  std::vector<double> mean;
  std::vector<double> halfwidth;
  std::size_t replicas = 0;
};

struct ProportionEstimate {
  double mean;
  double halfwidth;
};

/// Wald interval for n >= 1000, Wilson score interval below. The mean is
/// always the sample proportion; for Wilson the half-width is widened so that
/// mean +- halfwidth covers the whole score interval. z = 1.96.
ProportionEstimate proportion_ci(std::size_t successes, std::size_t n);

/// Builds a series from per-grid success counts.
TimeSeriesWithCI proportion_series(std::vector<double> grid, std::span<const std::size_t> successes,
                                   std::size_t replicas);

void write_series_csv(std::ostream& os, const TimeSeriesWithCI& s);

// ---------------------------------------------------------------------------
// Empirical measures and distances

/// (1/|V|) sum_v delta_{X_v(t)} for one replica, or averaged over replicas
/// when `replica` is empty.
std::vector<double> empirical_measure(const JumpTrajectoryEnsemble& ens, double t,
                                      std::optional<std::size_t> replica = std::nullopt);
std::vector<double> empirical_measure(std::span<const State> config, std::size_t num_states);

/// Probability vector on a finite set with the 0/1 ground metric.
struct DiscreteLaw {
  std::vector<double> probs;
};
/// Weighted samples on the real line; empty weights mean equal weights.
struct RealSamples {
  std::vector<double> values;
  std::vector<double> weights;
};
using Distribution = std::variant<DiscreteLaw, RealSamples>;

/// W_p between two distributions on the same ground space. On the real line
/// it is computed through the quantile coupling; on a discrete space with the
/// 0/1 metric W_1 equals total variation (and W_p = TV^{1/p}). Throws
/// InvalidInput on mismatched ground spaces.
double wasserstein(const Distribution& mu, const Distribution& nu, double p = 1.0);
double total_variation(std::span<const double> mu, std::span<const double> nu);

// ---------------------------------------------------------------------------
// Agreement curves

/// Fraction of replicas in which the root agrees with exactly k of its
/// neighbours, at each grid time. Throws InvalidInput when the root has
/// degree 0 or a degree other than kappa.
TimeSeriesWithCI root_agreement_curve(const JumpTrajectoryEnsemble& ens, std::size_t kappa,
                                      std::size_t k, std::span<const double> grid);

/// Number of root neighbours sharing the root's state.
std::size_t root_agreement_count(const RootedGraph& g, std::span<const State> config);

// ---------------------------------------------------------------------------
// Correlation decay

struct CorrelationProfile {
  std::vector<std::size_t> distance;  // only distances with at least one pair
  std::vector<double> covariance;
  std::vector<double> std_error;
  std::vector<std::size_t> pairs;
};

/// Average over vertex pairs at graph distance d of the across-replica
/// covariance of the states at time t, for d = 0..max_dist. Distances with
/// no pairs are omitted.
CorrelationProfile correlation_decay_profile(const JumpTrajectoryEnsemble& ens, double t,
                                             std::size_t max_dist);
CorrelationProfile correlation_decay_profile(const DiffusionPathEnsemble& ens, double t,
                                             std::size_t max_dist);
/// Core routine on values[r][v].
CorrelationProfile correlation_decay_profile(const RootedGraph& g,
                                             const std::vector<std::vector<double>>& values,
                                             std::size_t max_dist);

// ---------------------------------------------------------------------------
// Markov random field diagnostic

struct CmiResult {
  double cmi_bits = 0.0;
  double bias_bound = 0.0;  // (cells - 1) / (2 M ln 2)
  std::size_t cells = 0;
  std::size_t samples = 0;
  double samples_per_cell = 0.0;
};

/// Plug-in conditional mutual information I(A; B | C) in bits from paired
/// symbol streams with the given alphabet sizes.
CmiResult plugin_cmi(std::span<const std::uint64_t> a, std::span<const std::uint64_t> b,
                     std::span<const std::uint64_t> c, std::size_t alphabet_a,
                     std::size_t alphabet_b, std::size_t alphabet_c);

struct MrfDiagnostic {
  CmiResult second_order;  // I(path_0 ; path_{3,4} | path_{1,2})
  CmiResult first_order;   // I(path_0 ; path_{2,3,4} | path_1)
};

/// Encodes each vertex's path as its states at `time_points` (at most 3) and
/// estimates the two conditional mutual informations along a 5-vertex path,
/// with vertex 0 an endpoint.
MrfDiagnostic cmi_2mrf_diagnostic(const JumpTrajectoryEnsemble& ens,
                                  std::span<const double> time_points);

/// Same diagnostic from states recorded on the grid: states[(r * T + i) * 5 + v]
/// is vertex v at the i-th of T time points in replica r.
MrfDiagnostic cmi_2mrf_diagnostic(const RootedGraph& path, std::span<const State> states,
                                  std::size_t num_times, std::size_t num_states);

}  // namespace sparse_ips
