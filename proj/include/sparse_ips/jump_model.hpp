#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace sparse_ips {

/// Index of a state in the model's ordered state list X.
using State = std::int32_t;

/// Unnormalized empirical measure of neighbour states: counts[s] neighbours
/// are in state s and total is the degree.
class NeighborCountMeasure {
 public:
  NeighborCountMeasure() = default;
  explicit NeighborCountMeasure(std::size_t num_states) : counts_(num_states, 0) {}
  NeighborCountMeasure(std::vector<int> counts);

  void reset() {
    std::fill(counts_.begin(), counts_.end(), 0);
    total_ = 0;
  }
  void add(State s) {
    ++counts_[static_cast<std::size_t>(s)];
    ++total_;
  }
  int operator[](State s) const { return counts_[static_cast<std::size_t>(s)]; }
  int total() const { return total_; }
  std::span<const int> counts() const { return counts_; }

 private:
  std::vector<int> counts_;
  int total_ = 0;
};

/// rates(t, x, theta, out): writes the rate of each jump direction (in the
/// order of JumpModel::jumps) into out.
using JumpRateFn =
    std::function<void(double t, State x, const NeighborCountMeasure& theta, std::span<double> out)>;

/// Normalized rates for mean-field use: nu is a probability vector over X.
using MeanFieldRateFn =
    std::function<void(double t, State x, std::span<const double> nu, std::span<double> out)>;

/// Bound C_{k,T} on the total jump rate of a vertex of degree k up to time T.
using EnvelopeFn = std::function<double(std::size_t degree, double horizon)>;

/// Finite-state interacting jump model. A jump j from state x is legal only
/// when x + j lies in [0, num_states); rates for illegal jumps must be 0.
/// Rates on isolated vertices are part of the model contract; all built-in
/// models return 0 there.
struct JumpModel {
  std::string name;
  std::vector<std::string> state_names;
  std::vector<int> jumps;
  JumpRateFn rates;
  EnvelopeFn envelope;
  MeanFieldRateFn mean_field_rates;  // optional
  /// Rates see states frozen `lag` time units in the past (0 = Markovian).
  double lag = 0.0;

  std::size_t num_states() const { return state_names.size(); }
  std::size_t num_jumps() const { return jumps.size(); }
  bool legal(State x, std::size_t j) const {
    const int y = x + jumps[j];
    return y >= 0 && y < static_cast<int>(num_states());
  }
  /// Validates basic structural invariants; throws InvalidInput.
  void validate() const;
};

/// Binary voter model: a vertex adopts the opposite opinion at rate equal to
/// the fraction of disagreeing neighbours. Jumps {+1, -1}; envelope 1.
JumpModel voter_model();

/// Contact process: 0 -> 1 at rate lambda * (#infected neighbours), 1 -> 0 at
/// rate 1. Envelope max(1, lambda * k). Mean-field rates use lambda * nu(1).
JumpModel contact_model(double lambda);

/// SIR: S -> I at rate lambda * (#I neighbours), I -> R at rate `recovery`,
/// R absorbing. States {S, I, R} = {0, 1, 2}; single jump direction +1.
JumpModel sir_model(double lambda, double recovery);

/// Model whose rates ignore the neighbourhood: state x jumps by j at
/// base_rates[x][j] (used for independence controls). Isolated vertices
/// still get rate 0 to keep the built-in convention.
JumpModel independent_model(std::vector<std::vector<double>> base_rates, std::vector<int> jumps);

/// Same rates, but evaluated on the own and neighbour states at time t - lag
/// (the initial configuration before time 0).
JumpModel lagged_rate_wrapper(JumpModel m, double lag);

}  // namespace sparse_ips
