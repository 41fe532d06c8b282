#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <variant>
#include <vector>

#include "sparse_ips/graphs.hpp"
#include "sparse_ips/jump_model.hpp"

namespace sparse_ips {

struct JumpEvent {
  double time;
  State new_state;
};

/// Initial configuration: either a fixed state per vertex or i.i.d. draws from
/// a probability vector over X, redrawn for every replica.
class InitialCondition {
 public:
  static InitialCondition fixed(std::vector<State> states);
  static InitialCondition iid(std::vector<double> probs);
  static InitialCondition bernoulli(double p) { return iid({1.0 - p, p}); }

  /// State of vertex v in replica r under master seed `seed`.
  State draw(std::uint64_t seed, std::size_t replica, Vertex v) const;
  void validate(std::size_t num_vertices, std::size_t num_states) const;

  bool is_iid() const { return std::holds_alternative<std::vector<double>>(law_); }
  const std::vector<double>& probs() const { return std::get<std::vector<double>>(law_); }

 private:
  std::variant<std::vector<State>, std::vector<double>> law_;
};

struct SimulationOptions {
  std::uint64_t seed = 1;
  unsigned threads = 0;  // 0 = default_thread_count()
  std::size_t event_cap = 100'000'000;
};

/// Per-replica trajectory in flat form: events of vertex v occupy
/// events[offsets[v], offsets[v+1]) in increasing time order.
struct ReplicaTrajectory {
  std::vector<State> initial;
  std::vector<std::uint32_t> offsets;
  std::vector<JumpEvent> events;
};

/// Càdlàg paths of every vertex for a set of independent replicas.
class JumpTrajectoryEnsemble {
 public:
  JumpTrajectoryEnsemble(RootedGraph graph, double horizon, std::vector<ReplicaTrajectory> reps)
      : graph_(std::move(graph)), horizon_(horizon), replicas_(std::move(reps)) {}

  const RootedGraph& graph() const { return graph_; }
  double horizon() const { return horizon_; }
  std::size_t num_replicas() const { return replicas_.size(); }
  std::size_t num_vertices() const { return graph_.num_vertices(); }

  State initial_state(std::size_t r, Vertex v) const { return replicas_[r].initial[v]; }
  std::span<const JumpEvent> events(std::size_t r, Vertex v) const;
  /// Right-continuous state at time t.
  State state_at(std::size_t r, Vertex v, double t) const;
  std::vector<State> configuration_at(std::size_t r, double t) const;
  std::size_t total_events() const;

 private:
  RootedGraph graph_;
  double horizon_;
  std::vector<ReplicaTrajectory> replicas_;
};

/// Observer called with the configuration at each grid time, per replica.
/// Calls for different replicas may run concurrently; implementations must
/// write only to per-replica storage.
using GridObserver =
    std::function<void(std::size_t replica, std::size_t grid_index, std::span<const State> config)>;

/// Event-driven simulation by per-vertex thinning: each vertex proposes
/// candidate times from a Poisson stream at its envelope rate C_{deg,T} and
/// accepts a candidate for jump j with probability rate_j / C evaluated on
/// the neighbour states just before the candidate time. Candidates are
/// processed in global time order (ties by vertex index).
///
/// Throws EnvelopeViolation when the total rate exceeds the envelope, and
/// SizeCapExceeded when the stored event count passes options.event_cap.
JumpTrajectoryEnsemble simulate_jump(const RootedGraph& g, const JumpModel& m,
                                     const InitialCondition& xi, double horizon,
                                     std::size_t replicas, const SimulationOptions& options);

/// Streaming variant: nothing is stored; the observer sees the configuration
/// at each time of `grid` (sorted, within [0, horizon]).
void simulate_jump_observed(const RootedGraph& g, const JumpModel& m, const InitialCondition& xi,
                            double horizon, std::span<const double> grid, std::size_t replicas,
                            const SimulationOptions& options, const GridObserver& observer);

// CSV: "replica,vertex,time,new_state" and "replica,vertex,state0".
void write_trajectory_csv(std::ostream& os, const JumpTrajectoryEnsemble& ens);
void write_initial_states_csv(std::ostream& os, const JumpTrajectoryEnsemble& ens);

/// Uniform grid 0, dt, 2dt, ..., up to horizon (inclusive within 1e-9).
std::vector<double> uniform_grid(double horizon, double dt);

}  // namespace sparse_ips
