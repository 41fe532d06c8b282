#include "sparse_ips/jump_dynamics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

#include "sparse_ips/csv.hpp"
#include "sparse_ips/errors.hpp"
#include "sparse_ips/parallel.hpp"
#include "sparse_ips/random.hpp"

namespace sparse_ips {

// ---------------------------------------------------------------------------
// InitialCondition

InitialCondition InitialCondition::fixed(std::vector<State> states) {
  InitialCondition ic;
  ic.law_ = std::move(states);
  return ic;
}

InitialCondition InitialCondition::iid(std::vector<double> probs) {
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw InvalidInput("initial law has a negative probability");
    sum += p;
  }
  if (probs.empty() || std::abs(sum - 1.0) > 1e-9) {
    throw InvalidInput("initial law must be a probability vector");
  }
  InitialCondition ic;
  ic.law_ = std::move(probs);
  return ic;
}

State InitialCondition::draw(std::uint64_t seed, std::size_t replica, Vertex v) const {
  if (const auto* fixed = std::get_if<std::vector<State>>(&law_)) return (*fixed)[v];
  const auto& p = std::get<std::vector<double>>(law_);
  Stream rng(seed, replica, v, stream_tag::kInitial);
  double u = rng.uniform();
  for (std::size_t s = 0; s + 1 < p.size(); ++s) {
    if (u < p[s]) return static_cast<State>(s);
    u -= p[s];
  }
  return static_cast<State>(p.size() - 1);
}

void InitialCondition::validate(std::size_t num_vertices, std::size_t num_states) const {
  if (const auto* fixed = std::get_if<std::vector<State>>(&law_)) {
    if (fixed->size() != num_vertices) {
      throw InvalidInput("initial configuration has " + std::to_string(fixed->size()) +
                         " entries for " + std::to_string(num_vertices) + " vertices");
    }
    for (State s : *fixed) {
      if (s < 0 || static_cast<std::size_t>(s) >= num_states) {
        throw InvalidInput("initial state " + std::to_string(s) + " outside the state space");
      }
    }
  } else if (probs().size() != num_states) {
    throw InvalidInput("initial law has " + std::to_string(probs().size()) + " entries for " +
                       std::to_string(num_states) + " states");
  }
}

// ---------------------------------------------------------------------------
// Ensemble accessors

std::span<const JumpEvent> JumpTrajectoryEnsemble::events(std::size_t r, Vertex v) const {
  const auto& rep = replicas_[r];
  return {rep.events.data() + rep.offsets[v], rep.events.data() + rep.offsets[v + 1]};
}

State JumpTrajectoryEnsemble::state_at(std::size_t r, Vertex v, double t) const {
  const auto ev = events(r, v);
  const auto it = std::upper_bound(ev.begin(), ev.end(), t,
                                   [](double x, const JumpEvent& e) { return x < e.time; });
  return it == ev.begin() ? initial_state(r, v) : std::prev(it)->new_state;
}

std::vector<State> JumpTrajectoryEnsemble::configuration_at(std::size_t r, double t) const {
  std::vector<State> out(num_vertices());
  for (Vertex v = 0; v < out.size(); ++v) out[v] = state_at(r, v, t);
  return out;
}

std::size_t JumpTrajectoryEnsemble::total_events() const {
  std::size_t total = 0;
  for (const auto& rep : replicas_) total += rep.events.size();
  return total;
}

// ---------------------------------------------------------------------------
// Simulation core

namespace {

struct Candidate {
  double time;
  Vertex vertex;
  double u;
};

class ReplicaRunner {
 public:
  ReplicaRunner(const RootedGraph& g, const JumpModel& m, double horizon)
      : g_(g), m_(m), horizon_(horizon), envelope_(g.num_vertices()) {
    for (Vertex v = 0; v < g.num_vertices(); ++v) envelope_[v] = m.envelope(g.degree(v), horizon);
  }

  // Runs replica r. If `store` is non-null the trajectory is written there.
  // `observer` (may be empty) sees the configuration at each grid time.
  void run(std::uint64_t seed, std::size_t r, const InitialCondition& xi,
           std::span<const double> grid, const GridObserver& observer,
           ReplicaTrajectory* store) const {
    const std::size_t n = g_.num_vertices();
    const std::size_t nj = m_.num_jumps();
    std::vector<State> state(n);
    for (Vertex v = 0; v < n; ++v) state[v] = xi.draw(seed, r, v);

    std::vector<Candidate> cands;
    cands.reserve(static_cast<std::size_t>(static_cast<double>(n) * horizon_ * 1.2) + 16);
    for (Vertex v = 0; v < n; ++v) {
      const double c = envelope_[v];
      if (!(c > 0.0)) continue;
      Stream rng(seed, r, v, stream_tag::kDynamics);
      double t = 0.0;
      while (true) {
        t += rng.exponential(c);
        if (t > horizon_) break;
        cands.push_back({t, v, rng.uniform()});
      }
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      return a.time < b.time || (a.time == b.time && a.vertex < b.vertex);
    });

    const bool lagged = m_.lag > 0.0;
    std::vector<State> initial;
    std::vector<std::vector<JumpEvent>> history;
    if (lagged) {
      initial = state;
      history.resize(n);
    }
    // (vertex, event) pairs in processing order, regrouped per vertex at the end.
    std::vector<std::pair<Vertex, JumpEvent>> log;

    NeighborCountMeasure theta(m_.num_states());
    std::vector<double> rates(nj);
    std::size_t gi = 0;

    auto lagged_state = [&](Vertex u, double s) -> State {
      if (s <= 0.0) return initial[u];
      const auto& h = history[u];
      const auto it = std::lower_bound(h.begin(), h.end(), s,
                                       [](const JumpEvent& e, double x) { return e.time < x; });
      return it == h.begin() ? initial[u] : std::prev(it)->new_state;
    };

    for (const Candidate& cand : cands) {
      while (gi < grid.size() && grid[gi] < cand.time) {
        if (observer) observer(r, gi, state);
        ++gi;
      }
      const Vertex v = cand.vertex;
      theta.reset();
      State x;
      if (lagged) {
        const double s = cand.time - m_.lag;
        x = lagged_state(v, s);
        for (Vertex u : g_.neighbors(v)) theta.add(lagged_state(u, s));
      } else {
        x = state[v];
        for (Vertex u : g_.neighbors(v)) theta.add(state[u]);
      }
      m_.rates(cand.time, x, theta, rates);
      double total = 0.0;
      for (std::size_t j = 0; j < nj; ++j) {
        if (!(rates[j] >= 0.0)) throw EnvelopeViolation(describe("negative or NaN rate", cand.time, x, theta));
        if (!m_.legal(state[v], j)) {
          if (rates[j] > 0.0 && !lagged) {
            throw InvalidInput(describe("positive rate for an illegal jump", cand.time, x, theta));
          }
          rates[j] = 0.0;
        }
        total += rates[j];
      }
      const double c = envelope_[v];
      if (total > c * (1.0 + 1e-12)) {
        throw EnvelopeViolation(describe("total rate " + format_double(total) +
                                             " exceeds envelope " + format_double(c),
                                         cand.time, x, theta));
      }
      double level = cand.u * c;
      for (std::size_t j = 0; j < nj; ++j) {
        if (level < rates[j]) {
          state[v] += m_.jumps[j];
          const JumpEvent ev{cand.time, state[v]};
          if (store) log.emplace_back(v, ev);
          if (lagged) history[v].push_back(ev);
          break;
        }
        level -= rates[j];
      }
    }
    for (; gi < grid.size(); ++gi) {
      if (observer) observer(r, gi, state);
    }

    if (store) {
      store->initial.resize(n);
      for (Vertex v = 0; v < n; ++v) store->initial[v] = xi.draw(seed, r, v);
      store->offsets.assign(n + 1, 0);
      for (const auto& [v, ev] : log) ++store->offsets[v + 1];
      std::partial_sum(store->offsets.begin(), store->offsets.end(), store->offsets.begin());
      store->events.resize(log.size());
      std::vector<std::uint32_t> fill(store->offsets.begin(), store->offsets.end() - 1);
      // Log is in time order, so each vertex's slice ends up time-sorted.
      for (const auto& [v, ev] : log) store->events[fill[v]++] = ev;
    }
  }

 private:
  std::string describe(const std::string& what, double t, State x,
                       const NeighborCountMeasure& theta) const {
    std::ostringstream os;
    os << m_.name << ": " << what << " at t=" << format_double(t) << ", x=" << x << ", theta={";
    for (std::size_t s = 0; s < theta.counts().size(); ++s) {
      os << (s ? "," : "") << s << ':' << theta.counts()[s];
    }
    os << '}';
    return os.str();
  }

  const RootedGraph& g_;
  const JumpModel& m_;
  double horizon_;
  std::vector<double> envelope_;
};

void check_common(const RootedGraph& g, const JumpModel& m, const InitialCondition& xi,
                  double horizon) {
  m.validate();
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InvalidInput("horizon must be positive");
  xi.validate(g.num_vertices(), m.num_states());
}

}  // namespace

JumpTrajectoryEnsemble simulate_jump(const RootedGraph& g, const JumpModel& m,
                                     const InitialCondition& xi, double horizon,
                                     std::size_t replicas, const SimulationOptions& options) {
  check_common(g, m, xi, horizon);
  const ReplicaRunner runner(g, m, horizon);
  std::vector<ReplicaTrajectory> reps(replicas);
  std::atomic<std::size_t> stored{0};
  parallel_for(replicas, options.threads, [&](std::size_t r) {
    runner.run(options.seed, r, xi, {}, {}, &reps[r]);
    if (stored.fetch_add(reps[r].events.size()) + reps[r].events.size() > options.event_cap) {
      throw SizeCapExceeded("simulate_jump: stored events exceed cap " +
                            std::to_string(options.event_cap));
    }
  });
  return JumpTrajectoryEnsemble(g, horizon, std::move(reps));
}

void simulate_jump_observed(const RootedGraph& g, const JumpModel& m, const InitialCondition& xi,
                            double horizon, std::span<const double> grid, std::size_t replicas,
                            const SimulationOptions& options, const GridObserver& observer) {
  check_common(g, m, xi, horizon);
  if (!std::is_sorted(grid.begin(), grid.end()) ||
      (!grid.empty() && (grid.front() < 0.0 || grid.back() > horizon * (1 + 1e-12)))) {
    throw InvalidInput("observation grid must be sorted within [0, horizon]");
  }
  const ReplicaRunner runner(g, m, horizon);
  parallel_for(replicas, options.threads,
               [&](std::size_t r) { runner.run(options.seed, r, xi, grid, observer, nullptr); });
}

void write_trajectory_csv(std::ostream& os, const JumpTrajectoryEnsemble& ens) {
  os << "replica,vertex,time,new_state\n";
  for (std::size_t r = 0; r < ens.num_replicas(); ++r) {
    for (Vertex v = 0; v < ens.num_vertices(); ++v) {
      for (const auto& e : ens.events(r, v)) {
        os << r << ',' << v << ',' << format_double(e.time) << ',' << e.new_state << '\n';
      }
    }
  }
}

void write_initial_states_csv(std::ostream& os, const JumpTrajectoryEnsemble& ens) {
  os << "replica,vertex,state0\n";
  for (std::size_t r = 0; r < ens.num_replicas(); ++r) {
    for (Vertex v = 0; v < ens.num_vertices(); ++v) {
      os << r << ',' << v << ',' << ens.initial_state(r, v) << '\n';
    }
  }
}

std::vector<double> uniform_grid(double horizon, double dt) {
  if (!(dt > 0.0) || !(horizon >= 0.0)) throw InvalidInput("grid needs dt > 0 and horizon >= 0");
  const auto steps = static_cast<std::size_t>(std::floor(horizon / dt + 1e-9));
  std::vector<double> grid(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i) grid[i] = static_cast<double>(i) * dt;
  if (horizon - grid.back() > 1e-9 * std::max(1.0, horizon)) grid.push_back(horizon);
  return grid;
}

}  // namespace sparse_ips
