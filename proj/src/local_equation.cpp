#include "sparse_ips/local_equation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "sparse_ips/csv.hpp"
#include "sparse_ips/errors.hpp"
#include "sparse_ips/graphs.hpp"
#include "sparse_ips/mean_field.hpp"
#include "sparse_ips/parallel.hpp"

namespace sparse_ips {

namespace {

std::size_t ipow(std::size_t b, std::size_t e) {
  std::size_t r = 1;
  for (std::size_t i = 0; i < e; ++i) r *= b;
  return r;
}

void check_law(std::span<const double> mu, std::size_t states) {
  if (mu.size() != states) throw InvalidInput("initial law has the wrong number of states");
  double s = 0.0;
  for (double p : mu) {
    if (!(p >= 0.0)) throw InvalidInput("initial law has a negative entry");
    s += p;
  }
  if (std::abs(s - 1.0) > 1e-9) throw InvalidInput("initial law does not sum to 1");
}

void check_common(const JumpModel& m, std::size_t kappa, double horizon, double dt) {
  m.validate();
  if (kappa == 0) throw InvalidInput("local equation needs kappa >= 1");
  if (m.lag != 0.0) throw InvalidInput("local equation supports Markovian rates only");
  if (!(dt > 0.0) || !(horizon > 0.0)) throw InvalidInput("local equation needs dt > 0 and horizon > 0");
  const double states = std::pow(static_cast<double>(m.num_states()), static_cast<double>(kappa + 1));
  if (states > 1e7) throw SizeCapExceeded("local state space X^{kappa+1} is too large");
}

/// Static description of X^{kappa+1}.
struct ConfigSpace {
  std::size_t S, kappa, count;
  std::vector<State> root;              // per config
  std::vector<State> leaves;            // count * kappa
  std::vector<NeighborCountMeasure> theta;
  std::vector<std::size_t> root_target;  // count * J, npos when illegal
  std::vector<std::size_t> leaf_target;  // (count * kappa + k) * J + j

  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  ConfigSpace(const JumpModel& m, std::size_t kappa_) : S(m.num_states()), kappa(kappa_) {
    count = ipow(S, kappa + 1);
    const std::size_t J = m.num_jumps();
    root.resize(count);
    leaves.resize(count * kappa);
    theta.reserve(count);
    root_target.assign(count * J, npos);
    leaf_target.assign(count * kappa * J, npos);
    std::vector<std::size_t> place(kappa + 1);
    for (std::size_t i = 0; i <= kappa; ++i) place[i] = ipow(S, kappa - i);
    for (std::size_t c = 0; c < count; ++c) {
      std::size_t rest = c;
      std::vector<State> x(kappa + 1);
      for (std::size_t i = 0; i <= kappa; ++i) {
        x[i] = static_cast<State>(rest / place[i]);
        rest %= place[i];
      }
      root[c] = x[0];
      NeighborCountMeasure th(S);
      for (std::size_t k = 0; k < kappa; ++k) {
        leaves[c * kappa + k] = x[k + 1];
        th.add(x[k + 1]);
      }
      theta.push_back(th);
      for (std::size_t j = 0; j < J; ++j) {
        const auto shift = [&](std::size_t i) {
          const std::size_t step = static_cast<std::size_t>(std::abs(m.jumps[j])) * place[i];
          return m.jumps[j] > 0 ? c + step : c - step;
        };
        if (m.legal(x[0], j)) root_target[c * J + j] = shift(0);
        for (std::size_t k = 0; k < kappa; ++k) {
          if (m.legal(x[k + 1], j)) leaf_target[(c * kappa + k) * J + j] = shift(k + 1);
        }
      }
    }
  }
};

void check_envelope(std::span<const double> rates, double envelope, double t, State x) {
  double total = 0.0;
  for (double r : rates) {
    if (!(r >= 0.0)) throw NumericalError("negative jump rate at t=" + format_double(t));
    total += r;
  }
  if (total > envelope * (1.0 + 1e-12)) {
    throw EnvelopeViolation("rate " + format_double(total) + " exceeds envelope " +
                            format_double(envelope) + " at t=" + format_double(t) +
                            ", x=" + std::to_string(x));
  }
}

/// Leaf marginal of a joint law, averaged over leaves.
std::vector<double> leaf_marginal(const ConfigSpace& cs, std::span<const double> P) {
  std::vector<double> nu(cs.S, 0.0);
  for (std::size_t c = 0; c < cs.count; ++c) {
    for (std::size_t k = 0; k < cs.kappa; ++k) {
      nu[static_cast<std::size_t>(cs.leaves[c * cs.kappa + k])] += P[c];
    }
  }
  for (double& v : nu) v /= static_cast<double>(cs.kappa);
  return nu;
}

}  // namespace

// ---------------------------------------------------------------------------
// Types

std::size_t LocalEqJointLaw::num_configs() const { return ipow(num_states, kappa + 1); }

std::vector<State> LocalEqJointLaw::decode(std::size_t index) const {
  std::vector<State> x(kappa + 1);
  for (std::size_t i = kappa + 1; i-- > 0;) {
    x[i] = static_cast<State>(index % num_states);
    index /= num_states;
  }
  return x;
}

std::size_t LocalEqJointLaw::encode(std::span<const State> config) const {
  if (config.size() != kappa + 1) throw InvalidInput("configuration has the wrong length");
  std::size_t idx = 0;
  for (State s : config) idx = idx * num_states + static_cast<std::size_t>(s);
  return idx;
}

std::vector<double> LocalEqJointLaw::root_marginal(std::size_t k) const {
  std::vector<double> mu(num_states, 0.0);
  const std::size_t block = ipow(num_states, kappa);
  for (std::size_t c = 0; c < values[k].size(); ++c) mu[c / block] += values[k][c];
  return mu;
}

double LocalEqJointLaw::agreement_probability(std::size_t k, std::size_t agree) const {
  double p = 0.0;
  for (std::size_t c = 0; c < values[k].size(); ++c) {
    if (values[k][c] == 0.0) continue;
    const auto x = decode(c);
    std::size_t a = 0;
    for (std::size_t i = 1; i <= kappa; ++i) a += x[i] == x[0];
    if (a == agree) p += values[k][c];
  }
  return p;
}

std::vector<double> LocalEqJointLaw::agreement_curve(std::size_t agree) const {
  std::vector<double> out;
  for (std::size_t k = 0; k < grid.size(); ++k) out.push_back(agreement_probability(k, agree));
  return out;
}

std::size_t GammaTable::fallback_count() const {
  std::size_t n = 0;
  for (const auto& f : fallback) n += static_cast<std::size_t>(std::count(f.begin(), f.end(), 1));
  return n;
}

double sup_distance(const GammaTable& a, const GammaTable& b) {
  if (a.values.size() != b.values.size()) throw InvalidInput("gamma tables have different grids");
  double d = 0.0;
  for (std::size_t k = 0; k < a.values.size(); ++k) {
    if (a.values[k].size() != b.values[k].size()) throw InvalidInput("gamma tables differ in shape");
    for (std::size_t i = 0; i < a.values[k].size(); ++i) {
      d = std::max(d, std::abs(a.values[k][i] - b.values[k][i]));
    }
  }
  return d;
}

double independent_closure_rate(const JumpModel& m, std::size_t kappa, double t, std::size_t j,
                                State x, State y, std::span<const double> nu) {
  const std::size_t S = m.num_states();
  const std::size_t others = kappa - 1;
  const std::size_t count = ipow(S, others);
  std::vector<double> rates(m.num_jumps());
  double total = 0.0;
  for (std::size_t c = 0; c < count; ++c) {
    std::size_t rest = c;
    double w = 1.0;
    NeighborCountMeasure th(S);
    th.add(y);
    for (std::size_t i = 0; i < others; ++i) {
      const auto s = rest % S;
      rest /= S;
      w *= nu[s];
      th.add(static_cast<State>(s));
    }
    if (w == 0.0) continue;
    m.rates(t, x, th, rates);
    total += w * rates[j];
  }
  return total;
}

// ---------------------------------------------------------------------------
// Closed master equation

namespace {

class LocalOde {
 public:
  LocalOde(const JumpModel& m, std::size_t kappa, double horizon)
      : m_(m), cs_(m, kappa), J_(m.num_jumps()), S_(m.num_states()),
        envelope_(m.envelope(kappa, horizon)), R_(cs_.count * J_), rates_(J_) {}

  const ConfigSpace& space() const { return cs_; }
  std::size_t table_size() const { return J_ * S_ * S_; }

  /// Root rates for every configuration at time t.
  void root_rates(double t) {
    for (std::size_t c = 0; c < cs_.count; ++c) {
      m_.rates(t, cs_.root[c], cs_.theta[c], rates_);
      check_envelope(rates_, envelope_, t, cs_.root[c]);
      std::copy(rates_.begin(), rates_.end(), R_.begin() + static_cast<std::ptrdiff_t>(c * J_));
    }
  }

  /// Closure table from law P (root rates must be current). Entries with
  /// negligible conditioning mass take `previous` if given, else the
  /// independent closure.
  void closure(double t, std::span<const double> P, const std::vector<double>* previous,
               std::vector<double>& gamma, std::vector<std::uint8_t>& flags) {
    std::vector<double> num(table_size(), 0.0), den(S_ * S_, 0.0);
    for (std::size_t c = 0; c < cs_.count; ++c) {
      if (P[c] == 0.0) continue;
      const auto x = static_cast<std::size_t>(cs_.root[c]);
      const auto counts = cs_.theta[c].counts();
      for (std::size_t y = 0; y < S_; ++y) {
        if (counts[y] == 0) continue;
        const double w = P[c] * counts[y];
        den[x * S_ + y] += w;
        for (std::size_t j = 0; j < J_; ++j) num[(j * S_ + x) * S_ + y] += w * R_[c * J_ + j];
      }
    }
    gamma.assign(table_size(), 0.0);
    flags.assign(table_size(), 0);
    std::vector<double> nu;
    for (std::size_t j = 0; j < J_; ++j) {
      for (std::size_t x = 0; x < S_; ++x) {
        for (std::size_t y = 0; y < S_; ++y) {
          const std::size_t e = (j * S_ + x) * S_ + y;
          const double d = den[x * S_ + y] / static_cast<double>(cs_.kappa);
          if (d >= kConditioningFloor) {
            gamma[e] = num[e] / den[x * S_ + y];
            continue;
          }
          flags[e] = 1;
          if (previous) {
            gamma[e] = (*previous)[e];
          } else {
            if (nu.empty()) nu = leaf_marginal(cs_, P);
            gamma[e] = independent_closure_rate(m_, cs_.kappa, t, j, static_cast<State>(x),
                                                static_cast<State>(y), nu);
          }
        }
      }
    }
  }

  /// dP/dt under root rates R_ and closure gamma.
  void derivative(std::span<const double> P, const std::vector<double>& gamma,
                  std::vector<double>& out) const {
    std::fill(out.begin(), out.end(), 0.0);
    const std::size_t kappa = cs_.kappa;
    for (std::size_t c = 0; c < cs_.count; ++c) {
      const double p = P[c];
      if (p == 0.0) continue;
      for (std::size_t j = 0; j < J_; ++j) {
        const std::size_t tgt = cs_.root_target[c * J_ + j];
        const double r = R_[c * J_ + j];
        if (tgt == ConfigSpace::npos || r == 0.0) continue;
        out[c] -= p * r;
        out[tgt] += p * r;
      }
      const auto xo = static_cast<std::size_t>(cs_.root[c]);
      for (std::size_t k = 0; k < kappa; ++k) {
        const auto xk = static_cast<std::size_t>(cs_.leaves[c * kappa + k]);
        for (std::size_t j = 0; j < J_; ++j) {
          const std::size_t tgt = cs_.leaf_target[(c * kappa + k) * J_ + j];
          const double r = gamma[(j * S_ + xk) * S_ + xo];
          if (tgt == ConfigSpace::npos || r == 0.0) continue;
          out[c] -= p * r;
          out[tgt] += p * r;
        }
      }
    }
  }

 private:
  const JumpModel& m_;
  ConfigSpace cs_;
  std::size_t J_, S_;
  double envelope_;
  std::vector<double> R_;
  std::vector<double> rates_;
};

std::vector<double> product_law(std::span<const double> mu0, std::size_t kappa) {
  const std::size_t S = mu0.size();
  const std::size_t count = ipow(S, kappa + 1);
  std::vector<double> P(count);
  for (std::size_t c = 0; c < count; ++c) {
    std::size_t rest = c;
    double w = 1.0;
    for (std::size_t i = 0; i <= kappa; ++i) {
      w *= mu0[rest % S];
      rest /= S;
    }
    P[c] = w;
  }
  return P;
}

}  // namespace

LocalEqSolution solve_local_eq_ode(const JumpModel& m, std::size_t kappa,
                                   std::span<const double> mu0, double horizon, double dt,
                                   std::size_t record_stride) {
  check_common(m, kappa, horizon, dt);
  check_law(mu0, m.num_states());
  if (record_stride == 0) throw InvalidInput("record_stride must be positive");
  LocalOde ode(m, kappa, horizon);
  const std::size_t n = ode.space().count;
  const auto steps = static_cast<std::size_t>(std::llround(horizon / dt));

  LocalEqSolution sol;
  sol.law.kappa = kappa;
  sol.law.num_states = m.num_states();
  sol.gamma.num_jumps = m.num_jumps();
  sol.gamma.num_states = m.num_states();

  std::vector<double> P = product_law(mu0, kappa);
  std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);
  std::vector<double> gamma, stage_gamma, last_gamma;
  std::vector<std::uint8_t> flags, stage_flags;

  for (std::size_t step = 0;; ++step) {
    const double t = static_cast<double>(step) * dt;
    ode.root_rates(t);
    ode.closure(t, P, step == 0 ? nullptr : &last_gamma, gamma, flags);
    if (step % record_stride == 0 || step == steps) {
      sol.law.grid.push_back(t);
      sol.law.values.push_back(P);
      sol.gamma.grid.push_back(t);
      sol.gamma.values.push_back(gamma);
      sol.gamma.fallback.push_back(flags);
    }
    if (step == steps) break;
    last_gamma = gamma;

    ode.derivative(P, gamma, k1);
    auto stage = [&](double ts, double h, const std::vector<double>& k, std::vector<double>& out) {
      for (std::size_t c = 0; c < n; ++c) tmp[c] = P[c] + h * k[c];
      ode.root_rates(ts);
      ode.closure(ts, tmp, &last_gamma, stage_gamma, stage_flags);
      ode.derivative(tmp, stage_gamma, out);
    };
    stage(t + 0.5 * dt, 0.5 * dt, k1, k2);
    stage(t + 0.5 * dt, 0.5 * dt, k2, k3);
    stage(t + dt, dt, k3, k4);
    double sum = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      double v = P[c] + dt / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
      if (v < -kSimplexViolation) {
        throw StepSizeError("local equation step " + std::to_string(step) +
                            " left the simplex (" + format_double(v) + "); reduce dt");
      }
      v = std::max(v, 0.0);
      P[c] = v;
      sum += v;
    }
    for (double& v : P) v /= sum;
  }
  return sol;
}

// ---------------------------------------------------------------------------
// Monte Carlo fixed point

namespace {

struct Candidate {
  double time;
  std::uint32_t particle;
  double u;
};

}  // namespace

LocalEqMcResult simulate_local_eq_fixed_point(const JumpModel& m, std::size_t kappa,
                                              std::span<const double> mu0, double horizon,
                                              double dt, const LocalEqMcOptions& options) {
  check_common(m, kappa, horizon, dt);
  check_law(mu0, m.num_states());
  if (options.replicas == 0) throw InvalidInput("fixed point needs replicas > 0");
  if (!(options.tol > 0.0)) throw InvalidInput("fixed point needs tol > 0");
  if (options.max_iters == 0) throw InvalidInput("fixed point needs max_iters > 0");
  if (!(options.damping >= 0.0 && options.damping < 1.0)) {
    throw InvalidInput("damping must lie in [0, 1)");
  }
  const std::size_t S = m.num_states();
  const std::size_t J = m.num_jumps();
  const std::size_t P1 = kappa + 1;
  const std::size_t M = options.replicas;
  const ConfigSpace cs(m, kappa);
  const std::size_t TS = J * S * S;
  const std::vector<double> grid = uniform_grid(horizon, dt);
  const std::size_t G = grid.size();
  const double envelope = m.envelope(kappa, horizon);
  const InitialCondition xi = InitialCondition::iid({mu0.begin(), mu0.end()});

  // Starting table: independent closure along the mean-field flow.
  GammaTable table;
  table.num_jumps = J;
  table.num_states = S;
  table.grid = grid;
  table.values.assign(G, std::vector<double>(TS, 0.0));
  table.fallback.assign(G, std::vector<std::uint8_t>(TS, 0));
  {
    SimplexFlow flow;
    if (m.mean_field_rates) flow = solve_mf_master(m, mu0, grid.back(), dt);
    for (std::size_t i = 0; i < G; ++i) {
      const std::vector<double> nu =
          m.mean_field_rates ? flow.at(grid[i]) : std::vector<double>(mu0.begin(), mu0.end());
      for (std::size_t j = 0; j < J; ++j) {
        for (std::size_t x = 0; x < S; ++x) {
          for (std::size_t y = 0; y < S; ++y) {
            table.values[i][(j * S + x) * S + y] = independent_closure_rate(
                m, kappa, grid[i], j, static_cast<State>(x), static_cast<State>(y), nu);
          }
        }
      }
    }
  }

  LocalEqMcResult result;
  result.replicas = M;
  result.law.kappa = kappa;
  result.law.num_states = S;
  result.law.grid = grid;

  const std::size_t blocks = block_count(M);
  const std::size_t part_num = G * TS, part_den = G * S * S, part_joint = G * cs.count;
  const std::size_t part = part_num + part_den + part_joint;

  for (std::size_t iter = 0; iter < options.max_iters; ++iter) {
    std::vector<std::vector<double>> partial(blocks);
    parallel_for(blocks, options.sim.threads, [&](std::size_t b) {
      auto& acc = partial[b];
      acc.assign(part, 0.0);
      double* num = acc.data();
      double* den = num + part_num;
      double* joint = den + part_den;
      std::vector<State> x(P1);
      std::vector<Candidate> cands;
      std::vector<double> rates(J);
      NeighborCountMeasure th(S);
      const std::size_t r_end = std::min(M, (b + 1) * kReductionBlock);
      for (std::size_t r = b * kReductionBlock; r < r_end; ++r) {
        cands.clear();
        for (std::size_t p = 0; p < P1; ++p) {
          x[p] = xi.draw(options.sim.seed, r, static_cast<Vertex>(p));
          if (envelope <= 0.0) continue;
          Stream rng(options.sim.seed, r, p, stream_tag::kDynamics);
          for (double t = rng.exponential(envelope); t <= horizon; t += rng.exponential(envelope)) {
            cands.push_back({t, static_cast<std::uint32_t>(p), rng.uniform()});
          }
        }
        std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& c) {
          return a.time < c.time || (a.time == c.time && a.particle < c.particle);
        });
        auto leaves_theta = [&] {
          th.reset();
          for (std::size_t k = 1; k < P1; ++k) th.add(x[k]);
        };
        std::size_t gi = 0;
        auto record = [&](std::size_t i) {
          leaves_theta();
          m.rates(grid[i], x[0], th, rates);
          const auto xo = static_cast<std::size_t>(x[0]);
          const auto counts = th.counts();
          for (std::size_t y = 0; y < S; ++y) {
            if (counts[y] == 0) continue;
            den[(i * S + xo) * S + y] += counts[y];
            for (std::size_t j = 0; j < J; ++j) {
              num[i * TS + (j * S + xo) * S + y] += rates[j] * counts[y];
            }
          }
          std::size_t idx = 0;
          for (State s : x) idx = idx * S + static_cast<std::size_t>(s);
          joint[i * cs.count + idx] += 1.0;
        };
        for (const auto& cand : cands) {
          while (gi < G && grid[gi] < cand.time) record(gi++);
          const std::size_t p = cand.particle;
          if (p == 0) {
            leaves_theta();
            m.rates(cand.time, x[0], th, rates);
            check_envelope(rates, envelope, cand.time, x[0]);
          } else {
            const auto i = std::min(G - 1, static_cast<std::size_t>(cand.time / dt));
            for (std::size_t j = 0; j < J; ++j) rates[j] = table.at(i, j, x[p], x[0]);
            check_envelope(rates, envelope, cand.time, x[p]);
          }
          const double target = cand.u * envelope;
          double cum = 0.0;
          for (std::size_t j = 0; j < J; ++j) {
            cum += rates[j];
            if (target < cum) {
              if (m.legal(x[p], j)) x[p] += m.jumps[j];
              break;
            }
          }
        }
        while (gi < G) record(gi++);
      }
    });
    std::vector<double> total(part, 0.0);
    for (const auto& acc : partial) {
      for (std::size_t i = 0; i < part; ++i) total[i] += acc[i];
    }
    const double* num = total.data();
    const double* den = num + part_num;
    const double* joint = den + part_den;

    GammaTable next = table;
    double change = 0.0;
    std::vector<double> est(TS);
    std::vector<double> prev_est;
    for (std::size_t i = 0; i < G; ++i) {
      std::vector<double> nu;
      for (std::size_t j = 0; j < J; ++j) {
        for (std::size_t xs = 0; xs < S; ++xs) {
          for (std::size_t y = 0; y < S; ++y) {
            const std::size_t e = (j * S + xs) * S + y;
            const double d = den[(i * S + xs) * S + y];
            next.fallback[i][e] = 0;
            if (d > 0.0) {
              est[e] = num[i * TS + e] / d;
              continue;
            }
            next.fallback[i][e] = 1;
            if (!prev_est.empty()) {
              est[e] = prev_est[e];
            } else {
              if (nu.empty()) {
                std::vector<double> P(joint + i * cs.count, joint + (i + 1) * cs.count);
                for (double& v : P) v /= static_cast<double>(M);
                nu = leaf_marginal(cs, P);
              }
              est[e] = independent_closure_rate(m, kappa, grid[i], j, static_cast<State>(xs),
                                                static_cast<State>(y), nu);
            }
          }
        }
      }
      for (std::size_t e = 0; e < TS; ++e) {
        const double v = options.damping * table.values[i][e] + (1.0 - options.damping) * est[e];
        change = std::max(change, std::abs(v - table.values[i][e]));
        next.values[i][e] = v;
      }
      prev_est = est;
    }
    result.law.values.assign(G, std::vector<double>(cs.count));
    for (std::size_t i = 0; i < G; ++i) {
      for (std::size_t c = 0; c < cs.count; ++c) {
        result.law.values[i][c] = joint[i * cs.count + c] / static_cast<double>(M);
      }
    }
    table = std::move(next);
    result.sup_changes.push_back(change);
    result.iterations = iter + 1;
    if (change <= options.tol) {
      result.converged = true;
      break;
    }
  }
  result.gamma = std::move(table);
  return result;
}

// ---------------------------------------------------------------------------
// Diffusion local equation

double BinnedClosure::lookup(double x, double y) const {
  const auto bx = static_cast<std::size_t>(std::upper_bound(edges_x.begin(), edges_x.end(), x) -
                                           edges_x.begin());
  const auto by = static_cast<std::size_t>(std::upper_bound(edges_y.begin(), edges_y.end(), y) -
                                           edges_y.begin());
  return values[bx * bins + by];
}

std::vector<double> DiffusionLocalEqResult::root_samples(std::size_t k) const {
  std::vector<double> out;
  const std::size_t P1 = kappa + 1;
  const auto& s = samples[k];
  out.reserve(s.size() / P1);
  for (std::size_t i = 0; i < s.size(); i += P1) out.push_back(s[i]);
  return out;
}

namespace {

std::vector<double> interior_quantiles(std::vector<double> v, std::size_t B) {
  std::sort(v.begin(), v.end());
  std::vector<double> edges;
  for (std::size_t b = 1; b < B; ++b) edges.push_back(v[b * v.size() / B]);
  return edges;
}

/// Binned regression of beta(X_o, X_j) on (X_o, X_i) over ordered pairs of
/// distinct leaves. Returns the number of empty bins filled by fallback.
std::size_t fit_closure(const DiffusionModel& m, double t, std::size_t kappa, std::size_t B,
                        std::span<const double> cur, BinnedClosure& out) {
  const std::size_t P1 = kappa + 1;
  const std::size_t M = cur.size() / P1;
  std::vector<double> roots(M), leaves;
  leaves.reserve(M * kappa);
  for (std::size_t r = 0; r < M; ++r) {
    roots[r] = cur[r * P1];
    for (std::size_t k = 1; k < P1; ++k) leaves.push_back(cur[r * P1 + k]);
  }
  out.bins = B;
  out.edges_x = interior_quantiles(std::move(roots), B);
  out.edges_y = interior_quantiles(std::move(leaves), B);
  std::vector<double> sum(B * B, 0.0), sx(B * B, 0.0), sy(B * B, 0.0), cnt(B * B, 0.0);
  for (std::size_t r = 0; r < M; ++r) {
    const double xo = cur[r * P1];
    const auto bx = static_cast<std::size_t>(
        std::upper_bound(out.edges_x.begin(), out.edges_x.end(), xo) - out.edges_x.begin());
    for (std::size_t a = 1; a < P1; ++a) {
      const double xa = cur[r * P1 + a];
      const auto by = static_cast<std::size_t>(
          std::upper_bound(out.edges_y.begin(), out.edges_y.end(), xa) - out.edges_y.begin());
      const std::size_t cell = bx * B + by;
      for (std::size_t b = 1; b < P1; ++b) {
        if (b == a) continue;
        sum[cell] += m.beta(t, xo, cur[r * P1 + b]);
        sx[cell] += xo;
        sy[cell] += xa;
        cnt[cell] += 1.0;
      }
    }
  }
  out.values.assign(B * B, 0.0);
  out.centre_x.assign(B * B, 0.0);
  out.centre_y.assign(B * B, 0.0);
  std::size_t empty = 0;
  for (std::size_t cell = 0; cell < B * B; ++cell) {
    if (cnt[cell] > 0.0) {
      out.values[cell] = sum[cell] / cnt[cell];
      out.centre_x[cell] = sx[cell] / cnt[cell];
      out.centre_y[cell] = sy[cell] / cnt[cell];
    }
  }
  for (std::size_t cell = 0; cell < B * B; ++cell) {
    if (cnt[cell] > 0.0) continue;
    ++empty;
    const auto bx = static_cast<long>(cell / B), by = static_cast<long>(cell % B);
    long best = std::numeric_limits<long>::max();
    std::size_t best_cell = cell;
    for (std::size_t other = 0; other < B * B; ++other) {
      if (cnt[other] == 0.0) continue;
      const long d = std::abs(static_cast<long>(other / B) - bx) + std::abs(static_cast<long>(other % B) - by);
      if (d < best) {
        best = d;
        best_cell = other;
      }
    }
    if (best_cell == cell) throw NumericalError("closure regression has no populated bins");
    out.values[cell] = out.values[best_cell];
    out.centre_x[cell] = out.centre_x[best_cell];
    out.centre_y[cell] = out.centre_y[best_cell];
  }
  return empty;
}

}  // namespace

DiffusionLocalEqResult markovian_local_eq_diffusion(const DiffusionModel& m, std::size_t kappa,
                                                    const DiffusionInitial::Sampler& mu0_sampler,
                                                    double horizon, double dt,
                                                    const DiffusionLocalEqOptions& options) {
  if (!m.is_pairwise()) throw InvalidInput("diffusion local equation needs a pairwise model");
  if (kappa < 2) throw InvalidInput("diffusion local equation needs kappa >= 2");
  if (!(dt > 0.0) || !(horizon > 0.0)) throw InvalidInput("diffusion local equation needs dt > 0");
  if (!mu0_sampler) throw InvalidInput("diffusion local equation needs an initial sampler");
  if (options.bins < 1 || options.replicas < options.bins) {
    throw InvalidInput("need at least one bin and as many replicas as bins");
  }
  if (options.max_iters == 0 || !(options.tol > 0.0)) throw InvalidInput("bad iteration settings");
  if (options.record_stride == 0) throw InvalidInput("record_stride must be positive");
  if (!(options.damping >= 0.0 && options.damping < 1.0)) {
    throw InvalidInput("damping must lie in [0, 1)");
  }
  const std::size_t P1 = kappa + 1;
  const std::size_t M = options.replicas;
  const std::size_t B = options.bins;
  const auto steps = static_cast<std::size_t>(std::llround(horizon / dt));
  const double sqdt = std::sqrt(dt);
  const double inv_k = 1.0 / static_cast<double>(kappa);
  const double bound = m.bound();

  auto check_drift = [&](double b, double t, double x) {
    if (std::abs(b) > bound) {
      throw NumericalError("drift " + format_double(b) + " exceeds declared bound at t=" +
                           format_double(t) + ", x=" + format_double(x));
    }
  };

  DiffusionLocalEqResult result;
  result.kappa = kappa;
  for (std::size_t k = 0; k <= steps; ++k) {
    if (k % options.record_stride == 0 || k == steps) result.grid.push_back(static_cast<double>(k) * dt);
  }

  // tables[k]: closure used at Euler step k in the current pass.
  std::vector<BinnedClosure> tables;
  std::vector<BinnedClosure> estimates(steps);
  std::vector<double> cur(M * P1);
  for (std::size_t iter = 0; iter < options.max_iters; ++iter) {
    result.samples.clear();
    std::size_t empties = 0;
    for (std::size_t r = 0; r < M; ++r) {
      for (std::size_t p = 0; p < P1; ++p) {
        Stream rng(options.sim.seed, r, p, stream_tag::kInitial);
        cur[r * P1 + p] = mu0_sampler(rng);
        if (!std::isfinite(cur[r * P1 + p])) throw NumericalError("non-finite initial value");
      }
    }
    result.samples.push_back(cur);
    for (std::size_t k = 0; k < steps; ++k) {
      const double t = static_cast<double>(k) * dt;
      empties += fit_closure(m, t, kappa, B, cur, estimates[k]);
      const BinnedClosure& use = tables.empty() ? estimates[k] : tables[k];
      parallel_for(block_count(M), options.sim.threads, [&](std::size_t b) {
        std::vector<double> next(P1);
        const std::size_t r_end = std::min(M, (b + 1) * kReductionBlock);
        for (std::size_t r = b * kReductionBlock; r < r_end; ++r) {
          double* x = cur.data() + r * P1;
          double bo = 0.0;
          for (std::size_t i = 1; i < P1; ++i) bo += m.beta(t, x[0], x[i]);
          bo *= inv_k;
          check_drift(bo, t, x[0]);
          // Dynamics streams are keyed by step so every pass sees the same noise.
          Stream rng0(options.sim.seed, r, k * P1, stream_tag::kDynamics);
          next[0] = x[0] + bo * dt + sqdt * rng0.normal();
          for (std::size_t i = 1; i < P1; ++i) {
            const double bl = inv_k * (m.beta(t, x[i], x[0]) +
                                       static_cast<double>(kappa - 1) * use.lookup(x[i], x[0]));
            check_drift(bl, t, x[i]);
            Stream rng(options.sim.seed, r, k * P1 + i, stream_tag::kDynamics);
            next[i] = x[i] + bl * dt + sqdt * rng.normal();
          }
          for (std::size_t i = 0; i < P1; ++i) {
            if (!std::isfinite(next[i])) {
              throw NumericalError("non-finite value at step " + std::to_string(k + 1));
            }
            x[i] = next[i];
          }
        }
      });
      if ((k + 1) % options.record_stride == 0 || k + 1 == steps) result.samples.push_back(cur);
    }
    result.empty_bin_fallbacks = empties;
    result.iterations = iter + 1;

    if (tables.empty()) {
      // The first pass fits its closure on the fly; the next pass uses it.
      tables = estimates;
      result.sup_changes.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    double change = 0.0;
    std::vector<BinnedClosure> next = estimates;
    for (std::size_t k = 0; k < steps; ++k) {
      auto& nt = next[k];
      for (std::size_t cell = 0; cell < B * B; ++cell) {
        const double old = tables[k].lookup(nt.centre_x[cell], nt.centre_y[cell]);
        const double v = options.damping * old + (1.0 - options.damping) * nt.values[cell];
        change = std::max(change, std::abs(v - old));
        nt.values[cell] = v;
      }
    }
    result.sup_changes.push_back(change);
    result.closure = tables;
    tables = std::move(next);
    if (change <= options.tol) {
      result.converged = true;
      break;
    }
  }
  if (result.closure.empty()) result.closure = tables;
  return result;
}

// ---------------------------------------------------------------------------

TimeSeriesWithCI direct_tree_baseline(const JumpModel& m, std::size_t kappa, std::size_t depth,
                                      std::span<const double> mu0, std::span<const double> grid,
                                      std::size_t agree, std::size_t replicas,
                                      const SimulationOptions& options) {
  if (depth == 0) throw InvalidInput("depth 0 leaves the root isolated; agreement is undefined");
  if (kappa == 0) throw InvalidInput("kappa 0 leaves the root isolated; agreement is undefined");
  if (agree > kappa) throw InvalidInput("agreement count exceeds kappa");
  if (replicas == 0) throw InvalidInput("baseline needs replicas > 0");
  if (grid.empty()) throw InvalidInput("baseline needs a time grid");
  const RootedGraph g = gen_regular_tree(kappa, depth);
  const InitialCondition xi = InitialCondition::iid({mu0.begin(), mu0.end()});
  const std::size_t G = grid.size();
  std::vector<std::uint8_t> hit(replicas * G, 0);
  simulate_jump_observed(g, m, xi, grid.back(), grid, replicas, options,
                         [&](std::size_t r, std::size_t i, std::span<const State> config) {
                           hit[r * G + i] = root_agreement_count(g, config) == agree;
                         });
  std::vector<std::size_t> counts(G, 0);
  for (std::size_t r = 0; r < replicas; ++r) {
    for (std::size_t i = 0; i < G; ++i) counts[i] += hit[r * G + i];
  }
  return proportion_series({grid.begin(), grid.end()}, counts, replicas);
}

void write_gamma_csv(std::ostream& os, const GammaTable& g) {
  os << "t,j,x,y,rate\n";
  for (std::size_t k = 0; k < g.grid.size(); ++k) {
    for (std::size_t j = 0; j < g.num_jumps; ++j) {
      for (std::size_t x = 0; x < g.num_states; ++x) {
        for (std::size_t y = 0; y < g.num_states; ++y) {
          os << format_double(g.grid[k]) << ',' << j << ',' << x << ',' << y << ','
             << format_double(g.at(k, j, static_cast<State>(x), static_cast<State>(y))) << '\n';
        }
      }
    }
  }
}

void write_joint_law_csv(std::ostream& os, const LocalEqJointLaw& law) {
  os << "t,config,probability\n";
  for (std::size_t k = 0; k < law.grid.size(); ++k) {
    for (std::size_t c = 0; c < law.values[k].size(); ++c) {
      os << format_double(law.grid[k]) << ',' << c << ',' << format_double(law.values[k][c]) << '\n';
    }
  }
}

}  // namespace sparse_ips
