#include "sparse_ips/mean_field.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "sparse_ips/csv.hpp"
#include "sparse_ips/errors.hpp"
#include "sparse_ips/parallel.hpp"

namespace sparse_ips {

namespace {

std::size_t nearest_index(const std::vector<double>& grid, double t) {
  const auto it = std::lower_bound(grid.begin(), grid.end(), t);
  if (it == grid.end()) return grid.size() - 1;
  const auto k = static_cast<std::size_t>(it - grid.begin());
  if (k > 0 && std::abs(grid[k - 1] - t) < std::abs(grid[k] - t)) return k - 1;
  return k;
}

void check_simplex(std::span<const double> mu, std::size_t states) {
  if (mu.size() != states) throw InvalidInput("initial law has the wrong number of states");
  double s = 0.0;
  for (double p : mu) {
    if (!(p >= 0.0)) throw InvalidInput("initial law has a negative entry");
    s += p;
  }
  if (std::abs(s - 1.0) > 1e-9) throw InvalidInput("initial law does not sum to 1");
}

double binomial(std::size_t n, std::size_t k) {
  return std::exp(std::lgamma(static_cast<double>(n) + 1) - std::lgamma(static_cast<double>(k) + 1) -
                  std::lgamma(static_cast<double>(n - k) + 1));
}

}  // namespace

std::size_t SimplexFlow::index_of(double t) const { return nearest_index(grid, t); }
std::size_t SampleFlow::index_of(double t) const { return nearest_index(grid, t); }

double SampleFlow::mean(std::size_t k) const {
  const auto& s = samples[k];
  if (weights.empty() || weights[k].empty()) {
    return std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    num += weights[k][i] * s[i];
    den += weights[k][i];
  }
  return num / den;
}

double SampleFlow::variance(std::size_t k) const {
  const double m = mean(k);
  const auto& s = samples[k];
  double acc = 0.0, den = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double w = (weights.empty() || weights[k].empty()) ? 1.0 : weights[k][i];
    acc += w * (s[i] - m) * (s[i] - m);
    den += w;
  }
  return acc / den;
}

// ---------------------------------------------------------------------------

SimplexFlow solve_mf_master(const JumpModel& m, std::span<const double> mu0, double horizon,
                            double dt, std::size_t record_stride) {
  if (!m.mean_field_rates) {
    throw InvalidInput("model '" + m.name + "' has no normalized mean-field rates");
  }
  const std::size_t ns = m.num_states();
  const std::size_t nj = m.num_jumps();
  check_simplex(mu0, ns);
  if (!(dt > 0.0) || !(horizon >= 0.0)) throw InvalidInput("solve_mf_master needs dt > 0");
  if (record_stride == 0) throw InvalidInput("record_stride must be positive");

  std::vector<double> rates(nj);
  auto derivative = [&](double t, const std::vector<double>& mu, std::vector<double>& out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (std::size_t x = 0; x < ns; ++x) {
      if (mu[x] == 0.0) continue;
      m.mean_field_rates(t, static_cast<State>(x), mu, rates);
      for (std::size_t j = 0; j < nj; ++j) {
        if (!m.legal(static_cast<State>(x), j) || rates[j] == 0.0) continue;
        const double flux = mu[x] * rates[j];
        out[x] -= flux;
        out[static_cast<std::size_t>(static_cast<int>(x) + m.jumps[j])] += flux;
      }
    }
  };

  const auto steps = static_cast<std::size_t>(std::llround(horizon / dt));
  SimplexFlow flow;
  std::vector<double> mu(mu0.begin(), mu0.end());
  flow.grid.push_back(0.0);
  flow.values.push_back(mu);
  std::vector<double> k1(ns), k2(ns), k3(ns), k4(ns), tmp(ns);
  for (std::size_t step = 0; step < steps; ++step) {
    const double t = static_cast<double>(step) * dt;
    derivative(t, mu, k1);
    for (std::size_t x = 0; x < ns; ++x) tmp[x] = mu[x] + 0.5 * dt * k1[x];
    derivative(t + 0.5 * dt, tmp, k2);
    for (std::size_t x = 0; x < ns; ++x) tmp[x] = mu[x] + 0.5 * dt * k2[x];
    derivative(t + 0.5 * dt, tmp, k3);
    for (std::size_t x = 0; x < ns; ++x) tmp[x] = mu[x] + dt * k3[x];
    derivative(t + dt, tmp, k4);
    double sum = 0.0;
    for (std::size_t x = 0; x < ns; ++x) {
      double v = mu[x] + dt / 6.0 * (k1[x] + 2.0 * k2[x] + 2.0 * k3[x] + k4[x]);
      if (v < -kSimplexViolation) {
        throw StepSizeError("mean-field step " + std::to_string(step) + " left the simplex (" +
                            format_double(v) + "); reduce dt");
      }
      v = std::max(v, 0.0);
      mu[x] = v;
      sum += v;
    }
    for (double& v : mu) v /= sum;
    if ((step + 1) % record_stride == 0 || step + 1 == steps) {
      flow.grid.push_back(static_cast<double>(step + 1) * dt);
      flow.values.push_back(mu);
    }
  }
  return flow;
}

SimplexFlow simulate_nonlinear_jump(const JumpModel& m, std::span<const double> mu0,
                                    double horizon, std::size_t particles, double dt,
                                    const SimulationOptions& options) {
  if (!m.mean_field_rates) {
    throw InvalidInput("model '" + m.name + "' has no normalized mean-field rates");
  }
  const std::size_t ns = m.num_states();
  const std::size_t nj = m.num_jumps();
  check_simplex(mu0, ns);
  if (particles < 100) throw InvalidInput("simulate_nonlinear_jump needs at least 100 particles");
  if (!(dt > 0.0) || !(horizon >= 0.0)) throw InvalidInput("simulate_nonlinear_jump needs dt > 0");

  const auto init = InitialCondition::iid(std::vector<double>(mu0.begin(), mu0.end()));
  std::vector<State> x(particles);
  std::vector<Stream> rngs;
  rngs.reserve(particles);
  for (std::size_t i = 0; i < particles; ++i) {
    x[i] = init.draw(options.seed, i, 0);
    rngs.emplace_back(options.seed, i, 0, stream_tag::kDynamics);
  }
  auto empirical = [&] {
    std::vector<double> mu(ns, 0.0);
    for (State s : x) mu[static_cast<std::size_t>(s)] += 1.0;
    for (double& v : mu) v /= static_cast<double>(particles);
    return mu;
  };

  SimplexFlow flow;
  flow.grid.push_back(0.0);
  flow.values.push_back(empirical());
  const auto steps = static_cast<std::size_t>(std::llround(horizon / dt));
  std::vector<double> table(ns * nj), totals(ns), buf(nj);
  for (std::size_t step = 0; step < steps; ++step) {
    const double t = static_cast<double>(step) * dt;
    const auto& mu = flow.values.back();
    for (std::size_t s = 0; s < ns; ++s) {
      m.mean_field_rates(t, static_cast<State>(s), mu, buf);
      totals[s] = 0.0;
      for (std::size_t j = 0; j < nj; ++j) {
        const double r = m.legal(static_cast<State>(s), j) ? buf[j] : 0.0;
        if (!(r >= 0.0)) throw InvalidInput("negative mean-field rate");
        table[s * nj + j] = r;
        totals[s] += r;
      }
    }
    // Within a window every particle is an independent CTMC with frozen rates.
    parallel_for(particles, options.threads, [&](std::size_t i) {
      State s = x[i];
      double clock = 0.0;
      Stream& rng = rngs[i];
      while (true) {
        const double tot = totals[static_cast<std::size_t>(s)];
        if (!(tot > 0.0)) break;
        clock += rng.exponential(tot);
        if (clock > dt) break;
        double level = rng.uniform() * tot;
        for (std::size_t j = 0; j < nj; ++j) {
          const double r = table[static_cast<std::size_t>(s) * nj + j];
          if (level < r) {
            s += m.jumps[j];
            break;
          }
          level -= r;
        }
      }
      x[i] = s;
    });
    flow.grid.push_back(static_cast<double>(step + 1) * dt);
    flow.values.push_back(empirical());
  }
  return flow;
}

SampleFlow solve_mckean_vlasov_diffusion(const DiffusionModel& m,
                                         const DiffusionInitial::Sampler& mu0_sampler,
                                         double horizon, std::size_t particles, double dt,
                                         const SimulationOptions& options,
                                         std::size_t record_stride) {
  if (particles < 100) throw InvalidInput("McKean-Vlasov scheme needs at least 100 particles");
  if (!(dt > 0.0) || !(horizon >= 0.0)) throw InvalidInput("McKean-Vlasov scheme needs dt > 0");
  if (record_stride == 0) throw InvalidInput("record_stride must be positive");
  std::vector<double> cur(particles), next(particles);
  std::vector<Stream> rngs;
  rngs.reserve(particles);
  for (std::size_t i = 0; i < particles; ++i) {
    Stream init(options.seed, i, 0, stream_tag::kInitial);
    cur[i] = mu0_sampler(init);
    if (!std::isfinite(cur[i])) throw NumericalError("non-finite initial sample");
    rngs.emplace_back(options.seed, i, 0, stream_tag::kDynamics);
  }
  SampleFlow flow;
  flow.grid.push_back(0.0);
  flow.samples.push_back(cur);
  const auto steps = static_cast<std::size_t>(std::llround(horizon / dt));
  const double sqdt = std::sqrt(dt);
  for (std::size_t step = 0; step < steps; ++step) {
    const double t = static_cast<double>(step) * dt;
    const std::span<const double> nu(cur);
    parallel_for(particles, options.threads, [&](std::size_t i) {
      next[i] = cur[i] + m.drift(t, cur[i], nu) * dt + sqdt * rngs[i].normal();
      if (!std::isfinite(next[i])) {
        throw NumericalError("non-finite particle value at step " + std::to_string(step + 1));
      }
    });
    std::swap(cur, next);
    if ((step + 1) % record_stride == 0 || step + 1 == steps) {
      flow.grid.push_back(static_cast<double>(step + 1) * dt);
      flow.samples.push_back(cur);
    }
  }
  return flow;
}

double independent_agreement_probability(std::span<const double> mu, std::size_t kappa,
                                         std::size_t k) {
  if (k > kappa) throw InvalidInput("agreement count exceeds degree");
  double p = 0.0;
  for (double ms : mu) {
    if (ms == 0.0) continue;
    p += ms * binomial(kappa, k) * std::pow(ms, static_cast<double>(k)) *
         std::pow(1.0 - ms, static_cast<double>(kappa - k));
  }
  return p;
}

std::vector<double> mf_agreement_statistic(const SimplexFlow& flow, std::size_t kappa,
                                           std::size_t k) {
  std::vector<double> out;
  out.reserve(flow.values.size());
  for (const auto& mu : flow.values) out.push_back(independent_agreement_probability(mu, kappa, k));
  return out;
}

void write_simplex_flow_csv(std::ostream& os, const SimplexFlow& flow) {
  os << "t,state,probability\n";
  for (std::size_t k = 0; k < flow.grid.size(); ++k) {
    for (std::size_t s = 0; s < flow.values[k].size(); ++s) {
      os << format_double(flow.grid[k]) << ',' << s << ',' << format_double(flow.values[k][s]) << '\n';
    }
  }
}

void write_sample_flow_csv(std::ostream& os, const SampleFlow& flow) {
  os << "t,sample,value,weight\n";
  for (std::size_t k = 0; k < flow.grid.size(); ++k) {
    const auto& s = flow.samples[k];
    const double eq = 1.0 / static_cast<double>(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      const double w = (flow.weights.empty() || flow.weights[k].empty()) ? eq : flow.weights[k][i];
      os << format_double(flow.grid[k]) << ',' << i << ',' << format_double(s[i]) << ','
         << format_double(w) << '\n';
    }
  }
}

}  // namespace sparse_ips
