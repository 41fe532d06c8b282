#include <doctest.h>

#include <cmath>
#include <sstream>

#include "sparse_ips/errors.hpp"
#include "sparse_ips/mean_field.hpp"
#include "sparse_ips/observables.hpp"

using namespace sparse_ips;

TEST_CASE("master equation fixed points") {
  const std::vector<double> mu0{0.7, 0.3};
  const auto voter = solve_mf_master(voter_model(), mu0, 5.0, 0.01);
  CHECK(std::abs(voter.values.back()[1] - 0.3) <= 1e-8);
  CHECK(voter.grid.back() == doctest::Approx(5.0));

  const std::vector<double> half{0.5, 0.5};
  const auto contact = solve_mf_master(contact_model(2.0), half, 5.0, 0.01);
  for (const auto& v : contact.values) CHECK(std::abs(v[1] - 0.5) <= 1e-6);

  const auto frozen = independent_model({{0.0}, {0.0}, {0.0}}, {1});
  const std::vector<double> dirac{0.0, 1.0, 0.0};
  const auto flat = solve_mf_master(frozen, dirac, 2.0, 0.1);
  for (const auto& v : flat.values) CHECK(v == dirac);
}

TEST_CASE("master equation conserves mass and tracks the logistic solution") {
  const std::vector<double> mu0{0.9, 0.1, 0.0};
  const auto flow = solve_mf_master(sir_model(2.0, 1.0), mu0, 5.0, 0.01, 10);
  CHECK(flow.grid.size() == 51);
  for (const auto& v : flow.values) {
    double s = 0.0;
    for (double p : v) {
      CHECK(p >= 0.0);
      s += p;
    }
    CHECK(std::abs(s - 1.0) <= 1e-9);
  }

  // contact: drho/dt = lambda rho (1 - rho) - rho has the closed form
  // rho(t) = a / (1 + (a/rho0 - 1) e^{-(lambda-1) t}) with a = 1 - 1/lambda.
  const double lambda = 3.0, rho0 = 0.05, a = 1.0 - 1.0 / lambda;
  const std::vector<double> c0{1 - rho0, rho0};
  const auto c = solve_mf_master(contact_model(lambda), c0, 3.0, 0.001, 100);
  for (std::size_t k = 0; k < c.grid.size(); ++k) {
    const double t = c.grid[k];
    const double exact = a / (1.0 + (a / rho0 - 1.0) * std::exp(-(lambda - 1.0) * t));
    CHECK(std::abs(c.values[k][1] - exact) <= 1e-9);
  }
}

TEST_CASE("master equation errors") {
  const std::vector<double> mu0{0.5, 0.5};
  CHECK_THROWS_AS(solve_mf_master(contact_model(50.0), mu0, 1.0, 1.0), StepSizeError);
  const std::vector<double> bad{0.6, 0.6};
  CHECK_THROWS_AS(solve_mf_master(voter_model(), bad, 1.0, 0.1), InvalidInput);
  JumpModel no_mf = voter_model();
  no_mf.mean_field_rates = nullptr;
  CHECK_THROWS_AS(solve_mf_master(no_mf, mu0, 1.0, 0.1), InvalidInput);
}

TEST_CASE("particle system follows the master equation") {
  SimulationOptions opts;
  opts.seed = 21;
  const std::vector<double> mu0{0.7, 0.3};
  const std::size_t n = 100'000;
  const auto ode = solve_mf_master(voter_model(), mu0, 5.0, 0.01);
  const auto part = simulate_nonlinear_jump(voter_model(), mu0, 5.0, n, 0.01, opts);
  for (double t : {1.0, 2.0, 5.0}) CHECK(std::abs(part.at(t)[1] - ode.at(t)[1]) <= 0.01);

  const std::vector<double> c0{0.8, 0.2};
  const auto code = solve_mf_master(contact_model(2.0), c0, 1.0, 0.01);
  const auto cpart = simulate_nonlinear_jump(contact_model(2.0), c0, 1.0, 10'000, 0.01, opts);
  CHECK(total_variation(cpart.at(1.0), code.at(1.0)) <= 5.0 / std::sqrt(10'000.0));

  SUBCASE("degenerate cases") {
    const auto frozen = independent_model({{0.0}, {0.0}}, {1});
    const auto f = simulate_nonlinear_jump(frozen, mu0, 1.0, 1000, 0.1, opts);
    for (const auto& v : f.values) CHECK(v == f.values.front());
    const auto single = independent_model({{0.0}}, {1});
    const std::vector<double> one{1.0};
    for (const auto& v : simulate_nonlinear_jump(single, one, 1.0, 100, 0.1, opts).values) CHECK(v[0] == 1.0);
    CHECK_THROWS_AS(simulate_nonlinear_jump(voter_model(), mu0, 1.0, 50, 0.1, opts), InvalidInput);
  }
}

TEST_CASE("propagation of chaos on complete graphs") {
  // Per-replica TV to the master-equation law, averaged over 200 replicas.
  const std::vector<double> mu0{0.7, 0.3};
  const auto ode = solve_mf_master(voter_model(), mu0, 1.0, 0.01);
  std::vector<double> dist;
  for (std::size_t n : {50, 200, 1000}) {
    SimulationOptions opts;
    opts.seed = 1000 + n;
    const std::vector<double> grid{1.0};
    std::vector<double> per(200, 0.0);
    simulate_jump_observed(gen_complete(n), voter_model(), InitialCondition::bernoulli(0.3), 1.0, grid, 200, opts,
                           [&](std::size_t r, std::size_t, std::span<const State> cfg) {
                             per[r] = total_variation(empirical_measure(cfg, 2), ode.at(1.0));
                           });
    double mean = 0.0;
    for (double d : per) mean += d / 200.0;
    dist.push_back(mean);
  }
  CHECK(dist[0] > dist[1]);
  CHECK(dist[1] > dist[2]);
}

TEST_CASE("McKean-Vlasov particle scheme") {
  SimulationOptions opts;
  opts.seed = 5;
  const auto gauss = [](Stream& s) { return 1.0 + 0.5 * s.normal(); };

  SUBCASE("linear drift decays the mean") {
    const auto m = DiffusionModel::general([](double, double x, std::span<const double>) { return -x; });
    const auto flow = solve_mckean_vlasov_diffusion(m, gauss, 1.0, 100'000, 0.01, opts, 100);
    const double expect = flow.mean(0) * std::exp(-1.0);
    CHECK(std::abs(flow.mean(flow.index_of(1.0)) - expect) <= 0.05 * std::abs(expect));
  }

  SUBCASE("zero drift adds t to the variance") {
    const auto m = DiffusionModel::general([](double, double, std::span<const double>) { return 0.0; });
    const std::size_t n = 20'000;
    const auto flow = solve_mckean_vlasov_diffusion(m, gauss, 1.0, n, 0.01, opts, 100);
    const double v = flow.variance(1);
    CHECK(std::abs(v - (flow.variance(0) + 1.0)) <= 3 * v * std::sqrt(2.0 / (n - 1)));
  }

  SUBCASE("antisymmetric interaction keeps the mean") {
    const std::size_t n = 500;
    const auto m = DiffusionModel::pairwise([](double, double x, double y) { return std::sin(y - x); });
    const auto flow = solve_mckean_vlasov_diffusion(m, gauss, 1.0, n, 0.01, opts, 50);
    for (std::size_t k = 1; k < flow.grid.size(); ++k) {
      CHECK(std::abs(flow.mean(k) - flow.mean(0)) <= 3 * std::sqrt(flow.grid[k] / n));
    }
  }

  const auto blow = DiffusionModel::general(
      [](double, double, std::span<const double>) { return std::numeric_limits<double>::infinity(); });
  CHECK_THROWS_AS(solve_mckean_vlasov_diffusion(blow, gauss, 1.0, 100, 0.1, opts), NumericalError);
}

TEST_CASE("independent agreement statistic") {
  const std::vector<double> mu{0.7, 0.3};
  CHECK(independent_agreement_probability(mu, 3, 2) == doctest::Approx(0.3654).epsilon(1e-12));
  const std::vector<double> dirac{0.0, 1.0};
  for (std::size_t kappa : {1, 3, 6}) CHECK(independent_agreement_probability(dirac, kappa, kappa) == 1.0);
  const std::vector<double> uni{0.5, 0.5};
  CHECK(independent_agreement_probability(uni, 3, 2) == doctest::Approx(3.0 / 8));
  CHECK_THROWS_AS(independent_agreement_probability(uni, 3, 4), InvalidInput);

  const auto flow = solve_mf_master(voter_model(), mu, 5.0, 0.05);
  for (double p : mf_agreement_statistic(flow, 3, 2)) CHECK(p == doctest::Approx(0.3654).epsilon(1e-8));
}

TEST_CASE("flow csv") {
  SimplexFlow f{{0.0, 0.5}, {{1.0, 0.0}, {0.25, 0.75}}};
  std::ostringstream os;
  write_simplex_flow_csv(os, f);
  CHECK(os.str() == "t,state,probability\n0,0,1\n0,1,0\n0.5,0,0.25\n0.5,1,0.75\n");
  SampleFlow s{{0.0}, {{1.5, -2.0}}, {}};
  std::ostringstream ss;
  write_sample_flow_csv(ss, s);
  CHECK(ss.str().rfind("t,sample,value,weight\n0,0,1.5,", 0) == 0);
}
