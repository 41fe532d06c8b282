#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sparse_ips/csv.hpp"
#include "sparse_ips/errors.hpp"
#include "sparse_ips/graphs.hpp"
#include "sparse_ips/jump_dynamics.hpp"
#include "sparse_ips/local_equation.hpp"
#include "sparse_ips/mean_field.hpp"
#include "sparse_ips/scenario.hpp"

namespace fs = std::filesystem;
using namespace sparse_ips;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string out_dir;
};

void add_common(CLI::App* app, Common& c, bool needs_config) {
  auto* opt = app->add_option("--config", c.config, "scenario TOML file");
  if (needs_config) opt->required();
  app->add_option("--seed", c.seed, "master seed (overrides run.seed)");
  app->add_option("--threads", c.threads, "worker threads (default: SPARSE_IPS_THREADS or all cores)");
  app->add_option("--out-dir", c.out_dir, "output directory (overrides output.dir)");
}

RunOptions run_options(const Common& c) {
  RunOptions o;
  if (c.threads) {
    o.threads = *c.threads;
  } else if (const char* env = std::getenv("SPARSE_IPS_THREADS")) {
    try {
      o.threads = static_cast<unsigned>(std::stoul(env));
    } catch (const std::exception&) {
      throw InvalidInput("SPARSE_IPS_THREADS must be a nonnegative integer");
    }
  }
  o.seed = c.seed;
  o.out_dir = c.out_dir;
  return o;
}

fs::path out_dir_for(const ScenarioSpec& spec, const RunOptions& o) {
  return o.out_dir.empty() ? fs::path(spec.output_dir) : o.out_dir;
}

std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw InvalidInput("cannot write " + p.string());
  return os;
}

void print_files(const std::vector<fs::path>& files) {
  for (const auto& f : files) std::cout << "wrote " << f.string() << '\n';
}

int cmd_scenario(const std::string& name, const Common& c) {
  const auto spec = resolve_scenario(name);
  const auto o = run_options(c);
  const auto res = run_scenario(spec, o);
  for (const auto& curve : res.curves) {
    const auto& s = curve.series;
    std::cout << curve.method << ": t=" << s.grid.back() << " mean=" << s.mean.back() << '\n';
  }
  if (res.hydro) {
    for (std::size_t i = 0; i < res.hydro->n.size(); ++i) {
      std::cout << "n=" << res.hydro->n[i] << " W1=" << res.hydro->mean_distance[i] << " +- "
                << res.hydro->std_error[i] << '\n';
    }
    std::cout << "inversions=" << res.hydro->inversions
              << (res.hydro->trend_ok ? " (trend ok)" : " (trend broken)") << '\n';
  }
  if (res.randomlimit) {
    const auto& r = *res.randomlimit;
    for (std::size_t i = 0; i < r.n.size(); ++i) {
      std::cout << "n=" << r.n[i] << " sd=" << r.sd_mass[i] << " mean=" << r.mean_mass[i] << '\n';
    }
    std::cout << (r.above_floor ? "dispersion stays above " : "dispersion fell below ") << r.floor
              << '\n';
  }
  print_files(res.files);
  return 0;
}

int cmd_simulate(const Common& c) {
  const auto spec = load_scenario_file(c.config);
  const auto o = run_options(c);
  const std::uint64_t seed = o.seed.value_or(spec.run.seed);
  const auto g = build_graph(spec.graph, seed);
  const auto m = build_model(spec.model);
  SimulationOptions sim;
  sim.seed = seed;
  sim.threads = o.threads;
  const auto ens = simulate_jump(g, m, InitialCondition::iid(spec.initial.probs), spec.run.horizon,
                                 spec.run.replicas, sim);
  const auto dir = out_dir_for(spec, o);
  fs::create_directories(dir);
  std::vector<fs::path> files{dir / "events.csv", dir / "initial.csv"};
  {
    auto os = open_out(files[0]);
    write_trajectory_csv(os, ens);
  }
  {
    auto os = open_out(files[1]);
    write_initial_states_csv(os, ens);
  }
  finalize_run_dir(dir, spec, seed, files);
  std::cout << "vertices=" << g.num_vertices() << " replicas=" << ens.num_replicas()
            << " events=" << ens.total_events() << '\n';
  print_files(files);
  return 0;
}

int cmd_meanfield(const Common& c, std::size_t particles) {
  const auto spec = load_scenario_file(c.config);
  const auto o = run_options(c);
  const std::uint64_t seed = o.seed.value_or(spec.run.seed);
  const auto m = build_model(spec.model);
  const auto flow = solve_mf_master(m, spec.initial.probs, spec.run.horizon, spec.localeq.ode_dt);
  const auto dir = out_dir_for(spec, o);
  fs::create_directories(dir);
  std::vector<fs::path> files{dir / "meanfield_flow.csv"};
  {
    auto os = open_out(files.back());
    write_simplex_flow_csv(os, flow);
  }
  if (particles > 0) {
    SimulationOptions sim;
    sim.seed = seed;
    sim.threads = o.threads;
    const auto np = simulate_nonlinear_jump(m, spec.initial.probs, spec.run.horizon, particles,
                                            spec.run.dt, sim);
    files.push_back(dir / "nonlinear_flow.csv");
    auto os = open_out(files.back());
    write_simplex_flow_csv(os, np);
  }
  finalize_run_dir(dir, spec, seed, files);
  print_files(files);
  return 0;
}

int cmd_localeq(const Common& c, bool mc) {
  const auto spec = load_scenario_file(c.config);
  const auto o = run_options(c);
  const std::uint64_t seed = o.seed.value_or(spec.run.seed);
  const auto m = build_model(spec.model);
  const auto g = build_graph(spec.graph, seed);
  if (!g.root()) throw InvalidInput("graph: the graph has no root");
  const std::size_t kappa = g.degree(*g.root());
  const auto sol = solve_local_eq_ode(m, kappa, spec.initial.probs, spec.run.horizon,
                                      spec.localeq.ode_dt);
  const auto dir = out_dir_for(spec, o);
  fs::create_directories(dir);
  std::vector<fs::path> files{dir / "localeq_gamma.csv", dir / "localeq_law.csv"};
  {
    auto os = open_out(files[0]);
    write_gamma_csv(os, sol.gamma);
  }
  {
    auto os = open_out(files[1]);
    write_joint_law_csv(os, sol.law);
  }
  std::cout << "kappa=" << kappa << " fallback entries=" << sol.gamma.fallback_count() << '\n';
  if (mc) {
    LocalEqMcOptions mo;
    mo.replicas = spec.localeq.mc_replicas;
    mo.max_iters = spec.localeq.max_iters;
    mo.tol = spec.localeq.tol;
    mo.sim.seed = seed;
    mo.sim.threads = o.threads;
    const auto res = simulate_local_eq_fixed_point(m, kappa, spec.initial.probs, spec.run.horizon,
                                                   spec.run.dt, mo);
    files.push_back(dir / "localeq_mc_gamma.csv");
    {
      auto os = open_out(files.back());
      write_gamma_csv(os, res.gamma);
    }
    files.push_back(dir / "localeq_mc_law.csv");
    {
      auto os = open_out(files.back());
      write_joint_law_csv(os, res.law);
    }
    std::cout << "fixed point " << (res.converged ? "converged" : "did not converge") << " after "
              << res.iterations << " iterations (last change " << res.sup_changes.back() << ")\n";
  }
  finalize_run_dir(dir, spec, seed, files);
  print_files(files);
  return 0;
}

int cmd_hydro(const Common& c) {
  return cmd_scenario(c.config.empty() ? std::string("hydro") : c.config, c);
}

int cmd_graphstats(const Common& c, std::optional<std::size_t> radius) {
  const auto spec = load_scenario_file(c.config);
  const auto o = run_options(c);
  const std::uint64_t seed = o.seed.value_or(spec.run.seed);
  const auto g = build_graph(spec.graph, seed);
  const auto dir = out_dir_for(spec, o);
  fs::create_directories(dir);
  std::vector<fs::path> files{dir / "degree_distribution.csv", dir / "graph.edges"};
  {
    auto os = open_out(files[0]);
    os << "degree,fraction\n";
    const auto d = degree_distribution(g);
    for (std::size_t k = 0; k < d.size(); ++k) os << k << ',' << format_double(d[k]) << '\n';
  }
  {
    auto os = open_out(files[1]);
    write_edge_list(os, g);
  }
  if (radius) {
    files.push_back(dir / "neighborhoods.csv");
    auto os = open_out(files.back());
    os << "code,radius,frequency\n";
    for (const auto& [code, f] : local_nbhd_distribution(g, *radius)) {
      os << code << ',' << canonical_code(f.representative).radius << ','
         << format_double(f.frequency) << '\n';
    }
  }
  finalize_run_dir(dir, spec, seed, files);
  std::cout << "vertices=" << g.num_vertices() << " edges=" << g.num_edges()
            << " mean_degree=" << g.mean_degree() << " max_degree=" << g.max_degree()
            << " tree=" << (g.is_tree() ? "yes" : "no")
            << " truncated=" << (g.truncated() ? "yes" : "no") << '\n';
  print_files(files);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interacting particle systems on sparse graphs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  Common common;
  std::string scenario_name;
  auto* scenario = app.add_subcommand("scenario", "run a built-in scenario or a TOML file");
  scenario->add_option("name", scenario_name, "fig2 | fig4 | randomlimit | hydro | path.toml")
      ->required();
  add_common(scenario, common, false);

  auto* simulate = app.add_subcommand("simulate", "direct simulation; writes event lists");
  add_common(simulate, common, true);

  std::size_t particles = 0;
  auto* meanfield = app.add_subcommand("meanfield", "mean-field master equation");
  add_common(meanfield, common, true);
  meanfield->add_option("--particles", particles, "also run the N-particle scheme");

  bool mc = false;
  auto* localeq = app.add_subcommand("localeq", "Markovian local equation (closed ODE)");
  add_common(localeq, common, true);
  localeq->add_flag("--mc", mc, "also run the Monte Carlo fixed point");

  auto* hydro = app.add_subcommand("hydro", "hydrodynamic trend report");
  add_common(hydro, common, false);

  std::optional<std::size_t> radius;
  auto* graphstats = app.add_subcommand("graphstats", "graph summary and local statistics");
  add_common(graphstats, common, true);
  graphstats->add_option("--radius", radius, "also tabulate radius-r neighbourhood classes");

  CLI11_PARSE(app, argc, argv);
  try {
    if (scenario->parsed()) return cmd_scenario(scenario_name, common);
    if (simulate->parsed()) return cmd_simulate(common);
    if (meanfield->parsed()) return cmd_meanfield(common, particles);
    if (localeq->parsed()) return cmd_localeq(common, mc);
    if (hydro->parsed()) return cmd_hydro(common);
    if (graphstats->parsed()) return cmd_graphstats(common, radius);
  } catch (const InvalidInput& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
