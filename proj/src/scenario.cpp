#include "sparse_ips/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <json.hpp>
#include <toml.hpp>

#include "sparse_ips/csv.hpp"
#include "sparse_ips/errors.hpp"
#include "sparse_ips/local_equation.hpp"
#include "sparse_ips/mean_field.hpp"
#include "sparse_ips/parallel.hpp"

namespace sparse_ips {

namespace {

// ---------------------------------------------------------------------------
// TOML reading

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

void check_keys(const toml::table& t, const std::string& path,
                std::initializer_list<const char*> allowed) {
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : t) {
    const std::string key(k.str());
    if (!ok.count(key)) throw InvalidInput(join(path, key) + ": unknown key");
  }
}

const toml::table* section(const toml::table& root, const char* name) {
  const auto* node = root.get(name);
  if (!node) return nullptr;
  const auto* t = node->as_table();
  if (!t) throw InvalidInput(std::string(name) + ": expected a table");
  return t;
}

double to_double(const toml::node& n, const std::string& where) {
  if (const auto* f = n.as_floating_point()) return f->get();
  if (const auto* i = n.as_integer()) return static_cast<double>(i->get());
  throw InvalidInput(where + ": expected a number");
}

std::int64_t to_int(const toml::node& n, const std::string& where) {
  if (const auto* i = n.as_integer()) return i->get();
  throw InvalidInput(where + ": expected an integer");
}

void read(const toml::table& t, const std::string& path, const char* key, double& out) {
  if (const auto* n = t.get(key)) out = to_double(*n, join(path, key));
}

void read(const toml::table& t, const std::string& path, const char* key, std::size_t& out) {
  if (const auto* n = t.get(key)) {
    const auto v = to_int(*n, join(path, key));
    if (v < 0) throw InvalidInput(join(path, key) + ": must be nonnegative");
    out = static_cast<std::size_t>(v);
  }
}

void read(const toml::table& t, const std::string& path, const char* key, std::string& out) {
  if (const auto* n = t.get(key)) {
    const auto* s = n->as_string();
    if (!s) throw InvalidInput(join(path, key) + ": expected a string");
    out = s->get();
  }
}

template <class T>
void read_array(const toml::table& t, const std::string& path, const char* key, std::vector<T>& out) {
  const auto* n = t.get(key);
  if (!n) return;
  const auto where = join(path, key);
  const auto* arr = n->as_array();
  if (!arr) throw InvalidInput(where + ": expected an array");
  out.clear();
  for (std::size_t i = 0; i < arr->size(); ++i) {
    const auto& e = *arr->get(i);
    const auto ew = where + "[" + std::to_string(i) + "]";
    if constexpr (std::is_same_v<T, double>) {
      out.push_back(to_double(e, ew));
    } else if constexpr (std::is_same_v<T, std::size_t>) {
      const auto v = to_int(e, ew);
      if (v < 0) throw InvalidInput(ew + ": must be nonnegative");
      out.push_back(static_cast<std::size_t>(v));
    } else {
      const auto* s = e.as_string();
      if (!s) throw InvalidInput(ew + ": expected a string");
      out.push_back(s->get());
    }
  }
}

void require(bool cond, const std::string& field, const std::string& what) {
  if (!cond) throw InvalidInput(field + ": " + what);
}

void validate(const ScenarioSpec& s) {
  require(!s.name.empty(), "name", "must be set");
  require(s.kind == "agreement" || s.kind == "hydro" || s.kind == "randomlimit", "kind",
          "must be agreement, hydro or randomlimit");

  static const std::set<std::string> models{"voter", "contact", "sir"};
  require(models.count(s.model.name) > 0, "model.name", "unknown model '" + s.model.name + "'");
  require(s.model.lambda >= 0.0 && std::isfinite(s.model.lambda), "model.lambda", "must be >= 0");
  require(s.model.recovery >= 0.0 && std::isfinite(s.model.recovery), "model.recovery",
          "must be >= 0");
  require(s.model.lag >= 0.0 && std::isfinite(s.model.lag), "model.lag", "must be >= 0");
  const std::size_t states = s.model.name == "sir" ? 3 : 2;
  require(s.initial.probs.size() == states, "initial.probs",
          "needs " + std::to_string(states) + " entries for model " + s.model.name);
  double sum = 0.0;
  for (double p : s.initial.probs) {
    require(p >= 0.0, "initial.probs", "entries must be >= 0");
    sum += p;
  }
  require(std::abs(sum - 1.0) <= 1e-9, "initial.probs", "must sum to 1");

  if (s.kind == "agreement") {
    static const std::set<std::string> kinds{"regular_tree", "erdos_renyi", "er_component", "ugw",
                                             "cycle", "path", "complete", "edge_list"};
    require(kinds.count(s.graph.kind) > 0, "graph.kind", "unknown generator '" + s.graph.kind + "'");
    if (s.graph.kind == "regular_tree") {
      require(s.graph.kappa >= 1, "graph.kappa", "must be >= 1");
      require(s.graph.depth >= 1, "graph.depth", "must be >= 1 (depth 0 isolates the root)");
    }
    if (s.graph.kind == "erdos_renyi" || s.graph.kind == "er_component" || s.graph.kind == "cycle" ||
        s.graph.kind == "path" || s.graph.kind == "complete") {
      require(s.graph.n >= 1, "graph.n", "must be >= 1");
    }
    if (s.graph.kind == "erdos_renyi" || s.graph.kind == "er_component" || s.graph.kind == "ugw") {
      require(s.graph.mean_degree >= 0.0, "graph.mean_degree", "must be >= 0");
    }
    if (s.graph.kind == "edge_list") require(!s.graph.file.empty(), "graph.file", "must be set");

    require(s.run.horizon > 0.0 && std::isfinite(s.run.horizon), "run.horizon", "must be > 0");
    require(s.run.dt > 0.0 && s.run.dt <= s.run.horizon, "run.dt", "must lie in (0, horizon]");
    require(s.run.replicas >= 1, "run.replicas", "must be >= 1");
    require(!s.run.methods.empty(), "run.methods", "must list at least one method");
    static const std::set<std::string> methods{"direct", "meanfield", "localeq-ode", "localeq-mc"};
    for (const auto& m : s.run.methods) {
      require(methods.count(m) > 0, "run.methods", "unknown method '" + m + "'");
    }
    require(s.localeq.ode_dt > 0.0 && s.localeq.ode_dt <= s.run.dt, "localeq.ode_dt",
            "must lie in (0, run.dt]");
    require(s.localeq.mc_replicas >= 1, "localeq.mc_replicas", "must be >= 1");
    require(s.localeq.max_iters >= 1, "localeq.max_iters", "must be >= 1");
    require(s.localeq.tol > 0.0, "localeq.tol", "must be > 0");
  } else if (s.kind == "hydro") {
    require(s.hydro.c >= 0.0, "hydro.c", "must be >= 0");
    require(!s.hydro.n.empty(), "hydro.n", "must list at least one size");
    for (auto n : s.hydro.n) require(n >= 1, "hydro.n", "sizes must be >= 1");
    require(s.hydro.t > 0.0, "hydro.t", "must be > 0");
    require(s.hydro.seeds >= 1, "hydro.seeds", "must be >= 1");
    require(s.hydro.replicas >= 1, "hydro.replicas", "must be >= 1");
    require(s.hydro.tree_samples >= 1, "hydro.tree_samples", "must be >= 1");
    require(s.hydro.tree_depth >= 1, "hydro.tree_depth", "must be >= 1");
  } else {
    require(s.randomlimit.c >= 0.0, "randomlimit.c", "must be >= 0");
    require(!s.randomlimit.n.empty(), "randomlimit.n", "must list at least one size");
    for (auto n : s.randomlimit.n) require(n >= 1, "randomlimit.n", "sizes must be >= 1");
    require(s.randomlimit.t > 0.0, "randomlimit.t", "must be > 0");
    require(s.randomlimit.replicas >= 2, "randomlimit.replicas", "must be >= 2");
  }
}

// ---------------------------------------------------------------------------

template <class E>
[[noreturn]] void rethrow_as(const E& e, const std::string& context) {
  throw E(context + ": " + e.what());
}

/// Runs fn and prefixes any library error with `context`, keeping its type.
template <class Fn>
auto with_context(const std::string& context, Fn&& fn) {
  try {
    return fn();
  } catch (const InvalidInput& e) {
    rethrow_as(e, context);
  } catch (const SizeCapExceeded& e) {
    rethrow_as(e, context);
  } catch (const EnvelopeViolation& e) {
    rethrow_as(e, context);
  } catch (const NumericalError& e) {
    rethrow_as(e, context);
  } catch (const StepSizeError& e) {
    rethrow_as(e, context);
  }
}

std::uint64_t derived_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  Stream s(seed, a, b, stream_tag::kRoot);
  return s();
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw InvalidInput("cannot write " + p.string());
  os << text;
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw InvalidInput("cannot read " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string fixed(double x, int digits) {
  std::ostringstream ss;
  ss << std::fixed << std::setprecision(digits) << x;
  return ss.str();
}

}  // namespace

// ---------------------------------------------------------------------------

ScenarioSpec parse_scenario(const std::string& toml_text) {
  toml::table root;
  try {
    root = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    std::ostringstream ss;
    ss << "config line " << e.source().begin.line << ": " << e.description();
    throw InvalidInput(ss.str());
  }
  check_keys(root, "", {"schema", "name", "kind", "graph", "model", "initial", "run", "localeq",
                        "hydro", "randomlimit", "output"});
  const auto* schema = root.get("schema");
  if (!schema) throw InvalidInput("schema: must be set (current version 1)");
  if (to_int(*schema, "schema") != kSchemaVersion) {
    throw InvalidInput("schema: unsupported version (expected 1)");
  }
  ScenarioSpec s;
  s.source = toml_text;
  read(root, "", "name", s.name);
  read(root, "", "kind", s.kind);

  if (const auto* t = section(root, "graph")) {
    check_keys(*t, "graph", {"kind", "n", "kappa", "depth", "mean_degree", "max_depth",
                             "max_vertices", "file", "seed"});
    read(*t, "graph", "kind", s.graph.kind);
    read(*t, "graph", "n", s.graph.n);
    read(*t, "graph", "kappa", s.graph.kappa);
    read(*t, "graph", "depth", s.graph.depth);
    read(*t, "graph", "mean_degree", s.graph.mean_degree);
    read(*t, "graph", "max_depth", s.graph.max_depth);
    read(*t, "graph", "max_vertices", s.graph.max_vertices);
    read(*t, "graph", "file", s.graph.file);
    if (t->get("seed")) {
      std::uint64_t seed = 0;
      read(*t, "graph", "seed", seed);
      s.graph.seed = seed;
    }
  }
  if (const auto* t = section(root, "model")) {
    check_keys(*t, "model", {"name", "lambda", "recovery", "lag"});
    read(*t, "model", "name", s.model.name);
    read(*t, "model", "lambda", s.model.lambda);
    read(*t, "model", "recovery", s.model.recovery);
    read(*t, "model", "lag", s.model.lag);
  }
  if (const auto* t = section(root, "initial")) {
    check_keys(*t, "initial", {"p", "probs"});
    if (t->get("p") && t->get("probs")) throw InvalidInput("initial: give either p or probs");
    if (t->get("p")) {
      double p = 0.0;
      read(*t, "initial", "p", p);
      require(p >= 0.0 && p <= 1.0, "initial.p", "must lie in [0, 1]");
      s.initial.probs = {1.0 - p, p};
    }
    read_array(*t, "initial", "probs", s.initial.probs);
  }
  if (const auto* t = section(root, "run")) {
    check_keys(*t, "run", {"horizon", "dt", "replicas", "methods", "agree", "seed"});
    read(*t, "run", "horizon", s.run.horizon);
    read(*t, "run", "dt", s.run.dt);
    read(*t, "run", "replicas", s.run.replicas);
    read_array(*t, "run", "methods", s.run.methods);
    read(*t, "run", "agree", s.run.agree);
    read(*t, "run", "seed", s.run.seed);
  }
  if (const auto* t = section(root, "localeq")) {
    check_keys(*t, "localeq", {"ode_dt", "mc_replicas", "max_iters", "tol"});
    read(*t, "localeq", "ode_dt", s.localeq.ode_dt);
    read(*t, "localeq", "mc_replicas", s.localeq.mc_replicas);
    read(*t, "localeq", "max_iters", s.localeq.max_iters);
    read(*t, "localeq", "tol", s.localeq.tol);
  }
  if (const auto* t = section(root, "hydro")) {
    check_keys(*t, "hydro", {"c", "n", "t", "seeds", "replicas", "tree_samples", "tree_depth"});
    read(*t, "hydro", "c", s.hydro.c);
    read_array(*t, "hydro", "n", s.hydro.n);
    read(*t, "hydro", "t", s.hydro.t);
    read(*t, "hydro", "seeds", s.hydro.seeds);
    read(*t, "hydro", "replicas", s.hydro.replicas);
    read(*t, "hydro", "tree_samples", s.hydro.tree_samples);
    read(*t, "hydro", "tree_depth", s.hydro.tree_depth);
  }
  if (const auto* t = section(root, "randomlimit")) {
    check_keys(*t, "randomlimit", {"c", "n", "t", "replicas", "floor"});
    read(*t, "randomlimit", "c", s.randomlimit.c);
    read_array(*t, "randomlimit", "n", s.randomlimit.n);
    read(*t, "randomlimit", "t", s.randomlimit.t);
    read(*t, "randomlimit", "replicas", s.randomlimit.replicas);
    read(*t, "randomlimit", "floor", s.randomlimit.floor);
  }
  if (const auto* t = section(root, "output")) {
    check_keys(*t, "output", {"dir"});
    read(*t, "output", "dir", s.output_dir);
  }
  if (s.output_dir.empty()) s.output_dir = "out/" + s.name;
  validate(s);
  return s;
}

ScenarioSpec load_scenario_file(const std::filesystem::path& path) {
  return parse_scenario(read_text(path));
}

std::vector<std::string> builtin_scenario_names() { return {"fig2", "fig4", "randomlimit", "hydro"}; }

std::string builtin_scenario_text(const std::string& name) {
  const std::string tree_voter = R"(
[graph]
kind = "regular_tree"
kappa = 3
depth = 9

[model]
name = "voter"

[initial]
p = 0.3
)";
  if (name == "fig2" || name == "fig4") {
    const std::string methods = name == "fig2" ? R"(["direct", "meanfield"])"
                                               : R"(["direct", "meanfield", "localeq-ode"])";
    return "schema = 1\nname = \"" + name + "\"\nkind = \"agreement\"\n" + tree_voter +
           "\n[run]\nhorizon = 5.0\ndt = 0.05\nreplicas = 100000\nmethods = " + methods +
           "\nagree = 2\nseed = 2024\n\n[localeq]\node_dt = 0.01\n";
  }
  if (name == "randomlimit") {
    return R"(schema = 1
name = "randomlimit"
kind = "randomlimit"

[model]
name = "voter"

[initial]
p = 0.3

[randomlimit]
c = 3.0
n = [300, 1000, 3000]
t = 1.0
replicas = 1000
floor = 0.05

[run]
seed = 2024
)";
  }
  if (name == "hydro") {
    return R"(schema = 1
name = "hydro"
kind = "hydro"

[model]
name = "voter"

[initial]
p = 0.3

[hydro]
c = 2.0
n = [100, 300, 1000]
t = 1.0
seeds = 10
replicas = 1
tree_samples = 100000
tree_depth = 6

[run]
seed = 2024
)";
  }
  throw InvalidInput("unknown built-in scenario '" + name + "'");
}

ScenarioSpec resolve_scenario(const std::string& name_or_path) {
  const auto names = builtin_scenario_names();
  if (std::find(names.begin(), names.end(), name_or_path) != names.end()) {
    return parse_scenario(builtin_scenario_text(name_or_path));
  }
  if (!std::filesystem::exists(name_or_path)) {
    throw InvalidInput("'" + name_or_path + "' is neither a built-in scenario nor a file");
  }
  return load_scenario_file(name_or_path);
}

JumpModel build_model(const ModelSpec& spec) {
  JumpModel m;
  if (spec.name == "voter") {
    m = voter_model();
  } else if (spec.name == "contact") {
    m = contact_model(spec.lambda);
  } else if (spec.name == "sir") {
    m = sir_model(spec.lambda, spec.recovery);
  } else {
    throw InvalidInput("model.name: unknown model '" + spec.name + "'");
  }
  if (spec.lag > 0.0) m = lagged_rate_wrapper(std::move(m), spec.lag);
  return m;
}

RootedGraph build_graph(const GraphSpec& spec, std::uint64_t seed) {
  Stream rng(spec.seed.value_or(seed), 0, 0, stream_tag::kGraph);
  const auto er_p = [&] {
    return spec.n > 0 ? std::min(1.0, spec.mean_degree / static_cast<double>(spec.n)) : 0.0;
  };
  if (spec.kind == "regular_tree") return gen_regular_tree(spec.kappa, spec.depth);
  if (spec.kind == "erdos_renyi") return gen_erdos_renyi(spec.n, er_p(), rng);
  if (spec.kind == "er_component") {
    const auto g = gen_erdos_renyi(spec.n, er_p(), rng);
    return connected_component_of_uniform_root(g, rng);
  }
  if (spec.kind == "ugw") {
    return sample_ugw(OffspringDistribution::poisson(spec.mean_degree),
                      UgwTruncation{spec.max_depth, spec.max_vertices}, rng);
  }
  if (spec.kind == "cycle") return gen_cycle(spec.n);
  if (spec.kind == "path") return gen_path(spec.n);
  if (spec.kind == "complete") return gen_complete(spec.n);
  if (spec.kind == "edge_list") {
    std::ifstream is(spec.file);
    if (!is) throw InvalidInput("graph.file: cannot open " + spec.file);
    return read_edge_list(is);
  }
  throw InvalidInput("graph.kind: unknown generator '" + spec.kind + "'");
}

std::string config_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << h;
  return ss.str();
}

// ---------------------------------------------------------------------------
// Runs

namespace {

std::vector<MethodCurve> agreement_curves(const ScenarioSpec& spec, std::uint64_t seed,
                                          unsigned threads) {
  const JumpModel m = with_context("model", [&] { return build_model(spec.model); });
  const RootedGraph g = with_context("graph", [&] { return build_graph(spec.graph, seed); });
  if (!g.root()) throw InvalidInput("graph: the graph has no root");
  const std::size_t kappa = g.degree(*g.root());
  if (kappa == 0) throw InvalidInput("graph: the root is isolated; agreement is undefined");
  if (spec.run.agree > kappa) throw InvalidInput("run.agree: exceeds the root degree");
  const std::vector<double> grid = uniform_grid(spec.run.horizon, spec.run.dt);
  const auto& mu0 = spec.initial.probs;
  const std::size_t k = spec.run.agree;
  SimulationOptions sim;
  sim.seed = seed;
  sim.threads = threads;

  std::vector<MethodCurve> out;
  for (const auto& method : spec.run.methods) {
    MethodCurve c{method, {}};
    if (method == "direct") {
      c.series = with_context("direct", [&] {
        const auto xi = InitialCondition::iid(mu0);
        const std::size_t G = grid.size();
        std::vector<std::uint8_t> hit(spec.run.replicas * G, 0);
        simulate_jump_observed(g, m, xi, spec.run.horizon, grid, spec.run.replicas, sim,
                               [&](std::size_t r, std::size_t i, std::span<const State> config) {
                                 hit[r * G + i] = root_agreement_count(g, config) == k;
                               });
        std::vector<std::size_t> counts(G, 0);
        for (std::size_t r = 0; r < spec.run.replicas; ++r) {
          for (std::size_t i = 0; i < G; ++i) counts[i] += hit[r * G + i];
        }
        return proportion_series(grid, counts, spec.run.replicas);
      });
    } else if (method == "meanfield") {
      c.series = with_context("meanfield", [&] {
        const auto flow = solve_mf_master(m, mu0, spec.run.horizon, spec.localeq.ode_dt);
        TimeSeriesWithCI s;
        s.grid = grid;
        for (double t : grid) {
          s.mean.push_back(independent_agreement_probability(flow.at(t), kappa, k));
          s.halfwidth.push_back(0.0);
        }
        return s;
      });
    } else if (method == "localeq-ode") {
      c.series = with_context("localeq-ode", [&] {
        const auto sol = solve_local_eq_ode(m, kappa, mu0, spec.run.horizon, spec.localeq.ode_dt);
        TimeSeriesWithCI s;
        s.grid = grid;
        SimplexFlow index{sol.law.grid, {}};
        for (double t : grid) {
          s.mean.push_back(sol.law.agreement_probability(index.index_of(t), k));
          s.halfwidth.push_back(0.0);
        }
        return s;
      });
    } else if (method == "localeq-mc") {
      c.series = with_context("localeq-mc", [&] {
        LocalEqMcOptions o;
        o.replicas = spec.localeq.mc_replicas;
        o.max_iters = spec.localeq.max_iters;
        o.tol = spec.localeq.tol;
        o.sim = sim;
        const auto res = simulate_local_eq_fixed_point(m, kappa, mu0, spec.run.horizon,
                                                       spec.run.dt, o);
        TimeSeriesWithCI s;
        s.grid = grid;
        s.replicas = o.replicas;
        for (std::size_t i = 0; i < grid.size(); ++i) {
          const double p = res.law.agreement_probability(i, k);
          const auto hits = static_cast<std::size_t>(std::llround(p * static_cast<double>(o.replicas)));
          const auto e = proportion_ci(hits, o.replicas);
          s.mean.push_back(p);
          s.halfwidth.push_back(e.halfwidth);
        }
        return s;
      });
    }
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace

HydroReport run_hydro(const ScenarioSpec& spec, const RunOptions& options) {
  const auto& h = spec.hydro;
  const std::uint64_t seed = options.seed.value_or(spec.run.seed);
  const JumpModel m = build_model(spec.model);
  const auto xi = InitialCondition::iid(spec.initial.probs);
  const std::size_t S = m.num_states();
  const std::vector<double> at{h.t};

  HydroReport rep;
  // Root law on truncated UGW(Poisson(c)) trees, one dynamics draw per tree.
  {
    const auto rho = OffspringDistribution::poisson(h.c);
    std::vector<State> root_state(h.tree_samples);
    parallel_for(h.tree_samples, options.threads, [&](std::size_t s) {
      Stream rng(seed, s, 0, stream_tag::kGraph);
      const auto tree = sample_ugw(rho, UgwTruncation{h.tree_depth, 1'000'000}, rng);
      SimulationOptions sim;
      sim.seed = derived_seed(seed, s, 0);
      sim.threads = 1;
      simulate_jump_observed(tree, m, xi, h.t, at, 1, sim,
                             [&](std::size_t, std::size_t, std::span<const State> config) {
                               root_state[s] = config[*tree.root()];
                             });
    });
    rep.tree_law.assign(S, 0.0);
    for (State x : root_state) rep.tree_law[static_cast<std::size_t>(x)] += 1.0;
    for (double& p : rep.tree_law) p /= static_cast<double>(h.tree_samples);
  }

  for (std::size_t n : h.n) {
    std::vector<double> dist(h.seeds);
    for (std::size_t s = 0; s < h.seeds; ++s) {
      Stream rng(seed, s, n, stream_tag::kGraph);
      const auto g = gen_erdos_renyi(n, std::min(1.0, h.c / static_cast<double>(n)), rng);
      SimulationOptions sim;
      sim.seed = derived_seed(seed, s, n + 1);
      sim.threads = options.threads;
      std::vector<std::vector<double>> per(h.replicas, std::vector<double>(S, 0.0));
      simulate_jump_observed(g, m, xi, h.t, at, h.replicas, sim,
                             [&](std::size_t r, std::size_t, std::span<const State> config) {
                               per[r] = empirical_measure(config, S);
                             });
      std::vector<double> mu(S, 0.0);
      for (const auto& p : per) {
        for (std::size_t x = 0; x < S; ++x) mu[x] += p[x] / static_cast<double>(h.replicas);
      }
      dist[s] = wasserstein(DiscreteLaw{mu}, DiscreteLaw{rep.tree_law});
    }
    double mean = 0.0;
    for (double d : dist) mean += d;
    mean /= static_cast<double>(h.seeds);
    double var = 0.0;
    for (double d : dist) var += (d - mean) * (d - mean);
    const double se = h.seeds > 1 ? std::sqrt(var / static_cast<double>(h.seeds - 1) /
                                              static_cast<double>(h.seeds))
                                  : 0.0;
    rep.n.push_back(n);
    rep.mean_distance.push_back(mean);
    rep.std_error.push_back(se);
    rep.per_seed.push_back(std::move(dist));
  }
  for (std::size_t i = 1; i < rep.mean_distance.size(); ++i) {
    rep.inversions += rep.mean_distance[i] > rep.mean_distance[i - 1];
  }
  rep.trend_ok = rep.inversions <= 1;
  return rep;
}

RandomLimitReport run_random_limit(const ScenarioSpec& spec, const RunOptions& options) {
  const auto& rl = spec.randomlimit;
  const std::uint64_t seed = options.seed.value_or(spec.run.seed);
  const JumpModel m = build_model(spec.model);
  const auto xi = InitialCondition::iid(spec.initial.probs);
  const std::size_t S = m.num_states();
  const std::vector<double> at{rl.t};

  RandomLimitReport rep;
  rep.floor = rl.floor;
  rep.above_floor = true;
  for (std::size_t n : rl.n) {
    std::vector<double> mass(rl.replicas), frac(rl.replicas);
    parallel_for(rl.replicas, options.threads, [&](std::size_t r) {
      Stream rng(seed, r, n, stream_tag::kGraph);
      const auto g = gen_erdos_renyi(n, std::min(1.0, rl.c / static_cast<double>(n)), rng);
      const auto comp = connected_component_of_uniform_root(g, rng);
      SimulationOptions sim;
      sim.seed = derived_seed(seed, r, n);
      sim.threads = 1;
      simulate_jump_observed(comp, m, xi, rl.t, at, 1, sim,
                             [&](std::size_t, std::size_t, std::span<const State> config) {
                               mass[r] = empirical_measure(config, S)[1];
                             });
      frac[r] = static_cast<double>(comp.num_vertices()) / static_cast<double>(n);
    });
    double mean = 0.0, fmean = 0.0;
    for (std::size_t r = 0; r < rl.replicas; ++r) {
      mean += mass[r];
      fmean += frac[r];
    }
    mean /= static_cast<double>(rl.replicas);
    fmean /= static_cast<double>(rl.replicas);
    double var = 0.0;
    for (double x : mass) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / static_cast<double>(rl.replicas - 1));
    rep.n.push_back(n);
    rep.mean_mass.push_back(mean);
    rep.sd_mass.push_back(sd);
    rep.mean_component_fraction.push_back(fmean);
    if (!(sd >= rl.floor)) rep.above_floor = false;
  }
  return rep;
}

ScenarioResult run_scenario(const ScenarioSpec& spec, const RunOptions& options) {
  const std::uint64_t seed = options.seed.value_or(spec.run.seed);
  const std::filesystem::path dir =
      options.out_dir.empty() ? std::filesystem::path(spec.output_dir) : options.out_dir;
  ScenarioResult res;
  std::vector<std::pair<std::string, std::string>> outputs;  // file name, content

  if (spec.kind == "agreement") {
    res.curves = agreement_curves(spec, seed, options.threads);
    for (const auto& c : res.curves) {
      std::ostringstream ss;
      write_series_csv(ss, c.series);
      outputs.emplace_back(c.method + ".csv", ss.str());
    }
    outputs.emplace_back("overlay.svg", render_svg(spec.name, res.curves));
  } else if (spec.kind == "hydro") {
    res.hydro = run_hydro(spec, options);
    std::ostringstream ss;
    ss << "n,w1_mean,w1_stderr\n";
    for (std::size_t i = 0; i < res.hydro->n.size(); ++i) {
      ss << res.hydro->n[i] << ',' << format_double(res.hydro->mean_distance[i]) << ','
         << format_double(res.hydro->std_error[i]) << '\n';
    }
    outputs.emplace_back("hydro.csv", ss.str());
    std::ostringstream law;
    law << "state,probability\n";
    for (std::size_t x = 0; x < res.hydro->tree_law.size(); ++x) {
      law << x << ',' << format_double(res.hydro->tree_law[x]) << '\n';
    }
    outputs.emplace_back("tree_root_law.csv", law.str());
  } else {
    res.randomlimit = run_random_limit(spec, options);
    std::ostringstream ss;
    ss << "n,mean_mass,sd_mass,mean_component_fraction\n";
    const auto& r = *res.randomlimit;
    for (std::size_t i = 0; i < r.n.size(); ++i) {
      ss << r.n[i] << ',' << format_double(r.mean_mass[i]) << ',' << format_double(r.sd_mass[i])
         << ',' << format_double(r.mean_component_fraction[i]) << '\n';
    }
    outputs.emplace_back("randomlimit.csv", ss.str());
  }

  if (options.write_files) {
    std::filesystem::create_directories(dir);
    for (const auto& [name, text] : outputs) {
      write_text(dir / name, text);
      res.files.push_back(dir / name);
    }
    finalize_run_dir(dir, spec, seed, res.files);
  }
  return res;
}

void finalize_run_dir(const std::filesystem::path& dir, const ScenarioSpec& spec, std::uint64_t seed,
                      std::vector<std::filesystem::path>& files) {
  std::filesystem::create_directories(dir);
  write_text(dir / "config.toml", spec.source);
  files.push_back(dir / "config.toml");
  nlohmann::json j;
  j["name"] = spec.name;
  j["kind"] = spec.kind;
  j["seed"] = seed;
  j["config_hash"] = config_hash(spec.source);
  j["version"] = kVersion;
  std::vector<std::string> names;
  for (const auto& f : files) names.push_back(f.filename().string());
  j["files"] = names;
  write_text(dir / "manifest.json", j.dump(2) + "\n");
  files.push_back(dir / "manifest.json");
}

Manifest load_manifest(const std::filesystem::path& dir) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_text(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("manifest.json: ") + e.what());
  }
  Manifest m;
  try {
    m.name = j.at("name").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.version = j.at("version").get<std::string>();
    m.files = j.at("files").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("manifest.json: ") + e.what());
  }
  const auto text = read_text(dir / "config.toml");
  if (config_hash(text) != m.config_hash) {
    throw InvalidInput("manifest.json: config.toml does not match the recorded hash");
  }
  return m;
}

std::string render_svg(const std::string& title, const std::vector<MethodCurve>& curves) {
  constexpr double W = 720, H = 440, L = 70, R = 170, T = 40, B = 50;
  static const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};
  double x0 = 0, x1 = 1, y0 = 1e300, y1 = -1e300;
  bool any = false;
  for (const auto& c : curves) {
    for (std::size_t i = 0; i < c.series.grid.size(); ++i) {
      if (!any) {
        x0 = x1 = c.series.grid[i];
        any = true;
      }
      x0 = std::min(x0, c.series.grid[i]);
      x1 = std::max(x1, c.series.grid[i]);
      y0 = std::min(y0, c.series.mean[i] - c.series.halfwidth[i]);
      y1 = std::max(y1, c.series.mean[i] + c.series.halfwidth[i]);
    }
  }
  if (!any) {
    y0 = 0;
    y1 = 1;
  }
  if (x1 <= x0) x1 = x0 + 1;
  const double pad = std::max(1e-3, 0.08 * (y1 - y0));
  y0 -= pad;
  y1 += pad;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
    << xml_escape(title) << "</text>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double xv = x0 + (x1 - x0) * i / 5.0, yv = y0 + (y1 - y0) * i / 5.0;
    s << "<line x1=\"" << fixed(px(xv), 1) << "\" y1=\"" << H - B << "\" x2=\"" << fixed(px(xv), 1)
      << "\" y2=\"" << H - B + 5 << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << fixed(px(xv), 1) << "\" y=\"" << H - B + 18
      << "\" text-anchor=\"middle\">" << fixed(xv, 2) << "</text>\n";
    s << "<line x1=\"" << L - 5 << "\" y1=\"" << fixed(py(yv), 1) << "\" x2=\"" << L << "\" y2=\""
      << fixed(py(yv), 1) << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << L - 8 << "\" y=\"" << fixed(py(yv) + 4, 1) << "\" text-anchor=\"end\">"
      << fixed(yv, 3) << "</text>\n";
  }
  s << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\">t</text>\n";
  for (std::size_t ci = 0; ci < curves.size(); ++ci) {
    const auto& c = curves[ci];
    const char* colour = colours[ci % 5];
    s << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < c.series.grid.size(); ++i) {
      s << (i ? " " : "") << fixed(px(c.series.grid[i]), 2) << ',' << fixed(py(c.series.mean[i]), 2);
    }
    s << "\"/>\n";
    const std::size_t every = std::max<std::size_t>(1, c.series.grid.size() / 25);
    for (std::size_t i = 0; i < c.series.grid.size(); i += every) {
      if (c.series.halfwidth[i] <= 0.0) continue;
      const double x = px(c.series.grid[i]);
      s << "<line x1=\"" << fixed(x, 2) << "\" y1=\""
        << fixed(py(c.series.mean[i] - c.series.halfwidth[i]), 2) << "\" x2=\"" << fixed(x, 2)
        << "\" y2=\"" << fixed(py(c.series.mean[i] + c.series.halfwidth[i]), 2) << "\" stroke=\""
        << colour << "\"/>\n";
    }
    const double ly = T + 20.0 * static_cast<double>(ci);
    s << "<line x1=\"" << W - R + 15 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 40 << "\" y2=\""
      << ly << "\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << W - R + 46 << "\" y=\"" << ly + 4 << "\">" << xml_escape(c.method)
      << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

}  // namespace sparse_ips
