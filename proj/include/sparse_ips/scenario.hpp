#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sparse_ips/graphs.hpp"
#include "sparse_ips/jump_dynamics.hpp"
#include "sparse_ips/jump_model.hpp"
#include "sparse_ips/observables.hpp"

namespace sparse_ips {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr std::int64_t kSchemaVersion = 1;

struct GraphSpec {
  std::string kind = "regular_tree";  // regular_tree | erdos_renyi | er_component | ugw |
                                      // cycle | path | complete | edge_list
  std::size_t n = 0;
  std::size_t kappa = 3;
  std::size_t depth = 9;
  double mean_degree = 2.0;  // c in G(n, c/n) and Poisson(c)
  std::size_t max_depth = 12;
  std::size_t max_vertices = 1'000'000;
  std::string file;
  std::optional<std::uint64_t> seed;  // defaults to the run seed
};

struct ModelSpec {
  std::string name = "voter";  // voter | contact | sir
  double lambda = 1.0;
  double recovery = 1.0;
  double lag = 0.0;
};

struct InitialSpec {
  std::vector<double> probs{0.7, 0.3};  // i.i.d. law over X
};

struct RunSpec {
  double horizon = 5.0;
  double dt = 0.05;
  std::size_t replicas = 10'000;
  std::vector<std::string> methods{"direct", "meanfield"};
  std::size_t agree = 2;
  std::uint64_t seed = 1;
};

struct LocalEqSpec {
  double ode_dt = 0.01;
  std::size_t mc_replicas = 100'000;
  std::size_t max_iters = 50;
  double tol = 0.005;
};

struct HydroSpec {
  double c = 2.0;
  std::vector<std::size_t> n{100, 300, 1000};
  double t = 1.0;
  std::size_t seeds = 10;
  std::size_t replicas = 1;
  std::size_t tree_samples = 100'000;
  std::size_t tree_depth = 6;
};

struct RandomLimitSpec {
  double c = 3.0;
  std::vector<std::size_t> n{300, 1000, 3000};
  double t = 1.0;
  std::size_t replicas = 1000;
  double floor = 0.05;
};

/// A validated scenario. `kind` selects what run_scenario does:
/// "agreement" (root agreement curves per method), "hydro" or "randomlimit".
struct ScenarioSpec {
  std::string name;
  std::string kind = "agreement";
  GraphSpec graph;
  ModelSpec model;
  InitialSpec initial;
  RunSpec run;
  LocalEqSpec localeq;
  HydroSpec hydro;
  RandomLimitSpec randomlimit;
  std::string output_dir;
  /// Exact text the spec was parsed from; hashed into the manifest.
  std::string source;
};

/// Parses and validates TOML text. Unknown keys, wrong types and values out
/// of range raise InvalidInput naming the field path (e.g. "run.dt").
ScenarioSpec parse_scenario(const std::string& toml_text);
ScenarioSpec load_scenario_file(const std::filesystem::path& path);

/// Names accepted by builtin_scenario_text: fig2, fig4, randomlimit, hydro.
std::vector<std::string> builtin_scenario_names();
std::string builtin_scenario_text(const std::string& name);

/// Resolves a built-in name or a file path.
ScenarioSpec resolve_scenario(const std::string& name_or_path);

JumpModel build_model(const ModelSpec& spec);
RootedGraph build_graph(const GraphSpec& spec, std::uint64_t seed);

/// FNV-1a 64-bit hash, printed as 16 hex digits.
std::string config_hash(const std::string& text);

struct MethodCurve {
  std::string method;
  TimeSeriesWithCI series;
};

struct HydroReport {
  std::vector<std::size_t> n;
  std::vector<double> mean_distance;
  std::vector<double> std_error;
  std::vector<std::vector<double>> per_seed;
  std::vector<double> tree_law;
  std::size_t inversions = 0;
  bool trend_ok = false;
};

struct RandomLimitReport {
  std::vector<std::size_t> n;
  std::vector<double> mean_mass;
  std::vector<double> sd_mass;
  std::vector<double> mean_component_fraction;
  double floor = 0.0;
  bool above_floor = false;
};

struct ScenarioResult {
  std::vector<MethodCurve> curves;
  std::optional<HydroReport> hydro;
  std::optional<RandomLimitReport> randomlimit;
  std::vector<std::filesystem::path> files;
};

struct RunOptions {
  unsigned threads = 0;
  std::optional<std::uint64_t> seed;  // overrides run.seed
  std::filesystem::path out_dir;      // overrides output.dir when non-empty
  bool write_files = true;
};

/// Runs every method of the scenario and, when requested, writes one CSV per
/// method ("t,mean,halfwidth"), an overlay SVG, the config text and a
/// manifest.json with seed, config hash and version.
ScenarioResult run_scenario(const ScenarioSpec& spec, const RunOptions& options);

/// Global empirical measure at time t on G(n, c/n) against the root law on
/// truncated UGW(Poisson(c)) trees: W_1 (total variation) per seed, averaged
/// over seeds, for each n. The trend passes with at most one inversion.
HydroReport run_hydro(const ScenarioSpec& spec, const RunOptions& options);

/// Across-replica spread of the time-t mass at state 1 on the component of a
/// uniform root of G(n, c/n), each replica on a fresh graph.
RandomLimitReport run_random_limit(const ScenarioSpec& spec, const RunOptions& options);

struct Manifest {
  std::string name;
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string version;
  std::vector<std::string> files;
};

/// Writes config.toml (the spec's source text) and manifest.json into dir and
/// appends both to `files`.
void finalize_run_dir(const std::filesystem::path& dir, const ScenarioSpec& spec, std::uint64_t seed,
                      std::vector<std::filesystem::path>& files);

/// Reads manifest.json from a run directory and checks the stored config
/// against its hash; throws InvalidInput on mismatch.
Manifest load_manifest(const std::filesystem::path& dir);

/// Minimal overlay plot: one polyline per curve with CI bars.
std::string render_svg(const std::string& title, const std::vector<MethodCurve>& curves);

}  // namespace sparse_ips
