#include "cli.hpp"

#include <Eigen/Core>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "json.hpp"
#include "kcal/calibration.hpp"
#include "kcal/diagnostics.hpp"
#include "kcal/kinetics.hpp"
#include "kcal/mechanism.hpp"
#include "kcal/propagation.hpp"
#include "kcal/reactor.hpp"
#include "kcal/sampler.hpp"

#ifndef KCAL_VERSION
#define KCAL_VERSION "unknown"
#endif

namespace kcal::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr double kAtm = 1.01325e6;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint64_t hash_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UsageError("cannot read " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return Fnv1a{}.str(ss.str()).digest();
}

void require_file(const std::string& path) {
  if (!fs::is_regular_file(path)) throw UsageError("no such file: " + path);
}

/// Output files are written as `<name>.partial` and renamed on commit.
class Outputs {
 public:
  std::ostream& open(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    auto partial = path;
    partial += ".partial";
    auto os = std::make_unique<std::ofstream>(partial);
    if (!*os) throw UsageError("cannot write " + partial.string());
    files_.push_back({path, std::move(os)});
    return *files_.back().second;
  }

  void commit() {
    for (auto& [path, os] : files_) {
      os->close();
      if (!*os) throw std::runtime_error("write failed: " + path.string());
      auto partial = path;
      partial += ".partial";
      fs::rename(partial, path);
    }
    files_.clear();
  }

 private:
  std::vector<std::pair<fs::path, std::unique_ptr<std::ofstream>>> files_;
};

/// Everything needed to rerun a command: its arguments, the hashes of its
/// input files and the software versions.
class Manifest {
 public:
  Manifest(std::string command, const std::vector<std::string>& args) : command_(std::move(command)), args_(args) {}

  void input(const std::string& path) { inputs_.emplace_back(path, hash_file(path)); }
  json& results() { return results_; }

  std::uint64_t hash() const {
    Fnv1a h;
    for (const auto& a : args_) h.str(a).value('\0');
    for (const auto& [p, v] : inputs_) h.str(p).value('\0').value(v);
    return h.digest();
  }

  std::string dump() const {
    json j;
    j["command"] = command_;
    j["args"] = args_;
    json in = json::array();
    for (const auto& [p, v] : inputs_) in.push_back({{"path", p}, {"fnv1a", hex64(v)}});
    j["inputs"] = in;
    j["manifest_hash"] = hex64(hash());
    j["versions"] = {{"kcal", KCAL_VERSION},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)},
                     {"spdlog", std::to_string(SPDLOG_VER_MAJOR) + "." + std::to_string(SPDLOG_VER_MINOR) + "." +
                                    std::to_string(SPDLOG_VER_PATCH)},
                     {"compiler", __VERSION__}};
    j["results"] = results_;
    return j.dump(2) + "\n";
  }

 private:
  std::string command_;
  std::vector<std::string> args_;
  std::vector<std::pair<std::string, std::uint64_t>> inputs_;
  json results_ = json::object();
};

std::map<std::string, double> parse_composition(const std::string& text) {
  std::map<std::string, double> out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto colon = part.find(':');
    if (colon == std::string::npos) throw UsageError("bad composition entry '" + part + "'");
    const auto name = part.substr(0, colon);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(part.substr(colon + 1), &used);
    } catch (const std::exception&) {
      throw UsageError("bad number in composition entry '" + part + "'");
    }
    if (used != part.size() - colon - 1) throw UsageError("bad number in composition entry '" + part + "'");
    if (!out.emplace(name, v).second) throw UsageError("species " + name + " listed twice");
  }
  return out;
}

struct IntegratorOverrides {
  std::optional<double> rtol, atol, atol_T_rel, event_rtol;
  std::optional<std::size_t> max_steps;

  void add_to(CLI::App* app) {
    app->add_option("--rtol", rtol, "Relative tolerance");
    app->add_option("--atol", atol, "Absolute tolerance on mass fractions");
    app->add_option("--atol-T-rel", atol_T_rel, "Temperature tolerance as a fraction of T0");
    app->add_option("--event-rtol", event_rtol, "Relative bracket width for event bisection");
    app->add_option("--max-steps", max_steps, "Step limit per integration");
  }

  IntegratorConfig apply(IntegratorConfig c) const {
    if (rtol) c.rtol = *rtol;
    if (atol) c.atol = *atol;
    if (atol_T_rel) c.atol_T_rel = *atol_T_rel;
    if (event_rtol) c.event_rtol = *event_rtol;
    if (max_steps) c.max_steps = *max_steps;
    validate_config(c);
    return c;
  }
};

const CaseLine& pick_case(const ProblemConfig& pc, const std::string& label, const std::string& path) {
  if (pc.cases.empty()) throw UsageError(path + " has no cases");
  if (label.empty()) {
    if (pc.cases.size() > 1) throw UsageError(path + " has several cases; choose one with --label");
    return pc.cases.front();
  }
  for (const auto& c : pc.cases) {
    if (c.label == label) return c;
  }
  throw UsageError("no case labelled '" + label + "' in " + path);
}

void setup_logging(const std::string& level) {
  auto logger = spdlog::get("kcal");
  if (!logger) logger = spdlog::stderr_color_mt("kcal");
  spdlog::set_default_logger(logger);
  const auto lvl = spdlog::level::from_str(level);
  if (lvl == spdlog::level::off && level != "off") throw UsageError("unknown log level '" + level + "'");
  spdlog::set_level(lvl);
}

ThinningSpec thinning(std::size_t picks, const std::optional<std::uint64_t>& start,
                      const std::optional<std::uint64_t>& stride) {
  ThinningSpec s;
  s.n_picks = picks;
  s.start = start;
  s.stride = stride;
  return s;
}

/// Active map from a problem file; its names must match the chain.
ActiveParameterMap chain_map(const Chain& chain, const ProblemConfig& pc, const std::string& path) {
  if (pc.map.names() != chain.names) throw UsageError("active parameters in " + path + " do not match the chain");
  return pc.map;
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out) {
  CLI::App app{"Bayesian calibration of H2/O2 kinetics parameters", "kcal"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", KCAL_VERSION);

  std::size_t jobs = 1;
  std::string log_level = "info";
  app.add_option("-j,--jobs", jobs, "Concurrent simulations")->check(CLI::PositiveNumber);
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  std::string mech_path, out_path, manifest_path, label;
  IntegratorOverrides ovr;

  // rates
  auto* rates = app.add_subcommand("rates", "Per-reaction kf, kr and q at a state (CSV)");
  double T = 0.0, p_atm = 1.0;
  std::string X, conc;
  rates->add_option("-m,--mech", mech_path, "Mechanism file")->required();
  rates->add_option("-T,--temperature", T, "Temperature, K")->required();
  rates->add_option("-p,--pressure", p_atm, "Pressure, atm");
  rates->add_option("-X,--mole-fractions", X, "Mole fractions, e.g. H2:0.3,O2:0.15,N2:0.55");
  rates->add_option("--conc", conc, "Concentrations in mol/cm^3, e.g. H2:1e-6 (overrides -X and -p)");
  rates->add_option("-o,--out", out_path, "CSV file (default: stdout)");
  rates->add_option("--manifest", manifest_path, "Manifest file");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Integrate one case and print its observable");
  std::string case_path;
  simulate->add_option("-m,--mech", mech_path, "Mechanism file")->required();
  simulate->add_option("-c,--case", case_path, "Case file")->required();
  simulate->add_option("-l,--label", label, "Case label when the file has several");
  simulate->add_option("-o,--out", out_path, "Trajectory CSV (t,T,p,Y_*)");
  simulate->add_option("--manifest", manifest_path, "Manifest file (default: <out>.manifest.json)");
  ovr.add_to(simulate);

  // gen-targets
  auto* gen = app.add_subcommand("gen-targets", "Synthetic targets from baseline simulations");
  std::uint64_t seed = 0;
  std::optional<double> sigma_rel;
  bool noiseless = false;
  gen->add_option("-m,--mech", mech_path, "Mechanism file")->required();
  gen->add_option("-c,--cases", case_path, "Case file with [active] and [cases]")->required();
  gen->add_option("-o,--out", out_path, "Problem file to write")->required();
  gen->add_option("-s,--seed", seed, "Noise seed");
  gen->add_option("--sigma-rel", sigma_rel, "Relative sigma for cases without one");
  gen->add_flag("--noiseless", noiseless, "d equals the simulated value; sigma is kept");
  ovr.add_to(gen);

  // sample
  auto* sample = app.add_subcommand("sample", "Run the ensemble sampler");
  std::string problem_path;
  SamplerConfig sc;
  std::size_t checkpoint_every = 0, progress_every = 100;
  bool resume_run = false;
  sample->add_option("-m,--mech", mech_path, "Mechanism file")->required();
  sample->add_option("-P,--problem", problem_path, "Problem file with [active] and [targets]")->required();
  sample->add_option("-o,--out", out_path, "Chain file")->required();
  sample->add_option("-L,--walkers", sc.walkers, "Number of walkers");
  sample->add_option("-T,--sweeps", sc.sweeps, "Total sweeps")->required();
  sample->add_option("-s,--seed", sc.seed, "Seed");
  sample->add_option("-a,--stretch", sc.a, "Stretch scale a");
  sample->add_option("--thin", sc.thin, "Store every n-th sweep");
  sample->add_option("--checkpoint-every", checkpoint_every, "Checkpoint interval in sweeps (0: none)");
  sample->add_option("--progress-every", progress_every, "Progress log interval in sweeps");
  sample->add_flag("--resume", resume_run, "Continue <out>.partial (or <out>) up to --sweeps");
  ovr.add_to(sample);

  // diagnose
  auto* diagnose = app.add_subcommand("diagnose", "Autocorrelation, summary and triangle histograms");
  std::string chain_path;
  std::optional<std::size_t> burn_in, s_max;
  std::vector<std::size_t> triangle;
  std::size_t bins = 30;
  bool want_tau = false;
  double tau_c = 5.0;
  diagnose->add_option("--chain", chain_path, "Chain file")->required();
  diagnose->add_option("--burn-in", burn_in, "Burn-in sweeps (default: half the chain)");
  diagnose->add_option("--smax", s_max, "Largest lag, in stored rows");
  diagnose->add_option("--triangle", triangle, "1-based parameter ids for histograms")->delimiter(',');
  diagnose->add_option("--bins", bins, "Histogram bins");
  diagnose->add_flag("--tau", want_tau, "Also estimate integrated autocorrelation times");
  diagnose->add_option("--tau-window", tau_c, "Window constant c of the tau estimate");
  diagnose->add_option("-o,--out", out_path, "Output directory")->required();

  // propagate
  auto* propagate_cmd = app.add_subcommand("propagate", "Push thinned posterior samples through a case");
  std::size_t picks = 9;
  std::optional<std::uint64_t> start, stride;
  std::size_t hist_bins = 20;
  propagate_cmd->add_option("--chain", chain_path, "Chain file")->required();
  propagate_cmd->add_option("-m,--mech", mech_path, "Mechanism file")->required();
  propagate_cmd->add_option("-P,--problem", problem_path, "Problem file defining the active parameters")->required();
  propagate_cmd->add_option("-c,--case", case_path, "Prediction case file")->required();
  propagate_cmd->add_option("-l,--label", label, "Case label when the file has several");
  propagate_cmd->add_option("--picks", picks, "Sweeps picked");
  propagate_cmd->add_option("--start", start, "First picked sweep (default: half the chain)");
  propagate_cmd->add_option("--stride", stride, "Sweeps between picks");
  propagate_cmd->add_option("--bins", hist_bins, "Histogram bins");
  propagate_cmd->add_option("-o,--out", out_path, "Output directory")->required();
  ovr.add_to(propagate_cmd);

  // export-calibrations
  auto* exportc = app.add_subcommand("export-calibrations", "One mechanism file per thinned sample");
  bool force = false;
  exportc->add_option("--chain", chain_path, "Chain file")->required();
  exportc->add_option("-m,--mech", mech_path, "Mechanism file")->required();
  exportc->add_option("-P,--problem", problem_path, "Problem file defining the active parameters")->required();
  exportc->add_option("--picks", picks, "Sweeps picked");
  exportc->add_option("--start", start, "First picked sweep (default: half the chain)");
  exportc->add_option("--stride", stride, "Sweeps between picks");
  exportc->add_option("-o,--out", out_path, "Output directory")->required();
  exportc->add_flag("--force", force, "Replace an existing output directory");

  // chain export
  auto* chain_cmd = app.add_subcommand("chain", "Chain file utilities");
  chain_cmd->require_subcommand(1);
  auto* chain_export = chain_cmd->add_subcommand("export", "Chain to CSV (sweep,walker,logp,params)");
  chain_export->add_option("--chain", chain_path, "Chain file")->required();
  chain_export->add_option("-o,--out", out_path, "CSV file (default: stdout)");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::vector<std::string> cmd_args(args.begin() + 1, args.end());
  try {
    setup_logging(log_level);
    Outputs outputs;

    if (rates->parsed()) {
      Manifest man("rates", cmd_args);
      require_file(mech_path);
      man.input(mech_path);
      const auto mech = load_mechanism(mech_path);
      if (!(T > 0.0)) throw UsageError("temperature must be positive");
      GasState st;
      if (!conc.empty()) {
        st.T = T;
        st.conc.assign(mech.species.size(), 0.0);
        for (const auto& [sp, c] : parse_composition(conc)) {
          auto idx = mech.species_index(sp);
          if (!idx) throw UsageError("unknown species '" + sp + "'");
          if (c < 0.0) throw UsageError("negative concentration for " + sp);
          st.conc[*idx] = c;
        }
      } else {
        if (X.empty()) throw UsageError("give -X or --conc");
        if (!(p_atm > 0.0)) throw UsageError("pressure must be positive");
        st = GasState::from_mole_fractions(mech, T, p_atm * kAtm, parse_composition(X));
      }
      const auto r = production_rates(mech, st);
      std::ostream& os = out_path.empty() ? out : outputs.open(out_path);
      os << "id,kf,kr,q\n";
      for (std::size_t i = 0; i < mech.reactions.size(); ++i) {
        os << mech.reactions[i].id << ',' << fmt17(r.kf[i]) << ',' << fmt17(r.kr[i]) << ',' << fmt17(r.q[i]) << '\n';
      }
      if (manifest_path.empty() && !out_path.empty()) manifest_path = out_path + ".manifest.json";
      if (!manifest_path.empty()) outputs.open(manifest_path) << man.dump();
      outputs.commit();
      return 0;
    }

    if (simulate->parsed()) {
      Manifest man("simulate", cmd_args);
      require_file(mech_path);
      require_file(case_path);
      man.input(mech_path);
      man.input(case_path);
      const auto mech = load_mechanism(mech_path);
      const auto pc = load_problem_config(case_path);
      const auto& c = pick_case(pc, label, case_path);
      const auto cfg = ovr.apply(pc.integrator);
      validate_case(mech, c.rc);
      if (!out_path.empty()) {
        const auto traj = integrate(mech, c.rc, cfg);
        if (!traj.ok()) spdlog::warn("integration stopped early: {} {}", to_string(traj.status), traj.message);
        auto& os = outputs.open(out_path);
        os << "t,T,p";
        for (const auto& sp : traj.species) os << ",Y_" << sp;
        os << '\n';
        for (std::size_t i = 0; i < traj.size(); ++i) {
          os << fmt17(traj.times[i]) << ',' << fmt17(traj.temperature[i]) << ',' << fmt17(traj.pressure[i] / kAtm);
          for (double y : traj.mass_fractions[i]) os << ',' << fmt17(y);
          os << '\n';
        }
        man.results()["steps"] = traj.stats.steps;
        man.results()["integration_status"] = to_string(traj.status);
      }
      const auto res = measure(mech, c.rc, cfg);
      out << "label,observable,status,value\n"
          << c.label << ',' << describe(c.rc.observable) << ',' << to_string(res.status) << ','
          << (res.ok() ? fmt17(res.value) : std::string("nan")) << '\n';
      if (!res.message.empty()) spdlog::info("{}", res.message);
      man.results()["status"] = to_string(res.status);
      if (res.ok()) man.results()["value"] = res.value;
      if (manifest_path.empty() && !out_path.empty()) manifest_path = out_path + ".manifest.json";
      if (!manifest_path.empty()) outputs.open(manifest_path) << man.dump();
      outputs.commit();
      return res.status == ObservableStatus::failure ? 1 : 0;
    }

    if (gen->parsed()) {
      Manifest man("gen-targets", cmd_args);
      require_file(mech_path);
      require_file(case_path);
      man.input(mech_path);
      man.input(case_path);
      const auto mech = load_mechanism(mech_path);
      const auto pc = load_problem_config(case_path);
      if (pc.cases.empty()) throw UsageError(case_path + " has no cases");
      pc.map.check(mech);
      const auto cfg = ovr.apply(pc.integrator);
      for (const auto& c : pc.cases) validate_case(mech, c.rc);
      if (sigma_rel && *sigma_rel < 0.0) throw UsageError("--sigma-rel must be non-negative");
      const auto gen_targets = generate_targets(mech, pc.cases, cfg, seed, sigma_rel, !noiseless, jobs);

      auto& os = outputs.open(out_path);
      os << "# Synthetic targets: seed=" << seed << (noiseless ? " noiseless" : "") << "\n\n";
      if (pc.map.dimension() > 0) os << serialize_active(pc.map, pc.prior) << '\n';
      os << "[targets]\n";
      for (const auto& g : gen_targets) os << format_target(g.target) << '\n';
      os << '\n' << serialize_integrator(cfg);

      auto& truth = outputs.open(out_path + ".truth.csv");
      truth << "label,truth,d,sigma\n";
      for (const auto& g : gen_targets) {
        truth << g.target.label << ',' << fmt17(g.truth) << ',' << fmt17(g.target.d) << ',' << fmt17(g.target.sigma)
              << '\n';
      }
      man.results()["seed"] = seed;
      man.results()["targets"] = gen_targets.size();
      outputs.open(out_path + ".manifest.json") << man.dump();
      outputs.commit();
      spdlog::info("wrote {} targets to {}", gen_targets.size(), out_path);
      return 0;
    }

    if (sample->parsed()) {
      Manifest man("sample", cmd_args);
      require_file(mech_path);
      require_file(problem_path);
      man.input(mech_path);
      man.input(problem_path);
      const auto mech = load_mechanism(mech_path);
      auto pc = load_problem_config(problem_path);
      if (!pc.has_targets) throw UsageError(problem_path + " has no [targets] section");
      pc.integrator = ovr.apply(pc.integrator);
      const auto problem = make_problem(mech, pc);
      const auto names = problem.map.names();
      for (const auto& w : prior_warnings(problem.prior, names)) spdlog::warn("{}", w);
      sc.jobs = jobs;
      sc.validate(problem.dimension());

      SamplerProblem sp;
      sp.names = names;
      sp.prior = problem.prior;
      sp.log_density = [&problem](std::span<const double> th) { return log_posterior(problem, th); };
      sp.problem_hash = problem_hash(problem);

      const std::string partial = out_path + ".partial";
      RunHooks hooks;
      hooks.checkpoint_path = checkpoint_every > 0 ? partial : "";
      hooks.checkpoint_every = checkpoint_every;
      hooks.on_progress = [&](const Chain& ch) {
        if (progress_every > 0 && ch.sweeps_done % progress_every == 0 && ch.sweeps_done > 0) {
          spdlog::info("sweep {}/{}: acceptance {:.3f}, simulations {}, failures {}", ch.sweeps_done, sc.sweeps,
                       ch.acceptance_fraction(), problem.counters->simulations.load(),
                       problem.counters->simulation_failures.load());
        }
      };

      Chain chain;
      if (resume_run) {
        const std::string from = fs::exists(partial) ? partial : out_path;
        require_file(from);
        chain = read_chain(from);
        if (chain.walkers != sc.walkers || chain.seed != sc.seed || chain.thin != sc.thin || chain.a != sc.a) {
          throw UsageError("sampler settings differ from the chain in " + from);
        }
        spdlog::info("resuming {} at sweep {}", from, chain.sweeps_done);
        resume(chain, sp, sc.sweeps, jobs, hooks);
      } else {
        chain = run(sp, sc, hooks);
      }
      json extra = {{"mechanism", mech_path}, {"problem", problem_path}};
      chain.extra_json = extra.dump();
      write_chain(out_path, chain);
      if (fs::exists(partial)) fs::remove(partial);

      man.results() = {{"seed", chain.seed},
                       {"config_hash", hex64(chain.config_hash())},
                       {"problem_hash", hex64(chain.problem_hash)},
                       {"sweeps", chain.sweeps_done},
                       {"acceptance", chain.acceptance_fraction()},
                       {"posterior_calls", problem.counters->posterior_calls.load()},
                       {"simulation_failures", problem.counters->simulation_failures.load()}};
      outputs.open(out_path + ".manifest.json") << man.dump();
      outputs.commit();
      spdlog::info("wrote {} ({} sweeps, acceptance {:.3f})", out_path, chain.sweeps_done, chain.acceptance_fraction());
      return 0;
    }

    if (diagnose->parsed()) {
      Manifest man("diagnose", cmd_args);
      require_file(chain_path);
      man.input(chain_path);
      const auto chain = read_chain(chain_path);
      const std::size_t burn = burn_in.value_or(default_burn_in(chain));
      const fs::path dir(out_path);

      const auto ac = autocorrelation(chain, burn, s_max, jobs);
      write_autocorr_csv(ac, chain.names, outputs.open(dir / "autocorr.csv"));
      const auto summary = summarize(chain, burn);
      write_summary_csv(summary, outputs.open(dir / "summary.csv"));
      write_matrix_csv(summary.covariance, chain.names, outputs.open(dir / "covariance.csv"));
      write_matrix_csv(summary.correlation, chain.names, outputs.open(dir / "correlation.csv"));

      if (!triangle.empty()) {
        std::vector<std::size_t> subset;
        for (auto id : triangle) {
          if (id < 1 || id > chain.dim) throw UsageError("triangle id " + std::to_string(id) + " out of range");
          subset.push_back(id - 1);
        }
        const auto grid = triangle_data(chain, burn, subset, bins);
        for (const auto& h : grid.marginals) {
          write_hist1d_csv(h, outputs.open(dir / ("hist1d_" + std::to_string(h.param + 1) + ".csv")));
        }
        for (const auto& h : grid.pairs) {
          write_hist2d_csv(grid, h,
                           outputs.open(dir / ("hist2d_" + std::to_string(h.param_x + 1) + "_" +
                                               std::to_string(h.param_y + 1) + ".csv")));
        }
      }
      if (want_tau) {
        auto& os = outputs.open(dir / "tau.csv");
        os << "parameter,tau_rows,tau_sweeps\n";
        for (std::size_t i = 0; i < chain.dim; ++i) {
          const auto tau = ac.integrated_time(i, tau_c);
          os << chain.names[i] << ',' << (tau ? fmt17(*tau) : "nan") << ','
             << (tau ? fmt17(*tau * static_cast<double>(chain.thin)) : "nan") << '\n';
          if (!tau) spdlog::warn("no reliable tau for {}: chain too short for the window", chain.names[i]);
        }
      }
      man.results() = {{"burn_in", burn}, {"s_max", ac.s_max}, {"samples", summary.samples}};
      outputs.open(dir / "manifest.json") << man.dump();
      outputs.commit();
      return 0;
    }

    if (propagate_cmd->parsed()) {
      Manifest man("propagate", cmd_args);
      for (const auto* p : {&chain_path, &mech_path, &problem_path, &case_path}) {
        require_file(*p);
        man.input(*p);
      }
      const auto chain = read_chain(chain_path);
      const auto mech = load_mechanism(mech_path);
      const auto map = chain_map(chain, load_problem_config(problem_path), problem_path);
      map.check(mech);
      const auto pc = load_problem_config(case_path);
      const auto& c = pick_case(pc, label, case_path);
      const auto cfg = ovr.apply(pc.integrator);
      const auto samples = thin(chain, thinning(picks, start, stride));
      spdlog::info("propagating {} samples through case {}", samples.size(), c.label);
      const auto res = propagate(samples, c.rc, mech, map, cfg, jobs, hist_bins);

      const fs::path dir(out_path);
      write_samples_csv(samples, res, chain.names, outputs.open(dir / "samples.csv"));
      write_propagation_summary_csv(res, outputs.open(dir / "summary.csv"));
      write_propagation_hist_csv(res, outputs.open(dir / "hist.csv"));
      man.results() = {{"samples", samples.size()},
                       {"successes", res.summary.successes},
                       {"failures", res.summary.failures},
                       {"mean", res.summary.mean},
                       {"std", res.summary.std}};
      outputs.open(dir / "manifest.json") << man.dump();
      outputs.commit();
      if (res.summary.failures > 0) spdlog::warn("{} of {} samples failed", res.summary.failures, samples.size());
      out << "samples=" << samples.size() << " successes=" << res.summary.successes
          << " mean=" << fmt17(res.summary.mean) << " std=" << fmt17(res.summary.std) << '\n';
      return res.summary.successes == 0 && !samples.empty() ? 1 : 0;
    }

    if (exportc->parsed()) {
      Manifest man("export-calibrations", cmd_args);
      for (const auto* p : {&chain_path, &mech_path, &problem_path}) {
        require_file(*p);
        man.input(*p);
      }
      const auto chain = read_chain(chain_path);
      const auto mech = load_mechanism(mech_path);
      const auto map = chain_map(chain, load_problem_config(problem_path), problem_path);
      map.check(mech);
      const auto samples = thin(chain, thinning(picks, start, stride));
      const fs::path dir(out_path);
      if (fs::exists(dir)) {
        if (!force) throw UsageError(out_path + " exists; use --force to replace it");
        fs::remove_all(dir);
      }
      fs::path partial = dir;
      partial += ".partial";
      fs::remove_all(partial);
      export_calibrations(samples, mech, map, partial.string());
      man.results()["samples"] = samples.size();
      {
        std::ofstream os(partial / "manifest.json");
        os << man.dump();
      }
      fs::rename(partial, dir);
      spdlog::info("wrote {} calibrations to {}", samples.size(), out_path);
      return 0;
    }

    if (chain_export->parsed()) {
      require_file(chain_path);
      const auto chain = read_chain(chain_path);
      std::ostream& os = out_path.empty() ? out : outputs.open(out_path);
      export_chain_csv(chain, os);
      outputs.commit();
      return 0;
    }
    throw UsageError("no subcommand");
  } catch (const UsageError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const ConfigError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const MechanismError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const SamplerError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const DiagnosticsError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const PropagationError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::logic_error& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("internal error: {}", e.what());
    return 1;
  }
}

} // namespace kcal::cli
