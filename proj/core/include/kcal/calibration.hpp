#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kcal/mechanism.hpp"
#include "kcal/reactor.hpp"

namespace kcal {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SlotField { pre_exponential, low_pressure_A, efficiency };

/// One writable number inside a mechanism. Text form:
/// `R9.A`, `R14.A[1]`, `R9.Alow`, `R9.eff(H2O)`.
struct ParameterSlot {
  std::string reaction;
  SlotField field = SlotField::pre_exponential;
  std::size_t index = 0; // Arrhenius entry for pre_exponential (0 = primary)
  std::string species;   // efficiency only

  bool operator==(const ParameterSlot&) const = default;
  std::string to_string() const;
  static ParameterSlot parse(std::string_view text);

  double read(const Mechanism& mech) const;
  void write(Mechanism& mech, double value) const;
};

/// One component of theta and the slots it drives (several when tied).
struct ActiveParameter {
  std::string name;
  std::vector<ParameterSlot> slots;
  std::optional<std::string> tie_group;

  bool operator==(const ActiveParameter&) const = default;
};

struct ActiveParameterMap {
  std::vector<ActiveParameter> params;

  std::size_t dimension() const noexcept { return params.size(); }
  std::vector<std::string> names() const;
  /// Current slot values of `mech` (first slot of each parameter).
  std::vector<double> read(const Mechanism& mech) const;
  /// Throws ConfigError if a slot does not resolve against `mech`.
  void check(const Mechanism& mech) const;

  bool operator==(const ActiveParameterMap&) const = default;
};

struct PriorEntry {
  double mean = 0.0;
  double sigma = 0.0;
  double lower = 0.0;
  double upper = 0.0;

  bool operator==(const PriorEntry&) const = default;
};

using PriorSpec = std::vector<PriorEntry>;

/// Throws ConfigError when lower >= upper or sigma <= 0. A mean outside the
/// bounds is allowed (it happens in transcribed tables) and only reported by
/// prior_warnings.
void validate_prior(const PriorSpec& prior);
std::vector<std::string> prior_warnings(const PriorSpec& prior, const std::vector<std::string>& names);

struct ExperimentTarget {
  std::string label;
  ReactorCase rc;
  double d = 0.0;
  double sigma = 0.0;

  bool operator==(const ExperimentTarget&) const = default;
};

/// A line from a `[cases]` or `[targets]` section. d and sigma are absent in
/// case files; sigma_rel is resolved against d (or the simulated value in
/// gen-targets).
struct CaseLine {
  std::string label;
  ReactorCase rc;
  std::optional<double> d;
  std::optional<double> sigma;
  std::optional<double> sigma_rel;
};

CaseLine parse_case_line(std::string_view line);
std::string format_case(const std::string& label, const ReactorCase& rc);
std::string format_target(const ExperimentTarget& t);

/// Parsed problem/case configuration file.
struct ProblemConfig {
  ActiveParameterMap map;
  PriorSpec prior;
  std::vector<CaseLine> cases;   // [cases] and [targets], in file order
  bool has_targets = false;      // true when a [targets] section was present
  IntegratorConfig integrator;
};

ProblemConfig parse_problem_config(std::string_view text);
ProblemConfig load_problem_config(const std::string& path);
std::string serialize_active(const ActiveParameterMap& map, const PriorSpec& prior);
std::string serialize_integrator(const IntegratorConfig& cfg);

/// Counters shared by copies of a PosteriorProblem.
struct EvaluationCounters {
  std::atomic<std::uint64_t> posterior_calls{0};
  std::atomic<std::uint64_t> prior_rejections{0};
  std::atomic<std::uint64_t> simulations{0};
  std::atomic<std::uint64_t> simulation_failures{0};
};

struct PosteriorProblem {
  Mechanism mech;
  ActiveParameterMap map;
  PriorSpec prior;
  std::vector<ExperimentTarget> targets;
  IntegratorConfig cfg;
  std::shared_ptr<EvaluationCounters> counters = std::make_shared<EvaluationCounters>();

  std::size_t dimension() const noexcept { return map.dimension(); }
  /// Checks map/prior/target consistency; throws ConfigError.
  void validate() const;
};

/// Builds a posterior problem from a config with a [targets] section.
PosteriorProblem make_problem(const Mechanism& mech, const ProblemConfig& cfg);

Mechanism apply_parameters(const Mechanism& mech, const ActiveParameterMap& map, std::span<const double> theta);

double log_prior(const PriorSpec& prior, std::span<const double> theta);

ObservableResult simulate_target(const Mechanism& mech, const ExperimentTarget& target, const IntegratorConfig& cfg);

double log_likelihood(const PosteriorProblem& problem, std::span<const double> theta);

/// log_prior + log_likelihood; the likelihood is skipped when the prior is -inf.
double log_posterior(const PosteriorProblem& problem, std::span<const double> theta);

/// Stable hash of everything that defines the posterior density.
std::uint64_t problem_hash(const PosteriorProblem& problem);

struct GeneratedTarget {
  ExperimentTarget target;
  double truth = 0.0; // noiseless simulated value
};

/// Simulates each case with `mech` and adds Gaussian noise of standard
/// deviation sigma (from the case's sigma, its sigma_rel times the simulated
/// value, or `default_sigma_rel`). Noise for case i depends only on (seed, i).
/// With add_noise false, d is the simulated value and sigma is kept for the
/// likelihood. Throws ConfigError naming the case when a simulation fails.
std::vector<GeneratedTarget> generate_targets(const Mechanism& mech, const std::vector<CaseLine>& cases,
                                              const IntegratorConfig& cfg, std::uint64_t seed,
                                              std::optional<double> default_sigma_rel, bool add_noise = true,
                                              std::size_t jobs = 1);

} // namespace kcal
