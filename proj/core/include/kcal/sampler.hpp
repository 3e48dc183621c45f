#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "kcal/calibration.hpp"

namespace kcal {

/// 64-bit FNV-1a, used for config hashes and manifests.
class Fnv1a {
 public:
  Fnv1a& bytes(const void* data, std::size_t n) noexcept;
  Fnv1a& str(std::string_view s) noexcept { return bytes(s.data(), s.size()); }
  template <typename T>
  Fnv1a& value(const T& v) noexcept {
    return bytes(&v, sizeof(T));
  }
  std::uint64_t digest() const noexcept { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

std::string hex64(std::uint64_t v);

/// Counter-based generator: the stream for (seed, walker, sweep) is fixed, so
/// draws do not depend on which thread evaluates which walker.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t walker, std::uint64_t sweep) noexcept;
  explicit Rng(std::uint64_t key) noexcept : state_(key) {}

  std::uint64_t next() noexcept;
  /// Uniform on [0, 1).
  double uniform() noexcept;
  /// Standard normal (Box-Muller, one value per call).
  double normal() noexcept;
  /// Uniform integer on [0, n).
  std::size_t below(std::size_t n) noexcept;

 private:
  std::uint64_t state_;
};

inline constexpr std::uint64_t kInitSweep = ~std::uint64_t{0};

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. Exceptions are
/// rethrown on the calling thread.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn);

using LogDensity = std::function<double(std::span<const double>)>;

class SamplerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SamplerConfig {
  double a = 1.3;
  std::size_t walkers = 64;
  std::size_t sweeps = 0;
  std::uint64_t seed = 0;
  std::size_t thin = 1;
  std::size_t jobs = 1;

  /// Throws SamplerError on invalid settings.
  void validate(std::size_t dimension) const;
};

struct EnsembleState {
  std::size_t walkers = 0;
  std::size_t dim = 0;
  std::vector<double> x;    // walkers x dim, row-major
  std::vector<double> logp; // per walker
  std::uint64_t sweep = 0;

  std::span<double> walker(std::size_t k) { return {x.data() + k * dim, dim}; }
  std::span<const double> walker(std::size_t k) const { return {x.data() + k * dim, dim}; }
};

/// Draws each parameter from Normal(mean, (sigma/10)^2), redrawing values that
/// fall outside the bounds, and evaluates log-densities. Throws SamplerError
/// naming the parameter (or walker) after 100 failed redraws.
EnsembleState init_ensemble(const PriorSpec& prior, const std::vector<std::string>& names, std::size_t walkers,
                            std::uint64_t seed, const LogDensity& log_density, std::size_t jobs = 1);

/// Ensemble built from explicit positions.
EnsembleState make_ensemble(std::size_t walkers, std::size_t dim, std::vector<double> x,
                            const LogDensity& log_density, std::size_t jobs = 1);

/// z = (1 + (a - 1) u)^2 / a: density proportional to 1/sqrt(z) on [1/a, a].
double draw_stretch(double u, double a) noexcept;
inline double draw_stretch(Rng& rng, double a) noexcept { return draw_stretch(rng.uniform(), a); }

struct Proposal {
  std::size_t walker = 0;
  std::size_t partner = 0;
  double z = 1.0;
  double log_ratio = 0.0; // (n-1) log z + logp(Y) - logp(X)
  bool accepted = false;
};

/// One red-black sweep: the first half of the ensemble moves against the
/// frozen second half, then the reverse. Updates `state`, adds to the
/// per-walker `accepted` counters and optionally records every proposal.
void sweep(EnsembleState& state, const LogDensity& log_density, const SamplerConfig& cfg,
           std::vector<std::uint64_t>& accepted, std::vector<Proposal>* proposals = nullptr);

/// Stored chain. Row 0 is the initial ensemble; row r holds the ensemble after
/// sweep r * thin.
struct Chain {
  std::size_t walkers = 0;
  std::size_t dim = 0;
  std::vector<std::string> names;
  std::vector<double> prior_means;
  double a = 1.3;
  std::uint64_t seed = 0;
  std::size_t thin = 1;
  std::uint64_t sweeps_done = 0;
  std::uint64_t problem_hash = 0;
  std::string extra_json = "{}"; // free-form metadata carried in the header

  std::vector<double> samples;          // rows x walkers x dim
  std::vector<double> logp;             // rows x walkers
  std::vector<std::uint64_t> accepted;  // per walker

  std::size_t rows() const noexcept { return walkers ? logp.size() / walkers : 0; }
  std::uint64_t sweep_of_row(std::size_t r) const noexcept { return static_cast<std::uint64_t>(r) * thin; }
  double at(std::size_t row, std::size_t walker, std::size_t param) const {
    return samples[(row * walkers + walker) * dim + param];
  }
  double log_density(std::size_t row, std::size_t walker) const { return logp[row * walkers + walker]; }
  double acceptance_fraction(std::size_t walker) const;
  double acceptance_fraction() const;
  /// Hash of the settings that must match for a resume.
  std::uint64_t config_hash() const;
  EnsembleState last_state() const;
};

struct SamplerProblem {
  std::vector<std::string> names;
  PriorSpec prior; // used for initialization and recorded means
  LogDensity log_density;
  std::uint64_t problem_hash = 0;
};

struct RunHooks {
  std::string checkpoint_path;          // empty: no checkpoints
  std::size_t checkpoint_every = 0;     // sweeps; rounded up to a multiple of thin
  std::function<void(const Chain&)> on_progress;  // after each stored row
  const EnsembleState* initial = nullptr;         // overrides init_ensemble
};

/// Initializes (unless hooks.initial is given) and runs cfg.sweeps sweeps.
Chain run(const SamplerProblem& problem, const SamplerConfig& cfg, const RunHooks& hooks = {});

/// Continues `chain` until it has `total_sweeps` sweeps. The continuation is
/// bit-identical to an uninterrupted run. Throws SamplerError when the
/// problem hash or sweep count is inconsistent.
void resume(Chain& chain, const SamplerProblem& problem, std::uint64_t total_sweeps, std::size_t jobs,
            const RunHooks& hooks = {});

void write_chain(const std::string& path, const Chain& chain);
Chain read_chain(const std::string& path);

/// CSV: sweep,walker,logp,<names...>
void export_chain_csv(const Chain& chain, std::ostream& os);

} // namespace kcal
