#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "kcal/calibration.hpp"
#include "kcal/sampler.hpp"

namespace kcal {

class PropagationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ThinningSpec {
  std::size_t n_picks = 9;
  std::optional<std::uint64_t> start;  // sweep; default T/2
  std::optional<std::uint64_t> stride; // sweeps; default floor((T - start) / n_picks)
};

struct PosteriorSample {
  std::size_t walker = 0;
  std::uint64_t sweep = 0;
  std::vector<double> theta;

  bool operator==(const PosteriorSample&) const = default;
};

/// Sweeps picked by `spec` on a chain with `total_sweeps` sweeps.
std::vector<std::uint64_t> thinning_sweeps(std::uint64_t total_sweeps, const ThinningSpec& spec);

/// Samples ordered by sweep, then walker.
std::vector<PosteriorSample> thin(const Chain& chain, const ThinningSpec& spec);

struct SampleOutcome {
  std::size_t walker = 0;
  std::uint64_t sweep = 0;
  ObservableStatus status = ObservableStatus::failure;
  double value = 0.0;
  std::string message;
};

struct PropagationSummary {
  std::size_t successes = 0;
  std::size_t failures = 0;
  double mean = 0.0;
  double std = 0.0;
  double q05 = 0.0, q25 = 0.0, q50 = 0.0, q75 = 0.0, q95 = 0.0;
};

struct PropagationResult {
  std::vector<SampleOutcome> outcomes; // same order as the input samples
  PropagationSummary summary;
  double hist_lo = 0.0, hist_hi = 0.0;
  std::vector<std::size_t> hist_counts;
};

/// Statistics over the successful outcomes; independent of their order.
PropagationSummary summarize_outcomes(const std::vector<SampleOutcome>& outcomes);

PropagationResult propagate(const std::vector<PosteriorSample>& samples, const ReactorCase& prediction,
                            const Mechanism& mech, const ActiveParameterMap& map, const IntegratorConfig& cfg,
                            std::size_t jobs = 1, std::size_t bins = 20);

/// File name used for an exported sample mechanism.
std::string calibration_file_name(const PosteriorSample& s);

/// Writes one mechanism file per sample plus index.csv into `dir`.
void export_calibrations(const std::vector<PosteriorSample>& samples, const Mechanism& mech,
                         const ActiveParameterMap& map, const std::string& dir);

void write_samples_csv(const std::vector<PosteriorSample>& samples, const PropagationResult& r,
                       const std::vector<std::string>& names, std::ostream& os);
void write_propagation_summary_csv(const PropagationResult& r, std::ostream& os);
void write_propagation_hist_csv(const PropagationResult& r, std::ostream& os);

} // namespace kcal
