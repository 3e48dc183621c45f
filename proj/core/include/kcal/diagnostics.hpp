#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "kcal/sampler.hpp"

namespace kcal {

class DiagnosticsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Stored rows kept after burn-in: rows whose sweep index exceeds burn_in.
std::size_t first_kept_row(const Chain& chain, std::size_t burn_in);
std::size_t default_burn_in(const Chain& chain);

/// Walker-averaged autocovariance of equal-length series, each with its own
/// mean removed, at lags 0..s_max. Lag s uses the 1/(N - s) normalization.
std::vector<double> autocovariance(std::span<const std::vector<double>> walker_series, std::size_t s_max);

struct AutocorrResult {
  std::size_t burn_in = 0;   // sweeps
  std::size_t s_max = 0;     // lags, in stored rows
  std::size_t thin = 1;
  std::vector<double> c0;                 // per parameter
  std::vector<std::vector<double>> rho;   // [parameter][lag]
  std::vector<bool> degenerate;           // c0 == 0: rho is left empty

  /// Integrated autocorrelation time (in stored rows) with Sokal's
  /// self-consistent window: the smallest M with M >= c * tau(M).
  std::optional<double> integrated_time(std::size_t param, double c = 5.0) const;
};

std::size_t default_s_max(std::size_t kept_rows);

AutocorrResult autocorrelation(const Chain& chain, std::size_t burn_in, std::optional<std::size_t> s_max = {},
                               std::size_t jobs = 1);

struct ParameterSummary {
  std::string name;
  double mean = 0.0;
  double std = 0.0;
  double q05 = 0.0, q25 = 0.0, q50 = 0.0, q75 = 0.0, q95 = 0.0;
  double mode = 0.0; // centre of the fullest histogram bin
  double prior_mean = 0.0;
};

struct ChainSummary {
  std::size_t samples = 0;
  std::vector<ParameterSummary> params;
  std::vector<double> covariance;  // dim x dim, row-major
  std::vector<double> correlation; // dim x dim, row-major
};

/// Linear-interpolation quantile of sorted data (p in [0, 1]).
double quantile_sorted(std::span<const double> sorted, double p);

ChainSummary summarize(const Chain& chain, std::size_t burn_in, std::size_t mode_bins = 50);

struct Histogram1D {
  std::size_t param = 0;
  double lo = 0.0, hi = 1.0; // normalized units
  std::vector<std::size_t> counts;

  double edge(std::size_t b) const { return lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(counts.size()); }
  double center(std::size_t b) const { return 0.5 * (edge(b) + edge(b + 1)); }
};

struct Histogram2D {
  std::size_t param_x = 0, param_y = 0;
  std::size_t bins = 0;
  std::vector<std::size_t> counts; // bins_x x bins_y, row-major in x

  std::size_t at(std::size_t bx, std::size_t by) const { return counts[bx * bins + by]; }
};

struct HistogramGrid {
  std::vector<std::size_t> subset;
  std::size_t bins = 0;
  std::size_t samples = 0;
  std::vector<double> normalization; // prior means (1 when a mean is zero)
  std::vector<Histogram1D> marginals;  // one per subset entry
  std::vector<Histogram2D> pairs;      // (subset[a], subset[b]) for a < b

  const Histogram1D& marginal(std::size_t param) const;
  const Histogram2D& pair(std::size_t param_x, std::size_t param_y) const;
  /// Correlation computed from bin centres of a 2D histogram.
  double binned_correlation(std::size_t param_x, std::size_t param_y) const;
};

HistogramGrid triangle_data(const Chain& chain, std::size_t burn_in, const std::vector<std::size_t>& subset,
                            std::size_t bins);

void write_autocorr_csv(const AutocorrResult& r, const std::vector<std::string>& names, std::ostream& os);
void write_summary_csv(const ChainSummary& s, std::ostream& os);
void write_matrix_csv(const std::vector<double>& m, const std::vector<std::string>& names, std::ostream& os);
void write_hist1d_csv(const Histogram1D& h, std::ostream& os);
void write_hist2d_csv(const HistogramGrid& g, const Histogram2D& h, std::ostream& os);

} // namespace kcal
