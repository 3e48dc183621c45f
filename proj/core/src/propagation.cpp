#include "kcal/propagation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "kcal/diagnostics.hpp"
#include "text_util.hpp"

namespace kcal {

std::vector<std::uint64_t> thinning_sweeps(std::uint64_t total, const ThinningSpec& spec) {
  if (spec.n_picks == 0) throw PropagationError("n_picks must be positive");
  const std::uint64_t start = spec.start.value_or(total / 2);
  if (start > total) throw PropagationError("start sweep " + std::to_string(start) + " beyond chain end");
  const std::uint64_t stride = spec.stride.value_or((total - start) / spec.n_picks);
  const std::uint64_t last = start + stride * (spec.n_picks - 1);
  if (last > total) {
    throw PropagationError("thinning overruns the chain: last pick at sweep " + std::to_string(last) + " > " +
                           std::to_string(total));
  }
  if (stride == 0 && spec.n_picks > 1) throw PropagationError("zero stride with several picks");
  std::vector<std::uint64_t> out;
  for (std::size_t m = 0; m < spec.n_picks; ++m) out.push_back(start + stride * m);
  return out;
}

std::vector<PosteriorSample> thin(const Chain& chain, const ThinningSpec& spec) {
  std::vector<PosteriorSample> out;
  for (auto sweep : thinning_sweeps(chain.sweeps_done, spec)) {
    if (sweep % chain.thin != 0) {
      throw PropagationError("sweep " + std::to_string(sweep) + " was not stored (thin=" +
                             std::to_string(chain.thin) + ")");
    }
    const auto row = static_cast<std::size_t>(sweep / chain.thin);
    for (std::size_t k = 0; k < chain.walkers; ++k) {
      PosteriorSample s{k, sweep, std::vector<double>(chain.dim)};
      for (std::size_t i = 0; i < chain.dim; ++i) s.theta[i] = chain.at(row, k, i);
      out.push_back(std::move(s));
    }
  }
  return out;
}

PropagationSummary summarize_outcomes(const std::vector<SampleOutcome>& outcomes) {
  PropagationSummary s;
  std::vector<double> v;
  for (const auto& o : outcomes) {
    if (o.status == ObservableStatus::ok) v.push_back(o.value);
  }
  s.successes = v.size();
  s.failures = outcomes.size() - v.size();
  if (v.empty()) return s;
  std::sort(v.begin(), v.end());
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - s.mean) * (x - s.mean);
  s.std = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  s.q05 = quantile_sorted(v, 0.05);
  s.q25 = quantile_sorted(v, 0.25);
  s.q50 = quantile_sorted(v, 0.50);
  s.q75 = quantile_sorted(v, 0.75);
  s.q95 = quantile_sorted(v, 0.95);
  return s;
}

PropagationResult propagate(const std::vector<PosteriorSample>& samples, const ReactorCase& prediction,
                            const Mechanism& mech, const ActiveParameterMap& map, const IntegratorConfig& cfg,
                            std::size_t jobs, std::size_t bins) {
  validate_case(mech, prediction);
  PropagationResult r;
  r.outcomes.resize(samples.size());
  parallel_for(samples.size(), jobs, [&](std::size_t i) {
    const auto& s = samples[i];
    auto& o = r.outcomes[i];
    o.walker = s.walker;
    o.sweep = s.sweep;
    try {
      const auto m = apply_parameters(mech, map, s.theta);
      const auto res = measure(m, prediction, cfg);
      o.status = res.status;
      o.value = res.value;
      o.message = res.message;
    } catch (const std::exception& e) {
      o.status = ObservableStatus::failure;
      o.message = e.what();
    }
  });
  r.summary = summarize_outcomes(r.outcomes);
  if (r.summary.successes > 0 && bins > 0) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& o : r.outcomes) {
      if (o.status != ObservableStatus::ok) continue;
      lo = std::min(lo, o.value);
      hi = std::max(hi, o.value);
    }
    if (lo == hi) {
      const double w = lo != 0.0 ? std::abs(lo) * 1e-6 : 1.0;
      lo -= 0.5 * w;
      hi += 0.5 * w;
    }
    r.hist_lo = lo;
    r.hist_hi = hi;
    r.hist_counts.assign(bins, 0);
    for (const auto& o : r.outcomes) {
      if (o.status != ObservableStatus::ok) continue;
      auto b = static_cast<std::size_t>((o.value - lo) / (hi - lo) * static_cast<double>(bins));
      ++r.hist_counts[std::min(b, bins - 1)];
    }
  }
  return r;
}

std::string calibration_file_name(const PosteriorSample& s) {
  return "sample_w" + std::to_string(s.walker) + "_s" + std::to_string(s.sweep) + ".mech";
}

void export_calibrations(const std::vector<PosteriorSample>& samples, const Mechanism& mech,
                         const ActiveParameterMap& map, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream index(std::filesystem::path(dir) / "index.csv");
  if (!index) throw std::runtime_error("cannot write to " + dir);
  index << "file,walker,sweep";
  for (const auto& n : map.names()) index << ',' << n;
  index << '\n';
  for (const auto& s : samples) {
    const auto name = calibration_file_name(s);
    std::ofstream os(std::filesystem::path(dir) / name);
    os << "# Posterior sample: walker " << s.walker << ", sweep " << s.sweep << "\n";
    os << serialize_mechanism(apply_parameters(mech, map, s.theta));
    if (!os) throw std::runtime_error("cannot write " + name);
    index << name << ',' << s.walker << ',' << s.sweep;
    for (double v : s.theta) index << ',' << format_double(v);
    index << '\n';
  }
}

void write_samples_csv(const std::vector<PosteriorSample>& samples, const PropagationResult& r,
                       const std::vector<std::string>& names, std::ostream& os) {
  os << "walker,sweep";
  for (const auto& n : names) os << ',' << n;
  os << ",observable,status\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const auto& o = r.outcomes[i];
    os << s.walker << ',' << s.sweep;
    for (double v : s.theta) os << ',' << format_double(v);
    os << ',' << (o.status == ObservableStatus::ok ? format_double(o.value) : std::string("nan")) << ','
       << to_string(o.status) << '\n';
  }
}

void write_propagation_summary_csv(const PropagationResult& r, std::ostream& os) {
  const auto& s = r.summary;
  os << "successes,failures,mean,std,q05,q25,q50,q75,q95\n";
  os << s.successes << ',' << s.failures;
  for (double v : {s.mean, s.std, s.q05, s.q25, s.q50, s.q75, s.q95}) os << ',' << format_double(v);
  os << '\n';
}

void write_propagation_hist_csv(const PropagationResult& r, std::ostream& os) {
  os << "bin_lo,bin_hi,count\n";
  const std::size_t bins = r.hist_counts.size();
  for (std::size_t b = 0; b < bins; ++b) {
    const double lo = r.hist_lo + (r.hist_hi - r.hist_lo) * static_cast<double>(b) / static_cast<double>(bins);
    const double hi = r.hist_lo + (r.hist_hi - r.hist_lo) * static_cast<double>(b + 1) / static_cast<double>(bins);
    os << format_double(lo) << ',' << format_double(hi) << ',' << r.hist_counts[b] << '\n';
  }
}

} // namespace kcal
