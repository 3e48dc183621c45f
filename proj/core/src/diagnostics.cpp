#include "kcal/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "text_util.hpp"

namespace kcal {

std::size_t first_kept_row(const Chain& chain, std::size_t burn_in) {
  std::size_t r = 0;
  while (r < chain.rows() && chain.sweep_of_row(r) <= burn_in) ++r;
  return r;
}

std::size_t default_burn_in(const Chain& chain) { return static_cast<std::size_t>(chain.sweeps_done / 2); }

std::size_t default_s_max(std::size_t kept_rows) { return std::min<std::size_t>(1000, kept_rows / 5); }

std::vector<double> autocovariance(std::span<const std::vector<double>> walker_series, std::size_t s_max) {
  if (walker_series.empty()) throw DiagnosticsError("no series");
  const std::size_t N = walker_series.front().size();
  if (s_max >= N) throw DiagnosticsError("s_max must be below the series length");
  std::vector<double> c(s_max + 1, 0.0);
  std::vector<double> dev(N);
  for (const auto& x : walker_series) {
    if (x.size() != N) throw DiagnosticsError("series lengths differ");
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(N);
    for (std::size_t t = 0; t < N; ++t) dev[t] = x[t] - mean;
    for (std::size_t s = 0; s <= s_max; ++s) {
      double acc = 0.0;
      for (std::size_t t = 0; t + s < N; ++t) acc += dev[t] * dev[t + s];
      c[s] += acc / static_cast<double>(N - s);
    }
  }
  for (double& v : c) v /= static_cast<double>(walker_series.size());
  return c;
}

std::optional<double> AutocorrResult::integrated_time(std::size_t param, double c) const {
  if (degenerate[param]) return std::nullopt;
  const auto& r = rho[param];
  double tau = 1.0;
  for (std::size_t M = 1; M < r.size(); ++M) {
    tau += 2.0 * r[M];
    if (static_cast<double>(M) >= c * tau) return tau;
  }
  return std::nullopt;
}

AutocorrResult autocorrelation(const Chain& chain, std::size_t burn_in, std::optional<std::size_t> s_max,
                               std::size_t jobs) {
  const std::size_t first = first_kept_row(chain, burn_in);
  const std::size_t kept = chain.rows() - first;
  if (kept < 2) throw DiagnosticsError("fewer than two stored rows after burn-in");
  AutocorrResult out;
  out.burn_in = burn_in;
  out.thin = chain.thin;
  out.s_max = s_max.value_or(default_s_max(kept));
  if (out.s_max >= kept) throw DiagnosticsError("burn-in plus s_max exceeds the stored chain");
  out.c0.assign(chain.dim, 0.0);
  out.rho.assign(chain.dim, {});
  out.degenerate.assign(chain.dim, false);
  parallel_for(chain.dim, jobs, [&](std::size_t i) {
    std::vector<std::vector<double>> series(chain.walkers, std::vector<double>(kept));
    for (std::size_t k = 0; k < chain.walkers; ++k) {
      for (std::size_t r = 0; r < kept; ++r) series[k][r] = chain.at(first + r, k, i);
    }
    const auto c = autocovariance(series, out.s_max);
    out.c0[i] = c[0];
    if (!(c[0] > 0.0)) {
      out.degenerate[i] = true;
      return;
    }
    auto& rho = out.rho[i];
    rho.resize(c.size());
    rho[0] = 1.0;
    for (std::size_t s = 1; s < c.size(); ++s) rho[s] = c[s] / c[0];
  });
  return out;
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw DiagnosticsError("quantile of empty data");
  const double pos = p * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double w = pos - static_cast<double>(lo);
  return sorted[lo] + w * (sorted[hi] - sorted[lo]);
}

namespace {

std::vector<double> column(const Chain& chain, std::size_t first, std::size_t param) {
  std::vector<double> out;
  out.reserve((chain.rows() - first) * chain.walkers);
  for (std::size_t r = first; r < chain.rows(); ++r) {
    for (std::size_t k = 0; k < chain.walkers; ++k) out.push_back(chain.at(r, k, param));
  }
  return out;
}

struct Binning {
  double lo = 0.0, hi = 1.0;
  std::size_t bins = 1;

  std::size_t index(double v) const {
    if (hi == lo) return 0;
    auto b = static_cast<std::ptrdiff_t>(std::floor((v - lo) / (hi - lo) * static_cast<double>(bins)));
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(b, 0, static_cast<std::ptrdiff_t>(bins) - 1));
  }
};

Binning make_binning(const std::vector<double>& values, std::size_t bins) {
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  Binning b{*mn, *mx, bins};
  if (b.lo == b.hi) {
    b.lo -= 0.5;
    b.hi += 0.5;
  }
  return b;
}

} // namespace

ChainSummary summarize(const Chain& chain, std::size_t burn_in, std::size_t mode_bins) {
  const std::size_t first = first_kept_row(chain, burn_in);
  if (first >= chain.rows()) throw DiagnosticsError("no samples after burn-in");
  if (mode_bins < 1) throw DiagnosticsError("mode_bins must be positive");
  const std::size_t n = chain.dim;
  ChainSummary s;
  std::vector<std::vector<double>> cols(n);
  for (std::size_t i = 0; i < n; ++i) cols[i] = column(chain, first, i);
  s.samples = cols.front().size();
  const double N = static_cast<double>(s.samples);

  std::vector<double> means(n);
  for (std::size_t i = 0; i < n; ++i) {
    ParameterSummary p;
    p.name = i < chain.names.size() ? chain.names[i] : std::to_string(i + 1);
    p.prior_mean = i < chain.prior_means.size() ? chain.prior_means[i] : 0.0;
    const auto& x = cols[i];
    double m = 0.0;
    for (double v : x) m += v;
    m /= N;
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    p.mean = m;
    p.std = s.samples > 1 ? std::sqrt(ss / (N - 1.0)) : 0.0;
    means[i] = m;
    std::vector<double> sorted = x;
    std::sort(sorted.begin(), sorted.end());
    p.q05 = quantile_sorted(sorted, 0.05);
    p.q25 = quantile_sorted(sorted, 0.25);
    p.q50 = quantile_sorted(sorted, 0.50);
    p.q75 = quantile_sorted(sorted, 0.75);
    p.q95 = quantile_sorted(sorted, 0.95);
    if (sorted.front() == sorted.back()) {
      p.mode = sorted.front();
    } else {
      const auto b = make_binning(x, mode_bins);
      std::vector<std::size_t> counts(mode_bins, 0);
      for (double v : x) ++counts[b.index(v)];
      const auto best = static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
      p.mode = b.lo + (b.hi - b.lo) * (static_cast<double>(best) + 0.5) / static_cast<double>(mode_bins);
    }
    s.params.push_back(std::move(p));
  }

  s.covariance.assign(n * n, 0.0);
  s.correlation.assign(n * n, 0.0);
  const double denom = s.samples > 1 ? N - 1.0 : 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < s.samples; ++t) acc += (cols[i][t] - means[i]) * (cols[j][t] - means[j]);
      s.covariance[i * n + j] = s.covariance[j * n + i] = acc / denom;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d = std::sqrt(s.covariance[i * n + i] * s.covariance[j * n + j]);
      if (i == j) s.correlation[i * n + j] = 1.0;
      else s.correlation[i * n + j] = d > 0.0 ? s.covariance[i * n + j] / d : 0.0;
    }
  }
  return s;
}

const Histogram1D& HistogramGrid::marginal(std::size_t param) const {
  for (const auto& h : marginals) {
    if (h.param == param) return h;
  }
  throw DiagnosticsError("parameter not in triangle subset");
}

const Histogram2D& HistogramGrid::pair(std::size_t x, std::size_t y) const {
  for (const auto& h : pairs) {
    if (h.param_x == x && h.param_y == y) return h;
  }
  throw DiagnosticsError("pair not in triangle subset");
}

double HistogramGrid::binned_correlation(std::size_t x, std::size_t y) const {
  const auto& h = pair(x, y);
  const auto& hx = marginal(x);
  const auto& hy = marginal(y);
  double n = 0, sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (std::size_t a = 0; a < bins; ++a) {
    for (std::size_t b = 0; b < bins; ++b) {
      const double c = static_cast<double>(h.at(a, b));
      const double vx = hx.center(a), vy = hy.center(b);
      n += c;
      sx += c * vx;
      sy += c * vy;
      sxx += c * vx * vx;
      syy += c * vy * vy;
      sxy += c * vx * vy;
    }
  }
  const double cov = sxy / n - (sx / n) * (sy / n);
  const double vx = sxx / n - (sx / n) * (sx / n);
  const double vy = syy / n - (sy / n) * (sy / n);
  return cov / std::sqrt(vx * vy);
}

HistogramGrid triangle_data(const Chain& chain, std::size_t burn_in, const std::vector<std::size_t>& subset,
                            std::size_t bins) {
  if (bins < 2) throw DiagnosticsError("need at least 2 bins");
  if (subset.empty()) throw DiagnosticsError("empty parameter subset");
  for (auto i : subset) {
    if (i >= chain.dim) throw DiagnosticsError("parameter index " + std::to_string(i + 1) + " out of range");
  }
  const std::size_t first = first_kept_row(chain, burn_in);
  if (first >= chain.rows()) throw DiagnosticsError("no samples after burn-in");

  HistogramGrid g;
  g.subset = subset;
  g.bins = bins;
  std::vector<std::vector<std::size_t>> index(subset.size());
  for (std::size_t a = 0; a < subset.size(); ++a) {
    const std::size_t i = subset[a];
    const double mean = i < chain.prior_means.size() ? chain.prior_means[i] : 0.0;
    const double norm = mean != 0.0 ? mean : 1.0;
    g.normalization.push_back(norm);
    auto values = column(chain, first, i);
    for (double& v : values) v /= norm;
    const auto b = make_binning(values, bins);
    Histogram1D h{i, b.lo, b.hi, std::vector<std::size_t>(bins, 0)};
    index[a].reserve(values.size());
    for (double v : values) {
      const auto bi = b.index(v);
      index[a].push_back(bi);
      ++h.counts[bi];
    }
    g.samples = values.size();
    g.marginals.push_back(std::move(h));
  }
  for (std::size_t a = 0; a < subset.size(); ++a) {
    for (std::size_t b = a + 1; b < subset.size(); ++b) {
      Histogram2D h{subset[a], subset[b], bins, std::vector<std::size_t>(bins * bins, 0)};
      for (std::size_t t = 0; t < g.samples; ++t) ++h.counts[index[a][t] * bins + index[b][t]];
      g.pairs.push_back(std::move(h));
    }
  }
  return g;
}

void write_autocorr_csv(const AutocorrResult& r, const std::vector<std::string>& names, std::ostream& os) {
  os << "lag";
  for (const auto& n : names) os << ',' << n;
  os << '\n';
  for (std::size_t s = 0; s <= r.s_max; ++s) {
    os << s * r.thin;
    for (std::size_t i = 0; i < r.rho.size(); ++i) {
      os << ',';
      if (r.degenerate[i]) os << "nan";
      else os << format_double(r.rho[i][s]);
    }
    os << '\n';
  }
}

void write_summary_csv(const ChainSummary& s, std::ostream& os) {
  os << "name,mean,std,q05,q25,q50,q75,q95,mode,prior_mean\n";
  for (const auto& p : s.params) {
    os << p.name;
    for (double v : {p.mean, p.std, p.q05, p.q25, p.q50, p.q75, p.q95, p.mode, p.prior_mean}) {
      os << ',' << format_double(v);
    }
    os << '\n';
  }
}

void write_matrix_csv(const std::vector<double>& m, const std::vector<std::string>& names, std::ostream& os) {
  const std::size_t n = names.size();
  os << "name";
  for (const auto& nm : names) os << ',' << nm;
  os << '\n';
  for (std::size_t i = 0; i < n; ++i) {
    os << names[i];
    for (std::size_t j = 0; j < n; ++j) os << ',' << format_double(m[i * n + j]);
    os << '\n';
  }
}

void write_hist1d_csv(const Histogram1D& h, std::ostream& os) {
  os << "bin_lo,bin_hi,count\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b) {
    os << format_double(h.edge(b)) << ',' << format_double(h.edge(b + 1)) << ',' << h.counts[b] << '\n';
  }
}

void write_hist2d_csv(const HistogramGrid& g, const Histogram2D& h, std::ostream& os) {
  const auto& hx = g.marginal(h.param_x);
  const auto& hy = g.marginal(h.param_y);
  os << "x_lo,x_hi,y_lo,y_hi,count\n";
  for (std::size_t a = 0; a < h.bins; ++a) {
    for (std::size_t b = 0; b < h.bins; ++b) {
      os << format_double(hx.edge(a)) << ',' << format_double(hx.edge(a + 1)) << ',' << format_double(hy.edge(b))
         << ',' << format_double(hy.edge(b + 1)) << ',' << h.at(a, b) << '\n';
    }
  }
}

} // namespace kcal
