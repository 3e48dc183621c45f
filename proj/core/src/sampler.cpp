#include "kcal/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <numbers>
#include <ostream>
#include <thread>
#include <utility>

#include "json.hpp"

#include "text_util.hpp"

namespace kcal {

// ---------------------------------------------------------------------------
// Hashing and random numbers

Fnv1a& Fnv1a::bytes(const void* data, std::size_t n) noexcept {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h_ ^= p[i];
    h_ *= 0x100000001b3ULL;
  }
  return *this;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

} // namespace

Rng::Rng(std::uint64_t seed, std::uint64_t walker, std::uint64_t sweep) noexcept
    : state_(mix64(mix64(mix64(seed + kGolden) + walker) + sweep)) {}

std::uint64_t Rng::next() noexcept {
  state_ += kGolden;
  return mix64(state_);
}

double Rng::uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double Rng::normal() noexcept {
  const double u1 = 1.0 - uniform(); // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::size_t Rng::below(std::size_t n) noexcept {
  return static_cast<std::size_t>(uniform() * static_cast<double>(n));
}

void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::thread> threads;
  const std::size_t count = std::min(jobs, n);
  threads.reserve(count - 1);
  for (std::size_t t = 0; t + 1 < count; ++t) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Ensemble

void SamplerConfig::validate(std::size_t dimension) const {
  if (!(a > 1.0)) throw SamplerError("stretch scale a must be > 1");
  if (walkers < 4 || walkers % 2 != 0) throw SamplerError("walker count must be even and at least 4");
  if (thin < 1) throw SamplerError("thin must be at least 1");
  if (sweeps % thin != 0) throw SamplerError("sweeps must be a multiple of thin");
  if (dimension == 0) throw SamplerError("dimension must be positive");
}

namespace {

double safe_eval(const LogDensity& f, std::span<const double> x) {
  const double v = f(x);
  return std::isnan(v) ? -std::numeric_limits<double>::infinity() : v;
}

} // namespace

EnsembleState init_ensemble(const PriorSpec& prior, const std::vector<std::string>& names, std::size_t walkers,
                            std::uint64_t seed, const LogDensity& log_density, std::size_t jobs) {
  if (walkers < 4) throw SamplerError("init_ensemble needs at least 4 walkers");
  const std::size_t dim = prior.size();
  EnsembleState s;
  s.walkers = walkers;
  s.dim = dim;
  s.x.assign(walkers * dim, 0.0);
  s.logp.assign(walkers, 0.0);
  auto name = [&](std::size_t i) { return i < names.size() ? names[i] : "parameter " + std::to_string(i + 1); };

  parallel_for(walkers, jobs, [&](std::size_t k) {
    Rng rng(seed, k, kInitSweep);
    auto w = s.walker(k);
    for (int attempt = 0; attempt < 100; ++attempt) {
      for (std::size_t i = 0; i < dim; ++i) {
        const auto& e = prior[i];
        bool ok = false;
        for (int r = 0; r < 100 && !ok; ++r) {
          const double v = e.mean + 0.1 * e.sigma * rng.normal();
          if (v >= e.lower && v <= e.upper) {
            w[i] = v;
            ok = true;
          }
        }
        if (!ok) {
          throw SamplerError("initialization failed: no in-bounds draw for " + name(i) + " after 100 redraws (mean " +
                             format_double(e.mean) + ", bounds [" + format_double(e.lower) + ", " +
                             format_double(e.upper) + "])");
        }
      }
      const double lp = safe_eval(log_density, w);
      if (lp > -std::numeric_limits<double>::infinity()) {
        s.logp[k] = lp;
        return;
      }
    }
    throw SamplerError("initialization failed: walker " + std::to_string(k) +
                       " has log-posterior -inf after 100 redraws");
  });
  return s;
}

EnsembleState make_ensemble(std::size_t walkers, std::size_t dim, std::vector<double> x,
                            const LogDensity& log_density, std::size_t jobs) {
  if (x.size() != walkers * dim) throw SamplerError("ensemble size mismatch");
  EnsembleState s;
  s.walkers = walkers;
  s.dim = dim;
  s.x = std::move(x);
  s.logp.assign(walkers, 0.0);
  parallel_for(walkers, jobs, [&](std::size_t k) { s.logp[k] = safe_eval(log_density, s.walker(k)); });
  return s;
}

double draw_stretch(double u, double a) noexcept {
  const double r = 1.0 + (a - 1.0) * u;
  return r * r / a;
}

void sweep(EnsembleState& state, const LogDensity& log_density, const SamplerConfig& cfg,
           std::vector<std::uint64_t>& accepted, std::vector<Proposal>* proposals) {
  const std::size_t L = state.walkers;
  const std::size_t n = state.dim;
  const std::size_t half = L / 2;
  const std::uint64_t t = state.sweep + 1;
  const double neg_inf = -std::numeric_limits<double>::infinity();
  if (accepted.size() != L) accepted.assign(L, 0);
  if (proposals) proposals->assign(L, Proposal{});

  for (std::size_t h = 0; h < 2; ++h) {
    const std::size_t begin = h * half;
    const std::size_t other = (1 - h) * half;
    parallel_for(half, cfg.jobs, [&](std::size_t i) {
      const std::size_t k = begin + i;
      Rng rng(cfg.seed, k, t);
      const std::size_t j = other + rng.below(half);
      const double z = draw_stretch(rng, cfg.a);
      const double u = rng.uniform();

      std::vector<double> y(n);
      const auto xk = state.walker(k);
      const auto xj = std::as_const(state).walker(j);
      for (std::size_t d = 0; d < n; ++d) y[d] = xj[d] + z * (xk[d] - xj[d]);
      const double lp = safe_eval(log_density, y);
      const double log_ratio = static_cast<double>(n - 1) * std::log(z) + lp - state.logp[k];
      const bool accept = lp > neg_inf && (log_ratio >= 0.0 || std::log(u) < log_ratio);
      if (accept) {
        std::copy(y.begin(), y.end(), xk.begin());
        state.logp[k] = lp;
        ++accepted[k];
      }
      if (proposals) (*proposals)[k] = {k, j, z, log_ratio, accept};
    });
  }
  state.sweep = t;
}

// ---------------------------------------------------------------------------
// Chain

double Chain::acceptance_fraction(std::size_t walker) const {
  return sweeps_done ? static_cast<double>(accepted[walker]) / static_cast<double>(sweeps_done) : 0.0;
}

double Chain::acceptance_fraction() const {
  if (!sweeps_done || !walkers) return 0.0;
  std::uint64_t total = 0;
  for (auto a : accepted) total += a;
  return static_cast<double>(total) / static_cast<double>(sweeps_done * walkers);
}

std::uint64_t Chain::config_hash() const {
  Fnv1a h;
  h.value(a).value(static_cast<std::uint64_t>(walkers)).value(seed).value(static_cast<std::uint64_t>(thin));
  h.value(static_cast<std::uint64_t>(dim)).value(problem_hash);
  return h.digest();
}

EnsembleState Chain::last_state() const {
  if (rows() == 0) throw SamplerError("chain has no stored rows");
  EnsembleState s;
  s.walkers = walkers;
  s.dim = dim;
  const std::size_t r = rows() - 1;
  s.x.assign(samples.begin() + static_cast<std::ptrdiff_t>(r * walkers * dim), samples.end());
  s.logp.assign(logp.begin() + static_cast<std::ptrdiff_t>(r * walkers), logp.end());
  s.sweep = sweep_of_row(r);
  return s;
}

namespace {

void append_row(Chain& c, const EnsembleState& s) {
  c.samples.insert(c.samples.end(), s.x.begin(), s.x.end());
  c.logp.insert(c.logp.end(), s.logp.begin(), s.logp.end());
}

void advance(Chain& chain, EnsembleState& state, const LogDensity& f, const SamplerConfig& cfg,
             std::uint64_t total, const RunHooks& hooks) {
  std::size_t every = hooks.checkpoint_every;
  if (every % cfg.thin) every += cfg.thin - every % cfg.thin;
  while (state.sweep < total) {
    sweep(state, f, cfg, chain.accepted);
    if (state.sweep % cfg.thin == 0) {
      append_row(chain, state);
      chain.sweeps_done = state.sweep;
      if (hooks.on_progress) hooks.on_progress(chain);
      if (!hooks.checkpoint_path.empty() && every && state.sweep % every == 0 && state.sweep < total) {
        write_chain(hooks.checkpoint_path, chain);
      }
    }
  }
  chain.sweeps_done = state.sweep;
}

} // namespace

Chain run(const SamplerProblem& problem, const SamplerConfig& cfg, const RunHooks& hooks) {
  const std::size_t dim = problem.prior.size();
  cfg.validate(dim);
  EnsembleState state = hooks.initial
                            ? *hooks.initial
                            : init_ensemble(problem.prior, problem.names, cfg.walkers, cfg.seed, problem.log_density,
                                            cfg.jobs);
  if (state.walkers != cfg.walkers || state.dim != dim) throw SamplerError("initial ensemble has the wrong shape");
  state.sweep = 0;

  Chain chain;
  chain.walkers = cfg.walkers;
  chain.dim = dim;
  chain.names = problem.names;
  for (const auto& e : problem.prior) chain.prior_means.push_back(e.mean);
  chain.a = cfg.a;
  chain.seed = cfg.seed;
  chain.thin = cfg.thin;
  chain.problem_hash = problem.problem_hash;
  chain.accepted.assign(cfg.walkers, 0);
  append_row(chain, state);
  if (hooks.on_progress) hooks.on_progress(chain);
  advance(chain, state, problem.log_density, cfg, cfg.sweeps, hooks);
  return chain;
}

void resume(Chain& chain, const SamplerProblem& problem, std::uint64_t total_sweeps, std::size_t jobs,
            const RunHooks& hooks) {
  if (chain.problem_hash != problem.problem_hash) {
    throw SamplerError("resume mismatch: chain problem hash " + hex64(chain.problem_hash) + " != " +
                       hex64(problem.problem_hash));
  }
  if (chain.dim != problem.prior.size()) throw SamplerError("resume mismatch: dimension differs");
  if (chain.sweep_of_row(chain.rows() - 1) != chain.sweeps_done) {
    throw SamplerError("resume mismatch: last stored row is not the final state");
  }
  if (total_sweeps < chain.sweeps_done) throw SamplerError("chain already has more sweeps than requested");
  SamplerConfig cfg;
  cfg.a = chain.a;
  cfg.walkers = chain.walkers;
  cfg.seed = chain.seed;
  cfg.thin = chain.thin;
  cfg.jobs = jobs;
  cfg.sweeps = static_cast<std::size_t>(total_sweeps);
  cfg.validate(chain.dim);
  EnsembleState state = chain.last_state();
  advance(chain, state, problem.log_density, cfg, total_sweeps, hooks);
}

// ---------------------------------------------------------------------------
// Binary I/O

namespace {

constexpr char kMagic[4] = {'K', 'C', 'H', 'N'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) throw SamplerError("chain file truncated");
  if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
  T v;
  std::memcpy(&v, buf, sizeof(T));
  return v;
}

} // namespace

void write_chain(const std::string& path, const Chain& c) {
  nlohmann::json j;
  j["format"] = "kcal-chain";
  j["a"] = c.a;
  j["seed"] = c.seed;
  j["thin"] = c.thin;
  j["sweeps_done"] = c.sweeps_done;
  j["names"] = c.names;
  j["prior_means"] = c.prior_means;
  j["problem_hash"] = hex64(c.problem_hash);
  j["config_hash"] = hex64(c.config_hash());
  j["extra"] = nlohmann::json::parse(c.extra_json);
  const std::string blob = j.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + tmp);
    os.write(kMagic, 4);
    put<std::uint32_t>(os, kVersion);
    put<std::uint32_t>(os, static_cast<std::uint32_t>(c.walkers));
    put<std::uint32_t>(os, static_cast<std::uint32_t>(c.dim));
    put<std::uint64_t>(os, static_cast<std::uint64_t>(c.rows()));
    put<std::uint64_t>(os, static_cast<std::uint64_t>(blob.size()));
    os.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    for (double v : c.samples) put(os, v);
    for (double v : c.logp) put(os, v);
    for (auto v : c.accepted) put(os, v);
    if (!os) throw std::runtime_error("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

Chain read_chain(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open chain file " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) throw SamplerError(path + ": not a chain file");
  if (get<std::uint32_t>(is) != kVersion) throw SamplerError(path + ": unsupported chain version");
  Chain c;
  c.walkers = get<std::uint32_t>(is);
  c.dim = get<std::uint32_t>(is);
  const auto rows = get<std::uint64_t>(is);
  const auto blob_len = get<std::uint64_t>(is);
  if (blob_len > (1u << 26)) throw SamplerError(path + ": header too large");
  std::string blob(blob_len, '\0');
  if (!is.read(blob.data(), static_cast<std::streamsize>(blob_len))) throw SamplerError(path + ": truncated header");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(blob);
    c.a = j.at("a").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.thin = j.at("thin").get<std::size_t>();
    c.sweeps_done = j.at("sweeps_done").get<std::uint64_t>();
    c.names = j.at("names").get<std::vector<std::string>>();
    c.prior_means = j.at("prior_means").get<std::vector<double>>();
    c.problem_hash = std::stoull(j.at("problem_hash").get<std::string>(), nullptr, 16);
    c.extra_json = j.value("extra", nlohmann::json::object()).dump();
  } catch (const std::exception& e) {
    throw SamplerError(path + ": bad chain header: " + e.what());
  }
  if (c.names.size() != c.dim || c.prior_means.size() != c.dim) throw SamplerError(path + ": header size mismatch");
  if (hex64(c.config_hash()) != j.at("config_hash").get<std::string>()) {
    throw SamplerError(path + ": config hash mismatch (corrupted header)");
  }
  const std::size_t n_samples = static_cast<std::size_t>(rows) * c.walkers * c.dim;
  c.samples.resize(n_samples);
  for (auto& v : c.samples) v = get<double>(is);
  c.logp.resize(static_cast<std::size_t>(rows) * c.walkers);
  for (auto& v : c.logp) v = get<double>(is);
  c.accepted.resize(c.walkers);
  for (auto& v : c.accepted) v = get<std::uint64_t>(is);
  if (is.peek() != std::char_traits<char>::eof()) throw SamplerError(path + ": trailing bytes");
  return c;
}

void export_chain_csv(const Chain& c, std::ostream& os) {
  os << "sweep,walker,logp";
  for (const auto& n : c.names) os << ',' << n;
  os << '\n';
  for (std::size_t r = 0; r < c.rows(); ++r) {
    for (std::size_t k = 0; k < c.walkers; ++k) {
      os << c.sweep_of_row(r) << ',' << k << ',' << format_double(c.log_density(r, k));
      for (std::size_t i = 0; i < c.dim; ++i) os << ',' << format_double(c.at(r, k, i));
      os << '\n';
    }
  }
}

} // namespace kcal
