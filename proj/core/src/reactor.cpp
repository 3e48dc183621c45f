#include "kcal/reactor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>

#include "text_util.hpp"

namespace kcal {

const char* to_string(IntegrationStatus s) noexcept {
  switch (s) {
    case IntegrationStatus::success: return "success";
    case IntegrationStatus::step_failure: return "step failure";
    case IntegrationStatus::nonfinite: return "non-finite state";
    case IntegrationStatus::out_of_thermo_range: return "temperature outside thermo range";
  }
  return "unknown";
}

const char* to_string(ObservableStatus s) noexcept {
  switch (s) {
    case ObservableStatus::ok: return "ok";
    case ObservableStatus::no_event: return "no-event";
    case ObservableStatus::failure: return "failure";
  }
  return "unknown";
}

std::string describe(const ObservableSpec& spec) {
  return std::visit(
      [](const auto& s) -> std::string {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, IgnitionThreshold>) {
          return "ignition_delay(T>=" + format_double(s.t_ign) + ")";
        } else if constexpr (std::is_same_v<T, MaxHeatingRate>) {
          return "ignition_delay(max dT/dt)";
        } else if constexpr (std::is_same_v<T, FuelFraction>) {
          return "time_to_fraction(" + s.species + "," + format_double(s.fraction) + ")";
        } else {
          return "state_at_time(" + s.quantity + "," + format_double(s.time) + ")";
        }
      },
      spec);
}

void validate_case(const Mechanism& mech, const ReactorCase& rc) {
  if (!(rc.T0 > 0.0)) throw std::invalid_argument("T0 must be positive");
  if (!(rc.p0 > 0.0)) throw std::invalid_argument("p0 must be positive");
  if (!(rc.t_end > 0.0)) throw std::invalid_argument("t_end must be positive");
  double sum = 0.0;
  for (const auto& [name, x] : rc.X) {
    if (!mech.species_index(name)) throw std::invalid_argument("composition species '" + name + "' not in mechanism");
    if (!(x >= 0.0)) throw std::invalid_argument("negative mole fraction for " + name);
    sum += x;
  }
  if (std::abs(sum - 1.0) > 1e-10) {
    throw std::invalid_argument("mole fractions sum to " + format_double(sum) + ", expected 1");
  }
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, IgnitionThreshold>) {
          if (!(s.t_ign > 0.0)) throw std::invalid_argument("ignition threshold must be positive");
        } else if constexpr (std::is_same_v<T, FuelFraction>) {
          if (!mech.species_index(s.species)) throw std::invalid_argument("unknown fuel species " + s.species);
          if (!(s.fraction > 0.0 && s.fraction < 1.0)) throw std::invalid_argument("fraction must lie in (0, 1)");
        } else if constexpr (std::is_same_v<T, StateAtTime>) {
          if (!(s.time > 0.0)) throw std::invalid_argument("state_at_time needs t > 0");
          const auto& q = s.quantity;
          if (q != "T" && q != "p") {
            if (q.size() < 3 || (q.rfind("X:", 0) != 0 && q.rfind("Y:", 0) != 0) ||
                !mech.species_index(q.substr(2))) {
              throw std::invalid_argument("unknown quantity '" + q + "'");
            }
          }
        }
      },
      rc.observable);
}

void validate_config(const IntegratorConfig& cfg) {
  if (!(cfg.rtol > 0.0 && cfg.rtol <= 1e-2)) throw std::invalid_argument("rtol must lie in (0, 1e-2]");
  if (!(cfg.atol > 0.0)) throw std::invalid_argument("atol must be positive");
  if (!(cfg.atol_T_rel > 0.0)) throw std::invalid_argument("atol_T_rel must be positive");
  if (cfg.max_steps < 1) throw std::invalid_argument("max_steps must be at least 1");
  if (!(cfg.event_rtol > 0.0)) throw std::invalid_argument("event_rtol must be positive");
}

// ---------------------------------------------------------------------------
// ReactorSystem

ReactorSystem::ReactorSystem(const Mechanism& mech, ReactorMode mode, double pressure_or_density)
    : model_(mech), mode_(mode) {
  if (mode == ReactorMode::constant_pressure) p_ = pressure_or_density;
  else rho_ = pressure_or_density;
}

double ReactorSystem::pressure(std::span<const double> y) const {
  if (mode_ == ReactorMode::constant_pressure) return p_;
  const auto W = model_.molar_masses();
  double moles = 0.0;
  for (std::size_t i = 0; i < W.size(); ++i) moles += y[i] / W[i];
  return rho_ * kGasConstantCgs * y[W.size()] * moles;
}

void ReactorSystem::species_rates(std::span<const double> y, std::span<double> ydot,
                                  KineticsModel::Workspace& ws) const {
  const std::size_t n = model_.n_species();
  const auto W = model_.molar_masses();
  const double T = y[n];
  double rho = rho_;
  if (mode_ == ReactorMode::constant_pressure) {
    double moles = 0.0;
    for (std::size_t i = 0; i < n; ++i) moles += y[i] / W[i];
    rho = p_ / (kGasConstantCgs * T * moles);
  }
  double conc[64];
  double wdot[64];
  for (std::size_t i = 0; i < n; ++i) conc[i] = rho * y[i] / W[i];
  model_.production_rates(ws, {conc, n}, {wdot, n});

  double heat = 0.0;  // sum e_i/RT wdot_i
  double cmass = 0.0; // c/R per unit mass
  const bool cp = mode_ == ReactorMode::constant_pressure;
  for (std::size_t i = 0; i < n; ++i) {
    ydot[i] = wdot[i] * W[i] / rho;
    heat += (cp ? ws.h_RT[i] : ws.h_RT[i] - 1.0) * wdot[i];
    cmass += y[i] * (cp ? ws.cp_R[i] : ws.cp_R[i] - 1.0) / W[i];
  }
  ydot[n] = -heat * T / (rho * cmass);
}

void ReactorSystem::rhs(std::span<const double> y, std::span<double> ydot, KineticsModel::Workspace& ws) const {
  if (model_.n_species() > 64) throw std::length_error("reactor supports at most 64 species");
  model_.update_temperature(y[model_.n_species()], ws);
  species_rates(y, ydot, ws);
}

void ReactorSystem::jacobian(std::span<const double> y, std::span<const double> f, Eigen::Ref<Eigen::MatrixXd> J,
                             KineticsModel::Workspace& ws, double t_threshold) const {
  const std::size_t n = model_.n_species();
  const std::size_t m = n + 1;
  const double sq = std::sqrt(std::numeric_limits<double>::epsilon());
  double yp[65];
  double fp[65];
  std::copy(y.begin(), y.end(), yp);

  model_.update_temperature(y[n], ws);
  for (std::size_t j = 0; j < n; ++j) {
    const double yj = yp[j];
    double del = sq * std::max(std::abs(yj), 1e-10);
    yp[j] = yj + del;
    del = yp[j] - yj;
    species_rates({yp, m}, {fp, m}, ws);
    for (std::size_t i = 0; i < m; ++i) J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (fp[i] - f[i]) / del;
    yp[j] = yj;
  }
  const double Tj = yp[n];
  double del = sq * std::max(std::abs(Tj), t_threshold);
  yp[n] = Tj + del;
  del = yp[n] - Tj;
  rhs({yp, m}, {fp, m}, ws);
  for (std::size_t i = 0; i < m; ++i) J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(n)) = (fp[i] - f[i]) / del;
}

// ---------------------------------------------------------------------------
// Trajectory helpers

std::vector<double> ReactorTrajectory::element_moles(const Mechanism& mech, std::size_t i) const {
  const auto em = element_matrix(mech);
  std::vector<double> out(em.elements.size(), 0.0);
  for (std::size_t e = 0; e < em.elements.size(); ++e) {
    for (std::size_t k = 0; k < em.n_species; ++k) out[e] += em(e, k) * mass_fractions[i][k] / molar_masses[k];
  }
  return out;
}

double ReactorTrajectory::specific_energy(const Mechanism& mech, std::size_t i) const {
  const double T = temperature[i];
  double e = 0.0;
  for (std::size_t k = 0; k < mech.species.size(); ++k) {
    const auto v = evaluate_nasa7(mech.species[k].thermo, T);
    const double per_mole = mode == ReactorMode::constant_pressure ? v.h_RT : v.h_RT - 1.0;
    e += mass_fractions[i][k] / molar_masses[k] * per_mole * kGasConstantCgs * T;
  }
  return e;
}

std::vector<double> ReactorTrajectory::mole_fractions(std::size_t i) const {
  std::vector<double> x(species.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    x[k] = mass_fractions[i][k] / molar_masses[k];
    sum += x[k];
  }
  for (double& v : x) v /= sum;
  return x;
}

// ---------------------------------------------------------------------------
// Integration

namespace {

struct Setup {
  std::vector<double> y0;
  double p_or_rho = 0.0;
};

Setup initial_state(const Mechanism& mech, const ReactorCase& rc) {
  Setup s;
  const std::size_t n = mech.species.size();
  s.y0.assign(n + 1, 0.0);
  double mass = 0.0;
  double xsum = 0.0;
  for (const auto& [name, x] : rc.X) {
    const auto i = *mech.species_index(name);
    s.y0[i] += x * mech.species[i].molar_mass;
    xsum += x;
  }
  for (std::size_t i = 0; i < n; ++i) mass += s.y0[i];
  for (std::size_t i = 0; i < n; ++i) s.y0[i] /= mass;
  s.y0[n] = rc.T0;
  const double p = rc.p0 * kOneAtmosphere;
  const double mean_w = mass / xsum;
  s.p_or_rho = rc.mode == ReactorMode::constant_pressure ? p : p * mean_w / (kGasConstantCgs * rc.T0);
  return s;
}

BdfOptions solver_options(std::size_t n_species, double T0, const IntegratorConfig& cfg) {
  BdfOptions o;
  o.rtol = cfg.rtol;
  o.atol.assign(n_species + 1, cfg.atol);
  o.atol[n_species] = cfg.atol_T_rel * T0;
  o.initial_step = cfg.initial_dt;
  o.max_steps = cfg.max_steps;
  return o;
}

using StopPredicate = std::function<bool(std::span<const double> y)>;

// Integrates the reactor between two times. Every accepted step is reported
// to `record`; `stop` (optional) ends the run early after a step.
struct Segment {
  IntegrationStatus status = IntegrationStatus::success;
  std::string message;
  BdfStats stats;
  std::vector<double> y_end;
  double t_end = 0.0;
};

class ReactorRun {
 public:
  ReactorRun(const ReactorSystem& sys, const IntegratorConfig& cfg, double T0, std::pair<double, double> range)
      : sys_(sys), cfg_(cfg), T0_(T0), range_(range), ws_(sys.model().make_workspace()) {}

  template <typename Record>
  Segment run(double t0, std::span<const double> y0, double t1, Record&& record, const StopPredicate& stop) {
    const std::size_t n = sys_.model().n_species();
    const auto opts = solver_options(n, T0_, cfg_);
    BdfSolver solver(
        sys_.size(), [this](double, std::span<const double> y, std::span<double> f) { sys_.rhs(y, f, ws_); }, opts,
        [this](double, std::span<const double> y, std::span<const double> f, Eigen::Ref<Eigen::MatrixXd> J) {
          sys_.jacobian(y, f, J, ws_, cfg_.atol_T_rel * T0_ / cfg_.rtol);
        });
    solver.reset(t0, y0);
    Segment seg;
    while (solver.t() < t1) {
      const auto st = solver.step(t1);
      if (st != BdfStatus::ok) {
        seg.status = st == BdfStatus::nonfinite ? IntegrationStatus::nonfinite : IntegrationStatus::step_failure;
        seg.message = std::string("integrator: ") + to_string(st) + " at t=" + format_double(solver.t());
        break;
      }
      const auto y = solver.y();
      const double T = y[n];
      if (!std::isfinite(T)) {
        seg.status = IntegrationStatus::nonfinite;
        seg.message = "non-finite temperature at t=" + format_double(solver.t());
        break;
      }
      if (T < range_.first || T > range_.second) {
        seg.status = IntegrationStatus::out_of_thermo_range;
        seg.message = "temperature " + format_double(T) + " K left the thermo range at t=" + format_double(solver.t());
        break;
      }
      record(solver.t(), y);
      if (stop && stop(y)) break;
    }
    seg.stats = solver.stats();
    seg.y_end.assign(solver.y().begin(), solver.y().end());
    seg.t_end = solver.t();
    return seg;
  }

  double dTdt(std::span<const double> y) {
    double f[65];
    sys_.rhs(y, {f, sys_.size()}, ws_);
    return f[sys_.model().n_species()];
  }

 private:
  const ReactorSystem& sys_;
  const IntegratorConfig& cfg_;
  double T0_;
  std::pair<double, double> range_;
  KineticsModel::Workspace ws_;
};

ReactorTrajectory integrate_impl(const Mechanism& mech, const ReactorCase& rc, const IntegratorConfig& cfg,
                                 const StopPredicate& stop) {
  validate_case(mech, rc);
  validate_config(cfg);
  const auto setup = initial_state(mech, rc);
  const ReactorSystem sys(mech, rc.mode, setup.p_or_rho);
  ReactorRun run(sys, cfg, rc.T0, mech.thermo_range());

  ReactorTrajectory traj;
  traj.mode = rc.mode;
  for (const auto& s : mech.species) {
    traj.species.push_back(s.name);
    traj.molar_masses.push_back(s.molar_mass);
  }
  if (rc.mode == ReactorMode::constant_volume) traj.density = setup.p_or_rho;
  const std::size_t n = mech.species.size();
  auto record = [&](double t, std::span<const double> y) {
    traj.times.push_back(t);
    traj.temperature.push_back(y[n]);
    traj.pressure.push_back(sys.pressure(y));
    traj.dTdt.push_back(run.dTdt(y));
    traj.mass_fractions.emplace_back(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(n));
  };
  record(0.0, setup.y0);
  if (rc.T0 < mech.thermo_range().first || rc.T0 > mech.thermo_range().second) {
    traj.status = IntegrationStatus::out_of_thermo_range;
    traj.message = "initial temperature outside thermo range";
    return traj;
  }
  const auto seg = run.run(0.0, setup.y0, rc.t_end, record, stop);
  traj.status = seg.status;
  traj.message = seg.message;
  traj.stats = seg.stats;
  return traj;
}

double quantity_of(const ReactorTrajectory& traj, std::size_t i, const std::string& q) {
  if (q == "T") return traj.temperature[i];
  if (q == "p") return traj.pressure[i] / kOneAtmosphere;
  const std::string name = q.substr(2);
  auto it = std::find(traj.species.begin(), traj.species.end(), name);
  if (it == traj.species.end()) throw std::invalid_argument("unknown species in quantity '" + q + "'");
  const auto k = static_cast<std::size_t>(it - traj.species.begin());
  if (q[0] == 'Y') return traj.mass_fractions[i][k];
  return traj.mole_fractions(i)[k];
}

std::size_t species_slot(const ReactorTrajectory& traj, const std::string& name) {
  auto it = std::find(traj.species.begin(), traj.species.end(), name);
  if (it == traj.species.end()) throw std::invalid_argument("unknown species " + name);
  return static_cast<std::size_t>(it - traj.species.begin());
}

// Signed event function: crossing when g >= 0.
std::optional<std::function<double(double T, std::span<const double> Y)>> event_function(
    const ReactorTrajectory& traj, const ObservableSpec& spec) {
  if (const auto* th = std::get_if<IgnitionThreshold>(&spec)) {
    const double thr = th->t_ign;
    return [thr](double T, std::span<const double>) { return T - thr; };
  }
  if (const auto* ff = std::get_if<FuelFraction>(&spec)) {
    const std::size_t k = species_slot(traj, ff->species);
    const double target = ff->fraction * traj.mass_fractions.front()[k];
    return [k, target](double, std::span<const double> Y) { return target - Y[k]; };
  }
  return std::nullopt;
}

double vertex_time(const ReactorTrajectory& traj, std::size_t i) {
  if (i == 0 || i + 1 >= traj.size()) return traj.times[i];
  const double t0 = traj.times[i - 1], t1 = traj.times[i], t2 = traj.times[i + 1];
  const double f0 = traj.dTdt[i - 1], f1 = traj.dTdt[i], f2 = traj.dTdt[i + 1];
  const double d1 = (f1 - f0) / (t1 - t0);
  const double d2 = (f2 - f1) / (t2 - t1);
  const double a = (d2 - d1) / (t2 - t0);
  if (!(a < 0.0)) return t1;
  const double tv = 0.5 * (t0 + t1) - d1 / (2.0 * a);
  return std::clamp(tv, t0, t2);
}

ObservableResult failure_of(const ReactorTrajectory& traj) {
  return {ObservableStatus::failure, 0.0, traj.message.empty() ? "integration failed" : traj.message};
}

} // namespace

ReactorTrajectory integrate(const Mechanism& mech, const ReactorCase& rc, const IntegratorConfig& cfg) {
  return integrate_impl(mech, rc, cfg, {});
}

ObservableResult extract_observable(const ReactorTrajectory& traj, const ObservableSpec& spec) {
  if (traj.times.empty()) return failure_of(traj);
  if (const auto* st = std::get_if<StateAtTime>(&spec)) {
    if (st->time > traj.times.back()) {
      return traj.ok() ? ObservableResult{ObservableStatus::no_event, 0.0, "time beyond end of trajectory"}
                       : failure_of(traj);
    }
    std::size_t i = 1;
    while (i < traj.size() && traj.times[i] < st->time) ++i;
    if (i >= traj.size()) i = traj.size() - 1;
    if (traj.times[i] == st->time || i == 0) return {ObservableStatus::ok, quantity_of(traj, i, st->quantity), {}};
    const double w = (st->time - traj.times[i - 1]) / (traj.times[i] - traj.times[i - 1]);
    const double a = quantity_of(traj, i - 1, st->quantity);
    const double b = quantity_of(traj, i, st->quantity);
    return {ObservableStatus::ok, a + w * (b - a), {}};
  }
  if (std::holds_alternative<MaxHeatingRate>(spec)) {
    if (!traj.ok()) return failure_of(traj);
    auto it = std::max_element(traj.dTdt.begin(), traj.dTdt.end());
    const auto i = static_cast<std::size_t>(it - traj.dTdt.begin());
    if (!(*it > 0.0)) return {ObservableStatus::no_event, 0.0, "temperature never rises"};
    return {ObservableStatus::ok, vertex_time(traj, i), {}};
  }
  const auto g = *event_function(traj, spec);
  double g_prev = 0.0;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const double gi = g(traj.temperature[i], traj.mass_fractions[i]);
    if (gi >= 0.0) {
      if (i == 0) return {ObservableStatus::ok, traj.times[0], {}};
      const double w = -g_prev / (gi - g_prev);
      return {ObservableStatus::ok, traj.times[i - 1] + w * (traj.times[i] - traj.times[i - 1]), {}};
    }
    g_prev = gi;
  }
  if (!traj.ok()) return failure_of(traj);
  return {ObservableStatus::no_event, 0.0, "event not reached before t_end"};
}

ObservableResult measure(const Mechanism& mech, const ReactorCase& rc, const IntegratorConfig& cfg) {
  if (const auto* st = std::get_if<StateAtTime>(&rc.observable)) {
    if (st->time > rc.t_end) return {ObservableStatus::no_event, 0.0, "requested time beyond t_end"};
    ReactorCase shortened = rc;
    shortened.t_end = st->time;
    const auto traj = integrate(mech, shortened, cfg);
    if (!traj.ok()) return failure_of(traj);
    return {ObservableStatus::ok, quantity_of(traj, traj.size() - 1, st->quantity), {}};
  }
  if (std::holds_alternative<MaxHeatingRate>(rc.observable)) {
    return extract_observable(integrate(mech, rc, cfg), rc.observable);
  }

  // Crossing events: integrate until the event is bracketed, then bisect the
  // bracketing step by re-integrating from its left end.
  validate_case(mech, rc);
  ReactorTrajectory probe;
  for (const auto& s : mech.species) probe.species.push_back(s.name);
  probe.mass_fractions.push_back(initial_state(mech, rc).y0);
  const auto g = *event_function(probe, rc.observable);
  const std::size_t n = mech.species.size();
  auto crossed = [&](std::span<const double> y) { return g(y[n], y.first(n)) >= 0.0; };

  const auto traj = integrate_impl(mech, rc, cfg, crossed);
  const auto coarse = extract_observable(traj, rc.observable);
  if (!coarse.ok()) return coarse;

  std::size_t hi = 0;
  while (hi < traj.size() && g(traj.temperature[hi], traj.mass_fractions[hi]) < 0.0) ++hi;
  if (hi == 0) return coarse;

  const auto setup = initial_state(mech, rc);
  const ReactorSystem sys(mech, rc.mode, setup.p_or_rho);
  ReactorRun run(sys, cfg, rc.T0, mech.thermo_range());

  auto state_at = [&](std::size_t i) {
    std::vector<double> y(traj.mass_fractions[i]);
    y.push_back(traj.temperature[i]);
    return y;
  };
  double t_lo = traj.times[hi - 1];
  double t_hi = traj.times[hi];
  std::vector<double> y_lo = state_at(hi - 1);
  std::vector<double> y_hi = state_at(hi);
  for (int it = 0; it < cfg.max_bisections && (t_hi - t_lo) > cfg.event_rtol * t_hi; ++it) {
    const double t_mid = 0.5 * (t_lo + t_hi);
    if (!(t_mid > t_lo && t_mid < t_hi)) break;
    const auto seg = run.run(t_lo, y_lo, t_mid, [](double, std::span<const double>) {}, {});
    if (seg.status != IntegrationStatus::success || seg.t_end != t_mid) break;
    if (crossed(seg.y_end)) {
      t_hi = t_mid;
      y_hi = seg.y_end;
    } else {
      t_lo = t_mid;
      y_lo = seg.y_end;
    }
  }
  const double g_lo = g(y_lo[n], std::span<const double>(y_lo).first(n));
  const double g_hi = g(y_hi[n], std::span<const double>(y_hi).first(n));
  const double w = g_hi > g_lo ? -g_lo / (g_hi - g_lo) : 1.0;
  return {ObservableStatus::ok, t_lo + w * (t_hi - t_lo), {}};
}

} // namespace kcal
