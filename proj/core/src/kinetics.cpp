#include "kcal/kinetics.hpp"

#include <algorithm>
#include <cmath>

namespace kcal {

double GasState::total_concentration() const {
  double sum = 0.0;
  for (double c : conc) sum += c;
  return sum;
}

double GasState::pressure() const { return total_concentration() * kGasConstantCgs * T; }

GasState GasState::from_mole_fractions(const Mechanism& mech, double T, double pressure,
                                       const std::map<std::string, double>& X) {
  GasState s;
  s.T = T;
  s.conc.assign(mech.species.size(), 0.0);
  double sum = 0.0;
  for (const auto& [name, x] : X) {
    auto idx = mech.species_index(name);
    if (!idx) throw MechanismError("unknown species '" + name + "' in composition");
    if (x < 0.0) throw MechanismError("negative mole fraction for " + name);
    s.conc[*idx] += x;
    sum += x;
  }
  if (!(sum > 0.0)) throw MechanismError("composition has no positive mole fraction");
  const double total = pressure / (kGasConstantCgs * T);
  for (double& c : s.conc) c = c / sum * total;
  return s;
}

double arrhenius(const Arrhenius& k, double T) {
  return k.A * std::pow(T, k.beta) * std::exp(-k.Ea / (kGasConstantCal * T));
}

double third_body_conc(const Mechanism& mech, const GasState& state, const Efficiencies& eff) {
  double m = 0.0;
  for (std::size_t i = 0; i < mech.species.size(); ++i) {
    auto it = eff.find(mech.species[i].name);
    const double e = it == eff.end() ? 1.0 : it->second;
    m += e * std::max(state.conc[i], 0.0);
  }
  return m;
}

double troe_broadening(double fc, double Pr) {
  if (fc == 1.0) return 1.0;
  const double log_fc = std::log10(fc);
  const double c = -0.4 - 0.67 * log_fc;
  const double n = 0.75 - 1.27 * log_fc;
  const double x = std::log10(Pr) + c;
  const double f = x / (n - 0.14 * x);
  return std::pow(10.0, log_fc / (1.0 + f * f));
}

double troe_falloff(double k_high, double k_low, double fc, double M_eff) {
  const double Pr = k_low * M_eff / k_high;
  if (!(Pr > 0.0)) return 0.0;
  if (std::isinf(Pr)) return k_high * troe_broadening(fc, std::numeric_limits<double>::max());
  return k_high * (Pr / (1.0 + Pr)) * troe_broadening(fc, Pr);
}

double equilibrium_constant(const Mechanism& mech, const Reaction& r, double T) {
  double dg = 0.0; // sum nu g/RT
  int dnu = 0;
  auto add = [&](const Stoichiometry& side, int sign) {
    for (const auto& [name, nu] : side) {
      const auto& sp = mech.species[*mech.species_index(name)];
      const auto v = thermo_props(sp.thermo, T);
      dg += sign * nu * (v.h_RT - v.s_R);
      dnu += sign * nu;
    }
  };
  add(r.reactants, -1);
  add(r.products, +1);
  const double kp = std::exp(-dg);
  return dnu == 0 ? kp : kp * std::pow(kOneAtmosphere / (kGasConstantCgs * T), dnu);
}

namespace {

double forward_sum(const Reaction& r, double T) {
  double k = 0.0;
  for (std::size_t i = 0; i < r.arrhenius_count(); ++i) k += arrhenius(r.arrhenius(i), T);
  return k;
}

double mass_action(const Mechanism& mech, const Stoichiometry& side, const std::vector<double>& conc) {
  double p = 1.0;
  for (const auto& [name, nu] : side) p *= std::pow(conc[*mech.species_index(name)], nu);
  return p;
}

} // namespace

RateEvaluation production_rates(const Mechanism& mech, const GasState& state) {
  RateEvaluation out;
  const std::size_t nr = mech.reactions.size();
  out.kf.resize(nr);
  out.kr.resize(nr);
  out.q.resize(nr);
  out.wdot.assign(mech.species.size(), 0.0);

  GasState clipped = state;
  for (double& c : clipped.conc) {
    if (c < 0.0) {
      c = 0.0;
      out.clipped = true;
    }
  }

  for (std::size_t j = 0; j < nr; ++j) {
    const Reaction& r = mech.reactions[j];
    double kf = forward_sum(r, state.T);
    double collider = 1.0;
    if (const auto* tb = std::get_if<ThirdBody>(&r.rate)) {
      collider = third_body_conc(mech, clipped, tb->efficiencies);
    } else if (const auto* fo = std::get_if<Falloff>(&r.rate)) {
      const double M = third_body_conc(mech, clipped, fo->efficiencies);
      kf = troe_falloff(kf, arrhenius(fo->k_low, state.T), fo->troe_fc, M);
    }
    const double kr = r.reversible ? kf / equilibrium_constant(mech, r, state.T) : 0.0;
    out.kf[j] = kf;
    out.kr[j] = kr;
    out.q[j] = collider * (kf * mass_action(mech, r.reactants, clipped.conc) -
                           kr * mass_action(mech, r.products, clipped.conc));
    const auto nu = net_stoichiometry(mech, r);
    for (std::size_t i = 0; i < nu.size(); ++i) out.wdot[i] += nu[i] * out.q[j];
  }
  return out;
}

// ---------------------------------------------------------------------------
// KineticsModel

KineticsModel::KineticsModel(const Mechanism& mech) {
  const std::size_t ns = mech.species.size();
  for (const auto& s : mech.species) {
    thermo_.push_back(s.thermo);
    molar_mass_.push_back(s.molar_mass);
  }
  const auto em = element_matrix(mech);
  elements_.assign(em.elements.size(), std::vector<int>(ns, 0));
  for (std::size_t e = 0; e < em.elements.size(); ++e) {
    for (std::size_t k = 0; k < ns; ++k) elements_[e][k] = em(e, k);
  }

  auto terms = [&](const Stoichiometry& side) {
    std::vector<Term> out;
    for (const auto& [name, nu] : side) {
      auto idx = mech.species_index(name);
      if (!idx) throw MechanismError("unknown species '" + name + "'");
      out.push_back({*idx, nu});
    }
    return out;
  };
  auto dense = [&](const Efficiencies& eff) {
    std::vector<double> out(ns, 1.0);
    for (const auto& [name, v] : eff) {
      auto idx = mech.species_index(name);
      if (!idx) throw MechanismError("unknown species '" + name + "' in efficiencies");
      out[*idx] = v;
    }
    return out;
  };

  for (const auto& r : mech.reactions) {
    CompiledReaction c;
    c.reactants = terms(r.reactants);
    c.products = terms(r.products);
    c.reversible = r.reversible;
    for (const auto& t : c.reactants) c.delta_nu -= t.nu;
    for (const auto& t : c.products) c.delta_nu += t.nu;
    for (std::size_t i = 0; i < r.arrhenius_count(); ++i) c.forward.push_back(r.arrhenius(i));
    if (const auto* tb = std::get_if<ThirdBody>(&r.rate)) {
      c.kind = Kind::third_body;
      c.efficiency = dense(tb->efficiencies);
    } else if (const auto* fo = std::get_if<Falloff>(&r.rate)) {
      c.kind = Kind::falloff;
      c.efficiency = dense(fo->efficiencies);
      c.low = fo->k_low;
      c.fc = fo->troe_fc;
    } else {
      c.kind = Kind::elementary;
    }
    reactions_.push_back(std::move(c));
  }
}

KineticsModel::Workspace KineticsModel::make_workspace() const {
  Workspace ws;
  ws.cp_R.resize(n_species());
  ws.h_RT.resize(n_species());
  ws.g_RT.resize(n_species());
  ws.k_fwd.resize(n_reactions());
  ws.k_low.resize(n_reactions());
  ws.inv_kc.resize(n_reactions());
  ws.q.resize(n_reactions());
  return ws;
}

void KineticsModel::update_temperature(double T, Workspace& ws) const {
  ws.T = T;
  for (std::size_t i = 0; i < thermo_.size(); ++i) {
    const auto v = evaluate_nasa7(thermo_[i], T);
    ws.cp_R[i] = v.cp_R;
    ws.h_RT[i] = v.h_RT;
    ws.g_RT[i] = v.h_RT - v.s_R;
  }
  const double logT = std::log(T);
  const double inv_RcT = 1.0 / (kGasConstantCal * T);
  const double log_rt_over_p = std::log(kGasConstantCgs * T / kOneAtmosphere);
  for (std::size_t j = 0; j < reactions_.size(); ++j) {
    const auto& r = reactions_[j];
    double k = 0.0;
    for (const auto& a : r.forward) k += a.A * std::exp(a.beta * logT - a.Ea * inv_RcT);
    ws.k_fwd[j] = k;
    if (r.kind == Kind::falloff) ws.k_low[j] = r.low.A * std::exp(r.low.beta * logT - r.low.Ea * inv_RcT);
    if (r.reversible) {
      double dg = 0.0;
      for (const auto& t : r.reactants) dg -= t.nu * ws.g_RT[t.species];
      for (const auto& t : r.products) dg += t.nu * ws.g_RT[t.species];
      // 1/Kc = exp(dg) (RT/p_atm)^dnu
      ws.inv_kc[j] = std::exp(dg + r.delta_nu * log_rt_over_p);
    } else {
      ws.inv_kc[j] = 0.0;
    }
  }
}

namespace {

inline double ipow(double c, int nu) {
  double p = c;
  for (int i = 1; i < nu; ++i) p *= c;
  return p;
}

} // namespace

bool KineticsModel::production_rates(Workspace& ws, std::span<const double> conc, std::span<double> wdot) const {
  bool clipped = false;
  const std::size_t ns = n_species();
  // Small fixed-size systems: a stack copy avoids a per-call allocation.
  double cbuf[64];
  std::vector<double> heap;
  double* c = cbuf;
  if (ns > 64) {
    heap.resize(ns);
    c = heap.data();
  }
  for (std::size_t i = 0; i < ns; ++i) {
    c[i] = conc[i];
    if (c[i] < 0.0) {
      c[i] = 0.0;
      clipped = true;
    }
    wdot[i] = 0.0;
  }

  for (std::size_t j = 0; j < reactions_.size(); ++j) {
    const auto& r = reactions_[j];
    double kf = ws.k_fwd[j];
    double collider = 1.0;
    if (r.kind != Kind::elementary) {
      double m = 0.0;
      for (std::size_t i = 0; i < ns; ++i) m += r.efficiency[i] * c[i];
      if (r.kind == Kind::third_body) {
        collider = m;
      } else {
        kf = troe_falloff(kf, ws.k_low[j], r.fc, m);
      }
    }
    double fwd = kf;
    for (const auto& t : r.reactants) fwd *= ipow(c[t.species], t.nu);
    double rev = 0.0;
    if (r.reversible) {
      rev = kf * ws.inv_kc[j];
      for (const auto& t : r.products) rev *= ipow(c[t.species], t.nu);
    }
    const double q = collider * (fwd - rev);
    ws.q[j] = q;
    for (const auto& t : r.reactants) wdot[t.species] -= t.nu * q;
    for (const auto& t : r.products) wdot[t.species] += t.nu * q;
  }
  return clipped;
}

} // namespace kcal
