#include "kcal/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "kcal/sampler.hpp"
#include "text_util.hpp"

namespace kcal {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double number(std::string_view key, std::string_view value) {
  auto v = parse_double(value);
  if (!v) throw ConfigError("bad number for '" + std::string(key) + "': '" + std::string(value) + "'");
  return *v;
}

using KeyValues = std::map<std::string, std::string, std::less<>>;

KeyValues key_values(const std::vector<std::string_view>& tokens, std::size_t first) {
  KeyValues kv;
  for (std::size_t i = first; i < tokens.size(); ++i) {
    const auto eq = tokens[i].find('=');
    if (eq == std::string_view::npos || eq == 0) {
      throw ConfigError("expected key=value, got '" + std::string(tokens[i]) + "'");
    }
    std::string key(tokens[i].substr(0, eq));
    if (kv.count(key)) throw ConfigError("duplicate key '" + key + "'");
    kv.emplace(std::move(key), std::string(tokens[i].substr(eq + 1)));
  }
  return kv;
}

std::optional<std::string> take(KeyValues& kv, std::string_view key) {
  auto it = kv.find(key);
  if (it == kv.end()) return std::nullopt;
  std::string v = it->second;
  kv.erase(it);
  return v;
}

std::optional<double> take_number(KeyValues& kv, std::string_view key) {
  auto v = take(kv, key);
  if (!v) return std::nullopt;
  return number(key, *v);
}

double require_number(KeyValues& kv, std::string_view key, const std::string& where) {
  auto v = take_number(kv, key);
  if (!v) throw ConfigError(where + ": missing '" + std::string(key) + "'");
  return *v;
}

void reject_leftovers(const KeyValues& kv, const std::string& where) {
  if (!kv.empty()) throw ConfigError(where + ": unknown key '" + kv.begin()->first + "'");
}

Arrhenius& arrhenius_slot(Reaction& r, const ParameterSlot& s) {
  if (s.index >= r.arrhenius_count()) {
    throw ConfigError(s.to_string() + ": reaction has " + std::to_string(r.arrhenius_count()) + " Arrhenius entries");
  }
  return r.arrhenius(s.index);
}

double& slot_ref(Mechanism& mech, const ParameterSlot& s) {
  if (!mech.reaction_index(s.reaction)) throw ConfigError("unknown reaction '" + s.reaction + "'");
  Reaction& r = mech.reaction(s.reaction);
  switch (s.field) {
    case SlotField::pre_exponential:
      return arrhenius_slot(r, s).A;
    case SlotField::low_pressure_A: {
      auto* fo = std::get_if<Falloff>(&r.rate);
      if (!fo) throw ConfigError(s.to_string() + ": reaction is not a falloff reaction");
      return fo->k_low.A;
    }
    case SlotField::efficiency: {
      auto* eff = r.efficiencies();
      if (!eff) throw ConfigError(s.to_string() + ": reaction has no third-body efficiencies");
      if (!mech.species_index(s.species)) throw ConfigError(s.to_string() + ": unknown species");
      // Unlisted species carry the default efficiency 1.
      return eff->try_emplace(s.species, 1.0).first->second;
    }
  }
  throw ConfigError("bad slot");
}

} // namespace

// ---------------------------------------------------------------------------
// Slots and maps

std::string ParameterSlot::to_string() const {
  switch (field) {
    case SlotField::pre_exponential:
      return reaction + ".A" + (index ? "[" + std::to_string(index) + "]" : std::string());
    case SlotField::low_pressure_A:
      return reaction + ".Alow";
    case SlotField::efficiency:
      return reaction + ".eff(" + species + ")";
  }
  return reaction;
}

ParameterSlot ParameterSlot::parse(std::string_view text) {
  const auto dot = text.rfind('.');
  if (dot == std::string_view::npos || dot == 0) throw ConfigError("bad parameter slot '" + std::string(text) + "'");
  ParameterSlot s;
  s.reaction = std::string(text.substr(0, dot));
  const auto field = text.substr(dot + 1);
  if (field == "A") {
    s.field = SlotField::pre_exponential;
  } else if (field == "Alow") {
    s.field = SlotField::low_pressure_A;
  } else if (field.size() > 3 && field.substr(0, 2) == "A[" && field.back() == ']') {
    s.field = SlotField::pre_exponential;
    const auto digits = field.substr(2, field.size() - 3);
    std::size_t idx = 0;
    for (char c : digits) {
      if (c < '0' || c > '9') throw ConfigError("bad Arrhenius index in '" + std::string(text) + "'");
      idx = idx * 10 + static_cast<std::size_t>(c - '0');
    }
    if (digits.empty()) throw ConfigError("bad Arrhenius index in '" + std::string(text) + "'");
    s.index = idx;
  } else if (field.size() > 5 && field.substr(0, 4) == "eff(" && field.back() == ')') {
    s.field = SlotField::efficiency;
    s.species = std::string(field.substr(4, field.size() - 5));
  } else {
    throw ConfigError("unknown parameter field '" + std::string(field) + "' in '" + std::string(text) + "'");
  }
  return s;
}

double ParameterSlot::read(const Mechanism& mech) const {
  Mechanism& m = const_cast<Mechanism&>(mech);
  if (field == SlotField::efficiency) {
    if (!mech.reaction_index(reaction)) throw ConfigError("unknown reaction '" + reaction + "'");
    const auto* eff = mech.reaction(reaction).efficiencies();
    if (!eff) throw ConfigError(to_string() + ": reaction has no third-body efficiencies");
    if (!mech.species_index(species)) throw ConfigError(to_string() + ": unknown species");
    auto it = eff->find(species);
    return it == eff->end() ? 1.0 : it->second;
  }
  return slot_ref(m, *this);
}

void ParameterSlot::write(Mechanism& mech, double value) const {
  if (field == SlotField::efficiency && value == 1.0 && read(mech) == 1.0) return;
  slot_ref(mech, *this) = value;
}

std::vector<std::string> ActiveParameterMap::names() const {
  std::vector<std::string> out;
  for (const auto& p : params) out.push_back(p.name);
  return out;
}

std::vector<double> ActiveParameterMap::read(const Mechanism& mech) const {
  std::vector<double> out;
  for (const auto& p : params) out.push_back(p.slots.front().read(mech));
  return out;
}

void ActiveParameterMap::check(const Mechanism& mech) const {
  std::set<std::string> seen;
  for (const auto& p : params) {
    if (p.slots.empty()) throw ConfigError("parameter '" + p.name + "' has no slots");
    for (const auto& s : p.slots) {
      s.read(mech);
      if (!seen.insert(s.to_string()).second) throw ConfigError("slot " + s.to_string() + " is mapped twice");
    }
  }
}

void validate_prior(const PriorSpec& prior) {
  for (std::size_t i = 0; i < prior.size(); ++i) {
    const auto& e = prior[i];
    const std::string where = "prior entry " + std::to_string(i + 1);
    if (!(e.lower < e.upper)) throw ConfigError(where + ": lower must be below upper");
    if (!(e.sigma > 0.0) || !std::isfinite(e.sigma)) throw ConfigError(where + ": sigma must be positive");
    if (!std::isfinite(e.mean)) throw ConfigError(where + ": mean must be finite");
  }
}

std::vector<std::string> prior_warnings(const PriorSpec& prior, const std::vector<std::string>& names) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < prior.size(); ++i) {
    const auto& e = prior[i];
    if (e.mean < e.lower || e.mean > e.upper) {
      out.push_back((i < names.size() ? names[i] : std::to_string(i)) + ": prior mean " + format_double(e.mean) +
                    " lies outside [" + format_double(e.lower) + ", " + format_double(e.upper) + "]");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Case lines

CaseLine parse_case_line(std::string_view line) {
  const auto tokens = split_ws(line);
  if (tokens.empty()) throw ConfigError("empty case line");
  CaseLine c;
  c.label = std::string(tokens[0]);
  if (c.label.find('=') != std::string::npos) throw ConfigError("case line must start with a label");
  const std::string where = "case '" + c.label + "'";
  auto kv = key_values(tokens, 1);

  const std::string kind = take(kv, "kind").value_or("ignition_delay");
  const std::string mode = take(kv, "mode").value_or("cp");
  if (mode == "cp") c.rc.mode = ReactorMode::constant_pressure;
  else if (mode == "cv") c.rc.mode = ReactorMode::constant_volume;
  else throw ConfigError(where + ": mode must be cp or cv");

  c.rc.T0 = require_number(kv, "T0", where);
  c.rc.p0 = require_number(kv, "p0", where);
  c.rc.t_end = require_number(kv, "t_end", where);
  const auto X = take(kv, "X");
  if (!X) throw ConfigError(where + ": missing 'X'");
  for (auto part : split(*X, ',')) {
    const auto colon = part.find(':');
    if (colon == std::string_view::npos) throw ConfigError(where + ": bad composition entry '" + std::string(part) + "'");
    const std::string sp(trim(part.substr(0, colon)));
    if (c.rc.X.count(sp)) throw ConfigError(where + ": species " + sp + " listed twice");
    c.rc.X[sp] = number("X", part.substr(colon + 1));
  }

  if (kind == "ignition_delay") {
    c.rc.observable = IgnitionThreshold{take_number(kv, "T_ign").value_or(c.rc.T0 + 400.0)};
  } else if (kind == "max_dTdt") {
    c.rc.observable = MaxHeatingRate{};
  } else if (kind == "fuel_fraction") {
    FuelFraction f;
    auto sp = take(kv, "species");
    if (!sp) throw ConfigError(where + ": fuel_fraction needs species=");
    f.species = *sp;
    f.fraction = take_number(kv, "fraction").value_or(0.5);
    c.rc.observable = f;
  } else if (kind == "state_at_time") {
    StateAtTime s;
    s.time = require_number(kv, "t", where);
    auto q = take(kv, "quantity");
    if (!q) throw ConfigError(where + ": state_at_time needs quantity=");
    s.quantity = *q;
    c.rc.observable = s;
  } else {
    throw ConfigError(where + ": unknown kind '" + kind + "'");
  }

  c.d = take_number(kv, "d");
  c.sigma = take_number(kv, "sigma");
  c.sigma_rel = take_number(kv, "sigma_rel");
  if (c.sigma && c.sigma_rel) throw ConfigError(where + ": give sigma or sigma_rel, not both");
  if (c.sigma && !(*c.sigma > 0.0)) throw ConfigError(where + ": sigma must be positive");
  if (c.sigma_rel && !(*c.sigma_rel >= 0.0)) throw ConfigError(where + ": sigma_rel must be non-negative");
  reject_leftovers(kv, where);
  return c;
}

std::string format_case(const std::string& label, const ReactorCase& rc) {
  std::ostringstream os;
  os << label;
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, IgnitionThreshold>) os << " kind=ignition_delay";
        else if constexpr (std::is_same_v<T, MaxHeatingRate>) os << " kind=max_dTdt";
        else if constexpr (std::is_same_v<T, FuelFraction>) os << " kind=fuel_fraction";
        else os << " kind=state_at_time";
      },
      rc.observable);
  os << " mode=" << (rc.mode == ReactorMode::constant_pressure ? "cp" : "cv");
  os << " T0=" << format_double(rc.T0) << " p0=" << format_double(rc.p0);
  os << " X=";
  bool first = true;
  for (const auto& [sp, x] : rc.X) {
    os << (first ? "" : ",") << sp << ':' << format_double(x);
    first = false;
  }
  os << " t_end=" << format_double(rc.t_end);
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, IgnitionThreshold>) {
          os << " T_ign=" << format_double(s.t_ign);
        } else if constexpr (std::is_same_v<T, FuelFraction>) {
          os << " species=" << s.species << " fraction=" << format_double(s.fraction);
        } else if constexpr (std::is_same_v<T, StateAtTime>) {
          os << " t=" << format_double(s.time) << " quantity=" << s.quantity;
        }
      },
      rc.observable);
  return os.str();
}

std::string format_target(const ExperimentTarget& t) {
  return format_case(t.label, t.rc) + " d=" + format_double(t.d) + " sigma=" + format_double(t.sigma);
}

// ---------------------------------------------------------------------------
// Config files

ProblemConfig parse_problem_config(std::string_view text) {
  ProblemConfig cfg;
  std::string section;
  std::map<std::string, std::size_t> tie_index;
  std::set<std::string> labels;
  int line_no = 0;
  for (auto raw : split_lines(text)) {
    ++line_no;
    const auto line = trim(strip_comment(raw));
    if (line.empty()) continue;
    auto fail = [&](const std::string& msg) -> ConfigError {
      return ConfigError("line " + std::to_string(line_no) + ": " + msg);
    };
    if (line.front() == '[') {
      if (line.back() != ']') throw fail("unterminated section header");
      section = std::string(line.substr(1, line.size() - 2));
      if (section != "active" && section != "targets" && section != "cases" && section != "integrator") {
        throw fail("unknown section [" + section + "]");
      }
      if (section == "targets") cfg.has_targets = true;
      continue;
    }
    try {
      if (section == "active") {
        const auto tokens = split_ws(line);
        std::string_view head = tokens[0];
        std::optional<std::string> tie;
        if (auto pos = head.find(":tie="); pos != std::string_view::npos) {
          tie = std::string(head.substr(pos + 5));
          if (tie->empty()) throw ConfigError("empty tie group");
          head = head.substr(0, pos);
        }
        const auto slot = ParameterSlot::parse(head);
        auto kv = key_values(tokens, 1);
        PriorEntry e;
        e.mean = require_number(kv, "mean", slot.to_string());
        e.sigma = take_number(kv, "sigma").value_or(e.mean);
        e.lower = require_number(kv, "lower", slot.to_string());
        e.upper = require_number(kv, "upper", slot.to_string());
        reject_leftovers(kv, slot.to_string());
        if (tie) {
          auto it = tie_index.find(*tie);
          if (it != tie_index.end()) {
            auto& p = cfg.map.params[it->second];
            if (!(cfg.prior[it->second] == e)) throw ConfigError("tie group '" + *tie + "' has conflicting priors");
            p.slots.push_back(slot);
            p.name += "+" + slot.to_string();
            continue;
          }
          tie_index[*tie] = cfg.map.params.size();
        }
        cfg.map.params.push_back({slot.to_string(), {slot}, tie});
        cfg.prior.push_back(e);
      } else if (section == "targets" || section == "cases") {
        auto c = parse_case_line(line);
        if (!labels.insert(c.label).second) throw ConfigError("duplicate case label '" + c.label + "'");
        if (section == "targets") {
          if (!c.d) throw ConfigError("target '" + c.label + "' needs d=");
          if (!c.sigma && !c.sigma_rel) throw ConfigError("target '" + c.label + "' needs sigma= or sigma_rel=");
        }
        cfg.cases.push_back(std::move(c));
      } else if (section == "integrator") {
        auto kv = key_values(split_ws(line), 0);
        auto& ic = cfg.integrator;
        if (auto v = take_number(kv, "rtol")) ic.rtol = *v;
        if (auto v = take_number(kv, "atol")) ic.atol = *v;
        if (auto v = take_number(kv, "atol_T_rel")) ic.atol_T_rel = *v;
        if (auto v = take_number(kv, "initial_dt")) ic.initial_dt = *v;
        if (auto v = take_number(kv, "event_rtol")) ic.event_rtol = *v;
        if (auto v = take_number(kv, "max_steps")) {
          if (!(*v >= 1.0) || *v != std::floor(*v)) throw ConfigError("max_steps must be a positive integer");
          ic.max_steps = static_cast<std::size_t>(*v);
        }
        if (auto v = take_number(kv, "max_bisections")) ic.max_bisections = static_cast<int>(*v);
        reject_leftovers(kv, "[integrator]");
      } else {
        throw ConfigError("content outside of any section");
      }
    } catch (const ConfigError& e) {
      throw fail(e.what());
    } catch (const std::invalid_argument& e) {
      throw fail(e.what());
    }
  }
  validate_prior(cfg.prior);
  try {
    validate_config(cfg.integrator);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("[integrator]: ") + e.what());
  }
  return cfg;
}

ProblemConfig load_problem_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  try {
    return parse_problem_config(text);
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string serialize_active(const ActiveParameterMap& map, const PriorSpec& prior) {
  std::ostringstream os;
  os << "[active]\n";
  for (std::size_t i = 0; i < map.params.size(); ++i) {
    const auto& p = map.params[i];
    const auto& e = prior[i];
    for (const auto& s : p.slots) {
      os << s.to_string();
      if (p.tie_group) os << ":tie=" << *p.tie_group;
      os << " mean=" << format_double(e.mean) << " sigma=" << format_double(e.sigma)
         << " lower=" << format_double(e.lower) << " upper=" << format_double(e.upper) << '\n';
    }
  }
  return os.str();
}

std::string serialize_integrator(const IntegratorConfig& c) {
  std::ostringstream os;
  os << "[integrator]\n"
     << "rtol=" << format_double(c.rtol) << " atol=" << format_double(c.atol)
     << " atol_T_rel=" << format_double(c.atol_T_rel) << '\n'
     << "max_steps=" << c.max_steps << " initial_dt=" << format_double(c.initial_dt)
     << " event_rtol=" << format_double(c.event_rtol) << " max_bisections=" << c.max_bisections << '\n';
  return os.str();
}

// ---------------------------------------------------------------------------
// Posterior

void PosteriorProblem::validate() const {
  if (map.dimension() == 0) throw ConfigError("no active parameters");
  if (prior.size() != map.dimension()) throw ConfigError("prior size does not match the parameter map");
  if (targets.empty()) throw ConfigError("no targets");
  map.check(mech);
  validate_prior(prior);
  std::set<std::string> labels;
  for (const auto& t : targets) {
    if (!labels.insert(t.label).second) throw ConfigError("duplicate target label '" + t.label + "'");
    if (!(t.sigma > 0.0)) throw ConfigError("target '" + t.label + "': sigma must be positive");
    try {
      validate_case(mech, t.rc);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("target '" + t.label + "': " + e.what());
    }
  }
  try {
    validate_config(cfg);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

PosteriorProblem make_problem(const Mechanism& mech, const ProblemConfig& cfg) {
  if (!cfg.has_targets) throw ConfigError("configuration has no [targets] section");
  PosteriorProblem p;
  p.mech = mech;
  p.map = cfg.map;
  p.prior = cfg.prior;
  p.cfg = cfg.integrator;
  for (const auto& c : cfg.cases) {
    if (!c.d) throw ConfigError("case '" + c.label + "' has no measured value");
    ExperimentTarget t{c.label, c.rc, *c.d, 0.0};
    t.sigma = c.sigma ? *c.sigma : *c.sigma_rel * std::abs(*c.d);
    p.targets.push_back(std::move(t));
  }
  p.validate();
  return p;
}

Mechanism apply_parameters(const Mechanism& mech, const ActiveParameterMap& map, std::span<const double> theta) {
  if (theta.size() != map.dimension()) {
    throw std::invalid_argument("theta has " + std::to_string(theta.size()) + " entries, map expects " +
                                std::to_string(map.dimension()));
  }
  Mechanism out = mech;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    for (const auto& s : map.params[i].slots) s.write(out, theta[i]);
  }
  return out;
}

double log_prior(const PriorSpec& prior, std::span<const double> theta) {
  if (theta.size() != prior.size()) throw std::invalid_argument("theta length does not match the prior");
  double lp = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const auto& e = prior[i];
    const double x = theta[i];
    if (!(x >= e.lower && x <= e.upper)) return kNegInf;
    const double z = (x - e.mean) / e.sigma;
    lp -= 0.5 * z * z;
  }
  return lp;
}

ObservableResult simulate_target(const Mechanism& mech, const ExperimentTarget& target, const IntegratorConfig& cfg) {
  try {
    return measure(mech, target.rc, cfg);
  } catch (const std::exception& e) {
    return {ObservableStatus::failure, 0.0, e.what()};
  }
}

double log_likelihood(const PosteriorProblem& problem, std::span<const double> theta) {
  Mechanism mech;
  try {
    mech = apply_parameters(problem.mech, problem.map, theta);
  } catch (const ConfigError& e) {
    spdlog::error("cannot apply parameters: {}", e.what());
    return kNegInf;
  }
  double ll = 0.0;
  for (const auto& t : problem.targets) {
    problem.counters->simulations.fetch_add(1, std::memory_order_relaxed);
    const auto r = simulate_target(mech, t, problem.cfg);
    if (!r.ok() || !std::isfinite(r.value)) {
      const auto n = problem.counters->simulation_failures.fetch_add(1, std::memory_order_relaxed) + 1;
      if (n <= 10 || n % 1000 == 0) {
        std::ostringstream th;
        for (std::size_t i = 0; i < theta.size(); ++i) th << (i ? "," : "") << format_double(theta[i]);
        spdlog::warn("simulation failure #{} on target {} ({}: {}); theta=[{}]", n, t.label, to_string(r.status),
                     r.message, th.str());
      }
      return kNegInf;
    }
    const double z = (r.value - t.d) / t.sigma;
    ll -= 0.5 * z * z;
  }
  return ll;
}

double log_posterior(const PosteriorProblem& problem, std::span<const double> theta) {
  problem.counters->posterior_calls.fetch_add(1, std::memory_order_relaxed);
  const double lp = log_prior(problem.prior, theta);
  if (lp == kNegInf) {
    problem.counters->prior_rejections.fetch_add(1, std::memory_order_relaxed);
    return kNegInf;
  }
  return lp + log_likelihood(problem, theta);
}

std::uint64_t problem_hash(const PosteriorProblem& problem) {
  Fnv1a h;
  h.str(serialize_mechanism(problem.mech));
  h.str(serialize_active(problem.map, problem.prior));
  for (const auto& t : problem.targets) h.str(format_target(t)).str("\n");
  h.str(serialize_integrator(problem.cfg));
  return h.digest();
}

std::vector<GeneratedTarget> generate_targets(const Mechanism& mech, const std::vector<CaseLine>& cases,
                                              const IntegratorConfig& cfg, std::uint64_t seed,
                                              std::optional<double> default_sigma_rel, bool add_noise,
                                              std::size_t jobs) {
  std::vector<GeneratedTarget> out(cases.size());
  std::vector<std::string> errors(cases.size());
  parallel_for(cases.size(), jobs, [&](std::size_t i) {
    const auto& c = cases[i];
    auto& g = out[i];
    g.target.label = c.label;
    g.target.rc = c.rc;
    const auto r = simulate_target(mech, g.target, cfg);
    if (!r.ok()) {
      errors[i] = "case '" + c.label + "' failed at baseline: " + to_string(r.status) + " " + r.message;
      return;
    }
    g.truth = r.value;
    double sigma = 0.0;
    if (c.sigma) sigma = *c.sigma;
    else if (c.sigma_rel) sigma = *c.sigma_rel * std::abs(r.value);
    else if (default_sigma_rel) sigma = *default_sigma_rel * std::abs(r.value);
    else errors[i] = "case '" + c.label + "' has no sigma or sigma_rel";
    Rng rng(seed, i, 0);
    g.target.d = add_noise ? r.value + sigma * rng.normal() : r.value;
    g.target.sigma = sigma;
  });
  for (const auto& e : errors) {
    if (!e.empty()) throw ConfigError(e);
  }
  return out;
}

} // namespace kcal
