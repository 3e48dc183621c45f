#include "kcal/mechanism.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <utility>

#include "text_util.hpp"

namespace kcal {

ParseError::ParseError(const std::string& what, int line, int column)
    : MechanismError("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + what),
      line_(line),
      column_(column) {}

ThermoValues evaluate_nasa7(const NasaPoly7& poly, double T) noexcept {
  const auto& a = T < poly.t_mid ? poly.low : poly.high;
  const double T2 = T * T;
  const double T3 = T2 * T;
  const double T4 = T3 * T;
  ThermoValues v;
  v.cp_R = a[0] + a[1] * T + a[2] * T2 + a[3] * T3 + a[4] * T4;
  v.h_RT = a[0] + a[1] * T / 2.0 + a[2] * T2 / 3.0 + a[3] * T3 / 4.0 + a[4] * T4 / 5.0 + a[5] / T;
  v.s_R = a[0] * std::log(T) + a[1] * T + a[2] * T2 / 2.0 + a[3] * T3 / 3.0 + a[4] * T4 / 4.0 + a[6];
  return v;
}

ThermoValues thermo_props(const NasaPoly7& poly, double T) {
  if (!(T >= poly.t_low && T <= poly.t_high)) {
    throw ThermoRangeError("temperature " + format_double(T) + " K outside thermo range [" +
                           format_double(poly.t_low) + ", " + format_double(poly.t_high) + "]");
  }
  return evaluate_nasa7(poly, T);
}

double atomic_mass(std::string_view element) {
  static const std::map<std::string, double, std::less<>> masses = {
      {"H", 1.00794}, {"He", 4.002602}, {"C", 12.0107}, {"N", 14.0067}, {"O", 15.9994}, {"Ar", 39.948},
  };
  auto it = masses.find(element);
  if (it == masses.end()) throw MechanismError("unknown element '" + std::string(element) + "'");
  return it->second;
}

// ---------------------------------------------------------------------------
// Reaction helpers

namespace {

void append_side(std::string& out, const Stoichiometry& side, std::string_view collider) {
  bool first = true;
  for (const auto& [name, nu] : side) {
    if (!first) out += " + ";
    first = false;
    if (nu != 1) out += std::to_string(nu) + " ";
    out += name;
  }
  if (!collider.empty()) {
    out += collider == "M" ? " + M" : " (+M)";
  }
}

} // namespace

std::string Reaction::equation() const {
  std::string collider;
  if (std::holds_alternative<ThirdBody>(rate)) collider = "M";
  if (std::holds_alternative<Falloff>(rate)) collider = "(+M)";
  std::string out;
  append_side(out, reactants, collider);
  out += reversible ? " = " : " => ";
  append_side(out, products, collider);
  return out;
}

Arrhenius& Reaction::arrhenius(std::size_t i) {
  return const_cast<Arrhenius&>(std::as_const(*this).arrhenius(i));
}

const Arrhenius& Reaction::arrhenius(std::size_t i) const {
  if (i == 0) {
    return std::visit(
        [](const auto& m) -> const Arrhenius& {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, Falloff>) {
            return m.k_high;
          } else {
            return m.k;
          }
        },
        rate);
  }
  if (i - 1 >= duplicates.size()) {
    throw std::out_of_range("reaction " + id + " has no Arrhenius set #" + std::to_string(i));
  }
  return duplicates[i - 1];
}

Efficiencies* Reaction::efficiencies() noexcept {
  return const_cast<Efficiencies*>(std::as_const(*this).efficiencies());
}

const Efficiencies* Reaction::efficiencies() const noexcept {
  if (const auto* tb = std::get_if<ThirdBody>(&rate)) return &tb->efficiencies;
  if (const auto* fo = std::get_if<Falloff>(&rate)) return &fo->efficiencies;
  return nullptr;
}

std::optional<std::size_t> Mechanism::species_index(std::string_view name) const {
  for (std::size_t i = 0; i < species.size(); ++i) {
    if (species[i].name == name) return i;
  }
  return std::nullopt;
}

std::optional<std::size_t> Mechanism::reaction_index(std::string_view id) const {
  for (std::size_t i = 0; i < reactions.size(); ++i) {
    if (reactions[i].id == id) return i;
  }
  return std::nullopt;
}

const Reaction& Mechanism::reaction(std::string_view id) const {
  auto i = reaction_index(id);
  if (!i) throw MechanismError("no reaction with id '" + std::string(id) + "'");
  return reactions[*i];
}

Reaction& Mechanism::reaction(std::string_view id) {
  return const_cast<Reaction&>(std::as_const(*this).reaction(id));
}

std::pair<double, double> Mechanism::thermo_range() const {
  double lo = 0.0;
  double hi = std::numeric_limits<double>::infinity();
  for (const auto& s : species) {
    lo = std::max(lo, s.thermo.t_low);
    hi = std::min(hi, s.thermo.t_high);
  }
  return {lo, hi};
}

ElementMatrix element_matrix(const Mechanism& mech) {
  std::set<std::string> names;
  for (const auto& s : mech.species) {
    for (const auto& [e, n] : s.elements) names.insert(e);
  }
  ElementMatrix m;
  m.elements.assign(names.begin(), names.end());
  m.n_species = mech.species.size();
  m.counts.assign(m.elements.size() * m.n_species, 0);
  for (std::size_t e = 0; e < m.elements.size(); ++e) {
    for (std::size_t k = 0; k < m.n_species; ++k) {
      auto it = mech.species[k].elements.find(m.elements[e]);
      if (it != mech.species[k].elements.end()) m.counts[e * m.n_species + k] = it->second;
    }
  }
  return m;
}

std::vector<int> net_stoichiometry(const Mechanism& mech, const Reaction& r) {
  std::vector<int> nu(mech.species.size(), 0);
  auto add = [&](const Stoichiometry& side, int sign) {
    for (const auto& [name, n] : side) {
      auto idx = mech.species_index(name);
      if (!idx) throw MechanismError("reaction " + r.id + " references unknown species '" + name + "'");
      nu[*idx] += sign * n;
    }
  };
  add(r.reactants, -1);
  add(r.products, +1);
  return nu;
}

// ---------------------------------------------------------------------------
// Validation

namespace {

void check_species(const Species& s) {
  if (s.name.empty()) throw MechanismError("species with empty name");
  if (!(s.molar_mass > 0.0)) throw MechanismError("species " + s.name + ": molar mass must be positive");
  bool any_positive = false;
  double sum = 0.0;
  for (const auto& [e, n] : s.elements) {
    if (n < 0) throw MechanismError("species " + s.name + ": negative element count for " + e);
    any_positive |= n > 0;
    sum += n * atomic_mass(e);
  }
  if (!any_positive) throw MechanismError("species " + s.name + ": no elements");
  if (std::abs(sum - s.molar_mass) > 1e-3 * s.molar_mass) {
    throw MechanismError("species " + s.name + ": molar mass " + format_double(s.molar_mass) +
                         " inconsistent with composition (" + format_double(sum) + ")");
  }
  const auto& p = s.thermo;
  if (!(p.t_low < p.t_mid && p.t_mid < p.t_high)) {
    throw MechanismError("species " + s.name + ": thermo requires t_low < t_mid < t_high");
  }
  NasaPoly7 lo = p;
  lo.t_mid = std::numeric_limits<double>::infinity();
  NasaPoly7 hi = p;
  hi.t_mid = -std::numeric_limits<double>::infinity();
  const double cp_lo = evaluate_nasa7(lo, p.t_mid).cp_R;
  const double cp_hi = evaluate_nasa7(hi, p.t_mid).cp_R;
  if (std::abs(cp_lo - cp_hi) > 1e-4 * std::abs(cp_hi)) {
    throw MechanismError("species " + s.name + ": cp/R discontinuous at t_mid");
  }
}

void check_arrhenius(const Reaction& r, const Arrhenius& k, const char* what) {
  if (!(k.A > 0.0)) throw MechanismError("reaction " + r.id + ": non-positive A in " + what);
  if (!std::isfinite(k.beta) || !std::isfinite(k.Ea)) {
    throw MechanismError("reaction " + r.id + ": non-finite Arrhenius parameter");
  }
}

void check_reaction(const Mechanism& mech, const Reaction& r, const ElementMatrix& em) {
  if (r.reactants.empty() || r.products.empty()) throw MechanismError("reaction " + r.id + ": empty side");
  for (const auto* side : {&r.reactants, &r.products}) {
    for (const auto& [name, nu] : *side) {
      if (!mech.species_index(name)) {
        throw MechanismError("reaction " + r.id + " references unknown species '" + name + "'");
      }
      if (nu <= 0) throw MechanismError("reaction " + r.id + ": non-positive coefficient for " + name);
    }
  }
  const auto nu = net_stoichiometry(mech, r);
  for (std::size_t e = 0; e < em.elements.size(); ++e) {
    long balance = 0;
    for (std::size_t k = 0; k < nu.size(); ++k) balance += static_cast<long>(em(e, k)) * nu[k];
    if (balance != 0) {
      throw MechanismError("reaction " + r.id + " (" + r.equation() + ") does not conserve element " +
                           em.elements[e]);
    }
  }
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, Falloff>) {
          check_arrhenius(r, m.k_high, "high-pressure limit");
          check_arrhenius(r, m.k_low, "low-pressure limit");
          if (!(m.troe_fc > 0.0 && m.troe_fc <= 1.0)) {
            throw MechanismError("reaction " + r.id + ": troe_fc must lie in (0, 1]");
          }
        } else {
          check_arrhenius(r, m.k, "rate");
        }
      },
      r.rate);
  for (const auto& d : r.duplicates) check_arrhenius(r, d, "duplicate");
  if (!r.duplicates.empty() && !std::holds_alternative<Elementary>(r.rate)) {
    throw MechanismError("reaction " + r.id + ": duplicates are only supported for elementary reactions");
  }
  if (const auto* eff = r.efficiencies()) {
    for (const auto& [name, v] : *eff) {
      if (!mech.species_index(name)) {
        throw MechanismError("reaction " + r.id + ": efficiency for unknown species '" + name + "'");
      }
      if (!(v >= 0.0)) throw MechanismError("reaction " + r.id + ": negative efficiency for " + name);
    }
  }
}

} // namespace

void validate_mechanism(const Mechanism& mech) {
  if (mech.species.empty()) throw MechanismError("no species defined");
  std::set<std::string> names;
  for (const auto& s : mech.species) {
    check_species(s);
    if (!names.insert(s.name).second) throw MechanismError("duplicate species '" + s.name + "'");
  }
  if (mech.default_bath && !mech.species_index(*mech.default_bath)) {
    throw MechanismError("default bath species '" + *mech.default_bath + "' not defined");
  }
  const auto em = element_matrix(mech);
  std::set<std::string> ids;
  for (const auto& r : mech.reactions) {
    if (!ids.insert(r.id).second) throw MechanismError("duplicate reaction id '" + r.id + "'");
    check_reaction(mech, r, em);
  }
}

// ---------------------------------------------------------------------------
// Parser

namespace {

enum class Section { none, mechanism, species, thermo, reactions };

struct Cursor {
  int line;
  std::string_view text; // full line, for column computation

  int column_of(std::string_view token) const {
    return static_cast<int>(token.data() - text.data()) + 1;
  }
  [[noreturn]] void fail(const std::string& what, std::string_view at) const {
    throw ParseError(what, line, column_of(at));
  }
  double number(std::string_view token, std::string_view value) const {
    auto v = parse_double(value);
    if (!v) fail("expected a number in '" + std::string(token) + "'", token);
    return *v;
  }
  int integer(std::string_view token, std::string_view value) const {
    int out = 0;
    auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || p != value.data() + value.size()) {
      fail("expected an integer in '" + std::string(token) + "'", token);
    }
    return out;
  }
};

struct PendingSpecies {
  Species species;
  int line;
  int column;
};

struct PendingReaction {
  Reaction reaction;
  int line;
  bool dup;
};

std::pair<std::string_view, std::string_view> split_kv(std::string_view token) {
  auto eq = token.find('=');
  if (eq == std::string_view::npos) return {token, {}};
  return {token.substr(0, eq), token.substr(eq + 1)};
}

std::vector<double> parse_list(const Cursor& c, std::string_view token, std::string_view value) {
  std::vector<double> out;
  for (auto item : split(value, ',')) out.push_back(c.number(token, item));
  return out;
}

Species parse_species_line(const Cursor& c, const std::vector<std::string_view>& tokens) {
  Species s;
  s.name = std::string(tokens[0]);
  s.thermo_key = s.name;
  bool have_mass = false;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    auto [key, value] = split_kv(tokens[i]);
    if (key == "M") {
      s.molar_mass = c.number(tokens[i], value);
      have_mass = true;
    } else if (key == "elems") {
      for (auto item : split(value, ',')) {
        auto colon = item.find(':');
        if (colon == std::string_view::npos) c.fail("expected element:count", item);
        s.elements[std::string(item.substr(0, colon))] = c.integer(tokens[i], item.substr(colon + 1));
      }
    } else if (key == "thermo") {
      s.thermo_key = std::string(value);
    } else {
      c.fail("unknown species attribute '" + std::string(key) + "'", tokens[i]);
    }
  }
  if (!have_mass) c.fail("species " + s.name + " is missing M=", tokens[0]);
  if (s.elements.empty()) c.fail("species " + s.name + " is missing elems=", tokens[0]);
  return s;
}

NasaPoly7 parse_thermo_line(const Cursor& c, const std::vector<std::string_view>& tokens) {
  NasaPoly7 p;
  bool have_t = false, have_low = false, have_high = false;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    auto [key, value] = split_kv(tokens[i]);
    auto list = parse_list(c, tokens[i], value);
    if (key == "T") {
      if (list.size() != 3) c.fail("T= expects t_low,t_mid,t_high", tokens[i]);
      p.t_low = list[0];
      p.t_mid = list[1];
      p.t_high = list[2];
      have_t = true;
    } else if (key == "low" || key == "high") {
      if (list.size() != 7) c.fail(std::string(key) + "= expects 7 coefficients", tokens[i]);
      auto& dst = key == "low" ? p.low : p.high;
      std::copy(list.begin(), list.end(), dst.begin());
      (key == "low" ? have_low : have_high) = true;
    } else {
      c.fail("unknown thermo attribute '" + std::string(key) + "'", tokens[i]);
    }
  }
  if (!(have_t && have_low && have_high)) c.fail("thermo row needs T=, low= and high=", tokens[0]);
  return p;
}

struct Side {
  Stoichiometry species;
  bool third_body = false; // "+ M"
  bool falloff = false;    // "(+M)"
};

Side parse_side(const Cursor& c, std::string_view side) {
  Side out;
  std::string cleaned(side);
  for (;;) {
    auto pos = cleaned.find("(+M)");
    if (pos == std::string::npos) break;
    out.falloff = true;
    cleaned.replace(pos, 4, " ");
  }
  for (auto term : split(cleaned, '+')) {
    term = trim(term);
    if (term.empty()) c.fail("empty term in reaction equation", side);
    if (term == "M") {
      out.third_body = true;
      continue;
    }
    std::size_t digits = 0;
    while (digits < term.size() && std::isdigit(static_cast<unsigned char>(term[digits]))) ++digits;
    int nu = 1;
    if (digits > 0) {
      std::from_chars(term.data(), term.data() + digits, nu);
      term = trim(term.substr(digits));
    }
    if (term.empty() || nu <= 0) c.fail("malformed term in reaction equation", side);
    out.species[std::string(term)] += nu;
  }
  return out;
}

Efficiencies parse_efficiencies(const Cursor& c, std::string_view token) {
  Efficiencies eff;
  for (auto item : split(token, ',')) {
    auto colon = item.rfind(':');
    if (colon == std::string_view::npos) c.fail("expected species:efficiency", item);
    eff[std::string(item.substr(0, colon))] = c.number(item, item.substr(colon + 1));
  }
  return eff;
}

PendingReaction parse_reaction_line(const Cursor& c, std::string_view line) {
  auto colon = line.find(':');
  auto bar = line.find('|');
  if (colon == std::string_view::npos || bar == std::string_view::npos || colon > bar) {
    c.fail("expected 'id: equation | parameters'", line);
  }
  PendingReaction out{{}, c.line, false};
  Reaction& r = out.reaction;
  r.id = std::string(trim(line.substr(0, colon)));
  if (r.id.empty()) c.fail("empty reaction id", line);

  std::string_view eqn = line.substr(colon + 1, bar - colon - 1);
  std::size_t op = std::string_view::npos;
  std::size_t op_len = 0;
  if (auto p = eqn.find("<=>"); p != std::string_view::npos) {
    op = p;
    op_len = 3;
  } else if (auto q = eqn.find("=>"); q != std::string_view::npos) {
    op = q;
    op_len = 2;
    r.reversible = false;
  } else if (auto s = eqn.find('='); s != std::string_view::npos) {
    op = s;
    op_len = 1;
  }
  if (op == std::string_view::npos) c.fail("reaction equation has no '='", eqn);
  Side lhs = parse_side(c, eqn.substr(0, op));
  Side rhs = parse_side(c, eqn.substr(op + op_len));
  if (lhs.third_body != rhs.third_body || lhs.falloff != rhs.falloff) {
    c.fail("collider M must appear on both sides", eqn);
  }
  r.reactants = std::move(lhs.species);
  r.products = std::move(rhs.species);

  Arrhenius k;
  Arrhenius k_low;
  double fc = 0.0;
  bool have_A = false, have_beta = false, have_Ea = false;
  bool have_tb = false, have_falloff = false, have_fc = false;
  bool have_Alow = false;
  Efficiencies eff;
  auto tokens = split_ws(line.substr(bar + 1));
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto t = tokens[i];
    if (t == "dup") {
      out.dup = true;
      continue;
    }
    if (t == "tb:") {
      if (i + 1 >= tokens.size()) c.fail("tb: needs an efficiency list", t);
      eff = parse_efficiencies(c, tokens[++i]);
      have_tb = true;
      continue;
    }
    if (t == "falloff:") {
      have_falloff = true;
      continue;
    }
    auto [key, value] = split_kv(t);
    if (value.empty()) c.fail("unexpected token '" + std::string(t) + "'", t);
    const double v = c.number(t, value);
    if (key == "A") {
      if (!(v > 0.0)) c.fail("non-positive A in reaction " + r.id, t);
      k.A = v;
      have_A = true;
    } else if (key == "beta") {
      k.beta = v;
      have_beta = true;
    } else if (key == "Ea") {
      k.Ea = v;
      have_Ea = true;
    } else if (have_falloff && key == "Alow") {
      if (!(v > 0.0)) c.fail("non-positive Alow in reaction " + r.id, t);
      k_low.A = v;
      have_Alow = true;
    } else if (have_falloff && key == "betalow") {
      k_low.beta = v;
    } else if (have_falloff && key == "Ealow") {
      k_low.Ea = v;
    } else if (have_falloff && key == "troe_fc") {
      fc = v;
      have_fc = true;
    } else {
      c.fail("unknown reaction parameter '" + std::string(key) + "'", t);
    }
  }
  if (!(have_A && have_beta && have_Ea)) c.fail("reaction " + r.id + " needs A=, beta= and Ea=", line);

  if (lhs.falloff) {
    if (!have_falloff || !have_Alow || !have_fc) {
      c.fail("(+M) reaction " + r.id + " needs 'falloff: Alow= betalow= Ealow= troe_fc='", line);
    }
    r.rate = Falloff{k, k_low, fc, std::move(eff)};
  } else if (lhs.third_body) {
    if (have_falloff) c.fail("falloff parameters on a non-(+M) reaction " + r.id, line);
    r.rate = ThirdBody{k, std::move(eff)};
  } else {
    if (have_tb) c.fail("efficiencies given for reaction " + r.id + " without M", line);
    if (have_falloff) c.fail("falloff parameters on a non-(+M) reaction " + r.id, line);
    r.rate = Elementary{k};
  }
  return out;
}

} // namespace

Mechanism parse_mechanism(std::string_view text) {
  Section section = Section::none;
  std::vector<PendingSpecies> species;
  std::map<std::string, std::pair<NasaPoly7, int>> thermo;
  std::vector<PendingReaction> reactions;
  std::optional<std::string> bath;
  int bath_line = 0;

  int line_no = 0;
  for (auto raw : split_lines(text)) {
    ++line_no;
    Cursor c{line_no, raw};
    auto line = trim(strip_comment(raw));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line == "[mechanism]") section = Section::mechanism;
      else if (line == "[species]") section = Section::species;
      else if (line == "[thermo]") section = Section::thermo;
      else if (line == "[reactions]") section = Section::reactions;
      else c.fail("unknown section " + std::string(line), line);
      continue;
    }
    switch (section) {
      case Section::none:
        c.fail("content before the first section header", line);
      case Section::mechanism: {
        auto [key, value] = split_kv(line);
        if (trim(key) != "bath") c.fail("unknown mechanism attribute", line);
        bath = std::string(trim(value));
        bath_line = line_no;
        break;
      }
      case Section::species: {
        auto tokens = split_ws(line);
        auto s = parse_species_line(c, tokens);
        species.push_back({std::move(s), line_no, c.column_of(tokens[0])});
        break;
      }
      case Section::thermo: {
        auto tokens = split_ws(line);
        std::string key(tokens[0]);
        if (thermo.count(key)) c.fail("duplicate thermo row '" + key + "'", tokens[0]);
        thermo[key] = {parse_thermo_line(c, tokens), line_no};
        break;
      }
      case Section::reactions:
        reactions.push_back(parse_reaction_line(c, line));
        break;
    }
  }

  if (species.empty()) throw ParseError("no species defined", std::max(line_no, 1), 1);

  Mechanism mech;
  mech.default_bath = bath;
  for (auto& p : species) {
    auto it = thermo.find(p.species.thermo_key);
    if (it == thermo.end()) {
      throw ParseError("no thermo row '" + p.species.thermo_key + "' for species " + p.species.name, p.line,
                       p.column);
    }
    p.species.thermo = it->second.first;
    try {
      check_species(p.species);
    } catch (const MechanismError& e) {
      throw ParseError(e.what(), p.line, p.column);
    }
    if (mech.species_index(p.species.name)) {
      throw ParseError("duplicate species '" + p.species.name + "'", p.line, p.column);
    }
    mech.species.push_back(std::move(p.species));
  }
  if (bath && !mech.species_index(*bath)) {
    throw ParseError("default bath species '" + *bath + "' not defined", bath_line, 1);
  }

  const auto em = element_matrix(mech);
  std::set<std::string> dup_ids;
  std::vector<int> lines;
  for (auto& p : reactions) {
    auto existing = mech.reaction_index(p.reaction.id);
    if (existing) {
      Reaction& first = mech.reactions[*existing];
      const auto* el = std::get_if<Elementary>(&p.reaction.rate);
      const bool groupable = p.dup && dup_ids.count(first.id) && el &&
                             std::holds_alternative<Elementary>(first.rate) &&
                             first.reactants == p.reaction.reactants && first.products == p.reaction.products &&
                             first.reversible == p.reaction.reversible;
      if (!groupable) throw ParseError("duplicate reaction id '" + p.reaction.id + "'", p.line, 1);
      first.duplicates.push_back(el->k);
      continue;
    }
    try {
      check_reaction(mech, p.reaction, em);
    } catch (const MechanismError& e) {
      throw ParseError(e.what(), p.line, 1);
    }
    if (p.dup) dup_ids.insert(p.reaction.id);
    mech.reactions.push_back(std::move(p.reaction));
  }
  return mech;
}

Mechanism load_mechanism(const std::string& path) {
  return parse_mechanism(read_file(path));
}

// ---------------------------------------------------------------------------
// Serializer

namespace {

std::string list17(const auto& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += ',';
    out += format_double(values[i]);
  }
  return out;
}

void write_arrhenius(std::ostream& os, const Arrhenius& k) {
  os << "A=" << format_double(k.A) << " beta=" << format_double(k.beta) << " Ea=" << format_double(k.Ea);
}

void write_efficiencies(std::ostream& os, const Efficiencies& eff) {
  if (eff.empty()) return;
  os << " tb: ";
  bool first = true;
  for (const auto& [name, v] : eff) {
    if (!first) os << ',';
    first = false;
    os << name << ':' << format_double(v);
  }
}

} // namespace

std::string serialize_mechanism(const Mechanism& mech) {
  std::ostringstream os;
  if (mech.default_bath) os << "[mechanism]\nbath=" << *mech.default_bath << "\n\n";
  os << "[species]\n";
  for (const auto& s : mech.species) {
    os << s.name << "  M=" << format_double(s.molar_mass) << "  elems=";
    bool first = true;
    for (const auto& [e, n] : s.elements) {
      if (!first) os << ',';
      first = false;
      os << e << ':' << n;
    }
    os << "  thermo=" << s.thermo_key << '\n';
  }
  os << "\n[thermo]\n";
  std::set<std::string> written;
  for (const auto& s : mech.species) {
    if (!written.insert(s.thermo_key).second) continue;
    const auto& p = s.thermo;
    os << s.thermo_key << "  T=" << list17(std::array{p.t_low, p.t_mid, p.t_high}) << "  low=" << list17(p.low)
       << "  high=" << list17(p.high) << '\n';
  }
  os << "\n[reactions]\n";
  for (const auto& r : mech.reactions) {
    const std::string head = r.id + ": " + r.equation() + " | ";
    const char* dup = r.duplicates.empty() ? "" : " dup";
    os << head;
    std::visit(
        [&](const auto& m) {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, Elementary>) {
            write_arrhenius(os, m.k);
          } else if constexpr (std::is_same_v<T, ThirdBody>) {
            write_arrhenius(os, m.k);
            write_efficiencies(os, m.efficiencies);
          } else {
            write_arrhenius(os, m.k_high);
            write_efficiencies(os, m.efficiencies);
            os << " falloff: Alow=" << format_double(m.k_low.A) << " betalow=" << format_double(m.k_low.beta)
               << " Ealow=" << format_double(m.k_low.Ea) << " troe_fc=" << format_double(m.troe_fc);
          }
        },
        r.rate);
    os << dup << '\n';
    for (const auto& d : r.duplicates) {
      os << head;
      write_arrhenius(os, d);
      os << dup << '\n';
    }
  }
  return os.str();
}

} // namespace kcal
