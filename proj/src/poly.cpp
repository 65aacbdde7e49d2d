#include "reachsos/poly.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>

#include "reachsos/util.hpp"

namespace reachsos {

VarUniverse::VarUniverse(std::vector<std::string> states, std::string time_var,
                         std::vector<std::string> disturbances)
    : n_states_(int(states.size())) {
  names_ = std::move(states);
  names_.push_back(std::move(time_var));
  for (auto& d : disturbances) names_.push_back(std::move(d));
  std::set<std::string> seen;
  for (const auto& n : names_) {
    if (n.empty()) throw PolyError("empty variable name");
    if (!seen.insert(n).second)
      throw PolyError("duplicate variable name: " + n);
  }
}

int VarUniverse::index(const std::string& name) const {
  for (int i = 0; i < size(); ++i)
    if (names_[size_t(i)] == name) return i;
  throw PolyError("unknown variable: " + name);
}

bool VarUniverse::contains(const std::string& name) const {
  for (const auto& n : names_)
    if (n == name) return true;
  return false;
}

std::vector<int> VarUniverse::state_indices() const {
  std::vector<int> v(static_cast<size_t>(n_states_));
  for (int i = 0; i < n_states_; ++i) v[size_t(i)] = i;
  return v;
}

std::vector<int> VarUniverse::disturbance_indices() const {
  std::vector<int> v;
  for (int i = n_states_ + 1; i < size(); ++i) v.push_back(i);
  return v;
}

void Polynomial::add_term(const ExpVec& e, double c) {
  if (c == 0.0) return;
  auto it = terms_.find(e);
  if (it == terms_.end()) {
    terms_.emplace(e, c);
  } else {
    it->second += c;
    if (it->second == 0.0) terms_.erase(it);
  }
}

Polynomial Polynomial::constant(UniversePtr u, double c) {
  Polynomial p(std::move(u));
  p.add_term(ExpVec(size_t(p.universe_->size()), 0), c);
  return p;
}

Polynomial Polynomial::variable(UniversePtr u, const std::string& name) {
  Polynomial p(u);
  ExpVec e(size_t(u->size()), 0);
  e[size_t(u->index(name))] = 1;
  p.add_term(e, 1.0);
  return p;
}

Polynomial Polynomial::monomial(UniversePtr u, ExpVec exps, double coef) {
  Polynomial p(u);
  if (int(exps.size()) != u->size())
    throw PolyError("exponent vector length does not match universe");
  for (int v : exps)
    if (v < 0) throw PolyError("negative exponent");
  p.add_term(exps, coef);
  return p;
}

int Polynomial::degree() const {
  if (terms_.empty()) return -1;
  // grlex order puts the highest total degree last
  return total_degree(terms_.rbegin()->first);
}

int Polynomial::degree_in(const std::vector<int>& var_indices) const {
  int d = is_zero() ? -1 : 0;
  for (const auto& [e, c] : terms_) {
    (void)c;
    int s = 0;
    for (int v : var_indices) s += e[size_t(v)];
    d = std::max(d, s);
  }
  return d;
}

bool Polynomial::uses_only(const std::vector<int>& var_indices) const {
  std::vector<char> allowed(size_t(universe_->size()), 0);
  for (int v : var_indices) allowed[size_t(v)] = 1;
  for (const auto& [e, c] : terms_) {
    (void)c;
    for (size_t i = 0; i < e.size(); ++i)
      if (e[i] > 0 && !allowed[i]) return false;
  }
  return true;
}

double Polynomial::coefficient(const ExpVec& e) const {
  auto it = terms_.find(e);
  return it == terms_.end() ? 0.0 : it->second;
}

double Polynomial::max_abs_coefficient() const {
  double m = 0.0;
  for (const auto& [e, c] : terms_) {
    (void)e;
    m = std::max(m, std::fabs(c));
  }
  return m;
}

Polynomial Polynomial::operator+(const Polynomial& o) const {
  if (!same_universe(o)) throw PolyError("universe mismatch");
  Polynomial r = *this;
  for (const auto& [e, c] : o.terms_) r.add_term(e, c);
  return r;
}

Polynomial Polynomial::operator-(const Polynomial& o) const {
  if (!same_universe(o)) throw PolyError("universe mismatch");
  Polynomial r = *this;
  for (const auto& [e, c] : o.terms_) r.add_term(e, -c);
  return r;
}

Polynomial Polynomial::operator*(const Polynomial& o) const {
  if (!same_universe(o)) throw PolyError("universe mismatch");
  Polynomial r(universe_);
  ExpVec e(size_t(universe_->size()));
  for (const auto& [ea, ca] : terms_) {
    for (const auto& [eb, cb] : o.terms_) {
      for (size_t i = 0; i < e.size(); ++i) e[i] = ea[i] + eb[i];
      r.add_term(e, ca * cb);
    }
  }
  return r;
}

Polynomial Polynomial::operator-() const { return scaled(-1.0); }

Polynomial Polynomial::scaled(double c) const {
  Polynomial r(universe_);
  if (c == 0.0) return r;
  for (const auto& [e, v] : terms_) r.add_term(e, v * c);
  return r;
}

Polynomial Polynomial::pow(int e) const {
  if (e < 0) throw PolyError("negative exponent");
  Polynomial r = constant(universe_, 1.0);
  for (int i = 0; i < e; ++i) r = r * *this;
  return r;
}

Polynomial Polynomial::partial(int var_index) const {
  if (var_index < 0 || var_index >= universe_->size())
    throw PolyError("variable index out of range");
  Polynomial r(universe_);
  for (const auto& [e, c] : terms_) {
    int k = e[size_t(var_index)];
    if (k == 0) continue;
    ExpVec de = e;
    de[size_t(var_index)] = k - 1;
    r.add_term(de, c * k);
  }
  return r;
}

Polynomial Polynomial::partial(const std::string& var) const {
  return partial(universe_->index(var));
}

Polynomial Polynomial::substitute(int var_index,
                                  const Polynomial& replacement) const {
  if (!same_universe(replacement)) throw PolyError("universe mismatch");
  if (var_index < 0 || var_index >= universe_->size())
    throw PolyError("variable index out of range");
  // Precompute powers of the replacement up to the highest occurring
  // exponent of the substituted variable.
  int max_e = 0;
  for (const auto& [e, c] : terms_) {
    (void)c;
    max_e = std::max(max_e, e[size_t(var_index)]);
  }
  std::vector<Polynomial> powers;
  powers.push_back(constant(universe_, 1.0));
  for (int i = 1; i <= max_e; ++i) powers.push_back(powers.back() * replacement);

  Polynomial r(universe_);
  for (const auto& [e, c] : terms_) {
    ExpVec rest = e;
    int k = rest[size_t(var_index)];
    rest[size_t(var_index)] = 0;
    Polynomial base(universe_);
    base.add_term(rest, c);
    r = r + base * powers[size_t(k)];
  }
  return r;
}

namespace {
inline double ipow(double x, int e) {
  double r = 1.0;
  while (e > 0) {
    if (e & 1) r *= x;
    x *= x;
    e >>= 1;
  }
  return r;
}
}  // namespace

double Polynomial::eval(const std::vector<double>& point) const {
  if (int(point.size()) != universe_->size())
    throw PolyError("evaluation point has wrong dimension");
  double acc = 0.0;
  for (const auto& [e, c] : terms_) {
    double t = c;
    for (size_t i = 0; i < e.size(); ++i)
      if (e[i] != 0) t *= ipow(point[i], e[i]);
    acc += t;
  }
  return acc;
}

double Polynomial::eval(const std::map<std::string, double>& assignment) const {
  std::vector<double> point(size_t(universe_->size()), 0.0);
  std::vector<char> have(size_t(universe_->size()), 0);
  for (const auto& [name, v] : assignment) {
    if (!universe_->contains(name)) continue;
    int i = universe_->index(name);
    point[size_t(i)] = v;
    have[size_t(i)] = 1;
  }
  for (const auto& [e, c] : terms_) {
    (void)c;
    for (size_t i = 0; i < e.size(); ++i)
      if (e[i] > 0 && !have[i])
        throw PolyError("missing variable in assignment: " +
                        universe_->name(int(i)));
  }
  return eval(point);
}

std::string Polynomial::str() const {
  if (is_zero()) return "0";
  std::ostringstream out;
  bool first = true;
  for (const auto& [e, c] : terms_) {
    double mag = c;
    if (first) {
      first = false;
    } else {
      out << (c < 0 ? " - " : " + ");
      mag = std::fabs(c);
    }
    out << fmt17(mag);
    for (size_t i = 0; i < e.size(); ++i) {
      if (e[i] == 0) continue;
      out << "*" << universe_->name(int(i));
      if (e[i] > 1) out << "^" << e[i];
    }
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Expression parser: recursive descent over
//   expr   := term (('+'|'-') term)*
//   term   := unary ('*' unary)*
//   unary  := ('+'|'-')* power
//   power  := atom ('^' nonneg-int)?
//   atom   := number | variable | '(' expr ')'
// The UTF-8 minus sign U+2212 is accepted as '-'.

namespace {

struct Parser {
  const std::string& text;
  size_t pos = 0;
  UniversePtr u;

  Parser(const std::string& t, UniversePtr universe) : text(t), u(universe) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw PolyError("parse error at position " + std::to_string(pos) + ": " +
                    what);
  }

  void skip_ws() {
    while (pos < text.size() && std::isspace(uint8_t(text[pos]))) ++pos;
  }

  bool at_minus() {
    if (pos < text.size() && text[pos] == '-') return true;
    // U+2212
    return pos + 2 < text.size() && uint8_t(text[pos]) == 0xe2 &&
           uint8_t(text[pos + 1]) == 0x88 && uint8_t(text[pos + 2]) == 0x92;
  }

  void eat_minus() { pos += (text[pos] == '-') ? 1 : 3; }

  bool peek(char c) {
    skip_ws();
    return pos < text.size() && text[pos] == c;
  }

  bool accept(char c) {
    if (peek(c)) {
      ++pos;
      return true;
    }
    return false;
  }

  Polynomial parse_expr() {
    Polynomial acc = parse_term();
    for (;;) {
      skip_ws();
      if (accept('+')) {
        acc = acc + parse_term();
      } else if (pos < text.size() && (text[pos] == '-' || at_minus())) {
        eat_minus();
        acc = acc - parse_term();
      } else {
        return acc;
      }
    }
  }

  Polynomial parse_term() {
    Polynomial acc = parse_unary();
    while (accept('*')) acc = acc * parse_unary();
    return acc;
  }

  Polynomial parse_unary() {
    skip_ws();
    int sign = 1;
    for (;;) {
      if (pos < text.size() && text[pos] == '+') {
        ++pos;
      } else if (pos < text.size() && (text[pos] == '-' || at_minus())) {
        eat_minus();
        sign = -sign;
      } else {
        break;
      }
      skip_ws();
    }
    Polynomial p = parse_power();
    return sign < 0 ? -p : p;
  }

  Polynomial parse_power() {
    Polynomial base = parse_atom();
    skip_ws();
    if (!accept('^')) return base;
    skip_ws();
    if (pos >= text.size()) fail("expected exponent");
    if (text[pos] == '-' || at_minus()) fail("negative exponent");
    size_t start = pos;
    while (pos < text.size() && std::isdigit(uint8_t(text[pos]))) ++pos;
    if (pos == start) fail("exponent must be a non-negative integer");
    if (pos < text.size() && (text[pos] == '.' || text[pos] == 'e' ||
                              text[pos] == 'E'))
      fail("exponent must be a non-negative integer");
    int e = std::atoi(text.substr(start, pos - start).c_str());
    return base.pow(e);
  }

  Polynomial parse_atom() {
    skip_ws();
    if (pos >= text.size()) fail("unexpected end of expression");
    char c = text[pos];
    if (c == '(') {
      ++pos;
      Polynomial p = parse_expr();
      skip_ws();
      if (!accept(')')) fail("expected ')'");
      return p;
    }
    if (std::isdigit(uint8_t(c)) || c == '.') {
      const char* begin = text.c_str() + pos;
      char* end = nullptr;
      double v = std::strtod(begin, &end);
      if (end == begin) fail("bad numeric literal");
      pos += size_t(end - begin);
      return Polynomial::constant(u, v);
    }
    if (std::isalpha(uint8_t(c)) || c == '_') {
      size_t start = pos;
      while (pos < text.size() &&
             (std::isalnum(uint8_t(text[pos])) || text[pos] == '_'))
        ++pos;
      std::string name = text.substr(start, pos - start);
      if (!u->contains(name)) {
        pos = start;
        fail("unknown variable '" + name + "'");
      }
      return Polynomial::variable(u, name);
    }
    fail(std::string("unexpected character '") + c + "'");
  }
};

}  // namespace

Polynomial parse_poly(const std::string& text, UniversePtr u) {
  Parser p(text, std::move(u));
  Polynomial result = p.parse_expr();
  p.skip_ws();
  if (p.pos != text.size()) p.fail("trailing input");
  return result;
}

Polynomial lie_derivative(const Polynomial& psi,
                          const std::vector<Polynomial>& f) {
  const auto& u = psi.universe();
  if (int(f.size()) != u->n_states())
    throw PolyError("dynamics dimension does not match state count");
  Polynomial r = psi.partial(u->time_index());
  for (int i = 0; i < u->n_states(); ++i) r = r + psi.partial(i) * f[size_t(i)];
  return r;
}

}  // namespace reachsos
