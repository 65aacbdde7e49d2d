#pragma once

#include <map>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace reachsos {

struct PolyError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shared, ordered variable set for one problem: states, then the time
// variable, then disturbances. The ordering fixes the exponent-vector layout
// of every Polynomial built over it.
class VarUniverse {
 public:
  VarUniverse(std::vector<std::string> states, std::string time_var,
              std::vector<std::string> disturbances);

  int size() const { return int(names_.size()); }
  int n_states() const { return n_states_; }
  int n_disturbances() const { return size() - n_states_ - 1; }
  int time_index() const { return n_states_; }

  const std::string& name(int i) const { return names_.at(size_t(i)); }
  const std::vector<std::string>& names() const { return names_; }
  // Throws PolyError for unknown names.
  int index(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::vector<int> state_indices() const;
  std::vector<int> disturbance_indices() const;

  bool operator==(const VarUniverse& o) const {
    return names_ == o.names_ && n_states_ == o.n_states_;
  }

 private:
  std::vector<std::string> names_;
  int n_states_;
};

using UniversePtr = std::shared_ptr<const VarUniverse>;

// Exponent vector, one slot per universe variable.
using ExpVec = std::vector<int>;

inline int total_degree(const ExpVec& e) {
  return std::accumulate(e.begin(), e.end(), 0);
}

// Graded lexicographic order: lower total degree first; within a degree the
// variable earliest in the universe dominates (so over {x,y} the degree-2
// class reads x^2, x*y, y^2).
struct GrlexLess {
  bool operator()(const ExpVec& a, const ExpVec& b) const {
    int da = total_degree(a), db = total_degree(b);
    if (da != db) return da < db;
    return std::lexicographical_compare(b.begin(), b.end(), a.begin(), a.end());
  }
};

// Sparse multivariate polynomial with double coefficients. Immutable in
// spirit: all operations return new values, so instances are safe to share
// across threads. Terms with coefficient exactly zero are never stored; the
// zero polynomial is the empty term map.
class Polynomial {
 public:
  using TermMap = std::map<ExpVec, double, GrlexLess>;

  explicit Polynomial(UniversePtr u) : universe_(std::move(u)) {
    if (!universe_) throw PolyError("polynomial needs a universe");
  }

  static Polynomial constant(UniversePtr u, double c);
  static Polynomial variable(UniversePtr u, const std::string& name);
  static Polynomial monomial(UniversePtr u, ExpVec exps, double coef);

  const UniversePtr& universe() const { return universe_; }
  const TermMap& terms() const { return terms_; }

  bool is_zero() const { return terms_.empty(); }
  // Max total degree; -1 flags the zero polynomial.
  int degree() const;
  // Max total degree counting only the given variable slots.
  int degree_in(const std::vector<int>& var_indices) const;
  bool uses_only(const std::vector<int>& var_indices) const;

  double coefficient(const ExpVec& e) const;
  double max_abs_coefficient() const;

  Polynomial operator+(const Polynomial& o) const;
  Polynomial operator-(const Polynomial& o) const;
  Polynomial operator*(const Polynomial& o) const;
  Polynomial operator-() const;
  Polynomial scaled(double c) const;
  Polynomial pow(int e) const;

  Polynomial partial(int var_index) const;
  Polynomial partial(const std::string& var) const;

  // Substitutes `replacement` for the given variable (works for both
  // constants and full polynomials; used by frame scaling, t=T restriction
  // and slice plots).
  Polynomial substitute(int var_index, const Polynomial& replacement) const;

  // Full-point evaluation; `point` has one entry per universe variable.
  double eval(const std::vector<double>& point) const;
  // Named-assignment evaluation; throws if a variable appearing in the
  // polynomial has no assignment.
  double eval(const std::map<std::string, double>& assignment) const;

  // Canonical form: graded-lex term order, coefficients at 17 significant
  // digits, e.g. "-0.64 + 1*x^2 + 1*y^2". Parses back to an equal value.
  std::string str() const;

  bool same_universe(const Polynomial& o) const {
    return universe_ == o.universe_ || *universe_ == *o.universe_;
  }

 private:
  void add_term(const ExpVec& e, double c);
  UniversePtr universe_;
  TermMap terms_;
};

// Parses an arithmetic expression (+, -, *, ^ with non-negative integer
// exponents, parentheses, decimal/scientific literals) over the universe's
// variable names. Errors carry the byte position in the input.
Polynomial parse_poly(const std::string& text, UniversePtr u);

// d(psi)/dt + sum_i d(psi)/dx_i * f_i; `f` has one entry per state variable.
Polynomial lie_derivative(const Polynomial& psi, const std::vector<Polynomial>& f);

}  // namespace reachsos
