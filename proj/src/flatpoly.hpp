// Internal term-list form of a Polynomial for tight evaluation loops. The
// map-based Polynomial::eval is fine for one-off checks; the integrator and
// the grid solver evaluate the same few polynomials millions of times.
#pragma once

#include <utility>
#include <vector>

#include "reachsos/poly.hpp"

namespace reachsos {
namespace detail {

struct FlatPoly {
  struct Term {
    double c;
    std::vector<std::pair<int, int>> pw;  // (variable index, exponent)
  };
  std::vector<Term> terms;

  static FlatPoly from(const Polynomial& p) {
    FlatPoly f;
    for (const auto& [e, c] : p.terms()) {
      Term t;
      t.c = c;
      for (int v = 0; v < int(e.size()); ++v)
        if (e[v] > 0) t.pw.push_back({v, e[v]});
      f.terms.push_back(std::move(t));
    }
    return f;
  }

  double eval(const std::vector<double>& v) const {
    double s = 0.0;
    for (const Term& t : terms) {
      double m = t.c;
      for (const auto& [var, e] : t.pw) {
        double b = v[size_t(var)];
        for (int k = 0; k < e; ++k) m *= b;
      }
      s += m;
    }
    return s;
  }
};

}  // namespace detail
}  // namespace reachsos
