#pragma once

#include <map>

#include "reachsos/model.hpp"
#include "reachsos/poly.hpp"

namespace reachsos {

// Lebesgue moments of monomials over a ball, used to make the objective
// integral of psi(x,0) linear in its coefficients.
//
// For all-even alpha:
//   int_{|x|<=r} x^alpha dx = r^(|alpha|+n) * prod_i Gamma((alpha_i+1)/2)
//                             / Gamma((|alpha|+n)/2 + 1)
// and 0 whenever any exponent is odd. Evaluated through lgamma so the n=7,
// |alpha|=8 cases cannot overflow on the way.
double ball_moment(const std::vector<int>& alpha, double radius, int n);

struct MomentVector {
  // Key: exponent vector over the state variables only (length n).
  std::map<std::vector<int>, double> entries;
  double radius = 0.0;
  int dimension = 0;
};

// Moments of every state monomial of degree <= k.
//
// scaled_frame=false: plain moments over B(0, sqrt(ball_R)) in original
// units. scaled_frame=true: the objective coefficients for the compiler's
// rescaled basis — unit-ball moments times the Jacobian factor R^(n/2), so
// that the SDP objective still equals int_{B} psi(x,0) dx in original units.
MomentVector objective_vector(int k, const ReachSpec& spec,
                              bool scaled_frame = false);

}  // namespace reachsos
